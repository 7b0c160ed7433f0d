use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use synthbench::accountant::{self, PrivacyBudget};
use synthbench::bench::{run_plan, BenchPlan, ScoresFile};
use synthbench::dgp;
use synthbench::metrics::{
    marginal_report, ols_fit, pmse_ratio, prediction_rmse, specific_generalisation_scores, specific_training_scores,
    AnalysisModel, CartConfig, PmseReport, WassersteinReport,
};
use synthbench::report::report_files;
use synthbench::synth::{self, GanConfig, MarginalConfig, SynthesizerKind, SynthesizerSpec};
use synthbench::tabular::{read_csv, validate, write_csv, Schema};
use synthbench::{Error, Result};

#[derive(Parser)]
#[command(name = "synthbench", version, about = "Benchmark differentially private tabular synthesizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Resampler,
    DpMarginal,
    DpGan,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from a scenario's generating process.
    Generate {
        #[arg(long, default_value_t = 1)]
        scenario: u32,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the schema as TOML.
        #[arg(long)]
        schema_out: Option<PathBuf>,
    },
    /// Fit a synthesizer to a CSV file and save the model.
    Fit {
        #[arg(long)]
        train: PathBuf,
        /// Schema file; defaults to the scenario 1 schema.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Kind::DpGan)]
        synthesizer: Kind,
        /// TOML table of synthesizer settings, as in a bench plan's `[synthesizer]` block.
        #[arg(long, conflicts_with = "synthesizer")]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        /// Defaults to 1 / (2 N).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Release a synthetic dataset from a saved model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a synthetic CSV against the real data it imitates.
    Evaluate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synth: PathBuf,
        /// Held-out sample for the generalisation scores.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        wasserstein_null: usize,
        #[arg(long, default_value_t = 100)]
        pmse_null: usize,
        #[arg(long, default_value_t = 0.9)]
        level: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark plan.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        profile: Option<Profile>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        n_train: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        epsilon: Option<Vec<f64>>,
    },
    /// Render the radar chart and score table from a scores.json file.
    Report {
        #[arg(long)]
        scores: PathBuf,
        /// Scores file whose first discipline anchors the chart; defaults to each run itself.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print epsilon for combinations of sampling rate, noise and steps.
    Accountant {
        #[arg(long, value_delimiter = ',', default_value = "0.01")]
        q: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.8,1,1.1,1.5,2,4")]
        sigma: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "2000")]
        steps: Vec<u64>,
        #[arg(long, default_value_t = 5e-5)]
        delta: f64,
        /// Instead of a table, find the noise multiplier reaching this epsilon.
        #[arg(long)]
        calibrate: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_schema(path: Option<&Path>) -> Result<Schema> {
    match path {
        Some(p) => Schema::load(p),
        None => Ok(dgp::scenario1_schema()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Evaluation {
    training_wasserstein: WassersteinReport,
    training_pmse: PmseReport,
    training_bias_pct: f64,
    training_covariance_ratio: f64,
    generalisation: Option<Generalisation>,
}

#[derive(Serialize)]
struct Generalisation {
    wasserstein: WassersteinReport,
    pmse: PmseReport,
    coverage: f64,
    bias_pct: f64,
    ci_width: f64,
    prediction_rmse: f64,
}

fn synthesizer_from_file(path: &Path) -> Result<SynthesizerKind> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::config(path, &e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            scenario,
            n,
            seed,
            out,
            schema_out,
        } => {
            if scenario != 1 {
                return Err(Error::InvalidArgument(format!("scenario {scenario} is not implemented")));
            }
            let d = dgp::generate_scenario1(n, seed);
            write_csv(&d, &out)?;
            if let Some(p) = schema_out {
                write_text(&p, &d.schema().to_text())?;
            }
        }
        Command::Fit {
            train,
            schema,
            synthesizer,
            config,
            epsilon,
            delta,
            steps,
            seed,
            out,
        } => {
            let schema = load_schema(schema.as_deref())?;
            let data = read_csv(&train, &schema)?;
            let mut kind = match config {
                Some(p) => synthesizer_from_file(&p)?,
                None => match synthesizer {
                    Kind::Resampler => SynthesizerKind::Resampler,
                    Kind::DpMarginal => SynthesizerKind::DpMarginal(MarginalConfig::default()),
                    Kind::DpGan => SynthesizerKind::DpGan(GanConfig::default()),
                },
            };
            if let (Some(s), SynthesizerKind::DpGan(g)) = (steps, &mut kind) {
                g.steps = s;
            }
            let budget = match delta {
                Some(d) => PrivacyBudget::new(epsilon, d)?,
                None => PrivacyBudget::for_training_size(epsilon, data.n_rows().max(1))?,
            };
            let model = synth::fit(&SynthesizerSpec { kind, budget, seed }, &data)?;
            synth::save_model(&model, &out)?;
            if let Some(b) = model.realized_budget() {
                eprintln!("realized epsilon {:.4} at delta {}", b.epsilon, b.delta);
            }
        }
        Command::Sample { model, n, seed, out } => {
            let model = synth::load_model(&model)?;
            let d = synth::sample(&model, n, seed)?;
            debug_assert!(validate(&d).is_empty());
            write_csv(&d, &out)?;
        }
        Command::Evaluate {
            real,
            synth,
            test,
            schema,
            seed,
            wasserstein_null,
            pmse_null,
            level,
            out,
        } => {
            let schema = load_schema(schema.as_deref())?;
            let real = read_csv(&real, &schema)?;
            let synth = read_csv(&synth, &schema)?;
            let cart = CartConfig::default();
            let model = AnalysisModel::scenario1(&schema)?;
            let fit_real = ols_fit(&real, &model)?;
            let fit_synth = ols_fit(&synth, &model)?;
            let ts = specific_training_scores(&fit_synth, &fit_real)?;
            let generalisation = match test {
                Some(p) => {
                    let test = read_csv(&p, &schema)?;
                    let gs = specific_generalisation_scores(
                        std::slice::from_ref(&fit_synth),
                        &dgp::true_params().coefficients,
                        level,
                    )?;
                    Some(Generalisation {
                        wasserstein: marginal_report(&test, &synth, wasserstein_null, seed.wrapping_add(2))?,
                        pmse: pmse_ratio(&test, &synth, &cart, pmse_null, seed.wrapping_add(3))?,
                        coverage: gs.coverage,
                        bias_pct: gs.bias_pct,
                        ci_width: gs.mean_width,
                        prediction_rmse: prediction_rmse(&fit_synth, &test)?,
                    })
                }
                None => None,
            };
            let eval = Evaluation {
                training_wasserstein: marginal_report(&real, &synth, wasserstein_null, seed)?,
                training_pmse: pmse_ratio(&real, &synth, &cart, pmse_null, seed.wrapping_add(1))?,
                training_bias_pct: ts.bias_pct,
                training_covariance_ratio: ts.variance_ratio,
                generalisation,
            };
            let text = serde_json::to_string_pretty(&eval)? + "\n";
            match out {
                Some(p) => write_text(&p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Bench {
            config,
            profile,
            seed,
            out,
            workers,
            l,
            m,
            n,
            n_train,
            epsilon,
        } => {
            let mut plan = match (config, profile) {
                (Some(p), _) => BenchPlan::load(&p)?,
                (None, Some(Profile::Paper)) => BenchPlan::paper(),
                (None, _) => BenchPlan::desk(),
            };
            plan.seed = Some(seed);
            plan.workers = workers.unwrap_or(plan.workers);
            plan.l = l.unwrap_or(plan.l);
            plan.m = m.unwrap_or(plan.m);
            plan.n = n.unwrap_or(plan.n);
            plan.n_train = n_train.unwrap_or(plan.n_train);
            plan.epsilon = epsilon.unwrap_or(plan.epsilon);
            let outcome = run_plan(&plan)?;
            outcome.write(&out)?;
            for line in &outcome.log {
                eprintln!("{line}");
            }
        }
        Command::Report { scores, baseline, out } => {
            let file = ScoresFile::load(&scores)?;
            let anchor = match baseline {
                Some(p) => Some(
                    ScoresFile::load(&p)?
                        .disciplines
                        .first()
                        .ok_or_else(|| Error::Empty("baseline scores file has no disciplines".into()))?
                        .scores,
                ),
                None => None,
            };
            for (name, text) in report_files(&file, anchor.as_ref())? {
                write_text(&out.join(name), &text)?;
            }
        }
        Command::Accountant {
            q,
            sigma,
            steps,
            delta,
            calibrate,
            out,
        } => {
            if let Some(eps) = calibrate {
                let target = PrivacyBudget::new(eps, delta)?;
                for &qq in &q {
                    for &t in &steps {
                        let s = accountant::calibrate_sigma(target, qq, t)?;
                        println!("q={qq} steps={t} delta={delta} epsilon={eps} sigma={s}");
                    }
                }
            } else {
                let table = accountant::epsilon_table(&q, &sigma, &steps, delta)?;
                match out {
                    Some(p) => write_text(&p, &table)?,
                    None => print!("{table}"),
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
