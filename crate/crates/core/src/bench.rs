//! Monte Carlo benchmark: `l` training sets, `m` fits per training set and
//! `n` releases per fit, repeated over a grid of training sizes and privacy
//! levels.
//!
//! Every random stream is keyed by cell indices through [`seed_for`], so
//! results do not depend on scheduling or worker count.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::accountant::PrivacyBudget;
use crate::dgp;
use crate::error::{Error, Result};
use crate::inference::{combine, combined_interval, Estimate};
use crate::metrics::{
    marginal_report, ols_fit, pmse_ratio, prediction_rmse, specific_generalisation_scores, specific_training_scores,
    structural_zero_rate, AnalysisModel, CartConfig, RegressionFit,
};
use crate::rng;
use crate::synth::{self, enforce_structural_zeros, SynthesizerKind, SynthesizerSpec};
use crate::tabular::{validate, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchPlan {
    pub scenario: u32,
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub n_train: Vec<usize>,
    pub epsilon: Vec<f64>,
    /// Master seed. Required before running.
    pub seed: Option<u64>,
    pub wasserstein_null: usize,
    pub pmse_null: usize,
    pub coverage_level: f64,
    pub max_failure_fraction: f64,
    /// Worker threads for cells; `0` lets the pool decide. Accepted on
    /// input but never written out, so outputs do not depend on it.
    #[serde(skip_serializing)]
    pub workers: usize,
    pub cart: CartConfig,
    pub synthesizer: SynthesizerKind,
}

impl Default for BenchPlan {
    /// The desk-scale profile.
    fn default() -> Self {
        Self {
            scenario: 1,
            l: 3,
            m: 3,
            n: 3,
            n_train: vec![2000],
            epsilon: vec![1.0],
            seed: None,
            wasserstein_null: 10_000,
            pmse_null: 50,
            coverage_level: 0.9,
            max_failure_fraction: 0.1,
            workers: 0,
            cart: CartConfig::default(),
            synthesizer: SynthesizerKind::DpGan(Default::default()),
        }
    }
}

impl BenchPlan {
    pub fn desk() -> Self {
        Self::default()
    }

    /// 10 x 10 x 10 over the full disciplines grid.
    pub fn paper() -> Self {
        Self {
            l: 10,
            m: 10,
            n: 10,
            n_train: vec![500, 10_000, 100_000],
            epsilon: vec![0.1, 1.0, 5.0],
            pmse_null: 100,
            ..Self::default()
        }
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| Error::config(path, &e))?;
        plan.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.scenario != 1 {
            return bad(format!("scenario {} is not implemented", self.scenario));
        }
        if self.l == 0 || self.m == 0 || self.n == 0 {
            return bad("l, m and n must be at least 1".into());
        }
        if self.n_train.is_empty() || self.epsilon.is_empty() {
            return bad("n_train and epsilon lists must be non-empty".into());
        }
        if self.n_train.iter().any(|&n| n < 2 * self.cart.min_leaf.max(1)) {
            return bad("every n_train must allow a CART split".into());
        }
        if self.epsilon.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return bad("epsilon values must be positive".into());
        }
        if self.wasserstein_null == 0 || self.pmse_null == 0 {
            return bad("null iteration counts must be positive".into());
        }
        if !(self.coverage_level > 0.0 && self.coverage_level < 1.0) {
            return bad("coverage level must lie in (0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return bad("max failure fraction must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn total_datasets(&self) -> usize {
        self.l * self.m * self.n
    }
}

/// Independent random streams within a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    TrainData = 1,
    TestData = 2,
    Fit = 3,
    Sample = 4,
    TrainWasserstein = 5,
    TestWasserstein = 6,
    TrainPmse = 7,
    TestPmse = 8,
}

pub fn seed_for(master: u64, l: usize, m: usize, n: usize, tag: Stream) -> u64 {
    rng::derive(master, &[tag as u64, l as u64, m as u64, n as u64])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discipline {
    pub n_train: usize,
    pub epsilon: f64,
    pub delta: f64,
}

impl Discipline {
    /// Keyed by the discipline's own values, so growing the grid leaves
    /// existing entries' streams alone.
    pub fn master_seed(&self, master: u64) -> u64 {
        rng::derive(master, &[self.n_train as u64, self.epsilon.to_bits()])
    }
}

pub fn disciplines_grid(plan: &BenchPlan) -> Vec<Discipline> {
    plan.n_train
        .iter()
        .flat_map(|&n| {
            plan.epsilon.iter().map(move |&e| Discipline {
                n_train: n,
                epsilon: e,
                delta: 1.0 / (2.0 * n as f64),
            })
        })
        .collect()
}

/// Table 3 order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NineScores {
    pub training_wasserstein: f64,
    pub training_pmse: f64,
    pub generalisation_wasserstein: f64,
    pub generalisation_pmse: f64,
    pub generalisation_coverage: f64,
    pub generalisation_bias_pct: f64,
    pub generalisation_rmse: f64,
    pub training_covariance_ratio: f64,
    pub training_bias_pct: f64,
}

impl NineScores {
    pub const LABELS: [&'static str; 9] = [
        "Training Wasserstein distance ratio",
        "Training pMSE ratio",
        "Generalisation Wasserstein distance ratio",
        "Generalisation pMSE ratio",
        "Generalisation Coverage Rate",
        "Generalisation Coef. Bias (%)",
        "Generalisation Prediction RMSE",
        "Training Covariance Ratio",
        "Training Coef. Bias (%)",
    ];

    pub const KEYS: [&'static str; 9] = [
        "training_wasserstein",
        "training_pmse",
        "generalisation_wasserstein",
        "generalisation_pmse",
        "generalisation_coverage",
        "generalisation_bias_pct",
        "generalisation_rmse",
        "training_covariance_ratio",
        "training_bias_pct",
    ];

    pub fn values(&self) -> [f64; 9] {
        [
            self.training_wasserstein,
            self.training_pmse,
            self.generalisation_wasserstein,
            self.generalisation_pmse,
            self.generalisation_coverage,
            self.generalisation_bias_pct,
            self.generalisation_rmse,
            self.training_covariance_ratio,
            self.training_bias_pct,
        ]
    }

    pub fn from_values(v: [f64; 9]) -> Self {
        Self {
            training_wasserstein: v[0],
            training_pmse: v[1],
            generalisation_wasserstein: v[2],
            generalisation_pmse: v[3],
            generalisation_coverage: v[4],
            generalisation_bias_pct: v[5],
            generalisation_rmse: v[6],
            training_covariance_ratio: v[7],
            training_bias_pct: v[8],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.values();
        if let Some(i) = v.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidArgument(format!("{} is {}", Self::KEYS[i], v[i])));
        }
        if self.generalisation_coverage > 1.0 {
            return Err(Error::InvalidArgument("coverage exceeds 1".into()));
        }
        Ok(())
    }
}

/// Everything measured on one released dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub scores: NineScores,
    pub training_wasserstein_columns: Vec<(String, f64)>,
    pub generalisation_wasserstein_columns: Vec<(String, f64)>,
    pub ci_width: f64,
    pub bias_excluded: usize,
    pub raw_structural_zero_rate: f64,
    pub released_violations: usize,
    pub realized_epsilon: Option<f64>,
    pub noise_multiplier: Option<f64>,
    #[serde(skip)]
    estimate: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RubinDiagnostic {
    /// Releases per fit that were combined.
    pub releases: usize,
    pub fits: usize,
    pub coverage_total: f64,
    pub coverage_uncongenial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mean_ci_width: f64,
    pub mean_raw_structural_zero_rate: f64,
    pub released_violations: usize,
    pub bias_excluded: usize,
    pub realized_epsilon_min: Option<f64>,
    pub realized_epsilon_max: Option<f64>,
    pub noise_multiplier: Option<f64>,
    pub rubin: Option<RubinDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisciplineSummary {
    pub discipline: Discipline,
    pub synthesizer: String,
    pub cells: usize,
    pub failed: usize,
    pub failures: Vec<CellFailure>,
    /// Flat mean over successful cells.
    pub scores: NineScores,
    /// Mean over training sets of means over fits of means over releases.
    pub hierarchical: NineScores,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresFile {
    pub format_version: u32,
    pub master_seed: u64,
    pub plan: BenchPlan,
    pub disciplines: Vec<DisciplineSummary>,
}

impl ScoresFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct DisciplineRun {
    pub summary: DisciplineSummary,
    pub cells: Vec<CellMetrics>,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub master_seed: u64,
    pub plan: BenchPlan,
    pub runs: Vec<DisciplineRun>,
    /// Per-fit timing lines, not part of the reproducible outputs.
    pub log: Vec<String>,
}

struct TrainingSet {
    train: Dataset,
    test: Dataset,
    fit: RegressionFit,
}

struct Context<'a> {
    plan: &'a BenchPlan,
    discipline: Discipline,
    master: u64,
    sets: Vec<TrainingSet>,
    model: AnalysisModel,
    truth: Vec<f64>,
}

type JobResult = (Vec<std::result::Result<CellMetrics, CellFailure>>, String);

fn run_fit(ctx: &Context<'_>, l: usize, m: usize) -> JobResult {
    let plan = ctx.plan;
    let d = ctx.discipline;
    let set = &ctx.sets[l];
    let fail_all = |message: String| {
        (0..plan.n)
            .map(|n| {
                Err(CellFailure {
                    l,
                    m,
                    n,
                    message: message.clone(),
                })
            })
            .collect()
    };
    let started = Instant::now();
    let spec = SynthesizerSpec {
        kind: plan.synthesizer.clone(),
        budget: PrivacyBudget {
            epsilon: d.epsilon,
            delta: d.delta,
        },
        seed: seed_for(ctx.master, l, m, 0, Stream::Fit),
    };
    let model = match synth::fit(&spec, &set.train) {
        Ok(model) => model,
        Err(e) => {
            let msg = format!("fit failed: {e}");
            let line = format!(
                "n_train={} epsilon={} l={l} m={m} {msg}",
                d.n_train, d.epsilon
            );
            return (fail_all(msg), line);
        }
    };
    let fit_secs = started.elapsed().as_secs_f64();
    let realized = model.realized_budget().map(|b| b.epsilon);
    let sigma = model.training_meta().map(|t| t.noise_multiplier);
    let cells = (0..plan.n)
        .map(|n| {
            score_release(ctx, &model, l, m, n, realized, sigma).map_err(|e| CellFailure {
                l,
                m,
                n,
                message: e.to_string(),
            })
        })
        .collect();
    let line = format!(
        "n_train={} epsilon={} l={l} m={m} synthesizer={} fit_seconds={fit_secs:.2} total_seconds={:.2} realized_epsilon={} sigma={}",
        d.n_train,
        d.epsilon,
        model.kind_name(),
        started.elapsed().as_secs_f64(),
        realized.map_or("-".into(), |e| format!("{e:.4}")),
        sigma.map_or("-".into(), |s| format!("{s:.4}")),
    );
    (cells, line)
}

fn score_release(
    ctx: &Context<'_>,
    model: &synth::SynthesizerModel,
    l: usize,
    m: usize,
    n: usize,
    realized: Option<f64>,
    sigma: Option<f64>,
) -> Result<CellMetrics> {
    let plan = ctx.plan;
    let set = &ctx.sets[l];
    let raw = synth::sample_raw(model, ctx.discipline.n_train, seed_for(ctx.master, l, m, n, Stream::Sample))?;
    let raw_rate = structural_zero_rate(&raw);
    let release = enforce_structural_zeros(&raw, raw.schema().zero_rules());
    let violations = validate(&release).len();

    let tw = marginal_report(
        &set.train,
        &release,
        plan.wasserstein_null,
        seed_for(ctx.master, l, m, n, Stream::TrainWasserstein),
    )?;
    let gw = marginal_report(
        &set.test,
        &release,
        plan.wasserstein_null,
        seed_for(ctx.master, l, m, n, Stream::TestWasserstein),
    )?;
    let tp = pmse_ratio(
        &set.train,
        &release,
        &plan.cart,
        plan.pmse_null,
        seed_for(ctx.master, l, m, n, Stream::TrainPmse),
    )?;
    let gp = pmse_ratio(
        &set.test,
        &release,
        &plan.cart,
        plan.pmse_null,
        seed_for(ctx.master, l, m, n, Stream::TestPmse),
    )?;
    let fit = ols_fit(&release, &ctx.model)?;
    let ts = specific_training_scores(&fit, &set.fit)?;
    let gs = specific_generalisation_scores(std::slice::from_ref(&fit), &ctx.truth, plan.coverage_level)?;
    let rmse = prediction_rmse(&fit, &set.test)?;
    let columns = |r: &crate::metrics::WassersteinReport| {
        r.columns
            .iter()
            .map(|c| (c.column.clone(), c.score.ratio))
            .collect::<Vec<_>>()
    };
    Ok(CellMetrics {
        l,
        m,
        n,
        scores: NineScores {
            training_wasserstein: tw.mean_ratio,
            training_pmse: tp.ratio.expect("ratio requested"),
            generalisation_wasserstein: gw.mean_ratio,
            generalisation_pmse: gp.ratio.expect("ratio requested"),
            generalisation_coverage: gs.coverage,
            generalisation_bias_pct: gs.bias_pct,
            generalisation_rmse: rmse,
            training_covariance_ratio: ts.variance_ratio,
            training_bias_pct: ts.bias_pct,
        },
        training_wasserstein_columns: columns(&tw),
        generalisation_wasserstein_columns: columns(&gw),
        ci_width: gs.mean_width,
        bias_excluded: gs.excluded + ts.excluded,
        raw_structural_zero_rate: raw_rate,
        released_violations: violations,
        realized_epsilon: realized,
        noise_multiplier: sigma,
        estimate: Some(Estimate::from(&fit)),
    })
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut k) = (0.0, 0usize);
    for x in v {
        s += x;
        k += 1;
    }
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

fn mean_scores<'a>(cells: impl Iterator<Item = &'a NineScores> + Clone) -> NineScores {
    let mut out = [0.0; 9];
    for (j, o) in out.iter_mut().enumerate() {
        *o = mean(cells.clone().map(|s| s.values()[j]));
    }
    NineScores::from_values(out)
}

fn hierarchical_scores(cells: &[CellMetrics], plan: &BenchPlan) -> NineScores {
    let per_l: Vec<NineScores> = (0..plan.l)
        .filter_map(|l| {
            let per_m: Vec<NineScores> = (0..plan.m)
                .filter_map(|m| {
                    let group: Vec<&NineScores> = cells.iter().filter(|c| c.l == l && c.m == m).map(|c| &c.scores).collect();
                    (!group.is_empty()).then(|| mean_scores(group.iter().copied()))
                })
                .collect();
            (!per_m.is_empty()).then(|| mean_scores(per_m.iter()))
        })
        .collect();
    mean_scores(per_l.iter())
}

fn rubin_diagnostic(cells: &[CellMetrics], plan: &BenchPlan, truth: &[f64]) -> Result<Option<RubinDiagnostic>> {
    if plan.n < 2 {
        return Ok(None);
    }
    let (mut total, mut unc, mut pairs, mut fits) = (0usize, 0usize, 0usize, 0usize);
    for l in 0..plan.l {
        for m in 0..plan.m {
            let est: Vec<Estimate> = cells
                .iter()
                .filter(|c| c.l == l && c.m == m)
                .filter_map(|c| c.estimate.clone())
                .collect();
            if est.len() < 2 {
                continue;
            }
            let ce = combine(&est)?;
            let (a, b) = combined_interval(&ce, plan.coverage_level)?;
            for ((ia, ib), &t) in a.iter().zip(&b).zip(truth) {
                total += usize::from(ia.contains(t));
                unc += usize::from(ib.contains(t));
                pairs += 1;
            }
            fits += 1;
        }
    }
    Ok((fits > 0).then(|| RubinDiagnostic {
        releases: plan.n,
        fits,
        coverage_total: total as f64 / pairs as f64,
        coverage_uncongenial: unc as f64 / pairs as f64,
    }))
}

fn run_jobs(ctx: &Context<'_>) -> Result<Vec<JobResult>> {
    let jobs: Vec<(usize, usize)> = (0..ctx.plan.l).flat_map(|l| (0..ctx.plan.m).map(move |m| (l, m))).collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(ctx.plan.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(pool.install(|| jobs.par_iter().map(|&(l, m)| run_fit(ctx, l, m)).collect()))
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(jobs.iter().map(|&(l, m)| run_fit(ctx, l, m)).collect())
    }
}

fn run_discipline(plan: &BenchPlan, master: u64, d: Discipline, log: &mut Vec<String>) -> Result<DisciplineRun> {
    let dm = d.master_seed(master);
    let model = AnalysisModel::scenario1(&dgp::scenario1_schema())?;
    let sets = (0..plan.l)
        .map(|l| {
            let train = dgp::generate_scenario1(d.n_train, seed_for(dm, l, 0, 0, Stream::TrainData));
            let test = dgp::generate_scenario1(d.n_train, seed_for(dm, l, 0, 0, Stream::TestData));
            let fit = ols_fit(&train, &model)?;
            Ok(TrainingSet { train, test, fit })
        })
        .collect::<Result<Vec<_>>>()?;
    let ctx = Context {
        plan,
        discipline: d,
        master: dm,
        sets,
        model,
        truth: dgp::true_params().coefficients,
    };
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for (results, line) in run_jobs(&ctx)? {
        log.push(line);
        for r in results {
            match r {
                Ok(c) => cells.push(c),
                Err(f) => failures.push(f),
            }
        }
    }
    let total = plan.total_datasets();
    if failures.len() as f64 > plan.max_failure_fraction * total as f64 || cells.is_empty() {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total,
            first: failures
                .first()
                .map_or_else(|| "none".into(), |f| format!("cell ({}, {}, {}): {}", f.l, f.m, f.n, f.message)),
        });
    }
    let eps: Vec<f64> = cells.iter().filter_map(|c| c.realized_epsilon).collect();
    let diagnostics = Diagnostics {
        mean_ci_width: mean(cells.iter().map(|c| c.ci_width)),
        mean_raw_structural_zero_rate: mean(cells.iter().map(|c| c.raw_structural_zero_rate)),
        released_violations: cells.iter().map(|c| c.released_violations).sum(),
        bias_excluded: cells.iter().map(|c| c.bias_excluded).sum(),
        realized_epsilon_min: eps.iter().copied().reduce(f64::min),
        realized_epsilon_max: eps.iter().copied().reduce(f64::max),
        noise_multiplier: cells.iter().find_map(|c| c.noise_multiplier),
        rubin: rubin_diagnostic(&cells, plan, &ctx.truth)?,
    };
    let summary = DisciplineSummary {
        discipline: d,
        synthesizer: plan.synthesizer.name().to_string(),
        cells: total,
        failed: failures.len(),
        failures,
        scores: mean_scores(cells.iter().map(|c| &c.scores)),
        hierarchical: hierarchical_scores(&cells, plan),
        diagnostics,
    };
    Ok(DisciplineRun { summary, cells })
}

pub fn run_plan(plan: &BenchPlan) -> Result<BenchOutcome> {
    plan.validate()?;
    let master = plan
        .seed
        .ok_or_else(|| Error::InvalidArgument("a master seed is required".into()))?;
    let mut log = Vec::new();
    let runs = disciplines_grid(plan)
        .into_iter()
        .map(|d| run_discipline(plan, master, d, &mut log))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchOutcome {
        master_seed: master,
        plan: plan.clone(),
        runs,
        log,
    })
}

impl BenchOutcome {
    pub fn scores_file(&self) -> ScoresFile {
        ScoresFile {
            format_version: 1,
            master_seed: self.master_seed,
            plan: self.plan.clone(),
            disciplines: self.runs.iter().map(|r| r.summary.clone()).collect(),
        }
    }

    pub fn scores_json(&self) -> String {
        serde_json::to_string_pretty(&self.scores_file()).expect("scores serialize") + "\n"
    }

    /// One row per released dataset per metric.
    pub fn cells_csv(&self) -> String {
        let mut out = String::from("n_train,epsilon,delta,l,m,n,metric,value\n");
        for run in &self.runs {
            let d = run.summary.discipline;
            for c in &run.cells {
                let mut row = |metric: &str, value: f64| {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        d.n_train, d.epsilon, d.delta, c.l, c.m, c.n, metric, value
                    ));
                };
                for (k, v) in NineScores::KEYS.iter().zip(c.scores.values()) {
                    row(k, v);
                }
                for (col, v) in &c.training_wasserstein_columns {
                    row(&format!("training_wasserstein:{col}"), *v);
                }
                for (col, v) in &c.generalisation_wasserstein_columns {
                    row(&format!("generalisation_wasserstein:{col}"), *v);
                }
                row("ci_width", c.ci_width);
                row("raw_structural_zero_rate", c.raw_structural_zero_rate);
                row("released_violations", c.released_violations as f64);
                if let Some(e) = c.realized_epsilon {
                    row("realized_epsilon", e);
                }
                if let Some(s) = c.noise_multiplier {
                    row("noise_multiplier", s);
                }
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        put("cells.csv", self.cells_csv())?;
        put("scores.json", self.scores_json())?;
        put("bench.log", self.log.join("\n") + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn grid_defaults() {
        let g = disciplines_grid(&BenchPlan::paper());
        assert_eq!(g.len(), 9);
        let d = g.iter().find(|d| d.n_train == 10_000).unwrap();
        assert_eq!(d.delta, 5e-5);
        assert_eq!(disciplines_grid(&BenchPlan::desk()).len(), 1);
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seen = HashSet::new();
        for l in 0..10 {
            for m in 0..10 {
                for n in 0..10 {
                    for t in [Stream::TrainData, Stream::Fit, Stream::Sample, Stream::TestPmse] {
                        assert!(seen.insert(seed_for(7, l, m, n, t)));
                    }
                }
            }
        }
        assert_eq!(seed_for(7, 1, 2, 3, Stream::Fit), seed_for(7, 1, 2, 3, Stream::Fit));
    }

    #[test]
    fn plan_text_round_trip() {
        let p = BenchPlan::paper();
        let back = BenchPlan::from_text(&p.to_text(), Path::new("p.toml")).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn plan_errors_name_the_key() {
        let e = BenchPlan::from_text("l = 2\nbogus = 1\n", Path::new("x.toml")).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 2"), "{msg}");
        let e = BenchPlan::from_text("l = \"three\"\n", Path::new("x.toml")).unwrap_err();
        assert!(e.to_string().contains("line 1"), "{e}");
    }

    #[test]
    fn synthesizer_block_parses() {
        let p = BenchPlan::from_text(
            "n_train = [500]\n[synthesizer]\nkind = \"DpGan\"\nsteps = 10\n",
            Path::new("x.toml"),
        )
        .unwrap();
        match p.synthesizer {
            SynthesizerKind::DpGan(g) => {
                assert_eq!(g.steps, 10);
                assert_eq!(g.batch_size, 100);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn missing_seed_is_an_error() {
        assert!(run_plan(&BenchPlan::desk()).is_err());
    }

    #[test]
    fn small_resampler_run() {
        let plan = BenchPlan {
            l: 1,
            m: 1,
            n: 2,
            n_train: vec![200],
            wasserstein_null: 50,
            pmse_null: 5,
            seed: Some(3),
            synthesizer: SynthesizerKind::Resampler,
            ..BenchPlan::desk()
        };
        let out = run_plan(&plan).unwrap();
        let s = &out.runs[0].summary;
        assert_eq!(s.failed, 0);
        s.scores.validate().unwrap();
        assert!(s.diagnostics.rubin.is_some());
        assert_eq!(out.cells_csv(), run_plan(&plan).unwrap().cells_csv());
        let lines = out.cells_csv().lines().count();
        assert_eq!(lines, 1 + 2 * (9 + 9 + 9 + 3));
    }
}
