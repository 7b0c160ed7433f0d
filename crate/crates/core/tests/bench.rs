use synthbench::bench::{run_plan, BenchPlan, NineScores};
use synthbench::synth::{MarginalConfig, SynthesizerKind};

fn plan(kind: SynthesizerKind, workers: usize) -> BenchPlan {
    BenchPlan {
        l: 2,
        m: 2,
        n: 2,
        n_train: vec![300],
        epsilon: vec![0.5, 2.0],
        seed: Some(31),
        wasserstein_null: 40,
        pmse_null: 4,
        workers,
        synthesizer: kind,
        ..BenchPlan::desk()
    }
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let kind = SynthesizerKind::DpMarginal(MarginalConfig::default());
    let a = run_plan(&plan(kind.clone(), 1)).unwrap();
    let b = run_plan(&plan(kind, 3)).unwrap();
    assert_eq!(a.cells_csv(), b.cells_csv());
    assert_eq!(a.scores_json(), b.scores_json());
}

#[test]
fn every_cell_is_recorded_and_valid() {
    let out = run_plan(&plan(SynthesizerKind::DpMarginal(MarginalConfig::default()), 0)).unwrap();
    assert_eq!(out.runs.len(), 2);
    for run in &out.runs {
        assert_eq!(run.cells.len(), 8);
        assert_eq!(run.summary.failed, 0);
        run.summary.scores.validate().unwrap();
        assert_eq!(run.summary.diagnostics.released_violations, 0);
        let eps = run.summary.discipline.epsilon;
        assert!(run.cells.iter().all(|c| c.realized_epsilon.is_some_and(|e| e <= eps + 1e-12)));
    }
    // Rows: 9 scores, 9 + 9 per-column ratios, 3 diagnostics, realized epsilon.
    let per_cell = 9 + 18 + 3 + 1;
    assert_eq!(out.cells_csv().lines().count(), 1 + 16 * per_cell);
}

#[test]
fn flat_and_hierarchical_means_agree_on_balanced_plans() {
    let out = run_plan(&plan(SynthesizerKind::Resampler, 0)).unwrap();
    for run in &out.runs {
        for (a, b) in run.summary.scores.values().iter().zip(run.summary.hierarchical.values()) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }
    assert_eq!(NineScores::KEYS.len(), 9);
}

#[test]
fn different_master_seeds_differ() {
    let a = run_plan(&plan(SynthesizerKind::Resampler, 0)).unwrap();
    let mut p = plan(SynthesizerKind::Resampler, 0);
    p.seed = Some(32);
    let b = run_plan(&p).unwrap();
    assert_ne!(a.cells_csv(), b.cells_csv());
}
