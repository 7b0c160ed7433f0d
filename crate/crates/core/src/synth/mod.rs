//! Synthesizers behind one fit/sample contract.
//!
//! * [`SynthesizerKind::Resampler`]: non-private bootstrap of the training
//!   table, used to calibrate the metrics.
//! * [`SynthesizerKind::DpMarginal`]: Laplace-noised one-way histograms,
//!   with columns tied by structural-zero rules modeled jointly.
//! * [`SynthesizerKind::DpGan`]: generator/discriminator pair whose
//!   discriminator is trained with clipped, noised gradients.
//!
//! Sampling from a DP model only touches the released model state, never
//! the training table, so repeated sampling costs no privacy budget.

mod gan;
mod marginal;

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use gan::{GanConfig, GanModel, TrainingMeta};
pub use marginal::{laplace, MarginalConfig, MarginalModel};

use crate::accountant::PrivacyBudget;
use crate::error::{Error, Result};
use crate::rng;
use crate::tabular::{validate, ColumnData, Dataset, StructuralZeroRule, ViolationKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SynthesizerKind {
    Resampler,
    DpMarginal(MarginalConfig),
    DpGan(GanConfig),
}

impl SynthesizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SynthesizerKind::Resampler => "resampler",
            SynthesizerKind::DpMarginal(_) => "dp-marginal",
            SynthesizerKind::DpGan(_) => "dp-gan",
        }
    }

    pub fn is_private(&self) -> bool {
        !matches!(self, SynthesizerKind::Resampler)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizerSpec {
    #[serde(flatten)]
    pub kind: SynthesizerKind,
    /// Ignored by the resampler.
    pub budget: PrivacyBudget,
    pub seed: u64,
}

impl SynthesizerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind.is_private() && !(self.budget.epsilon > 0.0 && self.budget.delta > 0.0 && self.budget.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "{} needs epsilon > 0 and delta in (0, 1), got {:?}",
                self.kind.name(),
                self.budget
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SynthesizerModel {
    Resampler { train: Dataset },
    DpMarginal(MarginalModel),
    DpGan(GanModel),
}

impl SynthesizerModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SynthesizerModel::Resampler { .. } => "resampler",
            SynthesizerModel::DpMarginal(_) => "dp-marginal",
            SynthesizerModel::DpGan(_) => "dp-gan",
        }
    }

    /// Budget actually spent, `None` for the non-private resampler.
    pub fn realized_budget(&self) -> Option<PrivacyBudget> {
        match self {
            SynthesizerModel::Resampler { .. } => None,
            SynthesizerModel::DpMarginal(m) => Some(m.budget),
            SynthesizerModel::DpGan(m) => Some(m.meta.realized),
        }
    }

    pub fn training_meta(&self) -> Option<&TrainingMeta> {
        match self {
            SynthesizerModel::DpGan(m) => Some(&m.meta),
            _ => None,
        }
    }

    pub fn schema(&self) -> &crate::tabular::Schema {
        match self {
            SynthesizerModel::Resampler { train } => train.schema(),
            SynthesizerModel::DpMarginal(m) => m.schema(),
            SynthesizerModel::DpGan(m) => m.schema(),
        }
    }
}

pub fn fit(spec: &SynthesizerSpec, train: &Dataset) -> Result<SynthesizerModel> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training data has no rows".into()));
    }
    let problems = validate(train);
    if let Some(v) = problems.first() {
        return Err(Error::InvalidArgument(format!(
            "training data is invalid: {} violations, first at row {} ({:?})",
            problems.len(),
            v.row,
            v.kind
        )));
    }
    match &spec.kind {
        SynthesizerKind::Resampler => Ok(SynthesizerModel::Resampler { train: train.clone() }),
        SynthesizerKind::DpMarginal(cfg) => Ok(SynthesizerModel::DpMarginal(MarginalModel::fit(
            cfg,
            spec.budget,
            train,
            spec.seed,
        )?)),
        SynthesizerKind::DpGan(cfg) => Ok(SynthesizerModel::DpGan(gan::fit(cfg, spec.budget, train, spec.seed)?)),
    }
}

/// Model output before structural zeros are enforced.
pub fn sample_raw(model: &SynthesizerModel, n: usize, seed: u64) -> Result<Dataset> {
    let mut r = rng::seeded(seed);
    match model {
        SynthesizerModel::Resampler { train } => {
            let idx: Vec<usize> = (0..n).map(|_| r.gen_range(0..train.n_rows())).collect();
            Ok(train.select_rows(&idx))
        }
        SynthesizerModel::DpMarginal(m) => m.sample(n, &mut r),
        SynthesizerModel::DpGan(m) => m.sample(n, &mut r),
    }
}

pub fn sample(model: &SynthesizerModel, n: usize, seed: u64) -> Result<Dataset> {
    let raw = sample_raw(model, n, seed)?;
    let rules = raw.schema().zero_rules().to_vec();
    Ok(enforce_structural_zeros(&raw, &rules))
}

/// Overwrites the forced column wherever a rule's guard fires. Other cells
/// are untouched; applying it twice is the same as once.
pub fn enforce_structural_zeros(d: &Dataset, rules: &[StructuralZeroRule]) -> Dataset {
    let (schema, mut columns) = d.clone().into_parts();
    for rule in rules {
        let guard = match &columns[rule.guard_column] {
            ColumnData::Level(g) => g.clone(),
            _ => continue,
        };
        if let ColumnData::Level(forced) = &mut columns[rule.forced_column] {
            for (f, g) in forced.iter_mut().zip(&guard) {
                if *g == rule.guard_level {
                    *f = rule.forced_level;
                }
            }
        }
    }
    Dataset::new(schema, columns).expect("shape is unchanged")
}

/// Number of structural-zero violations, for audits.
pub fn structural_zero_violations(d: &Dataset) -> usize {
    validate(d)
        .iter()
        .filter(|v| matches!(v.kind, ViolationKind::StructuralZero { .. }))
        .count()
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    model: SynthesizerModel,
}

pub fn save_model(model: &SynthesizerModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint {
        format_version: CHECKPOINT_VERSION,
        model: model.clone(),
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<SynthesizerModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cp: Checkpoint = serde_json::from_str(&text)?;
    if cp.format_version != CHECKPOINT_VERSION {
        return Err(Error::InvalidArgument(format!(
            "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
            cp.format_version
        )));
    }
    Ok(cp.model)
}
