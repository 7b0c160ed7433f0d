//! Propensity-score mean squared error and its permutation-null ratio.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::cart::{CartConfig, CartFitter, FeatureKind, Features};
use crate::error::{Error, Result};
use crate::rng;
use crate::tabular::{ColumnKind, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmseReport {
    pub pmse: f64,
    /// Synthetic share of the stacked table.
    pub c: f64,
    pub null: Option<NullSummary>,
    pub ratio: Option<f64>,
}

/// Stacks `real` over `synth` as CART features; labels are `true` for synthetic rows.
pub fn stack_features(real: &Dataset, synth: &Dataset) -> Result<(Features, Vec<bool>)> {
    if real.schema() != synth.schema() {
        return Err(Error::SchemaMismatch("pMSE needs a shared schema".into()));
    }
    let kinds = real
        .schema()
        .columns()
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Categorical { levels } => FeatureKind::Categorical { levels },
            ColumnKind::Continuous | ColumnKind::Count => FeatureKind::Continuous,
        })
        .collect();
    let columns = (0..real.schema().n_columns())
        .map(|ci| {
            let mut v = real.column_f64(ci);
            v.extend(synth.column_f64(ci));
            v
        })
        .collect();
    let labels = std::iter::repeat_n(false, real.n_rows())
        .chain(std::iter::repeat_n(true, synth.n_rows()))
        .collect();
    Ok((Features::new(kinds, columns)?, labels))
}

/// `mean_i (p_i - c)^2` where `p_i` are in-sample CART propensities.
pub fn pmse_from_probabilities(probs: &[f64], c: f64) -> f64 {
    probs.iter().map(|p| (p - c) * (p - c)).sum::<f64>() / probs.len() as f64
}

fn fit_pmse(fitter: &CartFitter<'_>, features: &Features, labels: &[bool], c: f64, config: &CartConfig) -> Result<f64> {
    let tree = fitter.fit(labels, config)?;
    Ok(pmse_from_probabilities(&tree.predict_all(features), c))
}

pub fn pmse(real: &Dataset, synth: &Dataset, config: &CartConfig) -> Result<PmseReport> {
    let (features, labels) = stack_features(real, synth)?;
    let c = synth.n_rows() as f64 / features.n_rows() as f64;
    let fitter = CartFitter::new(&features);
    let value = fit_pmse(&fitter, &features, &labels, c, config)?;
    Ok(PmseReport {
        pmse: value,
        c,
        null: None,
        ratio: None,
    })
}

/// Observed pMSE divided by the mean pMSE over `null_iters` label permutations.
/// Permutation `k` shuffles with a stream derived from `seed` and `k`.
pub fn pmse_ratio(real: &Dataset, synth: &Dataset, config: &CartConfig, null_iters: usize, seed: u64) -> Result<PmseReport> {
    if null_iters == 0 {
        return Err(Error::InvalidArgument("null iterations must be at least 1".into()));
    }
    let (features, labels) = stack_features(real, synth)?;
    let c = synth.n_rows() as f64 / features.n_rows() as f64;
    let fitter = CartFitter::new(&features);
    let observed = fit_pmse(&fitter, &features, &labels, c, config)?;
    let mut null = Vec::with_capacity(null_iters);
    for k in 0..null_iters {
        let mut permuted = labels.clone();
        permuted.shuffle(&mut rng::seeded(rng::derive(seed, &[k as u64])));
        null.push(fit_pmse(&fitter, &features, &permuted, c, config)?);
    }
    let summary = summarize(&null);
    let ratio = if summary.mean > 0.0 {
        observed / summary.mean
    } else if observed == 0.0 {
        // nothing is distinguishable under the null or observed
        1.0
    } else {
        return Err(Error::DegenerateNull("pMSE null mean is zero".into()));
    };
    Ok(PmseReport {
        pmse: observed,
        c,
        null: Some(summary),
        ratio: Some(ratio),
    })
}

fn summarize(v: &[f64]) -> NullSummary {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    let median = if m % 2 == 1 { s[m / 2] } else { 0.5 * (s[m / 2 - 1] + s[m / 2]) };
    NullSummary {
        mean,
        median,
        sd,
        draws: v.len(),
    }
}
