//! Quality measures for synthetic data.
//!
//! General quality compares whole distributions (one-way marginals with a
//! randomization null, and a CART propensity score). Specific quality
//! compares the reference regression on synthetic data against the same
//! regression on training data, or against population truth.

pub mod cart;
pub mod marginal;
pub mod pmse;
pub mod regression;

pub use cart::{cart_fit, cart_predict, CartConfig, CartTree, FeatureKind, Features};
pub use marginal::{marginal_report, total_variation, tv_ratio, wasserstein_1d, wasserstein_ratio, RatioScore, WassersteinReport};
pub use pmse::{pmse, pmse_ratio, PmseReport};
pub use regression::{
    ols_fit, prediction_rmse, specific_generalisation_scores, specific_training_scores, AnalysisModel, GeneralisationSpecificScores,
    Interval, RegressionFit, TrainingSpecificScores,
};

use crate::tabular::{validate, Dataset, ViolationKind};

/// Share of rows violating at least one structural-zero rule.
pub fn structural_zero_rate(d: &Dataset) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    let mut rows: Vec<usize> = validate(d)
        .into_iter()
        .filter(|v| matches!(v.kind, ViolationKind::StructuralZero { .. }))
        .map(|v| v.row)
        .collect();
    rows.dedup();
    rows.len() as f64 / d.n_rows() as f64
}
