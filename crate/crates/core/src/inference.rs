//! Combining estimates across `m` synthetic datasets with Rubin's rules,
//! plus the doubled variance used when the synthesis and analysis models
//! are uncongenial.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::metrics::{Interval, RegressionFit};

/// Per-coefficient combination results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedEstimate {
    /// Mean of the point estimates.
    pub theta: Vec<f64>,
    /// Mean of the within-dataset variances.
    pub within: Vec<f64>,
    /// Sample variance of the point estimates across datasets.
    pub between: Vec<f64>,
    /// `within + (1 + 1/m) between`.
    pub total: Vec<f64>,
    /// `2 total`.
    pub uncongenial: Vec<f64>,
    pub m: usize,
}

/// One dataset's estimates and their variances (diagonal of the covariance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub theta: Vec<f64>,
    pub variance: Vec<f64>,
}

impl From<&RegressionFit> for Estimate {
    fn from(fit: &RegressionFit) -> Self {
        Self {
            theta: fit.coefficients.clone(),
            variance: fit.variances(),
        }
    }
}

pub fn combine(estimates: &[Estimate]) -> Result<CombinedEstimate> {
    let m = estimates.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "combining needs at least two estimates, got {m}"
        )));
    }
    let p = estimates[0].theta.len();
    if estimates.iter().any(|e| e.theta.len() != p || e.variance.len() != p) {
        return Err(Error::InvalidArgument("estimates do not share a coefficient layout".into()));
    }
    let mf = m as f64;
    let mut out = CombinedEstimate {
        theta: vec![0.0; p],
        within: vec![0.0; p],
        between: vec![0.0; p],
        total: vec![0.0; p],
        uncongenial: vec![0.0; p],
        m,
    };
    for j in 0..p {
        let theta = estimates.iter().map(|e| e.theta[j]).sum::<f64>() / mf;
        let within = estimates.iter().map(|e| e.variance[j]).sum::<f64>() / mf;
        let between = estimates.iter().map(|e| (e.theta[j] - theta).powi(2)).sum::<f64>() / (mf - 1.0);
        let total = within + (1.0 + 1.0 / mf) * between;
        out.theta[j] = theta;
        out.within[j] = within;
        out.between[j] = between;
        out.total[j] = total;
        out.uncongenial[j] = 2.0 * total;
    }
    Ok(out)
}

/// Normal-quantile intervals: `(with total variance, with doubled variance)`.
pub fn combined_interval(ce: &CombinedEstimate, level: f64) -> Result<(Vec<Interval>, Vec<Interval>)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + level / 2.0);
    let make = |var: &[f64]| {
        ce.theta
            .iter()
            .zip(var)
            .map(|(t, v)| {
                let h = z * v.sqrt();
                Interval {
                    lower: t - h,
                    upper: t + h,
                }
            })
            .collect()
    };
    Ok((make(&ce.total), make(&ce.uncongenial)))
}
