//! Ordinary least squares for the reference analysis model and the
//! specific-quality scores built on it.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tabular::{ColumnKind, Dataset, Schema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    Column(usize),
    Product(usize, usize),
}

/// A linear model `outcome ~ terms`, resolved against a schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisModel {
    outcome: usize,
    terms: Vec<Term>,
    names: Vec<String>,
}

impl AnalysisModel {
    /// Parses `"y ~ x1 + x2 + x1:x4"`. The intercept is implicit; `* ` and
    /// `:` both denote a product of two columns.
    pub fn parse(schema: &Schema, formula: &str) -> Result<Self> {
        let (lhs, rhs) = formula
            .split_once('~')
            .ok_or_else(|| Error::InvalidArgument(format!("formula `{formula}` lacks `~`")))?;
        let col = |name: &str| {
            let name = name.trim();
            let i = schema
                .index_of(name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown column `{name}` in formula")))?;
            if schema.column(i).kind.is_categorical() && schema.column(i).kind.levels() != Some(2) {
                return Err(Error::InvalidArgument(format!(
                    "column `{name}` has more than two levels; only binary factors enter as 0/1"
                )));
            }
            Ok(i)
        };
        let outcome = col(lhs)?;
        let mut terms = vec![Term::Intercept];
        let mut names = vec!["(intercept)".to_string()];
        for raw in rhs.split('+') {
            let raw = raw.trim();
            if raw.is_empty() {
                return Err(Error::InvalidArgument(format!("empty term in `{formula}`")));
            }
            if let Some((a, b)) = raw.split_once([':', '*']) {
                let (ia, ib) = (col(a)?, col(b)?);
                terms.push(Term::Product(ia, ib));
                names.push(format!("{}:{}", schema.column(ia).name, schema.column(ib).name));
            } else {
                let i = col(raw)?;
                terms.push(Term::Column(i));
                names.push(schema.column(i).name.clone());
            }
        }
        Ok(Self { outcome, terms, names })
    }

    /// `y ~ x1 + x2 + x3 + x4 + x1:x4`.
    pub fn scenario1(schema: &Schema) -> Result<Self> {
        Self::parse(schema, "y ~ x1 + x2 + x3 + x4 + x1:x4")
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn outcome(&self) -> usize {
        self.outcome
    }

    pub fn design(&self, d: &Dataset) -> Matrix {
        let mut x = Matrix::zeros(d.n_rows(), self.terms.len());
        for (j, t) in self.terms.iter().enumerate() {
            for r in 0..d.n_rows() {
                let v = match *t {
                    Term::Intercept => 1.0,
                    Term::Column(c) => d.value(r, c),
                    Term::Product(a, b) => d.value(r, a) * d.value(r, b),
                };
                x.set(r, j, v);
            }
        }
        x
    }

    pub fn response(&self, d: &Dataset) -> Vec<f64> {
        d.column_f64(self.outcome)
    }

    fn check(&self, d: &Dataset) -> Result<()> {
        let max = self
            .terms
            .iter()
            .map(|t| match *t {
                Term::Intercept => 0,
                Term::Column(c) => c,
                Term::Product(a, b) => a.max(b),
            })
            .max()
            .unwrap_or(0)
            .max(self.outcome);
        if max >= d.schema().n_columns() || matches!(d.schema().column(self.outcome).kind, ColumnKind::Categorical { .. }) {
            return Err(Error::SchemaMismatch("analysis model does not fit this dataset".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub model: AnalysisModel,
    pub coefficients: Vec<f64>,
    /// `s^2 (X^T X)^{-1}`.
    pub covariance: Matrix,
    pub residual_variance: f64,
    pub n: usize,
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

impl RegressionFit {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.p).map(|j| self.covariance.get(j, j).max(0.0).sqrt()).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.p).map(|j| self.covariance.get(j, j)).collect()
    }

    /// Two-sided Student-t intervals with `n - p` degrees of freedom.
    pub fn intervals(&self, level: f64) -> Vec<Interval> {
        let df = (self.n - self.p) as f64;
        let t = StudentsT::new(0.0, 1.0, df)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.5 + level / 2.0);
        self.coefficients
            .iter()
            .zip(self.standard_errors())
            .map(|(&b, se)| Interval {
                lower: b - t * se,
                upper: b + t * se,
            })
            .collect()
    }

    pub fn predict(&self, d: &Dataset) -> Vec<f64> {
        let x = self.model.design(d);
        (0..x.rows())
            .map(|r| x.row(r).iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Least squares via Householder QR.
pub fn ols_fit(d: &Dataset, model: &AnalysisModel) -> Result<RegressionFit> {
    model.check(d)?;
    let x = model.design(d);
    let y = model.response(d);
    let (n, p) = (x.rows(), x.cols());
    if n <= p {
        return Err(Error::InvalidArgument(format!("OLS needs more rows than terms ({n} <= {p})")));
    }
    // column-major working copy
    let mut a: Vec<Vec<f64>> = (0..p).map(|j| (0..n).map(|i| x.get(i, j)).collect()).collect();
    let col_norms: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut qty = y.clone();
    for k in 0..p {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-10 * col_norms[k].max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient(model.names[k].clone()));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(k) {
                let s: f64 = v.iter().zip(&col[k..]).map(|(vi, ci)| vi * ci).sum::<f64>() * 2.0 / vnorm2;
                for (ci, vi) in col[k..].iter_mut().zip(&v) {
                    *ci -= s * vi;
                }
            }
            let s: f64 = v.iter().zip(&qty[k..]).map(|(vi, yi)| vi * yi).sum::<f64>() * 2.0 / vnorm2;
            for (yi, vi) in qty[k..].iter_mut().zip(&v) {
                *yi -= s * vi;
            }
        }
        let rkk = a[k][k];
        if rkk.abs() <= 1e-10 * col_norms[k] {
            return Err(Error::RankDeficient(model.names[k].clone()));
        }
    }
    // r[i][j] = a[j][i] for i <= j
    let r = |i: usize, j: usize| a[j][i];
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| r(i, j) * beta[j]).sum();
        beta[i] = (qty[i] - s) / r(i, i);
    }
    // R^{-1}, upper triangular
    let mut rinv = Matrix::zeros(p, p);
    for j in 0..p {
        rinv.set(j, j, 1.0 / r(j, j));
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|k| r(i, k) * rinv.get(k, j)).sum();
            rinv.set(i, j, -s / r(i, i));
        }
    }
    let rss: f64 = (0..n)
        .map(|i| {
            let fitted: f64 = x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum();
            (y[i] - fitted).powi(2)
        })
        .sum();
    let s2 = rss / (n - p) as f64;
    let mut cov = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let s: f64 = (i.max(j)..p).map(|k| rinv.get(i, k) * rinv.get(j, k)).sum();
            cov.set(i, j, s2 * s);
        }
    }
    Ok(RegressionFit {
        model: model.clone(),
        coefficients: beta,
        covariance: cov,
        residual_variance: s2,
        n,
        p,
    })
}

/// Reference values this close to zero are left out of percent-bias means.
pub const BIAS_REFERENCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSpecificScores {
    pub bias_pct: f64,
    pub variance_ratio: f64,
    /// Coefficients dropped from the bias mean because the reference was ~0.
    pub excluded: usize,
}

fn mean_percent_bias(estimates: &[f64], reference: &[f64]) -> (f64, usize, usize) {
    let mut total = 0.0;
    let mut used = 0;
    let mut excluded = 0;
    for (e, r) in estimates.iter().zip(reference) {
        if r.abs() < BIAS_REFERENCE_FLOOR {
            excluded += 1;
            continue;
        }
        total += 100.0 * (e - r).abs() / r.abs();
        used += 1;
    }
    (total, used, excluded)
}

pub fn specific_training_scores(fit_synth: &RegressionFit, fit_train: &RegressionFit) -> Result<TrainingSpecificScores> {
    if fit_synth.model != fit_train.model {
        return Err(Error::InvalidArgument("fits use different analysis models".into()));
    }
    let (total, used, excluded) = mean_percent_bias(&fit_synth.coefficients, &fit_train.coefficients);
    let ratios: Vec<f64> = fit_synth
        .variances()
        .iter()
        .zip(fit_train.variances())
        .map(|(s, t)| s / t)
        .collect();
    Ok(TrainingSpecificScores {
        bias_pct: if used > 0 { total / used as f64 } else { 0.0 },
        variance_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralisationSpecificScores {
    pub bias_pct: f64,
    pub coverage: f64,
    pub mean_width: f64,
    pub excluded: usize,
}

/// Bias against the population truth, and per-dataset interval coverage
/// and width, pooled over every (dataset, coefficient) pair.
pub fn specific_generalisation_scores(fits: &[RegressionFit], truth: &[f64], level: f64) -> Result<GeneralisationSpecificScores> {
    if fits.is_empty() {
        return Err(Error::Empty("no fits to score".into()));
    }
    let (mut total, mut used, mut excluded) = (0.0, 0usize, 0usize);
    let (mut covered, mut pairs, mut width) = (0usize, 0usize, 0.0);
    for f in fits {
        if f.coefficients.len() != truth.len() {
            return Err(Error::Dimension {
                expected: truth.len(),
                got: f.coefficients.len(),
            });
        }
        let (t, u, e) = mean_percent_bias(&f.coefficients, truth);
        total += t;
        used += u;
        excluded += e;
        for (iv, &th) in f.intervals(level).iter().zip(truth) {
            covered += usize::from(iv.contains(th));
            width += iv.width();
            pairs += 1;
        }
    }
    Ok(GeneralisationSpecificScores {
        bias_pct: if used > 0 { total / used as f64 } else { 0.0 },
        coverage: covered as f64 / pairs as f64,
        mean_width: width / pairs as f64,
        excluded,
    })
}

pub fn prediction_rmse(fit: &RegressionFit, test: &Dataset) -> Result<f64> {
    fit.model.check(test)?;
    if test.is_empty() {
        return Err(Error::Empty("prediction test set is empty".into()));
    }
    let y = fit.model.response(test);
    let pred = fit.predict(test);
    let mse = y.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}
