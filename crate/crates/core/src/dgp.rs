//! Scenario 1 data generating process: continuous, count and categorical
//! attributes with one structural zero (`w1 = 0` forces `w2 = 0`) and a
//! linear outcome with an interaction.
//!
//! Normal distributions are parameterized by mean and standard deviation.
//! The negative binomial `NB(p, r)` uses success probability `p` and size
//! `r`, counting failures before the `r`-th success (mean `r(1-p)/p`).

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tabular::{Column, ColumnData, Dataset, Schema, StructuralZeroRule};

pub const COLUMN_NAMES: [&str; 9] = ["x1", "x2", "x3", "x4", "x5", "x6", "w1", "w2", "y"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario1Params {
    pub x1_mean: f64,
    pub x1_sd: f64,
    pub x2_mean: f64,
    pub x2_sd: f64,
    pub x3_p: f64,
    pub x4_p: f64,
    pub x4_size: f64,
    pub x5_probs: [f64; 3],
    pub x6_sd: f64,
    pub w1_p: f64,
    pub w2_scale: f64,
    /// Intercept, then x1, x2, x3, x4, x1*x4.
    pub coefficients: [f64; 6],
    pub noise_sd: f64,
}

impl Default for Scenario1Params {
    fn default() -> Self {
        Self {
            x1_mean: 5.0,
            x1_sd: 2.0,
            x2_mean: -3.0,
            x2_sd: 1.0,
            x3_p: 0.7,
            x4_p: 0.8,
            x4_size: 30.0,
            x5_probs: [0.2, 0.3, 0.5],
            x6_sd: 50.0,
            w1_p: 0.5,
            w2_scale: 0.3,
            coefficients: [0.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            noise_sd: 20.0,
        }
    }
}

impl Scenario1Params {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.x3_p, self.x4_p, self.w1_p, self.w2_scale];
        if probs.iter().chain(&self.x5_probs).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument("probability parameter outside [0, 1]".into()));
        }
        if (self.x5_probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("x5 probabilities must sum to 1".into()));
        }
        let sds = [self.x1_sd, self.x2_sd, self.x6_sd, self.noise_sd];
        if sds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("standard deviations must be positive".into()));
        }
        if !(self.x4_p > 0.0 && self.x4_size > 0.0) {
            return Err(Error::InvalidArgument("negative binomial needs p > 0 and r > 0".into()));
        }
        Ok(())
    }

    pub fn x4_mean(&self) -> f64 {
        self.x4_size * (1.0 - self.x4_p) / self.x4_p
    }
}

/// Population parameters of the analysis model `y ~ 1 + x1 + x2 + x3 + x4 + x1:x4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub coefficients: Vec<f64>,
    pub noise_sd: f64,
}

pub fn true_params() -> TrueParams {
    true_params_for(&Scenario1Params::default())
}

pub fn true_params_for(p: &Scenario1Params) -> TrueParams {
    TrueParams {
        coefficients: p.coefficients.to_vec(),
        noise_sd: p.noise_sd,
    }
}

pub fn scenario1_schema() -> Schema {
    let columns = vec![
        Column::continuous("x1"),
        Column::continuous("x2"),
        Column::categorical("x3", 2),
        Column::count("x4"),
        Column::categorical("x5", 3),
        Column::continuous("x6"),
        Column::categorical("w1", 2),
        Column::categorical("w2", 2),
        Column::continuous("y"),
    ];
    let rule = StructuralZeroRule {
        guard_column: 6,
        guard_level: 0,
        forced_column: 7,
        forced_level: 0,
    };
    Schema::new(columns, vec![rule], 8).expect("scenario 1 schema is well formed")
}

pub fn generate_scenario1(n: usize, seed: u64) -> Dataset {
    generate_with(&Scenario1Params::default(), n, seed).expect("default parameters are valid")
}

pub fn generate_with(p: &Scenario1Params, n: usize, seed: u64) -> Result<Dataset> {
    p.validate()?;
    let mut rng = rng::seeded(seed);
    let x1_dist = Normal::new(p.x1_mean, p.x1_sd).expect("validated");
    let x2_dist = Normal::new(p.x2_mean, p.x2_sd).expect("validated");
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    // NB as a gamma-Poisson mixture
    let x4_gamma = Gamma::new(p.x4_size, (1.0 - p.x4_p) / p.x4_p).ok();

    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut x3 = Vec::with_capacity(n);
    let mut x4 = Vec::with_capacity(n);
    let mut x5 = Vec::with_capacity(n);
    let mut x6 = Vec::with_capacity(n);
    let mut w1 = Vec::with_capacity(n);
    let mut w2 = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let b = &p.coefficients;

    for _ in 0..n {
        let v1: f64 = x1_dist.sample(&mut rng);
        let v2: f64 = x2_dist.sample(&mut rng);
        let v3 = u32::from(rng.gen_bool(p.x3_p));
        let v4 = match x4_gamma {
            Some(g) => {
                let lambda: f64 = g.sample(&mut rng);
                if lambda > 0.0 {
                    Poisson::new(lambda).map_or(0, |d| d.sample(&mut rng) as u64)
                } else {
                    0
                }
            }
            None => 0,
        };
        let u: f64 = rng.gen();
        let v5 = categorical_draw(&p.x5_probs, u);
        let v6 = f64::from(v3) + p.x6_sd * std.sample(&mut rng);
        let v7 = u32::from(rng.gen_bool(p.w1_p));
        let v8 = u32::from(rng.gen_bool(p.w2_scale * f64::from(v7)));
        let f4 = v4 as f64;
        let mean = b[0] + b[1] * v1 + b[2] * v2 + b[3] * f64::from(v3) + b[4] * f4 + b[5] * v1 * f4;
        let vy = mean + p.noise_sd * std.sample(&mut rng);

        x1.push(v1);
        x2.push(v2);
        x3.push(v3);
        x4.push(v4);
        x5.push(v5);
        x6.push(v6);
        w1.push(v7);
        w2.push(v8);
        y.push(vy);
    }

    Dataset::new(
        scenario1_schema(),
        vec![
            ColumnData::Real(x1),
            ColumnData::Real(x2),
            ColumnData::Level(x3),
            ColumnData::Count(x4),
            ColumnData::Level(x5),
            ColumnData::Real(x6),
            ColumnData::Level(w1),
            ColumnData::Level(w2),
            ColumnData::Real(y),
        ],
    )
}

fn categorical_draw(probs: &[f64], u: f64) -> u32 {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    (probs.len() - 1) as u32
}
