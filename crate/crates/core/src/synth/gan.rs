//! Differentially private GAN.
//!
//! The discriminator sees real records, so its gradient on the real half of
//! each batch is clipped per example and noised, and the accountant is
//! charged once per discriminator step. Its gradient on generated records
//! and every generator update depend on the data only through earlier noised
//! releases and are left unclipped.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::accountant::{calibrate_sigma, to_epsilon, AccountantState, PrivacyBudget};
use crate::error::{Error, Result};
use crate::matrix::{axpy, Matrix};
use crate::nn::{
    adam_step, backward_batch, clipped_gradient_sum, forward, gumbel_noise, gumbel_softmax_backward, predict,
    privatize_sum, sigmoid, tempered_softmax, Activation, Activations, AdamConfig, AdamState, LayerSpec, Mlp, Mode,
};
use crate::rng;
use crate::tabular::{argmax, Block, BlockKind, Dataset, Encoder, Schema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    /// Generator hidden layers only.
    pub dropout: f64,
    pub leaky_slope: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub temperature: f64,
    /// Fixed noise multiplier; calibrated from the budget when absent.
    pub noise_multiplier: Option<f64>,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            generator_hidden: vec![256, 128, 128],
            discriminator_hidden: vec![256, 128, 128],
            dropout: 0.5,
            leaky_slope: 0.2,
            batch_size: 100,
            steps: 2000,
            adam: AdamConfig::default(),
            clip_norm: 1.0,
            temperature: 0.5,
            noise_multiplier: None,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.latent_dim == 0 || self.batch_size == 0 || self.steps == 0 {
            return bad("latent dimension, batch size and steps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.clip_norm > 0.0) || !(self.temperature > 0.0) {
            return bad("clip norm and temperature must be positive".into());
        }
        if let Some(s) = self.noise_multiplier {
            if !(s > 0.0) {
                return bad(format!("noise multiplier must be positive, got {s}"));
            }
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub steps: u64,
    pub batch_size: usize,
    pub sampling_rate: f64,
    pub noise_multiplier: f64,
    pub clip_norm: f64,
    pub requested: PrivacyBudget,
    pub realized: PrivacyBudget,
    /// Order attaining the realized epsilon.
    pub order: f64,
    /// Accumulated (order, RDP) pairs.
    pub ledger: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanModel {
    encoder: Encoder,
    pub generator: Mlp,
    pub latent_dim: usize,
    pub temperature: f64,
    pub meta: TrainingMeta,
}

fn stack(hidden: &[usize], output: usize, act: Activation, dropout: f64) -> Vec<LayerSpec> {
    hidden
        .iter()
        .map(|&h| LayerSpec {
            output: h,
            activation: act,
            dropout,
        })
        .chain(std::iter::once(LayerSpec {
            output,
            activation: Activation::Identity,
            dropout: 0.0,
        }))
        .collect()
}

fn latent<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Matrix {
    Matrix::from_vec(rows, dim, (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect())
}

struct Generated {
    acts: Activations,
    /// Continuous blocks as produced, categorical blocks as relaxed one-hots.
    relaxed: Matrix,
}

fn generate<R: Rng + ?Sized>(g: &Mlp, blocks: &[Block], latent_dim: usize, rows: usize, tau: f64, rng: &mut R) -> Result<Generated> {
    let z = latent(rows, latent_dim, rng);
    let acts = forward(g, &z, Mode::Train, rng)?;
    let mut relaxed = acts.output().clone();
    for b in blocks {
        if let BlockKind::Indicator { .. } = b.kind {
            for r in 0..rows {
                let span = &mut relaxed.row_mut(r)[b.offset..b.offset + b.width];
                let noise = gumbel_noise(b.width, rng);
                let p = tempered_softmax(span, &noise, tau);
                span.copy_from_slice(&p);
            }
        }
    }
    Ok(Generated { acts, relaxed })
}

/// Maps `dL/d relaxed` back to `dL/d generator output`.
fn relaxed_backward(gen: &Generated, blocks: &[Block], upstream: &Matrix, tau: f64) -> Matrix {
    let mut out = upstream.clone();
    for b in blocks {
        if let BlockKind::Indicator { .. } = b.kind {
            for r in 0..out.rows() {
                let range = b.offset..b.offset + b.width;
                let g = gumbel_softmax_backward(&gen.relaxed.row(r)[range.clone()], &upstream.row(r)[range.clone()], tau);
                out.row_mut(r)[range].copy_from_slice(&g);
            }
        }
    }
    out
}

/// `dBCE/dlogit` per row for target `label`, scaled by `scale`.
fn logit_grad(logits: &Matrix, label: f64, scale: f64) -> Matrix {
    Matrix::from_vec(
        logits.rows(),
        1,
        logits.as_slice().iter().map(|&l| (sigmoid(l) - label) * scale).collect(),
    )
}

pub(super) fn fit(cfg: &GanConfig, budget: PrivacyBudget, train: &Dataset, seed: u64) -> Result<GanModel> {
    cfg.validate()?;
    let n = train.n_rows();
    let b = cfg.batch_size;
    if b > n {
        return Err(Error::InvalidArgument(format!("batch size {b} exceeds training rows {n}")));
    }
    let q = b as f64 / n as f64;
    let sigma = match cfg.noise_multiplier {
        Some(s) => s,
        None => calibrate_sigma(budget, q, cfg.steps)?,
    };
    let state = AccountantState::fresh(q, sigma)?.compose(cfg.steps);
    let report = to_epsilon(&state, budget.delta)?;
    if report.epsilon > budget.epsilon {
        return Err(Error::BudgetUnreachable(format!(
            "noise multiplier {sigma} spends epsilon {:.4}, above the requested {}",
            report.epsilon, budget.epsilon
        )));
    }

    let encoder = Encoder::fit(train)?;
    let real_all = encoder.encode(train)?;
    let blocks = encoder.blocks().to_vec();
    let width = encoder.width();
    let leaky = Activation::LeakyRelu { slope: cfg.leaky_slope };
    let mut r = rng::seeded(seed);
    let mut g = Mlp::new(
        cfg.latent_dim,
        &stack(&cfg.generator_hidden, width, leaky, cfg.dropout),
        &mut r,
    )?;
    let mut d = Mlp::new(width, &stack(&cfg.discriminator_hidden, 1, leaky, 0.0), &mut r)?;
    let mut g_state = AdamState::new(g.param_count());
    let mut d_state = AdamState::new(d.param_count());
    let inv_b = 1.0 / b as f64;

    for _ in 0..cfg.steps {
        let idx = index::sample(&mut r, n, b).into_vec();
        let real = real_all.select_rows(&idx);
        let fake = generate(&g, &blocks, cfg.latent_dim, b, cfg.temperature, &mut r)?;

        let real_acts = forward(&d, &real, Mode::Train, &mut r)?;
        let clipped = clipped_gradient_sum(&d, &real_acts, &logit_grad(real_acts.output(), 1.0, 1.0), cfg.clip_norm)?;
        let mut grad = privatize_sum(&clipped.sum, b, cfg.clip_norm, sigma, &mut r);
        let fake_acts = forward(&d, &fake.relaxed, Mode::Train, &mut r)?;
        let fake_grad = backward_batch(&d, &fake_acts, &logit_grad(fake_acts.output(), 0.0, 1.0))?;
        axpy(inv_b, &fake_grad.grad, &mut grad);
        adam_step(d.params_mut(), &grad, &mut d_state, &cfg.adam)?;

        // non-saturating generator loss: -log D(G(z))
        let gen = generate(&g, &blocks, cfg.latent_dim, b, cfg.temperature, &mut r)?;
        let acts = forward(&d, &gen.relaxed, Mode::Train, &mut r)?;
        let through_d = backward_batch(&d, &acts, &logit_grad(acts.output(), 1.0, inv_b))?;
        let upstream = relaxed_backward(&gen, &blocks, &through_d.input_grad, cfg.temperature);
        let g_grad = backward_batch(&g, &gen.acts, &upstream)?;
        adam_step(g.params_mut(), &g_grad.grad, &mut g_state, &cfg.adam)?;
    }

    Ok(GanModel {
        encoder,
        generator: g,
        latent_dim: cfg.latent_dim,
        temperature: cfg.temperature,
        meta: TrainingMeta {
            steps: cfg.steps,
            batch_size: b,
            sampling_rate: q,
            noise_multiplier: sigma,
            clip_norm: cfg.clip_norm,
            requested: budget,
            realized: PrivacyBudget {
                epsilon: report.epsilon,
                delta: budget.delta,
            },
            order: report.order,
            ledger: state.ledger(),
        },
    })
}

impl GanModel {
    pub fn schema(&self) -> &Schema {
        self.encoder.schema()
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Evaluation-mode generator output decoded to records. Categorical
    /// blocks take the argmax of logits plus Gumbel noise, which is the
    /// zero-temperature limit of the relaxation used in training.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        let z = latent(n, self.latent_dim, rng);
        let mut out = predict(&self.generator, &z)?;
        for b in self.encoder.blocks() {
            for r in 0..n {
                let span = &mut out.row_mut(r)[b.offset..b.offset + b.width];
                match b.kind {
                    BlockKind::Indicator { .. } => {
                        let noise = gumbel_noise(b.width, rng);
                        let perturbed: Vec<f64> = span.iter().zip(&noise).map(|(l, g)| l + g).collect();
                        let k = argmax(&perturbed);
                        span.iter_mut().enumerate().for_each(|(i, v)| *v = if i == k { 1.0 } else { 0.0 });
                    }
                    BlockKind::Standardized { .. } => {
                        if !span[0].is_finite() {
                            span[0] = 0.0;
                        }
                    }
                }
            }
        }
        self.encoder.decode(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::generate_scenario1;
    use crate::tabular::validate;

    fn small() -> GanConfig {
        GanConfig {
            generator_hidden: vec![16],
            discriminator_hidden: vec![16],
            latent_dim: 4,
            batch_size: 20,
            steps: 10,
            ..GanConfig::default()
        }
    }

    #[test]
    fn short_fit_is_deterministic_and_decodes() {
        let d = generate_scenario1(200, 5);
        let budget = PrivacyBudget::new(5.0, 1e-3).unwrap();
        let a = fit(&small(), budget, &d, 9).unwrap();
        let b = fit(&small(), budget, &d, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.meta.realized.epsilon <= 5.0);
        let s = a.sample(300, &mut rng::seeded(1)).unwrap();
        assert_eq!(s.n_rows(), 300);
        // domain checks only; structural zeros are enforced by the caller
        assert!(validate(&s)
            .iter()
            .all(|v| matches!(v.kind, crate::tabular::ViolationKind::StructuralZero { .. })));
    }

    #[test]
    fn fixed_sigma_over_budget_is_rejected() {
        let d = generate_scenario1(200, 5);
        let cfg = GanConfig {
            noise_multiplier: Some(0.5),
            ..small()
        };
        let budget = PrivacyBudget::new(0.01, 1e-5).unwrap();
        assert!(matches!(fit(&cfg, budget, &d, 1), Err(Error::BudgetUnreachable(_))));
    }

    #[test]
    fn oversized_batch_is_rejected() {
        let d = generate_scenario1(10, 5);
        assert!(fit(&small(), PrivacyBudget::new(1.0, 1e-3).unwrap(), &d, 0).is_err());
    }
}
