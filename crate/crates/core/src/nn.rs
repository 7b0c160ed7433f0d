//! Fixed-architecture multilayer perceptrons with per-example gradients,
//! DP-SGD clipping and noising, Adam, and Gumbel-Softmax sampling.
//!
//! Parameters live in one flat vector, layer by layer, weights (row-major,
//! `output x input`) followed by biases. Gradients use the same layout.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::rng::open_unit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Identity,
    Sigmoid,
}

impl Activation {
    pub const LEAKY: Activation = Activation::LeakyRelu { slope: 0.2 };

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Identity => z,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub output: usize,
    pub activation: Activation,
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Layer {
    input: usize,
    output: usize,
    activation: Activation,
    dropout: f64,
    w_off: usize,
    b_off: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    input: usize,
    layers: Vec<Layer>,
    params: Vec<f64>,
    #[serde(skip)]
    version: u64,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(input: usize, specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(input, specs)?;
        for l in net.layers.clone() {
            let bound = (6.0 / (l.input + l.output) as f64).sqrt();
            for w in &mut net.params[l.w_off..l.b_off] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(input: usize, specs: &[LayerSpec]) -> Result<Self> {
        if input == 0 || specs.is_empty() {
            return Err(Error::InvalidArgument("network needs an input and at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input;
        let mut offset = 0;
        for s in specs {
            if s.output == 0 || !(0.0..1.0).contains(&s.dropout) {
                return Err(Error::InvalidArgument(format!("bad layer spec {s:?}")));
            }
            let w_off = offset;
            let b_off = w_off + fan_in * s.output;
            offset = b_off + s.output;
            layers.push(Layer {
                input: fan_in,
                output: s.output,
                activation: s.activation,
                dropout: s.dropout,
                w_off,
                b_off,
            });
            fan_in = s.output;
        }
        Ok(Self {
            input,
            layers,
            params: vec![0.0; offset],
            version: 0,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access. Invalidates every outstanding activation record.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let l = &self.layers[layer];
        &self.params[l.w_off..l.b_off]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let l = &self.layers[layer];
        &self.params[l.b_off..l.b_off + l.output]
    }

    /// Parameter-vector offset of `(layer, out, in)` weight.
    pub fn weight_index(&self, layer: usize, out: usize, inp: usize) -> usize {
        let l = &self.layers[layer];
        l.w_off + out * l.input + inp
    }

    pub fn bias_index(&self, layer: usize, out: usize) -> usize {
        self.layers[layer].b_off + out
    }
}

/// Everything a backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    masks: Vec<Option<Vec<f64>>>,
    output: Matrix,
    version: u64,
}

impl Activations {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn into_output(self) -> Matrix {
        self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.rows()
    }
}

/// Dropout uses inverted scaling: kept units are multiplied by `1/(1-p)`
/// during training so evaluation needs no rescaling.
pub fn forward<R: Rng + ?Sized>(net: &Mlp, batch: &Matrix, mode: Mode, rng: &mut R) -> Result<Activations> {
    if batch.cols() != net.input {
        return Err(Error::Dimension {
            expected: net.input,
            got: batch.cols(),
        });
    }
    let n = batch.rows();
    let mut inputs = Vec::with_capacity(net.layers.len());
    let mut pre = Vec::with_capacity(net.layers.len());
    let mut masks = Vec::with_capacity(net.layers.len());
    let mut x = batch.clone();
    for (li, l) in net.layers.iter().enumerate() {
        let w = net.weights(li);
        let b = net.bias(li);
        let mut z = Matrix::zeros(n, l.output);
        for r in 0..n {
            let xr = x.row(r);
            let zr = z.row_mut(r);
            for (o, zo) in zr.iter_mut().enumerate() {
                *zo = dot(xr, &w[o * l.input..(o + 1) * l.input]) + b[o];
            }
        }
        let mut a = z.clone();
        for v in a.as_mut_slice() {
            *v = l.activation.apply(*v);
        }
        let mask = if mode == Mode::Train && l.dropout > 0.0 {
            let keep = 1.0 - l.dropout;
            let m: Vec<f64> = (0..n * l.output)
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            for (v, k) in a.as_mut_slice().iter_mut().zip(&m) {
                *v *= k;
            }
            Some(m)
        } else {
            None
        };
        inputs.push(x);
        pre.push(z);
        masks.push(mask);
        x = a;
    }
    Ok(Activations {
        inputs,
        pre,
        masks,
        output: x,
        version: net.version,
    })
}

/// Convenience evaluation-mode forward pass returning only the output.
pub fn predict(net: &Mlp, batch: &Matrix) -> Result<Matrix> {
    // evaluation mode never draws from the rng
    let mut rng = crate::rng::seeded(0);
    Ok(forward(net, batch, Mode::Eval, &mut rng)?.into_output())
}

/// Per-layer error signals `dL/dz` plus the gradient with respect to the input.
fn deltas(net: &Mlp, acts: &Activations, loss_grad: &Matrix) -> Result<(Vec<Matrix>, Matrix)> {
    if acts.version != net.version {
        return Err(Error::StaleActivations {
            recorded: acts.version,
            current: net.version,
        });
    }
    if loss_grad.rows() != acts.output.rows() || loss_grad.cols() != acts.output.cols() {
        return Err(Error::Dimension {
            expected: acts.output.rows() * acts.output.cols(),
            got: loss_grad.rows() * loss_grad.cols(),
        });
    }
    let n = loss_grad.rows();
    let mut out: Vec<Matrix> = Vec::with_capacity(net.layers.len());
    let mut upstream = loss_grad.clone();
    for li in (0..net.layers.len()).rev() {
        let l = &net.layers[li];
        let mut delta = upstream;
        if let Some(m) = &acts.masks[li] {
            for (d, k) in delta.as_mut_slice().iter_mut().zip(m) {
                *d *= k;
            }
        }
        for (d, z) in delta.as_mut_slice().iter_mut().zip(acts.pre[li].as_slice()) {
            *d *= l.activation.derivative(*z);
        }
        let w = net.weights(li);
        let mut dx = Matrix::zeros(n, l.input);
        for r in 0..n {
            let dr = delta.row(r);
            let dxr = dx.row_mut(r);
            for (o, &d) in dr.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, &w[o * l.input..(o + 1) * l.input], dxr);
                }
            }
        }
        out.push(delta);
        upstream = dx;
    }
    out.reverse();
    Ok((out, upstream))
}

/// Adds `scale * (gradient of example r)` into `grad`.
fn accumulate_example(net: &Mlp, acts: &Activations, deltas: &[Matrix], r: usize, scale: f64, grad: &mut [f64]) {
    for (li, l) in net.layers.iter().enumerate() {
        let x = acts.inputs[li].row(r);
        let d = deltas[li].row(r);
        for (o, &dv) in d.iter().enumerate() {
            let s = scale * dv;
            if s != 0.0 {
                let off = l.w_off + o * l.input;
                axpy(s, x, &mut grad[off..off + l.input]);
                grad[l.b_off + o] += s;
            }
        }
    }
}

/// Adds `sum_r scales[r] * (gradient of example r)` into `grad`, visiting
/// one weight row at a time. Each coordinate still sums examples in order.
fn accumulate_batch(net: &Mlp, acts: &Activations, deltas: &[Matrix], scales: &[f64], grad: &mut [f64]) {
    for (li, l) in net.layers.iter().enumerate() {
        let x = &acts.inputs[li];
        let d = &deltas[li];
        for o in 0..l.output {
            let off = l.w_off + o * l.input;
            let mut bias = grad[l.b_off + o];
            let row = &mut grad[off..off + l.input];
            for (r, &scale) in scales.iter().enumerate() {
                let s = scale * d.get(r, o);
                if s != 0.0 {
                    axpy(s, x.row(r), row);
                    bias += s;
                }
            }
            grad[l.b_off + o] = bias;
        }
    }
}

/// One flat gradient per example, in parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PerExampleGrads {
    pub grads: Vec<Vec<f64>>,
}

impl PerExampleGrads {
    pub fn sum(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.grads.first().map_or(0, Vec::len)];
        for g in &self.grads {
            axpy(1.0, g, &mut s);
        }
        s
    }
}

/// `loss_grad` row `r` is `dL_r / d output_r` for example `r`.
pub fn backward_per_example(net: &Mlp, acts: &Activations, loss_grad: &Matrix) -> Result<PerExampleGrads> {
    let (deltas, _) = deltas(net, acts, loss_grad)?;
    let grads = (0..loss_grad.rows())
        .map(|r| {
            let mut g = vec![0.0; net.param_count()];
            accumulate_example(net, acts, &deltas, r, 1.0, &mut g);
            g
        })
        .collect();
    Ok(PerExampleGrads { grads })
}

#[derive(Debug, Clone)]
pub struct BatchGradient {
    /// Sum over examples.
    pub grad: Vec<f64>,
    pub input_grad: Matrix,
}

pub fn backward_batch(net: &Mlp, acts: &Activations, loss_grad: &Matrix) -> Result<BatchGradient> {
    let (deltas, input_grad) = deltas(net, acts, loss_grad)?;
    let mut grad = vec![0.0; net.param_count()];
    accumulate_batch(net, acts, &deltas, &vec![1.0; loss_grad.rows()], &mut grad);
    Ok(BatchGradient { grad, input_grad })
}

#[derive(Debug, Clone)]
pub struct ClippedSum {
    pub sum: Vec<f64>,
    /// Pre-clipping per-example gradient norms.
    pub norms: Vec<f64>,
}

/// Sum of per-example gradients each clipped to L2 norm `clip`, without
/// materializing them. Each layer's per-example weight gradient is the
/// outer product `delta x^T`, so its squared norm is `|delta|^2 |x|^2`.
pub fn clipped_gradient_sum(net: &Mlp, acts: &Activations, loss_grad: &Matrix, clip: f64) -> Result<ClippedSum> {
    if !(clip > 0.0) {
        return Err(Error::InvalidArgument(format!("clip norm must be positive, got {clip}")));
    }
    let (deltas, _) = deltas(net, acts, loss_grad)?;
    let n = loss_grad.rows();
    let norms: Vec<f64> = (0..n)
        .map(|r| {
            (0..net.layers.len())
                .map(|li| {
                    let d = deltas[li].row(r);
                    let x = acts.inputs[li].row(r);
                    dot(d, d) * (dot(x, x) + 1.0)
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut sum = vec![0.0; net.param_count()];
    let scales: Vec<f64> = norms.iter().map(|&n| clip_factor(n, clip)).collect();
    accumulate_batch(net, acts, &deltas, &scales, &mut sum);
    Ok(ClippedSum { sum, norms })
}

pub fn clip_factor(norm: f64, clip: f64) -> f64 {
    if norm > clip {
        clip / norm
    } else {
        1.0
    }
}

/// `sum / batch + N(0, (sigma * clip / batch)^2)` per coordinate.
pub fn privatize_sum<R: Rng + ?Sized>(sum: &[f64], batch: usize, clip: f64, sigma: f64, rng: &mut R) -> Vec<f64> {
    let b = batch as f64;
    let sd = sigma * clip / b;
    sum.iter()
        .map(|s| {
            let noise: f64 = if sd > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
            s / b + sd * noise
        })
        .collect()
}

/// Clips each example's gradient to norm `clip`, averages, and adds
/// isotropic Gaussian noise with standard deviation `sigma * clip / B`.
pub fn clip_noise_aggregate<R: Rng + ?Sized>(per_example: &[Vec<f64>], clip: f64, sigma: f64, rng: &mut R) -> Vec<f64> {
    assert!(clip > 0.0, "clip norm must be positive");
    let dim = per_example.first().map_or(0, Vec::len);
    let mut sum = vec![0.0; dim];
    for g in per_example {
        let norm = dot(g, g).sqrt();
        axpy(clip_factor(norm, clip), g, &mut sum);
    }
    privatize_sum(&sum, per_example.len().max(1), clip, sigma, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Adam settings plus the clipping and noise of the DP-SGD mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpOptimizerConfig {
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// Bias-corrected adaptive-moment update, in place.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grad.len() || state.m.len() != params.len() {
        return Err(Error::Dimension {
            expected: params.len(),
            got: grad.len().min(state.m.len()),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Standard Gumbel noise `-ln(-ln U)`.
pub fn gumbel_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| -(-open_unit(rng).ln()).ln()).collect()
}

/// `softmax((logits + noise) / tau)`.
pub fn tempered_softmax(logits: &[f64], noise: &[f64], tau: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().zip(noise).map(|(l, g)| (l + g) / tau).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

pub fn gumbel_softmax<R: Rng + ?Sized>(logits: &[f64], tau: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let noise = gumbel_noise(logits.len(), rng);
    Ok(tempered_softmax(logits, &noise, tau))
}

/// Gradient with respect to the logits, given the block output `probs` and
/// `upstream = dL/dprobs`, at fixed noise.
pub fn gumbel_softmax_backward(probs: &[f64], upstream: &[f64], tau: f64) -> Vec<f64> {
    let inner = dot(probs, upstream);
    probs
        .iter()
        .zip(upstream)
        .map(|(p, u)| p * (u - inner) / tau)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn spec(out: usize, act: Activation) -> LayerSpec {
        LayerSpec {
            output: out,
            activation: act,
            dropout: 0.0,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = Mlp::zeros(3, &[spec(3, Activation::Identity)]).unwrap();
        for i in 0..3 {
            let k = net.weight_index(0, i, i);
            net.params_mut()[k] = 1.0;
        }
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.5], vec![0.0, 4.0, -1.0]]);
        assert_eq!(predict(&net, &x).unwrap(), x);
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let mut rng = seeded(1);
        let net = Mlp::new(
            4,
            &[
                LayerSpec {
                    output: 8,
                    activation: Activation::LEAKY,
                    dropout: 0.5,
                },
                spec(2, Activation::Identity),
            ],
            &mut rng,
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2, 0.3, 0.4]]);
        let a = forward(&net, &x, Mode::Eval, &mut seeded(5)).unwrap();
        let b = forward(&net, &x, Mode::Eval, &mut seeded(6)).unwrap();
        assert_eq!(a.output(), b.output());
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::zeros(3, &[spec(2, Activation::Identity)]).unwrap();
        let x = Matrix::zeros(1, 4);
        assert!(matches!(predict(&net, &x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn stale_cache_detected() {
        let mut rng = seeded(2);
        let mut net = Mlp::new(2, &[spec(2, Activation::Identity)], &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]);
        let acts = forward(&net, &x, Mode::Train, &mut rng).unwrap();
        net.params_mut()[0] += 1.0;
        let g = Matrix::from_rows(&[vec![1.0, 1.0]]);
        assert!(matches!(
            backward_per_example(&net, &acts, &g),
            Err(Error::StaleActivations { .. })
        ));
    }

    #[test]
    fn zero_loss_gradient_gives_zero_gradients() {
        let mut rng = seeded(3);
        let net = Mlp::new(3, &[spec(5, Activation::LEAKY), spec(1, Activation::Sigmoid)], &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]]);
        let acts = forward(&net, &x, Mode::Train, &mut rng).unwrap();
        let g = backward_per_example(&net, &acts, &Matrix::zeros(2, 1)).unwrap();
        assert!(g.grads.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn clipping_single_large_gradient() {
        let g = vec![vec![6.0, 8.0]];
        let out = clip_noise_aggregate(&g, 1.0, 0.0, &mut seeded(0));
        assert!((dot(&out, &out).sqrt() - 1.0).abs() < 1e-15);
        let small = vec![vec![0.3, 0.4]];
        assert_eq!(clip_noise_aggregate(&small, 1.0, 0.0, &mut seeded(0)), small[0]);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = vec![1.0, -2.0, 3.0];
        let before = p.clone();
        let mut st = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_is_sign_times_rate() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.0; 4];
        let g = [3.0, -0.01, 250.0, -7.0];
        let mut st = AdamState::new(4);
        adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            assert_eq!(pi.signum(), -gi.signum());
            assert!((pi.abs() - cfg.learning_rate).abs() < 1e-8);
        }
    }

    #[test]
    fn gumbel_softmax_rejects_non_positive_temperature() {
        assert!(gumbel_softmax(&[0.0, 1.0], 0.0, &mut seeded(0)).is_err());
    }

    #[test]
    fn gumbel_block_sums_to_one() {
        let mut rng = seeded(9);
        for _ in 0..100 {
            let p = gumbel_softmax(&[0.3, -1.0, 2.0, 0.0], 0.5, &mut rng).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }
}
