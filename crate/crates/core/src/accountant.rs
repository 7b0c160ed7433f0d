//! Rényi-DP accounting for the Poisson-subsampled Gaussian mechanism.
//!
//! For sampling rate `q` and noise multiplier `sigma`, one step has RDP
//! `log(A_alpha) / (alpha - 1)` at order `alpha`, where
//!
//! ```text
//! A_alpha = E_{z ~ N(0, sigma^2)} [ ((1 - q) + q * exp((2z - 1) / (2 sigma^2)))^alpha ]
//! ```
//!
//! Integer orders use the binomial expansion of the integrand. Fractional
//! orders use the two-sided series split at the crossing point of the two
//! mixture components. Everything is summed in the log domain.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be non-negative, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    /// `delta = 1 / (2N)` for a training set of `n` records.
    pub fn for_training_size(epsilon: f64, n: usize) -> Result<Self> {
        Self::new(epsilon, 1.0 / (2.0 * n as f64))
    }
}

/// `{1.1, 1.2, ..., 10.0} ∪ {1.25, 1.5} ∪ {2, 3, ..., 64} ∪ {128, 256}`, ascending.
pub fn default_orders() -> Vec<f64> {
    let mut orders: Vec<f64> = (11..=100).map(|k| f64::from(k) / 10.0).collect();
    orders.extend([1.25, 1.5]);
    orders.extend((2..=64).map(f64::from));
    orders.extend([128.0, 256.0]);
    orders.sort_by(f64::total_cmp);
    orders.dedup();
    orders
}

fn check_args(q: f64, sigma: f64, alpha: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!("sampling rate must lie in (0, 1], got {q}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise multiplier must be positive, got {sigma}")));
    }
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("Rényi order must exceed 1, got {alpha}")));
    }
    Ok(())
}

/// RDP of one subsampled Gaussian step at order `alpha`.
pub fn rdp_step(q: f64, sigma: f64, alpha: f64) -> Result<f64> {
    check_args(q, sigma, alpha)?;
    if q == 1.0 {
        return Ok(alpha / (2.0 * sigma * sigma));
    }
    let log_a = if alpha.fract() == 0.0 {
        log_a_integer(q, sigma, alpha as u64)
    } else {
        log_a_fractional(q, sigma, alpha)
    };
    Ok(log_a / (alpha - 1.0))
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(exp(a) - exp(b))`, requires `a >= b`.
fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a <= b {
        return f64::NEG_INFINITY;
    }
    let d = b - a;
    // log(1 - e^d), accurate on both sides of d = -ln 2
    if d > -std::f64::consts::LN_2 {
        a + (-d.exp_m1()).ln()
    } else {
        a + (-d.exp()).ln_1p()
    }
}

fn log_binomial(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

fn log_a_integer(q: f64, sigma: f64, alpha: u64) -> f64 {
    let a = alpha as f64;
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let mut acc = f64::NEG_INFINITY;
    for k in 0..=alpha {
        let k = k as f64;
        let term = log_binomial(a, k) + k * lq + (a - k) * l1q + (k * k - k) / (2.0 * sigma * sigma);
        acc = log_add(acc, term);
    }
    acc
}

/// `ln(erfc(x))` without underflow for large `x`.
pub(crate) fn log_erfc(x: f64) -> f64 {
    if x < 20.0 {
        return erfc(x).ln();
    }
    let x2 = x * x;
    let inv = 1.0 / (2.0 * x2);
    // asymptotic series 1 - 1/(2x^2) + 3/(2x^2)^2 - 15/(2x^2)^3
    let series = 1.0 - inv + 3.0 * inv * inv - 15.0 * inv * inv * inv;
    -x2 - (x * std::f64::consts::PI.sqrt()).ln() + series.ln()
}

fn log_a_fractional(q: f64, sigma: f64, alpha: f64) -> f64 {
    let (mut log_a0, mut log_a1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let z0 = sigma * sigma * (1.0 / q - 1.0).ln() + 0.5;
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let s2 = std::f64::consts::SQRT_2 * sigma;
    let two_s2 = 2.0 * sigma * sigma;

    // generalized binomial coefficient C(alpha, i), tracked as sign and log-magnitude
    let mut log_coef = 0.0;
    let mut coef_positive = true;
    let mut i = 0u64;
    loop {
        let fi = i as f64;
        let j = alpha - fi;
        let log_t0 = log_coef + fi * lq + j * l1q;
        let log_t1 = log_coef + j * lq + fi * l1q;
        let log_e0 = 0.5f64.ln() + log_erfc((fi - z0) / s2);
        let log_e1 = 0.5f64.ln() + log_erfc((z0 - j) / s2);
        let log_s0 = log_t0 + (fi * fi - fi) / two_s2 + log_e0;
        let log_s1 = log_t1 + (j * j - j) / two_s2 + log_e1;
        if coef_positive {
            log_a0 = log_add(log_a0, log_s0);
            log_a1 = log_add(log_a1, log_s1);
        } else {
            log_a0 = log_sub(log_a0, log_s0);
            log_a1 = log_sub(log_a1, log_s1);
        }
        if log_s0.max(log_s1) < -30.0 || i > 100_000 {
            break;
        }
        // C(alpha, i+1) = C(alpha, i) * (alpha - i) / (i + 1)
        let ratio = (alpha - fi) / (fi + 1.0);
        if ratio < 0.0 {
            coef_positive = !coef_positive;
        }
        log_coef += ratio.abs().ln();
        i += 1;
    }
    log_add(log_a0, log_a1)
}

/// Cumulative RDP ledger for one training run.
///
/// The ledger is stored as per-step RDP times the step count, so
/// composition is exactly linear in the number of steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountantState {
    sampling_rate: f64,
    noise_multiplier: f64,
    steps: u64,
    orders: Vec<f64>,
    per_step: Vec<f64>,
}

impl AccountantState {
    pub fn fresh(sampling_rate: f64, noise_multiplier: f64) -> Result<Self> {
        Self::with_orders(sampling_rate, noise_multiplier, default_orders())
    }

    pub fn with_orders(sampling_rate: f64, noise_multiplier: f64, orders: Vec<f64>) -> Result<Self> {
        let per_step = orders
            .iter()
            .map(|&a| rdp_step(sampling_rate, noise_multiplier, a))
            .collect::<Result<Vec<_>>>()?;
        if orders.is_empty() {
            // still validate q and sigma
            check_args(sampling_rate, noise_multiplier, 2.0)?;
        }
        Ok(Self {
            sampling_rate,
            noise_multiplier,
            steps: 0,
            orders,
            per_step,
        })
    }

    pub fn sampling_rate(&self) -> f64 {
        self.sampling_rate
    }

    pub fn noise_multiplier(&self) -> f64 {
        self.noise_multiplier
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    /// Accumulated RDP per order.
    pub fn rdp(&self) -> Vec<f64> {
        let t = self.steps as f64;
        self.per_step.iter().map(|r| r * t).collect()
    }

    pub fn ledger(&self) -> Vec<(f64, f64)> {
        self.orders.iter().copied().zip(self.rdp()).collect()
    }

    pub fn compose(&self, steps: u64) -> Self {
        Self {
            steps: self.steps + steps,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub epsilon: f64,
    pub order: f64,
}

/// `epsilon = min_alpha [ rdp(alpha) + log(1/delta) / (alpha - 1) ]`.
pub fn epsilon_from_rdp(orders: &[f64], rdp: &[f64], delta: f64) -> Result<EpsilonReport> {
    if orders.is_empty() || orders.len() != rdp.len() {
        return Err(Error::Empty("RDP ledger has no orders".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    let log_inv_delta = -delta.ln();
    let mut best = EpsilonReport {
        epsilon: f64::INFINITY,
        order: orders[0],
    };
    for (&a, &r) in orders.iter().zip(rdp) {
        let eps = r + log_inv_delta / (a - 1.0);
        if eps < best.epsilon {
            best = EpsilonReport { epsilon: eps, order: a };
        }
    }
    Ok(best)
}

pub fn to_epsilon(state: &AccountantState, delta: f64) -> Result<EpsilonReport> {
    epsilon_from_rdp(&state.orders, &state.rdp(), delta)
}

pub const SIGMA_MIN: f64 = 0.3;
pub const SIGMA_MAX: f64 = 100.0;

fn epsilon_at(sigma: f64, q: f64, steps: u64, delta: f64) -> Result<f64> {
    let state = AccountantState::fresh(q, sigma)?.compose(steps);
    Ok(to_epsilon(&state, delta)?.epsilon)
}

/// Smallest noise multiplier in `[0.3, 100]` (to relative tolerance 1e-3)
/// whose accounted epsilon after `steps` steps does not exceed the target.
pub fn calibrate_sigma(target: PrivacyBudget, q: f64, steps: u64) -> Result<f64> {
    if !(target.epsilon > 0.0) {
        return Err(Error::InvalidArgument("target epsilon must be positive".into()));
    }
    if epsilon_at(SIGMA_MAX, q, steps, target.delta)? > target.epsilon {
        return Err(Error::BudgetUnreachable(format!(
            "epsilon {} at delta {} needs sigma above {SIGMA_MAX} for {steps} steps at q = {q}",
            target.epsilon, target.delta
        )));
    }
    if epsilon_at(SIGMA_MIN, q, steps, target.delta)? <= target.epsilon {
        return Ok(SIGMA_MIN);
    }
    let (mut lo, mut hi) = (SIGMA_MIN, SIGMA_MAX);
    while (hi - lo) / hi > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if epsilon_at(mid, q, steps, target.delta)? <= target.epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// CSV table of epsilon for every combination of the given settings.
pub fn epsilon_table(qs: &[f64], sigmas: &[f64], steps: &[u64], delta: f64) -> Result<String> {
    let mut out = String::from("q,sigma,steps,delta,epsilon,order\n");
    for &q in qs {
        for &s in sigmas {
            for &t in steps {
                let r = to_epsilon(&AccountantState::fresh(q, s)?.compose(t), delta)?;
                out.push_str(&format!("{q},{s},{t},{delta},{:.6},{}\n", r.epsilon, r.order));
            }
        }
    }
    Ok(out)
}
