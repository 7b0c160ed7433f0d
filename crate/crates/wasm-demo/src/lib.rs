//! Browser bindings for three small pieces of the benchmark: the privacy
//! accountant, the Wasserstein ratio score and the radar chart.
//!
//! Each export is a thin wrapper over a plain function in [`ops`] so the
//! logic can be tested natively.

use wasm_bindgen::prelude::*;

pub mod ops {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use serde_json::json;
    use synthbench::accountant::{calibrate_sigma, to_epsilon, AccountantState, PrivacyBudget};
    use synthbench::bench::NineScores;
    use synthbench::dgp::{generate_scenario1, Scenario1Params};
    use synthbench::metrics::wasserstein_ratio;
    use synthbench::report::{normalize_scores, render_radar, Ideals};

    pub type Result<T> = std::result::Result<T, String>;

    fn err(e: impl std::fmt::Display) -> String {
        e.to_string()
    }

    /// Epsilon after every `stride` steps up to `steps`, as JSON
    /// `{"points": [[step, epsilon], ...], "epsilon": final}`.
    pub fn epsilon_curve(q: f64, sigma: f64, steps: u32, delta: f64) -> Result<String> {
        if steps == 0 {
            return Err("steps must be at least 1".into());
        }
        let base = AccountantState::fresh(q, sigma).map_err(err)?;
        let stride = (steps / 60).max(1);
        let mut points = Vec::new();
        let mut t = stride;
        loop {
            let t_eff = t.min(steps);
            let e = to_epsilon(&base.compose(t_eff as u64), delta).map_err(err)?;
            points.push([t_eff as f64, e.epsilon]);
            if t_eff == steps {
                break;
            }
            t += stride;
        }
        let last = points.last().map(|p| p[1]).unwrap_or(f64::NAN);
        Ok(json!({ "points": points, "epsilon": last }).to_string())
    }

    pub fn calibrate(q: f64, steps: u32, epsilon: f64, delta: f64) -> Result<f64> {
        let budget = PrivacyBudget::new(epsilon, delta).map_err(err)?;
        calibrate_sigma(budget, q, steps as u64).map_err(err)
    }

    /// Scores a shifted and scaled copy of `x1` from an independent draw
    /// against the real `x1`.
    pub fn wasserstein_demo(n: u32, seed: u32, shift: f64, scale: f64, iters: u32) -> Result<String> {
        if n < 2 {
            return Err("n must be at least 2".into());
        }
        let n = n as usize;
        let real = generate_scenario1(n, seed as u64).column_f64(0);
        let mean = Scenario1Params::default().x1_mean;
        let synth: Vec<f64> = generate_scenario1(n, seed as u64 ^ 0x9e37_79b9)
            .column_f64(0)
            .into_iter()
            .map(|x| mean + scale * (x - mean) + shift)
            .collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed as u64);
        let r = wasserstein_ratio(&real, &synth, iters as usize, &mut rng).map_err(err)?;
        Ok(json!({
            "distance": r.distance,
            "null_median": r.null_median,
            "ratio": r.ratio,
            "real": real,
            "synth": synth,
        })
        .to_string())
    }

    fn parse_scores(text: &str) -> Result<NineScores> {
        let v: Vec<f64> = text
            .split([',', ' ', '\n', '\t'])
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: {s}")))
            .collect::<Result<_>>()?;
        let arr: [f64; 9] = v
            .try_into()
            .map_err(|v: Vec<f64>| format!("expected 9 scores, got {}", v.len()))?;
        Ok(NineScores::from_values(arr))
    }

    /// Radar SVG from nine comma-separated scores, anchored to `baseline`
    /// when it is non-empty.
    pub fn radar(scores: &str, baseline: &str, coverage_level: f64, noise_sd: f64) -> Result<String> {
        let s = parse_scores(scores)?;
        let b = if baseline.trim().is_empty() {
            None
        } else {
            Some(parse_scores(baseline)?)
        };
        let spec = normalize_scores(&s, b.as_ref(), &Ideals::new(coverage_level, noise_sd), "Benchmark scores")
            .map_err(err)?;
        render_radar(&spec).map_err(err)
    }
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen(js_name = epsilonCurve)]
pub fn epsilon_curve(q: f64, sigma: f64, steps: u32, delta: f64) -> Result<String, JsError> {
    ops::epsilon_curve(q, sigma, steps, delta).map_err(js)
}

#[wasm_bindgen]
pub fn calibrate(q: f64, steps: u32, epsilon: f64, delta: f64) -> Result<f64, JsError> {
    ops::calibrate(q, steps, epsilon, delta).map_err(js)
}

#[wasm_bindgen(js_name = wassersteinDemo)]
pub fn wasserstein_demo(n: u32, seed: u32, shift: f64, scale: f64, iters: u32) -> Result<String, JsError> {
    ops::wasserstein_demo(n, seed, shift, scale, iters).map_err(js)
}

#[wasm_bindgen]
pub fn radar(scores: &str, baseline: &str, coverage_level: f64, noise_sd: f64) -> Result<String, JsError> {
    ops::radar(scores, baseline, coverage_level, noise_sd).map_err(js)
}
