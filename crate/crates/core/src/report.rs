//! Radar chart of the nine scores.
//!
//! Each axis maps a score's distance from its ideal to a radius: 1 at the
//! ideal, 0 at 110% of the anchor run's distance or beyond.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::{NineScores, ScoresFile};
use crate::error::{Error, Result};

/// Worst deviation as a multiple of the anchor's deviation.
pub const ANCHOR_MARGIN: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ideals {
    pub values: [f64; 9],
}

impl Ideals {
    /// Ratio scores: Wasserstein 0 and pMSE 1; coverage at the nominal
    /// level; biases 0; covariance ratio 1; RMSE at the noise floor.
    pub fn new(coverage_level: f64, noise_sd: f64) -> Self {
        Self {
            values: [0.0, 1.0, 0.0, 1.0, coverage_level, 0.0, noise_sd, 1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarAxis {
    pub label: String,
    pub ideal: f64,
    pub worst: f64,
    pub observed: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarSpec {
    pub title: String,
    pub axes: Vec<RadarAxis>,
}

/// `1 - clamp(deviation / worst_deviation, 0, 1)`. A zero worst deviation
/// gives 1 at the ideal and 0 elsewhere.
pub fn radius(observed: f64, ideal: f64, worst: f64) -> f64 {
    let dev = (observed - ideal).abs();
    let worst_dev = (worst - ideal).abs();
    if worst_dev == 0.0 {
        return if dev == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - (dev / worst_dev).clamp(0.0, 1.0)
}

/// With no baseline the scores anchor themselves.
pub fn normalize_scores(scores: &NineScores, baseline: Option<&NineScores>, ideals: &Ideals, title: &str) -> Result<RadarSpec> {
    let obs = scores.values();
    let base = baseline.unwrap_or(scores).values();
    if let Some(i) = obs.iter().chain(&base).position(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "score {} is not finite",
            NineScores::KEYS[i % 9]
        )));
    }
    let axes = (0..9)
        .map(|j| {
            let ideal = ideals.values[j];
            let worst = ideal + ANCHOR_MARGIN * (base[j] - ideal);
            RadarAxis {
                label: NineScores::LABELS[j].to_string(),
                ideal,
                worst,
                observed: obs[j],
                radius: radius(obs[j], ideal, worst),
            }
        })
        .collect();
    Ok(RadarSpec {
        title: title.to_string(),
        axes,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const SIZE: f64 = 720.0;
const CENTER: f64 = SIZE / 2.0;
const OUTER: f64 = 220.0;

fn point(k: usize, n: usize, r: f64) -> (f64, f64) {
    let angle = -std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * k as f64 / n as f64;
    (CENTER + r * angle.cos(), CENTER + r * angle.sin())
}

fn polygon(n: usize, radii: impl Fn(usize) -> f64) -> String {
    (0..n)
        .map(|k| {
            let (x, y) = point(k, n, OUTER * radii(k));
            format!("{x:.2},{y:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_radar(spec: &RadarSpec) -> Result<String> {
    let n = spec.axes.len();
    if n != 9 {
        return Err(Error::Dimension { expected: 9, got: n });
    }
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r#"<text x="{CENTER}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        escape(&spec.title)
    );
    for ring in [0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="none" stroke="#c8c8c8" stroke-width="1"/>"##,
            polygon(n, |_| ring)
        );
    }
    for (k, axis) in spec.axes.iter().enumerate() {
        let (x, y) = point(k, n, OUTER);
        let _ = writeln!(
            s,
            r##"<line x1="{CENTER}" y1="{CENTER}" x2="{x:.2}" y2="{y:.2}" stroke="#c8c8c8" stroke-width="1"/>"##
        );
        let (lx, ly) = point(k, n, OUTER + 28.0);
        let anchor = if (lx - CENTER).abs() < 1.0 {
            "middle"
        } else if lx > CENTER {
            "start"
        } else {
            "end"
        };
        let _ = writeln!(
            s,
            r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="{anchor}" dominant-baseline="middle">{}</text>"#,
            escape(&axis.label)
        );
        let _ = writeln!(
            s,
            r##"<text x="{lx:.2}" y="{:.2}" text-anchor="{anchor}" dominant-baseline="middle" fill="#666666">{}</text>"##,
            ly + 15.0,
            format_value(axis.observed)
        );
    }
    let _ = writeln!(
        s,
        r##"<polygon points="{}" fill="#2b6cb0" fill-opacity="0.35" stroke="#2b6cb0" stroke-width="2"/>"##,
        polygon(n, |k| spec.axes[k].radius)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn format_value(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub fn write_radar(spec: &RadarSpec, path: &Path) -> Result<()> {
    fs::write(path, render_radar(spec)?).map_err(|e| Error::io(path, e))
}

/// Every file `report` writes, as `(name, contents)`: one radar per
/// discipline (the first is `radar.svg`) and the score table.
pub fn report_files(file: &ScoresFile, anchor: Option<&NineScores>) -> Result<Vec<(String, String)>> {
    let ideals = Ideals::new(file.plan.coverage_level, crate::dgp::true_params().noise_sd);
    let mut out = Vec::with_capacity(file.disciplines.len() + 1);
    for (i, d) in file.disciplines.iter().enumerate() {
        let title = format!(
            "{}: n_train {}, epsilon {}",
            d.synthesizer, d.discipline.n_train, d.discipline.epsilon
        );
        let spec = normalize_scores(&d.scores, anchor, &ideals, &title)?;
        let name = if i == 0 {
            "radar.svg".to_string()
        } else {
            format!("radar_{}_{}.svg", d.discipline.n_train, d.discipline.epsilon)
        };
        out.push((name, render_radar(&spec)?));
    }
    out.push(("scores_table.csv".to_string(), scores_table(file)));
    Ok(out)
}

/// `n_train,epsilon,delta,score,flat_mean,hierarchical_mean` rows.
pub fn scores_table(file: &ScoresFile) -> String {
    let mut out = String::from("n_train,epsilon,delta,score,flat_mean,hierarchical_mean\n");
    for d in &file.disciplines {
        for ((k, a), b) in NineScores::KEYS.iter().zip(d.scores.values()).zip(d.hierarchical.values()) {
            let _ = writeln!(
                out,
                "{},{},{},{k},{a},{b}",
                d.discipline.n_train, d.discipline.epsilon, d.discipline.delta
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideals() -> Ideals {
        Ideals::new(0.9, 20.0)
    }

    #[test]
    fn ideal_scores_fill_the_chart() {
        let s = NineScores::from_values(ideals().values);
        let spec = normalize_scores(&s, None, &ideals(), "t").unwrap();
        assert!(spec.axes.iter().all(|a| a.radius == 1.0));
    }

    #[test]
    fn self_anchor_sits_near_center() {
        let s = NineScores::from_values([10.0, 3522.96, 10.2, 3505.0, 0.89, 119.9, 9.39, 7.72, 115.5]);
        let spec = normalize_scores(&s, None, &ideals(), "t").unwrap();
        for a in &spec.axes {
            assert!((a.radius - (1.0 - 1.0 / 1.1)).abs() < 1e-12, "{a:?}");
        }
    }

    #[test]
    fn halfway_is_half() {
        assert!((radius(5.0, 0.0, 10.0) - 0.5).abs() < 1e-15);
        assert!((radius(15.0, 20.0, 10.0) - 0.5).abs() < 1e-15);
        assert_eq!(radius(50.0, 0.0, 10.0), 0.0);
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = NineScores::from_values([1.0; 9]);
        let spec = normalize_scores(&s, None, &ideals(), "a & b").unwrap();
        let a = render_radar(&spec).unwrap();
        assert_eq!(a, render_radar(&spec).unwrap());
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("a &amp; b"));
        assert_eq!(a.matches("<polygon").count(), 5);
    }

    #[test]
    fn non_finite_rejected() {
        let mut v = [1.0; 9];
        v[3] = f64::NAN;
        assert!(normalize_scores(&NineScores::from_values(v), None, &ideals(), "t").is_err());
    }
}
