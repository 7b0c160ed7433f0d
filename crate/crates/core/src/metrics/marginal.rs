//! One-way marginal similarity with a randomization null.
//!
//! Real-valued columns use the 1-Wasserstein distance between empirical
//! distributions; nominal columns use total-variation distance. Either way
//! the pooled sample is repeatedly split at random into two parts of the
//! original sizes and the observed distance is divided by the median of
//! the resulting null distances.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tabular::{ColumnData, Dataset};

/// 1-Wasserstein distance between two empirical distributions, computed as
/// the integral of `|F_a - F_b|` over the merged sorted support.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("wasserstein distance needs two non-empty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

/// Total-variation distance between the level frequencies of two samples.
pub fn total_variation(a: &[u32], b: &[u32], levels: u32) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("total variation needs two non-empty samples".into()));
    }
    let ca = level_counts(a, levels);
    let cb = level_counts(b, levels);
    Ok(tv_from_counts(&ca, a.len(), &cb, b.len()))
}

fn level_counts(v: &[u32], levels: u32) -> Vec<usize> {
    let mut c = vec![0usize; levels.max(1) as usize];
    for &x in v {
        let k = (x as usize).min(c.len() - 1);
        c[k] += 1;
    }
    c
}

fn tv_from_counts(ca: &[usize], na: usize, cb: &[usize], nb: usize) -> f64 {
    0.5 * ca
        .iter()
        .zip(cb)
        .map(|(&x, &y)| (x as f64 / na as f64 - y as f64 / nb as f64).abs())
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioScore {
    pub distance: f64,
    pub null_median: f64,
    pub ratio: f64,
}

fn median(v: &mut [f64]) -> f64 {
    let n = v.len();
    v.sort_by(f64::total_cmp);
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn finish(distance: f64, mut null: Vec<f64>, degenerate: bool) -> Result<RatioScore> {
    if degenerate {
        return if distance == 0.0 {
            Ok(RatioScore {
                distance,
                null_median: 0.0,
                ratio: 0.0,
            })
        } else {
            Err(Error::DegenerateNull("pooled sample is constant".into()))
        };
    }
    let null_median = median(&mut null);
    if null_median == 0.0 {
        if distance == 0.0 {
            return Ok(RatioScore {
                distance,
                null_median,
                ratio: 0.0,
            });
        }
        return Err(Error::DegenerateNull("null median is zero".into()));
    }
    Ok(RatioScore {
        distance,
        null_median,
        ratio: distance / null_median,
    })
}

/// Moves a uniformly random subset of size `k` to the front of `perm`.
fn partial_shuffle<R: Rng + ?Sized>(perm: &mut [usize], k: usize, rng: &mut R) {
    let n = perm.len();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        perm.swap(i, j);
    }
}

/// Wasserstein ratio score of `synth` against `real` with `iters` random splits.
pub fn wasserstein_ratio<R: Rng + ?Sized>(real: &[f64], synth: &[f64], iters: usize, rng: &mut R) -> Result<RatioScore> {
    if iters == 0 {
        return Err(Error::InvalidArgument("null iterations must be at least 1".into()));
    }
    let distance = wasserstein_1d(real, synth)?;
    let mut pooled: Vec<f64> = real.iter().chain(synth).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let n = pooled.len();
    let degenerate = pooled[0] == pooled[n - 1];
    if degenerate {
        return finish(distance, Vec::new(), true);
    }
    let gaps: Vec<f64> = pooled.windows(2).map(|w| w[1] - w[0]).collect();
    let (na, nb) = (real.len(), synth.len());
    let (fa, fb) = (1.0 / na as f64, 1.0 / nb as f64);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut in_a = vec![false; n];
    let mut null = Vec::with_capacity(iters);
    for _ in 0..iters {
        partial_shuffle(&mut perm, na, rng);
        in_a.iter_mut().for_each(|x| *x = false);
        for &p in &perm[..na] {
            in_a[p] = true;
        }
        let (mut ca, mut cb) = (0usize, 0usize);
        let mut d = 0.0;
        for (k, &gap) in gaps.iter().enumerate() {
            if in_a[k] {
                ca += 1;
            } else {
                cb += 1;
            }
            d += (ca as f64 * fa - cb as f64 * fb).abs() * gap;
        }
        null.push(d);
    }
    finish(distance, null, false)
}

/// Total-variation ratio score for a nominal column.
pub fn tv_ratio<R: Rng + ?Sized>(real: &[u32], synth: &[u32], levels: u32, iters: usize, rng: &mut R) -> Result<RatioScore> {
    if iters == 0 {
        return Err(Error::InvalidArgument("null iterations must be at least 1".into()));
    }
    let distance = total_variation(real, synth, levels)?;
    let pooled: Vec<u32> = real.iter().chain(synth).copied().collect();
    let total = level_counts(&pooled, levels);
    let degenerate = total.iter().filter(|&&c| c > 0).count() <= 1;
    if degenerate {
        return finish(distance, Vec::new(), true);
    }
    let (na, nb) = (real.len(), synth.len());
    let mut perm: Vec<usize> = (0..pooled.len()).collect();
    let mut null = Vec::with_capacity(iters);
    let mut ca = vec![0usize; total.len()];
    for _ in 0..iters {
        partial_shuffle(&mut perm, na, rng);
        ca.iter_mut().for_each(|x| *x = 0);
        for &p in &perm[..na] {
            ca[(pooled[p] as usize).min(total.len() - 1)] += 1;
        }
        let cb: Vec<usize> = total.iter().zip(&ca).map(|(t, a)| t - a).collect();
        null.push(tv_from_counts(&ca, na, &cb, nb));
    }
    finish(distance, null, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceKind {
    Wasserstein,
    TotalVariation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRatio {
    pub column: String,
    pub kind: DistanceKind,
    pub score: RatioScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinReport {
    pub columns: Vec<ColumnRatio>,
    pub mean_ratio: f64,
}

/// Per-column ratio scores over every schema column. Each column's null
/// loop draws from its own stream derived from `seed` and the column index.
pub fn marginal_report(real: &Dataset, synth: &Dataset, iters: usize, seed: u64) -> Result<WassersteinReport> {
    if real.schema() != synth.schema() {
        return Err(Error::SchemaMismatch("marginal comparison needs a shared schema".into()));
    }
    let mut columns = Vec::with_capacity(real.schema().n_columns());
    for (ci, col) in real.schema().columns().iter().enumerate() {
        let mut r = rng::seeded(rng::derive(seed, &[ci as u64]));
        let (kind, score) = match (real.column(ci), synth.column(ci)) {
            (ColumnData::Level(a), ColumnData::Level(b)) => {
                let levels = col.kind.levels().unwrap_or(1);
                (DistanceKind::TotalVariation, tv_ratio(a, b, levels, iters, &mut r)?)
            }
            (a, b) => (
                DistanceKind::Wasserstein,
                wasserstein_ratio(&a.to_f64(), &b.to_f64(), iters, &mut r)?,
            ),
        };
        columns.push(ColumnRatio {
            column: col.name.clone(),
            kind,
            score,
        });
    }
    let mean_ratio = columns.iter().map(|c| c.score.ratio).sum::<f64>() / columns.len().max(1) as f64;
    Ok(WassersteinReport { columns, mean_ratio })
}
