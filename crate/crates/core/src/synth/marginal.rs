//! Independent noisy histograms, one per modeled object.
//!
//! An object is either a single column or a group of categorical columns
//! linked by structural-zero rules, which get one joint histogram. Each row
//! lands in exactly one cell of every histogram, so with the budget split
//! evenly across `k` objects each count gets Laplace noise of scale `k / ε`.
//!
//! Bin edges for real-valued columns come from the training min/max, which
//! is not privatized.

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::accountant::PrivacyBudget;
use crate::error::{Error, Result};
use crate::rng;
use crate::tabular::{ColumnData, ColumnKind, Dataset, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarginalConfig {
    pub bins: usize,
    /// Model columns tied by a structural-zero rule as one joint histogram.
    pub joint_zero_rules: bool,
}

impl Default for MarginalConfig {
    fn default() -> Self {
        Self {
            bins: 32,
            joint_zero_rules: true,
        }
    }
}

/// Laplace draw with the given scale.
pub fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u = rng::open_unit(rng) - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "object")]
pub enum Histogram {
    /// Equal-width bins over `[lo, lo + width * probs.len()]`.
    Binned {
        column: usize,
        lo: f64,
        width: f64,
        probs: Vec<f64>,
    },
    Levels {
        column: usize,
        probs: Vec<f64>,
    },
    /// Cells in row-major order over `levels`, first column slowest.
    Joint {
        columns: Vec<usize>,
        levels: Vec<u32>,
        probs: Vec<f64>,
    },
}

impl Histogram {
    pub fn probs(&self) -> &[f64] {
        match self {
            Histogram::Binned { probs, .. } | Histogram::Levels { probs, .. } | Histogram::Joint { probs, .. } => probs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    schema: Schema,
    pub budget: PrivacyBudget,
    pub histograms: Vec<Histogram>,
}

/// Groups of column indices, singletons unless joined by rules.
fn modeled_objects(schema: &Schema, joint: bool) -> Vec<Vec<usize>> {
    let n = schema.n_columns();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    if joint {
        for r in schema.zero_rules() {
            let (a, b) = (find(&mut parent, r.guard_column), find(&mut parent, r.forced_column));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_group = vec![usize::MAX; n];
    for c in 0..n {
        let r = find(&mut parent, c);
        if root_group[r] == usize::MAX {
            root_group[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_group[r]].push(c);
    }
    groups
}

fn noisy_probs<R: Rng + ?Sized>(counts: &[f64], scale: f64, forced_zero: &[bool], rng: &mut R) -> Vec<f64> {
    let noisy: Vec<f64> = counts
        .iter()
        .zip(forced_zero)
        .map(|(&c, &z)| {
            // noise is drawn for every cell so the stream does not depend on the rules
            let v = (c + laplace(scale, rng)).max(0.0);
            if z {
                0.0
            } else {
                v
            }
        })
        .collect();
    let total: f64 = noisy.iter().sum();
    if total > 0.0 {
        noisy.iter().map(|v| v / total).collect()
    } else {
        let open = forced_zero.iter().filter(|z| !**z).count().max(1) as f64;
        forced_zero.iter().map(|&z| if z { 0.0 } else { 1.0 / open }).collect()
    }
}

impl MarginalModel {
    pub fn fit(cfg: &MarginalConfig, budget: PrivacyBudget, train: &Dataset, seed: u64) -> Result<Self> {
        if cfg.bins == 0 {
            return Err(Error::InvalidArgument("bin count must be positive".into()));
        }
        let schema = train.schema().clone();
        let objects = modeled_objects(&schema, cfg.joint_zero_rules);
        let scale = objects.len() as f64 / budget.epsilon;
        let mut r = rng::seeded(seed);
        let mut histograms = Vec::with_capacity(objects.len());
        for group in objects {
            let h = if group.len() == 1 {
                let c = group[0];
                match schema.column(c).kind {
                    ColumnKind::Categorical { levels } => {
                        let mut counts = vec![0.0; levels as usize];
                        if let ColumnData::Level(v) = train.column(c) {
                            for &x in v {
                                counts[x as usize] += 1.0;
                            }
                        }
                        let free = vec![false; counts.len()];
                        Histogram::Levels {
                            column: c,
                            probs: noisy_probs(&counts, scale, &free, &mut r),
                        }
                    }
                    ColumnKind::Continuous | ColumnKind::Count => {
                        let v = train.column_f64(c);
                        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let width = (hi - lo) / cfg.bins as f64;
                        let mut counts = vec![0.0; cfg.bins];
                        for x in v {
                            let k = if width > 0.0 { ((x - lo) / width) as usize } else { 0 };
                            counts[k.min(cfg.bins - 1)] += 1.0;
                        }
                        let free = vec![false; cfg.bins];
                        Histogram::Binned {
                            column: c,
                            lo,
                            width,
                            probs: noisy_probs(&counts, scale, &free, &mut r),
                        }
                    }
                }
            } else {
                let levels: Vec<u32> = group
                    .iter()
                    .map(|&c| {
                        schema.column(c).kind.levels().ok_or_else(|| {
                            Error::Schema(format!("column {} in a zero rule is not categorical", schema.column(c).name))
                        })
                    })
                    .collect::<Result<_>>()?;
                let cells: usize = levels.iter().map(|&l| l as usize).product();
                let mut counts = vec![0.0; cells];
                for row in 0..train.n_rows() {
                    let values: Vec<u32> = group.iter().map(|&c| train.value(row, c) as u32).collect();
                    counts[cell_index(&values, &levels)] += 1.0;
                }
                let forced: Vec<bool> = (0..cells)
                    .map(|cell| {
                        let values = cell_values(cell, &levels);
                        schema.zero_rules().iter().any(|rule| {
                            match (
                                group.iter().position(|&c| c == rule.guard_column),
                                group.iter().position(|&c| c == rule.forced_column),
                            ) {
                                (Some(g), Some(f)) => rule.is_violated(values[g], values[f]),
                                _ => false,
                            }
                        })
                    })
                    .collect();
                Histogram::Joint {
                    columns: group,
                    probs: noisy_probs(&counts, scale, &forced, &mut r),
                    levels,
                }
            };
            histograms.push(h);
        }
        Ok(Self {
            schema,
            budget,
            histograms,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        let mut columns: Vec<Option<ColumnData>> = vec![None; self.schema.n_columns()];
        for h in &self.histograms {
            let dist = WeightedIndex::new(h.probs())
                .map_err(|e| Error::InvalidArgument(format!("histogram has no mass: {e}")))?;
            match h {
                Histogram::Levels { column, .. } => {
                    columns[*column] = Some(ColumnData::Level((0..n).map(|_| dist.sample(rng) as u32).collect()));
                }
                Histogram::Binned { column, lo, width, .. } => {
                    let values = (0..n).map(|_| {
                        let k = dist.sample(rng) as f64;
                        lo + width * (k + rng.gen::<f64>())
                    });
                    columns[*column] = Some(match self.schema.column(*column).kind {
                        ColumnKind::Count => ColumnData::Count(values.map(|x| x.round().max(0.0) as u64).collect()),
                        _ => ColumnData::Real(values.collect()),
                    });
                }
                Histogram::Joint { columns: cols, levels, .. } => {
                    let mut out = vec![Vec::with_capacity(n); cols.len()];
                    for _ in 0..n {
                        for (o, v) in out.iter_mut().zip(cell_values(dist.sample(rng), levels)) {
                            o.push(v);
                        }
                    }
                    for (&c, v) in cols.iter().zip(out) {
                        columns[c] = Some(ColumnData::Level(v));
                    }
                }
            }
        }
        let columns = columns
            .into_iter()
            .map(|c| c.expect("every column belongs to one histogram"))
            .collect();
        Dataset::new(self.schema.clone(), columns)
    }
}

fn cell_index(values: &[u32], levels: &[u32]) -> usize {
    values
        .iter()
        .zip(levels)
        .fold(0usize, |acc, (&v, &l)| acc * l as usize + v as usize)
}

fn cell_values(mut cell: usize, levels: &[u32]) -> Vec<u32> {
    let mut out = vec![0u32; levels.len()];
    for (o, &l) in out.iter_mut().zip(levels).rev() {
        *o = (cell % l as usize) as u32;
        cell /= l as usize;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{generate_scenario1, scenario1_schema};
    use crate::metrics::total_variation;
    use crate::rng::seeded;

    #[test]
    fn laplace_moments() {
        let mut r = seeded(11);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| laplace(2.0, &mut r)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let mad = xs.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "{mean}");
        assert!((mad - 2.0).abs() < 0.03, "{mad}");
    }

    #[test]
    fn objects_join_rule_columns() {
        let s = scenario1_schema();
        let groups = modeled_objects(&s, true);
        assert_eq!(groups.len(), 8);
        assert!(groups.contains(&vec![6, 7]));
        assert_eq!(modeled_objects(&s, false).len(), 9);
    }

    #[test]
    fn cell_codec_round_trips() {
        let levels = [2, 3, 4];
        for cell in 0..24 {
            assert_eq!(cell_index(&cell_values(cell, &levels), &levels), cell);
        }
    }

    #[test]
    fn huge_epsilon_reproduces_categorical_marginals() {
        let d = generate_scenario1(5000, 8);
        let b = PrivacyBudget::new(1e6, 1e-5).unwrap();
        let m = MarginalModel::fit(&MarginalConfig::default(), b, &d, 1).unwrap();
        let s = m.sample(200_000, &mut seeded(2)).unwrap();
        for c in [2, 4, 6, 7] {
            let (ColumnData::Level(a), ColumnData::Level(x)) = (d.column(c), s.column(c)) else {
                panic!()
            };
            let levels = d.schema().column(c).kind.levels().unwrap();
            assert!(total_variation(a, x, levels).unwrap() < 0.01);
        }
    }

    #[test]
    fn joint_histogram_has_no_forbidden_mass() {
        let d = generate_scenario1(2000, 8);
        let b = PrivacyBudget::new(0.1, 1e-5).unwrap();
        let m = MarginalModel::fit(&MarginalConfig::default(), b, &d, 3).unwrap();
        let joint = m
            .histograms
            .iter()
            .find_map(|h| match h {
                Histogram::Joint { probs, .. } => Some(probs.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(joint[1], 0.0);
        assert!((joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_negative_noise_falls_back_to_uniform() {
        let p = noisy_probs(&[0.0, 0.0, 0.0], 0.0, &[false, true, false], &mut seeded(0));
        assert_eq!(p, vec![0.5, 0.0, 0.5]);
    }
}
