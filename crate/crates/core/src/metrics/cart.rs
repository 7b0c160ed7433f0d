//! Binary-classification CART with Gini impurity.
//!
//! Continuous features split on midpoints between distinct values.
//! Categorical features split on level subsets: levels are ordered by their
//! positive rate in the node and only prefix partitions are scanned, which
//! is exact for binary labels under Gini.
//!
//! Split scores are computed from integer class counts, so the fitted tree
//! does not depend on row order. Ties go to the lowest column index, then
//! the smallest threshold (or the earliest prefix).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Continuous,
    Categorical { levels: u32 },
}

/// Column-major feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    kinds: Vec<FeatureKind>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Features {
    pub fn new(kinds: Vec<FeatureKind>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if kinds.len() != columns.len() {
            return Err(Error::Dimension {
                expected: kinds.len(),
                got: columns.len(),
            });
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        for (k, c) in kinds.iter().zip(&columns) {
            if c.len() != n_rows {
                return Err(Error::Dimension {
                    expected: n_rows,
                    got: c.len(),
                });
            }
            if let FeatureKind::Categorical { levels } = *k {
                if levels > 64 {
                    return Err(Error::InvalidArgument("categorical features support at most 64 levels".into()));
                }
                if c.iter().any(|&v| v < 0.0 || v >= f64::from(levels) || v.fract() != 0.0) {
                    return Err(Error::InvalidArgument("categorical feature value out of range".into()));
                }
            }
        }
        Ok(Self { kinds, columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Features {
        Features {
            kinds: self.kinds.clone(),
            columns: self.columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            n_rows: idx.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// A split must lower the tree's total Gini impurity by at least this
    /// fraction of the root impurity.
    pub complexity: f64,
}

impl Default for CartConfig {
    fn default() -> Self {
        Self {
            max_depth: 30,
            min_leaf: 5,
            complexity: 3e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Split {
    /// Rows with `value <= threshold` go left.
    Threshold { column: usize, threshold: f64 },
    /// Rows whose level bit is set in `left_levels` go left.
    Levels { column: usize, left_levels: u64 },
}

impl Split {
    pub fn column(&self) -> usize {
        match *self {
            Split::Threshold { column, .. } | Split::Levels { column, .. } => column,
        }
    }

    pub fn goes_left(&self, value: f64) -> bool {
        match *self {
            Split::Threshold { threshold, .. } => value <= threshold,
            Split::Levels { left_levels, .. } => {
                let l = value as u32;
                l < 64 && left_levels & (1u64 << l) != 0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { probability: f64, count: usize },
    Internal { split: Split, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartTree {
    nodes: Vec<Node>,
}

impl CartTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        fn go(t: &CartTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { probability, count } => Some((*probability, *count)),
            Node::Internal { .. } => None,
        })
    }

    fn leaf_for(&self, value_of: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { probability, .. } => return *probability,
                Node::Internal { split, left, right } => {
                    i = if split.goes_left(value_of(split.column())) { *left } else { *right };
                }
            }
        }
    }

    pub fn predict_all(&self, features: &Features) -> Vec<f64> {
        (0..features.n_rows())
            .map(|r| self.leaf_for(|c| features.value(r, c)))
            .collect()
    }
}

pub fn cart_predict(tree: &CartTree, row: &[f64]) -> f64 {
    tree.leaf_for(|c| row[c])
}

/// `n * gini` for a node with `pos` positives among `n` rows.
pub fn weighted_gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let (p, n) = (pos as f64, n as f64);
    2.0 * p * (n - p) / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub split: Split,
    /// Sum of the children's weighted Gini impurities.
    pub score: f64,
}

struct Grow<'l> {
    labels: &'l [bool],
    config: &'l CartConfig,
    min_gain: f64,
}

/// Presorted feature table, reusable across label vectors (for example
/// across permutation-null refits).
pub struct CartFitter<'a> {
    features: &'a Features,
    sorted: Vec<Option<Vec<u32>>>,
}

impl<'a> CartFitter<'a> {
    pub fn new(features: &'a Features) -> Self {
        let sorted = features
            .kinds
            .iter()
            .zip(&features.columns)
            .map(|(k, c)| match k {
                FeatureKind::Continuous => {
                    let mut idx: Vec<u32> = (0..features.n_rows as u32).collect();
                    idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]));
                    Some(idx)
                }
                FeatureKind::Categorical { .. } => None,
            })
            .collect();
        Self { features, sorted }
    }

    pub fn fit(&self, labels: &[bool], config: &CartConfig) -> Result<CartTree> {
        let n = self.features.n_rows;
        if labels.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: labels.len(),
            });
        }
        if config.min_leaf == 0 {
            return Err(Error::InvalidArgument("min leaf size must be positive".into()));
        }
        if !(config.complexity >= 0.0 && config.complexity.is_finite()) {
            return Err(Error::InvalidArgument("complexity must be finite and non-negative".into()));
        }
        if n < 2 * config.min_leaf {
            return Err(Error::InvalidArgument(format!(
                "CART needs at least {} rows, got {n}",
                2 * config.min_leaf
            )));
        }
        let mut nodes = Vec::new();
        let rows: Vec<u32> = (0..n as u32).collect();
        let mut side = vec![false; n];
        let pos = labels.iter().filter(|&&l| l).count();
        let min_gain = config.complexity * weighted_gini(pos, n);
        let grow = Grow { labels, config, min_gain };
        self.grow(&grow, rows, self.sorted.clone(), 0, &mut nodes, &mut side);
        Ok(CartTree { nodes })
    }

    fn grow(
        &self,
        g: &Grow,
        rows: Vec<u32>,
        sorted: Vec<Option<Vec<u32>>>,
        depth: usize,
        nodes: &mut Vec<Node>,
        side: &mut [bool],
    ) -> usize {
        let (labels, config) = (g.labels, g.config);
        let id = nodes.len();
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| labels[r as usize]).count();
        nodes.push(Node::Leaf {
            probability: pos as f64 / n as f64,
            count: n,
        });
        if depth >= config.max_depth || pos == 0 || pos == n || n < 2 * config.min_leaf {
            return id;
        }
        let Some(best) = self.best_split(labels, config, &rows, &sorted, pos) else {
            return id;
        };
        if weighted_gini(pos, n) - best.score < g.min_gain {
            return id;
        }
        for &r in &rows {
            side[r as usize] = best.split.goes_left(self.features.columns[best.split.column()][r as usize]);
        }
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| side[r as usize]);
        let mut left_sorted = Vec::with_capacity(sorted.len());
        let mut right_sorted = Vec::with_capacity(sorted.len());
        for s in sorted {
            match s {
                Some(list) => {
                    let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&r| side[r as usize]);
                    left_sorted.push(Some(l));
                    right_sorted.push(Some(r));
                }
                None => {
                    left_sorted.push(None);
                    right_sorted.push(None);
                }
            }
        }
        let left = self.grow(g, left_rows, left_sorted, depth + 1, nodes, side);
        let right = self.grow(g, right_rows, right_sorted, depth + 1, nodes, side);
        nodes[id] = Node::Internal {
            split: best.split,
            left,
            right,
        };
        id
    }

    fn best_split(
        &self,
        labels: &[bool],
        config: &CartConfig,
        rows: &[u32],
        sorted: &[Option<Vec<u32>>],
        pos: usize,
    ) -> Option<SplitCandidate> {
        let n = rows.len();
        let parent = weighted_gini(pos, n);
        let mut best: Option<SplitCandidate> = None;
        let consider = |cand: SplitCandidate, best: &mut Option<SplitCandidate>| {
            if cand.score < parent - 1e-12 && best.as_ref().is_none_or(|b| cand.score < b.score) {
                *best = Some(cand);
            }
        };
        for (col, kind) in self.features.kinds.iter().enumerate() {
            let values = &self.features.columns[col];
            match kind {
                FeatureKind::Continuous => {
                    let order = sorted[col].as_ref().expect("continuous features are presorted");
                    let mut left_n = 0;
                    let mut left_pos = 0;
                    for k in 0..n - 1 {
                        let r = order[k] as usize;
                        left_n += 1;
                        left_pos += usize::from(labels[r]);
                        let v = values[r];
                        let next = values[order[k + 1] as usize];
                        if next == v || left_n < config.min_leaf || n - left_n < config.min_leaf {
                            continue;
                        }
                        let score = weighted_gini(left_pos, left_n) + weighted_gini(pos - left_pos, n - left_n);
                        consider(
                            SplitCandidate {
                                split: Split::Threshold {
                                    column: col,
                                    threshold: midpoint(v, next),
                                },
                                score,
                            },
                            &mut best,
                        );
                    }
                }
                FeatureKind::Categorical { levels } => {
                    let l = *levels as usize;
                    let mut count = vec![0usize; l];
                    let mut positives = vec![0usize; l];
                    for &r in rows {
                        let lv = values[r as usize] as usize;
                        count[lv] += 1;
                        positives[lv] += usize::from(labels[r as usize]);
                    }
                    let mut present: Vec<usize> = (0..l).filter(|&i| count[i] > 0).collect();
                    // order by positive rate, compared exactly via cross-multiplication
                    present.sort_by(|&a, &b| {
                        (positives[a] * count[b]).cmp(&(positives[b] * count[a])).then(a.cmp(&b))
                    });
                    let mut mask = 0u64;
                    let (mut left_n, mut left_pos) = (0, 0);
                    for &lv in present.iter().take(present.len().saturating_sub(1)) {
                        mask |= 1u64 << lv;
                        left_n += count[lv];
                        left_pos += positives[lv];
                        if left_n < config.min_leaf || n - left_n < config.min_leaf {
                            continue;
                        }
                        let score = weighted_gini(left_pos, left_n) + weighted_gini(pos - left_pos, n - left_n);
                        consider(
                            SplitCandidate {
                                split: Split::Levels {
                                    column: col,
                                    left_levels: mask,
                                },
                                score,
                            },
                            &mut best,
                        );
                    }
                }
            }
        }
        best
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // guard against rounding up to `b`, which would send `b` left
    if m < b {
        m
    } else {
        a
    }
}

pub fn cart_fit(features: &Features, labels: &[bool], config: &CartConfig) -> Result<CartTree> {
    CartFitter::new(features).fit(labels, config)
}
