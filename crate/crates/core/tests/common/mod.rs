//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;
use synthbench::matrix::Matrix;
use synthbench::nn::{predict, sigmoid, Activation, LayerSpec, Mlp};
use synthbench::rng::seeded;

/// `ln(exp(a) + exp(b))`.
fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// RDP of one Poisson-subsampled Gaussian step at order `alpha`, by direct
/// composite Simpson integration of
/// `E_{z ~ N(0, s^2)}[((1 - q) + q exp((2z - 1) / (2 s^2)))^alpha]`
/// in the log domain.
pub fn rdp_by_quadrature(q: f64, sigma: f64, alpha: f64) -> f64 {
    let s2 = sigma * sigma;
    let log_integrand = |z: f64| {
        let log_normal = -z * z / (2.0 * s2) - 0.5 * (2.0 * std::f64::consts::PI * s2).ln();
        let e = (2.0 * z - 1.0) / (2.0 * s2);
        let log_mix = log_add((1.0 - q).ln(), q.ln() + e);
        log_normal + alpha * log_mix
    };
    // The integrand's mass sits between 0 and alpha.
    let lo = -30.0 * sigma;
    let hi = alpha + 30.0 * sigma;
    let cells = 40_000usize;
    let h = (hi - lo) / cells as f64;
    let mut acc = f64::NEG_INFINITY;
    for i in 0..=cells {
        let w: f64 = if i == 0 || i == cells {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc = log_add(acc, w.ln() + log_integrand(lo + i as f64 * h));
    }
    let log_a = acc + (h / 3.0).ln();
    log_a / (alpha - 1.0)
}

/// `min_alpha [T * rdp(alpha) + ln(1/delta) / (alpha - 1)]` over `orders`.
pub fn epsilon_by_quadrature(q: f64, sigma: f64, steps: u64, delta: f64, orders: &[f64]) -> f64 {
    orders
        .iter()
        .map(|&a| steps as f64 * rdp_by_quadrature(q, sigma, a) + (1.0 / delta).ln() / (a - 1.0))
        .fold(f64::INFINITY, f64::min)
}

/// Exact W1 between two uniform empirical distributions, solved as a
/// transportation problem by successive shortest paths on integer masses.
pub fn transport_w1(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len(), b.len());
    let total = lcm(na, nb);
    let (supply, demand) = (total / na, total / nb);
    // Nodes: source 0, a_i 1..=na, b_j na+1..=na+nb, sink na+nb+1.
    let nodes = na + nb + 2;
    let sink = nodes - 1;
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut add = |u: usize, v: usize, cap: i64, cost: f64, edges: &mut Vec<Edge>| {
        adj[u].push(edges.len());
        edges.push(Edge { to: v, cap, cost });
        adj[v].push(edges.len());
        edges.push(Edge { to: u, cap: 0, cost: -cost });
    };
    for i in 0..na {
        add(0, 1 + i, supply as i64, 0.0, &mut edges);
        for j in 0..nb {
            add(1 + i, 1 + na + j, i64::MAX / 4, (a[i] - b[j]).abs(), &mut edges);
        }
    }
    for j in 0..nb {
        add(1 + na + j, sink, demand as i64, 0.0, &mut edges);
    }
    let mut flow = 0i64;
    let mut cost = 0.0;
    while flow < total as i64 {
        // Bellman-Ford (SPFA) handles the negative residual costs.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev: Vec<Option<usize>> = vec![None; nodes];
        let mut in_queue = vec![false; nodes];
        let mut queue = VecDeque::from([0usize]);
        dist[0] = 0.0;
        while let Some(u) = queue.pop_front() {
            in_queue[u] = false;
            for &e in &adj[u] {
                let Edge { to, cap, cost } = edges[e];
                if cap > 0 && dist[u] + cost < dist[to] - 1e-15 {
                    dist[to] = dist[u] + cost;
                    prev[to] = Some(e);
                    if !in_queue[to] {
                        in_queue[to] = true;
                        queue.push_back(to);
                    }
                }
            }
        }
        assert!(dist[sink].is_finite(), "transport problem is infeasible");
        let mut push = i64::MAX;
        let mut v = sink;
        while let Some(e) = prev[v] {
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while let Some(e) = prev[v] {
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            v = edges[e ^ 1].to;
        }
        flow += push;
        cost += push as f64 * dist[sink];
    }
    cost / total as f64
}

#[derive(Clone, Copy)]
struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// W1 for equal sizes as the best of all `n!` matchings.
pub fn matching_w1(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut idx: Vec<usize> = (0..b.len()).collect();
    let mut best = f64::INFINITY;
    permute(&mut idx, 0, &mut |p| {
        let c: f64 = a.iter().zip(p).map(|(x, &j)| (x - b[j]).abs()).sum();
        best = best.min(c);
    });
    best / a.len() as f64
}

fn permute(v: &mut [usize], k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

/// OLS by explicit normal equations `(X'X) b = X'y`, Gaussian elimination
/// with partial pivoting.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * yi;
        }
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=p {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

/// Gini impurity of a node, weighted by its size.
pub fn node_gini(labels: &[bool]) -> f64 {
    let n = labels.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = labels.iter().filter(|&&l| l).count() as f64 / n;
    n * 2.0 * p * (1.0 - p)
}

pub fn three_layer(input: usize, seed: u64) -> Mlp {
    let leaky = |output| LayerSpec {
        output,
        activation: Activation::LEAKY,
        dropout: 0.0,
    };
    let specs = [
        leaky(7),
        leaky(5),
        LayerSpec {
            output: 1,
            activation: Activation::Identity,
            dropout: 0.0,
        },
    ];
    Mlp::new(input, &specs, &mut seeded(seed)).unwrap()
}

pub fn random_batch(rows: usize, cols: usize, scale: f64, seed: u64) -> Matrix {
    let mut rng = seeded(seed);
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Binary cross-entropy on the logit, label alternating by row.
pub fn bce(logit: f64, row: usize) -> f64 {
    let y = (row % 2) as f64;
    let p = sigmoid(logit);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

pub fn bce_grad(out: &Matrix) -> Matrix {
    let mut g = Matrix::zeros(out.rows(), 1);
    for r in 0..out.rows() {
        g.set(r, 0, sigmoid(out.get(r, 0)) - (r % 2) as f64);
    }
    g
}

pub fn example_loss(net: &Mlp, x: &Matrix, r: usize) -> f64 {
    let row = Matrix::from_rows(&[x.row(r).to_vec()]);
    bce(predict(net, &row).unwrap().get(0, 0), r)
}
