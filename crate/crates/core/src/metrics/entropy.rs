//! Nearest-neighbour (Kozachenko–Leonenko) entropy estimates.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::stats::bootstrap_mean_std;
use crate::error::{Error, Result};

const LEAF: usize = 16;

enum Node {
    Leaf { lo: usize, hi: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over row-major points.
pub struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [f64], dim: usize) -> Self {
        let n = points.len() / dim;
        let mut tree = Self {
            points,
            dim,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        if hi - lo <= LEAF {
            self.nodes.push(Node::Leaf { lo, hi });
            return id;
        }
        // Split on the widest coordinate at the median.
        let mut axis = 0;
        let mut widest = -1.0;
        for k in 0..self.dim {
            let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[lo..hi] {
                let x = self.points[i * self.dim + k];
                mn = mn.min(x);
                mx = mx.max(x);
            }
            if mx - mn > widest {
                widest = mx - mn;
                axis = k;
            }
        }
        let mid = (lo + hi) / 2;
        let (pts, dim) = (self.points, self.dim);
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| pts[a * dim + axis].total_cmp(&pts[b * dim + axis]));
        let value = pts[self.order[mid] * dim + axis];
        self.nodes.push(Node::Leaf { lo: 0, hi: 0 });
        let left = self.build(lo, mid);
        let right = self.build(mid, hi);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Squared distance from point `i` to its `k`-th nearest other point.
    pub fn kth_neighbor_sq(&self, i: usize, k: usize) -> f64 {
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        self.search(0, i, k, &mut best);
        best.get(k - 1).copied().unwrap_or(f64::INFINITY)
    }

    fn search(&self, node: usize, i: usize, k: usize, best: &mut Vec<f64>) {
        match self.nodes[node] {
            Node::Leaf { lo, hi } => {
                let q = self.point(i);
                for &j in &self.order[lo..hi] {
                    if j == i {
                        continue;
                    }
                    let d2: f64 = q.iter().zip(self.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    if best.len() < k || d2 < best[best.len() - 1] {
                        let pos = best.partition_point(|&x| x <= d2);
                        best.insert(pos, d2);
                        best.truncate(k);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = self.points[i * self.dim + axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, i, k, best);
                if best.len() < k || diff * diff <= best[best.len() - 1] {
                    self.search(far, i, k, best);
                }
            }
        }
    }
}

/// `log` volume of the unit ball in `R^m`.
pub fn ln_unit_ball_volume(m: usize) -> f64 {
    0.5 * m as f64 * PI.ln() - ln_gamma(0.5 * m as f64 + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnEntropy {
    /// Differential entropy estimate `h`.
    pub value: f64,
    /// Per-point terms whose mean is `value`.
    #[serde(skip)]
    pub contributions: Vec<f64>,
    pub k: usize,
    pub n: usize,
    /// Duplicates were present and the points were jittered.
    pub jittered: bool,
}

/// Kozachenko–Leonenko estimate `h = ψ(n) − ψ(k) + log V_m + (m/n) Σ log ε_i`.
///
/// The estimator is biased at small `n` and in the tails; the bias shrinks as `n` grows.
pub fn entropy_knn(samples: &[f64], dim: usize, k: usize) -> Result<KnnEntropy> {
    if dim == 0 || samples.len() % dim != 0 {
        return Err(Error::pre("sample buffer is not a multiple of the dimension"));
    }
    let n = samples.len() / dim;
    if k == 0 || n <= k {
        return Err(Error::pre(format!("k-NN entropy needs n > k ≥ 1 (n = {n}, k = {k})")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::pre("samples must be finite"));
    }
    let mut log_eps = knn_log_distances(samples, dim, k);
    let mut jittered = false;
    if log_eps.iter().any(|x| !x.is_finite()) {
        let scale = (samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64).sqrt().max(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0x7177_E4ED);
        let perturbed: Vec<f64> = samples
            .iter()
            .map(|x| x + 1e-9 * scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        log_eps = knn_log_distances(&perturbed, dim, k);
        jittered = true;
    }
    let c = digamma(n as f64) - digamma(k as f64) + ln_unit_ball_volume(dim);
    let m = dim as f64;
    let contributions: Vec<f64> = log_eps.iter().map(|l| c + m * l).collect();
    let value = contributions.iter().sum::<f64>() / n as f64;
    Ok(KnnEntropy {
        value,
        contributions,
        k,
        n,
        jittered,
    })
}

fn knn_log_distances(samples: &[f64], dim: usize, k: usize) -> Vec<f64> {
    let tree = KdTree::new(samples, dim);
    (0..samples.len() / dim).map(|i| 0.5 * tree.kth_neighbor_sq(i, k).ln()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropySettings {
    pub k: usize,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for EntropySettings {
    fn default() -> Self {
        Self {
            k: 4,
            resamples: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeEntropy {
    /// `H(f̂ | ref) = −h − E log ref`.
    pub value: f64,
    /// Bootstrap standard deviation over per-point terms (block-resampled).
    pub error: f64,
    pub entropy: f64,
    pub n: usize,
    pub k: usize,
    pub jittered: bool,
}

/// Relative entropy of the sampled law with respect to a reference log-density.
pub fn relative_entropy_knn(
    samples: &[f64],
    dim: usize,
    block: usize,
    log_reference: impl Fn(&[f64]) -> f64,
    settings: &EntropySettings,
) -> Result<RelativeEntropy> {
    let h = entropy_knn(samples, dim, settings.k)?;
    let terms: Vec<f64> = h
        .contributions
        .iter()
        .zip(samples.chunks_exact(dim))
        .map(|(c, x)| -c - log_reference(x))
        .collect();
    let value = terms.iter().sum::<f64>() / terms.len() as f64;
    let error = if settings.resamples > 1 {
        bootstrap_mean_std(&terms, block, settings.resamples, settings.seed)
    } else {
        f64::NAN
    };
    Ok(RelativeEntropy {
        value,
        error,
        entropy: h.value,
        n: h.n,
        k: h.k,
        jittered: h.jittered,
    })
}
