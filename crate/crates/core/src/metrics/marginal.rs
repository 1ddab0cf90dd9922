use serde::{Deserialize, Serialize};

use crate::engine::EnsembleSnapshot;
use crate::error::{Error, Result};

/// How ℓ-tuples are taken from each replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MarginalMode {
    /// Particles `1..=ℓ` of every replica: one exact sample of the ℓ-marginal per run.
    #[default]
    Strict,
    /// `⌊N/ℓ⌋` disjoint tuples per replica; more samples, weakly correlated within a run.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub time: f64,
    pub runs: usize,
    /// Consecutive samples that come from the same replica.
    pub tuples_per_run: usize,
    pub mode: MarginalMode,
    pub sphere: bool,
}

/// Samples of an ℓ-particle marginal, each row of width `ℓ·d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMarginal {
    order: usize,
    dim: usize,
    samples: Vec<f64>,
    provenance: Provenance,
}

impl EmpiricalMarginal {
    /// Independent samples, grouped into blocks of `block` rows for resampling.
    pub fn from_iid(order: usize, dim: usize, samples: Vec<f64>, time: f64, block: usize) -> Result<Self> {
        let width = order * dim;
        if width == 0 || samples.is_empty() || samples.len() % width != 0 {
            return Err(Error::pre("sample buffer is empty or not a multiple of ℓ·d"));
        }
        let n = samples.len() / width;
        let block = block.clamp(1, n);
        Ok(Self {
            order,
            dim,
            samples,
            provenance: Provenance {
                time,
                runs: n.div_ceil(block),
                tuples_per_run: block,
                mode: MarginalMode::Strict,
                sphere: false,
            },
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row width `ℓ·d`.
    pub fn width(&self) -> usize {
        self.order * self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.samples[i * w..(i + 1) * w]
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn time(&self) -> f64 {
        self.provenance.time
    }

    /// Rows sharing a replica; resampling treats each block as a unit.
    pub fn block_size(&self) -> usize {
        self.provenance.tuples_per_run.max(1)
    }

    /// One scalar coordinate of every row.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.samples.chunks_exact(self.width()).map(|r| r[k]).collect()
    }

    /// Flatten an ℓ-marginal into single-particle samples.
    pub fn to_single_particle(&self) -> EmpiricalMarginal {
        let mut prov = self.provenance.clone();
        prov.tuples_per_run *= self.order;
        EmpiricalMarginal {
            order: 1,
            dim: self.dim,
            samples: self.samples.clone(),
            provenance: prov,
        }
    }

    /// The first `rows` samples (whole replicas first, in run order).
    pub fn truncated(mut self, rows: usize) -> EmpiricalMarginal {
        let rows = rows.clamp(1, self.len());
        self.samples.truncate(rows * self.width());
        self.provenance.runs = rows.div_ceil(self.block_size());
        self
    }

    /// Mean of a row functional with a block-aware standard error.
    pub fn mean_of(&self, f: impl Fn(&[f64]) -> f64) -> (f64, f64) {
        let values: Vec<f64> = self.samples.chunks_exact(self.width()).map(f).collect();
        super::stats::block_mean(&values, self.block_size())
    }
}

/// ℓ-marginal samples from an ensemble snapshot.
pub fn extract_marginal(snapshot: &EnsembleSnapshot, ell: usize, mode: MarginalMode) -> Result<EmpiricalMarginal> {
    extract_marginal_capped(snapshot, ell, mode, None)
}

/// As [`extract_marginal`], with at most `per_run` tuples per replica in pooled mode.
pub fn extract_marginal_capped(
    snapshot: &EnsembleSnapshot,
    ell: usize,
    mode: MarginalMode,
    per_run: Option<usize>,
) -> Result<EmpiricalMarginal> {
    if ell == 0 {
        return Err(Error::pre("marginal order must be at least 1"));
    }
    if ell > snapshot.particles {
        return Err(Error::pre(format!("marginal order {ell} exceeds N = {}", snapshot.particles)));
    }
    if snapshot.runs.is_empty() {
        return Err(Error::pre("empty ensemble"));
    }
    let retained = snapshot.retained();
    if ell > retained {
        return Err(Error::pre(format!("only {retained} particles per run were retained, need {ell}")));
    }
    let d = snapshot.dim;
    let tuples = match mode {
        MarginalMode::Strict => 1,
        MarginalMode::Pooled => (retained / ell).min(per_run.unwrap_or(usize::MAX)).max(1),
    };
    let width = ell * d;
    let mut samples = Vec::with_capacity(snapshot.runs.len() * tuples * width);
    for run in &snapshot.runs {
        samples.extend_from_slice(&run[..tuples * width]);
    }
    Ok(EmpiricalMarginal {
        order: ell,
        dim: d,
        samples,
        provenance: Provenance {
            time: snapshot.time,
            runs: snapshot.runs.len(),
            tuples_per_run: tuples,
            mode,
            sphere: snapshot.sphere,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(runs: Vec<Vec<f64>>, dim: usize, n: usize) -> EnsembleSnapshot {
        EnsembleSnapshot {
            time: 0.0,
            dim,
            particles: n,
            sphere: true,
            runs,
        }
    }

    #[test]
    fn full_order_strict_returns_states() {
        let s = snap(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]], 1, 3);
        let m = extract_marginal(&s, 3, MarginalMode::Strict).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn pooled_takes_disjoint_tuples() {
        let s = snap(vec![(0..10).map(f64::from).collect()], 1, 10);
        let m = extract_marginal(&s, 3, MarginalMode::Pooled).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.row(2), &[6.0, 7.0, 8.0]);
        assert_eq!(m.block_size(), 3);
        let c = extract_marginal_capped(&s, 3, MarginalMode::Pooled, Some(2)).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn order_above_n_is_rejected() {
        let s = snap(vec![vec![0.0; 4]], 2, 2);
        assert!(extract_marginal(&s, 3, MarginalMode::Strict).is_err());
        assert!(extract_marginal(&s, 0, MarginalMode::Strict).is_err());
    }
}
