//! Chaoticity `α̂(N)` and relaxation `β̂(t)` summaries.

use serde::{Deserialize, Serialize};

use super::entropy::{relative_entropy_knn, EntropySettings, RelativeEntropy};
use super::marginal::{extract_marginal_capped, EmpiricalMarginal, MarginalMode};
use super::projected::BkwTensor;
use super::w1::{w1_sliced, w1_sliced_to_law, SlicedSettings, SlicedW1};
use crate::engine::{aux_rng, EnsembleSnapshot};
use crate::error::{Error, Result};
use crate::init;
use crate::oracle::{BkwProfile, Equilibrium};

/// A W1-type estimate at one output time, normalized by the marginal order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEstimate {
    pub time: f64,
    pub value: f64,
    pub error: f64,
    pub detail: SlicedW1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub particles: usize,
    pub order: usize,
    /// Largest normalized distance over the time grid.
    pub alpha: f64,
    pub error: f64,
    pub argmax_time: f64,
    pub per_time: Vec<TimedEstimate>,
}

/// Marginals of one particle number, one per output time.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub particles: usize,
    pub marginals: Vec<EmpiricalMarginal>,
}

/// The tensor law `f_t^{⊗ℓ}` that marginals are compared with.
#[derive(Debug, Clone)]
pub enum TensorReference {
    /// Samples at each output time (Wild trees, or a large-N run).
    Samples(Vec<EmpiricalMarginal>),
    /// The BKW profile, whose projections are known exactly.
    Bkw(BkwProfile),
}

impl TensorReference {
    /// Sliced W1 between `m` and the reference at the time of `m`.
    pub fn distance(&self, m: &EmpiricalMarginal, settings: &SlicedSettings) -> Result<SlicedW1> {
        match self {
            TensorReference::Samples(refs) => {
                let r = refs
                    .iter()
                    .find(|r| same_time(r.time(), m.time()))
                    .ok_or_else(|| Error::pre(format!("missing reference samples at t = {}", m.time())))?;
                if r.order() != m.order() {
                    return Err(Error::pre("marginal and reference orders differ"));
                }
                w1_sliced(m, r, settings)
            }
            TensorReference::Bkw(profile) => {
                w1_sliced_to_law(m, &BkwTensor::from_profile(profile, m.time(), m.order())?, settings)
            }
        }
    }
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// `α̂(N) = max_t W1(Π_ℓ f̂^N_t, f_t^{⊗ℓ}) / ℓ` for every entry of the sweep.
pub fn chaoticity_alpha(sweep: &[SweepEntry], reference: &TensorReference, settings: &SlicedSettings) -> Result<Vec<AlphaRow>> {
    sweep
        .iter()
        .map(|entry| alpha_for(entry, reference, settings))
        .collect()
}

/// One sweep row. Distances are evaluated on the whole grid; the bootstrap
/// runs only at the maximizing time, whose error is the error of `α̂`.
pub fn alpha_for(entry: &SweepEntry, reference: &TensorReference, settings: &SlicedSettings) -> Result<AlphaRow> {
    let first = entry
        .marginals
        .first()
        .ok_or_else(|| Error::pre("no marginals for this particle number"))?;
    let order = first.order();
    if entry.marginals.iter().any(|m| m.order() != order) {
        return Err(Error::pre("marginal orders differ across the grid"));
    }
    let point_settings = SlicedSettings {
        resamples: 0,
        ..*settings
    };
    let mut per_time = Vec::with_capacity(entry.marginals.len());
    for m in &entry.marginals {
        let w = reference.distance(m, &point_settings)?;
        per_time.push(TimedEstimate {
            time: m.time(),
            value: w.value / order as f64,
            error: f64::NAN,
            detail: w,
        });
    }
    let best = (0..per_time.len())
        .max_by(|&a, &b| per_time[a].value.total_cmp(&per_time[b].value))
        .expect("nonempty grid");
    let w = reference.distance(&entry.marginals[best], settings)?;
    debug_assert_eq!(w.value, per_time[best].detail.value);
    per_time[best].error = w.error / order as f64;
    per_time[best].detail = w;
    let top = &per_time[best];
    Ok(AlphaRow {
        particles: entry.particles,
        order,
        alpha: top.value,
        error: top.error,
        argmax_time: top.time,
        per_time,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationSettings {
    pub order: usize,
    pub mode: MarginalMode,
    /// Cap on pooled tuples per replica (equalizes sample counts across N).
    pub per_run: Option<usize>,
    pub sliced: SlicedSettings,
    pub entropy: EntropySettings,
    /// Cap on the samples used by the entropy estimate; 0 disables it.
    pub entropy_samples: usize,
    /// Seed of the equilibrium reference draws.
    pub reference_seed: u64,
}

impl Default for RelaxationSettings {
    fn default() -> Self {
        Self {
            order: 1,
            mode: MarginalMode::Pooled,
            per_run: None,
            sliced: SlicedSettings::default(),
            entropy: EntropySettings::default(),
            entropy_samples: 10_000,
            reference_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub time: f64,
    pub order: usize,
    pub beta: f64,
    pub error: f64,
    pub detail: SlicedW1,
    /// Per-particle relative entropy `H(f̂^(1)_t | γ)`, if requested.
    pub entropy: Option<RelativeEntropy>,
}

/// ℓ-marginal samples of the uniform law on the sphere, shaped like `like`.
pub fn sphere_reference(
    like: &EmpiricalMarginal,
    particles: usize,
    energy: f64,
    seed: u64,
) -> Result<EmpiricalMarginal> {
    let ell = like.order();
    let d = like.dim();
    let per_run = like.block_size();
    let runs = like.provenance().runs;
    let width = ell * d;
    let mut samples = Vec::with_capacity(runs * per_run * width);
    let mut rng = aux_rng(seed, 0x5EF0, 0);
    for _ in 0..runs {
        let s = if d == 1 {
            init::sample_uniform_energy_sphere(particles, energy, &mut rng)?
        } else {
            init::sample_uniform_sphere(particles, d, energy, &mut rng)?
        };
        samples.extend_from_slice(&s.velocities()[..per_run * width]);
    }
    EmpiricalMarginal::from_iid(ell, d, samples, like.time(), per_run)
}

/// `β̂(t) = W1(Π_ℓ f̂^N_t, Π_ℓ γ^N) / ℓ` on every snapshot, with the entropy variant.
///
/// `energy` is the per-particle energy of the sphere. Free-process runs are refused.
pub fn relaxation_beta(snapshots: &[EnsembleSnapshot], energy: f64, settings: &RelaxationSettings) -> Result<Vec<BetaRow>> {
    let first = snapshots.first().ok_or_else(|| Error::pre("no snapshots"))?;
    if snapshots.iter().any(|s| !s.sphere) {
        return Err(Error::pre(
            "relaxation to γ^N is defined only for sphere-constrained runs; use sphere conditioning",
        ));
    }
    let probe = extract_marginal_capped(first, settings.order, settings.mode, settings.per_run)?;
    let reference = sphere_reference(&probe, first.particles, energy, settings.reference_seed)?;
    let gamma = Equilibrium::new(first.dim, energy)?;
    snapshots
        .iter()
        .map(|snap| {
            let m = extract_marginal_capped(snap, settings.order, settings.mode, settings.per_run)?;
            let w = w1_sliced(&m, &reference, &settings.sliced)?;
            let entropy = if settings.entropy_samples > 0 {
                Some(per_particle_entropy(snap, &gamma, settings.entropy_samples, &settings.entropy)?)
            } else {
                None
            };
            let ell = settings.order as f64;
            Ok(BetaRow {
                time: snap.time,
                order: settings.order,
                beta: w.value / ell,
                error: w.error / ell,
                detail: w,
                entropy,
            })
        })
        .collect()
}

/// `H(f̂^(1)_t | γ)` from at most `max_samples` pooled single-particle samples.
pub fn per_particle_entropy(
    snap: &EnsembleSnapshot,
    gamma: &Equilibrium,
    max_samples: usize,
    settings: &EntropySettings,
) -> Result<RelativeEntropy> {
    let runs = snap.runs.len().max(1);
    let per_run = max_samples.div_ceil(runs).max(1);
    let m = extract_marginal_capped(snap, 1, MarginalMode::Pooled, Some(per_run))?;
    let n = m.len().min(max_samples);
    let d = m.dim();
    relative_entropy_knn(&m.samples()[..n * d], d, m.block_size(), |v| gamma.log_density(v), settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_ensemble, Conditioning, EnsembleSpec, RunOptions, Schedule};
    use crate::init::OneParticleDensity;
    use crate::model::CollisionKernel;

    fn equilibrium_spec(conditioning: Conditioning) -> EnsembleSpec {
        EnsembleSpec {
            kernel: CollisionKernel::CutoffMaxwell,
            initial: OneParticleDensity::gaussian(3, 1.0).unwrap(),
            conditioning,
            particles: 40,
            schedule: Schedule::linear(1.0, 3).unwrap(),
            options: RunOptions::default(),
        }
    }

    #[test]
    fn free_runs_are_refused() {
        let out = run_ensemble(&equilibrium_spec(Conditioning::Free), 4, 1, 1).unwrap();
        assert!(relaxation_beta(&out.snapshots, 3.0, &RelaxationSettings::default()).is_err());
    }

    #[test]
    fn beta_at_zero_is_the_direct_distance() {
        let out = run_ensemble(&equilibrium_spec(Conditioning::Sphere), 30, 2, 1).unwrap();
        let settings = RelaxationSettings {
            entropy_samples: 0,
            sliced: SlicedSettings {
                projections: 8,
                resamples: 20,
                seed: 4,
            },
            ..Default::default()
        };
        let rows = relaxation_beta(&out.snapshots, 3.0, &settings).unwrap();
        let m = extract_marginal_capped(&out.snapshots[0], 1, MarginalMode::Pooled, None).unwrap();
        let r = sphere_reference(&m, 40, 3.0, 0).unwrap();
        let direct = w1_sliced(&m, &r, &settings.sliced).unwrap();
        assert_eq!(rows[0].beta, direct.value);
    }

    #[test]
    fn self_reference_gives_zero_alpha() {
        let out = run_ensemble(&equilibrium_spec(Conditioning::Sphere), 10, 3, 1).unwrap();
        let marginals: Vec<EmpiricalMarginal> = out
            .snapshots
            .iter()
            .map(|s| extract_marginal_capped(s, 2, MarginalMode::Pooled, None).unwrap())
            .collect();
        let entry = SweepEntry {
            particles: 40,
            marginals: marginals.clone(),
        };
        let row = alpha_for(&entry, &TensorReference::Samples(marginals.clone()), &SlicedSettings::default()).unwrap();
        assert_eq!(row.alpha, 0.0);
        let partial = TensorReference::Samples(marginals[..1].to_vec());
        assert!(alpha_for(&entry, &partial, &SlicedSettings::default()).is_err());
    }
}
