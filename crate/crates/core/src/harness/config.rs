//! TOML experiment configuration, validation and hashing.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{Conditioning, EnsembleSpec, RunOptions, Schedule};
use crate::error::{Error, Result};
use crate::init::OneParticleDensity;
use crate::metrics::{EntropySettings, MarginalMode, SlicedSettings};
use crate::model::{CollisionKernel, TrueMaxwell};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Scalar velocities with Kac's rotation rule.
    Kac1d,
    /// Velocities in `R^d` with the symmetric collision rule.
    #[default]
    Boltzmann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    Gmm,
    Hs,
    Tmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub variant: Variant,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub kernel: KernelName,
    #[serde(default = "one")]
    pub hs_constant: f64,
    #[serde(default = "default_cutoff")]
    pub tmm_cutoff: f64,
    /// Overrides the default normalization (unit mass at the reference cutoff).
    pub tmm_constant: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Gaussian,
    UniformBall,
    TwoBump,
    Bkw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    /// Mean `|v|²`; defaults to `d`. Determined by the geometry for `two_bump`.
    pub energy: Option<f64>,
    pub offset: Option<f64>,
    pub bump_radius: Option<f64>,
    pub shape: Option<f64>,
    #[serde(default = "default_conditioning")]
    pub conditioning: Conditioning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub particles: usize,
    pub runs: usize,
    pub retain: Option<usize>,
    pub reproject_every: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Geometric,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
    /// Explicit output times; must start at 0.
    pub times: Option<Vec<f64>>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            t_end: default_t_end(),
            points: default_points(),
            spacing: Spacing::Geometric,
            times: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    #[serde(default = "default_mode")]
    pub mode: MarginalMode,
    /// Cap on pooled tuples per run.
    pub per_run: Option<usize>,
    #[serde(default = "default_projections")]
    pub projections: usize,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_k")]
    pub knn_k: usize,
    #[serde(default = "default_entropy_samples")]
    pub entropy_samples: usize,
    #[serde(default = "default_reference_samples")]
    pub reference_samples: usize,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            orders: default_orders(),
            mode: default_mode(),
            per_run: None,
            projections: default_projections(),
            resamples: default_resamples(),
            knn_k: default_k(),
            entropy_samples: default_entropy_samples(),
            reference_samples: default_reference_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            output: default_output(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Exact limit samples (cutoff Maxwell only).
    #[default]
    Oracle,
    /// A simulation with `8 · max N` particles.
    Simulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub particles: Vec<usize>,
    /// Target number of ℓ-tuples per N; runs are chosen to reach it.
    pub samples: Option<usize>,
    #[serde(default)]
    pub reference: ReferenceKind,
    /// Longest time at which the tree sampler is used as the oracle.
    #[serde(default = "default_tree_time")]
    pub tree_max_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSection {
    pub epsilons: Vec<f64>,
    #[serde(default = "one")]
    pub observe_time: f64,
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: ModelSection,
    pub initial: InitialSection,
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub estimators: EstimatorSection,
    #[serde(default)]
    pub run: RunSection,
    pub sweep: Option<SweepSection>,
    pub cutoff: Option<CutoffSection>,
}

fn default_dim() -> usize {
    3
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_cutoff() -> f64 {
    crate::model::TMM_REFERENCE_CUTOFF
}
fn default_conditioning() -> Conditioning {
    Conditioning::Sphere
}
fn default_t_end() -> f64 {
    10.0
}
fn default_points() -> usize {
    12
}
fn default_orders() -> Vec<usize> {
    vec![1, 2]
}
fn default_mode() -> MarginalMode {
    MarginalMode::Pooled
}
fn default_projections() -> usize {
    64
}
fn default_resamples() -> usize {
    200
}
fn default_k() -> usize {
    4
}
fn default_entropy_samples() -> usize {
    10_000
}
fn default_reference_samples() -> usize {
    200_000
}
fn default_output() -> String {
    "kac-out".into()
}
fn default_tree_time() -> f64 {
    6.0
}

/// Configuration text plus its parsed form.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub source: String,
    pub config: SimConfig,
}

/// 1-based line of `key = ...` inside `[section]`, if present.
pub fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn invalid(source: &str, section: &str, key: &str, msg: impl std::fmt::Display) -> Error {
    match locate(source, section, key) {
        Some(line) => Error::Config(format!("line {line}: {section}.{key}: {msg}")),
        None => Error::Config(format!("{section}.{key}: {msg}")),
    }
}

impl LoadedConfig {
    pub fn parse(source: &str) -> Result<Self> {
        let config: SimConfig = toml::from_str(source).map_err(|e| {
            let line = e
                .span()
                .map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1);
            match line {
                Some(l) => Error::Config(format!("line {l}: {}", e.message())),
                None => Error::Config(e.message().to_string()),
            }
        })?;
        let loaded = Self {
            source: source.to_string(),
            config,
        };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// First 16 hex digits of the SHA-256 of the verbatim text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.source.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        let s = self.source.as_str();
        let m = &c.model;
        let d = m.dim;
        match m.variant {
            Variant::Kac1d if d != 1 => return Err(invalid(s, "model", "dim", "kac1d requires dim = 1")),
            Variant::Boltzmann if d < 2 => return Err(invalid(s, "model", "dim", "boltzmann requires dim ≥ 2")),
            _ => {}
        }
        if m.variant == Variant::Kac1d && m.kernel == KernelName::Tmm {
            return Err(invalid(s, "model", "kernel", "the Kac model has no angular kernel; use gmm or hs"));
        }
        if !(m.hs_constant > 0.0) {
            return Err(invalid(s, "model", "hs_constant", "must be positive"));
        }
        if !(m.tmm_cutoff > 0.0 && m.tmm_cutoff < std::f64::consts::PI) {
            return Err(invalid(s, "model", "tmm_cutoff", "must lie in (0, π)"));
        }
        if let Some(cst) = m.tmm_constant {
            if !(cst > 0.0) {
                return Err(invalid(s, "model", "tmm_constant", "must be positive"));
            }
        }
        let e = &c.ensemble;
        if e.particles < 2 {
            return Err(invalid(s, "ensemble", "particles", "need at least 2 particles"));
        }
        if e.runs == 0 {
            return Err(invalid(s, "ensemble", "runs", "must be positive"));
        }
        if e.retain == Some(0) {
            return Err(invalid(s, "ensemble", "retain", "must be positive"));
        }
        if e.reproject_every.is_some() && c.initial.conditioning == Conditioning::Free {
            return Err(invalid(s, "ensemble", "reproject_every", "only meaningful with sphere conditioning"));
        }
        let est = &c.estimators;
        if est.orders.is_empty() || est.orders.contains(&0) {
            return Err(invalid(s, "estimators", "orders", "orders must be positive"));
        }
        let min_n = c
            .sweep
            .as_ref()
            .and_then(|sw| sw.particles.iter().copied().min())
            .unwrap_or(e.particles)
            .min(e.particles);
        let retained = e.retain.unwrap_or(usize::MAX).min(min_n);
        if let Some(&ell) = est.orders.iter().max() {
            if ell > retained {
                return Err(invalid(
                    s,
                    "estimators",
                    "orders",
                    format!("marginal order {ell} exceeds the available {retained} particles per run"),
                ));
            }
        }
        if est.projections == 0 {
            return Err(invalid(s, "estimators", "projections", "must be positive"));
        }
        if est.knn_k == 0 {
            return Err(invalid(s, "estimators", "knn_k", "must be positive"));
        }
        if est.reference_samples == 0 {
            return Err(invalid(s, "estimators", "reference_samples", "must be positive"));
        }
        if c.run.workers == 0 {
            return Err(invalid(s, "run", "workers", "must be positive"));
        }
        self.schedule().map_err(|err| invalid(s, "schedule", "t_end", err))?;
        self.initial_density()?;
        self.kernel()?;
        if let Some(sw) = &c.sweep {
            if sw.particles.is_empty() || sw.particles.iter().any(|&n| n < 2) {
                return Err(invalid(s, "sweep", "particles", "need a nonempty list of N ≥ 2"));
            }
            if sw.samples == Some(0) {
                return Err(invalid(s, "sweep", "samples", "must be positive"));
            }
        }
        if let Some(cu) = &c.cutoff {
            if cu.epsilons.is_empty() || cu.epsilons.iter().any(|&x| !(x > 0.0 && x < std::f64::consts::PI)) {
                return Err(invalid(s, "cutoff", "epsilons", "each ε must lie in (0, π)"));
            }
            if !(cu.observe_time >= 0.0) {
                return Err(invalid(s, "cutoff", "observe_time", "must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<CollisionKernel> {
        self.kernel_with_cutoff(self.config.model.tmm_cutoff)
    }

    pub fn kernel_with_cutoff(&self, cutoff: f64) -> Result<CollisionKernel> {
        let m = &self.config.model;
        let s = self.source.as_str();
        match m.kernel {
            KernelName::Gmm => Ok(CollisionKernel::CutoffMaxwell),
            KernelName::Hs => CollisionKernel::hard_spheres(m.hs_constant).map_err(|e| invalid(s, "model", "hs_constant", e)),
            KernelName::Tmm => {
                let k = match m.tmm_constant {
                    Some(cst) => TrueMaxwell::new(cutoff, cst, m.dim),
                    None => TrueMaxwell::normalized(cutoff, m.dim),
                };
                k.map(CollisionKernel::TrueMaxwell).map_err(|e| invalid(s, "model", "tmm_cutoff", e))
            }
        }
    }

    pub fn energy(&self) -> f64 {
        self.initial_density().map(|f| f.energy()).unwrap_or(f64::NAN)
    }

    pub fn initial_density(&self) -> Result<OneParticleDensity> {
        let i = &self.config.initial;
        let d = self.config.model.dim;
        let s = self.source.as_str();
        let energy = i.energy.unwrap_or(d as f64);
        if i.kind != InitialKind::TwoBump && !(energy > 0.0 && energy.is_finite()) {
            return Err(invalid(s, "initial", "energy", "must be positive"));
        }
        let need = |key: &str, v: Option<f64>| v.ok_or_else(|| invalid(s, "initial", key, "required for this initial datum"));
        let built = match i.kind {
            InitialKind::Gaussian => OneParticleDensity::gaussian(d, energy / d as f64),
            InitialKind::UniformBall => {
                OneParticleDensity::uniform_ball(d, (energy * (d as f64 + 2.0) / d as f64).sqrt())
            }
            InitialKind::TwoBump => {
                if i.energy.is_some() {
                    return Err(invalid(s, "initial", "energy", "two_bump energy follows from offset and bump_radius"));
                }
                let offset = need("offset", i.offset)?;
                let radius = need("bump_radius", i.bump_radius)?;
                OneParticleDensity::two_bump(d, offset, radius)
            }
            InitialKind::Bkw => OneParticleDensity::bkw(d, energy, need("shape", i.shape)?),
        };
        built.map_err(|e| {
            let key = match i.kind {
                InitialKind::TwoBump => "offset",
                InitialKind::Bkw => "shape",
                _ => "energy",
            };
            invalid(s, "initial", key, e)
        })
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let sc = &self.config.schedule;
        if let Some(times) = &sc.times {
            return Schedule::new(times.clone());
        }
        match sc.spacing {
            Spacing::Geometric => Schedule::geometric(sc.t_end, sc.points),
            Spacing::Linear => Schedule::linear(sc.t_end, sc.points),
        }
    }

    pub fn spec(&self) -> Result<EnsembleSpec> {
        self.spec_for(self.config.ensemble.particles, self.kernel()?)
    }

    pub fn spec_for(&self, particles: usize, kernel: CollisionKernel) -> Result<EnsembleSpec> {
        let e = &self.config.ensemble;
        Ok(EnsembleSpec {
            kernel,
            initial: self.initial_density()?,
            conditioning: self.config.initial.conditioning,
            particles,
            schedule: self.schedule()?,
            options: RunOptions {
                retain: e.retain,
                reproject_every: e.reproject_every,
            },
        })
    }

    pub fn sliced(&self, seed: u64) -> SlicedSettings {
        SlicedSettings {
            projections: self.config.estimators.projections,
            resamples: self.config.estimators.resamples,
            seed,
        }
    }

    pub fn entropy(&self, seed: u64) -> EntropySettings {
        EntropySettings {
            k: self.config.estimators.knn_k,
            resamples: self.config.estimators.resamples,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
kernel = "gmm"
dim = 3

[initial]
kind = "two_bump"
offset = 1.5
bump_radius = 0.5

[ensemble]
particles = 50
runs = 20

[schedule]
t_end = 1.0
points = 4
"#;

    #[test]
    fn minimal_config_parses() {
        let c = LoadedConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.config.estimators.resamples, 200);
        assert_eq!(c.config.estimators.knn_k, 4);
        assert_eq!(c.schedule().unwrap().output_times().len(), 4);
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn order_above_n_is_rejected_with_line() {
        let text = MINIMAL.replace("particles = 50", "particles = 50\nretain = 1");
        let err = LoadedConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("orders"), "{err}");
        let text = format!("{MINIMAL}\n[estimators]\norders = [60]\n");
        let err = LoadedConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("line 20"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let text = MINIMAL.replace("runs = 20", "runs = ");
        let err = LoadedConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("line 13"), "{err}");
        let text = MINIMAL.replace("runs = 20", "runs = 20\nbogus = 1");
        assert!(LoadedConfig::parse(&text).is_err());
    }

    #[test]
    fn bad_cutoff_and_variant_rejected() {
        let text = MINIMAL.replace("kernel = \"gmm\"", "kernel = \"tmm\"\ntmm_cutoff = 4.0");
        let err = LoadedConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("line 4") && err.contains("tmm_cutoff"), "{err}");
        let text = MINIMAL.replace("dim = 3", "dim = 3\nvariant = \"kac1d\"");
        assert!(LoadedConfig::parse(&text).is_err());
    }
}
