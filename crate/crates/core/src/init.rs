//! Initial N-particle states and one-particle densities.
//!
//! Energy convention: `ℰ = ∫ |v|² f_0 dv` is the total second moment of the
//! one-particle law, so an N-particle state on the Boltzmann sphere has
//! `Σ_i |v_i|² = N ℰ`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{norm_sq, uniform_on_sphere};
use crate::quad;

/// Exponent `k` of the compact bump profile `(1 - |x|²/ρ²)^k`.
pub const BUMP_EXPONENT: i32 = 3;

/// Relative tolerance of the sphere constraints on a constrained state.
pub const SPHERE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityKind {
    /// Centered isotropic Gaussian with per-coordinate variance.
    Gaussian { variance: f64 },
    /// Uniform law on the centered ball.
    UniformBall { radius: f64 },
    /// Two compact polynomial bumps `(1 - |v - c|²/ρ²)^3`.
    TwoBump {
        centers: [Vec<f64>; 2],
        weights: [f64; 2],
        bump_radius: f64,
    },
    /// The relaxing Maxwell-molecule profile `γ_{KT}(v)(A + B|v|²/(KT))` at shape `K`.
    Bkw { energy: f64, shape: f64 },
}

/// A centered one-particle probability density on `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneParticleDensity {
    dim: usize,
    kind: DensityKind,
}

/// Fisher information of an initial datum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FisherInformation {
    Finite(f64),
    /// The density is not differentiable (e.g. the indicator of a ball).
    Undefined,
}

pub(crate) fn ln_unit_sphere_area(dim: usize) -> f64 {
    // |S^(d-1)| = 2 π^(d/2) / Γ(d/2)
    (2.0f64).ln() + 0.5 * dim as f64 * PI.ln() - ln_gamma(0.5 * dim as f64)
}

/// Weights `(A, B)` of the BKW profile in dimension `d` at shape `K`.
pub(crate) fn bkw_weights(dim: usize, shape: f64) -> (f64, f64) {
    let d = dim as f64;
    let b = (1.0 - shape) / (2.0 * shape);
    (((d + 2.0) * shape - d) / (2.0 * shape), b)
}

/// Smallest admissible BKW shape, where the Gaussian weight vanishes.
pub fn bkw_min_shape(dim: usize) -> f64 {
    dim as f64 / (dim as f64 + 2.0)
}

impl OneParticleDensity {
    pub fn new(dim: usize, kind: DensityKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::pre("dimension must be ≥ 1"));
        }
        match &kind {
            DensityKind::Gaussian { variance } => {
                if !(*variance > 0.0 && variance.is_finite()) {
                    return Err(Error::pre("Gaussian variance must be positive"));
                }
            }
            DensityKind::UniformBall { radius } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::pre("ball radius must be positive"));
                }
            }
            DensityKind::TwoBump {
                centers,
                weights,
                bump_radius,
            } => {
                if centers.iter().any(|c| c.len() != dim) {
                    return Err(Error::pre("bump centers must have the model dimension"));
                }
                if weights.iter().any(|w| !(*w > 0.0)) || (weights[0] + weights[1] - 1.0).abs() > 1e-12 {
                    return Err(Error::pre("bump weights must be positive and sum to 1"));
                }
                if !(*bump_radius > 0.0 && bump_radius.is_finite()) {
                    return Err(Error::pre("bump radius must be positive"));
                }
                let scale = centers.iter().map(|c| norm_sq(c).sqrt()).fold(*bump_radius, f64::max);
                for k in 0..dim {
                    let m = weights[0] * centers[0][k] + weights[1] * centers[1][k];
                    if m.abs() > 1e-12 * scale {
                        return Err(Error::pre(format!(
                            "two-bump mixture is not centered (mean component {k} = {m})"
                        )));
                    }
                }
            }
            DensityKind::Bkw { energy, shape } => {
                if !(*energy > 0.0 && energy.is_finite()) {
                    return Err(Error::pre("BKW energy must be positive"));
                }
                if !(*shape >= bkw_min_shape(dim) && *shape <= 1.0) {
                    return Err(Error::Domain(format!(
                        "BKW shape {shape} outside [{}, 1]",
                        bkw_min_shape(dim)
                    )));
                }
            }
        }
        Ok(Self { dim, kind })
    }

    pub fn gaussian(dim: usize, variance: f64) -> Result<Self> {
        Self::new(dim, DensityKind::Gaussian { variance })
    }

    pub fn uniform_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::new(dim, DensityKind::UniformBall { radius })
    }

    /// Symmetric two-bump mixture with centers `±offset·e_1`.
    pub fn two_bump(dim: usize, offset: f64, bump_radius: f64) -> Result<Self> {
        let mut c = vec![0.0; dim];
        c[0] = offset;
        let minus: Vec<f64> = c.iter().map(|x| -x).collect();
        Self::new(
            dim,
            DensityKind::TwoBump {
                centers: [c, minus],
                weights: [0.5, 0.5],
                bump_radius,
            },
        )
    }

    pub fn bkw(dim: usize, energy: f64, shape: f64) -> Result<Self> {
        Self::new(dim, DensityKind::Bkw { energy, shape })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    /// Total second moment `ℰ = ∫ |v|² f`.
    pub fn energy(&self) -> f64 {
        let d = self.dim as f64;
        match &self.kind {
            DensityKind::Gaussian { variance } => d * variance,
            DensityKind::UniformBall { radius } => d / (d + 2.0) * radius * radius,
            DensityKind::TwoBump {
                centers,
                weights,
                bump_radius,
            } => {
                let spread = bump_radius * bump_radius * bump_second_moment_fraction(self.dim);
                weights[0] * norm_sq(&centers[0]) + weights[1] * norm_sq(&centers[1]) + spread
            }
            DensityKind::Bkw { energy, .. } => *energy,
        }
    }

    /// Fourth moment `∫ |v|⁴ f`.
    pub fn fourth_moment(&self) -> f64 {
        let d = self.dim as f64;
        match &self.kind {
            DensityKind::Gaussian { variance } => d * (d + 2.0) * variance * variance,
            DensityKind::UniformBall { radius } => d / (d + 4.0) * radius.powi(4),
            DensityKind::TwoBump {
                centers,
                weights,
                bump_radius,
            } => {
                // |c + x|⁴ averaged over an isotropic bump x.
                let (m2, m4) = bump_moments(self.dim, *bump_radius);
                centers
                    .iter()
                    .zip(weights)
                    .map(|(c, w)| {
                        let c2 = norm_sq(c);
                        w * (c2 * c2 + 2.0 * c2 * m2 + 4.0 * c2 * m2 / d + m4)
                    })
                    .sum()
            }
            DensityKind::Bkw { energy, shape } => {
                let t = energy / d;
                d * (d + 2.0) * t * t * shape * (2.0 - shape)
            }
        }
    }

    /// Second-moment matrix `∫ v vᵀ f`, row-major.
    pub fn second_moment_matrix(&self) -> Vec<f64> {
        let d = self.dim;
        let mut m = vec![0.0; d * d];
        let iso = match &self.kind {
            DensityKind::TwoBump {
                centers,
                weights,
                bump_radius,
            } => {
                for (c, w) in centers.iter().zip(weights) {
                    for a in 0..d {
                        for b in 0..d {
                            m[a * d + b] += w * c[a] * c[b];
                        }
                    }
                }
                bump_radius * bump_radius * bump_second_moment_fraction(d) / d as f64
            }
            _ => self.energy() / d as f64,
        };
        for a in 0..d {
            m[a * d + a] += iso;
        }
        m
    }

    /// Squared Frobenius norm of the traceless part of the second-moment matrix.
    pub fn anisotropy(&self) -> f64 {
        let d = self.dim;
        let m = self.second_moment_matrix();
        let iso = self.energy() / d as f64;
        let mut acc = 0.0;
        for a in 0..d {
            for b in 0..d {
                let dev = m[a * d + b] - if a == b { iso } else { 0.0 };
                acc += dev * dev;
            }
        }
        acc
    }

    /// Density value at `v`.
    pub fn density(&self, v: &[f64]) -> f64 {
        let d = self.dim;
        match &self.kind {
            DensityKind::Gaussian { variance } => gaussian_density(d, *variance, norm_sq(v)),
            DensityKind::UniformBall { radius } => {
                if norm_sq(v) <= radius * radius {
                    let ln_vol = ln_unit_sphere_area(d) - (d as f64).ln() + d as f64 * radius.ln();
                    (-ln_vol).exp()
                } else {
                    0.0
                }
            }
            DensityKind::TwoBump {
                centers,
                weights,
                bump_radius,
            } => centers
                .iter()
                .zip(weights)
                .map(|(c, w)| {
                    let r2: f64 = v.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    w * bump_density(d, *bump_radius, r2)
                })
                .sum(),
            DensityKind::Bkw { energy, shape } => bkw_density(d, *energy, *shape, norm_sq(v)),
        }
    }

    /// Draw one velocity into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        let d = self.dim;
        match &self.kind {
            DensityKind::Gaussian { variance } => {
                let s = variance.sqrt();
                out.iter_mut().for_each(|x| *x = s * rng.sample::<f64, _>(StandardNormal));
            }
            DensityKind::UniformBall { radius } => {
                uniform_on_sphere(out, rng);
                let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                out.iter_mut().for_each(|x| *x *= r);
            }
            DensityKind::TwoBump {
                centers,
                weights,
                bump_radius,
            } => {
                let which = usize::from(rng.random::<f64>() >= weights[0]);
                sample_bump(d, *bump_radius, out, rng);
                out.iter_mut().zip(&centers[which]).for_each(|(x, c)| *x += c);
            }
            DensityKind::Bkw { energy, shape } => sample_bkw(d, *energy, *shape, out, rng),
        }
    }

    /// Fisher information `∫ |∇f|² / f`.
    pub fn fisher_information(&self) -> FisherInformation {
        fisher_information(self)
    }
}

fn gaussian_density(dim: usize, variance: f64, r2: f64) -> f64 {
    (-0.5 * r2 / variance - 0.5 * dim as f64 * (2.0 * PI * variance).ln()).exp()
}

/// `E|x|²/ρ²` for the bump profile: `r²/ρ² ~ Beta(d/2, k+1)`.
fn bump_second_moment_fraction(dim: usize) -> f64 {
    let a = 0.5 * dim as f64;
    let b = BUMP_EXPONENT as f64 + 1.0;
    a / (a + b)
}

/// `(E|x|², E|x|⁴)` of a single bump of radius ρ.
fn bump_moments(dim: usize, rho: f64) -> (f64, f64) {
    let a = 0.5 * dim as f64;
    let b = BUMP_EXPONENT as f64 + 1.0;
    let m1 = a / (a + b);
    let m2 = a * (a + 1.0) / ((a + b) * (a + b + 1.0));
    (rho * rho * m1, rho.powi(4) * m2)
}

/// Normalizing constant of `(1 - r²/ρ²)^k` on `R^d`.
fn ln_bump_norm(dim: usize, rho: f64) -> f64 {
    // ∫ (1 - r²)^k d^d x = π^(d/2) Γ(k+1) / Γ(k+1+d/2)
    let a = 0.5 * dim as f64;
    let k = BUMP_EXPONENT as f64;
    a * PI.ln() + ln_gamma(k + 1.0) - ln_gamma(k + 1.0 + a) + dim as f64 * rho.ln()
}

fn bump_density(dim: usize, rho: f64, r2: f64) -> f64 {
    let z = 1.0 - r2 / (rho * rho);
    if z <= 0.0 {
        0.0
    } else {
        z.powi(BUMP_EXPONENT) * (-ln_bump_norm(dim, rho)).exp()
    }
}

fn sample_bump<R: Rng + ?Sized>(dim: usize, rho: f64, out: &mut [f64], rng: &mut R) {
    let beta = Beta::new(0.5 * dim as f64, BUMP_EXPONENT as f64 + 1.0).expect("valid beta shape");
    let r = rho * beta.sample(rng).sqrt();
    uniform_on_sphere(out, rng);
    out.iter_mut().for_each(|x| *x *= r);
}

pub(crate) fn bkw_density(dim: usize, energy: f64, shape: f64, r2: f64) -> f64 {
    let s = shape * energy / dim as f64;
    let (a, b) = bkw_weights(dim, shape);
    gaussian_density(dim, s, r2) * (a + b * r2 / s)
}

/// Mixture sampler: with probability `A` a Gaussian of variance `KT`,
/// otherwise the `|v|²`-biased Gaussian (`|v|²/(KT) ~ χ²_{d+2}`).
pub(crate) fn sample_bkw<R: Rng + ?Sized>(dim: usize, energy: f64, shape: f64, out: &mut [f64], rng: &mut R) {
    let s = shape * energy / dim as f64;
    let (a, _) = bkw_weights(dim, shape);
    if rng.random::<f64>() < a {
        let sd = s.sqrt();
        out.iter_mut().for_each(|x| *x = sd * rng.sample::<f64, _>(StandardNormal));
    } else {
        let chi2: f64 = (0..dim + 2).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
        let r = (s * chi2).sqrt();
        uniform_on_sphere(out, rng);
        out.iter_mut().for_each(|x| *x *= r);
    }
}

/// Where the N velocities must live.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SphereConstraint {
    /// Momentum zero and `Σ|v|² = Nℰ` (the Boltzmann sphere).
    Boltzmann { energy: f64 },
    /// `Σ|v|² = Nℰ` only (Kac's sphere for the scalar rotation model).
    Energy { energy: f64 },
}

impl SphereConstraint {
    pub fn energy(&self) -> f64 {
        match self {
            SphereConstraint::Boltzmann { energy } | SphereConstraint::Energy { energy } => *energy,
        }
    }
}

/// N velocities in `R^d` with cached conserved quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    dim: usize,
    velocities: Vec<f64>,
    momentum: Vec<f64>,
    energy: f64,
    pub time: f64,
    pub collision_count: u64,
    sphere: Option<SphereConstraint>,
}

impl ParticleSystem {
    /// Build a free (unconstrained) state from flat row-major velocities.
    pub fn from_velocities(dim: usize, velocities: Vec<f64>) -> Result<Self> {
        if dim == 0 || velocities.len() % dim != 0 {
            return Err(Error::pre("velocity buffer is not a multiple of the dimension"));
        }
        if velocities.len() / dim < 2 {
            return Err(Error::pre("a particle system needs N ≥ 2"));
        }
        if velocities.iter().any(|x| !x.is_finite()) {
            return Err(Error::pre("velocities must be finite"));
        }
        let mut s = Self {
            dim,
            velocities,
            momentum: vec![0.0; dim],
            energy: 0.0,
            time: 0.0,
            collision_count: 0,
            sphere: None,
        };
        s.refresh();
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.velocities.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub(crate) fn velocities_mut(&mut self) -> &mut [f64] {
        &mut self.velocities
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    /// Cached total momentum `Σ v_i`.
    pub fn momentum(&self) -> &[f64] {
        &self.momentum
    }

    /// Cached total energy `Σ |v_i|²`.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn sphere(&self) -> Option<SphereConstraint> {
        self.sphere
    }

    pub fn is_sphere_constrained(&self) -> bool {
        self.sphere.is_some()
    }

    pub(crate) fn adjust_cache(&mut self, d_momentum: &[f64], d_energy: f64) {
        self.momentum.iter_mut().zip(d_momentum).for_each(|(p, dp)| *p += dp);
        self.energy += d_energy;
    }

    /// Exact totals by compensated summation: (momentum, energy).
    pub fn recompute_totals(&self) -> (Vec<f64>, f64) {
        let d = self.dim;
        let mut mom = vec![Kahan::default(); d];
        let mut en = Kahan::default();
        for v in self.velocities.chunks_exact(d) {
            for (m, x) in mom.iter_mut().zip(v) {
                m.add(*x);
            }
            for x in v {
                en.add(x * x);
            }
        }
        (mom.into_iter().map(|k| k.value()).collect(), en.value())
    }

    /// Replace the caches by recomputed totals.
    pub fn refresh(&mut self) {
        let (m, e) = self.recompute_totals();
        self.momentum = m;
        self.energy = e;
    }

    /// Largest relative disagreement between caches and recomputation.
    pub fn cache_discrepancy(&self) -> f64 {
        let (m, e) = self.recompute_totals();
        let scale = e.max(f64::MIN_POSITIVE);
        let dm = m
            .iter()
            .zip(&self.momentum)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        (dm / scale.sqrt()).max((e - self.energy).abs() / scale)
    }

    /// Relative violation of the sphere constraints, `None` for a free state.
    pub fn sphere_violation(&self) -> Option<(f64, f64)> {
        let sphere = self.sphere?;
        let (m, e) = self.recompute_totals();
        let target = self.n() as f64 * sphere.energy();
        let mom = match sphere {
            SphereConstraint::Boltzmann { .. } => norm_sq(&m).sqrt() / target.sqrt(),
            SphereConstraint::Energy { .. } => 0.0,
        };
        Some((mom, (e - target).abs() / target))
    }

    /// Snapshot of the first `count` particles (all when `count ≥ N`).
    pub fn leading_velocities(&self, count: usize) -> Vec<f64> {
        let k = count.min(self.n()) * self.dim;
        self.velocities[..k].to_vec()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        // Neumaier's variant.
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `N` i.i.d. draws from `f0`.
pub fn sample_iid<R: Rng + ?Sized>(f0: &OneParticleDensity, n: usize, rng: &mut R) -> Result<ParticleSystem> {
    if n < 2 {
        return Err(Error::pre(format!("N = {n}: need at least two particles")));
    }
    let d = f0.dim();
    let mut v = vec![0.0; n * d];
    for chunk in v.chunks_exact_mut(d) {
        f0.sample_into(chunk, rng);
    }
    ParticleSystem::from_velocities(d, v)
}

fn project(system: &ParticleSystem, energy: f64, center: bool) -> Result<ParticleSystem> {
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(Error::pre("sphere energy must be positive"));
    }
    let n = system.n();
    let d = system.dim;
    let mut v = system.velocities.clone();
    if center {
        let (m, _) = system.recompute_totals();
        let mean: Vec<f64> = m.iter().map(|x| x / n as f64).collect();
        for chunk in v.chunks_exact_mut(d) {
            chunk.iter_mut().zip(&mean).for_each(|(x, c)| *x -= c);
        }
    }
    let mut out = ParticleSystem::from_velocities(d, v)?;
    if !(out.energy > 0.0) {
        return Err(Error::pre("state has zero energy after centering (all velocities equal)"));
    }
    let factor = (n as f64 * energy / out.energy).sqrt();
    out.velocities.iter_mut().for_each(|x| *x *= factor);
    out.refresh();
    out.time = system.time;
    out.collision_count = system.collision_count;
    out.sphere = Some(if center {
        SphereConstraint::Boltzmann { energy }
    } else {
        SphereConstraint::Energy { energy }
    });
    Ok(out)
}

/// Center and rescale onto the Boltzmann sphere `{Σv = 0, Σ|v|² = Nℰ}`.
///
/// This is the projection construction, not the exact conditional law of
/// `f_0^{⊗N}` on the sphere.
pub fn condition_to_sphere(system: &ParticleSystem, energy: f64) -> Result<ParticleSystem> {
    project(system, energy, true)
}

/// Rescale onto Kac's energy sphere `Σ v_i² = Nℰ` (no momentum constraint).
pub fn condition_to_energy_sphere(system: &ParticleSystem, energy: f64) -> Result<ParticleSystem> {
    project(system, energy, false)
}

/// Exact draw from the uniform law `γ^N` on the Boltzmann sphere.
pub fn sample_uniform_sphere<R: Rng + ?Sized>(n: usize, dim: usize, energy: f64, rng: &mut R) -> Result<ParticleSystem> {
    let g = sample_iid(&OneParticleDensity::gaussian(dim, 1.0)?, n, rng)?;
    condition_to_sphere(&g, energy)
}

/// Exact draw from the uniform law on Kac's energy sphere `S^(N-1)(√(Nℰ))`.
pub fn sample_uniform_energy_sphere<R: Rng + ?Sized>(n: usize, energy: f64, rng: &mut R) -> Result<ParticleSystem> {
    let g = sample_iid(&OneParticleDensity::gaussian(1, 1.0)?, n, rng)?;
    condition_to_energy_sphere(&g, energy)
}

/// Fisher information `∫ |∇f_0|² / f_0 dv`.
pub fn fisher_information(f0: &OneParticleDensity) -> FisherInformation {
    let d = f0.dim;
    match &f0.kind {
        DensityKind::Gaussian { variance } => FisherInformation::Finite(d as f64 / variance),
        DensityKind::UniformBall { .. } => FisherInformation::Undefined,
        DensityKind::Bkw { energy, shape } => {
            // Radial profile f(r) = g(r)(A + B r²/s), g Gaussian of variance s.
            let s = shape * energy / d as f64;
            let (a, b) = bkw_weights(d, *shape);
            let area = ln_unit_sphere_area(d).exp();
            let integrand = |r: f64| {
                let g = gaussian_density(d, s, r * r);
                let poly = a + b * r * r / s;
                let dpoly = 2.0 * b * r / s;
                // f' = g (dpoly - r/s · poly); f'^2/f = g (dpoly - r poly / s)^2 / poly
                if poly <= 0.0 {
                    return 0.0;
                }
                let df = dpoly - r * poly / s;
                area * r.powi(d as i32 - 1) * g * df * df / poly
            };
            FisherInformation::Finite(quad::integrate_half_line(integrand, 1e-13, 1e-11))
        }
        DensityKind::TwoBump {
            centers,
            weights,
            bump_radius,
        } => FisherInformation::Finite(two_bump_fisher(d, centers, weights, *bump_radius)),
    }
}

/// Gradient of the bump `(1 - r²/ρ²)^k` with respect to `r`, normalized.
fn bump_radial(dim: usize, rho: f64, r: f64) -> (f64, f64) {
    let z = 1.0 - r * r / (rho * rho);
    if z <= 0.0 {
        return (0.0, 0.0);
    }
    let c = (-ln_bump_norm(dim, rho)).exp();
    let k = BUMP_EXPONENT;
    let value = c * z.powi(k);
    let slope = c * k as f64 * z.powi(k - 1) * (-2.0 * r / (rho * rho));
    (value, slope)
}

fn two_bump_fisher(dim: usize, centers: &[Vec<f64>; 2], weights: &[f64; 2], rho: f64) -> f64 {
    let sep = centers[0]
        .iter()
        .zip(&centers[1])
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let single = |w: f64| {
        // Disjoint bumps: I = Σ w_i I(bump).
        let area = ln_unit_sphere_area(dim).exp();
        w * quad::integrate(
            |r| {
                let (v, s) = bump_radial(dim, rho, r);
                if v <= 0.0 {
                    0.0
                } else {
                    area * r.powi(dim as i32 - 1) * s * s / v
                }
            },
            0.0,
            rho,
            1e-14,
            1e-12,
        )
    };
    if sep >= 2.0 * rho {
        return single(weights[0]) + single(weights[1]);
    }
    if dim == 1 {
        let f = |x: f64| {
            let mut val = 0.0;
            let mut der = 0.0;
            for (c, w) in centers.iter().zip(weights) {
                let dx = x - c[0];
                let (v, s) = bump_radial(1, rho, dx.abs());
                val += w * v;
                der += w * s * dx.signum();
            }
            if val <= 0.0 {
                0.0
            } else {
                der * der / val
            }
        };
        let lo = centers[0][0].min(centers[1][0]) - rho;
        let hi = centers[0][0].max(centers[1][0]) + rho;
        return quad::integrate(f, lo, hi, 1e-13, 1e-11);
    }
    // Overlapping bumps: centers are collinear with the origin (zero mean),
    // so integrate in cylindrical coordinates around the center axis.
    let axis: Vec<f64> = {
        let diff: Vec<f64> = centers[0].iter().zip(&centers[1]).map(|(a, b)| a - b).collect();
        let n = norm_sq(&diff).sqrt();
        diff.iter().map(|x| x / n).collect()
    };
    let z0: Vec<f64> = centers.iter().map(|c| crate::model::dot(c, &axis)).collect();
    let ring = if dim == 2 { 2.0 } else { ln_unit_sphere_area(dim - 1).exp() };
    let zlo = z0[0].min(z0[1]) - rho;
    let zhi = z0[0].max(z0[1]) + rho;
    quad::integrate(
        |z| {
            quad::integrate(
                |q| {
                    let mut val = 0.0;
                    let mut gz = 0.0;
                    let mut gq = 0.0;
                    for (c, w) in z0.iter().zip(weights) {
                        let dz = z - c;
                        let r = (dz * dz + q * q).sqrt();
                        let (v, s) = bump_radial(dim, rho, r);
                        val += w * v;
                        if r > 0.0 {
                            gz += w * s * dz / r;
                            gq += w * s * q / r;
                        }
                    }
                    if val <= 0.0 {
                        0.0
                    } else {
                        ring * q.powi(dim as i32 - 2) * (gz * gz + gq * gq) / val
                    }
                },
                0.0,
                rho,
                1e-12,
                1e-9,
            )
        },
        zlo,
        zhi,
        1e-11,
        1e-9,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn rejects_too_few_particles() {
        let f0 = OneParticleDensity::gaussian(3, 1.0).unwrap();
        assert!(sample_iid(&f0, 1, &mut rng()).is_err());
    }

    #[test]
    fn gaussian_sample_variance() {
        let f0 = OneParticleDensity::gaussian(3, 2.0).unwrap();
        let s = sample_iid(&f0, 100_000, &mut rng()).unwrap();
        let var = s.energy() / (3.0 * s.n() as f64);
        assert!((var - 2.0).abs() < 0.02 * 2.0, "variance {var}");
    }

    #[test]
    fn ball_support_is_respected() {
        let f0 = OneParticleDensity::uniform_ball(3, 1.5).unwrap();
        let s = sample_iid(&f0, 20_000, &mut rng()).unwrap();
        assert!(s.velocities().chunks(3).all(|v| norm_sq(v) <= 1.5 * 1.5 + 1e-12));
        let mean_e = s.energy() / s.n() as f64;
        assert!((mean_e - f0.energy()).abs() < 0.02 * f0.energy());
    }

    #[test]
    fn two_bump_half_space_mass() {
        let f0 = OneParticleDensity::two_bump(3, 1.5, 0.6).unwrap();
        let s = sample_iid(&f0, 100_000, &mut rng()).unwrap();
        let right = s.velocities().chunks(3).filter(|v| v[0] > 0.0).count() as f64 / s.n() as f64;
        assert!((right - 0.5).abs() < 0.01, "mass {right}");
        let mean_e = s.energy() / s.n() as f64;
        assert!((mean_e - f0.energy()).abs() < 0.01 * f0.energy());
        let m4: f64 = s.velocities().chunks(3).map(|v| norm_sq(v).powi(2)).sum::<f64>() / s.n() as f64;
        assert!((m4 - f0.fourth_moment()).abs() < 0.01 * f0.fourth_moment());
    }

    #[test]
    fn non_centered_mixture_rejected() {
        let r = OneParticleDensity::new(
            2,
            DensityKind::TwoBump {
                centers: [vec![1.0, 0.0], vec![-0.5, 0.0]],
                weights: [0.5, 0.5],
                bump_radius: 0.2,
            },
        );
        assert!(r.is_err());
    }

    #[test]
    fn conditioning_example_and_idempotence() {
        let s = ParticleSystem::from_velocities(3, vec![1.0, 0.0, 0.0, 3.0, 0.0, 0.0]).unwrap();
        let c = condition_to_sphere(&s, 1.0).unwrap();
        assert_eq!(c.velocities(), &[-1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let f0 = OneParticleDensity::two_bump(3, 1.0, 0.5).unwrap();
        let s = sample_iid(&f0, 500, &mut rng()).unwrap();
        let once = condition_to_sphere(&s, 2.0).unwrap();
        let twice = condition_to_sphere(&once, 2.0).unwrap();
        for (a, b) in once.velocities().iter().zip(twice.velocities()) {
            assert!((a - b).abs() < 1e-12);
        }
        let (m, e) = once.sphere_violation().unwrap();
        assert!(m < 1e-12 && e < 1e-12);
    }

    #[test]
    fn conditioning_all_equal_fails() {
        let s = ParticleSystem::from_velocities(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(condition_to_sphere(&s, 1.0).is_err());
    }

    #[test]
    fn conditioning_rescale_factor_concentrates() {
        let f0 = OneParticleDensity::gaussian(3, 1.0).unwrap();
        let mut r = rng();
        for _ in 0..10 {
            let s = sample_iid(&f0, 10_000, &mut r).unwrap();
            let c = condition_to_sphere(&s, 3.0).unwrap();
            let factor = c.velocity(0)[0] / (s.velocity(0)[0] - s.momentum()[0] / 1e4);
            assert!((factor - 1.0).abs() <= 0.03, "factor {factor}");
        }
    }

    #[test]
    fn uniform_sphere_constraints_hold() {
        let s = sample_uniform_sphere(1000, 3, 3.0, &mut rng()).unwrap();
        let (m, e) = s.sphere_violation().unwrap();
        assert!(m < 1e-12 && e < 1e-12);
        let k = sample_uniform_energy_sphere(100, 1.0, &mut rng()).unwrap();
        assert!(k.sphere_violation().unwrap().1 < 1e-12);
    }

    #[test]
    fn fisher_closed_forms() {
        let g = OneParticleDensity::gaussian(1, 1.0).unwrap();
        assert_eq!(g.fisher_information(), FisherInformation::Finite(1.0));
        let g = OneParticleDensity::gaussian(3, 0.5).unwrap();
        assert_eq!(g.fisher_information(), FisherInformation::Finite(6.0));
        let b = OneParticleDensity::uniform_ball(3, 1.0).unwrap();
        assert_eq!(b.fisher_information(), FisherInformation::Undefined);
        // K = 1 is the Gaussian of variance ℰ/d.
        let k1 = OneParticleDensity::bkw(3, 3.0, 1.0).unwrap();
        match k1.fisher_information() {
            FisherInformation::Finite(v) => assert!((v - 3.0).abs() < 1e-8, "{v}"),
            _ => panic!(),
        }
    }

    #[test]
    fn densities_integrate_to_one_radially() {
        for f0 in [
            OneParticleDensity::bkw(3, 3.0, 0.6).unwrap(),
            OneParticleDensity::gaussian(3, 0.7).unwrap(),
        ] {
            let area = ln_unit_sphere_area(3).exp();
            let mass = quad::integrate_half_line(|r| area * r * r * f0.density(&[r, 0.0, 0.0]), 1e-13, 1e-12);
            assert!((mass - 1.0).abs() < 1e-9);
            let e = quad::integrate_half_line(|r| area * r.powi(4) * f0.density(&[r, 0.0, 0.0]), 1e-13, 1e-12);
            assert!((e - f0.energy()).abs() < 1e-8);
        }
    }
}
