//! Collision kernels and the binary collision rules.
//!
//! Two collision models are supported:
//!
//! * the σ-parametrized elastic collision in `d ≥ 2`,
//!   `v_i* = (v_i + v_j)/2 + |v_i − v_j|/2 · σ`, `v_j* = (v_i + v_j)/2 − |v_i − v_j|/2 · σ`;
//! * Kac's one-dimensional rotation caricature,
//!   `(v_i*, v_j*) = (v_i cos θ + v_j sin θ, −v_i sin θ + v_j cos θ)`.
//!
//! A kernel `B = Γ(|u|) b(cos θ)` supplies the pair rate `Γ` and the law of
//! the deflection angle `θ` between `σ` and `u = v_i − v_j`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Tolerance on `|σ| = 1` accepted by [`collide_pair`].
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// Cutoff at which the default true-Maxwell constant normalizes the
/// truncated angular mass to one.
pub const TMM_REFERENCE_CUTOFF: f64 = 0.1;

/// Exponent of the angular singularity `b(cos θ) = C θ^(-5/2)`.
const TMM_EXPONENT: f64 = -2.5;

/// Kernel of the jump process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CollisionKernel {
    /// `Γ(|u|) = C |u|`, uniform deflection.
    HardSpheres { constant: f64 },
    /// `b(cos θ) = C θ^(-5/2)` truncated to `θ ∈ [ε, π]`.
    TrueMaxwell(TrueMaxwell),
    /// Grad's cutoff: `Γ ≡ 1`, `b ≡ 1` (σ uniform on the sphere).
    CutoffMaxwell,
}

/// Angular-cutoff true Maxwell molecules in a fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueMaxwell {
    cutoff: f64,
    constant: f64,
    dim: usize,
    /// `C ∫_ε^π θ^(-5/2) sin^(d-2) θ dθ`, the jump rate of every pair.
    mass: f64,
}

/// Both velocities of a colliding pair, each of the model dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityPair {
    pub vi: Vec<f64>,
    pub vj: Vec<f64>,
}

impl VelocityPair {
    pub fn new(vi: Vec<f64>, vj: Vec<f64>) -> Result<Self> {
        if vi.len() != vj.len() || vi.is_empty() {
            return Err(Error::pre("pair velocities must share a nonzero dimension"));
        }
        if vi.iter().chain(&vj).any(|x| !x.is_finite()) {
            return Err(Error::pre("pair velocities must be finite"));
        }
        Ok(Self { vi, vj })
    }

    pub fn dim(&self) -> usize {
        self.vi.len()
    }

    pub fn momentum(&self) -> Vec<f64> {
        self.vi.iter().zip(&self.vj).map(|(a, b)| a + b).collect()
    }

    pub fn energy(&self) -> f64 {
        norm_sq(&self.vi) + norm_sq(&self.vj)
    }
}

fn angular_integrand(theta: f64, dim: usize) -> f64 {
    theta.powf(TMM_EXPONENT) * theta.sin().powi(dim as i32 - 2)
}

/// `∫_ε^π θ^(-5/2) sin^(d-2) θ dθ`.
pub fn truncated_angular_integral(cutoff: f64, dim: usize) -> f64 {
    // The integrand is steep near the cutoff; split the range geometrically.
    let mut total = 0.0;
    let mut lo = cutoff;
    while lo < PI {
        let hi = (lo * 2.0).min(PI);
        total += quad::integrate(|t| angular_integrand(t, dim), lo, hi, 1e-15, 1e-13);
        lo = hi;
    }
    total
}

impl TrueMaxwell {
    pub fn new(cutoff: f64, constant: f64, dim: usize) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff < PI) {
            return Err(Error::pre(format!("tMM cutoff {cutoff} outside (0, π)")));
        }
        if !(constant > 0.0 && constant.is_finite()) {
            return Err(Error::pre(format!("tMM constant {constant} must be positive")));
        }
        if dim < 2 {
            return Err(Error::pre("true Maxwell kernel needs dimension ≥ 2"));
        }
        let mass = constant * truncated_angular_integral(cutoff, dim);
        Ok(Self {
            cutoff,
            constant,
            dim,
            mass,
        })
    }

    /// Kernel whose constant makes the mass at `ε = 0.1` equal to one.
    pub fn normalized(cutoff: f64, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::pre("true Maxwell kernel needs dimension ≥ 2"));
        }
        let constant = 1.0 / truncated_angular_integral(TMM_REFERENCE_CUTOFF, dim);
        Self::new(cutoff, constant, dim)
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn angular_mass(&self) -> f64 {
        self.mass
    }

    /// Draw θ with density ∝ θ^(-5/2) sin^(d-2) θ on [ε, π].
    ///
    /// Inverse CDF of the power-law majorant θ^(d-9/2), then acceptance with
    /// probability (sin θ / θ)^(d-2).
    pub fn sample_deflection<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let q = self.dim as f64 - 3.5;
        let lo = self.cutoff.powf(q);
        let hi = PI.powf(q);
        loop {
            let u: f64 = rng.random();
            let theta = (lo + u * (hi - lo)).powf(1.0 / q);
            if self.dim == 2 {
                return theta;
            }
            let accept = (theta.sin() / theta).powi(self.dim as i32 - 2);
            if rng.random::<f64>() < accept {
                return theta;
            }
        }
    }

    /// CDF of the truncated deflection law, by quadrature.
    pub fn deflection_cdf(&self, theta: f64) -> f64 {
        if theta <= self.cutoff {
            return 0.0;
        }
        if theta >= PI {
            return 1.0;
        }
        let mut part = 0.0;
        let mut lo = self.cutoff;
        while lo < theta {
            let hi = (lo * 2.0).min(theta);
            part += quad::integrate(|t| angular_integrand(t, self.dim), lo, hi, 1e-15, 1e-13);
            lo = hi;
        }
        part * self.constant / self.mass
    }
}

impl CollisionKernel {
    pub fn hard_spheres(constant: f64) -> Result<Self> {
        if !(constant > 0.0 && constant.is_finite()) {
            return Err(Error::pre(format!("hard-sphere constant {constant} must be positive")));
        }
        Ok(CollisionKernel::HardSpheres { constant })
    }

    pub fn name(&self) -> &'static str {
        match self {
            CollisionKernel::HardSpheres { .. } => "hard_spheres",
            CollisionKernel::TrueMaxwell(_) => "true_maxwell",
            CollisionKernel::CutoffMaxwell => "cutoff_maxwell",
        }
    }

    /// Whether the pair rate is independent of the relative speed.
    pub fn is_maxwellian(&self) -> bool {
        !matches!(self, CollisionKernel::HardSpheres { .. })
    }
}

/// Rate `Γ(|u|)` of the exponential clock attached to a pair.
pub fn pair_rate(kernel: &CollisionKernel, relative_speed: f64) -> f64 {
    debug_assert!(relative_speed >= 0.0);
    match kernel {
        CollisionKernel::HardSpheres { constant } => constant * relative_speed,
        CollisionKernel::TrueMaxwell(tmm) => tmm.mass,
        CollisionKernel::CutoffMaxwell => 1.0,
    }
}

#[inline]
pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fill `out` with a uniform point of `S^(d-1)`.
pub fn uniform_on_sphere<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    loop {
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let n = norm_sq(out).sqrt();
        if n > 1e-150 {
            out.iter_mut().for_each(|x| *x /= n);
            return;
        }
    }
}

/// σ at angle θ from the unit vector `axis`, with uniform azimuth.
pub(crate) fn rotate_from_axis<R: Rng + ?Sized>(
    axis: &[f64],
    theta: f64,
    out: &mut [f64],
    rng: &mut R,
) {
    // Uniform unit vector orthogonal to the axis.
    loop {
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let proj = dot(out, axis);
        out.iter_mut().zip(axis).for_each(|(x, a)| *x -= proj * a);
        let n = norm_sq(out).sqrt();
        if n > 1e-12 {
            let (s, c) = theta.sin_cos();
            out.iter_mut()
                .zip(axis)
                .for_each(|(x, a)| *x = c * a + s * *x / n);
            return;
        }
    }
}

/// Draw σ for a collision whose pre-collision relative direction is `relative_direction`.
pub fn sample_sigma<R: Rng + ?Sized>(
    kernel: &CollisionKernel,
    relative_direction: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = norm_sq(relative_direction).sqrt();
    if relative_direction.len() < 2 {
        return Err(Error::pre("σ sampling needs dimension ≥ 2"));
    }
    if n == 0.0 || !n.is_finite() {
        return Err(Error::pre("relative direction is degenerate"));
    }
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::pre(format!("relative direction has norm {n}, expected 1")));
    }
    let mut sigma = vec![0.0; relative_direction.len()];
    sample_sigma_into(kernel, relative_direction, &mut sigma, rng)?;
    Ok(sigma)
}

/// Allocation-free σ sampler used by the event loop; `relative_direction` must be unit.
#[inline]
pub(crate) fn sample_sigma_into<R: Rng + ?Sized>(
    kernel: &CollisionKernel,
    relative_direction: &[f64],
    sigma: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    match kernel {
        CollisionKernel::HardSpheres { .. } | CollisionKernel::CutoffMaxwell => {
            uniform_on_sphere(sigma, rng);
        }
        CollisionKernel::TrueMaxwell(tmm) => {
            if tmm.dim != relative_direction.len() {
                return Err(Error::pre(format!(
                    "kernel built for d = {}, velocities have d = {}",
                    tmm.dim,
                    relative_direction.len()
                )));
            }
            let theta = tmm.sample_deflection(rng);
            rotate_from_axis(relative_direction, theta, sigma, rng);
        }
    }
    Ok(())
}

/// Post-collision velocities for a given σ, written in place.
#[inline]
pub(crate) fn collide_in_place(vi: &mut [f64], vj: &mut [f64], sigma: &[f64]) {
    let mut r2 = 0.0;
    for k in 0..vi.len() {
        let d = vi[k] - vj[k];
        r2 += d * d;
    }
    let half_speed = 0.5 * r2.sqrt();
    for k in 0..vi.len() {
        let center = 0.5 * (vi[k] + vj[k]);
        let shift = half_speed * sigma[k];
        vi[k] = center + shift;
        vj[k] = center - shift;
    }
}

/// The elastic σ-collision rule.
pub fn collide_pair(pair: &VelocityPair, sigma: &[f64]) -> Result<VelocityPair> {
    if sigma.len() != pair.dim() {
        return Err(Error::pre("σ dimension differs from the velocity dimension"));
    }
    let norm = norm_sq(sigma).sqrt();
    if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(Error::pre(format!("σ must be a unit vector, |σ| = {norm}")));
    }
    let mut out = pair.clone();
    collide_in_place(&mut out.vi, &mut out.vj, sigma);
    Ok(out)
}

/// Kac's rotation of a scalar pair by `theta`.
#[inline]
pub fn kac_rotate(vi: f64, vj: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (vi * c + vj * s, -vi * s + vj * c)
}
