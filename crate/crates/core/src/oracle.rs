//! Reference solutions of the limiting Boltzmann equation.
//!
//! Everything here assumes the mean-field normalization of the engine: each
//! particle collides at rate 1 in the limit `N → ∞` under the cutoff Maxwell
//! kernel, and the one-dimensional model is Kac's rotation model with a
//! uniform angle.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::init::{self, bkw_min_shape, DensityKind, OneParticleDensity};
use crate::model::{self, kac_rotate, CollisionKernel};
use crate::quad;

/// Centered Gaussian with total second moment `energy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    dim: usize,
    energy: f64,
}

impl Equilibrium {
    pub fn new(dim: usize, energy: f64) -> Result<Self> {
        if dim == 0 || !(energy > 0.0) || !energy.is_finite() {
            return Err(Error::pre("equilibrium needs d ≥ 1 and a positive finite energy"));
        }
        Ok(Self { dim, energy })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Per-coordinate variance `ℰ/d`.
    pub fn variance(&self) -> f64 {
        self.energy / self.dim as f64
    }

    pub fn log_density(&self, v: &[f64]) -> f64 {
        let s = self.variance();
        -0.5 * self.dim as f64 * (TAU * s).ln() - 0.5 * model::norm_sq(v) / s
    }

    pub fn density(&self, v: &[f64]) -> f64 {
        self.log_density(v).exp()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        let sd = self.variance().sqrt();
        out.iter_mut().for_each(|x| *x = sd * rng.sample::<f64, _>(StandardNormal));
    }

    /// `E|v|⁴ = d(d+2)(ℰ/d)²`.
    pub fn fourth_moment(&self) -> f64 {
        let d = self.dim as f64;
        d * (d + 2.0) * self.variance().powi(2)
    }

    pub fn as_density(&self) -> OneParticleDensity {
        OneParticleDensity::gaussian(self.dim, self.variance()).expect("validated parameters")
    }
}

/// Decay rate of the fourth moment under the cutoff Maxwell kernel.
///
/// For `d ≥ 2` the uniform scattering rule gives `(d − 1)/(2d)`; the Kac
/// rotation model gives `1 − E[cos⁴θ + sin⁴θ] = 1/4`.
pub fn fourth_moment_rate(dim: usize) -> f64 {
    if dim == 1 {
        0.25
    } else {
        let d = dim as f64;
        (d - 1.0) / (2.0 * d)
    }
}

/// Decay rate of the traceless part of the second-moment matrix.
pub const ANISOTROPY_RATE: f64 = 0.5;

/// Closed fourth-moment dynamics of the cutoff Maxwell Boltzmann equation.
///
/// `m4(t) = m4_eq + C e^{−λ4 t} + a/(1 − λ4) · e^{−t}`, where `a = |D_0|²/d`
/// comes from the traceless part `D_0` of the initial second-moment matrix
/// and `C` matches `m4(0)`. For isotropic data this is a single exponential.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCurve {
    dim: usize,
    energy: f64,
    initial_fourth: f64,
    anisotropy: f64,
}

impl MomentCurve {
    pub fn new(kernel: &CollisionKernel, f0: &OneParticleDensity) -> Result<Self> {
        Self::from_moments(kernel, f0.dim(), f0.energy(), f0.fourth_moment(), f0.anisotropy())
    }

    /// `anisotropy` is the squared Frobenius norm of the traceless second-moment matrix.
    pub fn from_moments(kernel: &CollisionKernel, dim: usize, energy: f64, initial_fourth: f64, anisotropy: f64) -> Result<Self> {
        if !matches!(kernel, CollisionKernel::CutoffMaxwell) {
            return Err(Error::UnsupportedOracle(format!(
                "closed moment dynamics require the cutoff Maxwell kernel, got {}",
                kernel.name()
            )));
        }
        if dim == 0 || !(energy > 0.0) || !(initial_fourth >= 0.0) || !(anisotropy >= 0.0) {
            return Err(Error::pre("moment curve needs d ≥ 1, ℰ > 0 and nonnegative moments"));
        }
        let anisotropy = if dim == 1 { 0.0 } else { anisotropy };
        Ok(Self {
            dim,
            energy,
            initial_fourth,
            anisotropy,
        })
    }

    pub fn rate(&self) -> f64 {
        fourth_moment_rate(self.dim)
    }

    pub fn equilibrium_fourth(&self) -> f64 {
        Equilibrium::new(self.dim, self.energy).expect("validated").fourth_moment()
    }

    /// Second moment, conserved.
    pub fn second_moment(&self, _t: f64) -> f64 {
        self.energy
    }

    pub fn fourth_moment(&self, t: f64) -> f64 {
        let lambda = self.rate();
        let m_eq = self.equilibrium_fourth();
        let forced = self.anisotropy / self.dim as f64 / (1.0 - lambda);
        let c = self.initial_fourth - m_eq - forced;
        m_eq + c * (-lambda * t).exp() + forced * (-t).exp()
    }

    /// `m4` on a time grid.
    pub fn evaluate(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.fourth_moment(t)).collect()
    }
}

/// `E|v|⁴` of the limit solution at time `t` started from `f0`.
pub fn m4_reference(kernel: &CollisionKernel, f0: &OneParticleDensity, t: f64) -> Result<f64> {
    Ok(MomentCurve::new(kernel, f0)?.fourth_moment(t))
}

/// Exact relaxing solution of the cutoff Maxwell equation with Gaussian-polynomial form.
///
/// `f_t(v) = γ_{KT}(v) · [A + B|v|²/(KT)]` with `T = ℰ/d`,
/// `B = (1 − K)/(2K)`, `A = ((d + 2)K − d)/(2K)` and
/// `K(t) = 1 − (1 − K_0) e^{−λ t}`, `λ = λ4 / 2`.
/// The profile is a density only while `K ≥ d/(d + 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BkwProfile {
    dim: usize,
    energy: f64,
    initial_shape: f64,
}

impl BkwProfile {
    pub fn new(dim: usize, energy: f64, initial_shape: f64) -> Result<Self> {
        if dim == 0 || !(energy > 0.0) || !energy.is_finite() {
            return Err(Error::pre("profile needs d ≥ 1 and a positive finite energy"));
        }
        let lo = bkw_min_shape(dim);
        if !(initial_shape >= lo && initial_shape <= 1.0) {
            return Err(Error::Domain(format!(
                "initial shape {initial_shape} outside [{lo}, 1]; the profile would be negative"
            )));
        }
        Ok(Self {
            dim,
            energy,
            initial_shape,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn rate(&self) -> f64 {
        0.5 * fourth_moment_rate(self.dim)
    }

    /// Earliest time at which the profile is a density (nonpositive).
    pub fn t_min(&self) -> f64 {
        let c = 1.0 - self.initial_shape;
        if c == 0.0 {
            return f64::NEG_INFINITY;
        }
        -((1.0 - bkw_min_shape(self.dim)) / c).ln() / self.rate()
    }

    pub fn shape(&self, t: f64) -> Result<f64> {
        if t < self.t_min() - 1e-12 {
            return Err(Error::Domain(format!("profile is negative before t = {}", self.t_min())));
        }
        let k = 1.0 - (1.0 - self.initial_shape) * (-self.rate() * t).exp();
        Ok(k.max(bkw_min_shape(self.dim)))
    }

    /// `dK/dt`.
    pub fn shape_derivative(&self, t: f64) -> f64 {
        self.rate() * (1.0 - self.initial_shape) * (-self.rate() * t).exp()
    }

    pub fn at(&self, t: f64) -> Result<OneParticleDensity> {
        OneParticleDensity::bkw(self.dim, self.energy, self.shape(t)?)
    }

    pub fn density(&self, t: f64, v: &[f64]) -> Result<f64> {
        if v.len() != self.dim {
            return Err(Error::pre("velocity dimension mismatch"));
        }
        Ok(init::bkw_density(self.dim, self.energy, self.shape(t)?, model::norm_sq(v)))
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, t: f64, out: &mut [f64], rng: &mut R) -> Result<()> {
        self.at(t)?.sample_into(out, rng);
        Ok(())
    }

    pub fn fourth_moment(&self, t: f64) -> Result<f64> {
        Ok(self.at(t)?.fourth_moment())
    }

    /// `H(f_t | γ) = ∫ f_t log(f_t/γ)` by radial quadrature.
    pub fn relative_entropy(&self, t: f64) -> Result<f64> {
        let k = self.shape(t)?;
        let d = self.dim as f64;
        let (a, b) = init::bkw_weights(self.dim, k);
        let ln_area = init::ln_unit_sphere_area(self.dim);
        // Radial integrand in the scaled variable x = r / √s.
        let integrand = |x: f64| {
            let x2 = x * x;
            let poly = a + b * x2;
            if poly <= 0.0 {
                return 0.0;
            }
            let ln_gauss = -0.5 * d * TAU.ln() - 0.5 * x2;
            let f_scaled = (ln_area + (d - 1.0) * x.ln() + ln_gauss).exp() * poly;
            let ln_ratio = -0.5 * d * k.ln() - 0.5 * x2 + 0.5 * x2 * k + poly.ln();
            f_scaled * ln_ratio
        };
        Ok(quad::integrate(integrand, 0.0, 12.0, 1e-13, 1e-12) + quad::integrate(integrand, 12.0, 40.0, 1e-15, 1e-12))
    }
}

/// BKW profile matching a BKW initial density; a Gaussian is the stationary member `K = 1`.
pub fn bkw_from_initial(f0: &OneParticleDensity) -> Result<BkwProfile> {
    match f0.kind() {
        DensityKind::Bkw { energy, shape } => BkwProfile::new(f0.dim(), *energy, *shape),
        DensityKind::Gaussian { variance } => BkwProfile::new(f0.dim(), variance * f0.dim() as f64, 1.0),
        _ => Err(Error::UnsupportedOracle("exact profile exists only for BKW or Gaussian initial data".into())),
    }
}

/// Exact sampler of the cutoff Maxwell Boltzmann solution via Wild's expansion.
///
/// A velocity at time `t` is either an untouched draw from `f_0` (the last
/// collision clock exceeds `t`) or the outgoing velocity of a collision at time
/// `t − τ` between two independent velocities of that time. The expected
/// number of `f_0` draws per sample is `e^t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WildSampler {
    f0: OneParticleDensity,
}

impl WildSampler {
    pub fn new(f0: OneParticleDensity) -> Self {
        Self { f0 }
    }

    pub fn initial(&self) -> &OneParticleDensity {
        &self.f0
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, t: f64, out: &mut [f64], rng: &mut R) {
        self.sample_rec(t, out, rng);
    }

    fn sample_rec<R: Rng + ?Sized>(&self, t: f64, out: &mut [f64], rng: &mut R) {
        let d = self.f0.dim();
        let tau: f64 = rng.sample(Exp1);
        if tau >= t {
            self.f0.sample_into(out, rng);
            return;
        }
        let s = t - tau;
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        self.sample_rec(s, &mut a, rng);
        self.sample_rec(s, &mut b, rng);
        if d == 1 {
            let theta = rng.random::<f64>() * TAU;
            out[0] = kac_rotate(a[0], b[0], theta).0;
            return;
        }
        let mut sigma = vec![0.0; d];
        model::uniform_on_sphere(&mut sigma, rng);
        let speed = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        for k in 0..d {
            out[k] = 0.5 * (a[k] + b[k]) + 0.5 * speed * sigma[k];
        }
    }

    /// `count` independent samples, row-major.
    pub fn sample_many<R: Rng + ?Sized>(&self, t: f64, count: usize, rng: &mut R) -> Vec<f64> {
        let d = self.f0.dim();
        let mut out = vec![0.0; count * d];
        for row in out.chunks_exact_mut(d) {
            self.sample_rec(t, row, rng);
        }
        out
    }
}

/// Unit sphere area, exposed for quadrature checks.
pub fn unit_sphere_area(dim: usize) -> f64 {
    init::ln_unit_sphere_area(dim).exp()
}

/// `∫_{R^d} g(|v|) dv` for a radial integrand, by quadrature in `r`.
pub fn radial_integral<F: Fn(f64) -> f64>(dim: usize, g: F, r_max: f64) -> f64 {
    let area = unit_sphere_area(dim);
    let p = dim as f64 - 1.0;
    let f = |r: f64| if r == 0.0 && p > 0.0 { 0.0 } else { area * r.powf(p) * g(r) };
    let split = 0.25 * r_max;
    quad::integrate(&f, 0.0, split, 1e-14, 1e-13) + quad::integrate(&f, split, r_max, 1e-14, 1e-13)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_rng;

    #[test]
    fn equilibrium_examples() {
        let e = Equilibrium::new(1, 1.0).unwrap();
        assert!((e.density(&[0.0]) - 1.0 / TAU.sqrt()).abs() < 1e-15);
        let e3 = Equilibrium::new(3, 3.0).unwrap();
        assert!((e3.variance() - 1.0).abs() < 1e-15);
        assert!((e3.density(&[0.0; 3]) - TAU.powf(-1.5)).abs() < 1e-15);
        assert!(Equilibrium::new(3, 0.0).is_err());
    }

    #[test]
    fn equilibrium_mass_and_energy() {
        for d in [1, 2, 3] {
            let e = Equilibrium::new(d, 2.5).unwrap();
            let g = |r: f64| {
                let mut v = vec![0.0; d];
                v[0] = r;
                e.density(&v)
            };
            let mass = radial_integral(d, g, 30.0);
            let energy = radial_integral(d, |r| r * r * g(r), 30.0);
            let m4 = radial_integral(d, |r| r.powi(4) * g(r), 30.0);
            let mass = if d == 1 { 2.0 * mass / unit_sphere_area(1) } else { mass };
            let energy = if d == 1 { 2.0 * energy / unit_sphere_area(1) } else { energy };
            let m4 = if d == 1 { 2.0 * m4 / unit_sphere_area(1) } else { m4 };
            assert!((mass - 1.0).abs() < 1e-8, "d={d} mass={mass}");
            assert!((energy - 2.5).abs() < 1e-8, "d={d} energy={energy}");
            assert!((m4 - e.fourth_moment()).abs() < 1e-7);
        }
    }

    #[test]
    fn moment_curve_fixed_point_and_limit() {
        let k = CollisionKernel::CutoffMaxwell;
        let g = OneParticleDensity::gaussian(3, 1.0).unwrap();
        let c = MomentCurve::new(&k, &g).unwrap();
        for t in [0.0, 1.0, 7.0] {
            assert!((c.fourth_moment(t) - 15.0).abs() < 1e-12);
        }
        let b = OneParticleDensity::two_bump(3, 1.5, 0.5).unwrap();
        let c = MomentCurve::new(&k, &b).unwrap();
        assert!((c.fourth_moment(0.0) - b.fourth_moment()).abs() < 1e-12);
        let eq = Equilibrium::new(3, b.energy()).unwrap().fourth_moment();
        assert!((c.fourth_moment(200.0) - eq).abs() < 1e-12);
        assert!(MomentCurve::new(&CollisionKernel::hard_spheres(1.0).unwrap(), &b).is_err());
    }

    #[test]
    fn fourth_moment_rate_in_three_dimensions() {
        assert!((fourth_moment_rate(3) - 1.0 / 3.0).abs() < 1e-15);
    }

    /// Monte Carlo estimate of `d/dt E φ(v)` under the collision operator at `f`.
    fn collision_rate_mc(f: &OneParticleDensity, phi: impl Fn(&[f64]) -> f64, samples: usize, seed: u64) -> (f64, f64) {
        let d = f.dim();
        let mut rng = run_rng(seed, 0);
        let (mut a, mut b, mut sigma) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..samples {
            f.sample_into(&mut a, &mut rng);
            f.sample_into(&mut b, &mut rng);
            let before = phi(&a);
            let after = if d == 1 {
                let th = rng.random::<f64>() * TAU;
                phi(&[kac_rotate(a[0], b[0], th).0])
            } else {
                model::uniform_on_sphere(&mut sigma, &mut rng);
                let speed = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                let out: Vec<f64> = (0..d).map(|k| 0.5 * (a[k] + b[k]) + 0.5 * speed * sigma[k]).collect();
                phi(&out)
            };
            let x = after - before;
            sum += x;
            sum2 += x * x;
        }
        let n = samples as f64;
        let mean = sum / n;
        (mean, ((sum2 / n - mean * mean) / n).sqrt())
    }

    #[test]
    fn fourth_moment_rate_from_collision_integral() {
        // Isotropic non-equilibrium data: d m4/dt = −λ4 (m4 − m4_eq).
        let f = OneParticleDensity::uniform_ball(3, 2.0).unwrap();
        let m4 = |v: &[f64]| model::norm_sq(v).powi(2);
        let (rate, err) = collision_rate_mc(&f, m4, 2_000_000, 17);
        let eq = Equilibrium::new(3, f.energy()).unwrap().fourth_moment();
        let lambda = -rate / (f.fourth_moment() - eq);
        let lambda_err = err / (f.fourth_moment() - eq).abs();
        assert!(lambda_err < 0.01 * lambda);
        assert!((lambda / fourth_moment_rate(3) - 1.0).abs() < 0.03, "λ4 = {lambda} ± {lambda_err}");
    }

    #[test]
    fn anisotropic_fourth_moment_derivative_from_collision_integral() {
        let f = OneParticleDensity::two_bump(3, 1.5, 0.5).unwrap();
        let curve = MomentCurve::new(&CollisionKernel::CutoffMaxwell, &f).unwrap();
        let h = 1e-6;
        let slope = (curve.fourth_moment(h) - curve.fourth_moment(0.0)) / h;
        let (rate, err) = collision_rate_mc(&f, |v| model::norm_sq(v).powi(2), 2_000_000, 23);
        assert!((rate - slope).abs() < 4.0 * err + 1e-4 * slope.abs(), "{rate} ± {err} vs {slope}");
    }

    #[test]
    fn kac_fourth_moment_rate_from_collision_integral() {
        let f = OneParticleDensity::uniform_ball(1, 2.0).unwrap();
        let (rate, err) = collision_rate_mc(&f, |v| v[0].powi(4), 2_000_000, 29);
        let eq = Equilibrium::new(1, f.energy()).unwrap().fourth_moment();
        let lambda = -rate / (f.fourth_moment() - eq);
        let lambda_err = err / (f.fourth_moment() - eq).abs();
        assert!((lambda - fourth_moment_rate(1)).abs() < 4.0 * lambda_err + 1e-3);
    }

    #[test]
    fn bkw_mass_energy_and_moment_consistency() {
        for d in [1usize, 2, 3] {
            let p = BkwProfile::new(d, 2.0, bkw_min_shape(d)).unwrap();
            let curve = MomentCurve::new(&CollisionKernel::CutoffMaxwell, &p.at(0.0).unwrap()).unwrap();
            for t in [0.0, 0.3, 1.0, 4.0] {
                let dens = |r: f64| {
                    let mut v = vec![0.0; d];
                    v[0] = r;
                    p.density(t, &v).unwrap()
                };
                let scale = if d == 1 { 2.0 / unit_sphere_area(1) } else { 1.0 };
                let mass = scale * radial_integral(d, dens, 40.0);
                let energy = scale * radial_integral(d, |r| r * r * dens(r), 40.0);
                let m4 = scale * radial_integral(d, |r| r.powi(4) * dens(r), 40.0);
                assert!((mass - 1.0).abs() < 1e-8, "d={d} t={t} mass={mass}");
                assert!((energy - 2.0).abs() < 1e-8, "d={d} t={t} energy={energy}");
                assert!((m4 - p.fourth_moment(t).unwrap()).abs() < 1e-7);
                assert!((m4 - curve.fourth_moment(t)).abs() < 1e-6, "d={d} t={t}: {m4} vs {}", curve.fourth_moment(t));
            }
        }
    }

    #[test]
    fn bkw_domain_errors_and_limit() {
        assert!(BkwProfile::new(3, 1.0, 0.5).is_err());
        let p = BkwProfile::new(3, 3.0, 0.6).unwrap();
        assert!(p.density(p.t_min() - 1.0, &[0.0; 3]).is_err());
        assert!(p.density(p.t_min(), &[0.0; 3]).is_ok());
        // K within 1e−7 of 1.
        let t = -(1e-7f64 / 0.4).ln() / p.rate() + 1.0;
        assert!(1.0 - p.shape(t).unwrap() < 1e-7);
        let eq = Equilibrium::new(3, 3.0).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let v = [0.03 * i as f64, 0.0, 0.0];
            worst = worst.max((p.density(t, &v).unwrap() - eq.density(&v)).abs());
        }
        assert!(worst <= 1e-6);
    }

    #[test]
    fn bkw_relative_entropy_is_non_increasing() {
        for d in [1, 3] {
            let p = BkwProfile::new(d, 1.0, bkw_min_shape(d)).unwrap();
            let values: Vec<f64> = (0..50).map(|i| p.relative_entropy(0.4 * i as f64).unwrap()).collect();
            assert!(values[0] > 0.0);
            for w in values.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{w:?}");
            }
            assert!(values[49] >= 0.0);
        }
        let eq = BkwProfile::new(3, 1.0, 1.0).unwrap();
        assert!(eq.relative_entropy(0.0).unwrap().abs() < 1e-10);
    }

    /// Monte Carlo `Q(f,f)(v) − ∂_t f(v)` for the profile, with its standard error.
    fn bkw_residual(p: &BkwProfile, t: f64, v: &[f64], samples: usize, seed: u64) -> (f64, f64, f64) {
        let d = p.dim();
        let k = p.shape(t).unwrap();
        let f = |w: &[f64]| init::bkw_density(d, p.energy(), k, model::norm_sq(w));
        // Proposal for the collision partner: a wide Gaussian.
        let prop = Equilibrium::new(d, 2.0 * p.energy()).unwrap();
        let mut rng = run_rng(seed, 1);
        let (mut w, mut sigma, mut a, mut b) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..samples {
            prop.sample_into(&mut w, &mut rng);
            let weight = 1.0 / prop.density(&w);
            let gain = if d == 1 {
                let th = rng.random::<f64>() * TAU;
                let (c, s) = (th.cos(), th.sin());
                a[0] = v[0] * c - w[0] * s;
                b[0] = v[0] * s + w[0] * c;
                f(&a) * f(&b)
            } else {
                model::uniform_on_sphere(&mut sigma, &mut rng);
                let speed = v.iter().zip(&w).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                for i in 0..d {
                    a[i] = 0.5 * (v[i] + w[i]) + 0.5 * speed * sigma[i];
                    b[i] = 0.5 * (v[i] + w[i]) - 0.5 * speed * sigma[i];
                }
                f(&a) * f(&b)
            };
            let x = gain * weight;
            sum += x;
            sum2 += x * x;
        }
        let n = samples as f64;
        let gain = sum / n;
        let gain_err = ((sum2 / n - gain * gain) / n).sqrt();
        let h = 1e-6;
        let df_dk = (init::bkw_density(d, p.energy(), k + h, model::norm_sq(v))
            - init::bkw_density(d, p.energy(), k - h, model::norm_sq(v)))
            / (2.0 * h);
        let dt_f = df_dk * p.shape_derivative(t);
        (gain - f(v) - dt_f, gain_err, dt_f)
    }

    #[test]
    fn bkw_solves_the_equation() {
        for d in [1usize, 2, 3] {
            let p = BkwProfile::new(d, d as f64, bkw_min_shape(d)).unwrap();
            let mut rng = run_rng(99, d as u64);
            for (i, t) in [0.0, 0.7, 2.0].into_iter().enumerate() {
                for j in 0..3 {
                    let mut v = vec![0.0; d];
                    p.sample_into(t, &mut v, &mut rng).unwrap();
                    let (res, err, dt_f) = bkw_residual(&p, t, &v, 400_000, (10 * i + j) as u64);
                    assert!(res.abs() < 5.0 * err + 1e-9, "d={d} t={t} v={v:?}: residual {res} ± {err}, ∂t f = {dt_f}");
                }
            }
        }
    }

    #[test]
    fn wild_sampler_matches_moment_curve() {
        let f0 = OneParticleDensity::two_bump(3, 1.5, 0.5).unwrap();
        let curve = MomentCurve::new(&CollisionKernel::CutoffMaxwell, &f0).unwrap();
        let w = WildSampler::new(f0);
        let mut rng = run_rng(5, 3);
        let t = 1.0;
        let xs = w.sample_many(t, 200_000, &mut rng);
        let vals: Vec<f64> = xs.chunks_exact(3).map(|v| model::norm_sq(v).powi(2)).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt() / n.sqrt();
        assert!((mean - curve.fourth_moment(t)).abs() < 4.0 * sd, "{mean} ± {sd} vs {}", curve.fourth_moment(t));
        let e = xs.chunks_exact(3).map(model::norm_sq).sum::<f64>() / n;
        assert!((e - w.initial().energy()).abs() < 0.02);
    }

    #[test]
    fn wild_sampler_reproduces_bkw() {
        let p = BkwProfile::new(3, 3.0, 0.6).unwrap();
        let w = WildSampler::new(p.at(0.0).unwrap());
        let mut rng = run_rng(8, 1);
        let t = 1.5;
        let xs = w.sample_many(t, 200_000, &mut rng);
        let vals: Vec<f64> = xs.chunks_exact(3).map(|v| model::norm_sq(v).powi(2)).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt() / n.sqrt();
        assert!((mean - p.fourth_moment(t).unwrap()).abs() < 4.0 * sd);
    }
}
