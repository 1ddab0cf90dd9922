//! Exact one-dimensional projections of tensor powers of the BKW family.
//!
//! The one-particle marginal of a radial BKW density along any unit vector is
//! `φ_s(x)(1 + B·He₂(x/√s))`, whose characteristic function is
//! `e^{−s u²/2}(1 − B s u²)`. A projection of the ℓ-fold tensor onto a unit
//! direction with block norms `α_k` therefore has, in units of `√s`, the
//! density `φ(w) Σ_j e_j B^j He_{2j}(w)` with `e_j` the elementary symmetric
//! polynomials of the `α_k²`. CDF and its integral follow in closed form.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::init::{bkw_weights, bkw_min_shape};
use crate::oracle::BkwProfile;

/// `f^{⊗ℓ}` for a BKW (or Gaussian) one-particle law `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BkwTensor {
    pub order: usize,
    pub dim: usize,
    /// Standard deviation of the Gaussian factor, `√(Kℰ/d)`.
    pub scale: f64,
    /// Weight `B` of the `|v|²` term.
    pub weight: f64,
}

impl BkwTensor {
    pub fn new(order: usize, dim: usize, energy: f64, shape: f64) -> Result<Self> {
        if order == 0 || dim == 0 {
            return Err(Error::pre("order and dimension must be positive"));
        }
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(Error::pre("energy must be positive"));
        }
        if !(shape >= bkw_min_shape(dim) && shape <= 1.0) {
            return Err(Error::Domain(format!(
                "BKW shape {shape} outside [{}, 1]",
                bkw_min_shape(dim)
            )));
        }
        Ok(Self {
            order,
            dim,
            scale: (shape * energy / dim as f64).sqrt(),
            weight: bkw_weights(dim, shape).1,
        })
    }

    pub fn gaussian(order: usize, dim: usize, energy: f64) -> Result<Self> {
        Self::new(order, dim, energy, 1.0)
    }

    /// The tensor of the profile at time `t`.
    pub fn from_profile(profile: &BkwProfile, t: f64, order: usize) -> Result<Self> {
        Self::new(order, profile.dim(), profile.energy(), profile.shape(t)?)
    }

    pub fn width(&self) -> usize {
        self.order * self.dim
    }

    /// Law of `⟨direction, V⟩` for a unit `direction` in `R^{ℓd}`.
    pub fn along(&self, direction: &[f64]) -> ProjectedLaw {
        debug_assert_eq!(direction.len(), self.width());
        let norm2: f64 = direction.iter().map(|x| x * x).sum();
        // Elementary symmetric polynomials of the squared block norms.
        let mut e = vec![0.0; self.order + 1];
        e[0] = 1.0;
        for block in direction.chunks_exact(self.dim) {
            let a2 = block.iter().map(|x| x * x).sum::<f64>() / norm2;
            for j in (1..=self.order).rev() {
                e[j] += a2 * e[j - 1];
            }
        }
        let coeffs = (1..=self.order).map(|j| e[j] * self.weight.powi(j as i32)).collect();
        ProjectedLaw {
            scale: self.scale * norm2.sqrt(),
            coeffs,
        }
    }
}

/// `F(x) = Φ(w) − φ(w) Σ_j c_j He_{2j−1}(w)`, `w = x/scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedLaw {
    pub scale: f64,
    /// `c_j` for `j = 1..=ℓ`.
    pub coeffs: Vec<f64>,
}

fn std_normal_pdf(w: f64) -> f64 {
    (-0.5 * w * w).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(w: f64) -> f64 {
    0.5 * erfc(-w * FRAC_1_SQRT_2)
}

/// Probabilists' Hermite polynomials `He_0..=He_n` at `w`.
fn hermite(w: f64, n: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if n >= 1 {
        out[1] = w;
    }
    for k in 1..n {
        out[k + 1] = w * out[k] - k as f64 * out[k - 1];
    }
}

impl ProjectedLaw {
    /// CDF, density and `∫_{−∞}^x F`, sharing one Hermite evaluation.
    pub fn evaluate(&self, x: f64) -> (f64, f64, f64) {
        let w = x / self.scale;
        let n = 2 * self.coeffs.len();
        let mut stack = [0.0f64; 34];
        let mut heap = Vec::new();
        let he: &mut [f64] = if n + 2 <= stack.len() {
            &mut stack[..=n + 1]
        } else {
            heap.resize(n + 2, 0.0);
            &mut heap
        };
        hermite(w, n + 1, he);
        let (phi, big_phi) = (std_normal_pdf(w), std_normal_cdf(w));
        let (mut odd, mut even, mut poly) = (0.0, 0.0, 1.0);
        for (j, c) in self.coeffs.iter().enumerate() {
            odd += c * he[2 * j + 1];
            even += c * he[2 * j];
            poly += c * he[2 * j + 2];
        }
        let cdf = (big_phi - phi * odd).clamp(0.0, 1.0);
        let integral = self.scale * (w * big_phi + phi + phi * even);
        (cdf, phi * poly / self.scale, integral)
    }

    /// CDF and `∫_{−∞}^x F` together.
    pub fn cdf_and_integral(&self, x: f64) -> (f64, f64) {
        let (f, _, g) = self.evaluate(x);
        (f, g)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.evaluate(x).0
    }

    pub fn density(&self, x: f64) -> f64 {
        self.evaluate(x).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::OneParticleDensity;
    use crate::metrics::stats::ks_one_sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_unit(width: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = vec![0.0; width];
        crate::model::uniform_on_sphere(&mut v, &mut rng);
        v
    }

    #[test]
    fn cdf_limits_and_integral_derivative() {
        let t = BkwTensor::new(2, 3, 3.0, 0.7).unwrap();
        let law = t.along(&random_unit(6, 1));
        assert!(law.cdf(-60.0) < 1e-15);
        assert!((law.cdf(60.0) - 1.0).abs() < 1e-15);
        // Symmetric law: F(0) = 1/2, and ∫_{-∞}^x F − x → 0 (zero mean).
        assert!((law.cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((law.cdf_and_integral(40.0).1 - 40.0).abs() < 1e-10);
        let h = 1e-5;
        for x in [-3.0, -1.0, 0.3, 2.0] {
            let d = (law.cdf_and_integral(x + h).1 - law.cdf_and_integral(x - h).1) / (2.0 * h);
            assert!((d - law.cdf(x)).abs() < 1e-8, "{x}");
        }
        // Monotone CDF.
        let mut prev = 0.0;
        for k in -400..=400 {
            let f = law.cdf(k as f64 * 0.02);
            assert!(f >= prev - 1e-15);
            prev = f;
        }
    }

    #[test]
    fn projected_samples_follow_the_law() {
        let (ell, d, energy, shape) = (2, 3, 3.0, 0.6);
        let t = BkwTensor::new(ell, d, energy, shape).unwrap();
        let f = OneParticleDensity::bkw(d, energy, shape).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..3 {
            let dir = random_unit(ell * d, 100 + seed);
            let law = t.along(&dir);
            let mut v = vec![0.0; ell * d];
            let xs: Vec<f64> = (0..20_000)
                .map(|_| {
                    for block in v.chunks_exact_mut(d) {
                        f.sample_into(block, &mut rng);
                    }
                    v.iter().zip(&dir).map(|(a, b)| a * b).sum()
                })
                .collect();
            let ks = ks_one_sample(&xs, |x| law.cdf(x)).unwrap();
            assert!(ks.p_value > 0.01, "{ks:?}");
        }
    }

    #[test]
    fn variance_and_fourth_moment_match_the_profile() {
        // Along one particle's axis the law is the BKW coordinate marginal.
        let (d, energy, shape) = (3, 3.0, 0.6);
        let t = BkwTensor::new(1, d, energy, shape).unwrap();
        let law = t.along(&[1.0, 0.0, 0.0]);
        let f = OneParticleDensity::bkw(d, energy, shape).unwrap();
        let m2 = crate::quad::integrate_line(|x| x * x * law.density(x), 1e-13, 1e-12);
        let m4 = crate::quad::integrate_line(|x| x.powi(4) * law.density(x), 1e-13, 1e-12);
        assert!((m2 - energy / d as f64).abs() < 1e-8, "{m2}");
        // E[x⁴] of one coordinate of a radial law: 3 E|v|⁴ / (d(d+2)).
        let expected = 3.0 * f.fourth_moment() / (d * (d + 2)) as f64;
        assert!((m4 - expected).abs() < 1e-8, "{m4} vs {expected}");
        let mass = crate::quad::integrate_line(|x| law.density(x), 1e-13, 1e-12);
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn shape_outside_range_is_a_domain_error() {
        assert!(matches!(BkwTensor::new(2, 3, 3.0, 0.5), Err(Error::Domain(_))));
    }
}
