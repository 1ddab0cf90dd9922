//! Wasserstein-1 distances between empirical measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hungarian;
use super::marginal::EmpiricalMarginal;
use super::projected::{BkwTensor, ProjectedLaw};
use super::stats::{poisson_weights, std_dev};
use crate::error::{Error, Result};
use crate::model::uniform_on_sphere;

/// Largest point count accepted by [`w1_assignment`].
pub const ASSIGNMENT_CAP: usize = 512;

fn check_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::pre("samples must be finite"));
    }
    Ok(())
}

/// Exact 1D W1 between equal-size samples: mean gap between order statistics.
pub fn w1_sorted_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::pre("W1 of an empty sample"));
    }
    if xs.len() != ys.len() {
        return Err(Error::pre("sorted W1 needs equal sample counts; use w1_1d"));
    }
    check_finite(xs)?;
    check_finite(ys)?;
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Exact 1D W1 between samples of any sizes, `∫|F_x − F_y|`.
pub fn w1_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::pre("W1 of an empty sample"));
    }
    check_finite(xs)?;
    check_finite(ys)?;
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let wa = 1.0 / a.len() as f64;
    let wb = 1.0 / b.len() as f64;
    Ok(cdf_gap(&a, &b, wa, wb))
}

/// `∫|F_a − F_b|` for sorted atoms of equal mass within each sample.
fn cdf_gap(a: &[f64], b: &[f64], mass_a: f64, mass_b: f64) -> f64 {
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb, mut acc) = (0.0f64, 0.0f64, 0.0f64);
    let mut prev = a[0].min(b[0]);
    while i < n || j < m {
        let take_a = j >= m || (i < n && a[i] <= b[j]);
        let z = if take_a { a[i] } else { b[j] };
        acc += (fa - fb).abs() * (z - prev);
        prev = z;
        if take_a {
            fa += mass_a;
            i += 1;
        } else {
            fb += mass_b;
            j += 1;
        }
    }
    acc
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Exact empirical W1 in `R^dim` via optimal assignment (rows are points).
pub fn w1_assignment(xs: &[f64], ys: &[f64], dim: usize) -> Result<f64> {
    if dim == 0 || xs.len() % dim != 0 || ys.len() % dim != 0 {
        return Err(Error::pre("point buffers must be multiples of the dimension"));
    }
    let n = xs.len() / dim;
    if n != ys.len() / dim {
        return Err(Error::pre("assignment W1 needs equal point counts"));
    }
    if n == 0 {
        return Err(Error::pre("W1 of an empty sample"));
    }
    if n > ASSIGNMENT_CAP {
        return Err(Error::pre(format!(
            "assignment W1 is capped at {ASSIGNMENT_CAP} points (got {n}); use w1_sliced"
        )));
    }
    check_finite(xs)?;
    check_finite(ys)?;
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = distance(&xs[i * dim..(i + 1) * dim], &ys[j * dim..(j + 1) * dim]);
        }
    }
    let assignment = hungarian::solve(&cost, n);
    Ok(matched_cost(xs, ys, dim, &assignment))
}

/// Mean distance of a matching, summed in row order.
pub fn matched_cost(xs: &[f64], ys: &[f64], dim: usize, assignment: &[usize]) -> f64 {
    let n = assignment.len();
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| distance(&xs[i * dim..(i + 1) * dim], &ys[j * dim..(j + 1) * dim]))
        .sum();
    total / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicedSettings {
    pub projections: usize,
    /// Bootstrap replicates; 0 disables the bootstrap.
    pub resamples: usize,
    pub seed: u64,
}

impl Default for SlicedSettings {
    fn default() -> Self {
        Self {
            projections: 64,
            resamples: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicedW1 {
    pub value: f64,
    /// Bootstrap standard deviation (NaN when the bootstrap is disabled).
    pub error: f64,
    pub projections: usize,
    /// Estimate from the first half of the projections.
    pub half_projection_value: f64,
    /// Spread of the per-projection values divided by √P.
    pub projection_error: f64,
    pub sizes: (usize, usize),
}

impl SlicedW1 {
    /// Relative change between half and full projection sets.
    pub fn projection_convergence(&self) -> f64 {
        (self.value - self.half_projection_value).abs() / self.value.max(f64::MIN_POSITIVE)
    }
}

/// Unit directions in `R^width`, row-major. In one dimension the single direction is `+1`.
pub fn projection_directions(width: usize, count: usize, seed: u64) -> Vec<f64> {
    if width == 1 {
        return vec![1.0];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; width * count];
    for row in out.chunks_exact_mut(width) {
        uniform_on_sphere(row, &mut rng);
    }
    out
}

/// Projections of both samples merged into one sorted sequence.
///
/// `gaps[k]` is the distance from the previous merged atom and `slots[k]`
/// indexes a signed weight vector (x blocks first, then y blocks), so
/// `∫|F_x − F_y|` becomes one pass `Σ |F| · gap; F += w[slot]`.
/// Atoms across all merged projections kept alive at once during the bootstrap.
const MERGED_ATOM_BUDGET: usize = 1 << 25;

struct Merged {
    gaps: Vec<f64>,
    slots: Vec<u32>,
}

fn merge_projection(xs: &[f64], xblock: usize, ys: &[f64], yblock: usize, width: usize, dir: &[f64]) -> Merged {
    let x_blocks = (xs.len() / width).div_ceil(xblock);
    let proj = |row: &[f64]| row.iter().zip(dir).map(|(a, b)| a * b).sum::<f64>();
    let mut atoms: Vec<(f64, u32)> = xs
        .chunks_exact(width)
        .enumerate()
        .map(|(i, r)| (proj(r), (i / xblock) as u32))
        .chain(
            ys.chunks_exact(width)
                .enumerate()
                .map(|(j, r)| (proj(r), (x_blocks + j / yblock) as u32)),
        )
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut prev = atoms[0].0;
    let mut gaps = Vec::with_capacity(atoms.len());
    let mut slots = Vec::with_capacity(atoms.len());
    for (z, slot) in atoms {
        gaps.push(z - prev);
        slots.push(slot);
        prev = z;
    }
    Merged { gaps, slots }
}

impl Merged {
    #[inline]
    fn gap_integral(&self, weights: &[f64]) -> f64 {
        let mut f = 0.0f64;
        let mut acc = 0.0f64;
        for (g, &s) in self.gaps.iter().zip(&self.slots) {
            acc += f.abs() * g;
            f += weights[s as usize];
        }
        acc
    }
}

fn block_lengths(n: usize, block: usize) -> Vec<f64> {
    (0..n.div_ceil(block)).map(|b| (n - b * block).min(block) as f64).collect()
}

/// Sliced W1 between two marginals, with a block Poisson bootstrap error bar.
///
/// Projections are fixed by `settings.seed`; bootstrap replicates reweight
/// whole blocks (replicas), so within-run correlation of pooled samples is
/// reflected in the error.
pub fn w1_sliced(xs: &EmpiricalMarginal, ys: &EmpiricalMarginal, settings: &SlicedSettings) -> Result<SlicedW1> {
    if xs.width() != ys.width() {
        return Err(Error::pre("marginals have different widths"));
    }
    sliced_core(
        xs.samples(),
        xs.block_size(),
        ys.samples(),
        ys.block_size(),
        xs.width(),
        settings,
    )
}

/// Sliced W1 between raw point clouds (rows of `width`), directions drawn from `rng`.
pub fn w1_sliced_points<R: Rng + ?Sized>(xs: &[f64], ys: &[f64], width: usize, projections: usize, rng: &mut R) -> Result<SlicedW1> {
    let settings = SlicedSettings {
        projections,
        resamples: 0,
        seed: rng.random(),
    };
    sliced_core(xs, 1, ys, 1, width, &settings)
}

fn sliced_core(xs: &[f64], xblock: usize, ys: &[f64], yblock: usize, width: usize, settings: &SlicedSettings) -> Result<SlicedW1> {
    if width == 0 || xs.is_empty() || ys.is_empty() || xs.len() % width != 0 || ys.len() % width != 0 {
        return Err(Error::pre("sliced W1 needs nonempty samples of a common width"));
    }
    if settings.projections == 0 {
        return Err(Error::pre("at least one projection is required"));
    }
    check_finite(xs)?;
    check_finite(ys)?;
    let (n, m) = (xs.len() / width, ys.len() / width);
    let (xblock, yblock) = (xblock.clamp(1, n), yblock.clamp(1, m));
    let dirs = projection_directions(width, settings.projections, settings.seed);
    let reps = settings.resamples;
    let xlen = block_lengths(n, xblock);
    let ylen = block_lengths(m, yblock);
    let boot_seed = settings.seed ^ 0xB007_5EED;

    // Signed per-atom masses, indexed by block: the unweighted estimate.
    let mut unit = vec![1.0 / n as f64; xlen.len()];
    unit.extend(std::iter::repeat_n(-1.0 / m as f64, ylen.len()));

    // Row p: [point value, replicate values...]. Replicate weights depend only
    // on the replicate index, so each is drawn once and applied to a chunk of
    // merged projections held in memory together.
    let chunk = (MERGED_ATOM_BUDGET / (n + m)).clamp(1, settings.projections);
    let mut per_projection: Vec<Vec<f64>> = Vec::with_capacity(settings.projections);
    let (mut wx, mut wy) = (Vec::new(), Vec::new());
    let mut signed = vec![0.0; xlen.len() + ylen.len()];
    for group in dirs.chunks(chunk * width) {
        let merged: Vec<Merged> = group
            .par_chunks_exact(width)
            .map(|dir| merge_projection(xs, xblock, ys, yblock, width, dir))
            .collect();
        let mut rows: Vec<Vec<f64>> = merged
            .par_iter()
            .map(|mp| {
                let mut row = Vec::with_capacity(1 + reps);
                row.push(mp.gap_integral(&unit));
                row
            })
            .collect();
        for b in 0..reps {
            poisson_weights(boot_seed, 2 * b, xlen.len(), &mut wx);
            poisson_weights(boot_seed, 2 * b + 1, ylen.len(), &mut wy);
            let tx: f64 = wx.iter().zip(&xlen).map(|(w, l)| w * l).sum();
            let ty: f64 = wy.iter().zip(&ylen).map(|(w, l)| w * l).sum();
            if tx == 0.0 || ty == 0.0 {
                rows.iter_mut().for_each(|r| r.push(f64::NAN));
                continue;
            }
            for (k, w) in wx.iter().enumerate() {
                signed[k] = w / tx;
            }
            for (k, w) in wy.iter().enumerate() {
                signed[xlen.len() + k] = -w / ty;
            }
            let values: Vec<f64> = merged.par_iter().map(|mp| mp.gap_integral(&signed)).collect();
            rows.iter_mut().zip(values).for_each(|(r, v)| r.push(v));
        }
        per_projection.extend(rows);
    }

    Ok(summarize(&per_projection, reps, (n, m)))
}

/// Projected sample sorted, with the reference CDF and its integral at each atom.
struct LawProjection {
    law: ProjectedLaw,
    xs: Vec<f64>,
    slots: Vec<u32>,
    cdf: Vec<f64>,
    integral: Vec<f64>,
}

fn project_against(xs: &[f64], block: usize, width: usize, dir: &[f64], law: &ProjectedLaw) -> LawProjection {
    let mut atoms: Vec<(f64, u32)> = xs
        .chunks_exact(width)
        .enumerate()
        .map(|(i, r)| (r.iter().zip(dir).map(|(a, b)| a * b).sum::<f64>(), (i / block) as u32))
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = atoms.len();
    let mut out = LawProjection {
        law: law.clone(),
        xs: Vec::with_capacity(n),
        slots: Vec::with_capacity(n),
        cdf: Vec::with_capacity(n),
        integral: Vec::with_capacity(n),
    };
    for (x, slot) in atoms {
        let (f, g) = law.cdf_and_integral(x);
        out.xs.push(x);
        out.slots.push(slot);
        out.cdf.push(f);
        out.integral.push(g);
    }
    out
}

impl LawProjection {
    /// Point in gap `i` where the CDF reaches `level`, with the CDF integral there.
    fn crossing(&self, i: usize, level: f64) -> (f64, f64) {
        let (mut a, mut b) = (self.xs[i], self.xs[i + 1]);
        let (mut fa, mut fb) = (self.cdf[i], self.cdf[i + 1]);
        let mut q = a + (b - a) * (level - fa) / (fb - fa);
        for _ in 0..100 {
            let (fq, density, gq) = self.law.evaluate(q);
            let gap = fq - level;
            if gap == 0.0 {
                return (q, gq);
            }
            if gap < 0.0 {
                (a, fa) = (q, fq);
            } else {
                (b, fb) = (q, fq);
            }
            // Newton inside the bracket, regula falsi or bisection otherwise.
            let mut next = q - gap / density;
            if !(next > a && next < b) {
                next = a + (b - a) * (level - fa) / (fb - fa);
                if !(next > a + 0.01 * (b - a) && next < b - 0.01 * (b - a)) {
                    next = 0.5 * (a + b);
                }
            }
            if (next - q).abs() <= 1e-13 * (1.0 + q.abs()) || b - a <= 1e-13 * (1.0 + a.abs()) || fb - fa <= 1e-16 {
                return (q, gq);
            }
            q = next;
        }
        (q, self.law.evaluate(q).2)
    }

    /// `∫|F̂ − F|` where atom masses come from per-block `weights` (summing to one).
    fn distance(&self, weights: &[f64]) -> f64 {
        let n = self.xs.len();
        // Left tail: ∫_{−∞}^{x₀} F.
        let mut acc = self.integral[0];
        let mut level = 0.0f64;
        for i in 0..n - 1 {
            level += weights[self.slots[i] as usize];
            let dx = self.xs[i + 1] - self.xs[i];
            if dx == 0.0 {
                continue;
            }
            let lo = level - self.cdf[i];
            let hi = level - self.cdf[i + 1];
            let dg = self.integral[i + 1] - self.integral[i];
            acc += if hi >= 0.0 {
                level * dx - dg
            } else if lo <= 0.0 {
                dg - level * dx
            } else {
                let (q, gq) = self.crossing(i, level);
                (level * (q - self.xs[i]) - (gq - self.integral[i])).abs()
                    + (level * (self.xs[i + 1] - q) - (self.integral[i + 1] - gq)).abs()
            };
        }
        // Right tail: ∫_{x_last}^∞ (1 − F) = G(x) − x for a centered law.
        acc + (self.integral[n - 1] - self.xs[n - 1]).max(0.0)
    }
}

/// Sliced W1 between a marginal and an exact tensor law, with a block bootstrap.
///
/// Only the sample is resampled; `sizes.1` is 0 to mark the exact reference.
pub fn w1_sliced_to_law(xs: &EmpiricalMarginal, reference: &BkwTensor, settings: &SlicedSettings) -> Result<SlicedW1> {
    let width = xs.width();
    if width != reference.width() {
        return Err(Error::pre("marginal and reference have different widths"));
    }
    if xs.is_empty() {
        return Err(Error::pre("W1 of an empty sample"));
    }
    if settings.projections == 0 {
        return Err(Error::pre("at least one projection is required"));
    }
    check_finite(xs.samples())?;
    let n = xs.len();
    let block = xs.block_size().clamp(1, n);
    let lengths = block_lengths(n, block);
    let dirs = projection_directions(width, settings.projections, settings.seed);
    let reps = settings.resamples;
    let boot_seed = settings.seed ^ 0xB007_5EED;
    let unit = vec![1.0 / n as f64; lengths.len()];

    let per_projection: Vec<Vec<f64>> = dirs
        .par_chunks_exact(width)
        .map(|dir| {
            let proj = project_against(xs.samples(), block, width, dir, &reference.along(dir));
            let mut row = Vec::with_capacity(1 + reps);
            row.push(proj.distance(&unit));
            let mut w = Vec::new();
            for b in 0..reps {
                poisson_weights(boot_seed, 2 * b, lengths.len(), &mut w);
                let total: f64 = w.iter().zip(&lengths).map(|(w, l)| w * l).sum();
                if total == 0.0 {
                    row.push(f64::NAN);
                    continue;
                }
                w.iter_mut().for_each(|x| *x /= total);
                row.push(proj.distance(&w));
            }
            row
        })
        .collect();
    Ok(summarize(&per_projection, reps, (n, 0)))
}

fn summarize(per_projection: &[Vec<f64>], reps: usize, sizes: (usize, usize)) -> SlicedW1 {
    let p_count = per_projection.len();
    let point: Vec<f64> = per_projection.iter().map(|r| r[0]).collect();
    let value = point.iter().sum::<f64>() / p_count as f64;
    let half = p_count.div_ceil(2);
    let half_projection_value = point[..half].iter().sum::<f64>() / half as f64;
    let projection_error = if p_count > 1 {
        std_dev(&point) / (p_count as f64).sqrt()
    } else {
        0.0
    };
    let error = if reps > 1 {
        let replicate_values: Vec<f64> = (0..reps)
            .map(|b| per_projection.iter().map(|r| r[1 + b]).sum::<f64>() / p_count as f64)
            .filter(|v| v.is_finite())
            .collect();
        std_dev(&replicate_values)
    } else {
        f64::NAN
    };
    SlicedW1 {
        value,
        error,
        projections: p_count,
        half_projection_value,
        projection_error,
        sizes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_examples() {
        assert_eq!(w1_sorted_1d(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(w1_sorted_1d(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(w1_sorted_1d(&[3.0, 1.0, 2.0], &[2.0, 3.0, 1.0]).unwrap(), 0.0);
        assert!(w1_sorted_1d(&[], &[]).is_err());
    }

    #[test]
    fn merge_formula_agrees_with_order_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..300).map(|_| rng.random::<f64>() * 1.5).collect();
        let s = w1_sorted_1d(&a, &b).unwrap();
        let g = w1_1d(&a, &b).unwrap();
        assert!((s - g).abs() < 1e-12);
        // Unequal sizes: duplicating every point leaves the measure unchanged.
        let bb: Vec<f64> = b.iter().chain(&b).copied().collect();
        assert!((w1_1d(&a, &bb).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn assignment_examples() {
        let xs = [0.0, 0.0, 1.0, 2.0, -1.0, 0.5];
        let ys = [1.0, 2.0, -1.0, 0.5, 0.0, 0.0];
        assert!(w1_assignment(&xs, &ys, 2).unwrap().abs() < 1e-15);
        let shifted: Vec<f64> = xs.chunks(2).flat_map(|p| [p[0] + 3.0, p[1] + 4.0]).collect();
        assert!((w1_assignment(&xs, &shifted, 2).unwrap() - 5.0).abs() < 1e-12);
        assert!(w1_assignment(&vec![0.0; 2 * 513], &vec![0.0; 2 * 513], 2).is_err());
        assert!(w1_assignment(&xs, &ys[..4], 2).is_err());
    }

    #[test]
    fn sliced_reduces_to_exact_in_one_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..200).map(|_| rng.random::<f64>() + 0.2).collect();
        let s = w1_sliced_points(&a, &b, 1, 10, &mut rng).unwrap();
        assert!((s.value - w1_sorted_1d(&a, &b).unwrap()).abs() < 1e-12);
        let same = w1_sliced_points(&a, &a, 1, 10, &mut rng).unwrap();
        assert_eq!(same.value, 0.0);
    }

    #[test]
    fn bootstrap_error_is_positive_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..2000).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let b: Vec<f64> = (0..2000).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let ma = EmpiricalMarginal::from_iid(1, 2, a, 0.0, 10).unwrap();
        let mb = EmpiricalMarginal::from_iid(1, 2, b, 0.0, 10).unwrap();
        let settings = SlicedSettings {
            projections: 16,
            resamples: 50,
            seed: 9,
        };
        let r1 = w1_sliced(&ma, &mb, &settings).unwrap();
        let r2 = w1_sliced(&ma, &mb, &settings).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.error > 0.0 && r1.error < r1.value);
    }

    #[test]
    fn law_distance_matches_numerical_integral() {
        let tensor = BkwTensor::new(1, 1, 1.0, 0.8).unwrap();
        let law = tensor.along(&[1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..50).map(|_| 1.3 * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let m = EmpiricalMarginal::from_iid(1, 1, xs.clone(), 0.0, 1).unwrap();
        let settings = SlicedSettings { projections: 1, resamples: 0, seed: 0 };
        let fast = w1_sliced_to_law(&m, &tensor, &settings).unwrap().value;
        let mut sorted = xs;
        sorted.sort_by(f64::total_cmp);
        // Piecewise quadrature: the empirical CDF is constant between atoms.
        let n = sorted.len() as f64;
        let mut edges = vec![-14.0];
        edges.extend(&sorted);
        edges.push(14.0);
        let slow: f64 = edges
            .windows(2)
            .enumerate()
            .map(|(k, w)| crate::quad::integrate(|x| (k as f64 / n - law.cdf(x)).abs(), w[0], w[1], 1e-13, 1e-11))
            .sum();
        assert!((fast - slow).abs() < 1e-6 * slow, "{fast} vs {slow}");
    }

    #[test]
    fn law_reference_agrees_with_a_large_reference_sample() {
        let (ell, d) = (2, 3);
        let f = crate::init::OneParticleDensity::bkw(d, 3.0, 0.7).unwrap();
        let tensor = BkwTensor::new(ell, d, 3.0, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut draw = |n: usize| {
            let mut v = vec![0.0; n * ell * d];
            for row in v.chunks_exact_mut(d) {
                f.sample_into(row, &mut rng);
            }
            v
        };
        // A shifted sample, so the distance is well above the noise floor.
        let xs: Vec<f64> = draw(20_000).iter().map(|x| 1.1 * x).collect();
        let ys = draw(400_000);
        let mx = EmpiricalMarginal::from_iid(ell, d, xs, 0.0, 20).unwrap();
        let my = EmpiricalMarginal::from_iid(ell, d, ys, 0.0, 20).unwrap();
        let settings = SlicedSettings { projections: 16, resamples: 30, seed: 2 };
        let exact = w1_sliced_to_law(&mx, &tensor, &settings).unwrap();
        let sampled = w1_sliced(&mx, &my, &settings).unwrap();
        assert!(exact.error > 0.0 && exact.sizes == (20_000, 0));
        assert!((exact.value - sampled.value).abs() < 0.01 * exact.value + 3.0 * sampled.error / 10.0, "{exact:?} {sampled:?}");
        // Own samples sit near the n^{-1/2} floor.
        let own = EmpiricalMarginal::from_iid(ell, d, draw(20_000), 0.0, 20).unwrap();
        let floor = w1_sliced_to_law(&own, &tensor, &settings).unwrap();
        assert!(floor.value < 0.2 * exact.value, "{floor:?}");
    }
}
