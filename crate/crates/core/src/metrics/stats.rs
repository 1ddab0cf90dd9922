//! Small statistical helpers: block means, Poisson bootstrap, Kolmogorov–Smirnov.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;

use crate::error::{Error, Result};

/// Mean and standard error treating consecutive groups of `block` values as units.
pub fn block_mean(values: &[f64], block: usize) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let block = block.max(1);
    let sums: Vec<(f64, usize)> = values.chunks(block).map(|c| (c.iter().sum::<f64>(), c.len())).collect();
    let b = sums.len();
    if b < 2 {
        return (mean, f64::NAN);
    }
    // Ratio-estimator variance of the pooled mean.
    let ss: f64 = sums.iter().map(|(s, len)| (s - mean * *len as f64).powi(2)).sum();
    let var = ss * b as f64 / ((b - 1) as f64 * (n as f64).powi(2));
    (mean, var.sqrt())
}

/// Sample standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Poisson(1) weights of one bootstrap replicate, one per block.
///
/// Regenerated from `(seed, replicate)`, so callers never need to store them.
pub fn poisson_weights(seed: u64, replicate: usize, blocks: usize, out: &mut Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 + 1);
    let pois = Poisson::new(1.0).expect("unit mean is valid");
    out.clear();
    out.extend((0..blocks).map(|_| rng.sample::<f64, _>(pois)));
}

/// Bootstrap standard deviation of a block-weighted mean.
pub fn bootstrap_mean_std(values: &[f64], block: usize, resamples: usize, seed: u64) -> f64 {
    let block = block.max(1);
    let sums: Vec<(f64, f64)> = values.chunks(block).map(|c| (c.iter().sum(), c.len() as f64)).collect();
    let mut w = Vec::new();
    let reps: Vec<f64> = (0..resamples)
        .filter_map(|b| {
            poisson_weights(seed, b, sums.len(), &mut w);
            let (num, den) = sums
                .iter()
                .zip(&w)
                .fold((0.0, 0.0), |(n, d), ((s, len), wi)| (n + wi * s, d + wi * len));
            (den > 0.0).then(|| num / den)
        })
        .collect();
    std_dev(&reps)
}

/// Kolmogorov limiting survival function `P(K > λ)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::pre("empty sample"));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::pre("NaN in sample"));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<KsResult> {
    let (a, b) = (sorted(xs)?, sorted(ys)?);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let z = a[i].min(b[j]);
        while i < a.len() && a[i] <= z {
            i += 1;
        }
        while j < b.len() && b[j] <= z {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let p = kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d);
    Ok(KsResult { statistic: d, p_value: p })
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let a = sorted(xs)?;
    let n = a.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in a.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    let p = kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d);
    Ok(KsResult { statistic: d, p_value: p })
}
