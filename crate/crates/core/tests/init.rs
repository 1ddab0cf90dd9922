use kac_core::engine::run_rng;
use kac_core::init::{sample_uniform_energy_sphere, sample_uniform_sphere, OneParticleDensity};
use kac_core::metrics::{ks_one_sample, ks_two_sample};
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn uniform_sphere_coordinate_is_nearly_gaussian_and_exchangeable() {
    let (n, d, energy, draws) = (1000, 3, 3.0, 10_000);
    let mut rng = run_rng(1, 0);
    let mut first = Vec::with_capacity(draws);
    let mut seventh = Vec::with_capacity(draws);
    for _ in 0..draws {
        let s = sample_uniform_sphere(n, d, energy, &mut rng).unwrap();
        first.push(s.velocity(0)[0]);
        seventh.push(s.velocity(6)[0]);
        let p = s.momentum();
        assert!(p.iter().all(|x| x.abs() < 1e-9));
        assert!((s.recompute_totals().1 / (n as f64 * energy) - 1.0).abs() < 1e-12);
    }
    let normal = Normal::new(0.0, (energy / d as f64).sqrt()).unwrap();
    let ks = ks_one_sample(&first, |x| normal.cdf(x)).unwrap();
    assert!(ks.statistic <= 0.02, "{ks:?}");
    assert!(ks_two_sample(&first, &seventh).unwrap().p_value > 0.01);
}

#[test]
fn uniform_sphere_is_rotation_invariant_in_low_moments() {
    let (n, d, energy, draws) = (50, 3, 3.0, 20_000);
    let mut rng = run_rng(2, 0);
    // A fixed rotation about (1,1,1) by 1 radian.
    let (c, s) = (1f64.cos(), 1f64.sin());
    let u = [1.0 / 3f64.sqrt(); 3];
    let mut q = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let cross = match (i, j) {
                (0, 1) => -u[2],
                (0, 2) => u[1],
                (1, 0) => u[2],
                (1, 2) => -u[0],
                (2, 0) => -u[1],
                (2, 1) => u[0],
                _ => 0.0,
            };
            q[i][j] = if i == j { c } else { 0.0 } + s * cross + (1.0 - c) * u[i] * u[j];
        }
    }
    // Second and fourth moments of coordinate 0 of v_1, before and after rotating.
    let mut raw = [Vec::new(), Vec::new()];
    let mut rotated = [Vec::new(), Vec::new()];
    for _ in 0..draws {
        let sys = sample_uniform_sphere(n, d, energy, &mut rng).unwrap();
        let v = sys.velocity(0);
        let w: f64 = (0..3).map(|k| q[0][k] * v[k]).sum();
        raw[0].push(v[0] * v[0]);
        raw[1].push(v[0].powi(4));
        rotated[0].push(w * w);
        rotated[1].push(w.powi(4));
    }
    let stats = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0);
        (m, (var / x.len() as f64).sqrt())
    };
    for k in 0..2 {
        let (a, ea) = stats(&raw[k]);
        let (b, eb) = stats(&rotated[k]);
        assert!((a - b).abs() < 4.0 * (ea * ea + eb * eb).sqrt(), "moment {k}: {a} vs {b}");
    }
    // Exact second moment on the centered sphere: ℰ(N−1)/(N d) per coordinate.
    let (m2, e2) = stats(&raw[0]);
    let exact = energy * (n as f64 - 1.0) / (n as f64 * d as f64);
    assert!((m2 - exact).abs() < 4.0 * e2);
}

#[test]
fn kac_energy_sphere_has_exact_energy() {
    let mut rng = run_rng(3, 0);
    let s = sample_uniform_energy_sphere(100, 2.0, &mut rng).unwrap();
    assert_eq!(s.dim(), 1);
    assert!((s.recompute_totals().1 - 200.0).abs() < 1e-10);
}

#[test]
fn two_bump_fisher_information_matches_monte_carlo_score() {
    let f0 = OneParticleDensity::two_bump(2, 1.0, 0.8).unwrap();
    let kac_core::init::FisherInformation::Finite(value) = f0.fisher_information() else {
        panic!("smooth bumps have finite Fisher information");
    };
    let mut rng = run_rng(4, 0);
    let h = 1e-5;
    let mut v = [0.0; 2];
    let draws = 200_000;
    let mut sum = 0.0;
    for _ in 0..draws {
        f0.sample_into(&mut v, &mut rng);
        let p = f0.density(&v);
        let mut g2 = 0.0;
        for k in 0..2 {
            let mut a = v;
            let mut b = v;
            a[k] += h;
            b[k] -= h;
            let g = (f0.density(&a) - f0.density(&b)) / (2.0 * h);
            g2 += g * g;
        }
        sum += g2 / (p * p);
    }
    let mc = sum / draws as f64;
    assert!((mc / value - 1.0).abs() < 0.03, "{mc} vs {value}");
}
