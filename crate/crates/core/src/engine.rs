//! Event-driven simulation of Kac's N-particle jump process.
//!
//! Every unordered pair carries an exponential clock of rate `Γ(|v_i − v_j|)/N`
//! (mean-field scaling). Instead of maintaining `N(N−1)/2` clocks, the chain is
//! uniformized: candidate events arrive at the constant total rate
//! `Λ̄ = (N − 1)/2 · Γ̄`, where `Γ̄` bounds every pair rate, a pair is picked
//! uniformly, and the candidate is accepted with probability `Γ(|v_i − v_j|)/Γ̄`.
//! Rejected candidates are null collisions. The resulting process has the same
//! law as the first-reaction description.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{self, OneParticleDensity, ParticleSystem};
use crate::model::{self, kac_rotate, pair_rate, CollisionKernel};

/// Output times of a run; the first is always `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    output_times: Vec<f64>,
}

impl Schedule {
    pub fn new(output_times: Vec<f64>) -> Result<Self> {
        match output_times.first() {
            Some(t) if *t == 0.0 => {}
            _ => return Err(Error::pre("schedule must start at t = 0")),
        }
        if output_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::pre("schedule times must be finite"));
        }
        if output_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::pre("schedule times must be strictly increasing"));
        }
        Ok(Self { output_times })
    }

    /// `t = 0` followed by `points − 1` geometrically spaced times ending at
    /// `t_end`, spanning two decades.
    pub fn geometric(t_end: f64, points: usize) -> Result<Self> {
        if points < 2 || !(t_end > 0.0) {
            return Err(Error::pre("geometric grid needs t_end > 0 and at least two points"));
        }
        let k = points - 1;
        let mut times = vec![0.0];
        for i in 1..=k {
            let exponent = if k == 1 { 0.0 } else { -2.0 * (k - i) as f64 / (k - 1) as f64 };
            times.push(t_end * 10f64.powf(exponent));
        }
        Self::new(times)
    }

    pub fn linear(t_end: f64, points: usize) -> Result<Self> {
        if points < 2 || !(t_end > 0.0) {
            return Err(Error::pre("linear grid needs t_end > 0 and at least two points"));
        }
        Self::new((0..points).map(|i| t_end * i as f64 / (points - 1) as f64).collect())
    }

    /// Only `t = 0`.
    pub fn initial_only() -> Self {
        Self { output_times: vec![0.0] }
    }

    pub fn output_times(&self) -> &[f64] {
        &self.output_times
    }

    pub fn t_end(&self) -> f64 {
        *self.output_times.last().expect("schedule is nonempty")
    }
}

/// Running upper bound on the particle speeds, used for the hard-sphere majorant.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorantState {
    max_speed: f64,
    refresh_interval: u64,
    since_refresh: u64,
    refreshes: u64,
    violations: u64,
}

impl MajorantState {
    /// Exact maximum speed, refreshed every `4N` accepted collisions.
    pub fn new(system: &ParticleSystem) -> Self {
        Self {
            max_speed: exact_max_speed(system),
            refresh_interval: 4 * system.n() as u64,
            since_refresh: 0,
            refreshes: 0,
            violations: 0,
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }

    pub fn refresh_interval(&self) -> u64 {
        self.refresh_interval
    }

    /// Number of refreshes that found a speed above the stored bound (must stay 0).
    pub fn violations(&self) -> u64 {
        self.violations
    }

    /// `Γ̄`, an upper bound on every pair rate.
    pub fn rate_bound(&self, kernel: &CollisionKernel) -> f64 {
        match kernel {
            CollisionKernel::HardSpheres { constant } => 2.0 * constant * self.max_speed,
            other => pair_rate(other, 0.0),
        }
    }

    fn observe(&mut self, speed_sq: f64) {
        let s = speed_sq.sqrt();
        if s > self.max_speed {
            self.max_speed = s;
        }
    }

    fn after_collision(&mut self, system: &ParticleSystem) {
        self.since_refresh += 1;
        if self.since_refresh >= self.refresh_interval {
            let exact = exact_max_speed(system);
            if exact > self.max_speed * (1.0 + 1e-12) {
                self.violations += 1;
            }
            self.max_speed = exact;
            self.since_refresh = 0;
            self.refreshes += 1;
        }
    }
}

fn exact_max_speed(system: &ParticleSystem) -> f64 {
    system
        .velocities()
        .chunks_exact(system.dim())
        .map(model::norm_sq)
        .fold(0.0, f64::max)
        .sqrt()
}

/// Counters and conservation diagnostics of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub candidates: u64,
    pub accepted: u64,
    pub majorant_refreshes: u64,
    pub majorant_violations: u64,
    pub reprojections: u64,
    /// Largest per-event `|Δ Σv| / √(Σ|v|²)`.
    pub max_event_momentum_drift: f64,
    /// Largest per-event `|Δ Σ|v|²| / Σ|v|²`.
    pub max_event_energy_drift: f64,
    /// Largest drift of the recomputed totals from their initial values, at output times.
    pub max_momentum_drift: f64,
    pub max_energy_drift: f64,
    /// Largest sphere violation seen at output times (constrained runs only).
    pub max_sphere_violation: f64,
}

impl Telemetry {
    pub fn merge(&mut self, other: &Telemetry) {
        self.candidates += other.candidates;
        self.accepted += other.accepted;
        self.majorant_refreshes += other.majorant_refreshes;
        self.majorant_violations += other.majorant_violations;
        self.reprojections += other.reprojections;
        self.max_event_momentum_drift = self.max_event_momentum_drift.max(other.max_event_momentum_drift);
        self.max_event_energy_drift = self.max_event_energy_drift.max(other.max_event_energy_drift);
        self.max_momentum_drift = self.max_momentum_drift.max(other.max_momentum_drift);
        self.max_energy_drift = self.max_energy_drift.max(other.max_energy_drift);
        self.max_sphere_violation = self.max_sphere_violation.max(other.max_sphere_violation);
    }
}

/// Result of one candidate event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Waiting time before the candidate (infinite when every rate vanishes).
    pub elapsed: f64,
    pub accepted: bool,
}

/// Reusable state of the event loop for one system.
#[derive(Debug, Clone)]
pub struct EventLoop {
    kernel: CollisionKernel,
    majorant: MajorantState,
    telemetry: Telemetry,
    reproject_every: Option<u64>,
    scratch: Vec<f64>,
}

impl EventLoop {
    pub fn new(system: &ParticleSystem, kernel: &CollisionKernel) -> Result<Self> {
        check_kernel(system, kernel)?;
        Ok(Self {
            kernel: kernel.clone(),
            majorant: MajorantState::new(system),
            telemetry: Telemetry::default(),
            reproject_every: None,
            scratch: vec![0.0; 4 * system.dim()],
        })
    }

    /// Project back to the sphere every `k` accepted collisions.
    pub fn with_reprojection(mut self, k: Option<u64>) -> Self {
        self.reproject_every = k.filter(|k| *k > 0);
        self
    }

    pub fn telemetry(&self) -> &Telemetry {
        &self.telemetry
    }

    pub fn majorant(&self) -> &MajorantState {
        &self.majorant
    }

    /// Total candidate rate `Λ̄ = (1/N)·N(N−1)/2·Γ̄`.
    pub fn candidate_rate(&self, system: &ParticleSystem) -> f64 {
        0.5 * (system.n() as f64 - 1.0) * self.majorant.rate_bound(&self.kernel)
    }

    fn waiting_time<R: Rng + ?Sized>(&self, system: &ParticleSystem, rng: &mut R) -> f64 {
        let lambda = self.candidate_rate(system);
        if lambda > 0.0 {
            rng.sample::<f64, _>(Exp1) / lambda
        } else {
            f64::INFINITY
        }
    }

    /// Advance by one candidate event.
    pub fn step<R: Rng + ?Sized>(&mut self, system: &mut ParticleSystem, rng: &mut R) -> Result<StepOutcome> {
        let elapsed = self.waiting_time(system, rng);
        if !elapsed.is_finite() {
            return Ok(StepOutcome {
                elapsed,
                accepted: false,
            });
        }
        system.time += elapsed;
        let accepted = self.fire(system, rng)?;
        Ok(StepOutcome { elapsed, accepted })
    }

    /// Run candidate events up to time `t` and stop exactly there.
    /// Returns the number of candidates processed.
    pub fn advance_to<R: Rng + ?Sized>(&mut self, system: &mut ParticleSystem, t: f64, rng: &mut R) -> Result<u64> {
        if !(t >= system.time && t.is_finite()) {
            return Err(Error::pre(format!("cannot advance from t = {} back to {t}", system.time)));
        }
        let mut candidates = 0;
        loop {
            let wait = self.waiting_time(system, rng);
            if system.time + wait > t {
                // Memorylessness: discarding the overshooting clock is exact.
                break;
            }
            system.time += wait;
            self.fire(system, rng)?;
            candidates += 1;
        }
        system.time = t;
        Ok(candidates)
    }

    /// Pick a pair, thin, and collide. Returns whether the candidate was accepted.
    fn fire<R: Rng + ?Sized>(&mut self, system: &mut ParticleSystem, rng: &mut R) -> Result<bool> {
        let n = system.n();
        let d = system.dim();
        self.telemetry.candidates += 1;
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };

        let vel = system.velocities_mut();
        let (head, tail) = vel.split_at_mut(hi * d);
        let vi = &mut head[lo * d..(lo + 1) * d];
        let vj = &mut tail[..d];

        let mut speed_sq = 0.0;
        for k in 0..d {
            let u = vi[k] - vj[k];
            speed_sq += u * u;
        }
        let speed = speed_sq.sqrt();
        let accepted = match &self.kernel {
            CollisionKernel::HardSpheres { .. } => {
                let bound = self.majorant.rate_bound(&self.kernel);
                rng.random::<f64>() * bound < pair_rate(&self.kernel, speed)
            }
            _ => true,
        };
        if !accepted {
            return Ok(false);
        }

        let (before, rest) = self.scratch.split_at_mut(2 * d);
        let (sigma, axis) = rest.split_at_mut(d);
        let mut energy_before = 0.0;
        for k in 0..d {
            before[k] = vi[k] + vj[k];
            energy_before += vi[k] * vi[k] + vj[k] * vj[k];
        }

        if d == 1 {
            let theta = rng.random::<f64>() * TAU;
            let (a, b) = kac_rotate(vi[0], vj[0], theta);
            vi[0] = a;
            vj[0] = b;
        } else if speed > 0.0 {
            for k in 0..d {
                axis[k] = (vi[k] - vj[k]) / speed;
            }
            model::sample_sigma_into(&self.kernel, axis, sigma, rng)?;
            model::collide_in_place(vi, vj, sigma);
        }

        let mut energy_after = 0.0;
        let mut finite = true;
        for k in 0..d {
            let p = vi[k] + vj[k];
            before[d + k] = p - before[k];
            energy_after += vi[k] * vi[k] + vj[k] * vj[k];
            finite &= vi[k].is_finite() && vj[k].is_finite();
        }
        let (si, sj) = (model::norm_sq(vi), model::norm_sq(vj));
        if !finite {
            return Err(Error::Numerical {
                run: None,
                event: system.collision_count + 1,
                detail: format!("non-finite velocity after colliding particles {lo} and {hi}"),
            });
        }
        let d_energy = energy_after - energy_before;
        system.adjust_cache(&before[d..2 * d], d_energy);
        system.collision_count += 1;
        self.telemetry.accepted += 1;

        let total = system.energy().max(f64::MIN_POSITIVE);
        if d > 1 {
            let dp = model::norm_sq(&before[d..2 * d]).sqrt() / total.sqrt();
            self.telemetry.max_event_momentum_drift = self.telemetry.max_event_momentum_drift.max(dp);
        }
        self.telemetry.max_event_energy_drift = self.telemetry.max_event_energy_drift.max(d_energy.abs() / total);

        if matches!(self.kernel, CollisionKernel::HardSpheres { .. }) {
            self.majorant.observe(si);
            self.majorant.observe(sj);
            self.majorant.after_collision(system);
            self.telemetry.majorant_refreshes = self.majorant.refreshes;
            self.telemetry.majorant_violations = self.majorant.violations;
        }

        if let (Some(k), Some(sphere)) = (self.reproject_every, system.sphere()) {
            if system.collision_count % k == 0 {
                let time = system.time;
                let count = system.collision_count;
                let projected = match sphere {
                    init::SphereConstraint::Boltzmann { energy } => init::condition_to_sphere(system, energy)?,
                    init::SphereConstraint::Energy { energy } => init::condition_to_energy_sphere(system, energy)?,
                };
                *system = projected;
                system.time = time;
                system.collision_count = count;
                self.telemetry.reprojections += 1;
                if matches!(self.kernel, CollisionKernel::HardSpheres { .. }) {
                    self.majorant.max_speed = exact_max_speed(system);
                }
            }
        }
        Ok(true)
    }
}

fn check_kernel(system: &ParticleSystem, kernel: &CollisionKernel) -> Result<()> {
    if system.n() < 2 {
        return Err(Error::pre("a run needs N ≥ 2"));
    }
    match kernel {
        CollisionKernel::TrueMaxwell(tmm) if tmm.dim() != system.dim() => Err(Error::pre(format!(
            "true Maxwell kernel built for d = {}, system has d = {}",
            tmm.dim(),
            system.dim()
        ))),
        _ => Ok(()),
    }
}

/// One candidate event of the uniformized chain.
pub fn step<R: Rng + ?Sized>(
    system: &mut ParticleSystem,
    kernel: &CollisionKernel,
    majorant: &mut MajorantState,
    rng: &mut R,
) -> Result<StepOutcome> {
    let mut lp = EventLoop::new(system, kernel)?;
    std::mem::swap(&mut lp.majorant, majorant);
    let out = lp.step(system, rng);
    std::mem::swap(&mut lp.majorant, majorant);
    out
}

/// Velocities at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub velocities: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Keep only the first `retain` particles in snapshots.
    pub retain: Option<usize>,
    /// Re-project onto the sphere every K accepted collisions.
    pub reproject_every: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshots: Vec<Snapshot>,
    pub telemetry: Telemetry,
    pub final_state: ParticleSystem,
}

/// Simulate up to the last scheduled time, recording exact snapshots.
pub fn run<R: Rng + ?Sized>(
    system: ParticleSystem,
    kernel: &CollisionKernel,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<RunOutput> {
    run_with(system, kernel, schedule, &RunOptions::default(), rng)
}

pub fn run_with<R: Rng + ?Sized>(
    mut system: ParticleSystem,
    kernel: &CollisionKernel,
    schedule: &Schedule,
    options: &RunOptions,
    rng: &mut R,
) -> Result<RunOutput> {
    let mut lp = EventLoop::new(&system, kernel)?.with_reprojection(options.reproject_every);
    let keep = options.retain.unwrap_or(usize::MAX);
    let (p0, e0) = system.recompute_totals();
    let e_scale = e0.max(f64::MIN_POSITIVE);
    let mut snapshots = Vec::with_capacity(schedule.output_times().len());
    let drift = |s: &ParticleSystem, t: &mut Telemetry| {
        let (p, e) = s.recompute_totals();
        let dp = p.iter().zip(&p0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if s.dim() > 1 {
            t.max_momentum_drift = t.max_momentum_drift.max(dp / e_scale.sqrt());
        }
        t.max_energy_drift = t.max_energy_drift.max((e - e0).abs() / e_scale);
        if let Some((m, en)) = s.sphere_violation() {
            t.max_sphere_violation = t.max_sphere_violation.max(m.max(en));
        }
    };
    let mut extra = Telemetry::default();
    for &t_out in schedule.output_times() {
        lp.advance_to(&mut system, t_out, rng)?;
        drift(&system, &mut extra);
        snapshots.push(Snapshot {
            time: t_out,
            velocities: system.leading_velocities(keep),
        });
    }
    let mut telemetry = lp.telemetry.clone();
    telemetry.max_momentum_drift = extra.max_momentum_drift;
    telemetry.max_energy_drift = extra.max_energy_drift;
    telemetry.max_sphere_violation = extra.max_sphere_violation;
    Ok(RunOutput {
        snapshots,
        telemetry,
        final_state: system,
    })
}

/// How the initial N-particle state is built from `f_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// The tensor product `f_0^{⊗N}`.
    Free,
    /// `f_0^{⊗N}` projected onto the sphere of energy `ℰ(f_0)`.
    Sphere,
}

/// Everything needed to simulate one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kernel: CollisionKernel,
    pub initial: OneParticleDensity,
    pub conditioning: Conditioning,
    pub particles: usize,
    pub schedule: Schedule,
    pub options: RunOptions,
}

impl EnsembleSpec {
    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn energy(&self) -> f64 {
        self.initial.energy()
    }

    /// Draw the initial state of one replica.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParticleSystem> {
        let s = init::sample_iid(&self.initial, self.particles, rng)?;
        match (self.conditioning, self.dim()) {
            (Conditioning::Free, _) => Ok(s),
            (Conditioning::Sphere, 1) => init::condition_to_energy_sphere(&s, self.energy()),
            (Conditioning::Sphere, _) => init::condition_to_sphere(&s, self.energy()),
        }
    }
}

/// Velocities of every replica at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSnapshot {
    pub time: f64,
    pub dim: usize,
    /// Particles per replica in the simulation.
    pub particles: usize,
    /// Whether replicas live on the conservation sphere.
    pub sphere: bool,
    /// Retained velocities per replica, row-major, in run-index order.
    pub runs: Vec<Vec<f64>>,
}

impl EnsembleSnapshot {
    pub fn retained(&self) -> usize {
        self.runs.first().map_or(0, |r| r.len() / self.dim)
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleOutput {
    pub snapshots: Vec<EnsembleSnapshot>,
    pub telemetry: Vec<Telemetry>,
}

impl EnsembleOutput {
    pub fn total_telemetry(&self) -> Telemetry {
        let mut t = Telemetry::default();
        self.telemetry.iter().for_each(|x| t.merge(x));
        t
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// RNG of replica `run` for a master seed.
pub fn run_rng(master_seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run);
    rng
}

/// An independent RNG for auxiliary purposes (`domain` ≠ 0 keeps it disjoint from the replica streams).
pub fn aux_rng(master_seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(master_seed ^ splitmix(domain)));
    rng.set_stream(index);
    rng
}

/// A 64-bit seed for a sub-task, derived like [`aux_rng`].
pub fn derive_seed(master_seed: u64, domain: u64, index: u64) -> u64 {
    use rand::RngCore;
    aux_rng(master_seed, domain, index).next_u64()
}

/// A worker pool of the given size.
pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Run `runs` replicas and reduce each with `reduce`, returning results in run order.
///
/// Replica `r` uses [`run_rng`]`(master_seed, r)` for both its initial state
/// and its dynamics, so results do not depend on `workers` or scheduling.
pub fn run_ensemble_map<T, F>(spec: &EnsembleSpec, runs: usize, master_seed: u64, workers: usize, reduce: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, RunOutput) -> T + Sync,
{
    if runs == 0 {
        return Err(Error::pre("an ensemble needs R ≥ 1"));
    }
    let one = |r: usize| -> Result<T> {
        let mut rng = run_rng(master_seed, r as u64);
        let state = spec.initial_state(&mut rng).map_err(|e| e.in_run(r))?;
        let out = run_with(state, &spec.kernel, &spec.schedule, &spec.options, &mut rng).map_err(|e| e.in_run(r))?;
        Ok(reduce(r, out))
    };
    let results: Vec<Result<T>> = if workers == 1 {
        (0..runs).map(one).collect()
    } else {
        thread_pool(workers)?.install(|| (0..runs).into_par_iter().map(one).collect())
    };
    results.into_iter().collect()
}

/// Independent replicas of the N-particle process, grouped by output time.
pub fn run_ensemble(spec: &EnsembleSpec, runs: usize, master_seed: u64, workers: usize) -> Result<EnsembleOutput> {
    let per_run = run_ensemble_map(spec, runs, master_seed, workers, |_, out| (out.snapshots, out.telemetry))?;
    let times = spec.schedule.output_times();
    let mut snapshots: Vec<EnsembleSnapshot> = times
        .iter()
        .map(|&time| EnsembleSnapshot {
            time,
            dim: spec.dim(),
            particles: spec.particles,
            sphere: spec.conditioning == Conditioning::Sphere,
            runs: Vec::with_capacity(runs),
        })
        .collect();
    let mut telemetry = Vec::with_capacity(runs);
    for (snaps, tel) in per_run {
        for (slot, s) in snapshots.iter_mut().zip(snaps) {
            slot.runs.push(s.velocities);
        }
        telemetry.push(tel);
    }
    Ok(EnsembleOutput { snapshots, telemetry })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrueMaxwell;

    fn gmm_spec(n: usize, t_end: f64) -> EnsembleSpec {
        EnsembleSpec {
            kernel: CollisionKernel::CutoffMaxwell,
            initial: OneParticleDensity::gaussian(3, 1.0).unwrap(),
            conditioning: Conditioning::Sphere,
            particles: n,
            schedule: Schedule::linear(t_end, 3).unwrap(),
            options: RunOptions::default(),
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::new(vec![0.5, 1.0]).is_err());
        assert!(Schedule::new(vec![0.0, 1.0, 1.0]).is_err());
        let g = Schedule::geometric(10.0, 12).unwrap();
        assert_eq!(g.output_times().len(), 12);
        assert_eq!(g.output_times()[0], 0.0);
        assert!((g.output_times()[1] - 0.1).abs() < 1e-12);
        assert!((g.output_times()[6] - 1.0).abs() < 1e-12);
        assert_eq!(g.t_end(), 10.0);
    }

    #[test]
    fn zero_length_schedule_returns_input() {
        let mut rng = run_rng(1, 0);
        let s = init::sample_uniform_sphere(20, 3, 3.0, &mut rng).unwrap();
        let out = run(s.clone(), &CollisionKernel::CutoffMaxwell, &Schedule::initial_only(), &mut rng).unwrap();
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.snapshots[0].velocities, s.velocities());
        assert_eq!(out.telemetry.accepted, 0);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let spec = gmm_spec(50, 2.0);
        let a = run_ensemble(&spec, 3, 9, 1).unwrap();
        let b = run_ensemble(&spec, 3, 9, 1).unwrap();
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(x.runs, y.runs);
        }
    }

    #[test]
    fn single_run_ensemble_equals_run() {
        let spec = gmm_spec(30, 1.0);
        let e = run_ensemble(&spec, 1, 5, 1).unwrap();
        let mut rng = run_rng(5, 0);
        let s = spec.initial_state(&mut rng).unwrap();
        let direct = run(s, &spec.kernel, &spec.schedule, &mut rng).unwrap();
        for (snap, d) in e.snapshots.iter().zip(&direct.snapshots) {
            assert_eq!(snap.runs[0], d.velocities);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let spec = gmm_spec(40, 1.0);
        let a = run_ensemble(&spec, 6, 11, 1).unwrap();
        let b = run_ensemble(&spec, 6, 11, 4).unwrap();
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(x.runs, y.runs);
        }
        assert_eq!(a.telemetry, b.telemetry);
    }

    #[test]
    fn hard_spheres_never_collide_equal_velocities() {
        let s = ParticleSystem::from_velocities(3, vec![0.5, 0.0, 0.0, 0.5, 0.0, 0.0]).unwrap();
        let kernel = CollisionKernel::hard_spheres(1.0).unwrap();
        let mut rng = run_rng(3, 0);
        let mut maj = MajorantState::new(&s);
        let mut sys = s.clone();
        for _ in 0..100 {
            let o = step(&mut sys, &kernel, &mut maj, &mut rng).unwrap();
            assert!(!o.accepted);
        }
        assert_eq!(sys.velocities(), s.velocities());
    }

    #[test]
    fn hard_spheres_with_zero_rate_everywhere_idle() {
        let s = ParticleSystem::from_velocities(2, vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let kernel = CollisionKernel::hard_spheres(1.0).unwrap();
        let out = run(s, &kernel, &Schedule::linear(5.0, 4).unwrap(), &mut run_rng(0, 0)).unwrap();
        assert_eq!(out.snapshots.len(), 4);
        assert_eq!(out.telemetry.candidates, 0);
    }

    #[test]
    fn conservation_per_event_and_majorant() {
        let mut rng = run_rng(21, 0);
        let f0 = OneParticleDensity::two_bump(3, 1.5, 0.5).unwrap();
        for kernel in [
            CollisionKernel::hard_spheres(1.0).unwrap(),
            CollisionKernel::CutoffMaxwell,
            CollisionKernel::TrueMaxwell(TrueMaxwell::normalized(0.1, 3).unwrap()),
        ] {
            let s = init::sample_iid(&f0, 200, &mut rng).unwrap();
            let out = run(s, &kernel, &Schedule::linear(20.0, 5).unwrap(), &mut rng).unwrap();
            let t = &out.telemetry;
            assert!(t.accepted > 1000);
            assert!(t.max_event_momentum_drift <= 1e-12, "{t:?}");
            assert!(t.max_event_energy_drift <= 1e-12, "{t:?}");
            assert!(t.max_energy_drift <= 1e-10 && t.max_momentum_drift <= 1e-10, "{t:?}");
            assert_eq!(t.majorant_violations, 0);
            assert!(out.final_state.cache_discrepancy() < 1e-9);
        }
    }

    #[test]
    fn kac_model_preserves_energy_sphere() {
        let spec = EnsembleSpec {
            kernel: CollisionKernel::CutoffMaxwell,
            initial: OneParticleDensity::uniform_ball(1, 1.0).unwrap(),
            conditioning: Conditioning::Sphere,
            particles: 100,
            schedule: Schedule::linear(10.0, 3).unwrap(),
            options: RunOptions::default(),
        };
        let out = run_ensemble(&spec, 2, 4, 1).unwrap();
        let t = out.total_telemetry();
        assert!(t.accepted > 500);
        assert!(t.max_sphere_violation < 1e-10);
    }

    #[test]
    fn reprojection_is_counted() {
        let mut spec = gmm_spec(50, 5.0);
        spec.options.reproject_every = Some(10);
        let out = run_ensemble(&spec, 1, 2, 1).unwrap();
        let t = out.total_telemetry();
        assert_eq!(t.reprojections, t.accepted / 10);
        assert!(t.max_sphere_violation < 1e-12);
    }

    #[test]
    fn retain_limits_snapshot_size() {
        let mut spec = gmm_spec(50, 1.0);
        spec.options.retain = Some(7);
        let out = run_ensemble(&spec, 2, 2, 1).unwrap();
        assert!(out.snapshots.iter().all(|s| s.retained() == 7));
    }

    #[test]
    fn non_finite_state_is_reported_with_event_index() {
        let s = ParticleSystem::from_velocities(1, vec![f64::MAX, -f64::MAX]).unwrap();
        let mut rng = run_rng(0, 0);
        let err = run(s, &CollisionKernel::CutoffMaxwell, &Schedule::linear(100.0, 2).unwrap(), &mut rng).unwrap_err();
        match err {
            Error::Numerical { event, .. } => assert!(event >= 1),
            other => panic!("{other}"),
        }
    }
}
