//! Experiment orchestration: the `run`, `sweep-n`, `relaxation` and
//! `cutoff-study` commands, plus replay of a finished output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{KernelName, LoadedConfig, ReferenceKind};
use super::output::{
    num, opt_num, svg_plot, velocity_digest, CsvTable, FileDigest, Manifest, OutputDir, Provenance, Series,
    SnapshotDigest,
};
use crate::engine::{
    aux_rng, derive_seed, run_ensemble, thread_pool, Conditioning, EnsembleOutput, EnsembleSnapshot, EnsembleSpec,
    Schedule, Telemetry,
};
use crate::error::{Error, Result};
use crate::metrics::chaos::{alpha_for, per_particle_entropy};
use crate::metrics::{
    extract_marginal, extract_marginal_capped, relaxation_beta, EmpiricalMarginal, MarginalMode, MetricKind,
    MetricReport, RelaxationSettings, SweepEntry, TensorReference,
};
use crate::model::CollisionKernel;
use crate::oracle::{bkw_from_initial, m4_reference, Equilibrium, WildSampler};

const DOMAIN_ENSEMBLE: u64 = 1;
const DOMAIN_PROJECTIONS: u64 = 2;
const DOMAIN_ENTROPY: u64 = 3;
const DOMAIN_REFERENCE: u64 = 4;
const DOMAIN_CUTOFF: u64 = 5;
const DOMAIN_REFERENCE_RUN: u64 = 6;

/// Tree-sampler draws per parallel chunk; fixed so output is worker-independent.
const REFERENCE_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Run,
    SweepN,
    Relaxation,
    CutoffStudy,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::SweepN => "sweep-n",
            Command::Relaxation => "relaxation",
            Command::CutoffStudy => "cutoff-study",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "run" => Ok(Command::Run),
            "sweep-n" => Ok(Command::SweepN),
            "relaxation" => Ok(Command::Relaxation),
            "cutoff-study" => Ok(Command::CutoffStudy),
            other => Err(Error::Config(format!("unknown command {other:?}"))),
        }
    }
}

/// Everything needed to run one command.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: LoadedConfig,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub dump_velocities: bool,
}

impl Invocation {
    /// Seed, workers and output directory taken from the config file.
    pub fn from_config(command: Command, config: LoadedConfig) -> Self {
        let run = &config.config.run;
        Self {
            command,
            seed: run.seed,
            workers: run.workers,
            out: PathBuf::from(&run.output),
            dump_velocities: false,
            config,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub manifest: Manifest,
    /// Human-readable summary, also written to `summary.txt`.
    pub summary: String,
}

struct Context<'a> {
    inv: &'a Invocation,
    cfg: &'a LoadedConfig,
    out: OutputDir,
    provenance: Provenance,
    snapshots: Vec<SnapshotDigest>,
    telemetry: Telemetry,
    notes: Vec<String>,
    reports: Vec<MetricReport>,
    summary: Vec<String>,
    pool: rayon::ThreadPool,
}

/// Run a command and write its outputs and manifest.
pub fn execute(inv: &Invocation) -> Result<Outcome> {
    let started = Instant::now();
    if inv.workers == 0 {
        return Err(Error::Config("workers must be positive".into()));
    }
    preflight(inv)?;
    let cfg = &inv.config;
    let mut ctx = Context {
        inv,
        cfg,
        out: OutputDir::create(&inv.out)?,
        provenance: Provenance {
            config_hash: cfg.hash(),
            seed: inv.seed,
            command: inv.command.name().to_string(),
        },
        snapshots: Vec::new(),
        telemetry: Telemetry::default(),
        notes: Vec::new(),
        reports: Vec::new(),
        summary: Vec::new(),
        pool: thread_pool(inv.workers)?,
    };
    match inv.command {
        Command::Run => run_command(&mut ctx)?,
        Command::SweepN => sweep_command(&mut ctx)?,
        Command::Relaxation => relaxation_command(&mut ctx)?,
        Command::CutoffStudy => cutoff_command(&mut ctx)?,
    }
    let reports = serde_json::to_string_pretty(&ctx.reports).map_err(|e| Error::Serialization(e.to_string()))?;
    ctx.out.write("reports.json", &reports)?;
    let summary = ctx.summary.join("\n") + "\n";
    ctx.out.write("summary.txt", &summary)?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: inv.command.name().to_string(),
        config_hash: ctx.provenance.config_hash.clone(),
        seed: inv.seed,
        workers: inv.workers,
        dump_velocities: inv.dump_velocities,
        config: cfg.source.clone(),
        outputs: ctx.out.digests().to_vec(),
        snapshots: ctx.snapshots,
        telemetry: ctx.telemetry,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        notes: ctx.notes,
    };
    ctx.out.write_manifest(&manifest)?;
    Ok(Outcome { manifest, summary })
}

/// Checks that need the command as well as the config, done before any simulation.
fn preflight(inv: &Invocation) -> Result<()> {
    let cfg = &inv.config;
    let c = &cfg.config;
    let located = |section: &str, key: &str, msg: &str| match super::config::locate(&cfg.source, section, key) {
        Some(line) => Error::Config(format!("line {line}: {section}.{key}: {msg}")),
        None => Error::Config(format!("{section}.{key}: {msg}")),
    };
    match inv.command {
        Command::SweepN => {
            if c.sweep.is_none() {
                return Err(Error::Config("sweep-n needs a [sweep] section with a particles list".into()));
            }
        }
        Command::Relaxation => {
            if c.initial.conditioning != Conditioning::Sphere {
                return Err(located(
                    "initial",
                    "conditioning",
                    "relaxation to the uniform law on the sphere needs conditioning = \"sphere\"",
                ));
            }
        }
        Command::CutoffStudy => {
            if c.model.kernel != KernelName::Tmm {
                return Err(located("model", "kernel", "cutoff-study needs kernel = \"tmm\""));
            }
            if c.cutoff.is_none() {
                return Err(Error::Config("cutoff-study needs a [cutoff] section with an epsilons list".into()));
            }
        }
        Command::Run => {}
    }
    Ok(())
}

impl Context<'_> {
    fn seed(&self, domain: u64, index: u64) -> u64 {
        derive_seed(self.inv.seed, domain, index)
    }

    fn table(&mut self, table: &CsvTable) -> Result<()> {
        self.out.write_table(table, &self.provenance)
    }

    fn simulate(&mut self, label: &str, spec: &EnsembleSpec, runs: usize, seed: u64) -> Result<EnsembleOutput> {
        let ens = run_ensemble(spec, runs, seed, self.inv.workers)?;
        let total = ens.total_telemetry();
        self.telemetry.merge(&total);
        for snap in &ens.snapshots {
            self.snapshots.push(SnapshotDigest {
                label: label.to_string(),
                time: snap.time,
                sha256: velocity_digest(&snap.runs),
            });
        }
        if self.inv.dump_velocities {
            self.dump(label, &ens)?;
        }
        self.summary.push(format!(
            "{label}: {runs} runs of N = {}, {} accepted events, max energy drift {:.2e}",
            spec.particles, total.accepted, total.max_energy_drift
        ));
        Ok(ens)
    }

    fn dump(&mut self, label: &str, ens: &EnsembleOutput) -> Result<()> {
        let dir = self.out.path().join("velocities");
        fs::create_dir_all(&dir)?;
        for (k, snap) in ens.snapshots.iter().enumerate() {
            let d = snap.dim;
            let mut header = vec!["run".to_string(), "particle".to_string()];
            header.extend((0..d).map(|c| format!("v{c}")));
            let refs: Vec<&str> = header.iter().map(String::as_str).collect();
            let mut t = CsvTable::new(&format!("velocities/{}_t{k:02}", file_label(label)), &refs);
            for (r, run) in snap.runs.iter().enumerate() {
                for (i, v) in run.chunks_exact(d).enumerate() {
                    let mut row = vec![r.to_string(), i.to_string()];
                    row.extend(v.iter().map(|x| num(*x)));
                    t.push(row);
                }
            }
            self.table(&t)?;
        }
        Ok(())
    }
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
        .collect()
}

/// Pooled tuples a replica contributes to an ℓ-marginal.
fn tuples_per_run(mode: MarginalMode, particles: usize, ell: usize, cap: Option<usize>) -> usize {
    match mode {
        MarginalMode::Strict => 1,
        MarginalMode::Pooled => (particles / ell).min(cap.unwrap_or(usize::MAX)).max(1),
    }
}

/// Replicas needed for `samples` tuples of the largest order, or the configured count.
fn runs_for(cfg: &LoadedConfig, particles: usize, samples: Option<usize>) -> usize {
    let est = &cfg.config.estimators;
    let ell = est.orders.iter().copied().max().unwrap_or(1);
    match samples {
        Some(s) => s.div_ceil(tuples_per_run(est.mode, particles, ell, est.per_run)),
        None => cfg.config.ensemble.runs,
    }
}

struct Moments {
    m2: (f64, f64),
    axis2: (f64, f64),
    m4: (f64, f64),
}

fn moments(snap: &EnsembleSnapshot) -> Result<Moments> {
    let m = extract_marginal(snap, 1, MarginalMode::Pooled)?;
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    Ok(Moments {
        m2: m.mean_of(sq),
        axis2: m.mean_of(|v| v[0] * v[0]),
        m4: m.mean_of(|v| sq(v).powi(2)),
    })
}

/// Samples of `f_t^{⊗ℓ}` from the tree sampler, generated in fixed chunks.
fn tree_marginal(wild: &WildSampler, t: f64, order: usize, rows: usize, seed: u64, index: u64) -> Result<EmpiricalMarginal> {
    let chunks = rows.div_ceil(REFERENCE_CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = aux_rng(seed, DOMAIN_REFERENCE, (index << 32) | c as u64);
            let count = REFERENCE_CHUNK.min(rows - c * REFERENCE_CHUNK) * order;
            wild.sample_many(t, count, &mut rng)
        })
        .collect();
    EmpiricalMarginal::from_iid(order, wild.initial().dim(), parts.concat(), t, 1)
}

/// The cutoff Maxwell limit `f_t^{⊗ℓ}`: exact for BKW and Gaussian data, tree samples otherwise.
fn oracle_reference(
    cfg: &LoadedConfig,
    kernel: &CollisionKernel,
    order: usize,
    times: &[f64],
    seed: u64,
    tree_max_time: f64,
) -> Result<TensorReference> {
    if !matches!(kernel, CollisionKernel::CutoffMaxwell) {
        return Err(Error::UnsupportedOracle(format!(
            "the {} kernel; use [sweep] reference = \"simulation\"",
            kernel.name()
        )));
    }
    let f0 = cfg.initial_density()?;
    if let Ok(profile) = bkw_from_initial(&f0) {
        return Ok(TensorReference::Bkw(profile));
    }
    let t_max = times.iter().copied().fold(0.0, f64::max);
    if t_max > tree_max_time {
        return Err(Error::UnsupportedOracle(format!(
            "tree sampling up to t = {t_max} (limit {tree_max_time}, cost grows like e^t); \
             raise [sweep] tree_max_time or use reference = \"simulation\""
        )));
    }
    let wild = WildSampler::new(f0);
    let rows = cfg.config.estimators.reference_samples;
    let marginals = times
        .iter()
        .enumerate()
        .map(|(k, &t)| tree_marginal(&wild, t, order, rows, seed, k as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(TensorReference::Samples(marginals))
}

fn tree_max_time(cfg: &LoadedConfig) -> f64 {
    cfg.config.sweep.as_ref().map(|s| s.tree_max_time).unwrap_or(6.0)
}

// ---------------------------------------------------------------- run

fn run_command(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.cfg;
    let spec = cfg.spec()?;
    let n = spec.particles;
    let runs = cfg.config.ensemble.runs;
    let ens = ctx.simulate(&format!("N={n}"), &spec, runs, ctx.seed(DOMAIN_ENSEMBLE, n as u64))?;
    let f0 = cfg.initial_density()?;
    let est = &cfg.config.estimators;

    let mut table = CsvTable::new(
        "moments",
        &["time", "m2", "m2_err", "m2_axis", "m2_axis_err", "m4", "m4_err", "m4_reference"],
    );
    for snap in &ens.snapshots {
        let m = moments(snap)?;
        let reference = m4_reference(&spec.kernel, &f0, snap.time).ok();
        table.push(vec![
            num(snap.time),
            num(m.m2.0),
            num(m.m2.1),
            num(m.axis2.0),
            num(m.axis2.1),
            num(m.m4.0),
            num(m.m4.1),
            opt_num(reference),
        ]);
        ctx.reports.push(
            MetricReport::new(MetricKind::FourthMoment, m.m4.0, m.m4.1, ctx.inv.seed)
                .at_time(snap.time)
                .with_particles(n),
        );
    }
    ctx.table(&table)?;

    if est.entropy_samples > 0 {
        entropy_table(ctx, &[(n, &ens)], "entropy")?;
    }
    if spec.conditioning == Conditioning::Sphere {
        beta_tables(ctx, &[(n, &ens)])?;
    }

    // Distance to the limit equation, when an oracle is available.
    let times = spec.schedule.output_times().to_vec();
    let projection_seed = ctx.seed(DOMAIN_PROJECTIONS, 0);
    let mut limit = CsvTable::new("limit", &["time", "order", "distance", "error", "samples"]);
    for &ell in &est.orders {
        let reference = match oracle_reference(cfg, &spec.kernel, ell, &times, ctx.seed(DOMAIN_REFERENCE, ell as u64), tree_max_time(cfg)) {
            Ok(r) => r,
            Err(Error::UnsupportedOracle(why)) => {
                ctx.notes.push(format!("limit distance skipped for order {ell}: no oracle for {why}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        let settings = cfg.sliced(projection_seed);
        for snap in &ens.snapshots {
            let m = extract_marginal_capped(snap, ell, est.mode, est.per_run)?;
            let w = ctx.pool.install(|| reference.distance(&m, &settings))?;
            let (value, error) = (w.value / ell as f64, w.error / ell as f64);
            limit.push(vec![num(snap.time), ell.to_string(), num(value), num(error), m.len().to_string()]);
            ctx.reports.push(
                MetricReport::new(MetricKind::W1Sliced, value, error, ctx.inv.seed)
                    .at_time(snap.time)
                    .with_particles(n)
                    .with_order(ell)
                    .param("projections", settings.projections)
                    .param("resamples", settings.resamples)
                    .param("reference", "limit"),
            );
        }
    }
    if !limit.rows.is_empty() {
        ctx.table(&limit)?;
    }
    Ok(())
}

/// Per-particle `H(f̂^(1)_t | γ)` for each ensemble.
fn entropy_table(ctx: &mut Context, ensembles: &[(usize, &EnsembleOutput)], name: &str) -> Result<()> {
    let cfg = ctx.cfg;
    let est = &cfg.config.estimators;
    let gamma = Equilibrium::new(cfg.config.model.dim, cfg.energy())?;
    let mut table = CsvTable::new(name, &["particles", "time", "relative_entropy", "error", "samples", "jittered"]);
    let mut series = Vec::new();
    for &(n, ens) in ensembles {
        let settings = cfg.entropy(ctx.seed(DOMAIN_ENTROPY, n as u64));
        let mut points = Vec::new();
        for snap in &ens.snapshots {
            let h = ctx
                .pool
                .install(|| per_particle_entropy(snap, &gamma, est.entropy_samples, &settings))?;
            table.push(vec![
                n.to_string(),
                num(snap.time),
                num(h.value),
                num(h.error),
                h.n.to_string(),
                h.jittered.to_string(),
            ]);
            let mut report = MetricReport::new(MetricKind::RelativeEntropy, h.value, h.error, ctx.inv.seed)
                .at_time(snap.time)
                .with_particles(n)
                .param("k", h.k)
                .param("samples", h.n);
            if h.jittered {
                report = report.flag("jittered");
            }
            ctx.reports.push(report);
            points.push((snap.time, h.value, h.error));
        }
        series.push(Series {
            name: format!("N={n}"),
            points,
        });
    }
    ctx.table(&table)?;
    let svg = svg_plot("Per-particle relative entropy", "t", "H(f|γ)", &series, false);
    ctx.out.write(&format!("{name}.svg"), &svg)?;
    Ok(())
}

/// `β̂(t)` for every configured order and ensemble.
fn beta_tables(ctx: &mut Context, ensembles: &[(usize, &EnsembleOutput)]) -> Result<()> {
    let cfg = ctx.cfg;
    let est = &cfg.config.estimators;
    let energy = cfg.energy();
    let mut table = CsvTable::new("beta", &["particles", "order", "time", "beta", "error", "samples"]);
    let mut series = Vec::new();
    for &(n, ens) in ensembles {
        for &ell in &est.orders {
            let settings = RelaxationSettings {
                order: ell,
                mode: est.mode,
                per_run: est.per_run,
                sliced: cfg.sliced(ctx.seed(DOMAIN_PROJECTIONS, 0)),
                entropy: cfg.entropy(0),
                entropy_samples: 0,
                reference_seed: ctx.seed(DOMAIN_REFERENCE, n as u64),
            };
            let rows = ctx.pool.install(|| relaxation_beta(&ens.snapshots, energy, &settings))?;
            let mut points = Vec::new();
            for r in &rows {
                table.push(vec![
                    n.to_string(),
                    ell.to_string(),
                    num(r.time),
                    num(r.beta),
                    num(r.error),
                    r.detail.sizes.0.to_string(),
                ]);
                ctx.reports.push(
                    MetricReport::new(MetricKind::Relaxation, r.beta, r.error, ctx.inv.seed)
                        .at_time(r.time)
                        .with_particles(n)
                        .with_order(ell)
                        .param("projections", r.detail.projections)
                        .param("samples", r.detail.sizes.0),
                );
                points.push((r.time, r.beta, r.error));
            }
            series.push(Series {
                name: format!("N={n}, l={ell}"),
                points,
            });
        }
    }
    ctx.table(&table)?;
    let svg = svg_plot("Relaxation to the uniform law on the sphere", "t", "beta(t)", &series, false);
    ctx.out.write("beta.svg", &svg)?;
    Ok(())
}

// ---------------------------------------------------------------- sweep-n

/// Per-N results kept on disk so an interrupted sweep resumes where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SweepCache {
    config_hash: String,
    seed: u64,
    particles: usize,
    alpha_rows: Vec<Vec<String>>,
    grid_rows: Vec<Vec<String>>,
    telemetry: Telemetry,
    snapshots: Vec<SnapshotDigest>,
    summary: Vec<String>,
}

fn cache_path(out: &Path, n: usize) -> PathBuf {
    out.join("cache").join(format!("alpha-N{n}.json"))
}

fn load_cache(path: &Path, hash: &str, seed: u64, n: usize) -> Option<SweepCache> {
    let text = fs::read_to_string(path).ok()?;
    let cache: SweepCache = serde_json::from_str(&text).ok()?;
    (cache.config_hash == hash && cache.seed == seed && cache.particles == n).then_some(cache)
}

fn sweep_command(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.cfg;
    let sw = cfg.config.sweep.clone().expect("checked in preflight");
    let est = &cfg.config.estimators;
    let kernel = cfg.kernel()?;
    let schedule = cfg.schedule()?;
    let times = schedule.output_times().to_vec();
    let settings = cfg.sliced(ctx.seed(DOMAIN_PROJECTIONS, 0));
    let n_max = sw.particles.iter().copied().max().expect("validated nonempty");

    // One reference per order, built before any sweep member runs.
    let references: Vec<(usize, TensorReference)> = match sw.reference {
        ReferenceKind::Oracle => est
            .orders
            .iter()
            .map(|&ell| {
                oracle_reference(cfg, &kernel, ell, &times, ctx.seed(DOMAIN_REFERENCE, ell as u64), sw.tree_max_time)
                    .map(|r| (ell, r))
            })
            .collect::<Result<_>>()?,
        ReferenceKind::Simulation => {
            let n_ref = 8 * n_max;
            let rows = est.reference_samples;
            let ell_max = est.orders.iter().copied().max().unwrap_or(1);
            let runs = rows.div_ceil(tuples_per_run(est.mode, n_ref, ell_max, est.per_run));
            let spec = cfg.spec_for(n_ref, kernel.clone())?;
            let ens = ctx.simulate(&format!("reference N={n_ref}"), &spec, runs, ctx.seed(DOMAIN_REFERENCE_RUN, n_ref as u64))?;
            ctx.notes.push(format!("reference: simulation with N_ref = {n_ref}, {runs} runs"));
            est.orders
                .iter()
                .map(|&ell| {
                    let marginals = ens
                        .snapshots
                        .iter()
                        .map(|s| extract_marginal_capped(s, ell, est.mode, est.per_run).map(|m| m.truncated(rows)))
                        .collect::<Result<Vec<_>>>()?;
                    Ok((ell, TensorReference::Samples(marginals)))
                })
                .collect::<Result<_>>()?
        }
    };

    let hash = cfg.hash();
    let mut alpha = CsvTable::new("alpha", &["particles", "order", "runs", "samples", "alpha", "error", "argmax_time"]);
    let mut grid = CsvTable::new("alpha_grid", &["particles", "order", "time", "distance"]);
    for &n in &sw.particles {
        let path = cache_path(ctx.out.path(), n);
        let cached = match load_cache(&path, &hash, ctx.inv.seed, n) {
            Some(c) => {
                ctx.notes.push(format!("N={n} restored from {}", path.display()));
                c
            }
            None => {
                let c = sweep_member(ctx, n, &kernel, &references, sw.samples, &settings)?;
                fs::create_dir_all(path.parent().expect("cache dir"))?;
                let text = serde_json::to_string(&c).map_err(|e| Error::Serialization(e.to_string()))?;
                fs::write(&path, text)?;
                c
            }
        };
        ctx.telemetry.merge(&cached.telemetry);
        ctx.snapshots.extend(cached.snapshots.iter().cloned());
        ctx.summary.extend(cached.summary.iter().cloned());
        alpha.rows.extend(cached.alpha_rows.iter().cloned());
        grid.rows.extend(cached.grid_rows.iter().cloned());
    }

    let mut series = Vec::new();
    for &ell in &est.orders {
        let points: Vec<(f64, f64, f64)> = alpha
            .rows
            .iter()
            .filter(|r| r[1] == ell.to_string())
            .map(|r| (parse(&r[0]), parse(&r[4]), parse(&r[5])))
            .collect();
        for &(n, a, e) in &points {
            ctx.reports.push(
                MetricReport::new(MetricKind::Chaoticity, a, e, ctx.inv.seed)
                    .with_particles(n as usize)
                    .with_order(ell)
                    .param("projections", settings.projections)
                    .param("resamples", settings.resamples),
            );
        }
        series.push(Series {
            name: format!("l={ell}"),
            points,
        });
    }
    ctx.table(&alpha)?;
    ctx.table(&grid)?;
    ctx.out.write("alpha.svg", &svg_plot("Chaoticity", "N", "alpha(N)", &series, true))?;
    for r in &alpha.rows {
        ctx.summary
            .push(format!("alpha(N={}, l={}) = {} ± {} (max at t = {})", r[0], r[1], r[4], r[5], r[6]));
    }
    Ok(())
}

fn parse(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

fn sweep_member(
    ctx: &mut Context,
    n: usize,
    kernel: &CollisionKernel,
    references: &[(usize, TensorReference)],
    samples: Option<usize>,
    settings: &crate::metrics::SlicedSettings,
) -> Result<SweepCache> {
    let cfg = ctx.cfg;
    let est = &cfg.config.estimators;
    let runs = runs_for(cfg, n, samples);
    let spec = cfg.spec_for(n, kernel.clone())?;
    let (tel0, snaps0, sum0) = (ctx.telemetry.clone(), ctx.snapshots.len(), ctx.summary.len());
    let ens = ctx.simulate(&format!("N={n}"), &spec, runs, ctx.seed(DOMAIN_ENSEMBLE, n as u64))?;
    let mut alpha_rows = Vec::new();
    let mut grid_rows = Vec::new();
    for (ell, reference) in references {
        let marginals = ens
            .snapshots
            .iter()
            .map(|s| {
                let m = extract_marginal_capped(s, *ell, est.mode, est.per_run)?;
                Ok(match samples {
                    Some(rows) => m.truncated(rows),
                    None => m,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let count = marginals[0].len();
        let entry = SweepEntry { particles: n, marginals };
        let row = ctx.pool.install(|| alpha_for(&entry, reference, settings))?;
        alpha_rows.push(vec![
            n.to_string(),
            ell.to_string(),
            runs.to_string(),
            count.to_string(),
            num(row.alpha),
            num(row.error),
            num(row.argmax_time),
        ]);
        for p in &row.per_time {
            grid_rows.push(vec![n.to_string(), ell.to_string(), num(p.time), num(p.value)]);
        }
    }
    // The cache carries what this member contributes; the caller merges it back.
    let telemetry = ens.total_telemetry();
    let snapshots = ctx.snapshots.split_off(snaps0);
    let summary = ctx.summary.split_off(sum0);
    ctx.telemetry = tel0;
    Ok(SweepCache {
        config_hash: cfg.hash(),
        seed: ctx.inv.seed,
        particles: n,
        alpha_rows,
        grid_rows,
        telemetry,
        snapshots,
        summary,
    })
}

// ---------------------------------------------------------------- relaxation

fn relaxation_command(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.cfg;
    let kernel = cfg.kernel()?;
    let (particles, samples) = match &cfg.config.sweep {
        Some(sw) => (sw.particles.clone(), sw.samples),
        None => (vec![cfg.config.ensemble.particles], None),
    };
    let mut ensembles = Vec::with_capacity(particles.len());
    for &n in &particles {
        let spec = cfg.spec_for(n, kernel.clone())?;
        let runs = runs_for(cfg, n, samples);
        ensembles.push((n, ctx.simulate(&format!("N={n}"), &spec, runs, ctx.seed(DOMAIN_ENSEMBLE, n as u64))?));
    }
    let refs: Vec<(usize, &EnsembleOutput)> = ensembles.iter().map(|(n, e)| (*n, e)).collect();
    beta_tables(ctx, &refs)?;
    if cfg.config.estimators.entropy_samples > 0 {
        entropy_table(ctx, &refs, "entropy")?;
    }
    Ok(())
}

// ---------------------------------------------------------------- cutoff-study

fn cutoff_command(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.cfg;
    let cu = cfg.config.cutoff.clone().expect("checked in preflight");
    let est = &cfg.config.estimators;
    let n = cfg.config.ensemble.particles;
    let runs = cfg.config.ensemble.runs;
    let mut times = cfg.schedule()?.output_times().to_vec();
    if !times.iter().any(|&t| t == cu.observe_time) {
        times.push(cu.observe_time);
        times.sort_by(f64::total_cmp);
    }
    let schedule = Schedule::new(times)?;
    let energy = cfg.energy();
    let sphere = cfg.config.initial.conditioning == Conditioning::Sphere;

    let mut main = CsvTable::new(
        "cutoff",
        &[
            "epsilon",
            "runs",
            "events_per_run",
            "m2_axis",
            "m2_axis_err",
            "m4",
            "m4_err",
            "beta",
            "beta_err",
        ],
    );
    let mut curves = CsvTable::new("cutoff_moments", &["epsilon", "time", "m2_axis", "m2_axis_err", "m4", "m4_err"]);
    // (ε, events, [(value, error)] for m2_axis, m4, β).
    let mut observed: Vec<(f64, f64, [(f64, f64); 3])> = Vec::new();
    for &eps in &cu.epsilons {
        let mut spec = cfg.spec_for(n, cfg.kernel_with_cutoff(eps)?)?;
        spec.schedule = schedule.clone();
        let ens = ctx.simulate(&format!("eps={eps}"), &spec, runs, ctx.seed(DOMAIN_CUTOFF, eps.to_bits()))?;
        let events = ens.telemetry.iter().map(|t| t.accepted as f64).sum::<f64>() / runs as f64;
        for snap in &ens.snapshots {
            let m = moments(snap)?;
            curves.push(vec![num(eps), num(snap.time), num(m.axis2.0), num(m.axis2.1), num(m.m4.0), num(m.m4.1)]);
        }
        let obs = ens
            .snapshots
            .iter()
            .find(|s| s.time == cu.observe_time)
            .expect("observation time is on the schedule");
        let m = moments(obs)?;
        let beta = if sphere {
            let settings = RelaxationSettings {
                order: 1,
                mode: est.mode,
                per_run: est.per_run,
                sliced: cfg.sliced(ctx.seed(DOMAIN_PROJECTIONS, 0)),
                entropy: cfg.entropy(0),
                entropy_samples: 0,
                reference_seed: ctx.seed(DOMAIN_REFERENCE, eps.to_bits()),
            };
            let rows = ctx
                .pool
                .install(|| relaxation_beta(std::slice::from_ref(obs), energy, &settings))?;
            (rows[0].beta, rows[0].error)
        } else {
            (f64::NAN, f64::NAN)
        };
        main.push(vec![
            num(eps),
            runs.to_string(),
            num(events),
            num(m.axis2.0),
            num(m.axis2.1),
            num(m.m4.0),
            num(m.m4.1),
            num(beta.0),
            num(beta.1),
        ]);
        ctx.reports.push(
            MetricReport::new(MetricKind::Events, events, f64::NAN, ctx.inv.seed)
                .with_particles(n)
                .param("epsilon", eps),
        );
        ctx.reports.push(
            MetricReport::new(MetricKind::FourthMoment, m.m4.0, m.m4.1, ctx.inv.seed)
                .at_time(cu.observe_time)
                .with_particles(n)
                .param("epsilon", eps),
        );
        observed.push((eps, events, [m.axis2, m.m4, beta]));
    }
    ctx.table(&main)?;
    ctx.table(&curves)?;

    let mut conv = CsvTable::new(
        "cutoff_convergence",
        &["epsilon_a", "epsilon_b", "observable", "difference", "combined_error", "ratio"],
    );
    for pair in observed.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        for (k, name) in ["m2_axis", "m4", "beta"].iter().enumerate() {
            let diff = (a.2[k].0 - b.2[k].0).abs();
            let err = a.2[k].1.hypot(b.2[k].1);
            conv.push(vec![num(a.0), num(b.0), name.to_string(), num(diff), num(err), num(diff / err)]);
            ctx.summary.push(format!(
                "eps {} vs {}: |Δ{name}| = {diff:.4e}, combined error {err:.4e}",
                a.0, b.0
            ));
        }
    }
    ctx.table(&conv)?;
    // Smaller cutoffs resolve more grazing collisions, so event counts must grow.
    let mut by_eps = observed.clone();
    by_eps.sort_by(|a, b| b.0.total_cmp(&a.0));
    if by_eps.windows(2).any(|w| w[1].1 < w[0].1) {
        ctx.notes.push("event counts are not monotone in epsilon".into());
    }
    Ok(())
}

// ---------------------------------------------------------------- replay

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub compared: usize,
    pub mismatches: Vec<String>,
    pub replay_dir: PathBuf,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-run the command recorded in `out/manifest.json` and compare every output digest.
pub fn replay(out: &Path, workers: Option<usize>) -> Result<ReplayReport> {
    let manifest = Manifest::load(&out.join("manifest.json"))?;
    let config = LoadedConfig::parse(&manifest.config)?;
    if config.hash() != manifest.config_hash {
        return Err(Error::Config("manifest config text does not match its recorded hash".into()));
    }
    let replay_dir = out.join("replay");
    if replay_dir.exists() {
        fs::remove_dir_all(&replay_dir)?;
    }
    let inv = Invocation {
        command: Command::parse(&manifest.command)?,
        config,
        seed: manifest.seed,
        workers: workers.unwrap_or(manifest.workers),
        out: replay_dir.clone(),
        dump_velocities: manifest.dump_velocities,
    };
    let fresh = execute(&inv)?;
    let mut mismatches = Vec::new();
    let compare = |a: &[FileDigest], b: &[FileDigest], mismatches: &mut Vec<String>| {
        for d in a {
            match b.iter().find(|x| x.file == d.file) {
                Some(x) if x.sha256 == d.sha256 => {}
                Some(_) => mismatches.push(format!("{} differs", d.file)),
                None => mismatches.push(format!("{} missing from replay", d.file)),
            }
        }
        for x in b {
            if !a.iter().any(|d| d.file == x.file) {
                mismatches.push(format!("{} only in replay", x.file));
            }
        }
    };
    compare(&manifest.outputs, &fresh.manifest.outputs, &mut mismatches);
    for (a, b) in manifest.snapshots.iter().zip(&fresh.manifest.snapshots) {
        if a != b {
            mismatches.push(format!("snapshot {} at t = {} differs", a.label, a.time));
        }
    }
    if manifest.snapshots.len() != fresh.manifest.snapshots.len() {
        mismatches.push("snapshot count differs".into());
    }
    Ok(ReplayReport {
        compared: manifest.outputs.len() + manifest.snapshots.len(),
        mismatches,
        replay_dir,
    })
}
