use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use kac_core::harness::config::LoadedConfig;
use kac_core::harness::experiments::{execute, replay, Command, Invocation};
use kac_core::{Error, Result};

/// Stochastic simulation of Kac's master equation with chaoticity and relaxation metrics.
#[derive(Debug, Parser)]
#[command(name = "kac", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// Experiment configuration (TOML).
    #[arg(long, global = true, env = "KAC_CONFIG")]
    config: Option<PathBuf>,

    /// Master seed; overrides `[run] seed`.
    #[arg(long, global = true, env = "KAC_SEED")]
    seed: Option<u64>,

    /// Worker threads; overrides `[run] workers`. Results do not depend on it.
    #[arg(long, global = true, env = "KAC_WORKERS")]
    workers: Option<usize>,

    /// Output directory; overrides `[run] output`.
    #[arg(long, global = true, env = "KAC_OUT")]
    out: Option<PathBuf>,

    /// Also write every snapshot's velocities as CSV.
    #[arg(long, global = true, env = "KAC_DUMP_VELOCITIES", action = ArgAction::SetTrue)]
    dump_velocities: bool,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Simulate one ensemble and write moments, entropies and distances.
    Run,
    /// Chaoticity alpha(N) over the `[sweep] particles` list.
    SweepN,
    /// Relaxation beta(t) and per-particle entropy on the sphere.
    Relaxation,
    /// Observables of the true Maxwell kernel across `[cutoff] epsilons`.
    CutoffStudy,
    /// Re-run the command recorded in `--out` and check every output is identical.
    Replay,
    /// Parse and validate `--config` without running anything.
    Validate,
}

fn load(cli: &Cli) -> Result<LoadedConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH (or KAC_CONFIG) is required".into()))?;
    LoadedConfig::load(path)
}

fn invocation(cli: &Cli, command: Command) -> Result<Invocation> {
    let mut inv = Invocation::from_config(command, load(cli)?);
    if let Some(seed) = cli.seed {
        inv.seed = seed;
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be positive".into()));
        }
        inv.workers = w;
    }
    if let Some(out) = &cli.out {
        inv.out = out.clone();
    }
    inv.dump_velocities = cli.dump_velocities;
    Ok(inv)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let command = match cli.command {
        Sub::Run => Command::Run,
        Sub::SweepN => Command::SweepN,
        Sub::Relaxation => Command::Relaxation,
        Sub::CutoffStudy => Command::CutoffStudy,
        Sub::Validate => {
            let cfg = load(cli)?;
            let c = &cfg.config;
            println!(
                "config ok: hash {}, kernel {:?}, d = {}, N = {}, R = {}",
                cfg.hash(),
                c.model.kernel,
                c.model.dim,
                c.ensemble.particles,
                c.ensemble.runs
            );
            return Ok(ExitCode::SUCCESS);
        }
        Sub::Replay => {
            let out = match (&cli.out, &cli.config) {
                (Some(o), _) => o.clone(),
                (None, Some(_)) => PathBuf::from(&load(cli)?.config.run.output),
                (None, None) => return Err(Error::Config("replay needs --out DIR".into())),
            };
            let report = replay(&out, cli.workers)?;
            if report.identical() {
                println!("replay identical: {} digests match ({})", report.compared, report.replay_dir.display());
                return Ok(ExitCode::SUCCESS);
            }
            for m in &report.mismatches {
                eprintln!("mismatch: {m}");
            }
            eprintln!("replay differs in {} of {} digests", report.mismatches.len(), report.compared);
            return Ok(ExitCode::from(3));
        }
    };
    let inv = invocation(cli, command)?;
    let outcome = execute(&inv)?;
    print!("{}", outcome.summary);
    for note in &outcome.manifest.notes {
        println!("note: {note}");
    }
    println!("outputs written to {}", inv.out.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("kac: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
