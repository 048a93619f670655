mod config;
mod experiments;
mod output;
mod plan;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use villain_core::observables::Verdict;

use config::{Experiment, RunConfig};
use experiments::{Interrupted, RunContext};

#[derive(Parser)]
#[command(name = "villain", version, about = "Villain U(1) lattice gauge experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Default)]
struct Overrides {
    /// Seed; overrides the config and VILLAIN_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides the config and VILLAIN_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Stop each chain after this many samples, leaving a checkpoint.
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Print what an experiment measures and how long it should take.
    Describe {
        experiment: Experiment,
        /// Use this config instead of the built-in example for the estimates.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Continue an interrupted run from the checkpoints in its output directory.
    Resume {
        dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn env_u64(name: &str) -> Result<Option<u64>> {
    match std::env::var(name) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("environment variable {name} is not an integer: {v:?}"))?)),
        Err(_) => Ok(None),
    }
}

/// Flags win over the environment, which wins over the file.
fn apply_overrides(cfg: &mut RunConfig, o: &Overrides, config_path: &Path) -> Result<PathBuf> {
    if let Some(s) = o.seed.or(env_u64("VILLAIN_SEED")?) {
        cfg.seed = s;
    }
    if let Some(t) = o.threads.or(env_u64("VILLAIN_THREADS")?.map(|t| t as usize)) {
        cfg.threads = Some(t);
    }
    let out = match (&o.out, &cfg.output.dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) if d.is_relative() => config_path.parent().unwrap_or(Path::new(".")).join(d),
        (None, Some(d)) => d.clone(),
        (None, None) => PathBuf::from("villain-out").join(cfg.experiment.name()),
    };
    cfg.output.dir = Some(out.clone());
    Ok(out)
}

fn execute(cfg: &RunConfig, out: &Path, resume: bool, stop_after: Option<usize>) -> Result<Verdict> {
    cfg.preflight()?;
    output::write_resolved_config(cfg, out)?;
    let threads = cfg.threads.unwrap_or(1).max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let ctx = RunContext { config: cfg, out, resume, stop_after };
    let outcome = pool.install(|| experiments::run(&ctx))?;
    let verdict = output::write_outcome(cfg, out, &outcome)?;
    print!("{}", output::summary(&outcome));
    println!("{}: {} (outputs in {})", cfg.experiment, verdict.as_str(), out.display());
    Ok(verdict)
}

fn run(cli: Cli) -> Result<Verdict> {
    match cli.command {
        Command::Run { config, overrides, stop_after } => {
            let mut cfg = RunConfig::load(&config)?;
            let out = apply_overrides(&mut cfg, &overrides, &config)?;
            execute(&cfg, &out, false, stop_after)
        }
        Command::Describe { experiment, config } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::parse(experiment.example())?,
            };
            if cfg.experiment != experiment {
                bail!("config describes `{}`, not `{experiment}`", cfg.experiment);
            }
            print!("{}", plan::describe(&cfg));
            Ok(Verdict::Pass)
        }
        Command::Resume { dir, threads } => {
            let mut cfg = RunConfig::load(&dir.join(output::RESOLVED_CONFIG))?;
            if cfg.experiment != Experiment::Villain {
                bail!("experiment `{}` keeps no checkpoints; only `villain` runs can be resumed", cfg.experiment);
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            cfg.output.dir = Some(dir.clone());
            execute(&cfg, &dir, true, None)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => ExitCode::from(1),
        Ok(Verdict::Inconclusive) => ExitCode::from(2),
        Err(e) => {
            if let Some(i) = e.downcast_ref::<Interrupted>() {
                eprintln!("villain: {i}");
            } else {
                eprintln!("villain: {e:#}");
            }
            ExitCode::from(1)
        }
    }
}
