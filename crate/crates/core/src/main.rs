use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use inertia_core::config::{run, ExperimentConfig, ExperimentKind};
use inertia_core::InertiaError;

/// Run the inertia experiments.
#[derive(Parser, Debug)]
#[command(name = "inertia", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config file. Flags given on the command line override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed added to every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Collision micro-simulation sweep over rule density.
    Microsim {
        #[arg(long, value_delimiter = ',')]
        rho: Option<Vec<f64>>,
        #[arg(long)]
        jitter: Option<f64>,
        #[arg(long)]
        events: Option<u64>,
    },
    /// Label-noise sweep and cost-model adjudication.
    Jcurve {
        #[arg(long, value_delimiter = ',')]
        noise_levels: Option<Vec<f64>>,
        /// Number of seeds, 0..N.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        epoch_cap: Option<u64>,
    },
    /// Schedule comparison with and without the regulator.
    Bench {
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        epochs: Option<u64>,
    },
    /// Alternating clean and noisy epochs.
    Shock {
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        epochs: Option<u64>,
    },
    /// Two-task continual learning with a hard switch.
    Continual {
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        epochs: Option<u64>,
        #[arg(long)]
        switch_epoch: Option<u64>,
    },
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Microsim { .. } => ExperimentKind::Microsim,
            Command::Jcurve { .. } => ExperimentKind::Jcurve,
            Command::Bench { .. } => ExperimentKind::Bench,
            Command::Shock { .. } => ExperimentKind::Shock,
            Command::Continual { .. } => ExperimentKind::Continual,
        }
    }
}

fn seed_list(n: u64) -> Vec<u64> {
    (0..n).collect()
}

fn build_config(cli: &Cli) -> inertia_core::Result<ExperimentConfig> {
    let kind = cli.command.kind();
    let mut cfg = match &cli.common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::new(kind),
    };
    if cfg.experiment != kind {
        return Err(InertiaError::Config(format!(
            "config is for `{}` but the subcommand is `{}`",
            cfg.experiment.as_str(),
            kind.as_str()
        )));
    }
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.common.out {
        cfg.output_dir = out.clone();
    }
    match &cli.command {
        Command::Microsim { rho, jitter, events } => {
            let c = cfg.microsim.get_or_insert_with(Default::default);
            if let Some(r) = rho {
                c.rhos = r.clone();
            }
            if let Some(j) = jitter {
                c.jitter = *j;
            }
            if let Some(n) = events {
                c.n_events = *n;
            }
        }
        Command::Jcurve { noise_levels, seeds, epoch_cap } => {
            let c = &mut cfg.jcurve.get_or_insert_with(Default::default).sweep;
            if let Some(l) = noise_levels {
                c.noise_levels = l.clone();
            }
            if let Some(n) = seeds {
                c.seeds = seed_list(*n);
            }
            if let Some(e) = epoch_cap {
                c.epoch_cap = *e;
            }
        }
        Command::Bench { seeds, epochs } => {
            let c = cfg.bench.get_or_insert_with(Default::default);
            if let Some(n) = seeds {
                c.seeds = seed_list(*n);
            }
            if let Some(e) = epochs {
                c.epochs = *e;
            }
        }
        Command::Shock { seeds, epochs } => {
            let c = cfg.shock.get_or_insert_with(Default::default);
            if let Some(n) = seeds {
                c.seeds = seed_list(*n);
            }
            if let Some(e) = epochs {
                c.epochs = *e;
            }
        }
        Command::Continual { seeds, epochs, switch_epoch } => {
            let c = cfg.continual.get_or_insert_with(Default::default);
            if let Some(n) = seeds {
                c.seeds = seed_list(*n);
            }
            if let Some(e) = epochs {
                c.epochs = *e;
            }
            if let Some(s) = switch_epoch {
                c.switch_epoch = *s;
            }
        }
    }
    cfg.resolve()
}

fn execute(cfg: &ExperimentConfig, threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("thread pool")?;
    }
    let manifest = run(cfg).with_context(|| format!("{} run failed", cfg.experiment.as_str()))?;
    println!("wrote {} files to {}", manifest.files.len(), cfg.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if cli.common.threads == Some(0) {
        eprintln!("error: invalid configuration: --threads must be at least 1");
        return ExitCode::from(1);
    }
    match execute(&cfg, cli.common.threads) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
