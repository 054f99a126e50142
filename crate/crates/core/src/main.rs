use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use plasticity_lab::runner::{
    list_methods_json, list_methods_text, load_config, parse_seed_range, replay_metrics, run_experiment, sweep,
};
use plasticity_lab::Error;

#[derive(Parser)]
#[command(name = "plasticity-lab", version, about = "Plasticity-loss experiments for deep RL")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one configuration.
    Run {
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's logging directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one configuration over a seed range, one process per seed.
    Sweep {
        config: PathBuf,
        /// `a..b` (exclusive) or `a..=b`.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent processes.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print the mitigation registry.
    ListMethods {
        #[arg(long)]
        json: bool,
    },
    /// Recompute the metric suite from a checkpoint manifest.
    ReplayMetrics {
        checkpoint: PathBuf,
        /// Rebuild the probe batch under another seed.
        #[arg(long)]
        probe_seed: Option<u64>,
    },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Divergence { .. } => ExitCode::from(EXIT_DIVERGENCE),
        Error::Config(_) | Error::Spec(_) | Error::InvalidInput(_) => ExitCode::from(EXIT_VALIDATION),
        _ => ExitCode::FAILURE,
    }
}

/// A config that cannot be read is a validation failure too.
fn load(path: &std::path::Path) -> Result<plasticity_lab::runner::ExperimentConfig, Error> {
    load_config(path).map_err(|e| match e {
        Error::Io { .. } => Error::Config(e.to_string()),
        other => other,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run { config, seed, out } => load(&config).and_then(|mut cfg| {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(dir) = out {
                cfg.logging.dir = dir;
            }
            let art = run_experiment(&cfg)?;
            println!("{}", art.dir.display());
            if let Some(r) = art.summary.final_mean_return {
                println!("final mean return {r:.4} over the last episodes");
            }
            Ok(0)
        }),
        Cmd::Sweep { config, seeds, out, jobs } => parse_seed_range(&seeds).and_then(|seeds| {
            // validate once up front instead of failing in every child
            load(&config)?;
            let exe = std::env::current_exe().map_err(|e| Error::io("current executable", e))?;
            let results = sweep(&exe, &config, &seeds, out.as_deref(), jobs)?;
            let mut worst = 0;
            for (seed, code) in results {
                println!("seed {seed}: exit {code}");
                // a child killed by a signal reports no code
                worst = worst.max(if code < 0 { 1 } else { code });
            }
            Ok(worst)
        }),
        Cmd::ListMethods { json } => {
            if json {
                println!("{}", serde_json::to_string_pretty(&list_methods_json()).expect("registry encodes"));
            } else {
                print!("{}", list_methods_text());
            }
            Ok(0)
        }
        Cmd::ReplayMetrics { checkpoint, probe_seed } => replay_metrics(&checkpoint, probe_seed).map(|replay| {
            for line in replay.lines() {
                println!("{}", serde_json::to_string(&line).expect("metric encodes"));
            }
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code.clamp(0, 255) as u8),
        Err(e) => exit_for(&e),
    }
}
