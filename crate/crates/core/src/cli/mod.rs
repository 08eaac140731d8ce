//! Command-line front end: `train`, `pretrain`, `eval`, `rtg-sweep`,
//! `export`, `worker` and `config`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 transport or decode
//! error, 4 worker failure, 1 anything else.

pub mod checkpoint;
pub mod config;
pub mod log;
pub mod run;

use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

pub use checkpoint::Checkpoint;
pub use config::{parse_overrides, FitnessKind, PolicyKind, RunConfig, TransportKind};
pub use log::{export_csv, read_log, IterationRecord, LogWriter};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "esdt",
    version,
    about = "Evolution strategies for feedforward and decision-transformer policies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration. Defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Multiply the population size by this factor.
    #[arg(long)]
    pub population_scale: Option<f64>,
    /// Freeze observation normalization statistics.
    #[arg(long)]
    pub no_vbn: bool,
    /// Per-key overrides, `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a policy on episodic return.
    Train(RunArgs),
    /// Imitate the scripted teacher, then write the follow-up RL config.
    Pretrain(RunArgs),
    /// Print the fully resolved configuration.
    Config(RunArgs),
    /// Evaluate a checkpoint on the held-out seeds.
    Eval {
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Return quartiles of a decision transformer across conditioning values.
    RtgSweep {
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Convert a training log to CSV.
    Export {
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a master over TCP.
    Worker {
        /// Master address, `host:port`.
        #[arg(long)]
        connect: String,
        /// Seconds to keep retrying the connection.
        #[arg(long, default_value_t = 30.0)]
        patience_s: f64,
    },
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let text = match &self.config {
            Some(p) => fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut cfg = RunConfig::from_overrides(&text, &parse_overrides(&self.overrides)?)?;
        if let Some(f) = self.population_scale {
            cfg.scale_population(f)?;
        }
        if self.no_vbn {
            cfg.update_vbn_stats_probability = 0.0;
        }
        Ok(cfg)
    }
}

fn report(outcome: &run::TrainOutcome) {
    if let Some(last) = outcome.records.last() {
        println!(
            "iterations {} best {:.4} last {:.4} bytes {}",
            last.iteration, last.best_so_far, last.eval_return, last.bytes_sent
        );
    } else {
        println!("no iterations run");
    }
    if let Some(dir) = &outcome.out_dir {
        println!("outputs in {}", dir.display());
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => report(&run::train(&a.resolve()?, true)?),
        Command::Pretrain(a) => {
            let (outcome, followup) = run::pretrain(&a.resolve()?, true)?;
            report(&outcome);
            println!(
                "follow-up config: {}",
                followup
                    .checkpoint_dir
                    .parent()
                    .unwrap_or(&followup.checkpoint_dir)
                    .join(run::FOLLOWUP_CONFIG)
                    .display()
            );
        }
        Command::Config(a) => print!("{}", a.resolve()?.to_toml()),
        Command::Eval {
            checkpoint,
            episodes,
        } => {
            let e = run::eval_checkpoint(&Checkpoint::load(&checkpoint)?, episodes)?;
            println!(
                "episodes {} mean {:.4} median {:.4}",
                e.returns.len(),
                e.mean,
                e.median
            );
        }
        Command::RtgSweep {
            checkpoint,
            values,
            episodes,
        } => {
            let values = values.unwrap_or_else(|| run::DEFAULT_SWEEP.to_vec());
            println!("rtg,q1,median,q3");
            for r in run::rtg_sweep(&Checkpoint::load(&checkpoint)?, &values, episodes)? {
                println!("{},{},{},{}", r.rtg, r.q1, r.median, r.q3);
            }
        }
        Command::Export { log, out } => {
            let (_, records) = read_log(&log)?;
            let csv = export_csv(&records);
            match out {
                Some(p) => fs::write(p, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Worker {
            connect,
            patience_s,
        } => run::run_worker(&connect, Duration::from_secs_f64(patience_s.max(0.0)))?,
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
