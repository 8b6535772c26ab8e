//! Argument grammar and command dispatch.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::FileConfig;
use crate::sweep::{aggregate_dir, evaluate_checkpoint, run_sweep, worker_count, RUNS_FILE};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "aacher",
    version,
    about = "Averaged actor-critic ensembles with hindsight replay"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a sweep of seeds and write per-run and aggregate metrics.
    Train(TrainArgs),
    /// Evaluate a saved policy without exploration noise.
    Eval(EvalArgs),
    /// Aggregate the completed runs under a directory.
    Aggregate(AggregateArgs),
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// aubo_reach, point_reach, point_push or point_slide.
    #[arg(long)]
    pub env: Option<String>,
    /// Ensemble size as A<actors>C<critics>, e.g. A10C10.
    #[arg(long)]
    pub adcp: Option<String>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat TOML file with TrainConfig keys; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Subdirectory of --out for this sweep (default <env>_<adcp>).
    #[arg(long)]
    pub run_name: Option<String>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Parallel runs at most; AACHER_THREADS also caps this.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Seed of the evaluation episodes.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, clap::Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub dir: PathBuf,
}

impl TrainArgs {
    fn as_file_config(&self) -> FileConfig {
        FileConfig {
            env: self.env.clone(),
            adcp: self.adcp.clone(),
            seed: self.seed,
            n_runs: self.runs,
            epochs: self.epochs,
            out_dir: self.out.clone(),
            run_name: self.run_name.clone(),
            hidden: self.hidden.clone(),
            ..FileConfig::default()
        }
    }
}

/// Execute a parsed command, writing progress and results to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("stdout: {e}"));
    match cli.command {
        Command::Train(args) => {
            let file = match &args.config {
                Some(p) => FileConfig::load(p)?,
                None => FileConfig::default(),
            };
            let cfg = file.overlay(args.as_file_config()).resolve()?;
            let workers = worker_count(args.jobs, cfg.n_runs)?;
            let report = run_sweep(&cfg, workers)?;
            for r in &report.runs {
                match &r.result {
                    Ok(m) => {
                        let last = m.last().map_or(0.0, |m| m.success_rate);
                        writeln!(
                            out,
                            "run {} seed {}: ok, final success {last}",
                            r.index, r.seed
                        )
                    }
                    Err(e) => writeln!(out, "run {} seed {}: failed: {e}", r.index, r.seed),
                }
                .map_err(io)?;
            }
            writeln!(out, "results in {}", report.dir.display()).map_err(io)?;
            match report.failures() {
                0 => Ok(()),
                failed => Err(CliError::RunsFailed {
                    failed,
                    total: report.runs.len(),
                    summary: report.dir.join(RUNS_FILE).display().to_string(),
                }),
            }
        }
        Command::Eval(args) => {
            let m = evaluate_checkpoint(&args.checkpoint, args.episodes, args.seed)?;
            writeln!(out, "episodes,success_rate,mean_reward,mean_q").map_err(io)?;
            writeln!(
                out,
                "{},{},{},{}",
                args.episodes, m.success_rate, m.mean_reward, m.mean_q
            )
            .map_err(io)
        }
        Command::Aggregate(args) => {
            for path in aggregate_dir(&args.dir)? {
                writeln!(out, "wrote {}", path.display()).map_err(io)?;
            }
            Ok(())
        }
    }
}
