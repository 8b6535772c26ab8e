//! Multi-seed sweeps, evaluation of saved policies and directory aggregation.
//!
//! Layout of a sweep under `out_dir/run_name/`:
//!
//! ```text
//! run_000/metrics.csv      one row per finished epoch
//! run_000/checkpoint.bin   policy after the last finished epoch
//! run_000/FAILED           present only if the run failed; holds the reason
//! runs.csv                 index,seed,status,message
//! aggregate.csv            mean/min/max over the successful runs
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use aacher_core::checkpoint::Checkpoint;
use aacher_core::par;
use aacher_core::rng::Rng;
use aacher_core::trainer::{evaluate, train_with, EpochMetrics};

use crate::config::RunConfig;
use crate::metrics::{aggregate, read_run_csv, write_aggregate_csv, AggregateRow, RunCsv};
use crate::CliError;

pub const THREADS_ENV: &str = "AACHER_THREADS";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const FAILED_FILE: &str = "FAILED";
pub const RUNS_FILE: &str = "runs.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub index: usize,
    pub seed: u64,
    pub dir: PathBuf,
    /// Metrics of the finished run, or the reason it failed.
    pub result: Result<Vec<EpochMetrics>, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub dir: PathBuf,
    pub runs: Vec<RunOutcome>,
    /// `None` when every run failed.
    pub aggregate: Option<Vec<AggregateRow>>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.result.is_err()).count()
    }
}

/// Worker count: the smallest of `jobs`, `AACHER_THREADS` and the number of
/// runs; unset limits fall back to the available parallelism.
pub fn worker_count(jobs: Option<usize>, n_runs: usize) -> Result<usize, CliError> {
    let from_env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| {
                    CliError::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))
                })?,
        ),
        Err(_) => None,
    };
    if jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let default = std::thread::available_parallelism().map_or(1, |n| n.get());
    let limit = match (jobs, from_env) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => default,
    };
    Ok(limit.min(n_runs).max(1))
}

pub fn run_dir(sweep_dir: &Path, index: usize) -> PathBuf {
    sweep_dir.join(format!("run_{index:03}"))
}

fn run_one(cfg: &RunConfig, index: usize) -> RunOutcome {
    let seed = cfg.seed_for(index);
    let dir = run_dir(&cfg.sweep_dir(), index);
    let result = train_run(cfg, index, &dir);
    if let Err(reason) = &result {
        // Best effort: the sweep report carries the reason either way.
        let _ = fs::write(dir.join(FAILED_FILE), format!("{reason}\n"));
    }
    RunOutcome {
        index,
        seed,
        dir,
        result,
    }
}

fn train_run(cfg: &RunConfig, index: usize, dir: &Path) -> Result<Vec<EpochMetrics>, String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let _ = fs::remove_file(dir.join(FAILED_FILE));
    let mut csv = RunCsv::create(&dir.join(METRICS_FILE)).map_err(|e| e.to_string())?;
    let ck_path = dir.join(CHECKPOINT_FILE);
    let mut io_error = None;
    let outcome = train_with(cfg.run_config(index), |m, trainer| {
        if io_error.is_some() {
            return;
        }
        if let Err(e) = csv.append(m) {
            io_error = Some(format!("writing metrics: {e}"));
        } else if let Err(e) = trainer.checkpoint().save(&ck_path) {
            io_error = Some(format!("writing checkpoint: {e}"));
        }
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    outcome.map(|o| o.metrics).map_err(|e| e.to_string())
}

/// Train every run of the sweep, in parallel up to `workers`, then write the
/// run summary and the aggregate over successful runs.
pub fn run_sweep(cfg: &RunConfig, workers: usize) -> Result<SweepReport, CliError> {
    cfg.validate()?;
    let dir = cfg.sweep_dir();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let runs = par::with_threads(workers, || par::map_range(cfg.n_runs, |i| run_one(cfg, i)));

    let mut summary = String::from("index,seed,status,message\n");
    for r in &runs {
        let (status, msg) = match &r.result {
            Ok(_) => ("ok", String::new()),
            Err(e) => ("failed", e.replace([',', '\n'], " ")),
        };
        summary.push_str(&format!("{},{},{status},{msg}\n", r.index, r.seed));
    }
    let runs_path = dir.join(RUNS_FILE);
    fs::write(&runs_path, summary).map_err(|e| CliError::io(&runs_path, e))?;

    let ok: Vec<Vec<EpochMetrics>> = runs
        .iter()
        .filter_map(|r| r.result.as_ref().ok().cloned())
        .collect();
    let aggregate = if ok.is_empty() {
        None
    } else {
        let rows = aggregate(&ok)?;
        write_aggregate_csv(&dir.join(AGGREGATE_FILE), &rows)?;
        Some(rows)
    };
    Ok(SweepReport {
        dir,
        runs,
        aggregate,
    })
}

/// Metrics of every successful run directly under `dir`, in name order.
pub fn collect_runs(dir: &Path) -> Result<Vec<(PathBuf, Vec<EpochMetrics>)>, CliError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let metrics = path.join(METRICS_FILE);
        if path.is_dir() && metrics.is_file() && !path.join(FAILED_FILE).exists() {
            found.push(path);
        }
    }
    found.sort();
    found
        .into_iter()
        .map(|p| {
            let m = read_run_csv(&p.join(METRICS_FILE))?;
            Ok((p, m))
        })
        .collect()
}

/// Aggregate the runs under `dir` into `dir/aggregate.csv`. If `dir` holds
/// no runs itself, each subdirectory that does is aggregated separately.
/// Returns the files written.
pub fn aggregate_dir(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let runs = collect_runs(dir)?;
    if !runs.is_empty() {
        let metrics: Vec<_> = runs.into_iter().map(|(_, m)| m).collect();
        let rows = aggregate(&metrics)?;
        let out = dir.join(AGGREGATE_FILE);
        write_aggregate_csv(&out, &rows)?;
        return Ok(vec![out]);
    }
    let mut written = Vec::new();
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        if !collect_runs(&sub)?.is_empty() {
            written.extend(aggregate_dir(&sub)?);
        }
    }
    if written.is_empty() {
        return Err(CliError::Data(format!(
            "no completed runs found under {}",
            dir.display()
        )));
    }
    Ok(written)
}

/// Noise-free evaluation of a saved policy on the environment it was trained on.
pub fn evaluate_checkpoint(
    path: &Path,
    episodes: usize,
    seed: u64,
) -> Result<EpochMetrics, CliError> {
    if episodes == 0 {
        return Err(CliError::Config("--episodes must be at least 1".into()));
    }
    let ck =
        Checkpoint::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    evaluate(
        &ck.ensemble,
        &ck.normalizer,
        &ck.env,
        episodes,
        &mut Rng::new(seed),
    )
    .map_err(|e| CliError::Data(e.to_string()))
}
