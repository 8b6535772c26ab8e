//! Per-run and aggregate CSV files.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back yields the exact values that were written.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use aacher_core::trainer::EpochMetrics;

use crate::CliError;

pub const RUN_HEADER: [&str; 4] = ["epoch", "success_rate", "mean_reward", "mean_q"];
pub const AGGREGATE_HEADER: [&str; 10] = [
    "epoch", "sr_mean", "sr_min", "sr_max", "rw_mean", "rw_min", "rw_max", "q_mean", "q_min",
    "q_max",
];

/// Mean, min and max of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut sum, mut min, mut max) = (0usize, 0.0, f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        // Rounding can push the mean a hair outside [min, max] when all
        // values are equal.
        let mean = (sum / n as f64).clamp(min, max);
        Summary { mean, min, max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub epoch: usize,
    pub success_rate: Summary,
    pub reward: Summary,
    pub q: Summary,
}

/// Per-epoch summaries across runs. Every run must cover the same epochs.
pub fn aggregate(runs: &[Vec<EpochMetrics>]) -> Result<Vec<AggregateRow>, CliError> {
    let first = runs
        .first()
        .ok_or_else(|| CliError::Data("no runs to aggregate".into()))?;
    for (i, r) in runs.iter().enumerate() {
        let same = r.len() == first.len() && r.iter().zip(first).all(|(a, b)| a.epoch == b.epoch);
        if !same {
            return Err(CliError::Data(format!(
                "run {i} covers different epochs than run 0"
            )));
        }
    }
    Ok((0..first.len())
        .map(|e| AggregateRow {
            epoch: first[e].epoch,
            success_rate: Summary::of(runs.iter().map(|r| r[e].success_rate)),
            reward: Summary::of(runs.iter().map(|r| r[e].mean_reward)),
            q: Summary::of(runs.iter().map(|r| r[e].mean_q)),
        })
        .collect())
}

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn run_row(m: &EpochMetrics) -> [String; 4] {
    [
        m.epoch.to_string(),
        m.success_rate.to_string(),
        m.mean_reward.to_string(),
        m.mean_q.to_string(),
    ]
}

pub fn write_run_csv(path: &Path, metrics: &[EpochMetrics]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(RUN_HEADER).map_err(|e| csv_err(path, e))?;
    for m in metrics {
        w.write_record(run_row(m)).map_err(|e| csv_err(path, e))?;
    }
    finish(w, path)
}

/// Appends rows to a per-run file as epochs finish.
pub struct RunCsv {
    file: File,
}

impl RunCsv {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let mut file = File::create(path).map_err(|e| CliError::io(path, e))?;
        writeln!(file, "{}", RUN_HEADER.join(",")).map_err(|e| CliError::io(path, e))?;
        Ok(Self { file })
    }

    pub fn append(&mut self, m: &EpochMetrics) -> std::io::Result<()> {
        writeln!(self.file, "{}", run_row(m).join(","))
    }
}

fn records(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let got = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(CliError::Data(format!(
            "{}: unexpected header {:?}",
            path.display(),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| CliError::Data(format!("{}: bad number {f:?}", path.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn epoch_of(path: &Path, v: f64) -> Result<usize, CliError> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(CliError::Data(format!("{}: bad epoch {v}", path.display())))
    }
}

pub fn read_run_csv(path: &Path) -> Result<Vec<EpochMetrics>, CliError> {
    records(path, &RUN_HEADER)?
        .into_iter()
        .map(|r| {
            Ok(EpochMetrics {
                epoch: epoch_of(path, r[0])?,
                success_rate: r[1],
                mean_reward: r[2],
                mean_q: r[3],
            })
        })
        .collect()
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(AGGREGATE_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for row in rows {
        let mut rec = vec![row.epoch.to_string()];
        for s in [row.success_rate, row.reward, row.q] {
            rec.extend([s.mean.to_string(), s.min.to_string(), s.max.to_string()]);
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    finish(w, path)
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>, CliError> {
    records(path, &AGGREGATE_HEADER)?
        .into_iter()
        .map(|r| {
            let s = |i: usize| Summary {
                mean: r[i],
                min: r[i + 1],
                max: r[i + 2],
            };
            Ok(AggregateRow {
                epoch: epoch_of(path, r[0])?,
                success_rate: s(1),
                reward: s(4),
                q: s(7),
            })
        })
        .collect()
}
