//! CSV writers. Floats use Rust's shortest round-trip formatting.

use std::fs;
use std::path::Path;

use aodlab_core::neural::EpochStats;

use crate::experiments::SweepRow;
use crate::BenchError;

pub const SWEEP_HEADER: [&str; 8] =
    ["method", "sweep_param", "sweep_value", "trials", "mae_deg", "rmse_deg", "mean_runtime_s", "seed"];

pub const TRAIN_HEADER: [&str; 4] = ["epoch", "mean_loss", "mean_grad_norm", "test_mae_deg"];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Sweep rows as CSV text. With `timing` off the runtime column is left
/// empty so reruns compare byte for byte.
pub fn sweep_csv(rows: &[SweepRow], timing: bool) -> Result<String, BenchError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.sweep_param.name().to_string(),
            r.sweep_value.to_string(),
            r.trials.to_string(),
            cell(r.mae_deg),
            cell(r.rmse_deg),
            cell(if timing { r.mean_runtime_s } else { None }),
            r.seed.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| BenchError::Runtime(e.to_string()))
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow], timing: bool) -> Result<(), BenchError> {
    fs::write(path, sweep_csv(rows, timing)?)?;
    Ok(())
}

pub fn write_train_curve(path: &Path, history: &[EpochStats], test_mae: &[f64]) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(TRAIN_HEADER)?;
    for (e, mae) in history.iter().zip(test_mae) {
        w.write_record([e.epoch.to_string(), e.mean_loss.to_string(), e.mean_grad_norm.to_string(), mae.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `(method, x, y)` triples from a sweep CSV, skipping empty cells of column
/// `y_column`.
pub fn read_series(text: &str, y_column: &str) -> Result<Vec<(String, f64, f64)>, BenchError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| BenchError::Runtime(format!("CSV has no column '{name}'")))
    };
    let (m, x, y) = (col("method")?, col("sweep_value")?, col(y_column)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec[y].is_empty() {
            continue;
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| BenchError::Runtime(format!("bad number '{s}': {e}")));
        out.push((rec[m].to_string(), parse(&rec[x])?, parse(&rec[y])?));
    }
    Ok(out)
}
