//! Metrics CSV: one row per frame.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::sim::FrameRecord;

pub const CSV_HEADER: &str = "frame,grad_norm_sq,running_avg_grad_norm_sq,loss,test_accuracy,channel_usages,empirical_G";

/// Shortest representation that parses back to the same `f64`.
fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn metrics_csv_string(records: &[FrameRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let acc = r.test_accuracy.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.frame,
            fmt_f64(r.grad_norm_sq),
            fmt_f64(r.running_avg_grad_norm_sq),
            fmt_f64(r.loss),
            acc,
            r.channel_usages,
            fmt_f64(r.empirical_g)
        );
    }
    out
}

pub fn write_metrics_csv(records: &[FrameRecord], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, metrics_csv_string(records))?;
    Ok(())
}

/// Parses a file produced by [`write_metrics_csv`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<FrameRecord>> {
    let bad = |line: usize, msg: &str| Error::Numerical(format!("metrics line {line}: {msg}"));
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let lineno = i + 2;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 7 {
                return Err(bad(lineno, "expected 7 columns"));
            }
            let f = |s: &str| s.parse::<f64>().map_err(|_| bad(lineno, "bad number"));
            Ok(FrameRecord {
                frame: cells[0].parse().map_err(|_| bad(lineno, "bad frame"))?,
                grad_norm_sq: f(cells[1])?,
                running_avg_grad_norm_sq: f(cells[2])?,
                loss: f(cells[3])?,
                test_accuracy: if cells[4].is_empty() { None } else { Some(f(cells[4])?) },
                channel_usages: cells[5].parse().map_err(|_| bad(lineno, "bad usage count"))?,
                empirical_g: f(cells[6])?,
            })
        })
        .collect()
}
