//! CSV and JSON emitters.
//!
//! CSV: comma separated, header row, `.` decimal point, shortest round-trip
//! numbers (exponent form outside `[1e-4, 1e15)`). JSON: pretty printed, keys
//! in declaration order, non-finite numbers as `null`.

use anyhow::Result;
use serde::Serialize;

/// A named output file held in memory until written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

pub fn number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn csv<S: AsRef<str>>(name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> Result<Artifact> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|s| s.as_ref()))?;
    }
    let contents = String::from_utf8(w.into_inner()?)?;
    Ok(Artifact { name: name.to_string(), contents })
}

pub fn json<T: Serialize>(name: &str, value: &T) -> Result<Artifact> {
    let mut contents = serde_json::to_string_pretty(value)?;
    contents.push('\n');
    Ok(Artifact { name: name.to_string(), contents })
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
