//! Evaluation metrics shared by the consolidated and multi-task pipelines.
//!
//! Regression metrics are always computed in original label units, never in
//! hybrid-label space.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Evaluation summary for one trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy_pct: f64,
    pub mse: f64,
    pub mae: f64,
    pub mape_pct: f64,
    pub within_8pct_fraction: f64,
    pub wall_clock_seconds: f64,
    /// True when the regression predictions span less than 5% of the label range.
    pub range_collapse: bool,
}

/// Percent of matching class predictions.
pub fn accuracy(preds: &[usize], truth: &[usize]) -> Result<f64> {
    if preds.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: truth.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::NoSamples);
    }
    let correct = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * correct as f64 / preds.len() as f64)
}

fn check_pairs(preds: &[f64], truth: &[f64]) -> Result<()> {
    if preds.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: truth.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::NoSamples);
    }
    Ok(())
}

pub fn mse(preds: &[f64], truth: &[f64]) -> Result<f64> {
    check_pairs(preds, truth)?;
    Ok(preds
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / preds.len() as f64)
}

pub fn mae(preds: &[f64], truth: &[f64]) -> Result<f64> {
    check_pairs(preds, truth)?;
    Ok(preds.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / preds.len() as f64)
}

/// Mean absolute percentage error: `mean(100 * |t - p| / |t|)`.
pub fn mape(preds: &[f64], truth: &[f64]) -> Result<f64> {
    check_pairs(preds, truth)?;
    let mut sum = 0.0;
    for (i, (p, t)) in preds.iter().zip(truth).enumerate() {
        if *t == 0.0 {
            return Err(Error::ZeroTruth(i));
        }
        sum += 100.0 * (t - p).abs() / t.abs();
    }
    Ok(sum / preds.len() as f64)
}

/// Fraction of samples whose absolute percentage error is at most `pct`.
pub fn within_fraction(preds: &[f64], truth: &[f64], pct: f64) -> Result<f64> {
    check_pairs(preds, truth)?;
    let mut within = 0usize;
    for (i, (p, t)) in preds.iter().zip(truth).enumerate() {
        if *t == 0.0 {
            return Err(Error::ZeroTruth(i));
        }
        if 100.0 * (t - p).abs() / t.abs() <= pct * (1.0 + 1e-12) {
            within += 1;
        }
    }
    Ok(within as f64 / preds.len() as f64)
}

/// True when predictions span less than 5% of the true label range — the
/// failure mode where a regression head answers inside one narrow band no
/// matter the input.
pub fn detect_range_collapse(preds: &[f64], truth: &[f64]) -> bool {
    let span = |vals: &[f64]| {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    if preds.is_empty() || truth.is_empty() {
        return false;
    }
    span(preds) < 0.05 * span(truth)
}

impl MetricsReport {
    /// Serialize as the flat key-value metrics document, including run
    /// provenance (seed and config hash).
    pub fn to_document(&self, seed: u64, config_hash: &str) -> String {
        let mut doc = String::new();
        let _ = writeln!(doc, "accuracy_pct = {}", self.accuracy_pct);
        let _ = writeln!(doc, "mse = {}", self.mse);
        let _ = writeln!(doc, "mae = {}", self.mae);
        let _ = writeln!(doc, "mape_pct = {}", self.mape_pct);
        let _ = writeln!(doc, "within_8pct_fraction = {}", self.within_8pct_fraction);
        let _ = writeln!(doc, "wall_clock_seconds = {}", self.wall_clock_seconds);
        let _ = writeln!(doc, "seed = {seed}");
        let _ = writeln!(doc, "config_hash = {config_hash}");
        let _ = writeln!(doc, "range_collapse = {}", self.range_collapse);
        doc
    }

    /// Parse a metrics document back into `(report, seed, config_hash)`.
    pub fn from_document(text: &str) -> Result<(MetricsReport, u64, String)> {
        let mut fields = std::collections::BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected 'key = value'", i + 1)))?;
            fields.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |key: &str| {
            fields
                .get(key)
                .ok_or_else(|| Error::Parse(format!("missing field '{key}'")))
        };
        let f64_field = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| Error::Parse(format!("field '{key}': bad number")))
        };
        let report = MetricsReport {
            accuracy_pct: f64_field("accuracy_pct")?,
            mse: f64_field("mse")?,
            mae: f64_field("mae")?,
            mape_pct: f64_field("mape_pct")?,
            within_8pct_fraction: f64_field("within_8pct_fraction")?,
            wall_clock_seconds: f64_field("wall_clock_seconds")?,
            range_collapse: get("range_collapse")?
                .parse()
                .map_err(|_| Error::Parse("field 'range_collapse': bad bool".into()))?,
        };
        let seed: u64 = get("seed")?
            .parse()
            .map_err(|_| Error::Parse("field 'seed': bad integer".into()))?;
        let config_hash = get("config_hash")?.clone();
        Ok((report, seed, config_hash))
    }
}
