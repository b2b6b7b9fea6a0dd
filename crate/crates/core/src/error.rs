//! Crate-wide error type and result alias.

use std::path::PathBuf;

use thiserror::Error;

use crate::pipeline::GradientReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("degenerate margin: margin must be > 0 when two or more classes are present")]
    DegenerateMargin,

    #[error("invalid margin {0}: must be finite and >= 0")]
    InvalidMargin(f64),

    #[error("unknown class {0}")]
    UnknownClass(usize),

    #[error("shrink factor {0} outside (0, 1)")]
    InvalidShrinkFactor(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("divergence: {0}")]
    Divergence(String),

    #[error(
        "labels not tunable: avg gradient magnitude {avg} >= threshold {threshold} \
         after {iters} shrink iterations (final scale {scale})",
        avg = report.avg_grad_magnitude,
        threshold = report.threshold,
        iters = report.iterations_used,
        scale = report.final_scale
    )]
    LabelsNotTunable { report: GradientReport },

    #[error("degenerate geometric loss: task losses must be > 0")]
    DegenerateGeometricLoss,

    #[error("class {class_id} has only {count} samples; a 5:1:1 split needs at least 7")]
    ClassTooSmall { class_id: usize, count: usize },

    #[error("zero regression label at index {0}: percentage error undefined")]
    ZeroTruth(usize),

    #[error("{path}: line {line}: {msg}")]
    Csv {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown scheme '{0}' (valid: ew, uw, dwa, gls)")]
    UnknownScheme(String),

    #[error("{} exists; pass --force to overwrite", .0.display())]
    OutputExists(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
