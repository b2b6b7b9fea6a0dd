//! Consolidation of a classification task and a regression task into a
//! single-task regression problem via an invertible, gradient-feedback-tuned
//! label transformation, together with a hard-parameter-sharing multi-task
//! baseline suite for comparison.
//!
//! The pieces, bottom up:
//!
//! - [`data`]: synthetic class-balanced datasets, CSV ingestion, stratified
//!   5:1:1 splits.
//! - [`label_transform`]: the invertible hybrid-label codec — per-class
//!   offsets, disjoint intervals, centering, uniform shrink.
//! - [`net`] / [`optim`]: a dense network with exact analytic gradients,
//!   Adam with decoupled weight decay, reduce-on-plateau scheduling.
//! - [`pipeline`]: label definition, the one-epoch gradient test, full
//!   training, and reverse mapping of predictions.
//! - [`mtl`]: the two-head hard-parameter-sharing baseline under EW, UW,
//!   DWA, and GLS loss weighting.
//! - [`metrics`], [`checkpoint`], [`config`]: evaluation, bit-exact model
//!   persistence, and run configuration.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod label_transform;
pub mod metrics;
pub mod mtl;
pub mod net;
pub mod optim;
pub mod pipeline;

pub use config::RunConfig;
pub use data::{LabeledSample, SynthConfig};
pub use error::{Error, Result};
pub use label_transform::{ClassRange, HybridLabel, TransformSpec};
pub use metrics::MetricsReport;
pub use mtl::{MtlModel, SchemeKind, WeightingScheme};
pub use net::DenseNet;
pub use optim::{AdamState, PlateauScheduler};
pub use pipeline::{FastcarRun, GradientReport, TrainConfig};
