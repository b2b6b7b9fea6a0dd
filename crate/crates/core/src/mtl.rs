//! Hard-parameter-sharing baseline: one shared trunk with a classification
//! head and a regression head, trained under one of four loss weighting
//! schemes.
//!
//! Scheme formulas follow the original formulations from the literature:
//! uncertainty weighting uses two learnable log-variances with the 1/2
//! coefficient on the regression term, dynamic weight average softmaxes the
//! ratio of the last two epochs' task losses at temperature 2, and the
//! geometric loss strategy is the square root of the loss product.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledSample;
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::net::{
    backward_batch, batch_losses, forward_batch, DenseNet, Gradients, LossKind, Target, Workspace,
    DEFAULT_HIDDEN,
};
use crate::optim::{AdamState, PlateauScheduler};
use crate::pipeline::{EpochRecord, TrainConfig, TrainLog};

pub const CLS_HEAD: &str = "cls";
pub const REG_HEAD: &str = "reg";

/// Temperature of the dynamic-weight-average softmax.
const DWA_TEMPERATURE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    /// Equal weighting: plain sum of the task losses.
    Ew,
    /// Uncertainty weighting with learnable log-variances.
    Uw,
    /// Dynamic weight average over the loss-ratio history.
    Dwa,
    /// Geometric loss strategy: sqrt of the loss product.
    Gls,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [SchemeKind::Ew, SchemeKind::Uw, SchemeKind::Dwa, SchemeKind::Gls];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Ew => "ew",
            SchemeKind::Uw => "uw",
            SchemeKind::Dwa => "dwa",
            SchemeKind::Gls => "gls",
        }
    }

    pub fn parse(s: &str) -> Result<SchemeKind> {
        match s.to_ascii_lowercase().as_str() {
            "ew" => Ok(SchemeKind::Ew),
            "uw" => Ok(SchemeKind::Uw),
            "dwa" => Ok(SchemeKind::Dwa),
            "gls" => Ok(SchemeKind::Gls),
            other => Err(Error::UnknownScheme(other.to_string())),
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Learnable state for uncertainty weighting: `total =
/// exp(-s1) * L_cls + exp(-s2) * L_reg / 2 + (s1 + s2) / 2`.
#[derive(Debug, Clone)]
pub struct UwState {
    pub log_vars: [f64; 2],
    opt: AdamState,
}

impl UwState {
    fn new(lr: f64) -> UwState {
        UwState {
            log_vars: [0.0, 0.0],
            opt: AdamState::new(2, lr, 0.0),
        }
    }

    /// Gradient step on the log-variances given the current task losses.
    fn update(&mut self, l_cls: f64, l_reg: f64) -> Result<()> {
        let grads = [
            -(-self.log_vars[0]).exp() * l_cls + 0.5,
            -0.5 * (-self.log_vars[1]).exp() * l_reg + 0.5,
        ];
        self.opt.step_flat(&mut self.log_vars, &grads)
    }
}

/// Loss-ratio history for dynamic weight average.
#[derive(Debug, Clone, Default)]
pub struct DwaState {
    /// Epoch-average task losses of the previous epoch and the one before.
    prev: Option<[f64; 2]>,
    prev2: Option<[f64; 2]>,
}

impl DwaState {
    fn weights(&self, epoch: usize) -> (f64, f64) {
        let (Some(prev), Some(prev2)) = (self.prev, self.prev2) else {
            return (1.0, 1.0);
        };
        if epoch < 2 {
            return (1.0, 1.0);
        }
        let r = [prev[0] / prev2[0], prev[1] / prev2[1]];
        let e = [
            (r[0] / DWA_TEMPERATURE).exp(),
            (r[1] / DWA_TEMPERATURE).exp(),
        ];
        let denom = e[0] + e[1];
        (2.0 * e[0] / denom, 2.0 * e[1] / denom)
    }

    fn push(&mut self, losses: [f64; 2]) {
        self.prev2 = self.prev;
        self.prev = Some(losses);
    }
}

/// A weighting scheme plus whatever state it carries across the run.
#[derive(Debug, Clone)]
pub enum WeightingScheme {
    Ew,
    Uw(UwState),
    Dwa(DwaState),
    Gls,
}

impl WeightingScheme {
    pub fn new(kind: SchemeKind, lr: f64) -> WeightingScheme {
        match kind {
            SchemeKind::Ew => WeightingScheme::Ew,
            SchemeKind::Uw => WeightingScheme::Uw(UwState::new(lr)),
            SchemeKind::Dwa => WeightingScheme::Dwa(DwaState::default()),
            SchemeKind::Gls => WeightingScheme::Gls,
        }
    }

    pub fn kind(&self) -> SchemeKind {
        match self {
            WeightingScheme::Ew => SchemeKind::Ew,
            WeightingScheme::Uw(_) => SchemeKind::Uw,
            WeightingScheme::Dwa(_) => SchemeKind::Dwa,
            WeightingScheme::Gls => SchemeKind::Gls,
        }
    }

    /// Combine the two task losses into the training objective, returning the
    /// total and the effective task weights. For GLS the weights are the
    /// partial derivatives of the total with respect to each loss, which is
    /// what the backward pass needs.
    pub fn combined_loss(&self, l_cls: f64, l_reg: f64, epoch: usize) -> Result<(f64, (f64, f64))> {
        match self {
            WeightingScheme::Ew => Ok((l_cls + l_reg, (1.0, 1.0))),
            WeightingScheme::Uw(state) => {
                let w_cls = (-state.log_vars[0]).exp();
                let w_reg = 0.5 * (-state.log_vars[1]).exp();
                let total =
                    w_cls * l_cls + w_reg * l_reg + 0.5 * (state.log_vars[0] + state.log_vars[1]);
                Ok((total, (w_cls, w_reg)))
            }
            WeightingScheme::Dwa(state) => {
                let (w_cls, w_reg) = state.weights(epoch);
                Ok((w_cls * l_cls + w_reg * l_reg, (w_cls, w_reg)))
            }
            WeightingScheme::Gls => {
                if l_cls <= 0.0 || l_reg <= 0.0 {
                    return Err(Error::DegenerateGeometricLoss);
                }
                let total = (l_cls * l_reg).sqrt();
                Ok((total, (0.5 * (l_reg / l_cls).sqrt(), 0.5 * (l_cls / l_reg).sqrt())))
            }
        }
    }

    /// Per-step state update (uncertainty weighting trains its log-variances).
    fn step(&mut self, l_cls: f64, l_reg: f64) -> Result<()> {
        if let WeightingScheme::Uw(state) = self {
            state.update(l_cls, l_reg)?;
        }
        Ok(())
    }

    /// Per-epoch state update (dynamic weight average records loss history).
    fn end_of_epoch(&mut self, avg_l_cls: f64, avg_l_reg: f64) {
        if let WeightingScheme::Dwa(state) = self {
            state.push([avg_l_cls, avg_l_reg]);
        }
    }
}

/// Shared trunk with a K-logit classification head and a width-1 regression
/// head consuming identical trunk features.
#[derive(Debug, Clone)]
pub struct MtlModel {
    pub net: DenseNet,
    pub n_classes: usize,
}

impl MtlModel {
    pub fn new(input_dim: usize, n_classes: usize, seed: u64) -> MtlModel {
        MtlModel {
            net: DenseNet::new(
                input_dim,
                &DEFAULT_HIDDEN,
                &[(CLS_HEAD, n_classes), (REG_HEAD, 1)],
                seed,
            ),
            n_classes,
        }
    }

    /// Argmax class plus raw regression output in original label units.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, f64)> {
        let out = self.net.forward(x)?;
        let class = argmax(&out[0]);
        Ok((class, out[1][0]))
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn n_classes_of(samples: &[LabeledSample]) -> usize {
    samples.iter().map(|s| s.class_id + 1).max().unwrap_or(0)
}

/// Train the two-head model under `scheme` with the same optimizer and
/// scheduler settings as the consolidated pipeline, then evaluate on the test
/// split. Classification metrics come from the class head's argmax,
/// regression metrics from the raw regression head.
pub fn train_mtl(
    train: &[LabeledSample],
    val: &[LabeledSample],
    test: &[LabeledSample],
    cfg: &TrainConfig,
    kind: SchemeKind,
) -> Result<(MtlModel, MetricsReport, TrainLog)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::NoSamples);
    }
    let start = Instant::now();
    let dim = train[0].features.len();
    let n_classes = n_classes_of(train).max(n_classes_of(val));
    let mut model = MtlModel::new(dim, n_classes, cfg.seed);
    let mut adam = AdamState::new(model.net.param_count(), cfg.lr, cfg.weight_decay);
    let mut sched = PlateauScheduler::new(cfg.scheduler_factor, cfg.scheduler_patience);
    let mut scheme = WeightingScheme::new(kind, cfg.lr);
    let mut ws = Workspace::new();
    let mut grads = Gradients::zeros_like(&model.net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..train.len()).collect();

    let kinds = [LossKind::CrossEntropy, LossKind::Mse];
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut rng);
        let mut total_sum = 0.0;
        let mut cls_sum = 0.0;
        let mut reg_sum = 0.0;
        for chunk in indices.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| train[i].features.as_slice()).collect();
            let targets: Vec<Target> = chunk
                .iter()
                .flat_map(|&i| {
                    [
                        Target::Class(train[i].class_id),
                        Target::Value(train[i].y),
                    ]
                })
                .collect();
            forward_batch(&model.net, &xs, &mut ws)?;
            let losses = batch_losses(&model.net, &ws, &targets, &kinds)?;
            let (l_cls, l_reg) = (losses[0], losses[1]);
            if !(l_cls.is_finite() && l_reg.is_finite()) {
                return Err(Error::Divergence(format!(
                    "scheme {kind}: non-finite loss at epoch {epoch}"
                )));
            }
            let (total, (w_cls, w_reg)) = scheme.combined_loss(l_cls, l_reg, epoch - 1)?;
            if !total.is_finite() {
                return Err(Error::Divergence(format!(
                    "scheme {kind}: non-finite total loss at epoch {epoch}"
                )));
            }
            backward_batch(
                &model.net,
                &xs,
                &mut ws,
                &targets,
                &kinds,
                &[w_cls, w_reg],
                &mut grads,
            )?;
            adam.step_net(&mut model.net, &grads)?;
            scheme.step(l_cls, l_reg)?;
            let n = chunk.len() as f64;
            total_sum += total * n;
            cls_sum += l_cls * n;
            reg_sum += l_reg * n;
        }
        let n = train.len() as f64;
        scheme.end_of_epoch(cls_sum / n, reg_sum / n);

        let (val_cls, val_reg) = eval_task_losses(&model, val)?;
        let (val_total, _) = scheme.combined_loss(val_cls, val_reg, epoch - 1)?;
        let new_lr = sched.step(val_total, adam.lr);
        adam.lr = new_lr;
        sync_uw_lr(&mut scheme, new_lr);
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: total_sum / n,
            val_loss: val_total,
            lr: new_lr,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
    }
    log.wall_clock_seconds = start.elapsed().as_secs_f64();

    let report = evaluate_mtl(&model, test, log.wall_clock_seconds)?;
    Ok((model, report, log))
}

fn sync_uw_lr(scheme: &mut WeightingScheme, lr: f64) {
    if let WeightingScheme::Uw(state) = scheme {
        state.opt.lr = lr;
    }
}

fn eval_task_losses(model: &MtlModel, samples: &[LabeledSample]) -> Result<(f64, f64)> {
    let mut cls = 0.0;
    let mut reg = 0.0;
    for s in samples {
        if s.class_id >= model.n_classes {
            return Err(Error::UnknownClass(s.class_id));
        }
        let out = model.net.forward(&s.features)?;
        cls += crate::net::cross_entropy(&out[0], s.class_id);
        let r = out[1][0] - s.y;
        reg += r * r;
    }
    let n = samples.len() as f64;
    Ok((cls / n, reg / n))
}

/// Evaluate a trained baseline on a test split.
pub fn evaluate_mtl(
    model: &MtlModel,
    test: &[LabeledSample],
    wall_clock_seconds: f64,
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut pred_classes = Vec::with_capacity(test.len());
    let mut pred_ys = Vec::with_capacity(test.len());
    let mut true_classes = Vec::with_capacity(test.len());
    let mut true_ys = Vec::with_capacity(test.len());
    for s in test {
        let (class_id, y) = model.predict(&s.features)?;
        pred_classes.push(class_id);
        pred_ys.push(y);
        true_classes.push(s.class_id);
        true_ys.push(s.y);
    }
    Ok(MetricsReport {
        accuracy_pct: metrics::accuracy(&pred_classes, &true_classes)?,
        mse: metrics::mse(&pred_ys, &true_ys)?,
        mae: metrics::mae(&pred_ys, &true_ys)?,
        mape_pct: metrics::mape(&pred_ys, &true_ys)?,
        within_8pct_fraction: metrics::within_fraction(&pred_ys, &true_ys, 8.0)?,
        wall_clock_seconds,
        range_collapse: metrics::detect_range_collapse(&pred_ys, &true_ys),
    })
}

/// One scheme's row in a sweep: either a full report or the error message
/// that stopped it.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub scheme: SchemeKind,
    pub outcome: std::result::Result<MetricsReport, String>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// CSV with header `scheme,accuracy_pct,mse,mape_pct,wall_clock_s`,
    /// 4-decimal formatting. Failed schemes emit `nan` columns.
    pub fn to_heatmap_csv(&self) -> String {
        let mut out = String::from("scheme,accuracy_pct,mse,mape_pct,wall_clock_s\n");
        for row in &self.rows {
            match &row.outcome {
                Ok(r) => {
                    let _ = writeln!(
                        out,
                        "{},{:.4},{:.4},{:.4},{:.4}",
                        row.scheme, r.accuracy_pct, r.mse, r.mape_pct, r.wall_clock_seconds
                    );
                }
                Err(_) => {
                    let _ = writeln!(out, "{},nan,nan,nan,nan", row.scheme);
                }
            }
        }
        out
    }

    /// Mean and sample standard deviation of the successful rows' run times.
    pub fn runtime_mean_std(&self) -> Option<(f64, f64)> {
        let times: Vec<f64> = self
            .rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|m| m.wall_clock_seconds))
            .collect();
        if times.is_empty() {
            return None;
        }
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let std = if times.len() < 2 {
            0.0
        } else {
            let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
                / (times.len() - 1) as f64;
            var.sqrt()
        };
        Some((mean, std))
    }
}

/// Run every scheme on identical splits and seeds. A failing scheme is
/// recorded in its row; the sweep continues.
pub fn sweep(
    train: &[LabeledSample],
    val: &[LabeledSample],
    test: &[LabeledSample],
    cfg: &TrainConfig,
    schemes: &[SchemeKind],
) -> Result<SweepTable> {
    if schemes.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one scheme".into()));
    }
    let mut table = SweepTable::default();
    for &kind in schemes {
        let outcome = train_mtl(train, val, test, cfg, kind)
            .map(|(_, report, _)| report)
            .map_err(|e| e.to_string());
        table.rows.push(SweepRow {
            scheme: kind,
            outcome,
        });
    }
    Ok(table)
}
