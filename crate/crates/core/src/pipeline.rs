//! The consolidated-training pipeline: label definition, one-epoch gradient
//! test with label rescaling, full single-task training, and reverse mapping
//! of predictions back to (class, regression label).

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledSample;
use crate::error::{Error, Result};
use crate::label_transform::{compute_class_ranges, solve_offsets, HybridLabel, TransformSpec};
use crate::metrics::{self, MetricsReport};
use crate::net::{
    backward_batch, batch_losses, forward_batch, DenseNet, Gradients, LossKind, Target, Workspace,
    DEFAULT_HIDDEN,
};
use crate::optim::{AdamState, PlateauScheduler};

/// Name of the single regression head the consolidated model trains.
pub const REG_HEAD: &str = "reg";

/// Outcome of the one-epoch gradient test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReport {
    /// Mean of |g| over every parameter scalar at every optimizer step of the
    /// test epoch.
    pub avg_grad_magnitude: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Shrink iterations consumed before this report was produced.
    pub iterations_used: usize,
    /// Scale of the spec this report was measured on.
    pub final_scale: f64,
}

/// All training hyperparameters for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    pub grad_threshold: f64,
    pub shrink_factor: f64,
    pub max_label_iterations: usize,
    pub margin: f64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr: 1e-3,
            weight_decay: 1e-4,
            scheduler_factor: 0.1,
            scheduler_patience: 5,
            grad_threshold: 2.0,
            shrink_factor: 0.5,
            max_label_iterations: 10,
            margin: 2.0,
            seed: 42,
            batch_size: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be > 0");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        if !(self.scheduler_factor > 0.0 && self.scheduler_factor < 1.0) {
            return bad("scheduler_factor must be in (0, 1)");
        }
        if !(self.grad_threshold.is_finite() && self.grad_threshold > 0.0) {
            return bad("grad_threshold must be > 0");
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return bad("shrink_factor must be in (0, 1)");
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return bad("margin must be >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub wall_clock_seconds: f64,
}

impl TrainLog {
    /// Line-oriented records: `epoch,train_loss,val_loss,lr,elapsed_seconds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr,elapsed_seconds\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.val_loss, r.lr, r.elapsed_seconds
            );
        }
        out
    }
}

/// A fully trained consolidated model plus everything needed to decode it
/// and to checkpoint the run.
#[derive(Debug, Clone)]
pub struct FastcarRun {
    pub model: DenseNet,
    pub spec: TransformSpec,
    pub log: TrainLog,
    pub grad_report: GradientReport,
    pub optimizer: AdamState,
    pub scheduler: PlateauScheduler,
}

fn hybrid_targets(samples: &[LabeledSample], spec: &TransformSpec) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| spec.transform(s.y, s.class_id).map(|h| h.0))
        .collect()
}

fn feature_dim(samples: &[LabeledSample]) -> Result<usize> {
    samples
        .first()
        .map(|s| s.features.len())
        .ok_or(Error::NoSamples)
}

fn regression_net(input_dim: usize, seed: u64) -> DenseNet {
    DenseNet::new(input_dim, &DEFAULT_HIDDEN, &[(REG_HEAD, 1)], seed)
}

/// Mean MSE of the regression head over a whole set of hybrid targets.
fn eval_hybrid_mse(net: &DenseNet, samples: &[LabeledSample], targets: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for (s, &t) in samples.iter().zip(targets) {
        let out = net.forward(&s.features)?;
        let r = out[0][0] - t;
        sum += r * r;
    }
    Ok(sum / samples.len() as f64)
}

/// Train a fresh regressor for exactly one epoch on the spec's hybrid labels
/// and report the mean absolute gradient over every parameter at every
/// optimizer step. The network is discarded. A non-finite loss is reported as
/// a failed test with infinite average, not as an error.
pub fn one_epoch_test(
    train: &[LabeledSample],
    spec: &TransformSpec,
    cfg: &TrainConfig,
) -> Result<GradientReport> {
    cfg.validate()?;
    let dim = feature_dim(train)?;
    let hybrid = hybrid_targets(train, spec)?;
    let mut net = regression_net(dim, cfg.seed);
    let mut adam = AdamState::new(net.param_count(), cfg.lr, cfg.weight_decay);
    let mut ws = Workspace::new();
    let mut grads = Gradients::zeros_like(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut indices: Vec<usize> = (0..train.len()).collect();
    indices.shuffle(&mut rng);

    let kinds = [LossKind::Mse];
    let weights = [1.0];
    let mut abs_sum = 0.0;
    let mut grad_count = 0usize;
    let fail = GradientReport {
        avg_grad_magnitude: f64::INFINITY,
        threshold: cfg.grad_threshold,
        pass: false,
        iterations_used: 0,
        final_scale: spec.scale(),
    };
    for chunk in indices.chunks(cfg.batch_size) {
        let xs: Vec<&[f64]> = chunk.iter().map(|&i| train[i].features.as_slice()).collect();
        let targets: Vec<Target> = chunk.iter().map(|&i| Target::Value(hybrid[i])).collect();
        forward_batch(&net, &xs, &mut ws)?;
        let losses = batch_losses(&net, &ws, &targets, &kinds)?;
        if !losses[0].is_finite() {
            return Ok(fail);
        }
        backward_batch(&net, &xs, &mut ws, &targets, &kinds, &weights, &mut grads)?;
        let (sum, count) = grads.abs_sum_and_count();
        if !sum.is_finite() {
            return Ok(fail);
        }
        abs_sum += sum;
        grad_count += count;
        adam.step_net(&mut net, &grads)?;
    }
    let avg = abs_sum / grad_count as f64;
    Ok(GradientReport {
        avg_grad_magnitude: avg,
        threshold: cfg.grad_threshold,
        pass: avg < cfg.grad_threshold,
        iterations_used: 0,
        final_scale: spec.scale(),
    })
}

/// Phase 1 and 2: build the stacked-interval spec, then shrink it until the
/// one-epoch test passes. Each retest starts from a fresh, identically seeded
/// network so the measurement reflects only the label scale.
pub fn fit_labels(
    train: &[LabeledSample],
    cfg: &TrainConfig,
) -> Result<(TransformSpec, GradientReport)> {
    cfg.validate()?;
    let ranges = compute_class_ranges(train)?;
    let mut spec = solve_offsets(&ranges, cfg.margin)?;
    let mut report = one_epoch_test(train, &spec, cfg)?;
    let mut iterations = 0;
    while !report.pass && iterations < cfg.max_label_iterations {
        spec = spec.shrink(cfg.shrink_factor)?;
        iterations += 1;
        report = one_epoch_test(train, &spec, cfg)?;
    }
    report.iterations_used = iterations;
    report.final_scale = spec.scale();
    if report.pass {
        Ok((spec, report))
    } else {
        Err(Error::LabelsNotTunable { report })
    }
}

/// Phases 1-3: tune the labels, then train the single-task regressor on the
/// hybrid labels with Adam and the plateau scheduler monitoring validation
/// hybrid-space MSE. Wall clock covers label tuning and the training loop.
pub fn train_fastcar(
    train: &[LabeledSample],
    val: &[LabeledSample],
    cfg: &TrainConfig,
) -> Result<FastcarRun> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::NoSamples);
    }
    let start = Instant::now();
    let (spec, grad_report) = fit_labels(train, cfg)?;

    let dim = feature_dim(train)?;
    let train_hybrid = hybrid_targets(train, &spec)?;
    let val_hybrid = hybrid_targets(val, &spec)?;

    let mut net = regression_net(dim, cfg.seed);
    let mut adam = AdamState::new(net.param_count(), cfg.lr, cfg.weight_decay);
    let mut sched = PlateauScheduler::new(cfg.scheduler_factor, cfg.scheduler_patience);
    let mut ws = Workspace::new();
    let mut grads = Gradients::zeros_like(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..train.len()).collect();

    let kinds = [LossKind::Mse];
    let weights = [1.0];
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in indices.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| train[i].features.as_slice()).collect();
            let targets: Vec<Target> =
                chunk.iter().map(|&i| Target::Value(train_hybrid[i])).collect();
            forward_batch(&net, &xs, &mut ws)?;
            let losses = batch_losses(&net, &ws, &targets, &kinds)?;
            if !losses[0].is_finite() {
                return Err(Error::Divergence(format!("non-finite loss at epoch {epoch}")));
            }
            backward_batch(&net, &xs, &mut ws, &targets, &kinds, &weights, &mut grads)?;
            adam.step_net(&mut net, &grads)?;
            loss_sum += losses[0] * chunk.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_loss = eval_hybrid_mse(&net, val, &val_hybrid)?;
        let new_lr = sched.step(val_loss, adam.lr);
        adam.lr = new_lr;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: new_lr,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
    }
    log.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(FastcarRun {
        model: net,
        spec,
        log,
        grad_report,
        optimizer: adam,
        scheduler: sched,
    })
}

/// Phase 4: forward one sample and reverse-map the hybrid prediction.
pub fn predict(model: &DenseNet, spec: &TransformSpec, x: &[f64]) -> Result<(usize, f64)> {
    let out = model.forward(x)?;
    Ok(spec.decode(HybridLabel(out[0][0])))
}

/// Decode every test sample and compute classification and regression
/// metrics in original label units.
pub fn evaluate(
    model: &DenseNet,
    spec: &TransformSpec,
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
        let (class_id, y) = predict(model, spec, &s.features)?;
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
