//! Dense feed-forward network with explicit parameters and analytic gradients.
//!
//! A [`DenseNet`] is a shared trunk of fully connected layers plus one or more
//! named linear heads. The single-task regressor uses one width-1 head; the
//! hard-parameter-sharing baseline attaches a K-logit classification head and
//! a width-1 regression head to the same trunk.
//!
//! Everything is `f64` and row-major; the backward pass computes exact
//! gradients of the mean batch loss, which keeps finite-difference checks
//! meaningful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default trunk layout: two hidden layers of 64 units.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// One fully connected layer. `weights` is `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero bias.
    fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Layer {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Layer {
            in_dim,
            out_dim,
            weights: (0..in_dim * out_dim)
                .map(|_| rng.random_range(-limit..limit))
                .collect(),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    fn apply(&self, input: &[f64], output: &mut [f64]) {
        for (o, (row, b)) in self
            .weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .enumerate()
        {
            let mut acc = *b;
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            output[o] = match self.activation {
                Activation::Relu => acc.max(0.0),
                Activation::Identity => acc,
            };
        }
    }
}

/// A named output layer attached to the trunk. Heads are always linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub name: String,
    pub layer: Layer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub input_dim: usize,
    pub layers: Vec<Layer>,
    pub heads: Vec<Head>,
}

impl DenseNet {
    /// Build a seeded trunk of relu layers with linear heads. The trunk
    /// parameters are drawn before any head, so two nets built from the same
    /// seed share their trunk initialization regardless of head layout.
    pub fn new(input_dim: usize, hidden: &[usize], heads: &[(&str, usize)], seed: u64) -> DenseNet {
        assert!(input_dim > 0, "input_dim must be positive");
        assert!(!heads.is_empty(), "at least one head required");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len());
        let mut dim = input_dim;
        for &width in hidden {
            layers.push(Layer::glorot(dim, width, Activation::Relu, &mut rng));
            dim = width;
        }
        let heads = heads
            .iter()
            .map(|&(name, width)| Head {
                name: name.to_string(),
                layer: Layer::glorot(dim, width, Activation::Identity, &mut rng),
            })
            .collect();
        DenseNet {
            input_dim,
            layers,
            heads,
        }
    }

    /// Width of the features the heads consume.
    pub fn trunk_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.out_dim)
    }

    pub fn head_index(&self, name: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .chain(self.heads.iter().map(|h| h.layer.weights.len() + h.layer.bias.len()))
            .sum()
    }

    /// Mutable parameter blocks in a fixed order (trunk layers then heads,
    /// weights before bias). The optimizer walks the same order.
    pub(crate) fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut blocks = Vec::with_capacity(2 * (self.layers.len() + self.heads.len()));
        for l in &mut self.layers {
            blocks.push(l.weights.as_mut_slice());
            blocks.push(l.bias.as_mut_slice());
        }
        for h in &mut self.heads {
            blocks.push(h.layer.weights.as_mut_slice());
            blocks.push(h.layer.bias.as_mut_slice());
        }
        blocks
    }

    /// Evaluate one sample, returning each head's raw output. Pure in the
    /// parameters and input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "input has {} features, net expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut current = x.to_vec();
        for layer in &self.layers {
            let mut next = vec![0.0; layer.out_dim];
            layer.apply(&current, &mut next);
            current = next;
        }
        Ok(self
            .heads
            .iter()
            .map(|h| {
                let mut out = vec![0.0; h.layer.out_dim];
                h.layer.apply(&current, &mut out);
                out
            })
            .collect())
    }
}

/// Per-head training target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Scalar regression target for a width-1 head under MSE.
    Value(f64),
    /// True class index for a logit head under cross-entropy.
    Class(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

/// Gradient storage mirroring a [`DenseNet`]'s parameter shapes.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
    pub heads: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Gradients {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
            heads: net
                .heads
                .iter()
                .map(|h| (vec![0.0; h.layer.weights.len()], vec![0.0; h.layer.bias.len()]))
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for (w, b) in self.layers.iter_mut().chain(self.heads.iter_mut()) {
            w.fill(0.0);
            b.fill(0.0);
        }
    }

    pub(crate) fn blocks(&self) -> Vec<&[f64]> {
        let mut blocks = Vec::with_capacity(2 * (self.layers.len() + self.heads.len()));
        for (w, b) in &self.layers {
            blocks.push(w.as_slice());
            blocks.push(b.as_slice());
        }
        for (w, b) in &self.heads {
            blocks.push(w.as_slice());
            blocks.push(b.as_slice());
        }
        blocks
    }

    /// Sum of |g| and the number of gradient scalars.
    pub fn abs_sum_and_count(&self) -> (f64, usize) {
        let mut sum = 0.0;
        let mut count = 0;
        for (w, b) in self.layers.iter().chain(self.heads.iter()) {
            sum += w.iter().map(|g| g.abs()).sum::<f64>();
            sum += b.iter().map(|g| g.abs()).sum::<f64>();
            count += w.len() + b.len();
        }
        (sum, count)
    }
}

/// Reusable batch buffers: post-activations per trunk layer, raw head
/// outputs, and backprop scratch. One workspace serves one training thread.
#[derive(Debug, Default)]
pub struct Workspace {
    batch: usize,
    trunk: Vec<Vec<f64>>,
    heads: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    logits: Vec<f64>,
}

impl Workspace {
    pub fn new() -> Workspace {
        Workspace::default()
    }

    fn prepare(&mut self, net: &DenseNet, batch: usize) {
        self.batch = batch;
        self.trunk.resize(net.layers.len(), Vec::new());
        for (buf, layer) in self.trunk.iter_mut().zip(&net.layers) {
            buf.resize(batch * layer.out_dim, 0.0);
        }
        self.heads.resize(net.heads.len(), Vec::new());
        for (buf, head) in self.heads.iter_mut().zip(&net.heads) {
            buf.resize(batch * head.layer.out_dim, 0.0);
        }
    }

    /// Raw output slice of one head for one sample from the last forward pass.
    pub fn head_output(&self, net: &DenseNet, head: usize, sample: usize) -> &[f64] {
        let dim = net.heads[head].layer.out_dim;
        &self.heads[head][sample * dim..(sample + 1) * dim]
    }
}

/// Run the trunk and all heads over a batch, storing activations in `ws`.
pub fn forward_batch(net: &DenseNet, xs: &[&[f64]], ws: &mut Workspace) -> Result<()> {
    for x in xs {
        if x.len() != net.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "input has {} features, net expects {}",
                x.len(),
                net.input_dim
            )));
        }
    }
    ws.prepare(net, xs.len());
    for (l, layer) in net.layers.iter().enumerate() {
        let (done, rest) = ws.trunk.split_at_mut(l);
        let out = &mut rest[0];
        for (s, x) in xs.iter().enumerate() {
            let input: &[f64] = if l == 0 {
                x
            } else {
                &done[l - 1][s * layer.in_dim..(s + 1) * layer.in_dim]
            };
            layer.apply(input, &mut out[s * layer.out_dim..(s + 1) * layer.out_dim]);
        }
    }
    let trunk_dim = net.trunk_dim();
    for (h, head) in net.heads.iter().enumerate() {
        let out_dim = head.layer.out_dim;
        for (s, x) in xs.iter().enumerate() {
            let input: &[f64] = if net.layers.is_empty() {
                x
            } else {
                &ws.trunk[net.layers.len() - 1][s * trunk_dim..(s + 1) * trunk_dim]
            };
            head.layer
                .apply(input, &mut ws.heads[h][s * out_dim..(s + 1) * out_dim]);
        }
    }
    Ok(())
}

/// Mean per-head losses for the batch most recently run through
/// [`forward_batch`]. Targets are laid out sample-major: `targets[s * H + h]`.
pub fn batch_losses(
    net: &DenseNet,
    ws: &Workspace,
    targets: &[Target],
    kinds: &[LossKind],
) -> Result<Vec<f64>> {
    let n_heads = net.heads.len();
    check_batch_args(net, ws, targets, kinds)?;
    let batch = ws.batch as f64;
    let mut losses = vec![0.0; n_heads];
    for (h, (head, kind)) in net.heads.iter().zip(kinds).enumerate() {
        let dim = head.layer.out_dim;
        for s in 0..ws.batch {
            let out = &ws.heads[h][s * dim..(s + 1) * dim];
            losses[h] += match (kind, targets[s * n_heads + h]) {
                (LossKind::Mse, Target::Value(t)) => {
                    let r = out[0] - t;
                    r * r
                }
                (LossKind::CrossEntropy, Target::Class(c)) => cross_entropy(out, c),
                (kind, target) => {
                    return Err(Error::DimensionMismatch(format!(
                        "target {target:?} does not match loss {kind:?} on head '{}'",
                        head.name
                    )))
                }
            };
        }
        losses[h] /= batch;
    }
    Ok(losses)
}

/// Exact gradients of `sum_h weights[h] * L_h` for the batch most recently
/// run through [`forward_batch`]. Gradients are written into `grads`
/// (overwritten, not accumulated).
pub fn backward_batch(
    net: &DenseNet,
    xs: &[&[f64]],
    ws: &mut Workspace,
    targets: &[Target],
    kinds: &[LossKind],
    weights: &[f64],
    grads: &mut Gradients,
) -> Result<()> {
    let n_heads = net.heads.len();
    check_batch_args(net, ws, targets, kinds)?;
    if weights.len() != n_heads {
        return Err(Error::LengthMismatch {
            left: weights.len(),
            right: n_heads,
        });
    }
    grads.zero();
    let batch = ws.batch;
    let inv_batch = 1.0 / batch as f64;
    let trunk_dim = net.trunk_dim();

    // d(total) / d(trunk output), accumulated over heads.
    ws.delta.resize(batch * trunk_dim, 0.0);
    ws.delta.fill(0.0);

    for (h, (head, kind)) in net.heads.iter().zip(kinds).enumerate() {
        let dim = head.layer.out_dim;
        let (dw, db) = &mut grads.heads[h];
        for s in 0..batch {
            let out = &ws.heads[h][s * dim..(s + 1) * dim];
            // dL_h/d(out), scaled by the head weight and the batch mean.
            ws.logits.resize(dim, 0.0);
            match (kind, targets[s * n_heads + h]) {
                (LossKind::Mse, Target::Value(t)) => {
                    ws.logits[0] = 2.0 * (out[0] - t) * inv_batch * weights[h];
                }
                (LossKind::CrossEntropy, Target::Class(c)) => {
                    softmax_into(out, &mut ws.logits);
                    for (k, p) in ws.logits.iter_mut().enumerate() {
                        let indicator = if k == c { 1.0 } else { 0.0 };
                        *p = (*p - indicator) * inv_batch * weights[h];
                    }
                }
                _ => unreachable!("checked in batch_losses"),
            }
            let input: &[f64] = if net.layers.is_empty() {
                xs[s]
            } else {
                &ws.trunk[net.layers.len() - 1][s * trunk_dim..(s + 1) * trunk_dim]
            };
            let d_input = &mut ws.delta[s * trunk_dim..(s + 1) * trunk_dim];
            for (o, &d) in ws.logits.iter().enumerate() {
                let row = &head.layer.weights[o * trunk_dim..(o + 1) * trunk_dim];
                let drow = &mut dw[o * trunk_dim..(o + 1) * trunk_dim];
                for i in 0..trunk_dim {
                    drow[i] += d * input[i];
                    d_input[i] += d * row[i];
                }
                db[o] += d;
            }
        }
    }

    // Trunk layers in reverse. ws.delta holds d(total)/d(post-activation).
    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        let (dw, db) = &mut grads.layers[l];
        ws.delta_prev.resize(batch * layer.in_dim, 0.0);
        ws.delta_prev.fill(0.0);
        for s in 0..batch {
            let post = &ws.trunk[l][s * layer.out_dim..(s + 1) * layer.out_dim];
            let input: &[f64] = if l == 0 {
                xs[s]
            } else {
                &ws.trunk[l - 1][s * layer.in_dim..(s + 1) * layer.in_dim]
            };
            let d_out = &ws.delta[s * layer.out_dim..(s + 1) * layer.out_dim];
            let d_in = &mut ws.delta_prev[s * layer.in_dim..(s + 1) * layer.in_dim];
            for o in 0..layer.out_dim {
                let gate = match layer.activation {
                    Activation::Relu => {
                        if post[o] > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Activation::Identity => 1.0,
                };
                let d = d_out[o] * gate;
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let drow = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for i in 0..layer.in_dim {
                    drow[i] += d * input[i];
                    d_in[i] += d * row[i];
                }
                db[o] += d;
            }
        }
        std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
    }
    Ok(())
}

fn check_batch_args(
    net: &DenseNet,
    ws: &Workspace,
    targets: &[Target],
    kinds: &[LossKind],
) -> Result<()> {
    if ws.batch == 0 {
        return Err(Error::NoSamples);
    }
    if kinds.len() != net.heads.len() {
        return Err(Error::LengthMismatch {
            left: kinds.len(),
            right: net.heads.len(),
        });
    }
    if targets.len() != ws.batch * net.heads.len() {
        return Err(Error::LengthMismatch {
            left: targets.len(),
            right: ws.batch * net.heads.len(),
        });
    }
    for (head, kind) in net.heads.iter().zip(kinds) {
        if *kind == LossKind::Mse && head.layer.out_dim != 1 {
            return Err(Error::DimensionMismatch(format!(
                "MSE head '{}' must have width 1, has {}",
                head.name, head.layer.out_dim
            )));
        }
    }
    Ok(())
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        let e = (z - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Mean squared difference over all elements.
pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len(), "mse length mismatch");
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64
}

/// Negative log softmax at the true class, computed with max subtraction.
pub fn cross_entropy(logits: &[f64], class: usize) -> f64 {
    assert!(class < logits.len(), "class {class} out of range");
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[class]
}
