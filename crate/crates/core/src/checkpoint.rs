//! Checkpointing of a trained network plus optimizer and scheduler state.
//!
//! The format is a versioned key-value text document. All floats are stored
//! as the hex of their IEEE 754 bits, so a save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{Activation, DenseNet, Head, Layer};
use crate::optim::{AdamState, PlateauScheduler};

const VERSION_TAG: &str = "fastcar-checkpoint v1";

fn f64_hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn parse_f64_hex(raw: &str) -> Result<f64> {
    u64::from_str_radix(raw, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::Parse(format!("bad f64 bits '{raw}'")))
}

fn vec_hex(values: &[f64]) -> String {
    values.iter().map(|v| f64_hex(*v)).collect::<Vec<_>>().join(" ")
}

fn parse_vec_hex(raw: &str) -> Result<Vec<f64>> {
    raw.split_whitespace().map(parse_f64_hex).collect()
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Identity => "identity",
    }
}

fn parse_activation(raw: &str) -> Result<Activation> {
    match raw {
        "relu" => Ok(Activation::Relu),
        "identity" => Ok(Activation::Identity),
        other => Err(Error::Parse(format!("unknown activation '{other}'"))),
    }
}

pub fn save(
    path: &Path,
    net: &DenseNet,
    adam: &AdamState,
    sched: &PlateauScheduler,
) -> Result<()> {
    let mut doc = String::new();
    let _ = writeln!(doc, "{VERSION_TAG}");
    let _ = writeln!(doc, "input_dim = {}", net.input_dim);
    let _ = writeln!(doc, "layers = {}", net.layers.len());
    for (i, l) in net.layers.iter().enumerate() {
        let _ = writeln!(
            doc,
            "layer{i} = {} {} {}",
            l.in_dim,
            l.out_dim,
            activation_name(l.activation)
        );
        let _ = writeln!(doc, "layer{i}.weights = {}", vec_hex(&l.weights));
        let _ = writeln!(doc, "layer{i}.bias = {}", vec_hex(&l.bias));
    }
    let _ = writeln!(doc, "heads = {}", net.heads.len());
    for (i, h) in net.heads.iter().enumerate() {
        let _ = writeln!(
            doc,
            "head{i} = {} {} {} {}",
            h.name,
            h.layer.in_dim,
            h.layer.out_dim,
            activation_name(h.layer.activation)
        );
        let _ = writeln!(doc, "head{i}.weights = {}", vec_hex(&h.layer.weights));
        let _ = writeln!(doc, "head{i}.bias = {}", vec_hex(&h.layer.bias));
    }
    let (m, v) = adam.moments();
    let _ = writeln!(doc, "adam.step = {}", adam.step_count());
    let _ = writeln!(doc, "adam.lr = {}", f64_hex(adam.lr));
    let _ = writeln!(doc, "adam.weight_decay = {}", f64_hex(adam.weight_decay));
    let _ = writeln!(doc, "adam.beta1 = {}", f64_hex(adam.beta1));
    let _ = writeln!(doc, "adam.beta2 = {}", f64_hex(adam.beta2));
    let _ = writeln!(doc, "adam.epsilon = {}", f64_hex(adam.epsilon));
    let _ = writeln!(doc, "adam.m = {}", vec_hex(m));
    let _ = writeln!(doc, "adam.v = {}", vec_hex(v));
    let _ = writeln!(doc, "sched.factor = {}", f64_hex(sched.factor));
    let _ = writeln!(doc, "sched.patience = {}", sched.patience);
    let _ = writeln!(doc, "sched.min_lr = {}", f64_hex(sched.min_lr));
    let _ = writeln!(doc, "sched.best_metric = {}", f64_hex(sched.best_metric()));
    let _ = writeln!(
        doc,
        "sched.epochs_since_improvement = {}",
        sched.epochs_since_improvement()
    );
    std::fs::write(path, doc)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(DenseNet, AdamState, PlateauScheduler)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let tag = lines.next().unwrap_or_default();
    if tag != VERSION_TAG {
        return Err(Error::Parse(format!(
            "unsupported checkpoint version '{tag}', expected '{VERSION_TAG}'"
        )));
    }
    let mut fields = std::collections::BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected 'key = value', got '{line}'")))?;
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }
    let get = |key: &str| -> Result<&String> {
        fields
            .get(key)
            .ok_or_else(|| Error::Parse(format!("missing checkpoint field '{key}'")))
    };
    let usize_field = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::Parse(format!("field '{key}': bad integer")))
    };

    let input_dim = usize_field("input_dim")?;
    let n_layers = usize_field("layers")?;
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let meta = get(&format!("layer{i}"))?;
        let parts: Vec<&str> = meta.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("layer{i}: bad descriptor '{meta}'")));
        }
        let layer = Layer {
            in_dim: parts[0]
                .parse()
                .map_err(|_| Error::Parse(format!("layer{i}: bad in_dim")))?,
            out_dim: parts[1]
                .parse()
                .map_err(|_| Error::Parse(format!("layer{i}: bad out_dim")))?,
            activation: parse_activation(parts[2])?,
            weights: parse_vec_hex(get(&format!("layer{i}.weights"))?)?,
            bias: parse_vec_hex(get(&format!("layer{i}.bias"))?)?,
        };
        if layer.weights.len() != layer.in_dim * layer.out_dim
            || layer.bias.len() != layer.out_dim
        {
            return Err(Error::Parse(format!("layer{i}: shape mismatch")));
        }
        layers.push(layer);
    }
    let n_heads = usize_field("heads")?;
    let mut heads = Vec::with_capacity(n_heads);
    for i in 0..n_heads {
        let meta = get(&format!("head{i}"))?;
        let parts: Vec<&str> = meta.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(Error::Parse(format!("head{i}: bad descriptor '{meta}'")));
        }
        let layer = Layer {
            in_dim: parts[1]
                .parse()
                .map_err(|_| Error::Parse(format!("head{i}: bad in_dim")))?,
            out_dim: parts[2]
                .parse()
                .map_err(|_| Error::Parse(format!("head{i}: bad out_dim")))?,
            activation: parse_activation(parts[3])?,
            weights: parse_vec_hex(get(&format!("head{i}.weights"))?)?,
            bias: parse_vec_hex(get(&format!("head{i}.bias"))?)?,
        };
        if layer.weights.len() != layer.in_dim * layer.out_dim
            || layer.bias.len() != layer.out_dim
        {
            return Err(Error::Parse(format!("head{i}: shape mismatch")));
        }
        heads.push(Head {
            name: parts[0].to_string(),
            layer,
        });
    }
    let net = DenseNet {
        input_dim,
        layers,
        heads,
    };

    let adam = AdamState::from_parts(
        parse_vec_hex(get("adam.m")?)?,
        parse_vec_hex(get("adam.v")?)?,
        get("adam.step")?
            .parse()
            .map_err(|_| Error::Parse("adam.step: bad integer".into()))?,
        parse_f64_hex(get("adam.lr")?)?,
        parse_f64_hex(get("adam.weight_decay")?)?,
        parse_f64_hex(get("adam.beta1")?)?,
        parse_f64_hex(get("adam.beta2")?)?,
        parse_f64_hex(get("adam.epsilon")?)?,
    )?;
    if adam.moments().0.len() != net.param_count() {
        return Err(Error::Parse("optimizer state does not match network shape".into()));
    }

    let sched = PlateauScheduler::from_parts(
        parse_f64_hex(get("sched.factor")?)?,
        usize_field("sched.patience")?,
        parse_f64_hex(get("sched.min_lr")?)?,
        parse_f64_hex(get("sched.best_metric")?)?,
        usize_field("sched.epochs_since_improvement")?,
    );
    Ok((net, adam, sched))
}
