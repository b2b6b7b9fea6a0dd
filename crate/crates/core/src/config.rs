//! Run configuration: a flat key-value config document merged with
//! command-line flags (flags win), resolved before any computation and
//! serialized alongside every command's outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::data::{default_class_bands, SynthConfig};
use crate::error::{Error, Result};
use crate::pipeline::TrainConfig;

/// Fully resolved configuration for one command invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub out_dir: PathBuf,
    pub data_path: Option<PathBuf>,
    pub force: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            out_dir: PathBuf::from("out"),
            data_path: None,
            force: false,
        }
    }
}

/// Parse a flat `key = value` document. Blank lines and `#` comments are
/// skipped; duplicate keys keep the last value.
pub fn parse_kv_document(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected 'key = value'", i + 1)))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_class_ranges(raw: &str) -> Result<Vec<(f64, f64)>> {
    raw.split(';')
        .filter(|p| !p.is_empty())
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("class_ranges entry '{part}'")))?;
            let lo: f64 = lo
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("class_ranges lo '{lo}'")))?;
            let hi: f64 = hi
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("class_ranges hi '{hi}'")))?;
            Ok((lo, hi))
        })
        .collect()
}

fn format_class_ranges(ranges: &[(f64, f64)]) -> String {
    ranges
        .iter()
        .map(|(lo, hi)| format!("{lo}:{hi}"))
        .collect::<Vec<_>>()
        .join(";")
}

impl RunConfig {
    /// Apply a parsed config document on top of the defaults. Unknown keys
    /// are rejected so typos surface instead of silently using defaults.
    pub fn apply_document(&mut self, doc: &BTreeMap<String, String>) -> Result<()> {
        let mut explicit_ranges = false;
        for (key, value) in doc {
            self.apply_key(key, value, &mut explicit_ranges)?;
        }
        // A class count change re-derives the default bands unless ranges
        // were given explicitly.
        if !explicit_ranges && self.synth.class_ranges.len() != self.synth.n_classes {
            self.synth.class_ranges = default_class_bands(self.synth.n_classes);
        }
        Ok(())
    }

    pub fn apply_key(&mut self, key: &str, value: &str, explicit_ranges: &mut bool) -> Result<()> {
        let bad = |what: &str| Error::Parse(format!("key '{key}': bad {what} '{value}'"));
        match key {
            "epochs" => self.train.epochs = value.parse().map_err(|_| bad("integer"))?,
            "lr" => self.train.lr = value.parse().map_err(|_| bad("number"))?,
            "weight_decay" => self.train.weight_decay = value.parse().map_err(|_| bad("number"))?,
            "scheduler_factor" => {
                self.train.scheduler_factor = value.parse().map_err(|_| bad("number"))?
            }
            "scheduler_patience" => {
                self.train.scheduler_patience = value.parse().map_err(|_| bad("integer"))?
            }
            "grad_threshold" => {
                self.train.grad_threshold = value.parse().map_err(|_| bad("number"))?
            }
            "shrink_factor" => {
                self.train.shrink_factor = value.parse().map_err(|_| bad("number"))?
            }
            "max_label_iterations" => {
                self.train.max_label_iterations = value.parse().map_err(|_| bad("integer"))?
            }
            "margin" => self.train.margin = value.parse().map_err(|_| bad("number"))?,
            "seed" => {
                let seed: u64 = value.parse().map_err(|_| bad("integer"))?;
                self.train.seed = seed;
                self.synth.seed = seed;
            }
            "batch_size" => self.train.batch_size = value.parse().map_err(|_| bad("integer"))?,
            "classes" => self.synth.n_classes = value.parse().map_err(|_| bad("integer"))?,
            "samples_per_class" => {
                self.synth.samples_per_class = value.parse().map_err(|_| bad("integer"))?
            }
            "feature_dim" => self.synth.feature_dim = value.parse().map_err(|_| bad("integer"))?,
            "noise_sigma" => self.synth.noise_sigma = value.parse().map_err(|_| bad("number"))?,
            "class_ranges" => {
                self.synth.class_ranges = parse_class_ranges(value)?;
                *explicit_ranges = true;
            }
            "out" => self.out_dir = PathBuf::from(value),
            "data" => self.data_path = Some(PathBuf::from(value)),
            "force" => self.force = value.parse().map_err(|_| bad("bool"))?,
            other => {
                return Err(Error::InvalidConfig(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Serialize the resolved configuration for provenance.
    pub fn snapshot(&self) -> String {
        let mut doc = String::new();
        let t = &self.train;
        let s = &self.synth;
        let _ = writeln!(doc, "epochs = {}", t.epochs);
        let _ = writeln!(doc, "lr = {}", t.lr);
        let _ = writeln!(doc, "weight_decay = {}", t.weight_decay);
        let _ = writeln!(doc, "scheduler_factor = {}", t.scheduler_factor);
        let _ = writeln!(doc, "scheduler_patience = {}", t.scheduler_patience);
        let _ = writeln!(doc, "grad_threshold = {}", t.grad_threshold);
        let _ = writeln!(doc, "shrink_factor = {}", t.shrink_factor);
        let _ = writeln!(doc, "max_label_iterations = {}", t.max_label_iterations);
        let _ = writeln!(doc, "margin = {}", t.margin);
        let _ = writeln!(doc, "seed = {}", t.seed);
        let _ = writeln!(doc, "batch_size = {}", t.batch_size);
        let _ = writeln!(doc, "classes = {}", s.n_classes);
        let _ = writeln!(doc, "samples_per_class = {}", s.samples_per_class);
        let _ = writeln!(doc, "feature_dim = {}", s.feature_dim);
        let _ = writeln!(doc, "noise_sigma = {}", s.noise_sigma);
        let _ = writeln!(doc, "class_ranges = {}", format_class_ranges(&s.class_ranges));
        let _ = writeln!(doc, "out = {}", self.out_dir.display());
        if let Some(data) = &self.data_path {
            let _ = writeln!(doc, "data = {}", data.display());
        }
        let _ = writeln!(doc, "force = {}", self.force);
        doc
    }

    /// Hash of the computation-relevant fields (training and data
    /// parameters; output paths and the force flag are excluded so reruns
    /// into different directories compare equal).
    pub fn hash(&self) -> String {
        let t = &self.train;
        let s = &self.synth;
        let canonical = format!(
            "epochs={};lr={};weight_decay={};scheduler_factor={};scheduler_patience={};\
             grad_threshold={};shrink_factor={};max_label_iterations={};margin={};seed={};\
             batch_size={};classes={};samples_per_class={};feature_dim={};noise_sigma={};\
             class_ranges={}",
            t.epochs,
            t.lr,
            t.weight_decay,
            t.scheduler_factor,
            t.scheduler_patience,
            t.grad_threshold,
            t.shrink_factor,
            t.max_label_iterations,
            t.margin,
            t.seed,
            t.batch_size,
            s.n_classes,
            s.samples_per_class,
            s.feature_dim,
            s.noise_sigma,
            format_class_ranges(&s.class_ranges),
        );
        format!("{:016x}", fnv1a(canonical.as_bytes()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}
