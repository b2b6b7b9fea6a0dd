//! Synthetic dataset generation, CSV ingestion, and stratified splitting.
//!
//! Every dataset is a flat list of [`LabeledSample`]s: a feature vector, a
//! class index, and a continuous regression label in original units. The
//! synthetic generator produces class-balanced data whose features carry both
//! a class indicator block and an affine-encoded regression signal, so both
//! tasks are learnable from the same inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// One labeled datapoint: features, class index, regression label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub class_id: usize,
    pub y: f64,
}

/// Configuration for the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub feature_dim: usize,
    /// Original regression-label range per class; adjacent ranges may overlap.
    pub class_ranges: Vec<(f64, f64)>,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Span of the default label space.
pub const LABEL_LO: f64 = 179.0;
pub const LABEL_HI: f64 = 1146.0;

/// Width of each default class band.
const BAND_WIDTH: f64 = 247.0;

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: 6,
            samples_per_class: 756,
            feature_dim: 32,
            class_ranges: default_class_bands(6),
            noise_sigma: 0.02,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::InvalidConfig("n_classes must be >= 1".into()));
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidConfig("samples_per_class must be >= 1".into()));
        }
        if self.feature_dim <= self.n_classes {
            return Err(Error::InvalidConfig(format!(
                "feature_dim ({}) must exceed n_classes ({})",
                self.feature_dim, self.n_classes
            )));
        }
        if self.class_ranges.len() != self.n_classes {
            return Err(Error::InvalidConfig(format!(
                "expected {} class ranges, got {}",
                self.n_classes,
                self.class_ranges.len()
            )));
        }
        for (c, &(lo, hi)) in self.class_ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo > hi {
                return Err(Error::InvalidConfig(format!(
                    "class {c} range ({lo}, {hi}) must satisfy 0 < lo <= hi"
                )));
            }
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig("noise_sigma must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Evenly stepped, partially overlapping label bands spanning [LABEL_LO, LABEL_HI].
///
/// For six classes the bands are 247 wide and step by 144, so adjacent classes
/// overlap by 103 label units and the union covers the full span exactly.
pub fn default_class_bands(n_classes: usize) -> Vec<(f64, f64)> {
    assert!(n_classes >= 1);
    if n_classes == 1 {
        return vec![(LABEL_LO, LABEL_HI)];
    }
    let step = (LABEL_HI - LABEL_LO - BAND_WIDTH) / (n_classes - 1) as f64;
    (0..n_classes)
        .map(|i| {
            let lo = LABEL_LO + step * i as f64;
            (lo, lo + BAND_WIDTH)
        })
        .collect()
}

/// Keeps the split stream independent from the generator stream for one seed.
const SPLIT_SALT: u64 = 0x73706c_6974;

fn class_rng(seed: u64, class_id: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (class_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Generate a class-balanced synthetic dataset.
///
/// For each sample: `y` is uniform in its class range, and
/// `features = indicator(class) + g(y) * direction + noise(sigma)` where `g`
/// maps the global label span affinely onto [-1, 1] and `direction` is a
/// fixed unit vector over the non-indicator dimensions, drawn once per seed.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<LabeledSample>> {
    cfg.validate()?;
    let signal_dim = cfg.feature_dim - cfg.n_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut direction: Vec<f64> = (0..signal_dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut direction {
            *v /= norm;
        }
    }

    let global_lo = cfg.class_ranges.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let global_hi = cfg.class_ranges.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let g = |y: f64| {
        if global_hi > global_lo {
            2.0 * (y - global_lo) / (global_hi - global_lo) - 1.0
        } else {
            0.0
        }
    };

    let mut samples = Vec::with_capacity(cfg.n_classes * cfg.samples_per_class);
    for (class_id, &(lo, hi)) in cfg.class_ranges.iter().enumerate() {
        let mut crng = class_rng(cfg.seed, class_id);
        for _ in 0..cfg.samples_per_class {
            let y = if hi > lo { crng.random_range(lo..=hi) } else { lo };
            let mut features = vec![0.0; cfg.feature_dim];
            features[class_id] = 1.0;
            let gy = g(y);
            for (j, d) in direction.iter().enumerate() {
                features[cfg.n_classes + j] = gy * d;
            }
            if cfg.noise_sigma > 0.0 {
                for f in &mut features {
                    let z: f64 = crng.sample(StandardNormal);
                    *f += cfg.noise_sigma * z;
                }
            }
            samples.push(LabeledSample { features, class_id, y });
        }
    }
    Ok(samples)
}

/// Stratified 5:1:1 split. Per class: floor(n/7) samples each go to val and
/// test, the remainder to train. Shuffling is seeded and per-class.
pub fn split(
    samples: &[LabeledSample],
    seed: u64,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>, Vec<LabeledSample>)> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_class.entry(s.class_id).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (&class_id, indices) in &mut by_class {
        let n = indices.len();
        if n < 7 {
            return Err(Error::ClassTooSmall { class_id, count: n });
        }
        indices.shuffle(&mut rng);
        let n_val = n / 7;
        let n_test = n / 7;
        let n_train = n - n_val - n_test;
        for (k, &i) in indices.iter().enumerate() {
            let sample = samples[i].clone();
            if k < n_train {
                train.push(sample);
            } else if k < n_train + n_val {
                val.push(sample);
            } else {
                test.push(sample);
            }
        }
    }
    Ok((train, val, test))
}

/// Write samples as CSV with header `f0,...,f{d-1},class,y`.
pub fn save_csv(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let dim = samples[0].features.len();
    let mut out = String::new();
    for j in 0..dim {
        let _ = write!(out, "f{j},");
    }
    out.push_str("class,y\n");
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "sample has {} features, expected {dim}",
                s.features.len()
            )));
        }
        for f in &s.features {
            let _ = write!(out, "{f},");
        }
        let _ = writeln!(out, "{},{}", s.class_id, s.y);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load samples from a CSV produced by [`save_csv`] (or matching its schema).
/// The feature dimension is inferred from the header; malformed rows are
/// rejected with their line number.
pub fn load_csv(path: &Path) -> Result<Vec<LabeledSample>> {
    let text = std::fs::read_to_string(path)?;
    let csv_err = |line: usize, msg: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| csv_err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 {
        return Err(csv_err(1, format!("header needs f0..,class,y; got '{header}'")));
    }
    let dim = cols.len() - 2;
    for (j, col) in cols[..dim].iter().enumerate() {
        if *col != format!("f{j}") {
            return Err(csv_err(1, format!("expected column 'f{j}', got '{col}'")));
        }
    }
    if cols[dim] != "class" || cols[dim + 1] != "y" {
        return Err(csv_err(1, "last two columns must be 'class,y'".into()));
    }

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(csv_err(
                line_no,
                format!("expected {} fields, got {}", dim + 2, fields.len()),
            ));
        }
        let mut features = Vec::with_capacity(dim);
        for (j, raw) in fields[..dim].iter().enumerate() {
            let v: f64 = raw
                .parse()
                .map_err(|_| csv_err(line_no, format!("non-numeric cell '{raw}' in column f{j}")))?;
            if !v.is_finite() {
                return Err(csv_err(line_no, format!("non-finite value in column f{j}")));
            }
            features.push(v);
        }
        let class_id: usize = fields[dim]
            .parse()
            .map_err(|_| csv_err(line_no, format!("non-numeric class '{}'", fields[dim])))?;
        let y: f64 = fields[dim + 1]
            .parse()
            .map_err(|_| csv_err(line_no, format!("non-numeric y '{}'", fields[dim + 1])))?;
        if !y.is_finite() {
            return Err(csv_err(line_no, "non-finite y".into()));
        }
        samples.push(LabeledSample { features, class_id, y });
    }
    if samples.is_empty() {
        return Err(csv_err(1, "no data rows".into()));
    }
    Ok(samples)
}
