//! Invertible hybrid-label codec.
//!
//! A hybrid label is a single real value that encodes both a sample's class
//! and its regression label. Each class's observed label range is shifted by a
//! class-specific constant so that the shifted ranges become pairwise disjoint
//! intervals, the whole arrangement is centered about zero, and an optional
//! global scale factor shrinks everything uniformly. Decoding is interval
//! membership (nearest interval for out-of-range predictions) followed by the
//! exact algebraic inverse of the shift.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::LabeledSample;
use crate::error::{Error, Result};

/// Observed regression-label range of one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRange {
    pub class_id: usize,
    pub lo: f64,
    pub hi: f64,
}

/// A value in hybrid-label space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridLabel(pub f64);

/// The hybrid-label codec: per-class additive offsets, the resulting disjoint
/// intervals in hybrid space, the global centering constant, and a uniform
/// scale factor.
///
/// Encoding is `value = (y + offset[c] - center) * scale`; `intervals` caches
/// the image of each class's original range under that map.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    offsets: BTreeMap<usize, f64>,
    intervals: BTreeMap<usize, (f64, f64)>,
    center: f64,
    scale: f64,
    margin: f64,
}

/// Min/max regression label per class present in `samples`.
pub fn compute_class_ranges(samples: &[LabeledSample]) -> Result<BTreeMap<usize, ClassRange>> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut ranges: BTreeMap<usize, ClassRange> = BTreeMap::new();
    for s in samples {
        ranges
            .entry(s.class_id)
            .and_modify(|r| {
                r.lo = r.lo.min(s.y);
                r.hi = r.hi.max(s.y);
            })
            .or_insert(ClassRange {
                class_id: s.class_id,
                lo: s.y,
                hi: s.y,
            });
    }
    Ok(ranges)
}

/// Choose class offsets by stacking the class ranges in ascending class-id
/// order, consecutive intervals separated by exactly `margin`, then center the
/// arrangement about zero. The returned spec has scale 1.
pub fn solve_offsets(ranges: &BTreeMap<usize, ClassRange>, margin: f64) -> Result<TransformSpec> {
    if ranges.is_empty() {
        return Err(Error::NoSamples);
    }
    if !margin.is_finite() || margin < 0.0 {
        return Err(Error::InvalidMargin(margin));
    }
    if margin == 0.0 && ranges.len() >= 2 {
        return Err(Error::DegenerateMargin);
    }
    for r in ranges.values() {
        if !(r.lo.is_finite() && r.hi.is_finite()) || r.lo > r.hi {
            return Err(Error::InvalidConfig(format!(
                "class {} range ({}, {}) must satisfy lo <= hi",
                r.class_id, r.lo, r.hi
            )));
        }
    }

    let mut offsets = BTreeMap::new();
    let mut stacked = BTreeMap::new();
    let first_lo = ranges.values().next().expect("nonempty").lo;
    let mut cursor = first_lo;
    let mut stack_hi = first_lo;
    for (&class_id, r) in ranges {
        offsets.insert(class_id, cursor - r.lo);
        let hi = cursor + (r.hi - r.lo);
        stacked.insert(class_id, (cursor, hi));
        stack_hi = hi;
        cursor = hi + margin;
    }
    let center = (first_lo + stack_hi) / 2.0;
    let intervals = stacked
        .into_iter()
        .map(|(c, (lo, hi))| (c, (lo - center, hi - center)))
        .collect();
    Ok(TransformSpec {
        offsets,
        intervals,
        center,
        scale: 1.0,
        margin,
    })
}

impl TransformSpec {
    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn offsets(&self) -> &BTreeMap<usize, f64> {
        &self.offsets
    }

    /// Class intervals in hybrid space, ascending class id.
    pub fn intervals(&self) -> &BTreeMap<usize, (f64, f64)> {
        &self.intervals
    }

    pub fn n_classes(&self) -> usize {
        self.intervals.len()
    }

    /// Encode a regression label of the given class.
    pub fn transform(&self, y: f64, class_id: usize) -> Result<HybridLabel> {
        let offset = self
            .offsets
            .get(&class_id)
            .ok_or(Error::UnknownClass(class_id))?;
        Ok(HybridLabel((y + offset - self.center) * self.scale))
    }

    /// Exact algebraic inverse of [`transform`](Self::transform) for a known class.
    pub fn inverse_transform(&self, h: HybridLabel, class_id: usize) -> Result<f64> {
        let offset = self
            .offsets
            .get(&class_id)
            .ok_or(Error::UnknownClass(class_id))?;
        Ok(h.0 / self.scale - offset + self.center)
    }

    /// Recover `(class, y)` from a hybrid value. Values inside an interval
    /// decode to that class; values outside decode to the class whose interval
    /// boundary is nearest, ties resolving to the lower class id.
    pub fn decode(&self, h: HybridLabel) -> (usize, f64) {
        assert!(!self.intervals.is_empty(), "decode on empty TransformSpec");
        let mut best_class = 0;
        let mut best_dist = f64::INFINITY;
        for (&class_id, &(lo, hi)) in &self.intervals {
            let dist = if h.0 < lo {
                lo - h.0
            } else if h.0 > hi {
                h.0 - hi
            } else {
                0.0
            };
            if dist < best_dist {
                best_dist = dist;
                best_class = class_id;
            }
        }
        let y = self
            .inverse_transform(h, best_class)
            .expect("interval classes always have offsets");
        (best_class, y)
    }

    /// Uniformly shrink the hybrid label space by `factor` in (0, 1).
    /// Disjointness, centering, and invertibility are preserved; the hybrid
    /// gap between intervals shrinks proportionally.
    pub fn shrink(&self, factor: f64) -> Result<TransformSpec> {
        if !factor.is_finite() || factor <= 0.0 || factor >= 1.0 {
            return Err(Error::InvalidShrinkFactor(factor));
        }
        Ok(TransformSpec {
            offsets: self.offsets.clone(),
            intervals: self
                .intervals
                .iter()
                .map(|(&c, &(lo, hi))| (c, (lo * factor, hi * factor)))
                .collect(),
            center: self.center,
            scale: self.scale * factor,
            margin: self.margin,
        })
    }

    /// Check the structural invariants: matching class sets, positive scale,
    /// intervals stacked in class-id order with gaps of at least
    /// `margin * scale`, and centering about zero.
    pub fn validate(&self) -> Result<()> {
        if self.intervals.is_empty() {
            return Err(Error::NoSamples);
        }
        let same_keys = self.offsets.len() == self.intervals.len()
            && self.offsets.keys().zip(self.intervals.keys()).all(|(a, b)| a == b);
        if !same_keys {
            return Err(Error::Parse("offsets and intervals list different classes".into()));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Parse(format!("scale {} must be > 0", self.scale)));
        }
        if !self.margin.is_finite() || self.margin < 0.0 {
            return Err(Error::InvalidMargin(self.margin));
        }
        let mut prev: Option<(f64, f64)> = None;
        let mut global_lo = f64::INFINITY;
        let mut global_hi = f64::NEG_INFINITY;
        for (&class_id, &(lo, hi)) in &self.intervals {
            if lo > hi {
                return Err(Error::Parse(format!("class {class_id} interval inverted")));
            }
            if let Some((_, prev_hi)) = prev {
                let gap = lo - prev_hi;
                if gap < self.margin * self.scale - 1e-12 {
                    return Err(Error::Parse(format!(
                        "interval gap {gap} before class {class_id} below margin*scale"
                    )));
                }
            }
            global_lo = global_lo.min(lo);
            global_hi = global_hi.max(hi);
            prev = Some((lo, hi));
        }
        if (global_lo + global_hi).abs() > 1e-9 {
            return Err(Error::Parse(format!(
                "intervals not centered: min {global_lo} + max {global_hi} != 0"
            )));
        }
        Ok(())
    }

    /// Serialize as a flat key-value document.
    pub fn to_document(&self) -> String {
        let mut doc = String::new();
        let offsets = self
            .offsets
            .iter()
            .map(|(c, o)| format!("{c}:{o}"))
            .collect::<Vec<_>>()
            .join(";");
        let intervals = self
            .intervals
            .iter()
            .map(|(c, (lo, hi))| format!("{c}:{lo},{hi}"))
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(doc, "offsets = {offsets}");
        let _ = writeln!(doc, "intervals = {intervals}");
        let _ = writeln!(doc, "center = {}", self.center);
        let _ = writeln!(doc, "scale = {}", self.scale);
        let _ = writeln!(doc, "margin = {}", self.margin);
        doc
    }

    /// Parse a document produced by [`to_document`](Self::to_document) and
    /// re-validate all invariants.
    pub fn from_document(text: &str) -> Result<TransformSpec> {
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected 'key = value'", i + 1)))?;
            fields.insert(key.trim(), value.trim());
        }
        let get = |key: &str| {
            fields
                .get(key)
                .copied()
                .ok_or_else(|| Error::Parse(format!("missing field '{key}'")))
        };
        let parse_f64 = |key: &str, raw: &str| {
            raw.parse::<f64>()
                .map_err(|_| Error::Parse(format!("field '{key}': bad number '{raw}'")))
        };

        let mut offsets = BTreeMap::new();
        for part in get("offsets")?.split(';').filter(|p| !p.is_empty()) {
            let (c, o) = part
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("offsets entry '{part}'")))?;
            let class_id: usize = c
                .parse()
                .map_err(|_| Error::Parse(format!("offsets class '{c}'")))?;
            offsets.insert(class_id, parse_f64("offsets", o)?);
        }
        let mut intervals = BTreeMap::new();
        for part in get("intervals")?.split(';').filter(|p| !p.is_empty()) {
            let (c, bounds) = part
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("intervals entry '{part}'")))?;
            let class_id: usize = c
                .parse()
                .map_err(|_| Error::Parse(format!("intervals class '{c}'")))?;
            let (lo, hi) = bounds
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("intervals bounds '{bounds}'")))?;
            intervals.insert(
                class_id,
                (parse_f64("intervals", lo)?, parse_f64("intervals", hi)?),
            );
        }
        let spec = TransformSpec {
            offsets,
            intervals,
            center: parse_f64("center", get("center")?)?,
            scale: parse_f64("scale", get("scale")?)?,
            margin: parse_f64("margin", get("margin")?)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(class_id: usize, y: f64) -> LabeledSample {
        LabeledSample {
            features: vec![0.0],
            class_id,
            y,
        }
    }

    fn ranges_of(pairs: &[(usize, f64, f64)]) -> BTreeMap<usize, ClassRange> {
        pairs
            .iter()
            .map(|&(class_id, lo, hi)| (class_id, ClassRange { class_id, lo, hi }))
            .collect()
    }

    /// Two overlapping classes, margin 2: stacked to A:[0,10], B:[12,22],
    /// midpoint 11, so intervals A:[-11,-1], B:[1,11] and offsets {0, +7}.
    fn two_class_spec() -> TransformSpec {
        solve_offsets(&ranges_of(&[(0, 0.0, 10.0), (1, 5.0, 15.0)]), 2.0).unwrap()
    }

    #[test]
    fn class_ranges_min_max() {
        let samples = vec![sample(0, 0.0), sample(0, 10.0), sample(1, 5.0), sample(1, 15.0)];
        let ranges = compute_class_ranges(&samples).unwrap();
        assert_eq!(ranges[&0], ClassRange { class_id: 0, lo: 0.0, hi: 10.0 });
        assert_eq!(ranges[&1], ClassRange { class_id: 1, lo: 5.0, hi: 15.0 });
    }

    #[test]
    fn class_ranges_singleton() {
        let ranges = compute_class_ranges(&[sample(0, 179.0)]).unwrap();
        assert_eq!(ranges[&0], ClassRange { class_id: 0, lo: 179.0, hi: 179.0 });
    }

    #[test]
    fn class_ranges_empty_input() {
        assert!(matches!(compute_class_ranges(&[]), Err(Error::NoSamples)));
    }

    #[test]
    fn single_class_spec_centers_the_span() {
        // Span [179, 1146] has midpoint 662.5, so the transform maps the
        // endpoints to -+483.5 and the net additive shift is -662.5.
        let spec = solve_offsets(&ranges_of(&[(0, 179.0, 1146.0)]), 2.0).unwrap();
        assert_eq!(spec.intervals()[&0], (-483.5, 483.5));
        assert_eq!(spec.transform(179.0, 0).unwrap().0, -483.5);
        assert_eq!(spec.transform(1146.0, 0).unwrap().0, 483.5);
        assert_eq!(spec.offsets()[&0] - spec.center(), -662.5);
        assert_eq!(spec.scale(), 1.0);
    }

    #[test]
    fn two_class_stacking_matches_hand_arithmetic() {
        let spec = two_class_spec();
        assert_eq!(spec.offsets()[&0], 0.0);
        assert_eq!(spec.offsets()[&1], 7.0);
        assert_eq!(spec.center(), 11.0);
        assert_eq!(spec.intervals()[&0], (-11.0, -1.0));
        assert_eq!(spec.intervals()[&1], (1.0, 11.0));
    }

    #[test]
    fn transform_examples() {
        let spec = two_class_spec();
        assert_eq!(spec.transform(5.0, 1).unwrap().0, 1.0);
        assert_eq!(spec.transform(10.0, 0).unwrap().0, -1.0);
        assert!(matches!(spec.transform(1.0, 9), Err(Error::UnknownClass(9))));
    }

    #[test]
    fn inverse_transform_examples() {
        let spec = two_class_spec();
        assert_eq!(spec.inverse_transform(HybridLabel(1.0), 1).unwrap(), 5.0);
        let single = solve_offsets(&ranges_of(&[(3, 7.0, 9.0)]), 0.0).unwrap();
        let recovered = single.inverse_transform(HybridLabel(0.0), 3).unwrap();
        assert_eq!(recovered, single.center() - single.offsets()[&3]);
    }

    #[test]
    fn decode_inside_interval() {
        let spec = two_class_spec();
        assert_eq!(spec.decode(HybridLabel(-5.0)).0, 0);
        assert_eq!(spec.decode(HybridLabel(3.0)).0, 1);
    }

    #[test]
    fn decode_tie_resolves_to_lower_class() {
        // h = 0 sits exactly between A's hi (-1) and B's lo (1).
        let spec = two_class_spec();
        let (class, y) = spec.decode(HybridLabel(0.0));
        assert_eq!(class, 0);
        assert_eq!(y, 11.0);
    }

    #[test]
    fn decode_far_outside_takes_nearest_boundary() {
        let spec = two_class_spec();
        let (class, y) = spec.decode(HybridLabel(100.0));
        assert_eq!(class, 1);
        assert_eq!(y, 104.0);
    }

    #[test]
    fn degenerate_margin_rejected_for_multiple_classes() {
        let err = solve_offsets(&ranges_of(&[(0, 0.0, 1.0), (1, 2.0, 3.0)]), 0.0);
        assert!(matches!(err, Err(Error::DegenerateMargin)));
        // A single class decodes unambiguously even with margin 0.
        assert!(solve_offsets(&ranges_of(&[(0, 0.0, 1.0)]), 0.0).is_ok());
    }

    #[test]
    fn negative_margin_rejected() {
        let err = solve_offsets(&ranges_of(&[(0, 0.0, 1.0)]), -1.0);
        assert!(matches!(err, Err(Error::InvalidMargin(_))));
    }

    #[test]
    fn empty_ranges_rejected() {
        assert!(matches!(solve_offsets(&BTreeMap::new(), 2.0), Err(Error::NoSamples)));
    }

    #[test]
    fn shrink_composes_and_scales_intervals() {
        let spec = two_class_spec();
        let half = spec.shrink(0.5).unwrap();
        let quarter = half.shrink(0.5).unwrap();
        assert_eq!(quarter.scale(), 0.25);
        assert_eq!(half.intervals()[&0], (-5.5, -0.5));
        assert_eq!(half.intervals()[&1], (0.5, 5.5));
        for bad in [0.0, 1.0, -0.5, 2.0, f64::NAN] {
            assert!(matches!(spec.shrink(bad), Err(Error::InvalidShrinkFactor(_))));
        }
    }

    #[test]
    fn round_trip_exact_after_shrink() {
        let spec = two_class_spec().shrink(0.5).unwrap();
        let mut state = 0x1234_5678u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let class_id = if next() < 0.5 { 0 } else { 1 };
            let (lo, hi) = if class_id == 0 { (0.0, 10.0) } else { (5.0, 15.0) };
            let y = lo + next() * (hi - lo);
            let h = spec.transform(y, class_id).unwrap();
            let (decoded_class, decoded_y) = spec.decode(h);
            assert_eq!(decoded_class, class_id);
            assert!((decoded_y - y).abs() <= 1e-9, "y {y} decoded {decoded_y}");
        }
    }

    #[test]
    fn singleton_range_decodes_via_point_interval() {
        let spec = solve_offsets(&ranges_of(&[(0, 5.0, 5.0), (1, 5.0, 5.0)]), 2.0).unwrap();
        let h = spec.transform(5.0, 1).unwrap();
        assert_eq!(spec.decode(h), (1, 5.0));
    }

    #[test]
    fn sparse_class_ids_stack_in_ascending_order() {
        let spec =
            solve_offsets(&ranges_of(&[(7, 0.0, 1.0), (2, 10.0, 11.0), (40, 3.0, 4.0)]), 1.0)
                .unwrap();
        let ids: Vec<usize> = spec.intervals().keys().copied().collect();
        assert_eq!(ids, vec![2, 7, 40]);
        let positions: Vec<f64> = spec.intervals().values().map(|iv| iv.0).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn document_round_trip_is_exact() {
        let spec = two_class_spec().shrink(0.3).unwrap();
        let doc = spec.to_document();
        let parsed = TransformSpec::from_document(&doc).unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn document_field_names_are_stable() {
        let doc = two_class_spec().to_document();
        for key in ["offsets", "intervals", "center", "scale", "margin"] {
            assert!(doc.lines().any(|l| l.starts_with(&format!("{key} ="))), "missing {key}");
        }
    }

    #[test]
    fn malformed_documents_are_rejected() {
        assert!(TransformSpec::from_document("").is_err());
        assert!(TransformSpec::from_document("offsets = 0:1\nscale = 1").is_err());
        let valid = two_class_spec().to_document();
        let broken = valid.replace("scale = 1", "scale = -2");
        assert!(TransformSpec::from_document(&broken).is_err());
    }

    /// Random overlapping range configurations: up to 20 classes, singleton
    /// ranges allowed, positive margin.
    fn arb_ranges() -> impl Strategy<Value = (BTreeMap<usize, ClassRange>, f64)> {
        let class = (-1.0e4..1.0e4f64, 0.0..1.0e3f64);
        (proptest::collection::vec(class, 1..=20), 0.01..10.0f64).prop_map(|(raw, margin)| {
            let ranges = raw
                .into_iter()
                .enumerate()
                .map(|(class_id, (lo, width))| {
                    (class_id, ClassRange { class_id, lo, hi: lo + width })
                })
                .collect();
            (ranges, margin)
        })
    }

    proptest! {
        #[test]
        fn prop_round_trip((ranges, margin) in arb_ranges(), t in 0.0..=1.0f64, shrink in proptest::option::of(0.05..0.95f64)) {
            let mut spec = solve_offsets(&ranges, margin).unwrap();
            if let Some(f) = shrink {
                spec = spec.shrink(f).unwrap();
            }
            for r in ranges.values() {
                let y = r.lo + t * (r.hi - r.lo);
                let h = spec.transform(y, r.class_id).unwrap();
                let (class, decoded) = spec.decode(h);
                prop_assert_eq!(class, r.class_id);
                prop_assert!((decoded - y).abs() <= 1e-9);
            }
        }

        #[test]
        fn prop_disjoint_centered_monotone((ranges, margin) in arb_ranges()) {
            let spec = solve_offsets(&ranges, margin).unwrap();
            spec.validate().unwrap();
            let intervals: Vec<(f64, f64)> = spec.intervals().values().copied().collect();
            for pair in intervals.windows(2) {
                let gap = pair[1].0 - pair[0].1;
                prop_assert!(gap >= margin * spec.scale() - 1e-12);
            }
            let min_lo = intervals.iter().map(|iv| iv.0).fold(f64::INFINITY, f64::min);
            let max_hi = intervals.iter().map(|iv| iv.1).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((min_lo + max_hi).abs() <= 1e-9);
        }

        #[test]
        fn prop_decode_total_and_deterministic((ranges, margin) in arb_ranges(), h in -2.0e4..2.0e4f64) {
            let spec = solve_offsets(&ranges, margin).unwrap();
            let first = spec.decode(HybridLabel(h));
            let second = spec.decode(HybridLabel(h));
            prop_assert_eq!(first, second);
            prop_assert!(spec.offsets().contains_key(&first.0));
            prop_assert!(first.1.is_finite());
        }
    }
}
