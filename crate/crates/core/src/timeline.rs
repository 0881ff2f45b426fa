//! Event times and the piecewise-constant covariate path they are observed with.
//!
//! A timeline covers `(0, horizon]`. The covariate path is a list of updates;
//! the value set at an update time only takes effect strictly after it, so a
//! query at time `t` returns the most recent update strictly before `t`.

use serde::{Deserialize, Serialize};

use crate::dictionary::Atom;
use crate::error::{Error, Result};
use crate::likelihood::SegmentTable;

#[derive(Clone, Debug, PartialEq)]
pub struct EventTimeline {
    horizon: f64,
    jump_times: Vec<f64>,
    update_times: Vec<f64>,
    /// Row-major, one row of `dim` values per update.
    values: Vec<f64>,
    dim: usize,
}

/// Interval `(start, end]` on which the covariate is constant and no jump
/// happens except possibly at `end`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSegment {
    pub start: f64,
    pub end: f64,
    pub update: usize,
    pub jump: bool,
}

impl PathSegment {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

/// Validates and assembles a timeline.
///
/// Updates and jumps may arrive unsorted; they are sorted before the
/// monotonicity check, so only duplicated times are rejected. Update times at
/// or below zero are moved to zero. Updates at or after the horizon cannot
/// affect `(0, horizon]` and are dropped.
pub fn build_timeline(updates: Vec<(f64, Vec<f64>)>, jumps: Vec<f64>, horizon: f64) -> Result<EventTimeline> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let mut updates: Vec<(f64, Vec<f64>)> =
        updates.into_iter().map(|(t, x)| (if t <= 0.0 { 0.0 } else { t }, x)).filter(|(t, _)| *t < horizon).collect();
    if updates.is_empty() {
        return Err(Error::EmptyUpdates);
    }
    updates.sort_by(|a, b| a.0.total_cmp(&b.0));
    if updates[0].0 != 0.0 {
        return Err(Error::InvalidParameter("first covariate update must be at time 0".into()));
    }
    let dim = updates[0].1.len();
    if dim == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let mut update_times = Vec::with_capacity(updates.len());
    let mut values = Vec::with_capacity(updates.len() * dim);
    for (i, (t, x)) in updates.into_iter().enumerate() {
        if x.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite covariate at update {i}")));
        }
        if i > 0 && t <= update_times[i - 1] {
            return Err(Error::NonMonotoneTimes { what: "covariate update", index: i });
        }
        update_times.push(t);
        values.extend_from_slice(&x);
    }

    let mut jump_times = jumps;
    jump_times.sort_by(|a, b| a.total_cmp(b));
    for (i, &t) in jump_times.iter().enumerate() {
        if !(t > 0.0 && t <= horizon) {
            return Err(Error::OutOfRange { t, horizon });
        }
        if i > 0 && t <= jump_times[i - 1] {
            return Err(Error::NonMonotoneTimes { what: "jump", index: i });
        }
    }
    Ok(EventTimeline { horizon, jump_times, update_times, values, dim })
}

impl EventTimeline {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_updates(&self) -> usize {
        self.update_times.len()
    }

    pub fn update_time(&self, i: usize) -> f64 {
        self.update_times[i]
    }

    pub fn update_values(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn updates(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.update_times.iter().zip(self.values.chunks_exact(self.dim)).map(|(&t, x)| (t, x))
    }

    /// Index of the last update strictly before `t` (for `t > 0`).
    fn update_before(&self, t: f64) -> usize {
        self.update_times.partition_point(|&u| u < t) - 1
    }

    /// Left-continuous covariate value at `t`.
    pub fn covariate_at(&self, t: f64) -> Result<&[f64]> {
        if !(t > 0.0 && t <= self.horizon) {
            return Err(Error::OutOfRange { t, horizon: self.horizon });
        }
        Ok(self.update_values(self.update_before(t)))
    }

    /// Refinement of `(0, horizon]` by update and jump times.
    pub fn segments(&self) -> Vec<PathSegment> {
        let mut out = Vec::with_capacity(self.update_times.len() + self.jump_times.len() + 1);
        let mut start = 0.0;
        let mut update = 0usize;
        let mut next_update = 1usize;
        let mut next_jump = 0usize;
        while start < self.horizon {
            let tu = self.update_times.get(next_update).copied().unwrap_or(f64::INFINITY);
            let tj = self.jump_times.get(next_jump).copied().unwrap_or(f64::INFINITY);
            let end = tu.min(tj).min(self.horizon);
            let jump = tj == end;
            out.push(PathSegment { start, end, update, jump });
            if jump {
                next_jump += 1;
            }
            if tu == end {
                update = next_update;
                next_update += 1;
            }
            start = end;
        }
        out
    }

    /// Length of time each update is in force within `(0, horizon]`.
    pub fn update_durations(&self) -> Vec<f64> {
        (0..self.update_times.len())
            .map(|i| {
                let end = self.update_times.get(i + 1).copied().unwrap_or(self.horizon);
                end.min(self.horizon) - self.update_times[i]
            })
            .collect()
    }

    /// Sub-timeline on `(start, end]`, re-based so that `start` becomes 0.
    pub fn window(&self, start: f64, end: f64) -> Result<EventTimeline> {
        if !(start >= 0.0 && end > start && end <= self.horizon) {
            return Err(Error::InvalidParameter(format!(
                "window ({start}, {end}] is not inside (0, {}]",
                self.horizon
            )));
        }
        let first = self.update_times.partition_point(|&u| u <= start) - 1;
        let mut updates = vec![(0.0, self.update_values(first).to_vec())];
        for i in first + 1..self.update_times.len() {
            let t = self.update_times[i];
            if t >= end {
                break;
            }
            updates.push((t - start, self.update_values(i).to_vec()));
        }
        let jumps = self.jump_times.iter().filter(|&&t| t > start && t <= end).map(|&t| t - start).collect();
        build_timeline(updates, jumps, end - start)
    }

    /// Window ending at the `n`-th jump (1-based), as used for a training sample.
    pub fn head_jumps(&self, n: usize) -> Result<EventTimeline> {
        if n == 0 || n > self.jump_times.len() {
            return Err(Error::InvalidParameter(format!("cannot take {n} of {} jumps", self.jump_times.len())));
        }
        self.window(0.0, self.jump_times[n - 1])
    }

    /// `self` followed by `other` shifted by `self.horizon()`.
    pub fn concat(&self, other: &EventTimeline) -> Result<EventTimeline> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let shift = self.horizon;
        let mut updates: Vec<(f64, Vec<f64>)> = self.updates().map(|(t, x)| (t, x.to_vec())).collect();
        let mut rest = other.updates().map(|(t, x)| (t + shift, x.to_vec())).peekable();
        // a window's first update only restates the value already in force
        if let (Some(last), Some(first)) = (updates.last(), rest.peek()) {
            if last.1 == first.1 {
                rest.next();
            }
        }
        updates.extend(rest);
        let mut jumps = self.jump_times.clone();
        jumps.extend(other.jump_times.iter().map(|t| t + shift));
        build_timeline(updates, jumps, shift + other.horizon)
    }

    /// Same path with every covariate vector replaced by `f(x)`.
    pub fn map_covariates<F>(&self, mut f: F) -> Result<EventTimeline>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let updates = self.updates().map(|(t, x)| (t, f(x))).collect();
        build_timeline(updates, self.jump_times.clone(), self.horizon)
    }
}

/// Winsorization caps learned on one sample and reusable on another.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessTransform {
    pub caps: Vec<f64>,
    pub scales: Vec<f64>,
    /// Coordinates whose quantile was zero; they are passed through unchanged.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<usize>,
}

impl PreprocessTransform {
    pub fn identity(dim: usize) -> Self {
        PreprocessTransform { caps: vec![1.0; dim], scales: vec![1.0; dim], degenerate: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.caps.len()
    }

    pub fn apply_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.caps.iter().zip(&self.scales))
            .enumerate()
            .map(|(k, (&v, (&cap, &scale)))| if self.degenerate.contains(&k) { v } else { v.clamp(-cap, cap) / scale })
            .collect()
    }

    pub fn apply(&self, timeline: &EventTimeline) -> Result<EventTimeline> {
        if timeline.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: timeline.dim() });
        }
        timeline.map_covariates(|x| self.apply_point(x))
    }
}

/// Smallest value whose cumulative weight reaches `q` of the total.
pub(crate) fn weighted_quantile(mut items: Vec<(f64, f64)>, q: f64) -> f64 {
    items.retain(|&(_, w)| w > 0.0);
    if items.is_empty() {
        return 0.0;
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = items.iter().map(|&(_, w)| w).sum();
    let target = q * total;
    let mut acc = 0.0;
    for &(v, w) in &items {
        acc += w;
        // relative slack so that e.g. 0.9 + 0.05 reaching 0.95 is not lost to rounding
        if acc >= target * (1.0 - 1e-12) {
            return v;
        }
    }
    items.last().map(|&(v, _)| v).unwrap_or(0.0)
}

/// Clips each coordinate at the time-weighted `q`-quantile of its absolute
/// value and divides by that quantile, mapping the path into `[-1, 1]`.
pub fn winsorize_standardize(timeline: &EventTimeline, q: f64) -> Result<(EventTimeline, PreprocessTransform)> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidParameter(format!("quantile must be in (0, 1], got {q}")));
    }
    let durations = timeline.update_durations();
    let dim = timeline.dim();
    let mut caps = Vec::with_capacity(dim);
    let mut degenerate = Vec::new();
    for k in 0..dim {
        let items = timeline.updates().zip(&durations).map(|((_, x), &d)| (x[k].abs(), d)).collect();
        let cap = weighted_quantile(items, q);
        if cap > 0.0 {
            caps.push(cap);
        } else {
            degenerate.push(k);
            caps.push(f64::MAX);
        }
    }
    let scales = caps.iter().enumerate().map(|(k, &c)| if degenerate.contains(&k) { 1.0 } else { c }).collect();
    let transform = PreprocessTransform { caps, scales, degenerate };
    Ok((transform.apply(timeline)?, transform))
}

/// Root time-average of the squared atom along the path.
pub fn empirical_l2_weight(timeline: &EventTimeline, atom: &Atom) -> Result<f64> {
    let table = SegmentTable::cox(timeline);
    let column = table.column(atom);
    let sum: f64 = column.iter().zip(table.segments()).map(|(v, s)| v * v * s.len()).sum();
    let w = (sum / timeline.horizon()).sqrt();
    if w > 0.0 {
        Ok(w)
    } else {
        Err(Error::ZeroNormAtom(atom.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_segment() -> EventTimeline {
        build_timeline(vec![(0.0, vec![1.0]), (2.0, vec![5.0])], vec![3.0], 4.0).unwrap()
    }

    #[test]
    fn minimal_timeline() {
        let tl = build_timeline(vec![(0.0, vec![1.0])], vec![0.5], 1.0).unwrap();
        assert_eq!(tl.n_jumps(), 1);
        assert_eq!(tl.dim(), 1);
    }

    #[test]
    fn duplicate_jumps_rejected() {
        let err = build_timeline(vec![(0.0, vec![1.0])], vec![0.5, 0.5], 1.0).unwrap_err();
        assert!(matches!(err, Error::NonMonotoneTimes { what: "jump", .. }));
    }

    #[test]
    fn duplicate_updates_rejected() {
        let err = build_timeline(vec![(0.0, vec![1.0]), (0.3, vec![2.0]), (0.3, vec![1.0])], vec![], 1.0).unwrap_err();
        assert!(matches!(err, Error::NonMonotoneTimes { what: "covariate update", .. }));
    }

    #[test]
    fn dimension_and_range_errors() {
        assert!(matches!(
            build_timeline(vec![(0.0, vec![1.0]), (0.5, vec![1.0, 2.0])], vec![], 1.0),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
        assert!(matches!(build_timeline(vec![], vec![0.5], 1.0), Err(Error::EmptyUpdates)));
        assert!(matches!(build_timeline(vec![(0.0, vec![1.0])], vec![1.5], 1.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(build_timeline(vec![(0.0, vec![1.0])], vec![0.0], 1.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn negative_first_update_moves_to_zero_and_unsorted_input_is_sorted() {
        let tl = build_timeline(vec![(2.0, vec![5.0]), (-1.0, vec![1.0])], vec![3.0, 1.0], 4.0).unwrap();
        assert_eq!(tl.update_time(0), 0.0);
        assert_eq!(tl.jump_times(), &[1.0, 3.0]);
    }

    #[test]
    fn covariate_is_left_continuous() {
        let tl = two_segment();
        assert_eq!(tl.covariate_at(1.0).unwrap(), &[1.0]);
        assert_eq!(tl.covariate_at(2.0).unwrap(), &[1.0]);
        assert_eq!(tl.covariate_at(2.5).unwrap(), &[5.0]);
        assert!(matches!(tl.covariate_at(0.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(tl.covariate_at(4.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn segments_split_at_updates_and_jumps() {
        let segs = two_segment().segments();
        let ends: Vec<_> = segs.iter().map(|s| (s.start, s.end, s.update, s.jump)).collect();
        assert_eq!(ends, vec![(0.0, 2.0, 0, false), (2.0, 3.0, 1, true), (3.0, 4.0, 1, false)]);
    }

    #[test]
    fn jump_at_update_time_uses_previous_value() {
        let tl = build_timeline(vec![(0.0, vec![1.0]), (2.0, vec![5.0])], vec![2.0], 3.0).unwrap();
        let segs = tl.segments();
        assert_eq!(segs.len(), 2);
        assert!(segs[0].jump && segs[0].update == 0 && segs[0].end == 2.0);
        assert!(!segs[1].jump && segs[1].update == 1);
    }

    #[test]
    fn window_and_concat_roundtrip() {
        let tl =
            build_timeline(vec![(0.0, vec![1.0]), (1.0, vec![2.0]), (2.5, vec![3.0])], vec![0.5, 1.5, 3.0, 3.5], 4.0)
                .unwrap();
        let a = tl.window(0.0, 2.0).unwrap();
        let b = tl.window(2.0, 4.0).unwrap();
        assert_eq!(a.jump_times(), &[0.5, 1.5]);
        assert_eq!(b.jump_times(), &[1.0, 1.5]);
        assert_eq!(b.update_values(0), &[2.0]);
        let joined = a.concat(&b).unwrap();
        assert_eq!(joined, tl);
    }

    #[test]
    fn winsorize_constant_and_identity() {
        let tl = build_timeline(vec![(0.0, vec![2.0, 0.5]), (1.0, vec![2.0, -1.0])], vec![1.5], 2.0).unwrap();
        let (out, tr) = winsorize_standardize(&tl, 0.95).unwrap();
        assert_eq!(tr.caps[0], 2.0);
        assert!(out.updates().all(|(_, x)| x[0] == 1.0));
        let unit = build_timeline(vec![(0.0, vec![1.0]), (1.0, vec![-0.3])], vec![1.5], 2.0).unwrap();
        let (same, tr) = winsorize_standardize(&unit, 0.95).unwrap();
        assert_eq!(tr.caps, vec![1.0]);
        assert_eq!(same, unit);
    }

    #[test]
    fn winsorize_time_weighted_quantile() {
        // value 1 for 90% of the time, 10 for the remaining 10%
        let tl = build_timeline(vec![(0.0, vec![1.0]), (9.0, vec![10.0])], vec![5.0], 10.0).unwrap();
        let (out, tr) = winsorize_standardize(&tl, 0.95).unwrap();
        assert_eq!(tr.caps, vec![10.0]);
        let scaled: Vec<f64> = out.updates().map(|(_, x)| x[0]).collect();
        assert_eq!(scaled, vec![0.1, 1.0]);
    }

    #[test]
    fn winsorize_clips_above_quantile() {
        // 3 for 97% of the time, 100 for 3%: the cap is 3 and 100 is clipped
        let tl = build_timeline(vec![(0.0, vec![-3.0]), (97.0, vec![100.0])], vec![5.0], 100.0).unwrap();
        let (out, tr) = winsorize_standardize(&tl, 0.95).unwrap();
        assert_eq!(tr.caps, vec![3.0]);
        let scaled: Vec<f64> = out.updates().map(|(_, x)| x[0]).collect();
        assert_eq!(scaled, vec![-1.0, 1.0]);
    }

    #[test]
    fn degenerate_coordinate_is_flagged() {
        let tl = build_timeline(vec![(0.0, vec![0.0, 1.0]), (9.9, vec![4.0, 1.0])], vec![1.0], 10.0).unwrap();
        let (out, tr) = winsorize_standardize(&tl, 0.95).unwrap();
        assert_eq!(tr.degenerate, vec![0]);
        assert_eq!(out.update_values(1), &[4.0, 1.0]);
    }

    #[test]
    fn l2_weights() {
        let tl = two_segment();
        assert_eq!(empirical_l2_weight(&tl, &Atom::Intercept).unwrap(), 1.0);
        let half = build_timeline(vec![(0.0, vec![0.5])], vec![1.0], 2.0).unwrap();
        assert!((empirical_l2_weight(&half, &Atom::Linear { k: 0 }).unwrap() - 0.5).abs() < 1e-15);
        let split = build_timeline(vec![(0.0, vec![0.0]), (1.0, vec![1.0])], vec![], 2.0).unwrap();
        let w = empirical_l2_weight(&split, &Atom::Linear { k: 0 }).unwrap();
        assert!((w - 0.5f64.sqrt()).abs() < 1e-15);
        let zero = build_timeline(vec![(0.0, vec![0.0])], vec![1.0], 2.0).unwrap();
        assert!(matches!(empirical_l2_weight(&zero, &Atom::Linear { k: 0 }), Err(Error::ZeroNormAtom(_))));
    }
}
