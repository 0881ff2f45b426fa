//! Exact log-likelihood of a log-linear intensity on a piecewise-constant path.
//!
//! On every [`PathSegment`] the covariate is constant, so both the jump sum and
//! the compensator are finite sums. A segment carries an *exposure*: its
//! length for a Cox intensity, or the integral of a multiplicative baseline
//! (the Hawkes excitation term) over it. The likelihood is then
//!
//! ```text
//! L(F) = sum_{jumps} F(x_j) - sum_{segments} exp(F(x_j)) * exposure_j
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Atom, HawkesAux, WeightScheme};
use crate::error::{Error, Result};
use crate::timeline::{EventTimeline, PathSegment};

/// Log-intensities above this are rejected instead of saturating to infinity.
pub const OVERFLOW_GUARD: f64 = 700.0;

/// Coefficients whose magnitude falls below this are dropped from a model.
pub const COEF_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SegmentTable<'a> {
    timeline: &'a EventTimeline,
    segments: Vec<PathSegment>,
    exposure: Vec<f64>,
}

impl<'a> SegmentTable<'a> {
    /// Table for a Cox intensity: exposure equals segment length.
    pub fn cox(timeline: &'a EventTimeline) -> Self {
        let segments = timeline.segments();
        let exposure = segments.iter().map(|s| s.len()).collect();
        SegmentTable { timeline, segments, exposure }
    }

    /// Table with caller-supplied exposures, one per segment of `timeline.segments()`.
    pub fn with_exposure(timeline: &'a EventTimeline, exposure: Vec<f64>) -> Result<Self> {
        let segments = timeline.segments();
        if exposure.len() != segments.len() {
            return Err(Error::DimensionMismatch { expected: segments.len(), got: exposure.len() });
        }
        if exposure.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::InvalidParameter("exposures must be finite and nonnegative".into()));
        }
        Ok(SegmentTable { timeline, segments, exposure })
    }

    pub fn timeline(&self) -> &'a EventTimeline {
        self.timeline
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn n_jumps(&self) -> usize {
        self.timeline.n_jumps()
    }

    pub fn total_exposure(&self) -> f64 {
        self.exposure.iter().sum()
    }

    pub fn covariate(&self, j: usize) -> &[f64] {
        self.timeline.update_values(self.segments[j].update)
    }

    /// History seen by a Hawkes feature on segment `j` (jumps up to its start).
    pub fn aux(&self, j: usize) -> HawkesAux<'a> {
        let at = self.segments[j].start;
        let jumps = self.timeline.jump_times();
        let upto = jumps.partition_point(|&t| t <= at);
        HawkesAux { at, jumps: &jumps[..upto] }
    }

    /// `sum_{T_j <= s} exp(-decay (s - T_j))` at every segment start `s`.
    pub fn discounted_counts(&self, decay: f64) -> Vec<f64> {
        let starts: Vec<f64> = self.segments.iter().map(|s| s.start).collect();
        discounted_counts(&starts, self.timeline.jump_times(), decay)
    }

    /// Atom values on every segment.
    pub fn column(&self, atom: &Atom) -> Vec<f64> {
        match atom {
            Atom::HawkesFeature { decay, cap } => {
                self.discounted_counts(*decay).into_iter().map(|v| v.min(*cap)).collect()
            }
            _ => (0..self.segments.len())
                .map(|j| atom.eval_covariate(self.covariate(j)).expect("covariate atom"))
                .collect(),
        }
    }

    /// Model values `F(x_j)` on every segment.
    pub fn values(&self, model: &AdditiveModel) -> Vec<f64> {
        let mut out = vec![model.offset; self.segments.len()];
        for term in &model.terms {
            let col = self.column(&term.atom);
            for (o, c) in out.iter_mut().zip(col) {
                *o += term.coef * c;
            }
        }
        out
    }
}

/// `sum_{T_j <= s} exp(-decay (s - T_j))` for every ascending anchor `s`.
pub(crate) fn discounted_counts(anchors: &[f64], jumps: &[f64], decay: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(anchors.len());
    let mut next = 0usize;
    let mut level = 0.0;
    let mut last = 0.0;
    for &s in anchors {
        while next < jumps.len() && jumps[next] <= s {
            level = level * (-decay * (jumps[next] - last)).exp() + 1.0;
            last = jumps[next];
            next += 1;
        }
        out.push(if next == 0 { 0.0 } else { level * (-decay * (s - last)).exp() });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub atom: Atom,
    pub coef: f64,
    pub weight: f64,
}

/// Offset plus a sparse weighted sum of atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveModel {
    pub dim: usize,
    pub offset: f64,
    pub terms: Vec<Term>,
    pub budget: f64,
    pub weights: WeightScheme,
}

impl AdditiveModel {
    pub fn constant(dim: usize, offset: f64) -> Self {
        AdditiveModel { dim, offset, terms: Vec::new(), budget: 0.0, weights: WeightScheme::Unit }
    }

    /// `sum w_theta |b_theta|`; the offset is not part of it.
    pub fn l1_mass(&self) -> f64 {
        self.terms.iter().map(|t| t.weight * t.coef.abs()).sum()
    }

    pub fn within_budget(&self) -> bool {
        self.l1_mass() <= self.budget + 1e-9
    }

    /// Multiplies the offset and every coefficient by `factor`.
    pub fn scale(&mut self, factor: f64) {
        self.offset *= factor;
        for t in &mut self.terms {
            t.coef *= factor;
        }
    }

    /// Adds `coef * atom`, merging with an existing equal atom.
    pub fn add_term(&mut self, atom: Atom, weight: f64, coef: f64) {
        match self.terms.iter_mut().find(|t| t.atom == atom) {
            Some(t) => t.coef += coef,
            None => self.terms.push(Term { atom, coef, weight }),
        }
    }

    pub fn prune(&mut self) {
        self.terms.retain(|t| t.coef.abs() >= COEF_FLOOR);
    }

    pub fn n_active(&self) -> usize {
        self.terms.iter().filter(|t| t.coef.abs() >= COEF_FLOOR).count()
    }

    /// Active parameter count used by AIC.
    pub fn parameter_count(&self) -> usize {
        self.terms.iter().filter(|t| t.coef.abs() >= COEF_FLOOR).map(|t| t.atom.parameter_count()).sum()
    }

    /// `F(x)`.
    pub fn eval(&self, x: &[f64], aux: Option<&HawkesAux<'_>>) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let mut v = self.offset;
        for t in &self.terms {
            v += t.coef * t.atom.eval(x, aux)?;
        }
        Ok(v)
    }

    pub fn needs_history(&self) -> bool {
        self.terms.iter().any(|t| t.atom.needs_history())
    }
}

/// Weighted point set with `D_T(F, theta) = sum_i w_i theta(x_i)`.
///
/// Points are stored per segment: the segment point with weight
/// `-exp(F) * exposure`, followed by a unit-weight jump point when the segment
/// ends in a jump. Both share the segment's covariate.
#[derive(Clone, Debug)]
pub struct SignedSample {
    segment_weight: Vec<f64>,
    jump: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplePoint {
    pub segment: usize,
    pub weight: f64,
}

impl SignedSample {
    pub fn from_values(table: &SegmentTable<'_>, values: &[f64]) -> Result<Self> {
        check_overflow(values)?;
        let segment_weight = values.iter().zip(table.exposure()).map(|(f, e)| -f.exp() * e).collect();
        let jump = table.segments().iter().map(|s| s.jump).collect();
        Ok(SignedSample { segment_weight, jump })
    }

    pub fn points(&self) -> impl Iterator<Item = SamplePoint> + '_ {
        self.segment_weight.iter().zip(&self.jump).enumerate().flat_map(|(j, (&w, &jump))| {
            std::iter::once(SamplePoint { segment: j, weight: w })
                .chain(jump.then_some(SamplePoint { segment: j, weight: 1.0 }))
        })
    }

    pub fn len(&self) -> usize {
        self.segment_weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segment_weight.is_empty()
    }

    pub fn jump_mass(&self) -> f64 {
        self.jump.iter().filter(|&&j| j).count() as f64
    }

    /// `sum_i w_i theta(x_i)` for per-segment atom values `column`.
    pub fn dot(&self, column: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&c, &w), &jump) in column.iter().zip(&self.segment_weight).zip(&self.jump) {
            acc += c * w;
            if jump {
                acc += c;
            }
        }
        acc
    }

    /// Per-segment net weights (segment and jump point merged).
    pub fn net_weights(&self) -> Vec<f64> {
        self.segment_weight.iter().zip(&self.jump).map(|(&w, &j)| if j { w + 1.0 } else { w }).collect()
    }
}

pub(crate) fn check_overflow(values: &[f64]) -> Result<()> {
    match values.iter().copied().find(|v| !(*v <= OVERFLOW_GUARD)) {
        Some(value) => Err(Error::NumericOverflow { value }),
        None => Ok(()),
    }
}

/// Log-likelihood from per-segment values `F(x_j)`.
pub fn loglik_from_values(table: &SegmentTable<'_>, values: &[f64]) -> Result<f64> {
    check_overflow(values)?;
    let segs = table.segments();
    let terms: Vec<f64> = values
        .iter()
        .zip(segs)
        .zip(table.exposure())
        .map(|((&f, s), &e)| if s.jump { f - f.exp() * e } else { -f.exp() * e })
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Deterministic tree reduction; splits do not depend on the thread count.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 4096;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    let (x, y) = rayon::join(|| pairwise_sum(a), || pairwise_sum(b));
    x + y
}

pub fn log_likelihood(model: &AdditiveModel, table: &SegmentTable<'_>) -> Result<f64> {
    loglik_from_values(table, &table.values(model))
}

pub fn signed_sample(model: &AdditiveModel, table: &SegmentTable<'_>) -> Result<SignedSample> {
    SignedSample::from_values(table, &table.values(model))
}

/// `D_T(F, theta)`.
pub fn directional_derivative(model: &AdditiveModel, table: &SegmentTable<'_>, atom: &Atom) -> Result<f64> {
    Ok(signed_sample(model, table)?.dot(&table.column(atom)))
}

/// `exp(F(x))`.
pub fn predict_intensity(model: &AdditiveModel, x: &[f64], aux: Option<&HawkesAux<'_>>) -> Result<f64> {
    Ok(model.eval(x, aux)?.exp())
}

/// Evaluates the model on several tables in parallel (order preserved).
pub fn log_likelihoods(model: &AdditiveModel, tables: &[SegmentTable<'_>]) -> Result<Vec<f64>> {
    tables.par_iter().map(|t| log_likelihood(model, t)).collect()
}
