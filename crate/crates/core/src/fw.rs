//! Frank-Wolfe maximization of the likelihood over the weighted ℓ1 ball.
//!
//! Each iteration picks `theta_j = argmax |D_T(F_{j-1}, theta)| / w_theta`,
//! sets `b_j = (B / w_theta) sign(D_T)`, and moves to
//! `F_j = (1 - rho_j) F_{j-1} + rho_j b_j theta_j`. The offset `F_0` is shrunk
//! with the rest of `F` but is not charged against the budget.

use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, DictionaryConfig};
use crate::error::{Error, Result};
use crate::likelihood::{loglik_from_values, pairwise_sum, AdditiveModel, SegmentTable, SignedSample, OVERFLOW_GUARD};
use crate::optim::golden_max;
use crate::timeline::EventTimeline;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    LineSearch,
    /// `rho_j = 2 / (j + 1)`
    Deterministic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialOffset {
    Zero,
    /// `ln(N(T) / exposure)`, the constant-intensity MLE.
    LogRate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub budget: f64,
    pub iterations: usize,
    pub step: StepRule,
    pub f0: InitialOffset,
    /// Stop as soon as the duality gap falls below this.
    pub gap_tolerance: Option<f64>,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            budget: 4.0,
            iterations: 100,
            step: StepRule::LineSearch,
            f0: InitialOffset::LogRate,
            gap_tolerance: None,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn with_budget(&self, budget: f64) -> Self {
        FitConfig { budget, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be at least 1".into()));
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(Error::InvalidParameter(format!("budget {} must be positive", self.budget)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// Likelihood after the update.
    pub loglik: f64,
    /// Duality gap at the iterate the step started from.
    pub gap: f64,
    pub atom: String,
    pub rho: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub records: Vec<TraceRecord>,
    /// Likelihood of the starting point `F_0`.
    pub initial_loglik: f64,
}

impl FitTrace {
    pub fn final_loglik(&self) -> f64 {
        self.records.last().map_or(self.initial_loglik, |r| r.loglik)
    }
}

/// Fits a Cox intensity on `timeline`.
pub fn fit(
    timeline: &EventTimeline,
    dict_config: &DictionaryConfig,
    config: &FitConfig,
) -> Result<(AdditiveModel, FitTrace)> {
    fit_table(&SegmentTable::cox(timeline), dict_config, config)
}

pub fn fit_table(
    table: &SegmentTable<'_>,
    dict_config: &DictionaryConfig,
    config: &FitConfig,
) -> Result<(AdditiveModel, FitTrace)> {
    if table.n_jumps() == 0 {
        return Err(Error::NoJumps);
    }
    let dict = Dictionary::build(dict_config, table)?;
    fit_with_dictionary(table, &dict, config)
}

pub fn initial_offset(table: &SegmentTable<'_>, rule: InitialOffset) -> f64 {
    match rule {
        InitialOffset::Zero => 0.0,
        InitialOffset::LogRate => (table.n_jumps() as f64 / table.total_exposure()).ln(),
    }
}

/// Frank-Wolfe iterations with a prebuilt dictionary.
pub fn fit_with_dictionary(
    table: &SegmentTable<'_>,
    dict: &Dictionary,
    config: &FitConfig,
) -> Result<(AdditiveModel, FitTrace)> {
    config.validate()?;
    if table.n_jumps() == 0 {
        return Err(Error::NoJumps);
    }
    let dim = table.timeline().dim();
    let offset = initial_offset(table, config.f0);
    let mut model = AdditiveModel::constant(dim, offset);
    model.budget = config.budget;
    model.weights = dict.config().weights;
    let mut values = vec![offset; table.len()];
    let mut trace = FitTrace { records: Vec::with_capacity(config.iterations), initial_loglik: 0.0 };
    trace.initial_loglik = loglik_from_values(table, &values)?;
    for j in 1..=config.iterations {
        let sample = SignedSample::from_values(table, &values)?;
        let sel = dict.select(&sample)?;
        let gap = sel.score * config.budget - sample.dot(&values);
        if config.gap_tolerance.is_some_and(|tol| gap < tol) {
            break;
        }
        let sign = if sel.d < 0.0 { -1.0 } else { 1.0 };
        let b = sign * config.budget / sel.weight;
        let target: Vec<f64> = sel.column.iter().map(|c| b * c).collect();
        let rho = match config.step {
            StepRule::Deterministic => 2.0 / (j as f64 + 1.0),
            StepRule::LineSearch => line_search_rho(table, &values, &target),
        };
        for (v, t) in values.iter_mut().zip(&target) {
            *v = (1.0 - rho) * *v + rho * t;
        }
        model.scale(1.0 - rho);
        model.add_term(sel.atom.clone(), sel.weight, rho * b);
        let loglik = loglik_from_values(table, &values)?;
        trace.records.push(TraceRecord { iter: j, loglik, gap, atom: sel.atom.to_string(), rho });
    }
    model.prune();
    Ok((model, trace))
}

/// `argmax_{rho in [0,1]} L((1 - rho) F + rho target)` by golden section to width 1e-8.
///
/// Overflowing points count as `-inf`; a flat objective returns 0.
pub fn line_search_rho(table: &SegmentTable<'_>, current: &[f64], target: &[f64]) -> f64 {
    let segs = table.segments();
    let exposure = table.exposure();
    let objective = |rho: f64| -> f64 {
        let mut terms = Vec::with_capacity(current.len());
        for ((&f, &t), (s, &e)) in current.iter().zip(target).zip(segs.iter().zip(exposure)) {
            let v = f + rho * (t - f);
            if !(v <= OVERFLOW_GUARD) {
                return f64::NEG_INFINITY;
            }
            terms.push(if s.jump { v - v.exp() * e } else { -v.exp() * e });
        }
        pairwise_sum(&terms)
    };
    golden_max(objective, 0.0, 1.0, 1e-8).0
}

/// `score * B - D_T(F, F)`: bounds `sup_{g in L(B)} L(g) - L(F)`.
pub fn duality_gap(model: &AdditiveModel, table: &SegmentTable<'_>, dict: &Dictionary) -> Result<f64> {
    let values = table.values(model);
    let sample = SignedSample::from_values(table, &values)?;
    let sel = dict.select(&sample)?;
    Ok(sel.score * model.budget - sample.dot(&values))
}

/// Right-hand side of the Frank-Wolfe suboptimality bound,
/// `8 T e^{B_w theta} (B_w theta)^2 / (m + 2)` with `B_w = B / w_min`.
pub fn suboptimality_bound(horizon: f64, budget: f64, min_weight: f64, atom_bound: f64, m: usize) -> f64 {
    let bw = budget / min_weight * atom_bound;
    8.0 * horizon * bw.exp() * bw * bw / (m as f64 + 2.0)
}
