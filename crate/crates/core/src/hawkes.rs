//! Self-exciting intensity with covariates,
//! `lambda(t) = (c + sum_{T_j < t} e^{-a (t - T_j)}) exp{g(X(t))}`.
//!
//! The excitation carries a seed jump at time 0, so that `Z_0 = 1` and
//! `Z_i = Z_{i-1} e^{-a (T_i - T_{i-1})} + 1`. On `(T_{i-1}, T_i]` the
//! excitation is `Z_{i-1} e^{-a (t - T_{i-1})}`, which makes both the
//! compensator and the jump terms closed-form.

use serde::{Deserialize, Serialize};

use crate::dictionary::DictionaryConfig;
use crate::error::{Error, Result};
use crate::fw::{fit_table, FitConfig, FitTrace};
use crate::likelihood::{check_overflow, pairwise_sum, AdditiveModel, SegmentTable};
use crate::optim::NelderMead;
use crate::timeline::EventTimeline;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub c: f64,
    pub a: f64,
}

impl HawkesParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.a > 0.0 && self.c.is_finite() && self.a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "hawkes parameters must be positive (c = {}, a = {})",
                self.c, self.a
            )));
        }
        Ok(())
    }
}

/// `Z_0 .. Z_n` for the jump times, with `T_0 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct HawkesState {
    pub z: Vec<f64>,
}

pub fn hawkes_state(jump_times: &[f64], a: f64) -> HawkesState {
    let mut z = Vec::with_capacity(jump_times.len() + 1);
    z.push(1.0);
    let mut prev = 0.0;
    for &t in jump_times {
        let last = *z.last().expect("seeded");
        z.push(last * (-a * (t - prev)).exp() + 1.0);
        prev = t;
    }
    HawkesState { z }
}

/// `[c R + (Z / a)(1 - e^{-a R})] Y`, the compensator over a gap of length `r`.
pub fn compensator_increment(c: f64, a: f64, z_prev: f64, r: f64, y: f64) -> f64 {
    (c * r + z_prev / a * (-(-a * r).exp_m1())) * y
}

/// Root `s` of `c1 s + (c2 / a0)(1 - e^{-a0 s}) = -ln u`.
pub fn simulate_duration(c1: f64, c2: f64, a0: f64, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidUniform(u));
    }
    if !(c1 > 0.0 && c2 >= 0.0 && a0 > 0.0) {
        return Err(Error::InvalidParameter(format!("duration needs c1 > 0, c2 >= 0, a0 > 0 (got {c1}, {c2}, {a0})")));
    }
    let target = -u.ln();
    let h = |s: f64| c1 * s + c2 / a0 * (-(-a0 * s).exp_m1()) - target;
    let dh = |s: f64| c1 + c2 * (-a0 * s).exp();
    let (mut lo, mut hi) = (0.0, target / c1 * (1.0 + 1e-12) + f64::MIN_POSITIVE);
    // bracket until the width is small relative to the root, then polish
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-6 * hi {
            break;
        }
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..50 {
        let step = h(s) / dh(s);
        let next = (s - step).clamp(lo, hi);
        let done = (next - s).abs() <= 1e-15 * s.max(1e-300);
        s = next;
        if done {
            break;
        }
    }
    Ok(s)
}

/// Excitation `Z_{i-1} e^{-a (t - T_{i-1})}` integrated over every segment,
/// plus `c` times the segment length.
pub fn hawkes_exposures(table: &SegmentTable<'_>, params: HawkesParams) -> Vec<f64> {
    let jumps = table.timeline().jump_times();
    let z = hawkes_state(jumps, params.a).z;
    let mut i = 0usize;
    table
        .segments()
        .iter()
        .map(|seg| {
            // segment lies in (T_i, T_{i+1}]
            while i < jumps.len() && jumps[i] <= seg.start {
                i += 1;
            }
            let anchor = if i == 0 { 0.0 } else { jumps[i - 1] };
            let level = z[i] * (-params.a * (seg.start - anchor)).exp();
            params.c * seg.len() + level / params.a * (-(-params.a * seg.len()).exp_m1())
        })
        .collect()
}

/// `ln(c + Z_{i-1} e^{-a R_i})` at every jump.
pub fn jump_log_baseline(jumps: &[f64], params: HawkesParams) -> Vec<f64> {
    let z = hawkes_state(jumps, params.a).z;
    let mut prev = 0.0;
    jumps
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let v = (params.c + z[i] * (-params.a * (t - prev)).exp()).ln();
            prev = t;
            v
        })
        .collect()
}

/// Full log-likelihood of `(c + excitation) exp{g}` given per-segment `g` values.
pub fn hawkes_loglik_values(table: &SegmentTable<'_>, params: HawkesParams, g_values: &[f64]) -> Result<f64> {
    check_overflow(g_values)?;
    let exposure = hawkes_exposures(table, params);
    let base = jump_log_baseline(table.timeline().jump_times(), params);
    let mut terms: Vec<f64> = g_values
        .iter()
        .zip(table.segments())
        .zip(&exposure)
        .map(|((&g, s), &e)| if s.jump { g - g.exp() * e } else { -g.exp() * e })
        .collect();
    terms.extend(base);
    let l = pairwise_sum(&terms);
    if l.is_finite() {
        Ok(l)
    } else {
        Err(Error::NonFiniteLikelihood)
    }
}

pub fn hawkes_log_likelihood(timeline: &EventTimeline, params: HawkesParams, model: &AdditiveModel) -> Result<f64> {
    let table = SegmentTable::cox(timeline);
    hawkes_loglik_values(&table, params, &table.values(model))
}

/// Likelihood in `(c, a)` when covariates only change at jumps: `g_i` is the
/// log-covariate factor in force on `(T_{i-1}, T_i]`.
pub fn hawkes_loglik_ca(c: f64, a: f64, g_at_jumps: &[f64], jump_times: &[f64]) -> f64 {
    let z = hawkes_state(jump_times, a).z;
    let mut prev = 0.0;
    let mut total = 0.0;
    for (i, (&t, &g)) in jump_times.iter().zip(g_at_jumps).enumerate() {
        let r = t - prev;
        total += (c + z[i] * (-a * r).exp()).ln() + g - g.exp() * compensator_increment(c, a, z[i], r, 1.0);
        prev = t;
    }
    total
}

/// `d/dc` of [`hawkes_loglik_ca`].
pub fn hawkes_grad_c(c: f64, a: f64, g_at_jumps: &[f64], jump_times: &[f64]) -> f64 {
    let z = hawkes_state(jump_times, a).z;
    let mut prev = 0.0;
    let mut total = 0.0;
    for (i, (&t, &g)) in jump_times.iter().zip(g_at_jumps).enumerate() {
        let r = t - prev;
        total += 1.0 / (c + z[i] * (-a * r).exp()) - g.exp() * r;
        prev = t;
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesFitConfig {
    pub init: HawkesParams,
    /// Alternations between the `g` step and the `(c, a)` step.
    pub cycles: usize,
    pub a_bounds: (f64, f64),
    pub c_bounds: (f64, f64),
    pub max_evals: usize,
    pub tol: f64,
}

impl Default for HawkesFitConfig {
    fn default() -> Self {
        HawkesFitConfig {
            init: HawkesParams { c: 2.0, a: 1.5 },
            cycles: 2,
            a_bounds: (1e-3, 1e3),
            c_bounds: (1e-6, 1e6),
            max_evals: 500,
            tol: 1e-8,
        }
    }
}

/// Maximizes the likelihood over `(c, a)` for fixed per-segment `g` values,
/// by Nelder-Mead on `(ln c, ln a)`.
pub fn fit_ca(
    table: &SegmentTable<'_>,
    g_values: &[f64],
    start: HawkesParams,
    config: &HawkesFitConfig,
) -> Result<HawkesParams> {
    start.validate()?;
    let objective = |p: &[f64]| -> f64 {
        let (c, a) = (p[0].exp(), p[1].exp());
        if !(c >= config.c_bounds.0 && c <= config.c_bounds.1) || !(a >= config.a_bounds.0 && a <= config.a_bounds.1) {
            return f64::NEG_INFINITY;
        }
        hawkes_loglik_values(table, HawkesParams { c, a }, g_values).unwrap_or(f64::NEG_INFINITY)
    };
    let nm = NelderMead { max_evals: config.max_evals, tol: config.tol, initial_step: 0.25 };
    let (p, v) = nm.maximize(objective, &[start.c.ln(), start.a.ln()]);
    if !v.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    Ok(HawkesParams { c: p[0].exp(), a: p[1].exp() })
}

#[derive(Clone, Debug)]
pub struct HawkesFit {
    pub params: HawkesParams,
    pub model: AdditiveModel,
    pub trace: FitTrace,
    pub loglik: f64,
}

/// Alternates a Frank-Wolfe fit of `g` at fixed `(c, a)` with a fit of `(c, a)` at fixed `g`.
pub fn fit_hawkes_joint(
    timeline: &EventTimeline,
    dict_config: &DictionaryConfig,
    fit_config: &FitConfig,
    config: &HawkesFitConfig,
) -> Result<HawkesFit> {
    if timeline.n_jumps() < 2 {
        return Err(Error::InvalidParameter("hawkes fit needs at least two jumps".into()));
    }
    if config.cycles == 0 {
        return Err(Error::InvalidParameter("hawkes fit needs at least one cycle".into()));
    }
    let cox = SegmentTable::cox(timeline);
    let mut params = config.init;
    let mut fitted = None;
    for _ in 0..config.cycles {
        let table = SegmentTable::with_exposure(timeline, hawkes_exposures(&cox, params))?;
        let (model, trace) = fit_table(&table, dict_config, fit_config)?;
        let g = cox.values(&model);
        params = fit_ca(&cox, &g, params, config)?;
        fitted = Some((model, trace, g));
    }
    let (model, trace, g) = fitted.expect("at least one cycle");
    let loglik = hawkes_loglik_values(&cox, params, &g)?;
    Ok(HawkesFit { params, model, trace, loglik })
}

/// Compensator over each inter-jump interval `(T_{i-1}, T_i]` for a fitted model.
pub fn hawkes_residuals(timeline: &EventTimeline, params: HawkesParams, model: &AdditiveModel) -> Result<Vec<f64>> {
    let table = SegmentTable::cox(timeline);
    let g = table.values(model);
    check_overflow(&g)?;
    let exposure = hawkes_exposures(&table, params);
    let mut out = Vec::with_capacity(timeline.n_jumps());
    let mut acc = 0.0;
    for ((seg, g), e) in table.segments().iter().zip(&g).zip(&exposure) {
        acc += g.exp() * e;
        if seg.jump {
            out.push(acc);
            acc = 0.0;
        }
    }
    Ok(out)
}
