//! Out-of-sample likelihood-ratio test, time-rescaling diagnostics and the
//! relative squared-error loss used in simulations.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::likelihood::{check_overflow, pairwise_sum, AdditiveModel, SegmentTable};
use crate::timeline::EventTimeline;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// `L_S / sqrt(S sigma_hat^2)`.
    pub statistic: f64,
    pub sigma_hat: f64,
    /// `L_S(g, g')`.
    pub loglr: f64,
    /// `L_S / S`.
    pub avg_loglr: f64,
    /// `sigma_hat / sqrt(S)`.
    pub se: f64,
    /// Probability of a larger statistic under the null (alternative: `g` better).
    pub p_one_sided: f64,
    pub p_two_sided: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub n_jumps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub avg_loglr_x100: f64,
    pub se_x100: f64,
    pub p_value: f64,
}

impl From<&TestResult> for EvalReport {
    fn from(t: &TestResult) -> Self {
        EvalReport { avg_loglr_x100: 100.0 * t.avg_loglr, se_x100: 100.0 * t.se, p_value: t.p_two_sided }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Test from per-segment values of the two log-intensities on one table.
pub fn oos_lr_test_values(table: &SegmentTable<'_>, g: &[f64], gp: &[f64]) -> Result<TestResult> {
    check_overflow(g)?;
    check_overflow(gp)?;
    let mut terms = Vec::with_capacity(g.len());
    let mut squares = Vec::with_capacity(table.n_jumps());
    for ((seg, e), (&a, &b)) in table.segments().iter().zip(table.exposure()).zip(g.iter().zip(gp)) {
        let comp = (a.exp() - b.exp()) * e;
        if seg.jump {
            let d = a - b;
            terms.push(d - comp);
            squares.push(d * d);
        } else {
            terms.push(-comp);
        }
    }
    let loglr = pairwise_sum(&terms);
    let ss = pairwise_sum(&squares);
    if !(ss > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let s = table.timeline().horizon();
    let sigma_hat = (ss / s).sqrt();
    let statistic = loglr / ss.sqrt();
    let n = std_normal();
    Ok(TestResult {
        statistic,
        sigma_hat,
        loglr,
        avg_loglr: loglr / s,
        se: sigma_hat / s.sqrt(),
        p_one_sided: n.sf(statistic),
        p_two_sided: (2.0 * n.sf(statistic.abs())).min(1.0),
        s,
        n_jumps: table.n_jumps(),
    })
}

/// Compares two models fitted on earlier data over the test timeline.
pub fn oos_lr_test(g: &AdditiveModel, gp: &AdditiveModel, timeline: &EventTimeline) -> Result<TestResult> {
    let table = SegmentTable::cox(timeline);
    oos_lr_test_values(&table, &table.values(g), &table.values(gp))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescalingResult {
    pub residuals: Vec<f64>,
    pub ks: f64,
    pub p_value: f64,
}

/// Compensator increments between consecutive jumps, from per-segment values.
pub fn rescaled_intervals(table: &SegmentTable<'_>, values: &[f64]) -> Result<Vec<f64>> {
    check_overflow(values)?;
    let mut out = Vec::with_capacity(table.n_jumps());
    let mut acc = 0.0;
    for ((seg, e), v) in table.segments().iter().zip(table.exposure()).zip(values) {
        acc += v.exp() * e;
        if seg.jump {
            out.push(acc);
            acc = 0.0;
        }
    }
    Ok(out)
}

/// `Lambda((T_{i-1}, T_i])` under `model`, with a KS test against Exp(1).
pub fn time_rescaling_residuals(model: &AdditiveModel, timeline: &EventTimeline) -> Result<RescalingResult> {
    let table = SegmentTable::cox(timeline);
    let residuals = rescaled_intervals(&table, &table.values(model))?;
    let (ks, p_value) = ks_exp1(&residuals);
    Ok(RescalingResult { residuals, ks, p_value })
}

/// Kolmogorov-Smirnov distance to the unit exponential and its asymptotic p-value.
pub fn ks_exp1(sample: &[f64]) -> (f64, f64) {
    let n = sample.len();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = -(-x.max(0.0)).exp_m1();
        d = d.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf);
    }
    let root = nf.sqrt();
    (d, kolmogorov_sf((root + 0.12 + 0.11 / root) * d))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `sum (g0 - g)^2 / sum (g0 - gamma0)^2` over jumps, with `gamma0` the mean of `g0` there.
pub fn loss_from_values(g0: &[f64], g: &[f64]) -> Result<f64> {
    if g0.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: g0.len(), got: g.len() });
    }
    if g0.is_empty() {
        return Err(Error::NoJumps);
    }
    let gamma0 = g0.iter().sum::<f64>() / g0.len() as f64;
    let num: f64 = g0.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = g0.iter().map(|a| (a - gamma0) * (a - gamma0)).sum();
    if !(den > 0.0) {
        return Err(Error::DegenerateDenominator);
    }
    Ok(num / den)
}

/// Loss of `model` against the truth `g0` at the jumps of `timeline`.
pub fn loss_metric<F>(model: &AdditiveModel, g0: F, timeline: &EventTimeline) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut truth = Vec::with_capacity(timeline.n_jumps());
    let mut fitted = Vec::with_capacity(timeline.n_jumps());
    for &t in timeline.jump_times() {
        let x = timeline.covariate_at(t)?;
        truth.push(g0(x));
        fitted.push(model.eval(x, None)?);
    }
    loss_from_values(&truth, &fitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Atom;
    use crate::likelihood::Term;
    use crate::timeline::build_timeline;

    fn three_jumps() -> EventTimeline {
        build_timeline(vec![(0.0, vec![0.2]), (1.0, vec![-0.6])], vec![0.5, 1.5, 2.0], 2.5).unwrap()
    }

    fn linear(offset: f64, coef: f64) -> AdditiveModel {
        let mut m = AdditiveModel::constant(1, offset);
        m.terms.push(Term { atom: Atom::Linear { k: 0 }, coef, weight: 1.0 });
        m
    }

    #[test]
    fn identical_models_have_no_variance() {
        let m = linear(0.1, 0.4);
        assert!(matches!(oos_lr_test(&m, &m, &three_jumps()), Err(Error::ZeroVariance)));
    }

    #[test]
    fn constant_shift_by_hand() {
        let tl = three_jumps();
        let g = linear(0.1, 0.4);
        let delta = 0.3;
        let mut gp = g.clone();
        gp.offset += delta;
        let r = oos_lr_test(&g, &gp, &tl).unwrap();
        // int e^g dt over (0,1] at x=0.2 and (1,2.5] at x=-0.6
        let int_eg = (0.1f64 + 0.08).exp() * 1.0 + (0.1f64 - 0.24).exp() * 1.5;
        let expect = -3.0 * delta + (delta.exp() - 1.0) * int_eg;
        assert!((r.loglr - expect).abs() < 1e-12);
        assert!((r.statistic - expect / (3.0f64 * delta * delta).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn antisymmetric_in_the_two_models() {
        let tl = three_jumps();
        let g = linear(0.1, 0.4);
        let gp = linear(-0.2, 0.9);
        let a = oos_lr_test(&g, &gp, &tl).unwrap();
        let b = oos_lr_test(&gp, &g, &tl).unwrap();
        assert_eq!(a.statistic, -b.statistic);
        assert_eq!(a.loglr, -b.loglr);
        assert_eq!(a.p_two_sided, b.p_two_sided);
        assert!((a.p_one_sided + b.p_one_sided - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_rate_residuals_scale_the_gaps() {
        let tl = three_jumps();
        let m = AdditiveModel::constant(1, 1.2f64.ln());
        let r = time_rescaling_residuals(&m, &tl).unwrap();
        let expect = [0.6, 1.2, 0.6];
        for (a, b) in r.residuals.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_term_leaves_jump_part_unchanged() {
        let tl = three_jumps();
        let g = linear(0.1, 0.4);
        let gp = linear(-0.2, 0.9);
        let add = |m: &AdditiveModel| {
            let mut m = m.clone();
            m.terms.push(Term { atom: Atom::Monomial { k: 0, power: 2 }, coef: 0.25, weight: 1.0 });
            m
        };
        let a = oos_lr_test(&g, &gp, &tl).unwrap();
        let c = oos_lr_test(&add(&g), &add(&gp), &tl).unwrap();
        assert!((c.sigma_hat - a.sigma_hat).abs() < 1e-15);
        // the compensator difference e^{g+h} - e^{g'+h} does depend on h
        assert!((c.loglr - a.loglr).abs() > 1e-6);
    }

    #[test]
    fn constant_mle_on_closed_window_has_unit_mean_residual() {
        let tl = build_timeline(vec![(0.0, vec![0.2]), (1.0, vec![-0.6])], vec![0.5, 1.5, 2.0], 2.0).unwrap();
        let m = AdditiveModel::constant(1, 1.5f64.ln());
        let r = time_rescaling_residuals(&m, &tl).unwrap();
        assert!((r.residuals.iter().sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // standard table values of the limiting distribution
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn ks_on_exact_quantiles_is_small() {
        let n = 1000;
        let sample: Vec<f64> = (0..n).map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln()).collect();
        let (d, p) = ks_exp1(&sample);
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
        assert!(p > 0.99);
    }

    #[test]
    fn loss_examples() {
        let tl = three_jumps();
        let g0 = |x: &[f64]| 2.0 * x[0];
        assert_eq!(loss_metric(&linear(0.0, 2.0), g0, &tl).unwrap(), 0.0);
        // jumps see x = 0.2, -0.6, -0.6
        let gamma0 = (0.4 - 1.2 - 1.2) / 3.0;
        let best = AdditiveModel::constant(1, gamma0);
        assert!((loss_metric(&best, g0, &tl).unwrap() - 1.0).abs() < 1e-12);
        let flat = |_: &[f64]| 1.0;
        assert!(matches!(loss_metric(&best, flat, &tl), Err(Error::DegenerateDenominator)));
    }
}
