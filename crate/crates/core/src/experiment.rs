//! Replicated simulate, fit and score loops producing median and quartile
//! summaries of the out-of-sample loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::DictionaryConfig;
use crate::error::{Error, Result};
use crate::eval::loss_from_values;
use crate::fw::FitConfig;
use crate::hawkes::{fit_hawkes_joint, HawkesFitConfig, HawkesParams};
use crate::likelihood::AdditiveModel;
use crate::select::aic_select;
use crate::sim::{centering_gamma, simulate_cox, simulate_hawkes_cov, SimDesign, TrueModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryKind {
    /// Intercept and `x_k`.
    Lin,
    /// Intercept and `x_k, x_k^2, x_k^3`.
    Poly,
}

impl DictionaryKind {
    pub fn config(self) -> DictionaryConfig {
        match self {
            DictionaryKind::Lin => DictionaryConfig::linear(),
            DictionaryKind::Poly => DictionaryConfig::polynomial(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DictionaryKind::Lin => "Lin",
            DictionaryKind::Poly => "Poly",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    /// `design.n` is the number of training jumps.
    pub design: SimDesign,
    /// Jumps after the training sample used for scoring.
    pub test_jumps: usize,
    pub grid: Vec<f64>,
    pub iterations: usize,
    pub dictionaries: Vec<DictionaryKind>,
    pub replications: usize,
    /// Monte Carlo draws for the centering constant of self-exciting designs.
    pub gamma_draws: usize,
}

impl BenchmarkConfig {
    pub fn new(design: SimDesign, dictionaries: Vec<DictionaryKind>, replications: usize) -> Self {
        BenchmarkConfig {
            design,
            test_jumps: 1000,
            grid: vec![1.0, 4.0, 8.0, 16.0],
            iterations: 100,
            dictionaries,
            replications,
            gamma_draws: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub dictionary: DictionaryKind,
    pub loss: f64,
    pub budget: f64,
    pub n_active: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hawkes: Option<HawkesParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub replication: u64,
    pub outcomes: Vec<FitOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub dictionary: DictionaryKind,
    pub median_x100: f64,
    pub q25_x100: f64,
    pub q75_x100: f64,
    pub replications: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub gamma: f64,
    pub summaries: Vec<LossSummary>,
    pub replications: Vec<Replication>,
}

impl BenchmarkReport {
    pub fn summary(&self, kind: DictionaryKind) -> Option<&LossSummary> {
        self.summaries.iter().find(|s| s.dictionary == kind)
    }
}

/// Linear-interpolation quantile of a sorted sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(kind: DictionaryKind, reps: &[Replication]) -> LossSummary {
    let mut losses: Vec<f64> =
        reps.iter().flat_map(|r| r.outcomes.iter().filter(|o| o.dictionary == kind).map(|o| 100.0 * o.loss)).collect();
    losses.sort_by(f64::total_cmp);
    LossSummary {
        dictionary: kind,
        median_x100: quantile_sorted(&losses, 0.5),
        q25_x100: quantile_sorted(&losses, 0.25),
        q75_x100: quantile_sorted(&losses, 0.75),
        replications: losses.len(),
    }
}

/// Loss of a fitted model against the truth at the jumps of the test window.
fn score(model: &AdditiveModel, truth: &TrueModel, rows: &[Vec<f64>]) -> Result<f64> {
    let g0: Vec<f64> = rows.iter().map(|x| truth.eval(x)).collect();
    let g = rows.iter().map(|x| model.eval(x, None)).collect::<Result<Vec<_>>>()?;
    loss_from_values(&g0, &g)
}

/// One replication: simulate `n + test_jumps` jumps, fit on the first `n`,
/// score on the rest.
pub fn run_replication(config: &BenchmarkConfig, gamma: f64, replication: u64) -> Result<Replication> {
    let n = config.design.n;
    let full = SimDesign { n: n + config.test_jumps, ..config.design.clone() };
    let path = match full.hawkes {
        Some(_) => simulate_hawkes_cov(&full, gamma, replication)?,
        None => simulate_cox(&full, replication)?,
    };
    let train = path.timeline.head_jumps(n)?;
    // the covariate in force on (T_{i-1}, T_i] is row i - 1
    let test_rows = &path.covariates[n..n + config.test_jumps];
    let truth = TrueModel::new(&full, if full.hawkes.is_some() { gamma } else { 0.0 });
    let fit_cfg = FitConfig { iterations: config.iterations, ..FitConfig::default() };
    let mut outcomes = Vec::with_capacity(config.dictionaries.len());
    for &kind in &config.dictionaries {
        let dict = kind.config();
        let (model, budget, hawkes) = if full.hawkes.is_some() {
            hawkes_aic(&train, &config.grid, &dict, &fit_cfg)?
        } else {
            let sel = aic_select(&train, &config.grid, &dict, &fit_cfg)?;
            (sel.model, sel.budget, None)
        };
        outcomes.push(FitOutcome {
            dictionary: kind,
            loss: score(&model, &truth, test_rows)?,
            budget,
            n_active: model.n_active(),
            hawkes,
        });
    }
    Ok(Replication { replication, outcomes })
}

/// Joint self-exciting fit for each budget, keeping the largest `loglik - K_B`.
pub fn hawkes_aic(
    train: &crate::timeline::EventTimeline,
    grid: &[f64],
    dict: &DictionaryConfig,
    fit_cfg: &FitConfig,
) -> Result<(AdditiveModel, f64, Option<HawkesParams>)> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("budget grid is empty".into()));
    }
    let hcfg = HawkesFitConfig::default();
    let fits = grid
        .par_iter()
        .map(|&b| fit_hawkes_joint(train, dict, &fit_cfg.with_budget(b), &hcfg))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(f64, usize)> = None;
    for (i, f) in fits.iter().enumerate() {
        let aic = f.loglik - f.model.parameter_count() as f64;
        if best.is_none_or(|(a, _)| aic > a) {
            best = Some((aic, i));
        }
    }
    let i = best.expect("nonempty grid").1;
    let fit = fits.into_iter().nth(i).expect("grid index");
    Ok((fit.model, grid[i], Some(fit.params)))
}

/// Runs all replications, in parallel over replications, and summarizes.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if config.replications == 0 {
        return Err(Error::InvalidParameter("at least one replication is required".into()));
    }
    if config.dictionaries.is_empty() {
        return Err(Error::InvalidParameter("no dictionary selected".into()));
    }
    config.design.validate()?;
    let gamma = match config.design.hawkes {
        Some(_) => centering_gamma(&config.design, config.gamma_draws)?.gamma,
        None => 0.0,
    };
    let replications = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(config, gamma, r))
        .collect::<Result<Vec<_>>>()?;
    let summaries = config.dictionaries.iter().map(|&k| summarize(k, &replications)).collect();
    Ok(BenchmarkReport { config: config.clone(), gamma, summaries, replications })
}
