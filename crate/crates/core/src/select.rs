//! Choice of the ℓ1 budget over a grid, by AIC or by validation likelihood.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, DictionaryConfig};
use crate::error::{Error, Result};
use crate::fw::{fit_with_dictionary, FitConfig, FitTrace};
use crate::likelihood::{log_likelihood, AdditiveModel, SegmentTable};
use crate::timeline::EventTimeline;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub budget: f64,
    pub loglik_in: f64,
    #[serde(rename = "K_B")]
    pub k_b: usize,
    pub aic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loglik_valid: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Selected {
    pub budget: f64,
    pub model: AdditiveModel,
    pub trace: FitTrace,
    pub reports: Vec<BudgetReport>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("budget grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("budget grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Index of the first maximum; earlier (smaller) budgets win ties.
fn first_argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn fit_grid(
    table: &SegmentTable<'_>,
    dict: &Dictionary,
    grid: &[f64],
    config: &FitConfig,
) -> Result<Vec<(AdditiveModel, FitTrace)>> {
    grid.par_iter().map(|&b| fit_with_dictionary(table, dict, &config.with_budget(b))).collect()
}

/// Maximizes `L_T(g_B) - K_B` over the grid.
pub fn aic_select(
    timeline: &EventTimeline,
    grid: &[f64],
    dict_config: &DictionaryConfig,
    config: &FitConfig,
) -> Result<Selected> {
    check_grid(grid)?;
    let table = SegmentTable::cox(timeline);
    if table.n_jumps() == 0 {
        return Err(Error::NoJumps);
    }
    let dict = Dictionary::build(dict_config, &table)?;
    let fits = fit_grid(&table, &dict, grid, config)?;
    let mut reports = Vec::with_capacity(grid.len());
    for (&budget, (model, _)) in grid.iter().zip(&fits) {
        let loglik_in = log_likelihood(model, &table)?;
        let k_b = model.parameter_count();
        reports.push(BudgetReport { budget, loglik_in, k_b, aic: loglik_in - k_b as f64, loglik_valid: None });
    }
    let best = first_argmax(reports.iter().map(|r| r.aic));
    let (model, trace) = fits.into_iter().nth(best).expect("grid index");
    Ok(Selected { budget: grid[best], model, trace, reports })
}

/// Picks the budget whose training fit has the largest validation likelihood,
/// then refits on training and validation data together.
pub fn validation_select(
    train: &EventTimeline,
    validation: &EventTimeline,
    grid: &[f64],
    dict_config: &DictionaryConfig,
    config: &FitConfig,
) -> Result<Selected> {
    check_grid(grid)?;
    if validation.n_jumps() == 0 {
        return Err(Error::EmptyValidation);
    }
    let table = SegmentTable::cox(train);
    if table.n_jumps() == 0 {
        return Err(Error::NoJumps);
    }
    let valid = SegmentTable::cox(validation);
    let dict = Dictionary::build(dict_config, &table)?;
    let fits = fit_grid(&table, &dict, grid, config)?;
    let mut reports = Vec::with_capacity(grid.len());
    for (&budget, (model, _)) in grid.iter().zip(&fits) {
        let loglik_in = log_likelihood(model, &table)?;
        let k_b = model.parameter_count();
        reports.push(BudgetReport {
            budget,
            loglik_in,
            k_b,
            aic: loglik_in - k_b as f64,
            loglik_valid: Some(log_likelihood(model, &valid)?),
        });
    }
    let best = first_argmax(reports.iter().map(|r| r.loglik_valid.expect("validation likelihood")));
    let budget = grid[best];
    let joined = train.concat(validation)?;
    let joined_table = SegmentTable::cox(&joined);
    let joined_dict = Dictionary::build(dict_config, &joined_table)?;
    let (model, trace) = fit_with_dictionary(&joined_table, &joined_dict, &config.with_budget(budget))?;
    Ok(Selected { budget, model, trace, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::build_timeline;

    fn data() -> EventTimeline {
        build_timeline(
            vec![(0.0, vec![0.5, -0.2]), (0.8, vec![-0.4, 0.9]), (2.1, vec![0.7, 0.3])],
            vec![0.3, 0.9, 1.1, 1.6, 2.4, 2.6, 3.7],
            4.5,
        )
        .unwrap()
    }

    #[test]
    fn single_grid_point() {
        let sel = aic_select(&data(), &[2.0], &DictionaryConfig::linear(), &FitConfig::default()).unwrap();
        assert_eq!(sel.budget, 2.0);
        assert_eq!(sel.reports.len(), 1);
    }

    #[test]
    fn four_point_grid_runs_four_fits() {
        let grid = [1.0, 4.0, 8.0, 16.0];
        let cfg = FitConfig { iterations: 20, ..FitConfig::default() };
        let sel = aic_select(&data(), &grid, &DictionaryConfig::linear(), &cfg).unwrap();
        assert_eq!(sel.reports.len(), 4);
        let budgets: Vec<f64> = sel.reports.iter().map(|r| r.budget).collect();
        assert_eq!(budgets, grid);
        for r in &sel.reports {
            assert_eq!(r.aic, r.loglik_in - r.k_b as f64);
        }
        let best = sel.reports.iter().map(|r| r.aic).fold(f64::NEG_INFINITY, f64::max);
        let first = sel.reports.iter().find(|r| r.aic == best).unwrap();
        assert_eq!(sel.budget, first.budget);
    }

    #[test]
    fn ties_go_to_the_smaller_budget() {
        assert_eq!(first_argmax([1.0, 3.0, 3.0, 2.0].into_iter()), 1);
        // equal likelihoods, growing parameter counts
        let aic = [1, 2, 3, 4].map(|k| -10.0 - k as f64);
        assert_eq!(first_argmax(aic.into_iter()), 0);
    }

    #[test]
    fn validation_on_training_data_ranks_by_in_sample_likelihood() {
        let tl = data();
        let grid = [2.0, 4.0, 8.0, 16.0];
        let cfg = FitConfig { iterations: 30, ..FitConfig::default() };
        let sel = validation_select(&tl, &tl, &grid, &DictionaryConfig::linear(), &cfg).unwrap();
        assert_eq!(sel.reports.len(), 4);
        for r in &sel.reports {
            assert_eq!(r.loglik_valid, Some(r.loglik_in));
        }
        let best = first_argmax(sel.reports.iter().map(|r| r.loglik_in));
        assert_eq!(sel.budget, grid[best]);
    }

    #[test]
    fn empty_validation_and_bad_grids() {
        let tl = data();
        let empty = build_timeline(vec![(0.0, vec![0.0, 0.0])], vec![], 1.0).unwrap();
        let cfg = FitConfig::default();
        assert!(matches!(
            validation_select(&tl, &empty, &[1.0], &DictionaryConfig::linear(), &cfg),
            Err(Error::EmptyValidation)
        ));
        assert!(aic_select(&tl, &[], &DictionaryConfig::linear(), &cfg).is_err());
        assert!(aic_select(&tl, &[4.0, 1.0], &DictionaryConfig::linear(), &cfg).is_err());
    }
}
