//! Linear-maximization oracle over the union of enabled atom families.

use rayon::prelude::*;

use super::simplex::bernstein_lp_oracle;
use super::{bernstein_basis, bernstein_input, logistic, Atom, DictionaryConfig, SigmoidConfig, WeightScheme};
use crate::error::{Error, Result};
use crate::likelihood::{discounted_counts, SegmentTable, SignedSample};
use crate::optim::golden_max;

#[derive(Clone, Debug)]
struct FiniteEntry {
    atom: Atom,
    weight: f64,
    column: Vec<f64>,
}

/// Atoms evaluated on one segment table, ready for repeated oracle calls.
#[derive(Clone, Debug)]
pub struct Dictionary {
    config: DictionaryConfig,
    finite: Vec<FiniteEntry>,
    intercept: Option<FiniteEntry>,
    coords: Vec<usize>,
    /// Per-coordinate covariate columns used by the parametric families.
    covariates: Vec<Vec<f64>>,
    threshold: Option<Vec<f64>>,
    bernstein: Vec<Vec<Vec<f64>>>,
    anchors: Vec<f64>,
    jumps: Vec<f64>,
}

/// Oracle output: the atom, its weight, `D_T` and `|D_T| / w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub atom: Atom,
    pub weight: f64,
    pub d: f64,
    pub score: f64,
    pub column: Vec<f64>,
}

impl Dictionary {
    pub fn build(config: &DictionaryConfig, table: &SegmentTable<'_>) -> Result<Self> {
        let tl = table.timeline();
        let dim = tl.dim();
        config.validate(dim)?;
        let lens: Vec<f64> = table.segments().iter().map(|s| s.len()).collect();
        let horizon = tl.horizon();
        let make = |atom: Atom| -> Option<FiniteEntry> {
            let column = table.column(&atom);
            let weight = match config.weights {
                WeightScheme::Unit => 1.0,
                WeightScheme::EmpiricalL2 => {
                    let ss: f64 = column.iter().zip(&lens).map(|(v, l)| v * v * l).sum();
                    let w = (ss / horizon).sqrt();
                    if !(w > 0.0) {
                        return None;
                    }
                    w.max(config.weight_floor)
                }
            };
            Some(FiniteEntry { atom, weight, column })
        };
        let mut finite: Vec<FiniteEntry> = Vec::new();
        let mut intercept = None;
        for atom in config.finite_atoms(dim) {
            if atom == Atom::Intercept {
                intercept = make(atom);
            } else if let Some(e) = make(atom) {
                finite.push(e);
            }
        }
        let coords = config.coordinates(dim);
        let needs_cov = config.sigmoid.is_some() || config.bernstein.is_some();
        let covariates: Vec<Vec<f64>> =
            if needs_cov { coords.iter().map(|&k| table.column(&Atom::Linear { k })).collect() } else { Vec::new() };
        let threshold = config.sigmoid.as_ref().map(|s| table.column(&Atom::Linear { k: s.threshold }));
        let bernstein = match &config.bernstein {
            Some(b) => covariates
                .iter()
                .map(|col| col.iter().map(|&x| bernstein_basis(b.order, bernstein_input(x))).collect())
                .collect(),
            None => Vec::new(),
        };
        let (anchors, jumps) = if config.hawkes_feature.is_some() {
            (table.segments().iter().map(|s| s.start).collect(), tl.jump_times().to_vec())
        } else {
            (Vec::new(), Vec::new())
        };
        let dict = Dictionary {
            config: config.clone(),
            finite,
            intercept,
            coords,
            covariates,
            threshold,
            bernstein,
            anchors,
            jumps,
        };
        if dict.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        Ok(dict)
    }

    pub fn config(&self) -> &DictionaryConfig {
        &self.config
    }

    pub fn is_empty(&self) -> bool {
        let parametric = !self.coords.is_empty() && (self.config.sigmoid.is_some() || self.config.bernstein.is_some());
        self.finite.is_empty() && self.intercept.is_none() && !parametric && self.config.hawkes_feature.is_none()
    }

    /// Finite atoms (intercept last) with their weights.
    pub fn finite_atoms(&self) -> impl Iterator<Item = (&Atom, f64)> {
        self.finite.iter().chain(&self.intercept).map(|e| (&e.atom, e.weight))
    }

    /// Weight the dictionary assigns to `atom`; parametric atoms have unit weight.
    pub fn weight_of(&self, atom: &Atom) -> f64 {
        self.finite.iter().chain(&self.intercept).find(|e| &e.atom == atom).map_or(1.0, |e| e.weight)
    }

    pub fn smallest_weight(&self) -> f64 {
        let parametric =
            self.config.sigmoid.is_some() || self.config.bernstein.is_some() || self.config.hawkes_feature.is_some();
        let finite = self.finite_atoms().map(|(_, w)| w).fold(f64::INFINITY, f64::min);
        if parametric {
            finite.min(1.0)
        } else {
            finite
        }
    }

    /// Largest sup-norm over atoms the oracle can return.
    pub fn atom_bound(&self) -> f64 {
        let mut bound: f64 = self.finite_atoms().map(|(a, _)| a.bound()).fold(0.0, f64::max);
        if self.config.sigmoid.is_some() {
            bound = bound.max(2.0);
        }
        if self.config.bernstein.is_some() {
            bound = bound.max(1.0);
        }
        if let Some(h) = &self.config.hawkes_feature {
            bound = bound.max(h.cap);
        }
        bound
    }

    /// `argmax |D_T(F, theta)| / w_theta` over every enabled family.
    ///
    /// Candidates are compared in family-tag order with a strict `>`, so the
    /// earliest family, coordinate and parameter wins ties.
    pub fn select(&self, sample: &SignedSample) -> Result<Selection> {
        if self.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        let weights = sample.net_weights();
        let finite: Vec<f64> = self.finite.par_iter().map(|e| sample.dot(&e.column)).collect();
        let mut best: Option<Selection> = None;
        let mut offer = |cand: Selection| {
            if best.as_ref().is_none_or(|b| cand.score > b.score) {
                best = Some(cand);
            }
        };
        let mut finite_best: Option<(usize, f64)> = None;
        for (i, (e, &d)) in self.finite.iter().zip(&finite).enumerate() {
            let score = d.abs() / e.weight;
            if finite_best.is_none_or(|(_, s)| score > s) {
                finite_best = Some((i, score));
            }
        }
        if let Some((i, score)) = finite_best {
            let e = &self.finite[i];
            offer(Selection { atom: e.atom.clone(), weight: e.weight, d: finite[i], score, column: e.column.clone() });
        }
        if let Some(cfg) = &self.config.sigmoid {
            if let Some(s) = self.sigmoid_oracle(cfg, &weights) {
                offer(s);
            }
        }
        if let Some(cfg) = &self.config.bernstein {
            if let Some(s) = self.bernstein_oracle(cfg.alpha, &weights) {
                offer(s);
            }
        }
        if self.config.hawkes_feature.is_some() {
            offer(self.hawkes_oracle(&weights));
        }
        if let Some(e) = &self.intercept {
            let d = sample.dot(&e.column);
            offer(Selection {
                atom: e.atom.clone(),
                weight: e.weight,
                d,
                score: d.abs() / e.weight,
                column: e.column.clone(),
            });
        }
        best.ok_or(Error::EmptyDictionary)
    }

    fn sigmoid_oracle(&self, cfg: &SigmoidConfig, w: &[f64]) -> Option<Selection> {
        let z = self.threshold.as_ref()?;
        let grid = cfg.grid;
        let step = 2.0 / (grid - 1) as f64;
        let at = |i: usize| -1.0 + step * i as f64;
        let per_k: Vec<Option<Selection>> = self
            .coords
            .par_iter()
            .zip(&self.covariates)
            .map(|(&k, x)| {
                let wx: Vec<f64> = w.iter().zip(x).map(|(w, x)| w * x).collect();
                let a: f64 = wx.iter().sum();
                let b = |c1: f64, c2: f64| -> f64 { wx.iter().zip(z).map(|(wx, z)| wx * logistic(c1 * z - c2)).sum() };
                let mut best = (0.0, 0.0, f64::NEG_INFINITY, 0.0);
                for i in 0..grid {
                    for j in 0..grid {
                        let (c1, c2) = (at(i), at(j));
                        let v = b(c1, c2);
                        if v.abs() > best.2 {
                            best = (c1, c2, v.abs(), v);
                        }
                    }
                }
                let (mut c1, mut c2, mut val, mut signed) = best;
                let (r1, s1) = golden_max(|t| b(t, c2).abs(), (c1 - step).max(-1.0), (c1 + step).min(1.0), 1e-8);
                if s1 > val {
                    c1 = r1;
                    val = s1;
                    signed = b(c1, c2);
                }
                let (r2, s2) = golden_max(|t| b(c1, t).abs(), (c2 - step).max(-1.0), (c2 + step).min(1.0), 1e-8);
                if s2 > val {
                    c2 = r2;
                    signed = b(c1, c2);
                }
                let sa = if a < 0.0 { -1.0 } else { 1.0 };
                let sb = if signed < 0.0 { -1.0 } else { 1.0 };
                let atom = Atom::Sigmoid { k, threshold: cfg.threshold, a1: 1.0, a2: sa * sb, c1, c2 };
                let column: Vec<f64> = x.iter().zip(z).map(|(x, z)| x + sa * sb * x * logistic(c1 * z - c2)).collect();
                let d: f64 = w.iter().zip(&column).map(|(w, c)| w * c).sum();
                Some(Selection { atom, weight: 1.0, d, score: d.abs(), column })
            })
            .collect();
        first_best(per_k)
    }

    fn bernstein_oracle(&self, alpha: Option<f64>, w: &[f64]) -> Option<Selection> {
        let per_k: Vec<Option<Selection>> = self
            .coords
            .par_iter()
            .zip(&self.bernstein)
            .map(|(&k, basis)| {
                let order = basis.first()?.len();
                let mut d = vec![0.0; order];
                for (wj, q) in w.iter().zip(basis) {
                    for (dv, qv) in d.iter_mut().zip(q) {
                        *dv += wj * qv;
                    }
                }
                let (pos, obj_pos) = bernstein_lp_oracle(&d, alpha, 1.0);
                let (neg, obj_neg) = bernstein_lp_oracle(&d, alpha, -1.0);
                let coefs = if obj_neg > obj_pos { neg } else { pos };
                if coefs.iter().all(|&a| a == 0.0) {
                    return None;
                }
                let column: Vec<f64> = basis.iter().map(|q| q.iter().zip(&coefs).map(|(q, a)| q * a).sum()).collect();
                let dval: f64 = w.iter().zip(&column).map(|(w, c)| w * c).sum();
                Some(Selection { atom: Atom::Bernstein { k, coefs }, weight: 1.0, d: dval, score: dval.abs(), column })
            })
            .collect();
        first_best(per_k)
    }

    fn hawkes_oracle(&self, w: &[f64]) -> Selection {
        let cfg = self.config.hawkes_feature.as_ref().expect("hawkes family enabled");
        let column = |decay: f64| -> Vec<f64> {
            discounted_counts(&self.anchors, &self.jumps, decay).into_iter().map(|v| v.min(cfg.cap)).collect()
        };
        let dval = |decay: f64| -> f64 { w.iter().zip(column(decay)).map(|(w, c)| w * c).sum() };
        let (llo, lhi) = (cfg.decay_lo.ln(), cfg.decay_hi.ln());
        let step = if cfg.grid > 1 { (lhi - llo) / (cfg.grid - 1) as f64 } else { 0.0 };
        let grid: Vec<f64> = (0..cfg.grid).map(|i| llo + step * i as f64).collect();
        let values: Vec<f64> = grid.par_iter().map(|&l| dval(l.exp()).abs()).collect();
        let mut best = (grid[0], values[0]);
        for (&l, &v) in grid.iter().zip(&values).skip(1) {
            if v > best.1 {
                best = (l, v);
            }
        }
        if step > 0.0 {
            let (l, v) = golden_max(|l| dval(l.exp()).abs(), (best.0 - step).max(llo), (best.0 + step).min(lhi), 1e-8);
            if v > best.1 {
                best = (l, v);
            }
        }
        let decay = best.0.exp();
        let col = column(decay);
        let d: f64 = w.iter().zip(&col).map(|(w, c)| w * c).sum();
        Selection { atom: Atom::HawkesFeature { decay, cap: cfg.cap }, weight: 1.0, d, score: d.abs(), column: col }
    }
}

fn first_best(cands: Vec<Option<Selection>>) -> Option<Selection> {
    let mut best: Option<Selection> = None;
    for c in cands.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| c.score > b.score) {
            best = Some(c);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{BernsteinConfig, HawkesFeatureConfig};
    use crate::likelihood::{signed_sample, AdditiveModel};
    use crate::timeline::{build_timeline, EventTimeline};

    /// Two coordinates, three updates, five jumps.
    fn timeline() -> EventTimeline {
        build_timeline(
            vec![(0.0, vec![0.5, -0.2]), (1.0, vec![-0.4, 0.9]), (2.5, vec![0.1, 0.3])],
            vec![0.4, 1.2, 1.9, 2.7, 3.3],
            4.0,
        )
        .unwrap()
    }

    fn linear_only() -> DictionaryConfig {
        DictionaryConfig { intercept: false, ..DictionaryConfig::linear() }.with_weights(WeightScheme::Unit)
    }

    #[test]
    fn picks_weighted_argmax() {
        let tl = timeline();
        let table = SegmentTable::cox(&tl);
        let sample = signed_sample(&AdditiveModel::constant(2, 0.0), &table).unwrap();
        let dict = Dictionary::build(&linear_only(), &table).unwrap();
        let d0 = sample.dot(&table.column(&Atom::Linear { k: 0 }));
        let d1 = sample.dot(&table.column(&Atom::Linear { k: 1 }));
        let sel = dict.select(&sample).unwrap();
        let expect = if d0.abs() >= d1.abs() { 0 } else { 1 };
        assert_eq!(sel.atom, Atom::Linear { k: expect });
        assert_eq!(sel.score, d0.abs().max(d1.abs()));
    }

    #[test]
    fn empirical_weights_match_timeline_helper() {
        let tl = timeline();
        let table = SegmentTable::cox(&tl);
        let dict = Dictionary::build(&DictionaryConfig::polynomial(), &table).unwrap();
        for (atom, w) in dict.finite_atoms() {
            let direct = crate::timeline::empirical_l2_weight(&tl, atom).unwrap();
            assert!((w - direct).abs() < 1e-14, "{atom}");
        }
    }

    #[test]
    fn zero_norm_atoms_are_dropped() {
        let tl = build_timeline(vec![(0.0, vec![0.0, 0.5])], vec![1.0], 2.0).unwrap();
        let table = SegmentTable::cox(&tl);
        let dict = Dictionary::build(&DictionaryConfig::linear(), &table).unwrap();
        let atoms: Vec<_> = dict.finite_atoms().map(|(a, _)| a.clone()).collect();
        assert_eq!(atoms, vec![Atom::Linear { k: 1 }, Atom::Intercept]);
        let cfg = DictionaryConfig { coordinates: Some(vec![0]), intercept: false, ..Default::default() };
        assert!(matches!(Dictionary::build(&cfg, &table), Err(Error::EmptyDictionary)));
    }

    #[test]
    fn bernstein_oracle_is_lp_optimal_for_order_one() {
        let tl = timeline();
        let table = SegmentTable::cox(&tl);
        let cfg = DictionaryConfig {
            intercept: false,
            linear: false,
            bernstein: Some(BernsteinConfig { order: 1, alpha: Some(100.0) }),
            coordinates: Some(vec![0]),
            weights: WeightScheme::Unit,
            ..Default::default()
        };
        let dict = Dictionary::build(&cfg, &table).unwrap();
        let sample = signed_sample(&AdditiveModel::constant(2, 0.2), &table).unwrap();
        let sel = dict.select(&sample).unwrap();
        // grid brute force over the chain 0 <= a0 <= a1 <= 1
        let mut best = 0.0f64;
        for i in 0..=100 {
            for j in i..=100 {
                let atom = Atom::Bernstein { k: 0, coefs: vec![i as f64 / 100.0, j as f64 / 100.0] };
                best = best.max(sample.dot(&table.column(&atom)).abs());
            }
        }
        assert!((sel.score - best).abs() < 1e-9, "{} vs {best}", sel.score);
    }

    #[test]
    fn sigmoid_oracle_beats_its_grid() {
        let tl = timeline();
        let table = SegmentTable::cox(&tl);
        let cfg = DictionaryConfig {
            intercept: false,
            linear: false,
            sigmoid: Some(SigmoidConfig { threshold: 1, grid: 21 }),
            weights: WeightScheme::Unit,
            ..Default::default()
        };
        let dict = Dictionary::build(&cfg, &table).unwrap();
        let sample = signed_sample(&AdditiveModel::constant(2, -0.3), &table).unwrap();
        let sel = dict.select(&sample).unwrap();
        let recomputed = sample.dot(&table.column(&sel.atom));
        assert!((recomputed - sel.d).abs() < 1e-12);
        for k in 0..2 {
            for i in 0..=20 {
                for j in 0..=20 {
                    for (a1, a2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                        let atom = Atom::Sigmoid {
                            k,
                            threshold: 1,
                            a1,
                            a2,
                            c1: -1.0 + 0.1 * i as f64,
                            c2: -1.0 + 0.1 * j as f64,
                        };
                        assert!(sample.dot(&table.column(&atom)).abs() <= sel.score + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn hawkes_oracle_matches_its_column() {
        let tl = timeline();
        let table = SegmentTable::cox(&tl);
        let cfg = DictionaryConfig {
            intercept: false,
            linear: false,
            hawkes_feature: Some(HawkesFeatureConfig::default()),
            weights: WeightScheme::Unit,
            ..Default::default()
        };
        let dict = Dictionary::build(&cfg, &table).unwrap();
        let sample = signed_sample(&AdditiveModel::constant(2, 0.0), &table).unwrap();
        let sel = dict.select(&sample).unwrap();
        assert_eq!(sel.column, table.column(&sel.atom));
        for i in 0..16 {
            let decay = 0.1 * 100f64.powf(i as f64 / 15.0);
            let atom = Atom::HawkesFeature { decay, cap: 10.0 };
            assert!(sample.dot(&table.column(&atom)).abs() <= sel.score + 1e-12);
        }
    }
}
