//! Dictionary atoms: the univariate building blocks of the additive log-intensity.
//!
//! Every atom depends on a single covariate coordinate `k` (the sigmoid
//! transition atom additionally reads a threshold coordinate, the Hawkes
//! feature reads the jump history instead). Inputs are expected in `[-1, 1]`
//! after preprocessing; [`Atom::bound`] is the sup-norm on that cube.

mod oracle;
mod simplex;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use oracle::{Dictionary, Selection};
pub use simplex::{bernstein_lp_oracle, maximize_lp, LpSolution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrigKind {
    Sin,
    Cos,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Atom {
    /// `x_k`
    Linear {
        k: usize,
    },
    /// `x_k^power`
    Monomial {
        k: usize,
        power: u32,
    },
    /// `sin(2 pi v x_k)` or `cos(2 pi v x_k)`
    Trig {
        k: usize,
        kind: TrigKind,
        frequency: u32,
    },
    /// `a1 x_k + a2 x_k phi(c1 z - c2)` with logistic `phi` and `z = x_{threshold}`.
    Sigmoid {
        k: usize,
        threshold: usize,
        a1: f64,
        a2: f64,
        c1: f64,
        c2: f64,
    },
    /// `sum_v a_v C(V,v) u^v (1-u)^(V-v)` with `u = (x_k + 1) / 2`; order `V = coefs.len() - 1`.
    Bernstein {
        k: usize,
        coefs: Vec<f64>,
    },
    /// `min(sum_{T_j <= s} exp(-decay (s - T_j)), cap)` at the segment start `s`.
    HawkesFeature {
        decay: f64,
        cap: f64,
    },
    Intercept,
}

/// Jump history needed to evaluate a [`Atom::HawkesFeature`].
#[derive(Clone, Copy, Debug)]
pub struct HawkesAux<'a> {
    /// Anchor time; jumps at or before it are counted.
    pub at: f64,
    pub jumps: &'a [f64],
}

pub fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Bernstein basis values `q_0(u) .. q_V(u)`.
pub fn bernstein_basis(order: usize, u: f64) -> Vec<f64> {
    (0..=order).map(|v| binomial(order, v) * u.powi(v as i32) * (1.0 - u).powi((order - v) as i32)).collect()
}

pub(crate) fn bernstein_input(x: f64) -> f64 {
    ((x + 1.0) / 2.0).clamp(0.0, 1.0)
}

pub(crate) fn discounted_count(decay: f64, at: f64, jumps: &[f64]) -> f64 {
    jumps.iter().take_while(|&&t| t <= at).map(|&t| (-decay * (at - t)).exp()).sum()
}

impl Atom {
    /// Position in the deterministic tie-break order.
    pub fn family_tag(&self) -> u8 {
        match self {
            Atom::Linear { .. } => 0,
            Atom::Monomial { .. } => 1,
            Atom::Trig { .. } => 2,
            Atom::Sigmoid { .. } => 3,
            Atom::Bernstein { .. } => 4,
            Atom::HawkesFeature { .. } => 5,
            Atom::Intercept => 6,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Atom::Linear { .. } => "linear",
            Atom::Monomial { .. } => "monomial",
            Atom::Trig { .. } => "trig",
            Atom::Sigmoid { .. } => "sigmoid",
            Atom::Bernstein { .. } => "bernstein",
            Atom::HawkesFeature { .. } => "hawkes",
            Atom::Intercept => "intercept",
        }
    }

    pub fn coordinate(&self) -> Option<usize> {
        match *self {
            Atom::Linear { k }
            | Atom::Monomial { k, .. }
            | Atom::Trig { k, .. }
            | Atom::Sigmoid { k, .. }
            | Atom::Bernstein { k, .. } => Some(k),
            Atom::HawkesFeature { .. } | Atom::Intercept => None,
        }
    }

    pub fn needs_history(&self) -> bool {
        matches!(self, Atom::HawkesFeature { .. })
    }

    /// Sup of `|theta(x)|` over `x` in `[-1, 1]^K`.
    pub fn bound(&self) -> f64 {
        match self {
            Atom::Sigmoid { a1, a2, .. } => a1.abs() + a2.abs(),
            Atom::Bernstein { coefs, .. } => coefs.iter().fold(0.0, |m, a| m.max(a.abs())),
            Atom::HawkesFeature { cap, .. } => *cap,
            _ => 1.0,
        }
    }

    /// Fitted parameters carried by the atom, as counted by AIC.
    pub fn parameter_count(&self) -> usize {
        match self {
            Atom::Sigmoid { .. } => 4,
            Atom::Bernstein { coefs, .. } => coefs.len(),
            _ => 1,
        }
    }

    /// Evaluates a covariate-only atom. Hawkes features return `None`.
    pub fn eval_covariate(&self, x: &[f64]) -> Option<f64> {
        Some(match self {
            Atom::Linear { k } => x[*k],
            Atom::Monomial { k, power } => x[*k].powi(*power as i32),
            Atom::Trig { k, kind, frequency } => {
                let arg = 2.0 * std::f64::consts::PI * (*frequency as f64) * x[*k];
                match kind {
                    TrigKind::Sin => arg.sin(),
                    TrigKind::Cos => arg.cos(),
                }
            }
            Atom::Sigmoid { k, threshold, a1, a2, c1, c2 } => {
                let xk = x[*k];
                a1 * xk + a2 * xk * logistic(c1 * x[*threshold] - c2)
            }
            Atom::Bernstein { k, coefs } => {
                let basis = bernstein_basis(coefs.len() - 1, bernstein_input(x[*k]));
                coefs.iter().zip(basis).map(|(a, q)| a * q).sum()
            }
            Atom::Intercept => 1.0,
            Atom::HawkesFeature { .. } => return None,
        })
    }

    /// Evaluates the atom at covariate `x`; Hawkes features also need the jump history.
    pub fn eval(&self, x: &[f64], aux: Option<&HawkesAux<'_>>) -> Result<f64> {
        if let Some(k) = self.coordinate() {
            let top = match self {
                Atom::Sigmoid { threshold, .. } => k.max(*threshold),
                _ => k,
            };
            if top >= x.len() {
                return Err(Error::DimensionMismatch { expected: top + 1, got: x.len() });
            }
        }
        match self {
            Atom::HawkesFeature { decay, cap } => {
                let aux = aux.ok_or(Error::MissingHawkesState)?;
                Ok(discounted_count(*decay, aux.at, aux.jumps).min(*cap))
            }
            _ => Ok(self.eval_covariate(x).expect("covariate atom")),
        }
    }

    pub fn params_json(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            Atom::Linear { k } => json!({ "k": k }),
            Atom::Monomial { k, power } => json!({ "k": k, "power": power }),
            Atom::Trig { k, kind, frequency } => json!({ "k": k, "kind": kind, "frequency": frequency }),
            Atom::Sigmoid { k, threshold, a1, a2, c1, c2 } => {
                json!({ "k": k, "threshold": threshold, "a1": a1, "a2": a2, "c1": c1, "c2": c2 })
            }
            Atom::Bernstein { k, coefs } => json!({ "k": k, "order": coefs.len() - 1, "coefs": coefs }),
            Atom::HawkesFeature { decay, cap } => json!({ "decay": decay, "cap": cap }),
            Atom::Intercept => json!({}),
        }
    }

    pub fn from_json(family: &str, params: &serde_json::Value) -> Result<Atom> {
        let bad = || Error::InvalidParameter(format!("malformed {family} atom: {params}"));
        let uint = |name: &str| params.get(name).and_then(|v| v.as_u64()).ok_or_else(bad);
        let real = |name: &str| params.get(name).and_then(|v| v.as_f64()).ok_or_else(bad);
        Ok(match family {
            "linear" => Atom::Linear { k: uint("k")? as usize },
            "monomial" => Atom::Monomial { k: uint("k")? as usize, power: uint("power")? as u32 },
            "trig" => Atom::Trig {
                k: uint("k")? as usize,
                kind: serde_json::from_value(params.get("kind").cloned().ok_or_else(bad)?)?,
                frequency: uint("frequency")? as u32,
            },
            "sigmoid" => Atom::Sigmoid {
                k: uint("k")? as usize,
                threshold: uint("threshold")? as usize,
                a1: real("a1")?,
                a2: real("a2")?,
                c1: real("c1")?,
                c2: real("c2")?,
            },
            "bernstein" => {
                let coefs: Vec<f64> = serde_json::from_value(params.get("coefs").cloned().ok_or_else(bad)?)?;
                if coefs.len() < 2 {
                    return Err(bad());
                }
                Atom::Bernstein { k: uint("k")? as usize, coefs }
            }
            "hawkes" => Atom::HawkesFeature { decay: real("decay")?, cap: real("cap")? },
            "intercept" => Atom::Intercept,
            _ => return Err(Error::InvalidParameter(format!("unknown atom family {family:?}"))),
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.family_name(), self.params_json())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Unit,
    EmpiricalL2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmoidConfig {
    /// Coordinate used as the transition variable `z`.
    pub threshold: usize,
    /// Points per axis of the `(c1, c2)` grid on `[-1, 1]^2`.
    pub grid: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernsteinConfig {
    pub order: usize,
    /// Lipschitz constant; `None` drops the increment cap `a_v - a_{v-1} <= alpha / V`.
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesFeatureConfig {
    pub decay_lo: f64,
    pub decay_hi: f64,
    pub grid: usize,
    pub cap: f64,
}

impl Default for HawkesFeatureConfig {
    fn default() -> Self {
        HawkesFeatureConfig { decay_lo: 0.1, decay_hi: 10.0, grid: 16, cap: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryConfig {
    pub intercept: bool,
    pub linear: bool,
    pub monomial_powers: Vec<u32>,
    /// Highest trigonometric frequency; 0 disables the family.
    pub trig_max_frequency: u32,
    pub sigmoid: Option<SigmoidConfig>,
    pub bernstein: Option<BernsteinConfig>,
    pub hawkes_feature: Option<HawkesFeatureConfig>,
    /// Coordinates the per-coordinate families range over; `None` means all.
    pub coordinates: Option<Vec<usize>>,
    pub weights: WeightScheme,
    pub weight_floor: f64,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            intercept: true,
            linear: true,
            monomial_powers: Vec::new(),
            trig_max_frequency: 0,
            sigmoid: None,
            bernstein: None,
            hawkes_feature: None,
            coordinates: None,
            weights: WeightScheme::EmpiricalL2,
            weight_floor: 1e-6,
        }
    }
}

impl DictionaryConfig {
    /// Intercept plus `x_k` for every coordinate.
    pub fn linear() -> Self {
        DictionaryConfig::default()
    }

    /// Intercept plus `x_k, x_k^2, x_k^3`.
    pub fn polynomial() -> Self {
        DictionaryConfig { linear: false, monomial_powers: vec![1, 2, 3], ..Default::default() }
    }

    pub fn intercept_only() -> Self {
        DictionaryConfig { linear: false, ..Default::default() }
    }

    pub fn with_weights(mut self, weights: WeightScheme) -> Self {
        self.weights = weights;
        self
    }

    pub fn coordinates(&self, dim: usize) -> Vec<usize> {
        match &self.coordinates {
            Some(c) => c.iter().copied().filter(|&k| k < dim).collect(),
            None => (0..dim).collect(),
        }
    }

    /// Atoms of the finite families, in tie-break order.
    pub fn finite_atoms(&self, dim: usize) -> Vec<Atom> {
        let coords = self.coordinates(dim);
        let mut atoms = Vec::new();
        if self.linear {
            atoms.extend(coords.iter().map(|&k| Atom::Linear { k }));
        }
        for &k in &coords {
            let mut powers = self.monomial_powers.clone();
            powers.sort_unstable();
            powers.dedup();
            atoms.extend(powers.into_iter().map(|power| Atom::Monomial { k, power }));
        }
        for &k in &coords {
            for frequency in 1..=self.trig_max_frequency {
                atoms.push(Atom::Trig { k, kind: TrigKind::Sin, frequency });
                atoms.push(Atom::Trig { k, kind: TrigKind::Cos, frequency });
            }
        }
        atoms.sort_by_key(|a| a.family_tag());
        if self.intercept {
            atoms.push(Atom::Intercept);
        }
        atoms
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.weight_floor > 0.0) {
            return Err(Error::InvalidParameter("weight floor must be positive".into()));
        }
        if let Some(c) = &self.coordinates {
            if let Some(&k) = c.iter().find(|&&k| k >= dim) {
                return Err(Error::DimensionMismatch { expected: dim, got: k + 1 });
            }
        }
        if let Some(s) = &self.sigmoid {
            if s.threshold >= dim {
                return Err(Error::DimensionMismatch { expected: dim, got: s.threshold + 1 });
            }
            if s.grid < 2 {
                return Err(Error::InvalidParameter("sigmoid grid needs at least 2 points".into()));
            }
        }
        if let Some(b) = &self.bernstein {
            if b.order < 1 {
                return Err(Error::InvalidParameter("bernstein order must be >= 1".into()));
            }
            if matches!(b.alpha, Some(a) if !(a > 0.0)) {
                return Err(Error::InvalidParameter("bernstein alpha must be positive".into()));
            }
        }
        if let Some(h) = &self.hawkes_feature {
            if !(h.decay_lo > 0.0 && h.decay_hi >= h.decay_lo && h.cap > 0.0 && h.grid >= 1) {
                return Err(Error::InvalidParameter("invalid hawkes feature settings".into()));
            }
        }
        Ok(())
    }
}
