//! Synthetic designs: Gaussian covariates with Toeplitz correlation, additive
//! true log-intensities, and exact simulation of Cox and self-exciting paths.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`; replication `r`
//! uses stream `r`, and the Monte Carlo centering constant uses stream
//! [`GAMMA_STREAM`], so replications are independent of scheduling.

use nalgebra::{DMatrix, DVector};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hawkes::simulate_duration;
use crate::timeline::{build_timeline, EventTimeline};

pub const GAMMA_STREAM: u64 = u64::MAX;
pub const CLIP: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    /// `b_k x_k`
    Linear,
    /// `b_k (|x_k| + 0.5 x_k)`
    Convex,
    /// `g_0 = 0`
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `b_k = 1` for the first three coordinates.
    FewLarge,
    /// `b_k = 1/sqrt(10)` for the first ten coordinates.
    ManySmall,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Dynamics {
    Iid,
    /// `X_i = clip(phi X_{i-1} + eps_i)` at `±2`, `X_0 = eps_0`.
    Var1 {
        phi: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesDesign {
    pub c0: f64,
    pub a0: f64,
    /// Abort when the excitation exceeds this.
    pub ceiling: f64,
    /// `false` removes the self-excitation, leaving `c0 exp{g_0}`.
    pub excitation: bool,
}

impl HawkesDesign {
    pub fn new(c0: f64, a0: f64) -> Self {
        HawkesDesign { c0, a0, ceiling: 1e6, excitation: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    #[serde(rename = "K")]
    pub k: usize,
    pub rho: f64,
    pub truth: Truth,
    pub profile: Profile,
    pub dynamics: Dynamics,
    pub n: usize,
    pub hawkes: Option<HawkesDesign>,
    pub seed: u64,
}

impl SimDesign {
    /// Cox design with iid covariates.
    pub fn cox(k: usize, rho: f64, truth: Truth, profile: Profile, n: usize, seed: u64) -> Self {
        SimDesign { k, rho, truth, profile, dynamics: Dynamics::Iid, n, hawkes: None, seed }
    }

    /// Self-exciting design with autoregressive covariates (`phi = 0.95`).
    pub fn hawkes(
        k: usize,
        rho: f64,
        truth: Truth,
        profile: Profile,
        n: usize,
        hawkes: HawkesDesign,
        seed: u64,
    ) -> Self {
        SimDesign { k, rho, truth, profile, dynamics: Dynamics::Var1 { phi: 0.95 }, n, hawkes: Some(hawkes), seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be positive".into()));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::CholeskyFailure { rho: self.rho });
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        if let Dynamics::Var1 { phi } = self.dynamics {
            if !(phi.abs() < 1.0) {
                return Err(Error::InvalidParameter(format!("phi = {phi} is not stationary")));
            }
        }
        if let Some(h) = &self.hawkes {
            if !(h.c0 > 0.0 && h.a0 > 0.0 && h.ceiling > 1.0) {
                return Err(Error::InvalidParameter("hawkes design needs c0, a0 > 0".into()));
            }
        }
        Ok(())
    }

    /// Whether every setting is one of the published menu values.
    pub fn is_standard(&self) -> bool {
        let dyn_ok = match (self.dynamics, self.hawkes) {
            (Dynamics::Iid, None) => true,
            (Dynamics::Var1 { phi }, Some(h)) => phi == 0.95 && h.c0 == 2.0 && h.a0 == 1.3 && h.excitation,
            _ => false,
        };
        matches!(self.k, 10 | 50) && (self.rho == 0.0 || self.rho == 0.75) && self.truth != Truth::Zero && dyn_ok
    }

    /// True coefficients `b_0k`.
    pub fn coefficients(&self) -> Vec<f64> {
        (0..self.k)
            .map(|k| match (self.truth, self.profile) {
                (Truth::Zero, _) => 0.0,
                (_, Profile::FewLarge) if k < 3 => 1.0,
                (_, Profile::ManySmall) if k < 10 => 1.0 / 10f64.sqrt(),
                _ => 0.0,
            })
            .collect()
    }

    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Additive truth `gamma + sum_k g_0^{(k)}(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub truth: Truth,
    pub coefs: Vec<f64>,
    pub gamma: f64,
}

impl TrueModel {
    pub fn new(design: &SimDesign, gamma: f64) -> Self {
        TrueModel { truth: design.truth, coefs: design.coefficients(), gamma }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.gamma + additive_part(self.truth, &self.coefs, x)
    }
}

fn additive_part(truth: Truth, coefs: &[f64], x: &[f64]) -> f64 {
    coefs
        .iter()
        .zip(x)
        .filter(|(b, _)| **b != 0.0)
        .map(|(b, &x)| match truth {
            Truth::Linear => b * x,
            Truth::Convex => b * (x.abs() + 0.5 * x),
            Truth::Zero => 0.0,
        })
        .sum()
}

/// `sum_k g_0^{(k)}(x)` without centering.
pub fn true_g0(design: &SimDesign, x: &[f64]) -> f64 {
    additive_part(design.truth, &design.coefficients(), x)
}

/// Lower Cholesky factor of `Cov(X_k, X_l) = rho^{|k-l|}`.
pub fn toeplitz_cholesky(k: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::CholeskyFailure { rho });
    }
    let cov = DMatrix::from_fn(k, k, |i, j| rho.powi((i as i32 - j as i32).abs()));
    cov.cholesky().map(|c| c.l()).ok_or(Error::CholeskyFailure { rho })
}

/// Draws one clipped correlated Gaussian vector.
struct InnovationSampler {
    chol: DMatrix<f64>,
    identity: bool,
}

impl InnovationSampler {
    fn new(k: usize, rho: f64) -> Result<Self> {
        Ok(InnovationSampler { chol: toeplitz_cholesky(k, rho)?, identity: rho == 0.0 })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let k = self.chol.nrows();
        let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let x = if self.identity { z } else { (&self.chol * DVector::from_vec(z)).data.into() };
        x.into_iter().map(|v: f64| v.clamp(-CLIP, CLIP)).collect()
    }
}

/// Covariate rows `X(T_0) .. X(T_{rows-1})`.
pub fn gen_covariates<R: Rng>(design: &SimDesign, rows: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    design.validate()?;
    let sampler = InnovationSampler::new(design.k, design.rho)?;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(rows);
    for _ in 0..rows {
        let eps = sampler.draw(rng);
        let x = match (design.dynamics, out.last()) {
            (Dynamics::Var1 { phi }, Some(prev)) => {
                prev.iter().zip(&eps).map(|(p, e)| (phi * p + e).clamp(-CLIP, CLIP)).collect()
            }
            _ => eps,
        };
        out.push(x);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub gamma: f64,
    /// Standard error of `gamma` (delta method on the mean, batch means for autoregressive draws).
    pub se: f64,
    pub draws: usize,
    pub seed: u64,
    pub stream: u64,
}

/// `gamma = -ln E exp{sum_k g_0^{(k)}(X)}` by Monte Carlo, so that `E exp{g_0} = 1`.
pub fn centering_gamma(design: &SimDesign, draws: usize) -> Result<GammaEstimate> {
    design.validate()?;
    let coefs = design.coefficients();
    let done = |gamma, se| GammaEstimate { gamma, se, draws, seed: design.seed, stream: GAMMA_STREAM };
    if coefs.iter().all(|&b| b == 0.0) || design.truth == Truth::Zero {
        return Ok(done(0.0, 0.0));
    }
    if draws < 2 {
        return Err(Error::InvalidParameter("centering needs at least two draws".into()));
    }
    let mut rng = design.rng(GAMMA_STREAM);
    let sampler = InnovationSampler::new(design.k, design.rho)?;
    let values: Vec<f64> = match design.dynamics {
        Dynamics::Iid => {
            (0..draws).map(|_| additive_part(design.truth, &coefs, &sampler.draw(&mut rng)).exp()).collect()
        }
        Dynamics::Var1 { phi } => {
            let burn_in = (20.0 / (1.0 - phi.abs())).ceil() as usize;
            let mut x = sampler.draw(&mut rng);
            let mut out = Vec::with_capacity(draws);
            for i in 0..burn_in + draws {
                let eps = sampler.draw(&mut rng);
                for (xk, e) in x.iter_mut().zip(&eps) {
                    *xk = (phi * *xk + e).clamp(-CLIP, CLIP);
                }
                if i >= burn_in {
                    out.push(additive_part(design.truth, &coefs, &x).exp());
                }
            }
            out
        }
    };
    let mean = values.iter().sum::<f64>() / draws as f64;
    let se_mean = match design.dynamics {
        Dynamics::Iid => {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
            (var / draws as f64).sqrt()
        }
        Dynamics::Var1 { .. } => batch_means_se(&values, 100),
    };
    Ok(done(-mean.ln(), se_mean / mean))
}

fn batch_means_se(values: &[f64], batches: usize) -> f64 {
    let size = values.len() / batches;
    if size < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> =
        values.chunks_exact(size).take(batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

#[derive(Clone, Debug)]
pub struct SimulatedPath {
    pub timeline: EventTimeline,
    /// Covariate rows `X(T_0) .. X(T_n)`.
    pub covariates: Vec<Vec<f64>>,
    /// True compensator over each inter-jump interval.
    pub residuals: Vec<f64>,
}

fn assemble(times: &[f64], covariates: &[Vec<f64>]) -> Result<EventTimeline> {
    let horizon = *times.last().expect("at least one jump");
    let mut updates = Vec::with_capacity(times.len());
    updates.push((0.0, covariates[0].clone()));
    for (t, x) in times.iter().zip(&covariates[1..]) {
        updates.push((*t, x.clone()));
    }
    build_timeline(updates, times.to_vec(), horizon)
}

/// Cox path: `T_i - T_{i-1} = E_i / exp{g_0(X(T_{i-1}))}`, covariates updating at jumps.
pub fn simulate_cox(design: &SimDesign, replication: u64) -> Result<SimulatedPath> {
    design.validate()?;
    if design.hawkes.is_some() {
        return Err(Error::InvalidParameter("design is self-exciting; use simulate_hawkes_cov".into()));
    }
    let truth = TrueModel::new(design, 0.0);
    let mut rng = design.rng(replication);
    let covariates = gen_covariates(design, design.n + 1, &mut rng)?;
    let mut times = Vec::with_capacity(design.n);
    let mut residuals = Vec::with_capacity(design.n);
    let mut t = 0.0;
    for x in covariates.iter().take(design.n) {
        let e: f64 = rng.sample(Exp1);
        let s = e / truth.eval(x).exp();
        if !(t + s > t) {
            return Err(Error::TimeResolution { t });
        }
        t += s;
        times.push(t);
        residuals.push(e);
    }
    Ok(SimulatedPath { timeline: assemble(&times, &covariates)?, covariates, residuals })
}

/// Self-exciting path by inversion of the closed-form compensator.
pub fn simulate_hawkes_cov(design: &SimDesign, gamma: f64, replication: u64) -> Result<SimulatedPath> {
    design.validate()?;
    let hd = design.hawkes.ok_or_else(|| Error::InvalidParameter("design has no hawkes parameters".into()))?;
    let truth = TrueModel::new(design, gamma);
    let mut rng = design.rng(replication);
    let sampler = InnovationSampler::new(design.k, design.rho)?;
    let phi = match design.dynamics {
        Dynamics::Var1 { phi } => phi,
        Dynamics::Iid => 0.0,
    };
    let mut x = sampler.draw(&mut rng);
    let mut covariates = Vec::with_capacity(design.n + 1);
    let mut times = Vec::with_capacity(design.n);
    let mut residuals = Vec::with_capacity(design.n);
    let mut z = if hd.excitation { 1.0 } else { 0.0 };
    let mut t = 0.0;
    for _ in 0..design.n {
        let y = truth.eval(&x).exp();
        let u: f64 = rng.sample(Open01);
        let s = simulate_duration(hd.c0 * y, y * z, hd.a0, u)?;
        if !(t + s > t) {
            return Err(Error::TimeResolution { t });
        }
        t += s;
        times.push(t);
        residuals.push(-u.ln());
        if hd.excitation {
            z = z * (-hd.a0 * s).exp() + 1.0;
            if z > hd.ceiling {
                return Err(Error::ExplosionGuard { z, ceiling: hd.ceiling });
            }
        }
        let eps = sampler.draw(&mut rng);
        let next: Vec<f64> = x.iter().zip(&eps).map(|(p, e)| (phi * p + e).clamp(-CLIP, CLIP)).collect();
        covariates.push(std::mem::replace(&mut x, next));
    }
    covariates.push(x);
    Ok(SimulatedPath { timeline: assemble(&times, &covariates)?, covariates, residuals })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub design: SimDesign,
    pub standard_design: bool,
    pub replication: u64,
    pub rng: String,
    pub gamma: Option<GammaEstimate>,
    pub coefficients: Vec<f64>,
}

pub fn manifest(design: &SimDesign, replication: u64, gamma: Option<GammaEstimate>) -> Manifest {
    Manifest {
        design: design.clone(),
        standard_design: design.is_standard(),
        replication,
        rng: format!("ChaCha8Rng seed_from_u64({}) stream {}", design.seed, replication),
        gamma,
        coefficients: design.coefficients(),
    }
}
