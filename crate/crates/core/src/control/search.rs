//! Random-search synthesis over a parametric controller family, keeping the
//! evaluated pool for softmin differentiation.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_cost, ControlPolicy, CostFunction, MeanAcc, SimBuffers, SynthesisResult};
use crate::dynamics::{NoiseBank, SystemModel};
use crate::error::{config_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PolicyFamily {
    CarHierarchical,
    BumpMatching { centers: Vec<f64>, width: f64 },
}

impl PolicyFamily {
    pub fn dim(&self) -> usize {
        match self {
            PolicyFamily::CarHierarchical => 4,
            PolicyFamily::BumpMatching { centers, .. } => centers.len() + 2,
        }
    }

    pub fn policy<T: Scalar>(&self, theta: &[T]) -> ControlPolicy<T> {
        match self {
            PolicyFamily::CarHierarchical => ControlPolicy::CarHierarchical {
                theta: [theta[0], theta[1], theta[2], theta[3]],
            },
            PolicyFamily::BumpMatching { centers, width } => ControlPolicy::BumpMatching {
                theta: nalgebra::DVector::from_column_slice(theta),
                centers: centers.iter().map(|&c| T::of(c)).collect(),
                width: T::of(*width),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub n_candidates: usize,
    pub n_eval_rollouts: usize,
    /// Sampling box `[lo, hi]` applied to every coordinate of `θ`.
    pub box_lo: f64,
    pub box_hi: f64,
    /// Softmin temperature as a multiple of the pool's cost standard deviation.
    pub temperature_scale: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_candidates: 300,
            n_eval_rollouts: 30,
            box_lo: 0.0,
            box_hi: 2.0,
            temperature_scale: 0.1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_candidates == 0 || self.n_eval_rollouts == 0 {
            return Err(config_err("random search needs at least one candidate and one rollout"));
        }
        if !(self.box_hi >= self.box_lo) {
            return Err(config_err("random-search box must satisfy lo ≤ hi"));
        }
        if !(self.temperature_scale >= 0.0) {
            return Err(config_err("softmin temperature scale must be nonnegative"));
        }
        Ok(())
    }
}

/// Candidates, their costs on the synthesis model, and the frozen noise used
/// to evaluate them.
#[derive(Clone, Debug)]
pub struct CandidatePool<T: Scalar> {
    pub family: PolicyFamily,
    pub thetas: Vec<Vec<T>>,
    pub costs: Vec<f64>,
    pub temperature: f64,
    pub noise: Arc<NoiseBank<T>>,
}

impl<T: Scalar> CandidatePool<T> {
    pub fn weights(&self) -> Vec<f64> {
        softmin_weights(&self.costs, self.temperature)
    }
}

/// `w_i ∝ exp(−(c_i − min c)/τ)`; `τ = 0` puts all mass on the first minimizer.
pub fn softmin_weights(costs: &[f64], temperature: f64) -> Vec<f64> {
    let mut best = None;
    for (i, &c) in costs.iter().enumerate() {
        if c.is_finite() && best.is_none_or(|b: usize| c < costs[b]) {
            best = Some(i);
        }
    }
    let mut w = vec![0.0; costs.len()];
    let Some(b) = best else { return w };
    if temperature <= 0.0 {
        w[b] = 1.0;
        return w;
    }
    let min = costs[b];
    let mut z = 0.0;
    for (wi, &c) in w.iter_mut().zip(costs) {
        if c.is_finite() {
            *wi = (-(c - min) / temperature).exp();
            z += *wi;
        }
    }
    w.iter_mut().for_each(|v| *v /= z);
    w
}

/// Mean cost of every `θ` on `model` under the shared noise bank.
pub fn evaluate_pool<T: Scalar>(
    model: &SystemModel<T>,
    cost: &CostFunction<T>,
    family: &PolicyFamily,
    thetas: &[Vec<T>],
    noise: &NoiseBank<T>,
) -> Vec<f64> {
    thetas
        .par_iter()
        .map_init(
            || SimBuffers::new(model),
            |buf, theta| {
                let policy = family.policy(theta);
                let mut acc = MeanAcc::default();
                for r in 0..noise.rollouts() {
                    acc.push(simulate_cost(model, cost, &policy, noise.rollout(r), buf).to_f64());
                }
                acc.estimate().mean
            },
        )
        .collect()
}

/// Samples `θ` uniformly from the box, evaluates all candidates (plus any
/// `include`d ones, placed first) with common random numbers, and returns the
/// best together with the pool.
pub fn synthesize_random_search<T: Scalar, R: Rng + ?Sized>(
    model: &SystemModel<T>,
    cost: &CostFunction<T>,
    family: &PolicyFamily,
    cfg: &SearchConfig,
    include: &[Vec<T>],
    rng: &mut R,
) -> Result<SynthesisResult<T>> {
    cfg.validate()?;
    let dim = family.dim();
    if include.iter().any(|t| t.len() != dim) {
        return Err(config_err("included candidate has the wrong dimension"));
    }
    let noise_seed: u64 = rng.random();
    let mut thetas: Vec<Vec<T>> = include.to_vec();
    for _ in 0..cfg.n_candidates {
        thetas.push(
            (0..dim)
                .map(|_| T::of(cfg.box_lo + (cfg.box_hi - cfg.box_lo) * rng.random::<f64>()))
                .collect(),
        );
    }
    let noise = Arc::new(NoiseBank::new(noise_seed, cfg.n_eval_rollouts, model.horizon(), model.d_x()));
    let costs = evaluate_pool(model, cost, family, &thetas, &noise);
    let mut best: Option<usize> = None;
    for (i, &c) in costs.iter().enumerate() {
        if c.is_finite() && best.is_none_or(|b| c < costs[b]) {
            best = Some(i);
        }
    }
    let best = best.ok_or_else(|| Error::SynthesisFailed("every random-search candidate diverged".into()))?;
    let finite: Vec<f64> = costs.iter().copied().filter(|c| c.is_finite()).collect();
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    let var = finite.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / finite.len() as f64;
    let temperature = cfg.temperature_scale * var.sqrt();
    Ok(SynthesisResult {
        policy: family.policy(&thetas[best]),
        estimated_cost: costs[best],
        candidate_pool: Some(CandidatePool {
            family: family.clone(),
            thetas,
            costs,
            temperature,
            noise,
        }),
    })
}
