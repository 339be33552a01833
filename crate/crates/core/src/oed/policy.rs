//! Exploration policies. Every variant is replayable: it stores everything
//! needed to regenerate its behavior, and a replay nonce selects a fresh
//! internal random stream.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::control::CostFunction;
use crate::dynamics::{is_diverged, standard_normals, Policy, SystemModel};
use crate::error::{config_err, Result};
use crate::linalg;
use crate::scalar::Scalar;
use crate::seed::{rng_from, rng_seeded, SimRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub n_candidates: usize,
    /// Re-plan at every step; otherwise the first plan is played open loop.
    pub replan: bool,
    /// Per-episode input energy `γ²`.
    pub power_budget: f64,
    /// Relative spread of the per-step candidate power around `γ²/H`.
    pub jitter: f64,
    /// Share of candidates perturbing the previous plan.
    pub warm_fraction: f64,
    pub warm_noise: f64,
    /// Ritz subspace size for the minimum-eigenvalue objective.
    pub eig_subspace: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            n_candidates: 256,
            replan: true,
            power_budget: 100.0,
            jitter: 0.5,
            warm_fraction: 0.25,
            warm_noise: 0.3,
            eig_subspace: 4,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_candidates == 0 {
            return Err(config_err("MPC needs at least one candidate"));
        }
        if !(self.power_budget > 0.0) {
            return Err(config_err("MPC power budget must be positive"));
        }
        if !(0.0..=1.0).contains(&self.jitter) || !(0.0..=1.0).contains(&self.warm_fraction) || !(self.warm_noise >= 0.0) {
            return Err(config_err("MPC jitter and warm-start fraction must lie in [0, 1]"));
        }
        if self.eig_subspace == 0 {
            return Err(config_err("eigenvalue subspace must be nonempty"));
        }
        Ok(())
    }
}

/// What the MPC planner optimizes over the remaining horizon.
#[derive(Clone, Debug)]
pub enum MpcObjective<T: Scalar> {
    /// Minimize `Σ φᵀ Ξ φ`.
    Quadratic(DMatrix<T>),
    /// Maximize the spectrum (lexicographically from the bottom) of
    /// `base + Σ φφᵀ`, with the episode prefix included.
    MaxMinEig(DMatrix<T>),
    /// Minimize the control cost.
    TaskCost(CostFunction<T>),
}

#[derive(Clone, Debug)]
pub struct MpcSpec<T: Scalar> {
    /// Planning model (a posterior sample `Ã`); its noise level is ignored.
    pub model: SystemModel<T>,
    pub objective: MpcObjective<T>,
    pub cfg: MpcConfig,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub enum ExplorationPolicy<T: Scalar> {
    Zero { d_u: usize },
    Gaussian { d_u: usize, sigma: f64, seed: u64 },
    /// One-hot input selecting `arm`.
    Arm { arm: usize, arms: usize },
    Mpc(Arc<MpcSpec<T>>),
}

impl<T: Scalar> ExplorationPolicy<T> {
    pub fn mpc(spec: MpcSpec<T>) -> Self {
        ExplorationPolicy::Mpc(Arc::new(spec))
    }

    pub fn label(&self) -> &'static str {
        match self {
            ExplorationPolicy::Zero { .. } => "zero",
            ExplorationPolicy::Gaussian { .. } => "gaussian",
            ExplorationPolicy::Arm { .. } => "arm",
            ExplorationPolicy::Mpc(_) => "mpc",
        }
    }

    /// An executable instance. Equal nonces give identical behavior.
    pub fn runner(&self, nonce: u64) -> Box<dyn Policy<T> + '_> {
        match self {
            ExplorationPolicy::Zero { d_u } => {
                let d_u = *d_u;
                Box::new(move |_: usize, _: &[DVector<T>], _: &[DVector<T>]| DVector::zeros(d_u))
            }
            ExplorationPolicy::Gaussian { d_u, sigma, seed } => {
                let d_u = *d_u;
                let sigma = T::of(*sigma);
                let mut rng = rng_from(*seed, &["gaussian", &nonce.to_string()]);
                Box::new(move |_: usize, _: &[DVector<T>], _: &[DVector<T>]| {
                    let mut u = DVector::zeros(d_u);
                    standard_normals(&mut rng, u.as_mut_slice());
                    u * sigma
                })
            }
            ExplorationPolicy::Arm { arm, arms } => {
                let mut u = DVector::zeros(*arms);
                u[*arm] = T::one();
                Box::new(move |_: usize, _: &[DVector<T>], _: &[DVector<T>]| u.clone())
            }
            ExplorationPolicy::Mpc(spec) => Box::new(MpcRunner::new(spec, nonce)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Score {
    Diverged,
    Cost(f64),
    /// Ascending eigenvalues; larger is better.
    Spectrum(Vec<f64>),
}

impl Score {
    /// Strict improvement, so ties keep the lower candidate index.
    fn beats(&self, other: &Score) -> bool {
        match (self, other) {
            (Score::Diverged, _) => false,
            (_, Score::Diverged) => true,
            (Score::Cost(a), Score::Cost(b)) => a < b,
            (Score::Spectrum(a), Score::Spectrum(b)) => {
                for (x, y) in a.iter().zip(b) {
                    let tol = 1e-9 * (1.0 + x.abs().max(y.abs()));
                    if x > &(y + tol) {
                        return true;
                    }
                    if x < &(y - tol) {
                        return false;
                    }
                }
                false
            }
            _ => false,
        }
    }
}

/// Ritz data of the current covariance used by the eigenvalue objective.
struct RitzBasis<T: Scalar> {
    vectors: DMatrix<T>,
    values: Vec<T>,
}

pub struct MpcRunner<'a, T: Scalar> {
    spec: &'a MpcSpec<T>,
    nonce: u64,
    rng: SimRng,
    plan: Vec<T>,
    plan_start: usize,
    cand: Vec<T>,
    x: Vec<T>,
    next: Vec<T>,
    feat: Vec<T>,
}

impl<'a, T: Scalar> MpcRunner<'a, T> {
    pub fn new(spec: &'a MpcSpec<T>, nonce: u64) -> Self {
        let d_x = spec.model.d_x();
        Self {
            spec,
            nonce,
            rng: rng_seeded(0),
            plan: Vec::new(),
            plan_start: 0,
            cand: Vec::new(),
            x: vec![T::zero(); d_x],
            next: vec![T::zero(); d_x],
            feat: vec![T::zero(); spec.model.d_phi()],
        }
    }

    fn generate(&mut self, h: usize, remaining: f64) {
        let cfg = &self.spec.cfg;
        let d_u = self.spec.model.d_u();
        let horizon = self.spec.model.horizon();
        let len = (horizon - h) * d_u;
        let n = cfg.n_candidates;
        let per_step = cfg.power_budget / horizon as f64;
        self.cand.clear();
        self.cand.resize(n * len, T::zero());

        let warm: Option<Vec<T>> = if !self.plan.is_empty() && h > self.plan_start {
            let skip = (h - self.plan_start) * d_u;
            (self.plan.len() == skip + len).then(|| self.plan[skip..].to_vec())
        } else {
            None
        };
        let n_warm = if warm.is_some() {
            ((n as f64 * cfg.warm_fraction) as usize).min(n.saturating_sub(1))
        } else {
            0
        };

        let mut dir = vec![0.0; d_u];
        for c in 0..n {
            let tail = &mut self.cand[c * len..(c + 1) * len];
            if c == 0 {
                if let Some(w) = &warm {
                    tail.copy_from_slice(w);
                }
            } else if c <= n_warm {
                let w = warm.as_ref().expect("warm candidates need a plan");
                let scale = cfg.warm_noise * per_step.sqrt();
                for (t, &wv) in tail.iter_mut().zip(w) {
                    let z: f64 = self.rng.sample(StandardNormal);
                    *t = wv + T::of(scale * z);
                }
            } else {
                let coherent = (c - n_warm) % 2 == 1;
                if coherent {
                    unit_direction(&mut self.rng, &mut dir);
                }
                for k in 0..horizon - h {
                    if !coherent {
                        unit_direction(&mut self.rng, &mut dir);
                    }
                    let spread = self.rng.random_range(-1.0..=1.0);
                    let r = (per_step * (1.0 + cfg.jitter * spread)).max(0.0).sqrt();
                    for (i, &d) in dir.iter().enumerate() {
                        tail[k * d_u + i] = T::of(r * d);
                    }
                }
            }
            let power: f64 = tail.iter().map(|v| v.to_f64() * v.to_f64()).sum();
            if power > remaining {
                let s = T::of(if remaining > 0.0 { (remaining / power).sqrt() } else { 0.0 });
                tail.iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    fn ritz_basis(&self, base: &DMatrix<T>, states: &[DVector<T>], inputs: &[DVector<T>]) -> RitzBasis<T> {
        let phi = self.spec.model.phi();
        let mut cov = base.clone();
        let mut feat = vec![T::zero(); phi.d_phi()];
        for (x, u) in states.iter().zip(inputs) {
            phi.eval_into(x.as_slice(), u.as_slice(), &mut feat);
            linalg::add_outer(&mut cov, &feat, T::one());
        }
        let eig = linalg::symmetrize(&cov).symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap_or(std::cmp::Ordering::Equal));
        let k = self.spec.cfg.eig_subspace.min(order.len());
        let vectors = DMatrix::from_fn(phi.d_phi(), k, |i, j| eig.eigenvectors[(i, order[j])]);
        let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
        RitzBasis { vectors, values }
    }

    fn score(&mut self, c: usize, h: usize, x0: &[T], ritz: Option<&RitzBasis<T>>) -> Score {
        let model = &self.spec.model;
        let d_u = model.d_u();
        let len = (model.horizon() - h) * d_u;
        let tail = &self.cand[c * len..(c + 1) * len];
        self.x.copy_from_slice(x0);
        let mut total = T::zero();
        let mut proj = ritz.map(|r| {
            let k = r.values.len();
            let mut p = DMatrix::zeros(k, k);
            for (i, &v) in r.values.iter().enumerate() {
                p[(i, i)] = v;
            }
            (p, vec![T::zero(); k])
        });
        for u in tail.chunks(d_u) {
            model.step_into(&self.x, u, &mut self.feat, &mut self.next);
            match &self.spec.objective {
                MpcObjective::Quadratic(xi) => total += linalg::quad_form(xi, &self.feat),
                MpcObjective::TaskCost(cost) => total += cost.eval(&self.x, u),
                MpcObjective::MaxMinEig(_) => {
                    let (p, v) = proj.as_mut().expect("Ritz basis");
                    let basis = &ritz.expect("Ritz basis").vectors;
                    for (j, vj) in v.iter_mut().enumerate() {
                        *vj = basis.column(j).iter().zip(&self.feat).fold(T::zero(), |s, (&b, &f)| s + b * f);
                    }
                    linalg::add_outer(p, v, T::one());
                }
            }
            if is_diverged(&self.next) {
                return Score::Diverged;
            }
            std::mem::swap(&mut self.x, &mut self.next);
        }
        match proj {
            Some((p, _)) => Score::Spectrum(linalg::sym_eigenvalues(&p).into_iter().map(|v| v.to_f64()).collect()),
            None if total.is_finite() => Score::Cost(total.to_f64()),
            None => Score::Diverged,
        }
    }
}

fn unit_direction(rng: &mut SimRng, dir: &mut [f64]) {
    loop {
        let mut norm = 0.0;
        for d in dir.iter_mut() {
            *d = rng.sample(StandardNormal);
            norm += *d * *d;
        }
        if norm > 1e-24 {
            let inv = 1.0 / norm.sqrt();
            dir.iter_mut().for_each(|d| *d *= inv);
            return;
        }
    }
}

impl<T: Scalar> Policy<T> for MpcRunner<'_, T> {
    fn begin_episode(&mut self) {
        self.rng = rng_from(self.spec.seed, &["mpc", &self.nonce.to_string()]);
        self.nonce = self.nonce.wrapping_add(1 << 32);
        self.plan.clear();
        self.plan_start = 0;
    }

    fn act(&mut self, h: usize, states: &[DVector<T>], inputs: &[DVector<T>]) -> DVector<T> {
        let d_u = self.spec.model.d_u();
        if !self.spec.cfg.replan && !self.plan.is_empty() {
            let k = h - self.plan_start;
            return DVector::from_column_slice(&self.plan[k * d_u..(k + 1) * d_u]);
        }
        let used: f64 = inputs.iter().map(|u| u.norm_squared().to_f64()).sum();
        let remaining = (self.spec.cfg.power_budget - used).max(0.0);
        self.generate(h, remaining);
        let ritz = match &self.spec.objective {
            MpcObjective::MaxMinEig(base) => Some(self.ritz_basis(base, &states[..h], inputs)),
            _ => None,
        };
        let x0 = states[h].as_slice().to_vec();
        let mut best = 0;
        let mut best_score = Score::Diverged;
        for c in 0..self.spec.cfg.n_candidates {
            let s = self.score(c, h, &x0, ritz.as_ref());
            if c == 0 || s.beats(&best_score) {
                best = c;
                best_score = s;
            }
        }
        let len = (self.spec.model.horizon() - h) * d_u;
        self.plan = self.cand[best * len..(best + 1) * len].to_vec();
        self.plan_start = h;
        DVector::from_column_slice(&self.plan[..d_u])
    }
}
