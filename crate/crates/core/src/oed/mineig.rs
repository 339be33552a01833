//! MinEig: doubling rounds of trace-inverse design until the collected
//! covariates have a large enough minimum eigenvalue.

use serde::{Deserialize, Serialize};

use super::fw::{dynamic_oed, Warmup};
use super::objective::DesignObjective;
use super::oracle::RegretOracle;
use super::policy::ExplorationPolicy;
use crate::dynamics::Covariates;
use crate::error::{config_err, Error, Result};
use crate::scalar::Scalar;

/// Eigenvalues above `−ZERO_TOLERANCE · tr(Σ)` count as nonnegative.
pub const ZERO_TOLERANCE: f64 = 1e-10;

/// Round sizes `N_j = ⌈2^{j/3}⌉ − 1`, `K_j = ⌈2^{2j/3}⌉`.
pub fn round_sizes(j: usize) -> (usize, usize) {
    let n = 2f64.powf(j as f64 / 3.0).ceil() as usize - 1;
    let k = 2f64.powf(2.0 * j as f64 / 3.0).ceil() as usize;
    (n, k)
}

/// Episodes consumed by round `j`: `(N_j + 1)·K_j`.
pub fn round_episodes(j: usize) -> usize {
    let (n, k) = round_sizes(j);
    (n + 1) * k
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EigThreshold {
    /// Stop once `λ_min(Σ_j) ≥ c·T_j`.
    Practical { c: f64 },
    /// `λ_min(Σ_j) ≥ 12544·D·d_ψ·log(2Ñ(2 + 32T_j)/δ)`.
    Strict { d_bound: f64, d_psi: f64, target_scale: f64, delta: f64 },
}

impl EigThreshold {
    pub fn value(&self, t_j: usize) -> f64 {
        let t = t_j as f64;
        match self {
            EigThreshold::Practical { c } => c * t,
            EigThreshold::Strict { d_bound, d_psi, target_scale, delta } => {
                12544.0 * d_bound * d_psi * (2.0 * target_scale * (2.0 + 32.0 * t) / delta).ln()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinEigConfig {
    pub threshold: EigThreshold,
    pub max_rounds: usize,
    pub max_episodes: usize,
}

impl MinEigConfig {
    pub fn practical(c: f64, max_episodes: usize) -> Self {
        Self {
            threshold: EigThreshold::Practical { c },
            max_rounds: 24,
            max_episodes,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MinEigOutcome<T: Scalar> {
    pub policies: Vec<ExplorationPolicy<T>>,
    /// Covariates of the terminating round.
    pub covariates: Covariates<T>,
    pub rounds: usize,
    pub lambda_min: f64,
    pub episodes_used: usize,
}

pub fn min_eig<T: Scalar>(oracle: &mut dyn RegretOracle<T>, cfg: &MinEigConfig) -> Result<MinEigOutcome<T>> {
    if cfg.max_rounds == 0 {
        return Err(config_err("MinEig needs at least one round"));
    }
    let start = oracle.episodes_used();
    let mut best = f64::NEG_INFINITY;
    for j in 1..=cfg.max_rounds {
        let (n, k) = round_sizes(j);
        let t_j = (n + 1) * k;
        let used = oracle.episodes_used() - start;
        if used + t_j > cfg.max_episodes || t_j > oracle.remaining() {
            return Err(Error::MinEigTimeout { best_lambda_min: best, episodes: used });
        }
        let lam_j = (t_j as f64).powf(-1.0 / 18.0);
        let objective = DesignObjective::reg_trace_inverse(T::of(lam_j));
        let out = dynamic_oed(&objective, n, k, oracle, &Warmup::Oracle)?;
        let lam_min = out.covariates.min_eigenvalue().to_f64();
        best = best.max(lam_min);
        let threshold = cfg.threshold.value(t_j);
        let tol = ZERO_TOLERANCE * out.covariates.lambda.trace().to_f64();
        log::debug!("mineig round {j}: T={t_j}, λ_min={lam_min:.4e}, threshold={threshold:.4e}");
        if lam_min >= threshold - tol {
            return Ok(MinEigOutcome {
                policies: out.policies,
                covariates: out.covariates,
                rounds: j,
                lambda_min: lam_min,
                episodes_used: oracle.episodes_used() - start,
            });
        }
    }
    Err(Error::MinEigTimeout {
        best_lambda_min: best,
        episodes: oracle.episodes_used() - start,
    })
}
