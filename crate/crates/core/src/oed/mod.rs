//! Experiment design on the covariance hull: design objectives, DynamicOED,
//! the Thompson-sampling MPC oracle, MinEig and LearnExpΠ.

mod fw;
mod learn;
mod mineig;
mod objective;
mod oracle;
mod policy;

use serde::{Deserialize, Serialize};

pub use fw::{dynamic_oed, OedOutcome, Warmup, NORMALIZER_FLOOR};
pub use learn::{learn_exp_policies, LearnExpConfig, LearnExpOutcome, StopChecks};
pub use mineig::{min_eig, round_episodes, round_sizes, EigThreshold, MinEigConfig, MinEigOutcome};
pub use objective::DesignObjective;
pub use oracle::{sample_posterior, EnumeratedOracle, OracleEpisode, RegretOracle, ThompsonConfig, ThompsonMpcOracle};
pub use policy::{ExplorationPolicy, MpcConfig, MpcObjective, MpcRunner, MpcSpec};

/// Constants of the analysis, carried for reporting and strict-mode checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Bound on `tr ψ(τ)`, `d_x·H·B_φ²`.
    pub d_bound: f64,
    /// Lifted dimension `d_x·d_phi`.
    pub d_psi: f64,
    pub lam_min_star: f64,
    pub c_r: f64,
    pub p_r: f64,
    pub alpha: f64,
    pub m_bound: f64,
}

impl TheoryConstants {
    pub fn new(d_x: usize, d_phi: usize, horizon: usize, b_phi: f64) -> Self {
        Self {
            d_bound: d_x as f64 * horizon as f64 * b_phi * b_phi,
            d_psi: (d_x * d_phi) as f64,
            lam_min_star: 1.0,
            c_r: 1.0,
            p_r: 0.5,
            alpha: 1.0,
            m_bound: 1.0,
        }
    }
}
