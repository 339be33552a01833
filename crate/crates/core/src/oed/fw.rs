//! DynamicOED: Frank-Wolfe over the unknown covariance hull, with each linear
//! minimization delegated to a regret oracle.

use nalgebra::DMatrix;

use super::objective::DesignObjective;
use super::oracle::{OracleEpisode, RegretOracle};
use super::policy::ExplorationPolicy;
use crate::dynamics::Covariates;
use crate::error::{config_err, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// How the first `K` episodes are chosen.
#[derive(Clone, Debug)]
pub enum Warmup<T: Scalar> {
    /// Ask the oracle with the gradient at `Γ = 0`.
    Oracle,
    /// Replay a fixed policy.
    Policy(ExplorationPolicy<T>),
}

/// Smallest cost normalizer.
pub const NORMALIZER_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct OedOutcome<T: Scalar> {
    /// Unnormalized sum over all `(N+1)K` episodes.
    pub covariates: Covariates<T>,
    pub policies: Vec<ExplorationPolicy<T>>,
    pub episodes_used: usize,
    pub diverged: usize,
    /// `Φ(Γ_n)` for `n = 0..=N`.
    pub objective_trace: Vec<f64>,
    /// Frank-Wolfe gap `⟨∇Φ(Γ_{N−1}), Γ_{N−1} − y_N⟩` of the last iteration.
    pub fw_gap: f64,
    /// Largest per-episode `‖ψ‖_op` seen.
    pub max_episode_norm: f64,
    iterate: DMatrix<T>,
}

impl<T: Scalar> OedOutcome<T> {
    /// Final normalized iterate `Γ_N`.
    pub fn iterate(&self) -> &DMatrix<T> {
        &self.iterate
    }

    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}

struct Tally<T: Scalar> {
    sum: DMatrix<T>,
    psis: Vec<DMatrix<T>>,
    policies: Vec<ExplorationPolicy<T>>,
    diverged: usize,
    max_norm: f64,
}

impl<T: Scalar> Tally<T> {
    fn absorb(&mut self, episodes: Vec<OracleEpisode<T>>) -> DMatrix<T> {
        let d = self.sum.nrows();
        let mut batch = DMatrix::zeros(d, d);
        let k = episodes.len();
        for ep in episodes {
            batch += &ep.psi;
            self.max_norm = self.max_norm.max(linalg::sym_op_norm(&ep.psi).to_f64());
            self.diverged += usize::from(ep.diverged);
            self.psis.push(ep.psi);
            self.policies.push(ep.policy);
        }
        self.sum += &batch;
        batch / T::of_count(k)
    }
}

/// Runs `N` Frank-Wolfe iterations of `K` oracle episodes each after `K`
/// warmup episodes. Step size `1/(n+1)`, so `Γ_N` is the running mean.
pub fn dynamic_oed<T: Scalar>(
    objective: &DesignObjective<T>,
    n: usize,
    k: usize,
    oracle: &mut dyn RegretOracle<T>,
    warmup: &Warmup<T>,
) -> Result<OedOutcome<T>> {
    if k == 0 {
        return Err(config_err("dynamic_oed needs K ≥ 1"));
    }
    let d = oracle.d_phi();
    let start = oracle.episodes_used();
    let mut tally = Tally {
        sum: DMatrix::zeros(d, d),
        psis: Vec::new(),
        policies: Vec::new(),
        diverged: 0,
        max_norm: 0.0,
    };

    let warm = match warmup {
        Warmup::Oracle => {
            let xi = objective.grad(&DMatrix::zeros(d, d))?;
            let m = normalizer(&xi, &[]);
            oracle.run(&(xi / T::of(m)), k)?
        }
        Warmup::Policy(p) => (0..k).map(|_| oracle.replay(p)).collect::<Result<Vec<_>>>()?,
    };
    let mut gamma = tally.absorb(warm);
    let mut trace = vec![objective.value(&gamma)?.to_f64()];
    let mut gap = f64::NAN;

    for it in 1..=n {
        let xi = objective.grad(&gamma)?;
        let m = normalizer(&xi, &tally.psis);
        let episodes = oracle.run(&(&xi / T::of(m)), k)?;
        let y = tally.absorb(episodes);
        gap = linalg::frob_inner(&xi, &(&gamma - &y)).to_f64();
        let step = T::one() / T::of_count(it + 1);
        gamma = &gamma * (T::one() - step) + &y * step;
        trace.push(objective.value(&gamma)?.to_f64());
        log::debug!("fw iteration {it}: objective {:.6e}, gap {:.3e}", trace[it], gap);
    }

    let total = (n + 1) * k;
    Ok(OedOutcome {
        covariates: Covariates::from_matrix(tally.sum, total),
        policies: tally.policies,
        episodes_used: oracle.episodes_used() - start,
        diverged: tally.diverged,
        objective_trace: trace,
        fw_gap: gap,
        max_episode_norm: tally.max_norm,
        iterate: gamma,
    })
}

/// `max_ep |tr(Ξ ψ_ep)|` over the episodes seen so far, floored.
fn normalizer<T: Scalar>(xi: &DMatrix<T>, psis: &[DMatrix<T>]) -> f64 {
    psis.iter()
        .map(|p| linalg::trace_product(xi, p).to_f64().abs())
        .fold(NORMALIZER_FLOOR, f64::max)
}
