//! LearnExpΠ: doubling rounds of Hessian-weighted design regularized by
//! replays of the MinEig policies.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::fw::{dynamic_oed, Warmup};
use super::mineig::{min_eig, round_sizes, MinEigConfig};
use super::objective::DesignObjective;
use super::oracle::RegretOracle;
use super::policy::ExplorationPolicy;
use crate::dynamics::Covariates;
use crate::error::{config_err, Result};
use crate::linalg;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnExpConfig {
    pub delta: f64,
    pub max_rounds: usize,
}

impl Default for LearnExpConfig {
    fn default() -> Self {
        Self { delta: 0.1, max_rounds: 16 }
    }
}

#[derive(Clone, Debug)]
pub struct LearnExpOutcome<T: Scalar> {
    /// MinEig policies followed by the replicated Frank-Wolfe policies.
    pub policies: Vec<ExplorationPolicy<T>>,
    /// Everything collected while learning the policies.
    pub covariates: Covariates<T>,
    pub episodes_used: usize,
    pub rounds: usize,
    /// True when the budget ran out before the stopping conditions held.
    pub budget_capped: bool,
    /// `tr(M Γ⁻¹)` on the last round's combined data.
    pub score: f64,
}

/// Checks of the stopping rule for one round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopChecks {
    pub small_mineig_set: bool,
    pub small_fw_error: bool,
    pub score_margin: bool,
    pub eig_margin: bool,
}

impl StopChecks {
    pub fn all(&self) -> bool {
        self.small_mineig_set && self.small_fw_error && self.score_margin && self.eig_margin
    }
}

/// Learns a policy set whose replays minimize `tr(M Λ⁻¹)`.
///
/// `prior` is added to every round's per-episode regularizer. `mineig` caches
/// the MinEig policies and is filled on first use. At most `budget` episodes
/// are played.
pub fn learn_exp_policies<T: Scalar>(
    m: &DMatrix<T>,
    prior: &DMatrix<T>,
    mineig: &mut Vec<ExplorationPolicy<T>>,
    mineig_cfg: &MinEigConfig,
    budget: usize,
    oracle: &mut dyn RegretOracle<T>,
    cfg: &LearnExpConfig,
) -> Result<LearnExpOutcome<T>> {
    let d = oracle.d_phi();
    if m.shape() != (d, d) || prior.shape() != (d, d) {
        return Err(config_err("reduced Hessian and prior must be d_phi × d_phi"));
    }
    if cfg.max_rounds == 0 || !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(config_err("LearnExp needs max_rounds ≥ 1 and δ ∈ (0, 1)"));
    }
    let start = oracle.episodes_used();
    let limit = budget.min(oracle.remaining());
    let mut covariates = Covariates::new(d);

    if mineig.is_empty() {
        let cfg = MinEigConfig { max_episodes: mineig_cfg.max_episodes.min(limit), ..mineig_cfg.clone() };
        let out = min_eig(oracle, &cfg)?;
        covariates.merge(&out.covariates);
        *mineig = out.policies;
    }
    let n_me = mineig.len();
    let tr_m = m.trace().to_f64();

    let mut best: Option<(Vec<ExplorationPolicy<T>>, f64)> = None;
    let mut rounds = 0;
    let mut capped = true;
    for i in 1..=cfg.max_rounds {
        let (n, k) = round_sizes(i);
        let t_i = (n + 1) * k;
        let reps = t_i.div_ceil(n_me);
        let used = oracle.episodes_used() - start;
        let avail = limit.saturating_sub(used);
        let (n, k, reps, t_i) = if reps * n_me + t_i <= avail {
            (n, k, reps, t_i)
        } else if i == 1 {
            match shrink(avail, n_me) {
                Some(s) => s,
                None if avail == 0 => {
                    return Ok(LearnExpOutcome {
                        policies: mineig.clone(),
                        covariates,
                        episodes_used: oracle.episodes_used() - start,
                        rounds: 0,
                        budget_capped: true,
                        score: f64::NAN,
                    });
                }
                None => return direct(m, prior, avail, oracle, covariates, start),
            }
        } else {
            break;
        };

        let mut gamma0 = DMatrix::zeros(d, d);
        let mut s_op = 0.0f64;
        for _ in 0..reps {
            for p in mineig.iter() {
                let ep = oracle.replay(p)?;
                s_op = s_op.max(linalg::sym_op_norm(&ep.psi).to_f64());
                gamma0 += &ep.psi;
            }
        }
        covariates.merge(&Covariates::from_matrix(gamma0.clone(), reps * n_me));
        let scale = T::of_count(t_i);
        let objective = DesignObjective::weighted_a_opt(m.clone(), &gamma0 / scale + prior);
        let out = dynamic_oed(&objective, n, k, oracle, &Warmup::Oracle)?;
        covariates.merge(&out.covariates);
        s_op = s_op.max(out.max_episode_norm);
        rounds = i;

        let mut policies = mineig.clone();
        for _ in 0..reps {
            policies.extend(out.policies.iter().cloned());
        }
        let combined = &gamma0 + &out.covariates.lambda;
        let lam_min = linalg::min_eigenvalue(&combined).to_f64();
        let score = linalg::spd_inverse(&combined)
            .map(|inv| linalg::trace_product(m, &inv).to_f64())
            .unwrap_or(f64::INFINITY);
        best = Some((policies, score));

        let dev = (2.0 * t_i as f64).sqrt() * s_op * (2.0 * (2.0 * d as f64 / cfg.delta).ln()).sqrt();
        let phi = out.final_objective();
        let checks = StopChecks {
            small_mineig_set: n_me <= t_i,
            small_fw_error: out.fw_gap.max(0.0) <= 0.5 * phi,
            score_margin: lam_min > 0.0 && tr_m * dev * 2.0 / (lam_min * lam_min) <= score,
            eig_margin: dev <= 0.5 * lam_min,
        };
        log::debug!("learn_exp round {i}: T={t_i}, score={score:.4e}, checks={checks:?}");
        if tr_m <= 0.0 || checks.all() {
            capped = false;
            break;
        }
    }
    let (policies, score) = best.ok_or_else(|| config_err("LearnExp completed no round"))?;
    if capped {
        log::info!("learn_exp stopped by its budget after {rounds} rounds");
    }
    Ok(LearnExpOutcome {
        policies,
        covariates,
        episodes_used: oracle.episodes_used() - start,
        rounds,
        budget_capped: capped,
        score,
    })
}

/// Round one squeezed into `avail` episodes: one replay of the MinEig set and
/// a single Frank-Wolfe step.
fn shrink(avail: usize, n_me: usize) -> Option<(usize, usize, usize, usize)> {
    let k = avail.checked_sub(n_me)? / 2;
    (k >= 1).then_some((1, k, 1, 2 * k))
}

/// Too little budget for a replay round: spend it directly on the oracle.
fn direct<T: Scalar>(
    m: &DMatrix<T>,
    prior: &DMatrix<T>,
    avail: usize,
    oracle: &mut dyn RegretOracle<T>,
    mut covariates: Covariates<T>,
    start: usize,
) -> Result<LearnExpOutcome<T>> {
    let objective = DesignObjective::weighted_a_opt(m.clone(), prior.clone());
    let out = dynamic_oed(&objective, 0, avail, oracle, &Warmup::Oracle)?;
    covariates.merge(&out.covariates);
    let score = out.final_objective();
    Ok(LearnExpOutcome {
        policies: out.policies,
        covariates,
        episodes_used: oracle.episodes_used() - start,
        rounds: 0,
        budget_capped: true,
        score,
    })
}
