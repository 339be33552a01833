use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::schedule::epoch_budgets;
use super::{Optimum, Scenario};
use crate::error::{config_err, Error, Result};
use crate::estimation::design_score_reduced;
use crate::linalg;
use crate::live::LiveSystem;
use crate::oed::{
    dynamic_oed, learn_exp_policies, DesignObjective, ExplorationPolicy, MinEigConfig, MpcObjective, RegretOracle,
    ThompsonMpcOracle, Warmup,
};
use crate::seed::{derive_seed, rng_seeded};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Task,
    Random,
    Uniform,
    CostMin,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [MethodKind::Task, MethodKind::Random, MethodKind::Uniform, MethodKind::CostMin];

    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::Task => "task",
            MethodKind::Random => "random",
            MethodKind::Uniform => "uniform",
            MethodKind::CostMin => "costmin",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| config_err(format!("unknown method '{s}' (expected task, random, uniform or costmin)")))
    }
}

/// Seed streams of one trial. Streams shared by all methods (warmup, live
/// noise, synthesis, evaluation) keep comparisons paired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialSeeds {
    pub master: u64,
    pub trial: usize,
}

impl TrialSeeds {
    pub fn new(master: u64, trial: usize) -> Self {
        Self { master, trial }
    }

    fn derive(&self, parts: &[&str]) -> u64 {
        let trial = self.trial.to_string();
        let mut path = vec!["trial", trial.as_str()];
        path.extend_from_slice(parts);
        derive_seed(self.master, &path)
    }

    pub fn warmup(&self) -> u64 {
        self.derive(&["warmup"])
    }
    pub fn live(&self) -> u64 {
        self.derive(&["live"])
    }
    pub fn method(&self, kind: MethodKind) -> u64 {
        self.derive(&["method", kind.name()])
    }
    pub fn hessian(&self, kind: MethodKind, epoch: usize) -> u64 {
        self.derive(&["hessian", kind.name(), &epoch.to_string()])
    }
    pub fn synthesis(&self, episodes: usize) -> u64 {
        self.derive(&["synth", &episodes.to_string()])
    }
    pub fn evaluation(&self, episodes: usize) -> u64 {
        self.derive(&["eval", &episodes.to_string()])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub budget: usize,
    pub learn_episodes: usize,
    pub policies: usize,
    pub rounds: usize,
    pub mineig_timeout: bool,
}

/// The live system after a method has spent its budget.
pub struct MethodRun {
    pub method: MethodKind,
    pub live: LiveSystem<f64>,
    pub warmup: usize,
    pub epochs: Vec<EpochLog>,
}

/// Plays `total` live episodes with `kind`, the shared warmup first.
pub fn run_method(scenario: &Scenario, kind: MethodKind, total: usize, seeds: &TrialSeeds) -> Result<MethodRun> {
    let mut live = LiveSystem::new(scenario.truth.clone(), total, seeds.live());
    let warmup = scenario.config.warmup_episodes.min(total);
    let gauss = ExplorationPolicy::Gaussian {
        d_u: scenario.truth.d_u(),
        sigma: scenario.random_sigma(),
        seed: seeds.warmup(),
    };
    play_n(&mut live, &gauss, warmup)?;

    let mut epochs = Vec::new();
    let ex = &scenario.config.exploration;
    let rng = rng_seeded(seeds.method(kind));
    match kind {
        MethodKind::Random => {
            let p = ExplorationPolicy::Gaussian {
                d_u: scenario.truth.d_u(),
                sigma: scenario.random_sigma(),
                seed: seeds.method(kind),
            };
            let rest = live.remaining();
            play_n(&mut live, &p, rest)?;
        }
        MethodKind::Uniform => {
            let mut oracle = ThompsonMpcOracle::new(&mut live, ex.thompson.clone(), rng)?;
            while oracle.remaining() > 0 {
                let base = oracle.live().stats().lambda.clone();
                oracle.play_objective(MpcObjective::MaxMinEig(base))?;
            }
        }
        MethodKind::CostMin => {
            let mut oracle = ThompsonMpcOracle::new(&mut live, ex.thompson.clone(), rng)?;
            while oracle.remaining() > 0 {
                oracle.play_objective(MpcObjective::TaskCost(scenario.cost.clone()))?;
            }
        }
        MethodKind::Task => {
            let lam_hat = if warmup > 0 {
                linalg::min_eigenvalue(&live.stats().lambda).max(0.0) / warmup as f64
            } else {
                0.0
            };
            let c = ex.mineig_scale * lam_hat;
            let mut cache = Vec::new();
            let mut rng = rng;
            let mut epoch_start = live.used();
            for (l, budget) in epoch_budgets(total, warmup)?.into_iter().enumerate() {
                let budget = budget.min(live.remaining());
                if budget == 0 {
                    break;
                }
                let stats = if ex.per_epoch_estimation && l > 0 {
                    live.stats_between(epoch_start, live.used())
                } else {
                    live.stats().clone()
                };
                epoch_start = live.used();
                let a_hat = stats.solve(&ex.estimator)?;
                let m = scenario.reduced_hessian_at(&a_hat, seeds.hessian(kind, l + 1))?;
                let prior = &live.stats().lambda / budget as f64;
                let oracle_rng = rng_seeded(rand::Rng::random(&mut rng));
                let log = task_epoch(scenario, &mut live, &m, &prior, &mut cache, c, budget, oracle_rng)?;
                log::debug!("task epoch {}: {log:?}", l + 1);
                epochs.push(log);
            }
        }
    }
    if live.remaining() != 0 {
        return Err(config_err(format!(
            "method {kind} left {} of {total} episodes unused",
            live.remaining()
        )));
    }
    Ok(MethodRun { method: kind, live, warmup, epochs })
}

#[allow(clippy::too_many_arguments)]
fn task_epoch(
    scenario: &Scenario,
    live: &mut LiveSystem<f64>,
    m: &DMatrix<f64>,
    prior: &DMatrix<f64>,
    cache: &mut Vec<ExplorationPolicy<f64>>,
    c: f64,
    budget: usize,
    rng: crate::seed::SimRng,
) -> Result<EpochLog> {
    let ex = &scenario.config.exploration;
    let learn_budget = ((ex.learn_fraction * budget as f64).ceil() as usize).clamp(1, budget);
    let start = live.used();
    let mut oracle = ThompsonMpcOracle::new(live, ex.thompson.clone(), rng)?;
    let mineig_cfg = MinEigConfig::practical(c, learn_budget);
    let mut timeout = false;
    let (policies, rounds) =
        match learn_exp_policies(m, prior, cache, &mineig_cfg, learn_budget, &mut oracle, &ex.learn_exp) {
            Ok(out) => (out.policies, out.rounds),
            Err(Error::MinEigTimeout { best_lambda_min, episodes }) => {
                log::info!("mineig timed out after {episodes} episodes (λ_min {best_lambda_min:.3e})");
                timeout = true;
                (Vec::new(), 0)
            }
            Err(e) => return Err(e),
        };
    let learn_episodes = oracle.episodes_used() - start;
    let mut rest = budget - learn_episodes;
    if policies.is_empty() && rest > 0 {
        let objective = DesignObjective::weighted_a_opt(m.clone(), prior.clone());
        dynamic_oed(&objective, 0, rest, &mut oracle, &Warmup::Oracle)?;
        rest = 0;
    }
    for p in policies.iter().cycle().take(rest) {
        oracle.replay(p)?;
    }
    Ok(EpochLog { budget, learn_episodes, policies: policies.len(), rounds, mineig_timeout: timeout })
}

/// Plays `n` episodes of a fixed policy, tolerating divergence.
fn play_n(live: &mut LiveSystem<f64>, policy: &ExplorationPolicy<f64>, n: usize) -> Result<()> {
    for _ in 0..n {
        let mut runner = policy.runner(live.used() as u64);
        match live.play(runner.as_mut()) {
            Ok(_) => {}
            Err(Error::Diverged { step }) => log::warn!("{} episode diverged at step {step}", policy.label()),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// One evaluated point of a learning curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub episodes: usize,
    pub excess_loss: f64,
    pub excess_loss_se: f64,
    pub frob_error: f64,
    pub design_score: f64,
}

/// Estimates, synthesizes and scores the controller learned from the first
/// `t` episodes for every `t` in `checkpoints`. Uses no live episodes.
pub fn evaluate_checkpoints(
    scenario: &Scenario,
    run: &MethodRun,
    checkpoints: &[usize],
    m_star: &DMatrix<f64>,
    optimum: &Optimum,
    seeds: &TrialSeeds,
) -> Result<Vec<CheckpointRecord>> {
    let est = &scenario.config.exploration.estimator;
    checkpoints
        .iter()
        .map(|&t| {
            let stats = run.live.stats_up_to(t);
            let a_hat = stats.solve(est)?;
            let syn = scenario.synthesize(&a_hat, seeds.synthesis(t))?;
            let excess = scenario.excess_loss(&syn.policy, optimum, seeds.evaluation(t))?;
            let mut reg = stats.lambda.clone();
            let ridge = est.ridge_for(&reg);
            for i in 0..reg.nrows() {
                reg[(i, i)] += ridge;
            }
            Ok(CheckpointRecord {
                episodes: t,
                excess_loss: excess.mean,
                excess_loss_se: excess.se,
                frob_error: (&a_hat - scenario.truth.a()).norm(),
                design_score: design_score_reduced(m_star, &reg)?,
            })
        })
        .collect()
}
