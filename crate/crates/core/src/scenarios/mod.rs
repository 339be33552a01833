//! Benchmark systems, exploration methods and the epoch driver.

mod methods;
mod schedule;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::{
    paired_cost_difference, ControlPolicy, CostEstimate, CostFunction, PolicyFamily, SearchConfig, SynthesisResult,
    Synthesizer,
};
use crate::dynamics::{FeatureKind, FeatureMap, SystemModel};
use crate::error::{config_err, Result};
use crate::estimation::{reduce_hessian, EstimatorConfig};
use crate::hessian::{
    model_task_hessian, ClosedFormLqrLoss, FrozenSearchLoss, HessianMethod, McBumpLoss, ModelTaskHessian, TaskLoss,
};
use crate::oed::{LearnExpConfig, ThompsonConfig};
use crate::seed::rng_seeded;

pub use methods::{evaluate_checkpoints, run_method, CheckpointRecord, EpochLog, MethodKind, MethodRun, TrialSeeds};
pub use schedule::{checkpoint_schedule, epoch_budgets, epoch_count, paper_epoch_lengths, CheckpointSchedule};

/// Bump centers: the nine listed for the motivating example plus a tenth
/// continuing the spacing.
pub const BUMP_CENTERS: [f64; 10] = [10.0, -14.0, -11.0, -8.0, -5.0, -2.0, 1.0, 4.0, 7.0, -17.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    /// `(d_x + d_u)²` weight on `[x − x_ref; u]`, row by row.
    pub weight: Vec<Vec<f64>>,
    pub x_ref: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HessianConfig {
    pub method: HessianMethod,
    /// `None` selects the relative default step.
    #[serde(default)]
    pub fd_step: Option<f64>,
    /// Common-random-number rollouts for Monte-Carlo losses.
    pub mc_rollouts: usize,
    /// Pool candidates whose softmin weight is below this fraction of the
    /// largest weight are dropped from the frozen loss.
    pub prune_below: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationConfig {
    pub thompson: ThompsonConfig,
    pub learn_exp: LearnExpConfig,
    /// MinEig threshold per episode as a fraction of the warmup `λ_min` rate.
    pub mineig_scale: f64,
    /// Share of each epoch spent learning policies; the rest replays them.
    pub learn_fraction: f64,
    pub estimator: EstimatorConfig,
    /// Estimate from the current epoch only instead of all data.
    pub per_epoch_estimation: bool,
    /// Gaussian input scale for random exploration; `None` matches the power budget.
    #[serde(default)]
    pub random_sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub features: FeatureKind,
    /// True parameter matrix, row by row.
    pub a_star: Vec<Vec<f64>>,
    /// Noise variance `σ_w²`.
    pub noise_var: f64,
    pub horizon: usize,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    pub cost: CostSpec,
    pub synthesizer: Synthesizer,
    pub hessian: HessianConfig,
    pub warmup_episodes: usize,
    pub exploration: ExplorationConfig,
    /// Rollouts for excess-loss evaluation.
    pub eval_rollouts: usize,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = r.len();
    let m = r.first().map_or(0, |x| x.len());
    if n == 0 || m == 0 || r.iter().any(|x| x.len() != m) {
        return Err(config_err(format!("{what} must be a nonempty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| r[i][j]))
}

fn exploration(horizon: usize, warmup_sigma: Option<f64>) -> ExplorationConfig {
    let mut thompson = ThompsonConfig::default();
    thompson.mpc.power_budget = 10.0 * horizon as f64;
    ExplorationConfig {
        thompson,
        learn_exp: LearnExpConfig::default(),
        mineig_scale: 0.01,
        learn_fraction: 0.5,
        estimator: EstimatorConfig::default(),
        per_epoch_estimation: false,
        random_sigma: warmup_sigma,
    }
}

impl ScenarioConfig {
    pub fn builtin_names() -> &'static [&'static str] {
        &["bump1d", "drone", "car"]
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "bump1d" => Ok(Self::bump1d()),
            "drone" => Ok(Self::drone()),
            "car" => Ok(Self::car()),
            _ => Err(config_err(format!(
                "unknown scenario '{name}' (expected one of {})",
                Self::builtin_names().join(", ")
            ))),
        }
    }

    pub fn bump1d() -> Self {
        let mut a = DMatrix::from_element(1, 12, -3.0);
        a[(0, 0)] = 0.8;
        a[(0, 1)] = 1.0;
        let horizon = 10;
        Self {
            name: "bump1d".into(),
            features: FeatureKind::Bump1d { centers: BUMP_CENTERS.to_vec(), width: 100.0 },
            a_star: rows(&a),
            noise_var: 0.1,
            horizon,
            x0: None,
            cost: CostSpec {
                weight: vec![vec![1.0, 0.0], vec![0.0, 0.01]],
                x_ref: vec![BUMP_CENTERS[0]],
            },
            synthesizer: Synthesizer::BumpMatching { goal: BUMP_CENTERS[0] },
            hessian: HessianConfig {
                method: HessianMethod::GaussNewton,
                fd_step: None,
                mc_rollouts: 500,
                prune_below: 0.0,
            },
            warmup_episodes: 10,
            exploration: exploration(horizon, None),
            eval_rollouts: 20000,
        }
    }

    pub fn drone() -> Self {
        let mut a = DMatrix::zeros(6, 10);
        for i in 0..6 {
            a[(i, i)] = 1.0;
        }
        for i in 0..3 {
            a[(i, i + 3)] = 0.1;
            a[(i + 3, i + 6)] = 0.1;
        }
        a[(5, 9)] = -0.98;
        let mut w = DMatrix::zeros(9, 9);
        for i in 0..6 {
            w[(i, i)] = 0.1 / 5.0;
        }
        for i in 6..9 {
            w[(i, i)] = 1.0 / 5.0;
        }
        let horizon = 50;
        Self {
            name: "drone".into(),
            features: FeatureKind::AffineLinear { d_x: 6, d_u: 3 },
            a_star: rows(&a),
            noise_var: 0.1,
            horizon,
            x0: None,
            cost: CostSpec { weight: rows(&w), x_ref: vec![0.0; 6] },
            synthesizer: Synthesizer::Lqr,
            hessian: HessianConfig {
                method: HessianMethod::FiniteDifference,
                fd_step: None,
                mc_rollouts: 0,
                prune_below: 0.0,
            },
            warmup_episodes: 10,
            exploration: exploration(horizon, None),
            eval_rollouts: 20000,
        }
    }

    pub fn car() -> Self {
        let mut a = DMatrix::zeros(6, 14);
        for i in 0..6 {
            a[(i, i)] = 1.0;
        }
        a[(0, 2)] = 0.1;
        a[(1, 3)] = 0.1;
        a[(2, 10)] = 0.1;
        a[(3, 11)] = 0.1;
        a[(4, 5)] = 0.1;
        a[(5, 7)] = 0.1;
        let mut v1 = DVector::zeros(8);
        v1[0] = 1.0;
        v1[1] = 1.0;
        let mut v2 = DVector::zeros(8);
        v2[4] = 1.0;
        let q = DMatrix::identity(8, 8) * 0.1 + &v1 * v1.transpose() + &v2 * v2.transpose();
        let q = &q / crate::linalg::sym_op_norm(&q);
        let horizon = 50;
        Self {
            name: "car".into(),
            features: FeatureKind::Car,
            a_star: rows(&a),
            noise_var: 0.1,
            horizon,
            x0: None,
            cost: CostSpec { weight: rows(&q), x_ref: vec![0.0; 6] },
            synthesizer: Synthesizer::RandomSearch {
                family: PolicyFamily::CarHierarchical,
                config: SearchConfig::default(),
            },
            hessian: HessianConfig {
                method: HessianMethod::GaussNewton,
                fd_step: None,
                mc_rollouts: 0,
                prune_below: 1e-10,
            },
            warmup_episodes: 100,
            exploration: exploration(horizon, None),
            eval_rollouts: 20000,
        }
    }
}

/// A validated scenario with its true model and cost.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub truth: SystemModel<f64>,
    pub cost: CostFunction<f64>,
}

/// The reference controller `π_*(A_*)` and its cost.
#[derive(Clone, Debug)]
pub struct Optimum {
    pub policy: ControlPolicy<f64>,
    pub cost: CostEstimate,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        let phi = FeatureMap::new(config.features.clone())?;
        let a = from_rows(&config.a_star, "a_star")?;
        if !(config.noise_var >= 0.0) || config.horizon == 0 {
            return Err(config_err("noise variance must be nonnegative and the horizon positive"));
        }
        let mut truth = SystemModel::new(a, phi, config.noise_var.sqrt(), config.horizon)?;
        if let Some(x0) = &config.x0 {
            truth = truth.with_initial_state(DVector::from_column_slice(x0))?;
        }
        let w = from_rows(&config.cost.weight, "cost.weight")?;
        if w.nrows() != truth.d_x() + truth.d_u() || config.cost.x_ref.len() != truth.d_x() {
            return Err(config_err("cost weight must be (d_x + d_u)² and x_ref of length d_x"));
        }
        let cost = CostFunction::new(w, DVector::from_column_slice(&config.cost.x_ref))?;
        let ex = &config.exploration;
        ex.thompson.mpc.validate()?;
        ex.estimator.validate()?;
        if !(ex.learn_fraction > 0.0 && ex.learn_fraction <= 1.0) || !(ex.mineig_scale >= 0.0) {
            return Err(config_err("learn_fraction must lie in (0, 1] and mineig_scale be nonnegative"));
        }
        if ex.random_sigma.is_some_and(|s| !(s >= 0.0)) {
            return Err(config_err("random_sigma must be nonnegative"));
        }
        if config.eval_rollouts == 0 {
            return Err(config_err("eval_rollouts must be positive"));
        }
        if let Synthesizer::RandomSearch { config: sc, .. } = &config.synthesizer {
            sc.validate()?;
        }
        Ok(Self { config, truth, cost })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        Self::new(ScenarioConfig::builtin(name)?)
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    /// Exploration power budget `γ²`.
    pub fn power_budget(&self) -> f64 {
        self.config.exploration.thompson.mpc.power_budget
    }

    /// Input scale of random exploration: `σ_u² = γ²/(H·d_u)` unless configured.
    pub fn random_sigma(&self) -> f64 {
        self.config
            .exploration
            .random_sigma
            .unwrap_or_else(|| (self.power_budget() / (self.truth.horizon() * self.truth.d_u()) as f64).sqrt())
    }

    pub fn model_with(&self, a: &DMatrix<f64>) -> Result<SystemModel<f64>> {
        self.truth.with_a(a.clone())
    }

    /// Certainty-equivalence controller for the estimate `a_hat`.
    pub fn synthesize(&self, a_hat: &DMatrix<f64>, seed: u64) -> Result<SynthesisResult<f64>> {
        let model = self.model_with(a_hat)?;
        self.config.synthesizer.synthesize(&model, &self.cost, &mut rng_seeded(seed))
    }

    /// The loss `g(A') = J(π_*(A'); a)` used for differentiation.
    pub fn task_loss(&self, a: &DMatrix<f64>, seed: u64) -> Result<Box<dyn TaskLoss<f64>>> {
        let model = self.model_with(a)?;
        Ok(match &self.config.synthesizer {
            Synthesizer::Lqr => Box::new(ClosedFormLqrLoss { model, cost: self.cost.clone() }),
            Synthesizer::BumpMatching { goal } => Box::new(McBumpLoss::new(
                model,
                self.cost.clone(),
                *goal,
                self.config.hessian.mc_rollouts.max(1),
                seed,
            )),
            Synthesizer::RandomSearch { .. } => {
                let syn = self.config.synthesizer.synthesize(&model, &self.cost, &mut rng_seeded(seed))?;
                let pool = syn.candidate_pool.ok_or_else(|| config_err("random search returned no pool"))?;
                Box::new(FrozenSearchLoss::new(model, self.cost.clone(), &pool, self.config.hessian.prune_below))
            }
        })
    }

    /// Model-task Hessian at `a` with the configured method.
    pub fn hessian_at(&self, a: &DMatrix<f64>, seed: u64) -> Result<ModelTaskHessian<f64>> {
        self.hessian_with(self.config.hessian.method, a, seed)
    }

    pub fn hessian_with(&self, method: HessianMethod, a: &DMatrix<f64>, seed: u64) -> Result<ModelTaskHessian<f64>> {
        let loss = self.task_loss(a, seed)?;
        model_task_hessian(method, loss.as_ref(), a, self.config.hessian.fd_step)
    }

    /// Reduced Hessian `M` at `a`.
    pub fn reduced_hessian_at(&self, a: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
        let h = self.hessian_at(a, seed)?;
        reduce_hessian(&h.matrix, self.truth.d_x(), self.truth.d_phi())
    }

    /// `π_*(A_*)` and `J(π_*(A_*); A_*)`.
    pub fn optimum(&self, seed: u64) -> Result<Optimum> {
        let syn = self.synthesize(self.truth.a(), seed)?;
        let cost = crate::control::evaluate_cost(
            &self.truth,
            &self.cost,
            &syn.policy,
            self.config.eval_rollouts,
            &mut rng_seeded(seed ^ 0x5eed),
        )?;
        Ok(Optimum { policy: syn.policy, cost })
    }

    /// Paired estimate of `J(π; A_*) − J(π_*(A_*); A_*)`.
    pub fn excess_loss(&self, policy: &ControlPolicy<f64>, optimum: &Optimum, seed: u64) -> Result<CostEstimate> {
        paired_cost_difference(
            &self.truth,
            &self.cost,
            policy,
            &optimum.policy,
            self.config.eval_rollouts,
            &mut rng_seeded(seed),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn builtins_validate_and_round_trip() {
        for name in ScenarioConfig::builtin_names() {
            let cfg = ScenarioConfig::builtin(name).unwrap();
            let json = serde_json::to_string(&cfg).unwrap();
            let back: ScenarioConfig = serde_json::from_str(&json).unwrap();
            assert_eq!(back, cfg);
            let s = Scenario::new(cfg).unwrap();
            assert_eq!(s.truth.a().shape(), (s.truth.d_x(), s.truth.d_phi()));
        }
    }

    #[test]
    fn paper_constants() {
        let d = Scenario::builtin("drone").unwrap();
        assert_eq!(d.truth.horizon(), 50);
        assert_eq!(d.truth.a()[(5, 9)], -0.98);
        assert_eq!(d.power_budget(), 500.0);
        assert!((d.truth.noise_std().powi(2) - 0.1).abs() < 1e-15);
        let c = Scenario::builtin("car").unwrap();
        assert_eq!(c.truth.d_phi(), 14);
        assert_eq!(c.config.warmup_episodes, 100);
        assert!((crate::linalg::sym_op_norm(c.cost.weight()) - 1.0).abs() < 1e-12);
        let b = Scenario::builtin("bump1d").unwrap();
        assert_eq!(b.truth.horizon(), 10);
        assert_eq!(b.power_budget(), 100.0);
        assert!((b.random_sigma() - 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn drone_gravity_step() {
        let d = Scenario::builtin("drone").unwrap();
        let x = d.truth.step(&DVector::zeros(6), &DVector::zeros(3), &DVector::zeros(6)).unwrap();
        assert_eq!(x.as_slice(), &[0.0, 0.0, 0.0, 0.0, 0.0, -0.98]);
    }

    #[test]
    fn unknown_scenario_is_a_config_error() {
        assert!(matches!(ScenarioConfig::builtin("boat"), Err(crate::Error::Config(_))));
    }
}
