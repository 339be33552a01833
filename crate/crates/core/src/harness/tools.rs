//! Inspection tools behind the `hessian`, `oed-demo` and `estimate` subcommands.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use super::output::read_trajectories;
use crate::dynamics::standard_normals;
use crate::error::{config_err, Result};
use crate::estimation::{reduce_hessian, RegressionStats};
use crate::hessian::HessianMethod;
use crate::linalg;
use crate::live::LiveSystem;
use crate::oed::{dynamic_oed, DesignObjective, ExplorationPolicy, ThompsonMpcOracle, Warmup};
use crate::scenarios::{Scenario, ScenarioConfig};
use crate::seed::{derive_seed, rng_from};

#[derive(Clone, Debug, Serialize)]
pub struct HessianReport {
    pub scenario: String,
    pub method: HessianMethod,
    pub perturbation: f64,
    pub fd_step: f64,
    pub raw_min_eigenvalue: f64,
    pub raw_asymmetry: f64,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Diagonal of the full Hessian over row-major `vec(A)`.
    pub diagonal: Vec<f64>,
    /// Diagonal of the reduced `d_phi × d_phi` Hessian.
    pub feature_diagonal: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

/// Model-task Hessian at `A_* + perturbation·Z` with `Z` standard normal.
pub fn hessian_report(
    config: ScenarioConfig,
    method: Option<HessianMethod>,
    perturbation: f64,
    seed: u64,
) -> Result<HessianReport> {
    let scenario = Scenario::new(config)?;
    let mut a = scenario.truth.a().clone();
    if perturbation != 0.0 {
        let mut z = vec![0.0; a.len()];
        standard_normals(&mut rng_from(seed, &["perturb"]), &mut z);
        for (v, dz) in a.iter_mut().zip(z) {
            *v += perturbation * dz;
        }
    }
    let method = method.unwrap_or(scenario.config.hessian.method);
    let h = scenario.hessian_with(method, &a, derive_seed(seed, &["hessian"]))?;
    let mut eig = linalg::sym_eigenvalues(&h.matrix);
    eig.sort_by(|x, y| y.total_cmp(x));
    let m = reduce_hessian(&h.matrix, scenario.truth.d_x(), scenario.truth.d_phi())?;
    Ok(HessianReport {
        scenario: scenario.name().to_string(),
        method,
        perturbation,
        fd_step: h.fd_step,
        raw_min_eigenvalue: h.raw_min_eigenvalue,
        raw_asymmetry: h.raw_asymmetry,
        eigenvalues: eig,
        diagonal: h.matrix.diagonal().iter().copied().collect(),
        feature_diagonal: m.diagonal().iter().copied().collect(),
        matrix: h.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
    })
}

impl fmt::Display for HessianReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario      {}", self.scenario)?;
        writeln!(f, "method        {}", self.method.name())?;
        writeln!(f, "perturbation  {:e}", self.perturbation)?;
        writeln!(f, "fd step       {:e}", self.fd_step)?;
        writeln!(f, "raw min eig   {:.4e}", self.raw_min_eigenvalue)?;
        writeln!(f, "asymmetry     {:.4e}", self.raw_asymmetry)?;
        writeln!(f)?;
        writeln!(f, "{:>6}  {:>14}", "rank", "eigenvalue")?;
        for (i, v) in self.eigenvalues.iter().enumerate().take(10) {
            writeln!(f, "{:>6}  {:>14.6e}", i + 1, v)?;
        }
        writeln!(f)?;
        writeln!(f, "{:>6}  {:>14}", "feat", "reduced diag")?;
        for (i, v) in self.feature_diagonal.iter().enumerate() {
            writeln!(f, "{:>6}  {:>14.6e}", i + 1, v)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OedDemoReport {
    pub scenario: String,
    pub iterations: usize,
    pub per_iteration: usize,
    pub warmup: usize,
    /// `Φ(Γ_n)` for `n = 0..=N`.
    pub objective: Vec<f64>,
    pub fw_gap: f64,
    pub episodes: usize,
    pub diverged: usize,
}

/// Random warmup, then DynamicOED on the weighted A-optimal objective built
/// from the Hessian at the warmup estimate, using the Thompson-MPC oracle.
pub fn oed_demo(config: ScenarioConfig, iterations: usize, per_iteration: Option<usize>, seed: u64) -> Result<OedDemoReport> {
    let scenario = Scenario::new(config)?;
    let k = per_iteration.unwrap_or((iterations + 1) * (iterations + 1)).max(1);
    let warmup = scenario.config.warmup_episodes.max(1);
    let total = warmup + (iterations + 1) * k;
    let mut live = LiveSystem::new(scenario.truth.clone(), total, derive_seed(seed, &["live"]));
    let gauss = ExplorationPolicy::Gaussian {
        d_u: scenario.truth.d_u(),
        sigma: scenario.random_sigma(),
        seed: derive_seed(seed, &["warmup"]),
    };
    for _ in 0..warmup {
        let mut runner = gauss.runner(live.used() as u64);
        if let Err(e) = live.play(runner.as_mut()) {
            if !matches!(e, crate::Error::Diverged { .. }) {
                return Err(e);
            }
        }
    }
    let ex = &scenario.config.exploration;
    let a_hat = live.estimate(&ex.estimator)?;
    let m = scenario.reduced_hessian_at(&a_hat, derive_seed(seed, &["hessian"]))?;
    let gamma0 = &live.stats().lambda / warmup as f64;
    let objective = DesignObjective::weighted_a_opt(m, gamma0);
    let mut oracle = ThompsonMpcOracle::new(&mut live, ex.thompson.clone(), rng_from(seed, &["oracle"]))?;
    let out = dynamic_oed(&objective, iterations, k, &mut oracle, &Warmup::Oracle)?;
    Ok(OedDemoReport {
        scenario: scenario.name().to_string(),
        iterations,
        per_iteration: k,
        warmup,
        objective: out.objective_trace.clone(),
        fw_gap: out.fw_gap,
        episodes: out.episodes_used,
        diverged: out.diverged,
    })
}

impl fmt::Display for OedDemoReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "scenario {}: {} warmup episodes, N = {}, K = {}",
            self.scenario, self.warmup, self.iterations, self.per_iteration
        )?;
        writeln!(f, "{:>9}  {:>14}", "iteration", "objective")?;
        for (i, v) in self.objective.iter().enumerate() {
            writeln!(f, "{i:>9}  {v:>14.6e}")?;
        }
        writeln!(f, "final Frank-Wolfe gap {:.4e}, {} episodes ({} diverged)", self.fw_gap, self.episodes, self.diverged)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub scenario: String,
    pub episodes: usize,
    pub a_hat: Vec<Vec<f64>>,
    /// `‖Â − A_*‖_F` against the scenario's true parameters.
    pub frob_error: f64,
}

/// Least squares on a saved NDJSON trajectory file.
pub fn estimate_from_file(config: ScenarioConfig, path: &Path) -> Result<EstimateReport> {
    let scenario = Scenario::new(config)?;
    let log = read_trajectories(path)?;
    if log.is_empty() {
        return Err(config_err(format!("{} holds no episodes", path.display())));
    }
    let (d_x, d_u) = (scenario.truth.d_x(), scenario.truth.d_u());
    if log.iter().any(|t| t.states.iter().any(|x| x.len() != d_x) || t.inputs.iter().any(|u| u.len() != d_u)) {
        return Err(config_err(format!("trajectory dimensions do not match scenario {}", scenario.name())));
    }
    let mut stats = RegressionStats::new(d_x, scenario.truth.d_phi());
    for t in &log {
        stats.add_trajectory(t, scenario.truth.phi());
    }
    let a_hat: DMatrix<f64> = stats.solve(&scenario.config.exploration.estimator)?;
    Ok(EstimateReport {
        scenario: scenario.name().to_string(),
        episodes: log.len(),
        frob_error: (&a_hat - scenario.truth.a()).norm(),
        a_hat: a_hat.row_iter().map(|r| r.iter().copied().collect()).collect(),
    })
}

impl fmt::Display for EstimateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} from {} episodes", self.scenario, self.episodes)?;
        for row in &self.a_hat {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>10.5}")).collect();
            writeln!(f, "  {}", cells.join(" "))?;
        }
        writeln!(f, "frob_error {:.6e}", self.frob_error)
    }
}
