//! Regret oracles: the linear-minimization step of DynamicOED.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{ExplorationPolicy, MpcConfig, MpcObjective, MpcSpec};
use crate::dynamics::standard_normals;
use crate::error::{config_err, Error, Result};
use crate::estimation::RegressionStats;
use crate::linalg;
use crate::live::LiveSystem;
use crate::scalar::Scalar;
use crate::seed::SimRng;

/// One played episode: its feature covariance `ψ = Σ_h φφᵀ` and the policy.
#[derive(Clone, Debug)]
pub struct OracleEpisode<T: Scalar> {
    pub psi: DMatrix<T>,
    pub policy: ExplorationPolicy<T>,
    pub diverged: bool,
}

pub trait RegretOracle<T: Scalar> {
    fn d_phi(&self) -> usize;

    /// Plays `k` episodes aiming to minimize `Σ_h φᵀ Ξ φ`.
    fn run(&mut self, xi: &DMatrix<T>, k: usize) -> Result<Vec<OracleEpisode<T>>>;

    /// Plays a stored policy once more.
    fn replay(&mut self, policy: &ExplorationPolicy<T>) -> Result<OracleEpisode<T>>;

    fn episodes_used(&self) -> usize;

    /// Episodes still available, `usize::MAX` if unbounded.
    fn remaining(&self) -> usize;
}

/// Exact argmin over a known finite set of expected covariances.
#[derive(Clone, Debug)]
pub struct EnumeratedOracle<T: Scalar> {
    hull: Vec<DMatrix<T>>,
    used: usize,
}

impl<T: Scalar> EnumeratedOracle<T> {
    pub fn new(hull: Vec<DMatrix<T>>) -> Result<Self> {
        let d = hull.first().map(|m| m.nrows()).ok_or_else(|| config_err("hull must be nonempty"))?;
        if hull.iter().any(|m| m.shape() != (d, d)) {
            return Err(config_err("hull matrices must share one square shape"));
        }
        Ok(Self { hull, used: 0 })
    }

    pub fn hull(&self) -> &[DMatrix<T>] {
        &self.hull
    }

    fn episode(&self, arm: usize) -> OracleEpisode<T> {
        OracleEpisode {
            psi: self.hull[arm].clone(),
            policy: ExplorationPolicy::Arm { arm, arms: self.hull.len() },
            diverged: false,
        }
    }
}

impl<T: Scalar> RegretOracle<T> for EnumeratedOracle<T> {
    fn d_phi(&self) -> usize {
        self.hull[0].nrows()
    }

    fn run(&mut self, xi: &DMatrix<T>, k: usize) -> Result<Vec<OracleEpisode<T>>> {
        let mut best = 0;
        let mut best_val = linalg::trace_product(xi, &self.hull[0]);
        for (i, m) in self.hull.iter().enumerate().skip(1) {
            let v = linalg::trace_product(xi, m);
            if v < best_val {
                best = i;
                best_val = v;
            }
        }
        self.used += k;
        Ok((0..k).map(|_| self.episode(best)).collect())
    }

    fn replay(&mut self, policy: &ExplorationPolicy<T>) -> Result<OracleEpisode<T>> {
        match policy {
            ExplorationPolicy::Arm { arm, .. } if *arm < self.hull.len() => {
                self.used += 1;
                Ok(self.episode(*arm))
            }
            _ => Err(config_err("enumerated oracle can only replay its own arms")),
        }
    }

    fn episodes_used(&self) -> usize {
        self.used
    }

    fn remaining(&self) -> usize {
        usize::MAX
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThompsonConfig {
    /// Prior precision added to `Λ` for the posterior.
    pub ridge: f64,
    pub mpc: MpcConfig,
}

impl Default for ThompsonConfig {
    fn default() -> Self {
        Self {
            ridge: 1.0,
            mpc: MpcConfig::default(),
        }
    }
}

/// Rowwise Gaussian posterior `N(Â_i, σ²(Λ + ρI)⁻¹)` with `Â = C(Λ + ρI)⁻¹`.
/// Returns `(Â, Ã)`.
pub fn sample_posterior<T: Scalar, R: Rng + ?Sized>(
    stats: &RegressionStats<T>,
    noise_std: T,
    ridge: T,
    rng: &mut R,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let d = stats.lambda.nrows();
    let mut reg = linalg::symmetrize(&stats.lambda);
    for i in 0..d {
        reg[(i, i)] += ridge;
    }
    let chol = reg
        .cholesky()
        .ok_or_else(|| Error::IllConditioned { condition: linalg::condition_number(&stats.lambda) })?;
    let mean = chol.solve(&stats.cross.transpose()).transpose();
    let upper = chol.l().transpose();
    let mut sample = mean.clone();
    let mut z = DVector::zeros(d);
    for i in 0..mean.nrows() {
        standard_normals(rng, z.as_mut_slice());
        let dev = upper
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::IllConditioned { condition: f64::INFINITY })?;
        for j in 0..d {
            sample[(i, j)] += noise_std * dev[j];
        }
    }
    Ok((mean, sample))
}

/// Thompson sampling over `A` combined with receding-horizon sampling MPC,
/// playing on the live system.
pub struct ThompsonMpcOracle<'a, T: Scalar> {
    live: &'a mut LiveSystem<T>,
    cfg: ThompsonConfig,
    rng: SimRng,
    nonce: u64,
}

impl<'a, T: Scalar> ThompsonMpcOracle<'a, T> {
    pub fn new(live: &'a mut LiveSystem<T>, cfg: ThompsonConfig, rng: SimRng) -> Result<Self> {
        cfg.mpc.validate()?;
        if !(cfg.ridge > 0.0) {
            return Err(config_err("posterior ridge must be positive"));
        }
        Ok(Self { live, cfg, rng, nonce: 0 })
    }

    pub fn live(&self) -> &LiveSystem<T> {
        self.live
    }

    /// Samples a model and plays one MPC episode on `objective`.
    pub fn play_objective(&mut self, objective: MpcObjective<T>) -> Result<OracleEpisode<T>> {
        let (_, a_tilde) = sample_posterior(self.live.stats(), self.live.noise_std(), T::of(self.cfg.ridge), &mut self.rng)?;
        let spec = MpcSpec {
            model: self.live.template(a_tilde)?,
            objective,
            cfg: self.cfg.mpc.clone(),
            seed: self.rng.random(),
        };
        self.play(ExplorationPolicy::mpc(spec))
    }

    fn play(&mut self, policy: ExplorationPolicy<T>) -> Result<OracleEpisode<T>> {
        let nonce = self.nonce;
        self.nonce += 1;
        let d = self.live.d_phi();
        let result = {
            let mut runner = policy.runner(nonce);
            self.live.play(runner.as_mut())
        };
        match result {
            Ok(traj) => Ok(OracleEpisode {
                psi: traj.covariance(self.live.phi()),
                policy,
                diverged: false,
            }),
            Err(Error::Diverged { step }) => {
                log::warn!("exploration episode diverged at step {step}");
                Ok(OracleEpisode { psi: DMatrix::zeros(d, d), policy, diverged: true })
            }
            Err(e) => Err(e),
        }
    }
}

impl<T: Scalar> RegretOracle<T> for ThompsonMpcOracle<'_, T> {
    fn d_phi(&self) -> usize {
        self.live.d_phi()
    }

    fn run(&mut self, xi: &DMatrix<T>, k: usize) -> Result<Vec<OracleEpisode<T>>> {
        if self.live.remaining() < k {
            return Err(Error::BudgetExhausted { used: self.live.used() + k, budget: self.live.budget() });
        }
        (0..k).map(|_| self.play_objective(MpcObjective::Quadratic(xi.clone()))).collect()
    }

    fn replay(&mut self, policy: &ExplorationPolicy<T>) -> Result<OracleEpisode<T>> {
        self.play(policy.clone())
    }

    fn episodes_used(&self) -> usize {
        self.live.used()
    }

    fn remaining(&self) -> usize {
        self.live.remaining()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_seeded;

    #[test]
    fn collapsed_posterior_returns_the_mean() {
        let mut stats = RegressionStats::<f64>::new(2, 3);
        stats.lambda = DMatrix::identity(3, 3) * 1e30;
        stats.cross = DMatrix::from_fn(2, 3, |i, j| (i + 2 * j) as f64) * 1e30;
        stats.episodes = 1;
        let (mean, sample) = sample_posterior(&stats, 0.3, 1.0, &mut rng_seeded(2)).unwrap();
        assert!((&mean - &sample).amax() < 1e-9);
        assert!((mean - DMatrix::from_fn(2, 3, |i, j| (i + 2 * j) as f64)).amax() < 1e-9);
    }

    #[test]
    fn posterior_spread_matches_covariance() {
        let mut stats = RegressionStats::<f64>::new(1, 2);
        stats.lambda = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        stats.episodes = 1;
        let mut rng = rng_seeded(4);
        let n = 40000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let (_, s) = sample_posterior(&stats, 1.0, 1.0, &mut rng).unwrap();
            let v = s.row(0).transpose();
            acc += &v * v.transpose();
        }
        acc /= n as f64;
        let expect = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]).try_inverse().unwrap();
        assert!((acc - expect).amax() < 0.01);
    }

    #[test]
    fn enumerated_oracle_takes_the_exact_argmin() {
        let hull = vec![DMatrix::from_diagonal_element(2, 2, 1.0), DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0])];
        let mut o = EnumeratedOracle::new(hull).unwrap();
        let xi = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.0]);
        let eps = o.run(&xi, 3).unwrap();
        assert_eq!(eps.len(), 3);
        assert!(matches!(eps[0].policy, ExplorationPolicy::Arm { arm: 1, .. }));
        assert_eq!(o.episodes_used(), 3);
        let zero = o.run(&DMatrix::zeros(2, 2), 1).unwrap();
        assert!(matches!(zero[0].policy, ExplorationPolicy::Arm { arm: 0, .. }));
    }
}
