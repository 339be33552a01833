//! The unknown true system as seen by a learner: episodes can only be
//! played, never inspected, and every episode counts against a budget.

use crate::dynamics::{rollout, Policy, SystemModel, Trajectory};
use crate::error::{Error, Result};
use crate::estimation::{EstimatorConfig, RegressionStats};
use crate::scalar::Scalar;
use crate::seed::{rng_seeded, SimRng};

pub struct LiveSystem<T: Scalar> {
    truth: SystemModel<T>,
    rng: SimRng,
    budget: usize,
    used: usize,
    log: Vec<Trajectory<T>>,
    played_at: Vec<usize>,
    stats: RegressionStats<T>,
    diverged: usize,
}

impl<T: Scalar> LiveSystem<T> {
    pub fn new(truth: SystemModel<T>, budget: usize, noise_seed: u64) -> Self {
        let stats = RegressionStats::new(truth.d_x(), truth.d_phi());
        Self {
            truth,
            rng: rng_seeded(noise_seed),
            budget,
            used: 0,
            log: Vec::new(),
            played_at: Vec::new(),
            stats,
            diverged: 0,
        }
    }

    /// Plays one episode. Diverged episodes still consume budget but add no data.
    pub fn play(&mut self, policy: &mut dyn Policy<T>) -> Result<Trajectory<T>> {
        if self.used >= self.budget {
            return Err(Error::BudgetExhausted {
                used: self.used,
                budget: self.budget,
            });
        }
        self.used += 1;
        match rollout(&self.truth, policy, &mut self.rng) {
            Ok(traj) => {
                self.stats.add_trajectory(&traj, self.truth.phi());
                self.log.push(traj.clone());
                self.played_at.push(self.used);
                Ok(traj)
            }
            Err(e) => {
                self.diverged += 1;
                Err(e)
            }
        }
    }

    /// Public structure of the system: feature map, horizon, noise level and
    /// start state. The parameter matrix is replaced by `a`.
    pub fn template(&self, a: nalgebra::DMatrix<T>) -> Result<SystemModel<T>> {
        self.truth.with_a(a)
    }

    pub fn horizon(&self) -> usize {
        self.truth.horizon()
    }
    pub fn d_x(&self) -> usize {
        self.truth.d_x()
    }
    pub fn d_u(&self) -> usize {
        self.truth.d_u()
    }
    pub fn d_phi(&self) -> usize {
        self.truth.d_phi()
    }
    pub fn noise_std(&self) -> T {
        self.truth.noise_std()
    }
    pub fn phi(&self) -> &crate::dynamics::FeatureMap<T> {
        self.truth.phi()
    }
    pub fn budget(&self) -> usize {
        self.budget
    }
    pub fn used(&self) -> usize {
        self.used
    }
    pub fn remaining(&self) -> usize {
        self.budget - self.used
    }
    pub fn diverged(&self) -> usize {
        self.diverged
    }
    pub fn log(&self) -> &[Trajectory<T>] {
        &self.log
    }
    /// One-based episode number of every logged trajectory.
    pub fn played_at(&self) -> &[usize] {
        &self.played_at
    }

    /// Regression statistics of the first `episodes` played episodes.
    pub fn stats_up_to(&self, episodes: usize) -> RegressionStats<T> {
        self.stats_between(0, episodes)
    }

    /// Regression statistics of episodes `after + 1 ..= upto`.
    pub fn stats_between(&self, after: usize, upto: usize) -> RegressionStats<T> {
        let mut stats = RegressionStats::new(self.d_x(), self.d_phi());
        for (traj, &at) in self.log.iter().zip(&self.played_at) {
            if at > upto {
                break;
            }
            if at > after {
                stats.add_trajectory(traj, self.truth.phi());
            }
        }
        stats
    }

    pub fn stats(&self) -> &RegressionStats<T> {
        &self.stats
    }

    /// Least-squares estimate from everything observed so far.
    pub fn estimate(&self, cfg: &EstimatorConfig) -> Result<nalgebra::DMatrix<T>> {
        self.stats.solve(cfg)
    }

    pub fn into_log(self) -> Vec<Trajectory<T>> {
        self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{FeatureKind, FeatureMap};
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn budget_is_enforced() {
        let phi = FeatureMap::<f64>::new(FeatureKind::Linear { d_x: 1, d_u: 1 }).unwrap();
        let model = SystemModel::new(DMatrix::from_row_slice(1, 2, &[0.5, 1.0]), phi, 0.1, 3).unwrap();
        let mut live = LiveSystem::new(model, 2, 0);
        let mut zero = |_: usize, _: &[DVector<f64>], _: &[DVector<f64>]| DVector::zeros(1);
        live.play(&mut zero).unwrap();
        live.play(&mut zero).unwrap();
        assert!(matches!(live.play(&mut zero), Err(Error::BudgetExhausted { used: 2, budget: 2 })));
        assert_eq!(live.log().len(), 2);
        assert_eq!(live.stats().episodes, 2);
        assert_eq!(live.played_at(), &[1, 2]);
        assert_eq!(live.stats_up_to(1).episodes, 1);
    }
}
