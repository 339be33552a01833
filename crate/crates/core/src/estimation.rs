//! Least-squares identification of `A` and the Hessian-weighted error metrics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FeatureMap, Trajectory};
use crate::error::{config_err, Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Normal equations with a condition number above this are refused.
pub const MAX_CONDITION: f64 = 1e14;

/// Tikhonov regularization added to `Λ` before solving. The total ridge is
/// `ridge + relative_ridge · tr(Λ) / d_phi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub ridge: f64,
    pub relative_ridge: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            ridge: 0.0,
            relative_ridge: 1e-8,
        }
    }
}

impl EstimatorConfig {
    pub fn absolute(ridge: f64) -> Self {
        Self {
            ridge,
            relative_ridge: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) || !(self.relative_ridge >= 0.0) {
            return Err(config_err("ridge must be nonnegative"));
        }
        Ok(())
    }

    /// Effective ridge for a given covariance.
    pub fn ridge_for<T: Scalar>(&self, lambda: &DMatrix<T>) -> T {
        let d = lambda.nrows().max(1);
        T::of(self.ridge) + T::of(self.relative_ridge) * lambda.trace() / T::of_count(d)
    }
}

/// Sufficient statistics of the regression `x_{h+1} ≈ A φ_h`:
/// `Λ = Σ φφᵀ` and `C = Σ x_{h+1} φᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionStats<T: Scalar> {
    pub lambda: DMatrix<T>,
    pub cross: DMatrix<T>,
    pub episodes: usize,
}

impl<T: Scalar> RegressionStats<T> {
    pub fn new(d_x: usize, d_phi: usize) -> Self {
        Self {
            lambda: DMatrix::zeros(d_phi, d_phi),
            cross: DMatrix::zeros(d_x, d_phi),
            episodes: 0,
        }
    }

    pub fn add_trajectory(&mut self, traj: &Trajectory<T>, phi: &FeatureMap<T>) {
        let mut feat = vec![T::zero(); phi.d_phi()];
        for h in 0..traj.horizon() {
            phi.eval_into(traj.states[h].as_slice(), traj.inputs[h].as_slice(), &mut feat);
            linalg::add_outer(&mut self.lambda, &feat, T::one());
            let next = &traj.states[h + 1];
            for (j, &f) in feat.iter().enumerate() {
                if f == T::zero() {
                    continue;
                }
                for i in 0..next.len() {
                    self.cross[(i, j)] += next[i] * f;
                }
            }
        }
        self.episodes += 1;
    }

    pub fn merge(&mut self, other: &RegressionStats<T>) {
        self.lambda += &other.lambda;
        self.cross += &other.cross;
        self.episodes += other.episodes;
    }

    /// Solves `Â (Λ + ρI) = C`.
    pub fn solve(&self, cfg: &EstimatorConfig) -> Result<DMatrix<T>> {
        cfg.validate()?;
        if self.episodes == 0 {
            return Err(config_err("least squares needs at least one trajectory"));
        }
        let d = self.lambda.nrows();
        let rho = cfg.ridge_for(&self.lambda);
        let mut reg = linalg::symmetrize(&self.lambda);
        for i in 0..d {
            reg[(i, i)] += rho;
        }
        let condition = linalg::condition_number(&reg);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { condition });
        }
        let chol = reg.cholesky().ok_or(Error::IllConditioned { condition })?;
        // (Λ+ρI) Âᵀ = Cᵀ
        let at = chol.solve(&self.cross.transpose());
        Ok(at.transpose())
    }
}

/// Least-squares estimate of `A` from a batch of trajectories.
pub fn least_squares<T: Scalar>(
    trajectories: &[Trajectory<T>],
    phi: &FeatureMap<T>,
    cfg: &EstimatorConfig,
) -> Result<DMatrix<T>> {
    if trajectories.is_empty() {
        return Err(config_err("least squares needs at least one trajectory"));
    }
    let mut stats = RegressionStats::new(phi.d_x(), phi.d_phi());
    for t in trajectories {
        stats.add_trajectory(t, phi);
    }
    stats.solve(cfg)
}

/// `vec(Â − A)ᵀ H vec(Â − A)` with row-major `vec`.
pub fn weighted_error<T: Scalar>(a_hat: &DMatrix<T>, a_star: &DMatrix<T>, hessian: &DMatrix<T>) -> Result<T> {
    if a_hat.shape() != a_star.shape() {
        return Err(config_err("estimate and truth have different shapes"));
    }
    let n = a_hat.len();
    if hessian.shape() != (n, n) {
        return Err(config_err(format!("Hessian must be {n}×{n}")));
    }
    let diff = linalg::vec_rows(&(a_hat - a_star));
    Ok(linalg::quad_form(hessian, diff.as_slice()).max(T::zero()))
}

/// Sum of the `d_x` diagonal `d_phi`-blocks of `H`, so that
/// `tr(H (I ⊗ Λ)⁻¹) = tr(M Λ⁻¹)`.
pub fn reduce_hessian<T: Scalar>(hessian: &DMatrix<T>, d_x: usize, d_phi: usize) -> Result<DMatrix<T>> {
    let n = d_x * d_phi;
    if hessian.shape() != (n, n) {
        return Err(config_err(format!(
            "Hessian is {:?}, expected {n}×{n} for d_x={d_x}, d_phi={d_phi}",
            hessian.shape()
        )));
    }
    let mut m = DMatrix::zeros(d_phi, d_phi);
    for b in 0..d_x {
        m += hessian.view((b * d_phi, b * d_phi), (d_phi, d_phi));
    }
    Ok(linalg::symmetrize(&m))
}

/// `tr(H (I_{d_x} ⊗ Λ)⁻¹)` evaluated blockwise.
pub fn design_score<T: Scalar>(hessian: &DMatrix<T>, d_x: usize, lambda: &DMatrix<T>) -> Result<T> {
    let d_phi = lambda.nrows();
    let m = reduce_hessian(hessian, d_x, d_phi)?;
    design_score_reduced(&m, lambda)
}

/// `tr(M Λ⁻¹)` for an already reduced Hessian.
pub fn design_score_reduced<T: Scalar>(m: &DMatrix<T>, lambda: &DMatrix<T>) -> Result<T> {
    let inv = linalg::spd_inverse(lambda).ok_or(Error::SingularCovariance)?;
    Ok(linalg::trace_product(m, &inv))
}
