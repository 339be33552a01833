//! Model-task Hessian `H(A) = ∇²_{A'} J(π_*(A'); A)|_{A'=A}` by central
//! differences, and the Gauss-Newton surrogate `G Gᵀ`.
//!
//! All coordinates use the row-major `vec(A)` of [`crate::linalg::vec_rows`].

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{
    bump_matching_theta, closed_form_cost, evaluate_pool, simulate_cost, softmin_weights, synthesize_lqr_affine,
    CandidatePool, ControlPolicy, CostFunction, MeanAcc, PolicyFamily, SimBuffers,
};
use crate::dynamics::{NoiseBank, SystemModel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMethod {
    FiniteDifference,
    GaussNewton,
}

impl HessianMethod {
    pub fn name(&self) -> &'static str {
        match self {
            HessianMethod::FiniteDifference => "finite-difference",
            HessianMethod::GaussNewton => "gauss-newton",
        }
    }
}

/// PSD matrix over `vec(A)`-space.
#[derive(Clone, Debug)]
pub struct ModelTaskHessian<T: Scalar> {
    /// Symmetrized and eigen-clamped.
    pub matrix: DMatrix<T>,
    /// As differenced, before symmetrization and projection.
    pub raw: DMatrix<T>,
    pub method: HessianMethod,
    pub fd_step: T,
    /// Smallest eigenvalue of the symmetrized raw matrix.
    pub raw_min_eigenvalue: T,
    /// `‖raw − rawᵀ‖_F / ‖raw‖_F`.
    pub raw_asymmetry: T,
}

impl<T: Scalar> ModelTaskHessian<T> {
    fn from_raw(raw: DMatrix<T>, method: HessianMethod, fd_step: T) -> Self {
        let raw_asymmetry = linalg::relative_asymmetry(&raw);
        let (matrix, raw_min_eigenvalue) = linalg::psd_project(&raw);
        Self {
            matrix,
            raw,
            method,
            fd_step,
            raw_min_eigenvalue,
            raw_asymmetry,
        }
    }

    /// Wraps an externally supplied PSD matrix.
    pub fn from_matrix(matrix: DMatrix<T>, method: HessianMethod) -> Self {
        Self::from_raw(matrix, method, T::zero())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// The scalar map `g(A') = J(π_*(A'); A)` being differentiated.
pub trait TaskLoss<T: Scalar>: Sync {
    /// Shape of `A`.
    fn shape(&self) -> (usize, usize);
    fn loss(&self, a_prime: &DMatrix<T>) -> Result<f64>;
}

/// `g(A') = ‖A' − A₀‖²_F`; handy for checking the difference stencils.
pub struct QuadraticProbe<T: Scalar> {
    pub center: DMatrix<T>,
}

impl<T: Scalar> TaskLoss<T> for QuadraticProbe<T> {
    fn shape(&self) -> (usize, usize) {
        self.center.shape()
    }
    fn loss(&self, a_prime: &DMatrix<T>) -> Result<f64> {
        Ok((a_prime - &self.center).norm_squared().to_f64())
    }
}

/// LQR synthesis on `A'`, exact cost on `A`.
pub struct ClosedFormLqrLoss<T: Scalar> {
    pub model: SystemModel<T>,
    pub cost: CostFunction<T>,
}

impl<T: Scalar> TaskLoss<T> for ClosedFormLqrLoss<T> {
    fn shape(&self) -> (usize, usize) {
        self.model.a().shape()
    }
    fn loss(&self, a_prime: &DMatrix<T>) -> Result<f64> {
        let syn = synthesize_lqr_affine(&self.model.with_a(a_prime.clone())?, &self.cost)?;
        Ok(closed_form_cost(&self.model, &self.cost, &syn.policy)?.to_f64())
    }
}

/// Bump-matching synthesis on `A'`, common-random-number Monte-Carlo cost on `A`.
pub struct McBumpLoss<T: Scalar> {
    pub model: SystemModel<T>,
    pub cost: CostFunction<T>,
    pub goal: T,
    pub noise: NoiseBank<T>,
}

impl<T: Scalar> McBumpLoss<T> {
    pub fn new(model: SystemModel<T>, cost: CostFunction<T>, goal: T, n_rollouts: usize, seed: u64) -> Self {
        let noise = NoiseBank::new(seed, n_rollouts, model.horizon(), model.d_x());
        Self {
            model,
            cost,
            goal,
            noise,
        }
    }
}

impl<T: Scalar> TaskLoss<T> for McBumpLoss<T> {
    fn shape(&self) -> (usize, usize) {
        self.model.a().shape()
    }
    fn loss(&self, a_prime: &DMatrix<T>) -> Result<f64> {
        let theta = bump_matching_theta(a_prime, self.goal)?;
        let (centers, width) = crate::control::bump_parts(self.model.phi())?;
        let policy = ControlPolicy::BumpMatching { theta, centers, width };
        let mut buf = SimBuffers::new(&self.model);
        let mut acc = MeanAcc::default();
        for r in 0..self.noise.rollouts() {
            acc.push(simulate_cost(&self.model, &self.cost, &policy, self.noise.rollout(r), &mut buf).to_f64());
        }
        Ok(acc.estimate().mean)
    }
}

/// Softmin mixture over a frozen random-search pool: the pool is re-scored on
/// `A'` with its own noise, and the mixture weights are applied to the
/// candidates' costs on `A`. Candidates with negligible weight at `A` are dropped.
pub struct FrozenSearchLoss<T: Scalar> {
    pub model: SystemModel<T>,
    pub cost: CostFunction<T>,
    family: PolicyFamily,
    thetas: Vec<Vec<T>>,
    base_costs: Vec<f64>,
    temperature: f64,
    noise: std::sync::Arc<NoiseBank<T>>,
}

impl<T: Scalar> FrozenSearchLoss<T> {
    /// `pool` must have been scored on `model`.
    pub fn new(model: SystemModel<T>, cost: CostFunction<T>, pool: &CandidatePool<T>, prune_below: f64) -> Self {
        let w = pool.weights();
        let top = w.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > prune_below * top).collect();
        Self {
            model,
            cost,
            family: pool.family.clone(),
            thetas: keep.iter().map(|&i| pool.thetas[i].clone()).collect(),
            base_costs: keep.iter().map(|&i| pool.costs[i]).collect(),
            temperature: pool.temperature,
            noise: pool.noise.clone(),
        }
    }

    pub fn kept(&self) -> usize {
        self.thetas.len()
    }
}

impl<T: Scalar> TaskLoss<T> for FrozenSearchLoss<T> {
    fn shape(&self) -> (usize, usize) {
        self.model.a().shape()
    }
    fn loss(&self, a_prime: &DMatrix<T>) -> Result<f64> {
        let perturbed = self.model.with_a(a_prime.clone())?;
        let costs = evaluate_pool(&perturbed, &self.cost, &self.family, &self.thetas, &self.noise);
        let w = softmin_weights(&costs, self.temperature);
        Ok(w.iter()
            .zip(&self.base_costs)
            .filter(|(wi, _)| **wi > 0.0)
            .map(|(wi, c)| wi * c)
            .sum())
    }
}

/// `1e-3 · (1 + ‖A‖_F / √(d_x d_phi))`.
pub fn default_fd_step<T: Scalar>(a: &DMatrix<T>) -> T {
    let d = T::of_count(a.len().max(1));
    T::of(1e-3) * (T::one() + a.norm() / d.sqrt())
}

fn perturbed<T: Scalar>(a: &DMatrix<T>, moves: &[(usize, T)]) -> DMatrix<T> {
    let cols = a.ncols();
    let mut out = a.clone();
    for &(k, delta) in moves {
        out[(k / cols, k % cols)] += delta;
    }
    out
}

fn eval_at<T: Scalar>(loss: &dyn TaskLoss<T>, a: &DMatrix<T>, moves: &[(usize, T)], i: usize, j: usize) -> Result<f64> {
    let v = loss.loss(&perturbed(a, moves)).map_err(|e| Error::HessianFailed {
        i,
        j,
        reason: e.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::HessianFailed {
            i,
            j,
            reason: "task loss is not finite at this perturbation".into(),
        });
    }
    Ok(v)
}

/// Central second differences over every coordinate pair.
pub fn hessian_fd<T: Scalar>(loss: &dyn TaskLoss<T>, a: &DMatrix<T>, fd_step: T) -> Result<ModelTaskHessian<T>> {
    if a.shape() != loss.shape() {
        return Err(crate::error::config_err("parameter matrix shape does not match the task loss"));
    }
    let n = a.len();
    let h = fd_step;
    let h2 = h + h;
    let denom = 4.0 * h.to_f64() * h.to_f64();
    let g0 = eval_at(loss, a, &[], 0, 0)?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let entries: Vec<Result<(usize, usize, f64, f64)>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if i == j {
                let p = eval_at(loss, a, &[(i, h2)], i, j)?;
                let m = eval_at(loss, a, &[(i, -h2)], i, j)?;
                let v = ((p - g0) - (g0 - m)) / denom;
                Ok((i, j, v, v))
            } else {
                let pp = eval_at(loss, a, &[(i, h), (j, h)], i, j)?;
                let pm = eval_at(loss, a, &[(i, h), (j, -h)], i, j)?;
                let mp = eval_at(loss, a, &[(i, -h), (j, h)], i, j)?;
                let mm = eval_at(loss, a, &[(i, -h), (j, -h)], i, j)?;
                let hij = ((pp - pm) - (mp - mm)) / denom;
                let hji = ((pp - mp) - (pm - mm)) / denom;
                Ok((i, j, hij, hji))
            }
        })
        .collect();
    let mut raw = DMatrix::zeros(n, n);
    for e in entries {
        let (i, j, hij, hji) = e?;
        raw[(i, j)] = T::of(hij);
        raw[(j, i)] = T::of(hji);
    }
    Ok(ModelTaskHessian::from_raw(raw, HessianMethod::FiniteDifference, fd_step))
}

/// Central-difference gradient `G` of the task loss.
pub fn task_gradient<T: Scalar>(loss: &dyn TaskLoss<T>, a: &DMatrix<T>, fd_step: T) -> Result<Vec<f64>> {
    if a.shape() != loss.shape() {
        return Err(crate::error::config_err("parameter matrix shape does not match the task loss"));
    }
    let h = fd_step;
    let denom = 2.0 * h.to_f64();
    (0..a.len())
        .into_par_iter()
        .map(|k| {
            let p = eval_at(loss, a, &[(k, h)], k, k)?;
            let m = eval_at(loss, a, &[(k, -h)], k, k)?;
            Ok((p - m) / denom)
        })
        .collect()
}

/// `G Gᵀ` with `G` from [`task_gradient`].
pub fn hessian_gauss_newton<T: Scalar>(loss: &dyn TaskLoss<T>, a: &DMatrix<T>, fd_step: T) -> Result<ModelTaskHessian<T>> {
    let g = task_gradient(loss, a, fd_step)?;
    let n = g.len();
    let raw = DMatrix::from_fn(n, n, |i, j| T::of(g[i] * g[j]));
    Ok(ModelTaskHessian::from_raw(raw, HessianMethod::GaussNewton, fd_step))
}

pub fn model_task_hessian<T: Scalar>(
    method: HessianMethod,
    loss: &dyn TaskLoss<T>,
    a: &DMatrix<T>,
    fd_step: Option<T>,
) -> Result<ModelTaskHessian<T>> {
    let step = fd_step.unwrap_or_else(|| default_fd_step(a));
    match method {
        HessianMethod::FiniteDifference => hessian_fd(loss, a, step),
        HessianMethod::GaussNewton => hessian_gauss_newton(loss, a, step),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{FeatureKind, FeatureMap};
    use nalgebra::DVector;

    struct Constant;
    impl TaskLoss<f64> for Constant {
        fn shape(&self) -> (usize, usize) {
            (2, 3)
        }
        fn loss(&self, _: &DMatrix<f64>) -> Result<f64> {
            Ok(4.2)
        }
    }

    struct Exploding;
    impl TaskLoss<f64> for Exploding {
        fn shape(&self) -> (usize, usize) {
            (1, 2)
        }
        fn loss(&self, a: &DMatrix<f64>) -> Result<f64> {
            Ok(if a[(0, 1)] > 0.0 { f64::INFINITY } else { 0.0 })
        }
    }

    #[test]
    fn quadratic_probe_gives_twice_identity() {
        let a = DMatrix::from_fn(2, 3, |i, j| (i as f64) - 0.3 * j as f64);
        let probe = QuadraticProbe { center: a.clone() };
        for step in [1e-3, 1e-2] {
            let h = hessian_fd(&probe, &a, step).unwrap();
            assert!((&h.matrix - DMatrix::identity(6, 6) * 2.0).abs().max() < 1e-6);
        }
    }

    #[test]
    fn constant_loss_gives_zero() {
        let a = DMatrix::zeros(2, 3);
        assert_eq!(hessian_fd(&Constant, &a, 1e-3).unwrap().matrix.norm(), 0.0);
        assert_eq!(hessian_gauss_newton(&Constant, &a, 1e-3).unwrap().matrix.norm(), 0.0);
    }

    #[test]
    fn gauss_newton_is_rank_one() {
        let a = DMatrix::from_fn(2, 3, |i, j| (i + j) as f64);
        let probe = QuadraticProbe { center: DMatrix::zeros(2, 3) };
        let h = hessian_gauss_newton(&probe, &a, 1e-3).unwrap();
        let ev = linalg::sym_eigenvalues(&h.matrix);
        assert!(ev[..5].iter().all(|v| v.abs() < 1e-9 * ev[5]));
        assert!(ev[5] > 0.0);
    }

    #[test]
    fn divergence_names_the_pair() {
        let err = hessian_fd(&Exploding, &DMatrix::zeros(1, 2), 1e-3).unwrap_err();
        assert!(matches!(err, Error::HessianFailed { .. }));
    }

    #[test]
    fn scalar_lqr_step_halving_agrees() {
        let phi = FeatureMap::new(FeatureKind::Linear { d_x: 1, d_u: 1 }).unwrap();
        let model = SystemModel::new(DMatrix::from_row_slice(1, 2, &[0.9, 0.7]), phi, 0.3, 3)
            .unwrap()
            .with_initial_state(DVector::from_vec(vec![1.0]))
            .unwrap();
        let cost = CostFunction::state_input(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let loss = ClosedFormLqrLoss { model: model.clone(), cost };
        let a = model.a().clone();
        let h1 = hessian_fd(&loss, &a, 1e-3).unwrap();
        let h2 = hessian_fd(&loss, &a, 2e-3).unwrap();
        assert!((&h1.matrix - &h2.matrix).norm() <= 1e-3 * h1.matrix.norm());
        assert!(h1.raw_min_eigenvalue > -1e-8 * h1.raw.trace());
        assert!(h1.raw_asymmetry < 1e-10);
    }
}
