//! Feature maps, the nonlinear regulator model `x' = A·φ(x, u) + w`,
//! episode simulation and Monte-Carlo covariance estimates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use crate::seed::{rng_seeded, SimRng};

/// States whose norm exceeds this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// Named feature maps. New systems are composed from these by configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    /// `φ = [x, u]`.
    Linear { d_x: usize, d_u: usize },
    /// `φ = [x, u, 1]`.
    AffineLinear { d_x: usize, d_u: usize },
    /// `φ = [1]` regardless of state and input.
    Constant { d_x: usize, d_u: usize },
    /// Scalar system with bump features:
    /// `φ = [x, u, b_1(x), …, b_n(x)]`, `b_i(x) = max(1 − width·(x − c_i)², 0)`.
    Bump1d { centers: Vec<f64>, width: f64 },
    /// Planar car: `φ = [x, u, cos x₅, sin x₅, u₁cos x₅, u₁sin x₅, u₂cos x₅, u₂sin x₅]`.
    Car,
    /// Static bandit: state ignored, `φ = e_k` with `k = argmax u`.
    OneHot { arms: usize },
}

/// A known feature map together with its dimensions.
#[derive(Clone, Debug)]
pub struct FeatureMap<T: Scalar> {
    kind: FeatureKind,
    d_x: usize,
    d_u: usize,
    d_phi: usize,
    centers: Vec<T>,
    width: T,
    /// Nominal bound on ‖φ‖ used by theory-facing constants only.
    pub nominal_bound: T,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(kind: FeatureKind) -> Result<Self> {
        let (d_x, d_u, d_phi) = match &kind {
            FeatureKind::Linear { d_x, d_u } => (*d_x, *d_u, d_x + d_u),
            FeatureKind::AffineLinear { d_x, d_u } => (*d_x, *d_u, d_x + d_u + 1),
            FeatureKind::Constant { d_x, d_u } => (*d_x, *d_u, 1),
            FeatureKind::Bump1d { centers, width } => {
                if !(*width > 0.0) {
                    return Err(config_err("bump width must be positive"));
                }
                (1, 1, 2 + centers.len())
            }
            FeatureKind::Car => (6, 2, 14),
            FeatureKind::OneHot { arms } => (1, *arms, *arms),
        };
        if d_x == 0 || d_phi == 0 {
            return Err(config_err("feature map needs positive state and feature dimension"));
        }
        let (centers, width) = match &kind {
            FeatureKind::Bump1d { centers, width } => {
                (centers.iter().map(|&c| T::of(c)).collect(), T::of(*width))
            }
            _ => (Vec::new(), T::zero()),
        };
        Ok(Self {
            kind,
            d_x,
            d_u,
            d_phi,
            centers,
            width,
            nominal_bound: T::one(),
        })
    }

    pub fn with_nominal_bound(mut self, bound: T) -> Self {
        self.nominal_bound = bound;
        self
    }

    pub fn kind(&self) -> &FeatureKind {
        &self.kind
    }
    pub fn d_x(&self) -> usize {
        self.d_x
    }
    pub fn d_u(&self) -> usize {
        self.d_u
    }
    pub fn d_phi(&self) -> usize {
        self.d_phi
    }

    /// Bump centers of a [`FeatureKind::Bump1d`] map (empty otherwise).
    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    /// Value of a single bump feature.
    #[inline]
    pub fn bump(&self, x: T, center: T) -> T {
        let d = x - center;
        (T::one() - self.width * d * d).max(T::zero())
    }

    /// Evaluates `φ(x, u)` into `out` (length `d_phi`).
    #[inline]
    pub fn eval_into(&self, x: &[T], u: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.d_x);
        debug_assert_eq!(u.len(), self.d_u);
        debug_assert_eq!(out.len(), self.d_phi);
        match &self.kind {
            FeatureKind::Linear { .. } => {
                out[..self.d_x].copy_from_slice(x);
                out[self.d_x..].copy_from_slice(u);
            }
            FeatureKind::AffineLinear { .. } => {
                out[..self.d_x].copy_from_slice(x);
                out[self.d_x..self.d_x + self.d_u].copy_from_slice(u);
                out[self.d_phi - 1] = T::one();
            }
            FeatureKind::Constant { .. } => out[0] = T::one(),
            FeatureKind::Bump1d { .. } => {
                out[0] = x[0];
                out[1] = u[0];
                for (o, &c) in out[2..].iter_mut().zip(&self.centers) {
                    *o = self.bump(x[0], c);
                }
            }
            FeatureKind::Car => {
                out[..6].copy_from_slice(x);
                out[6] = u[0];
                out[7] = u[1];
                let (s, c) = x[4].sin_cos();
                out[8] = c;
                out[9] = s;
                out[10] = u[0] * c;
                out[11] = u[0] * s;
                out[12] = u[1] * c;
                out[13] = u[1] * s;
            }
            FeatureKind::OneHot { .. } => {
                let mut best = 0;
                for k in 1..u.len() {
                    if u[k] > u[best] {
                        best = k;
                    }
                }
                out.iter_mut().for_each(|o| *o = T::zero());
                out[best] = T::one();
            }
        }
    }

    pub fn eval(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.d_phi);
        self.eval_into(x.as_slice(), u.as_slice(), out.as_mut_slice());
        out
    }
}

/// Ground-truth simulator or estimated model: `x_{h+1} = A·φ(x_h, u_h) + w_h`
/// with `w_h ~ N(0, σ_w² I)` over episodes of `horizon` steps.
#[derive(Clone, Debug)]
pub struct SystemModel<T: Scalar> {
    a: DMatrix<T>,
    phi: FeatureMap<T>,
    noise_std: T,
    horizon: usize,
    x0: DVector<T>,
    /// Operator-norm bound on `A` (theory-facing only).
    pub op_norm_bound: T,
}

impl<T: Scalar> SystemModel<T> {
    pub fn new(a: DMatrix<T>, phi: FeatureMap<T>, noise_std: T, horizon: usize) -> Result<Self> {
        if a.shape() != (phi.d_x(), phi.d_phi()) {
            return Err(config_err(format!(
                "A has shape {:?}, feature map expects ({}, {})",
                a.shape(),
                phi.d_x(),
                phi.d_phi()
            )));
        }
        if !(noise_std >= T::zero()) {
            return Err(config_err("noise standard deviation must be nonnegative"));
        }
        if horizon == 0 {
            return Err(config_err("horizon must be positive"));
        }
        let x0 = DVector::zeros(phi.d_x());
        let op_norm_bound = a.norm() + T::one();
        Ok(Self {
            a,
            phi,
            noise_std,
            horizon,
            x0,
            op_norm_bound,
        })
    }

    pub fn with_initial_state(mut self, x0: DVector<T>) -> Result<Self> {
        if x0.len() != self.phi.d_x() {
            return Err(config_err("initial state dimension mismatch"));
        }
        self.x0 = x0;
        Ok(self)
    }

    /// Same structure, different parameter matrix.
    pub fn with_a(&self, a: DMatrix<T>) -> Result<Self> {
        if a.shape() != self.a.shape() {
            return Err(config_err("parameter matrix shape mismatch"));
        }
        let mut out = self.clone();
        out.a = a;
        Ok(out)
    }

    pub fn with_noise_std(&self, noise_std: T) -> Self {
        let mut out = self.clone();
        out.noise_std = noise_std;
        out
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        let mut out = self.clone();
        out.horizon = horizon.max(1);
        out
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }
    pub fn phi(&self) -> &FeatureMap<T> {
        &self.phi
    }
    pub fn noise_std(&self) -> T {
        self.noise_std
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn x0(&self) -> &DVector<T> {
        &self.x0
    }
    pub fn d_x(&self) -> usize {
        self.phi.d_x()
    }
    pub fn d_u(&self) -> usize {
        self.phi.d_u()
    }
    pub fn d_phi(&self) -> usize {
        self.phi.d_phi()
    }

    /// One noiseless transition on slices: `out = A·φ(x, u)`; `feat` receives φ.
    #[inline]
    pub fn step_into(&self, x: &[T], u: &[T], feat: &mut [T], out: &mut [T]) {
        self.phi.eval_into(x, u, feat);
        mat_vec_into(&self.a, feat, out);
    }

    /// `A·φ(x, u) + w`.
    pub fn step(&self, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>) -> Result<DVector<T>> {
        if x.len() != self.d_x() || u.len() != self.d_u() || w.len() != self.d_x() {
            return Err(config_err(format!(
                "step dimensions (x {}, u {}, w {}) do not match model (d_x {}, d_u {})",
                x.len(),
                u.len(),
                w.len(),
                self.d_x(),
                self.d_u()
            )));
        }
        let mut feat = vec![T::zero(); self.d_phi()];
        let mut out = DVector::zeros(self.d_x());
        self.step_into(x.as_slice(), u.as_slice(), &mut feat, out.as_mut_slice());
        Ok(out + w)
    }
}

/// `out = A·v` for a column-major dense `A`.
#[inline]
pub fn mat_vec_into<T: Scalar>(a: &DMatrix<T>, v: &[T], out: &mut [T]) {
    let rows = a.nrows();
    out.iter_mut().for_each(|o| *o = T::zero());
    let data = a.as_slice();
    for (j, &vj) in v.iter().enumerate() {
        if vj == T::zero() {
            continue;
        }
        let col = &data[j * rows..(j + 1) * rows];
        for (o, &c) in out.iter_mut().zip(col) {
            *o += c * vj;
        }
    }
}

/// True when a state is non-finite or beyond [`DIVERGENCE_NORM`].
#[inline]
pub fn is_diverged<T: Scalar>(x: &[T]) -> bool {
    let mut sq = T::zero();
    for &v in x {
        if !v.is_finite() {
            return true;
        }
        sq += v * v;
    }
    sq.to_f64() > DIVERGENCE_NORM * DIVERGENCE_NORM
}

/// One episode: `H + 1` states and `H` inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T: Scalar> {
    pub states: Vec<DVector<T>>,
    pub inputs: Vec<DVector<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    /// Features `φ(x_h, u_h)` for every step.
    pub fn features(&self, phi: &FeatureMap<T>) -> Vec<DVector<T>> {
        self.inputs
            .iter()
            .zip(&self.states)
            .map(|(u, x)| phi.eval(x, u))
            .collect()
    }

    /// `Σ_h ‖u_h‖²`.
    pub fn input_power(&self) -> T {
        self.inputs.iter().fold(T::zero(), |acc, u| acc + u.norm_squared())
    }

    /// `ψ(τ) = Σ_h φ φᵀ`.
    pub fn covariance(&self, phi: &FeatureMap<T>) -> DMatrix<T> {
        let mut c = Covariates::new(phi.d_phi());
        c.add_trajectory(self, phi);
        c.lambda
    }

    pub fn is_consistent(&self) -> bool {
        self.states.len() == self.inputs.len() + 1
    }
}

/// Accumulated feature covariance `Σ φφᵀ` over some number of episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Covariates<T: Scalar> {
    pub lambda: DMatrix<T>,
    pub episode_count: usize,
}

impl<T: Scalar> Covariates<T> {
    pub fn new(d_phi: usize) -> Self {
        Self {
            lambda: DMatrix::zeros(d_phi, d_phi),
            episode_count: 0,
        }
    }

    pub fn from_matrix(lambda: DMatrix<T>, episode_count: usize) -> Self {
        Self {
            lambda,
            episode_count,
        }
    }

    pub fn dim(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn add_features(&mut self, feat: &[T]) {
        linalg::add_outer(&mut self.lambda, feat, T::one());
    }

    /// Adds every step of a trajectory (Loewner-monotone).
    pub fn add_trajectory(&mut self, traj: &Trajectory<T>, phi: &FeatureMap<T>) {
        let mut feat = vec![T::zero(); phi.d_phi()];
        for (x, u) in traj.states.iter().zip(&traj.inputs) {
            phi.eval_into(x.as_slice(), u.as_slice(), &mut feat);
            self.add_features(&feat);
        }
        self.episode_count += 1;
    }

    pub fn merge(&mut self, other: &Covariates<T>) {
        self.lambda += &other.lambda;
        self.episode_count += other.episode_count;
    }

    /// Average covariance per episode.
    pub fn per_episode(&self) -> DMatrix<T> {
        if self.episode_count == 0 {
            return self.lambda.clone();
        }
        &self.lambda / T::of_count(self.episode_count)
    }

    pub fn min_eigenvalue(&self) -> T {
        linalg::min_eigenvalue(&self.lambda)
    }
}

/// An interactive policy. `act` receives the prefix `x_1..x_h`, `u_1..u_{h-1}`
/// (`states.len() == h + 1` with zero-based `h`).
pub trait Policy<T: Scalar> {
    /// Called once before each episode.
    fn begin_episode(&mut self) {}

    fn act(&mut self, h: usize, states: &[DVector<T>], inputs: &[DVector<T>]) -> DVector<T>;
}

impl<T: Scalar, F> Policy<T> for F
where
    F: FnMut(usize, &[DVector<T>], &[DVector<T>]) -> DVector<T>,
{
    fn act(&mut self, h: usize, states: &[DVector<T>], inputs: &[DVector<T>]) -> DVector<T> {
        self(h, states, inputs)
    }
}

/// Draws `n` standard normals (sampled in `f64`).
#[inline]
pub fn standard_normals<T: Scalar, R: Rng + ?Sized>(rng: &mut R, out: &mut [T]) {
    for o in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *o = T::of(z);
    }
}

/// Plays `policy` for one episode from the model's initial state.
pub fn rollout<T: Scalar, R: Rng + ?Sized>(
    model: &SystemModel<T>,
    policy: &mut dyn Policy<T>,
    rng: &mut R,
) -> Result<Trajectory<T>> {
    let h_len = model.horizon();
    let mut states = Vec::with_capacity(h_len + 1);
    let mut inputs = Vec::with_capacity(h_len);
    states.push(model.x0().clone());
    let mut feat = vec![T::zero(); model.d_phi()];
    let mut noise = vec![T::zero(); model.d_x()];
    policy.begin_episode();
    for h in 0..h_len {
        let u = policy.act(h, &states, &inputs);
        if u.len() != model.d_u() {
            return Err(config_err(format!(
                "policy produced input of length {}, model expects {}",
                u.len(),
                model.d_u()
            )));
        }
        let mut next = DVector::zeros(model.d_x());
        model.step_into(states[h].as_slice(), u.as_slice(), &mut feat, next.as_mut_slice());
        standard_normals(rng, &mut noise);
        for (n, z) in next.iter_mut().zip(&noise) {
            *n += model.noise_std() * *z;
        }
        if is_diverged(next.as_slice()) || u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: h + 1 });
        }
        inputs.push(u);
        states.push(next);
    }
    Ok(Trajectory { states, inputs })
}

/// Monte-Carlo estimate of `Λ_{A,π} = E[Σ_h φφᵀ]`. The returned covariates
/// describe one expected episode (`episode_count == 1`).
pub fn estimate_policy_covariance<T: Scalar, R: Rng + ?Sized>(
    model: &SystemModel<T>,
    policy: &mut dyn Policy<T>,
    n_rollouts: usize,
    rng: &mut R,
) -> Result<Covariates<T>> {
    if n_rollouts == 0 {
        return Err(config_err("n_rollouts must be at least 1"));
    }
    let mut acc = Covariates::new(model.d_phi());
    for _ in 0..n_rollouts {
        let traj = rollout(model, policy, rng)?;
        acc.add_trajectory(&traj, model.phi());
    }
    Ok(Covariates::from_matrix(acc.per_episode(), 1))
}

/// Pre-sampled standard normals for common-random-number evaluations.
#[derive(Clone, Debug)]
pub struct NoiseBank<T: Scalar> {
    rollouts: usize,
    horizon: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> NoiseBank<T> {
    pub fn new(seed: u64, rollouts: usize, horizon: usize, dim: usize) -> Self {
        let mut rng: SimRng = rng_seeded(seed);
        let mut data = vec![T::zero(); rollouts * horizon * dim];
        standard_normals(&mut rng, &mut data);
        Self {
            rollouts,
            horizon,
            dim,
            data,
        }
    }

    pub fn rollouts(&self) -> usize {
        self.rollouts
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Noise for rollout `r`, laid out step-major (`horizon × dim`).
    #[inline]
    pub fn rollout(&self, r: usize) -> &[T] {
        let len = self.horizon * self.dim;
        &self.data[r * len..(r + 1) * len]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_seeded;

    fn bump_map() -> FeatureMap<f64> {
        FeatureMap::new(FeatureKind::Bump1d {
            centers: vec![10.0, -14.0, -11.0, -8.0, -5.0, -2.0, 1.0, 4.0, 7.0, -17.0],
            width: 100.0,
        })
        .unwrap()
    }

    #[test]
    fn identity_step_returns_state() {
        let phi = FeatureMap::<f64>::new(FeatureKind::Linear { d_x: 2, d_u: 0 }).unwrap();
        let model = SystemModel::new(DMatrix::identity(2, 2), phi, 0.0, 3).unwrap();
        let x = DVector::from_vec(vec![1.5, -2.0]);
        let out = model.step(&x, &DVector::zeros(0), &DVector::zeros(2)).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn bump_step_from_origin() {
        let mut a = DMatrix::from_element(1, 12, -3.0);
        a[(0, 0)] = 0.8;
        a[(0, 1)] = 1.0;
        let model = SystemModel::new(a, bump_map(), 0.0, 10).unwrap();
        let out = model
            .step(&DVector::from_vec(vec![0.0]), &DVector::from_vec(vec![1.0]), &DVector::zeros(1))
            .unwrap();
        // scalar oracle: 0.8·0 + 1·1 − 3·Σ max(1 − 100(0 − c)², 0) with every bump inactive at 0
        let oracle = 0.8 * 0.0 + 1.0 - 3.0 * [10.0f64, -14., -11., -8., -5., -2., 1., 4., 7., -17.]
            .iter()
            .map(|c| (1.0 - 100.0 * (0.0 - c) * (0.0 - c)).max(0.0))
            .sum::<f64>();
        assert_eq!(out[0], oracle);
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn step_rejects_dimension_mismatch() {
        let phi = FeatureMap::<f64>::new(FeatureKind::Linear { d_x: 2, d_u: 1 }).unwrap();
        let model = SystemModel::new(DMatrix::zeros(2, 3), phi, 0.0, 3).unwrap();
        let err = model.step(&DVector::zeros(3), &DVector::zeros(1), &DVector::zeros(2));
        assert!(matches!(err, Err(Error::Config(_))));
        assert!(SystemModel::new(DMatrix::<f64>::zeros(2, 2), FeatureMap::new(FeatureKind::Linear { d_x: 2, d_u: 1 }).unwrap(), 0.0, 3).is_err());
    }

    #[test]
    fn bump_feature_support() {
        let phi = bump_map();
        assert_eq!(phi.bump(10.0, 10.0), 1.0);
        assert_eq!(phi.bump(10.2, 10.0), 0.0);
        assert!(phi.bump(10.1, 10.0).abs() < 1e-12);
        assert!((phi.bump(10.05, 10.0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn car_features_layout() {
        let phi = FeatureMap::<f64>::new(FeatureKind::Car).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 0.3, 6.0]);
        let u = DVector::from_vec(vec![2.0, -1.0]);
        let f = phi.eval(&x, &u);
        assert_eq!(f.len(), 14);
        assert_eq!(f[4], 0.3);
        assert_eq!(f[7], -1.0);
        assert!((f[8] - 0.3f64.cos()).abs() < 1e-15);
        assert!((f[11] - 2.0 * 0.3f64.sin()).abs() < 1e-15);
        assert!((f[12] + 0.3f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn one_hot_breaks_ties_low() {
        let phi = FeatureMap::<f64>::new(FeatureKind::OneHot { arms: 3 }).unwrap();
        let f = phi.eval(&DVector::zeros(1), &DVector::from_vec(vec![1.0, 1.0, 0.0]));
        assert_eq!(f.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn rollout_length_contract() {
        let phi = FeatureMap::<f64>::new(FeatureKind::Linear { d_x: 1, d_u: 1 }).unwrap();
        let model = SystemModel::new(DMatrix::from_row_slice(1, 2, &[0.5, 1.0]), phi, 0.3, 1).unwrap();
        let mut zero = |_: usize, _: &[DVector<f64>], _: &[DVector<f64>]| DVector::zeros(1);
        let t = rollout(&model, &mut zero, &mut rng_seeded(1)).unwrap();
        assert_eq!(t.states.len(), 2);
        assert_eq!(t.inputs.len(), 1);
    }

    #[test]
    fn rollout_is_deterministic_per_seed() {
        let phi = FeatureMap::<f64>::new(FeatureKind::Linear { d_x: 1, d_u: 1 }).unwrap();
        let model = SystemModel::new(DMatrix::from_row_slice(1, 2, &[0.5, 1.0]), phi, 0.3, 7).unwrap();
        let mut pol = |h: usize, _: &[DVector<f64>], _: &[DVector<f64>]| DVector::from_vec(vec![h as f64]);
        let a = rollout(&model, &mut pol, &mut rng_seeded(9)).unwrap();
        let b = rollout(&model, &mut pol, &mut rng_seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rollout_reports_divergence_step() {
        let phi = FeatureMap::<f64>::new(FeatureKind::Linear { d_x: 1, d_u: 1 }).unwrap();
        let model = SystemModel::new(DMatrix::from_row_slice(1, 2, &[1e5, 0.0]), phi, 0.0, 10)
            .unwrap()
            .with_initial_state(DVector::from_vec(vec![1.0]))
            .unwrap();
        let mut zero = |_: usize, _: &[DVector<f64>], _: &[DVector<f64>]| DVector::zeros(1);
        match rollout(&model, &mut zero, &mut rng_seeded(1)) {
            Err(Error::Diverged { step }) => assert_eq!(step, 2),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn constant_feature_covariance() {
        let phi = FeatureMap::<f64>::new(FeatureKind::Constant { d_x: 1, d_u: 1 }).unwrap();
        let model = SystemModel::new(DMatrix::from_element(1, 1, 0.0), phi, 1.0, 10).unwrap();
        let mut pol = |_: usize, _: &[DVector<f64>], _: &[DVector<f64>]| DVector::from_vec(vec![3.0]);
        let cov = estimate_policy_covariance(&model, &mut pol, 17, &mut rng_seeded(2)).unwrap();
        assert_eq!(cov.lambda[(0, 0)], 10.0);
    }

    #[test]
    fn hand_unrolled_two_step_covariance() {
        let phi = FeatureMap::<f64>::new(FeatureKind::Linear { d_x: 1, d_u: 1 }).unwrap();
        let model = SystemModel::new(DMatrix::from_row_slice(1, 2, &[0.5, 1.0]), phi, 0.0, 2).unwrap();
        let mut one = |_: usize, _: &[DVector<f64>], _: &[DVector<f64>]| DVector::from_vec(vec![1.0]);
        for n in [1, 3, 8] {
            let cov = estimate_policy_covariance(&model, &mut one, n, &mut rng_seeded(n as u64)).unwrap();
            // steps: (x, u) = (0, 1), (1, 1)
            assert_eq!(cov.lambda, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]));
        }
    }

    #[test]
    fn estimate_requires_rollouts() {
        let phi = FeatureMap::<f64>::new(FeatureKind::Constant { d_x: 1, d_u: 1 }).unwrap();
        let model = SystemModel::new(DMatrix::from_element(1, 1, 0.0), phi, 1.0, 2).unwrap();
        let mut pol = |_: usize, _: &[DVector<f64>], _: &[DVector<f64>]| DVector::zeros(1);
        assert!(estimate_policy_covariance(&model, &mut pol, 0, &mut rng_seeded(2)).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let phi = FeatureMap::<f32>::new(FeatureKind::AffineLinear { d_x: 1, d_u: 1 }).unwrap();
        let model = SystemModel::new(DMatrix::from_row_slice(1, 3, &[1.0f32, 0.5, -0.25]), phi, 0.0, 3).unwrap();
        let out = model
            .step(&DVector::from_vec(vec![2.0f32]), &DVector::from_vec(vec![1.0f32]), &DVector::zeros(1))
            .unwrap();
        assert_eq!(out[0], 2.25f32);
    }
}
