//! Controller families, policy-cost evaluation and certainty-equivalence
//! synthesis `π_*(A)`.

mod bump;
mod lqr;
mod search;

pub use bump::{bump_matching_theta, synthesize_bump_matching};
pub use lqr::{closed_form_cost, closed_form_applicable, synthesize_lqr_affine, AffineSystem, QuadraticCost};
pub use search::{
    evaluate_pool, softmin_weights, synthesize_random_search, CandidatePool, PolicyFamily, SearchConfig,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{standard_normals, FeatureMap, Policy, SystemModel, DIVERGENCE_NORM};
use crate::error::{config_err, Result};
use crate::scalar::Scalar;

/// Per-step quadratic cost `zᵀ W z` on `z = [x − x_ref; u]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostFunction<T: Scalar> {
    weight: DMatrix<T>,
    x_ref: DVector<T>,
    d_x: usize,
}

impl<T: Scalar> CostFunction<T> {
    pub fn new(weight: DMatrix<T>, x_ref: DVector<T>) -> Result<Self> {
        let d_x = x_ref.len();
        if !weight.is_square() || weight.nrows() < d_x {
            return Err(config_err("cost weight must be square of size d_x + d_u"));
        }
        let w = crate::linalg::symmetrize(&weight);
        if crate::linalg::min_eigenvalue(&w) < -T::of(1e-12) * (T::one() + w.trace().abs()) {
            return Err(config_err("cost weight must be positive semidefinite"));
        }
        Ok(Self { weight: w, x_ref, d_x })
    }

    /// Block-diagonal weight `diag(Q, R)` with zero reference.
    pub fn state_input(q: DMatrix<T>, r: DMatrix<T>) -> Result<Self> {
        let (dx, du) = (q.nrows(), r.nrows());
        let mut w = DMatrix::zeros(dx + du, dx + du);
        w.view_mut((0, 0), (dx, dx)).copy_from(&q);
        w.view_mut((dx, dx), (du, du)).copy_from(&r);
        Self::new(w, DVector::zeros(dx))
    }

    pub fn zero(d_x: usize, d_u: usize) -> Self {
        Self {
            weight: DMatrix::zeros(d_x + d_u, d_x + d_u),
            x_ref: DVector::zeros(d_x),
            d_x,
        }
    }

    pub fn weight(&self) -> &DMatrix<T> {
        &self.weight
    }
    pub fn x_ref(&self) -> &DVector<T> {
        &self.x_ref
    }
    pub fn d_x(&self) -> usize {
        self.d_x
    }
    pub fn d_u(&self) -> usize {
        self.weight.nrows() - self.d_x
    }

    #[inline]
    pub fn eval(&self, x: &[T], u: &[T]) -> T {
        let dx = self.d_x;
        let n = self.weight.nrows();
        let z = |i: usize| if i < dx { x[i] - self.x_ref[i] } else { u[i - dx] };
        let mut acc = T::zero();
        for j in 0..n {
            let zj = z(j);
            if zj == T::zero() {
                continue;
            }
            let col = self.weight.column(j);
            let mut s = T::zero();
            for i in 0..n {
                s += col[i] * z(i);
            }
            acc += s * zj;
        }
        acc
    }
}

/// Deterministic controller from one of the task families.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlPolicy<T: Scalar> {
    /// `u_h = K_h x_h + k_h` (the last pair is reused past its end).
    LinearAffine {
        gains: Vec<DMatrix<T>>,
        offsets: Vec<DVector<T>>,
    },
    /// Goal-direction PD controller for the planar car.
    CarHierarchical { theta: [T; 4] },
    /// `u = θ₁x + Σ θ_{i+1} b_i(x) + θ_last` over the bump features.
    BumpMatching {
        theta: DVector<T>,
        centers: Vec<T>,
        width: T,
    },
}

impl<T: Scalar> ControlPolicy<T> {
    pub fn family_name(&self) -> &'static str {
        match self {
            ControlPolicy::LinearAffine { .. } => "linear-affine",
            ControlPolicy::CarHierarchical { .. } => "car-hierarchical",
            ControlPolicy::BumpMatching { .. } => "bump-matching",
        }
    }

    pub fn d_u(&self) -> usize {
        match self {
            ControlPolicy::LinearAffine { offsets, .. } => offsets.first().map_or(0, |k| k.len()),
            ControlPolicy::CarHierarchical { .. } => 2,
            ControlPolicy::BumpMatching { .. } => 1,
        }
    }

    /// Flat parameter vector.
    pub fn theta(&self) -> Vec<T> {
        match self {
            ControlPolicy::LinearAffine { gains, offsets } => {
                let mut v = Vec::new();
                for (k, o) in gains.iter().zip(offsets) {
                    v.extend(crate::linalg::vec_rows(k).iter().copied());
                    v.extend(o.iter().copied());
                }
                v
            }
            ControlPolicy::CarHierarchical { theta } => theta.to_vec(),
            ControlPolicy::BumpMatching { theta, .. } => theta.iter().copied().collect(),
        }
    }

    #[inline]
    pub fn act_into(&self, h: usize, x: &[T], out: &mut [T]) {
        match self {
            ControlPolicy::LinearAffine { gains, offsets } => {
                let idx = h.min(gains.len() - 1);
                let (k, o) = (&gains[idx], &offsets[idx]);
                out.copy_from_slice(o.as_slice());
                let rows = k.nrows();
                let data = k.as_slice();
                for (j, &xj) in x.iter().enumerate() {
                    let col = &data[j * rows..(j + 1) * rows];
                    for (u, &c) in out.iter_mut().zip(col) {
                        *u += c * xj;
                    }
                }
            }
            ControlPolicy::CarHierarchical { theta } => {
                let g1 = -theta[0] * x[0] - theta[1] * x[2];
                let g2 = -theta[0] * x[1] - theta[1] * x[3];
                let (s, c) = x[4].sin_cos();
                out[0] = g1 * c + g2 * s;
                let beta = if g1 == T::zero() && g2 == T::zero() {
                    T::zero()
                } else {
                    (g2 / g1).atan()
                };
                out[1] = -theta[2] * (x[4] - beta) - theta[3] * x[5];
            }
            ControlPolicy::BumpMatching { theta, centers, width } => {
                let mut u = theta[0] * x[0] + theta[theta.len() - 1];
                for (i, &c) in centers.iter().enumerate() {
                    let d = x[0] - c;
                    let b = (T::one() - *width * d * d).max(T::zero());
                    u += theta[i + 1] * b;
                }
                out[0] = u;
            }
        }
    }

    pub fn act_vec(&self, h: usize, x: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.d_u());
        self.act_into(h, x.as_slice(), out.as_mut_slice());
        out
    }
}

impl<T: Scalar> Policy<T> for ControlPolicy<T> {
    fn act(&mut self, h: usize, states: &[DVector<T>], _inputs: &[DVector<T>]) -> DVector<T> {
        self.act_vec(h, &states[h])
    }
}

/// Reusable buffers for allocation-free simulation.
#[derive(Clone, Debug)]
pub struct SimBuffers<T: Scalar> {
    x: Vec<T>,
    next: Vec<T>,
    u: Vec<T>,
    feat: Vec<T>,
}

impl<T: Scalar> SimBuffers<T> {
    pub fn new(model: &SystemModel<T>) -> Self {
        Self {
            x: vec![T::zero(); model.d_x()],
            next: vec![T::zero(); model.d_x()],
            u: vec![T::zero(); model.d_u()],
            feat: vec![T::zero(); model.d_phi()],
        }
    }
}

/// Cost of one episode driven by the standard-normal sequence `noise`
/// (`H × d_x`, step-major). Returns `+∞` if the state diverges.
pub fn simulate_cost<T: Scalar>(
    model: &SystemModel<T>,
    cost: &CostFunction<T>,
    policy: &ControlPolicy<T>,
    noise: &[T],
    buf: &mut SimBuffers<T>,
) -> T {
    let dx = model.d_x();
    let sigma = model.noise_std();
    let limit = T::of(DIVERGENCE_NORM * DIVERGENCE_NORM);
    buf.x.copy_from_slice(model.x0().as_slice());
    let mut total = T::zero();
    for h in 0..model.horizon() {
        policy.act_into(h, &buf.x, &mut buf.u);
        total += cost.eval(&buf.x, &buf.u);
        model.step_into(&buf.x, &buf.u, &mut buf.feat, &mut buf.next);
        let w = &noise[h * dx..(h + 1) * dx];
        let mut sq = T::zero();
        for (n, &z) in buf.next.iter_mut().zip(w) {
            *n += sigma * z;
            sq += *n * *n;
        }
        if !(sq <= limit) || !total.is_finite() {
            return infinite();
        }
        std::mem::swap(&mut buf.x, &mut buf.next);
    }
    total
}

/// `+∞` sentinel used for diverged rollouts.
#[inline]
pub fn infinite<T: Scalar>() -> T {
    T::one() / T::zero()
}

#[inline]
pub fn is_infinite<T: Scalar>(v: T) -> bool {
    !v.is_finite()
}

/// Mean cost with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl CostEstimate {
    pub fn exact(mean: f64) -> Self {
        Self { mean, se: 0.0, n: 0 }
    }
}

/// Streaming mean/variance accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeanAcc {
    n: usize,
    mean: f64,
    m2: f64,
    diverged: bool,
}

impl MeanAcc {
    pub fn push(&mut self, v: f64) {
        if !v.is_finite() {
            self.diverged = true;
        }
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn estimate(&self) -> CostEstimate {
        if self.diverged {
            return CostEstimate {
                mean: f64::INFINITY,
                se: f64::INFINITY,
                n: self.n,
            };
        }
        let se = if self.n > 1 {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            0.0
        };
        CostEstimate {
            mean: self.mean,
            se,
            n: self.n,
        }
    }
}

/// Monte-Carlo estimate of `J(π; A)`.
pub fn evaluate_cost_mc<T: Scalar, R: Rng + ?Sized>(
    model: &SystemModel<T>,
    cost: &CostFunction<T>,
    policy: &ControlPolicy<T>,
    n_rollouts: usize,
    rng: &mut R,
) -> Result<CostEstimate> {
    if n_rollouts == 0 {
        return Err(config_err("n_rollouts must be at least 1"));
    }
    let mut buf = SimBuffers::new(model);
    let mut noise = vec![T::zero(); model.horizon() * model.d_x()];
    let mut acc = MeanAcc::default();
    for _ in 0..n_rollouts {
        standard_normals(rng, &mut noise);
        acc.push(simulate_cost(model, cost, policy, &noise, &mut buf).to_f64());
    }
    Ok(acc.estimate())
}

/// `J(π; A)`: exact for linear-affine policies on affine-linear models,
/// Monte Carlo otherwise. Diverged rollouts give an infinite cost.
pub fn evaluate_cost<T: Scalar, R: Rng + ?Sized>(
    model: &SystemModel<T>,
    cost: &CostFunction<T>,
    policy: &ControlPolicy<T>,
    n_rollouts: usize,
    rng: &mut R,
) -> Result<CostEstimate> {
    if closed_form_applicable(model, policy) {
        let j = closed_form_cost(model, cost, policy)?;
        return Ok(CostEstimate::exact(j.to_f64()));
    }
    evaluate_cost_mc(model, cost, policy, n_rollouts, rng)
}

/// Paired common-random-number estimate of `J(π̂; A) − J(π_ref; A)`.
pub fn paired_cost_difference<T: Scalar, R: Rng + ?Sized>(
    model: &SystemModel<T>,
    cost: &CostFunction<T>,
    policy: &ControlPolicy<T>,
    reference: &ControlPolicy<T>,
    n_rollouts: usize,
    rng: &mut R,
) -> Result<CostEstimate> {
    if closed_form_applicable(model, policy) && closed_form_applicable(model, reference) {
        let a = closed_form_cost(model, cost, policy)?.to_f64();
        let b = closed_form_cost(model, cost, reference)?.to_f64();
        return Ok(CostEstimate::exact(a - b));
    }
    if n_rollouts == 0 {
        return Err(config_err("n_rollouts must be at least 1"));
    }
    let mut buf = SimBuffers::new(model);
    let mut noise = vec![T::zero(); model.horizon() * model.d_x()];
    let mut acc = MeanAcc::default();
    for _ in 0..n_rollouts {
        standard_normals(rng, &mut noise);
        let a = simulate_cost(model, cost, policy, &noise, &mut buf);
        let b = simulate_cost(model, cost, reference, &noise, &mut buf);
        if is_infinite(a) || is_infinite(b) {
            acc.push(f64::INFINITY);
        } else {
            acc.push(a.to_f64() - b.to_f64());
        }
    }
    Ok(acc.estimate())
}

/// Output of a certainty-equivalence synthesizer.
#[derive(Clone, Debug)]
pub struct SynthesisResult<T: Scalar> {
    pub policy: ControlPolicy<T>,
    /// Cost of `policy` on the synthesis model (`+∞` if it diverges there).
    pub estimated_cost: f64,
    pub candidate_pool: Option<CandidatePool<T>>,
}

const BUMP_EVAL_ROLLOUTS: usize = 1000;

/// How `π_*(A)` is computed for a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Synthesizer {
    Lqr,
    BumpMatching { goal: f64 },
    RandomSearch { family: PolicyFamily, config: SearchConfig },
}

impl Synthesizer {
    /// Runs the synthesizer on `model` (whose `A` is the estimate).
    pub fn synthesize<T: Scalar, R: Rng + ?Sized>(
        &self,
        model: &SystemModel<T>,
        cost: &CostFunction<T>,
        rng: &mut R,
    ) -> Result<SynthesisResult<T>> {
        match self {
            Synthesizer::Lqr => synthesize_lqr_affine(model, cost),
            Synthesizer::BumpMatching { goal } => {
                let mut res = synthesize_bump_matching(model.a(), model.phi(), T::of(*goal))?;
                res.estimated_cost = evaluate_cost_mc(model, cost, &res.policy, BUMP_EVAL_ROLLOUTS, rng)?.mean;
                Ok(res)
            }
            Synthesizer::RandomSearch { family, config } => {
                synthesize_random_search(model, cost, family, config, &[], rng)
            }
        }
    }
}

pub fn bump_parts<T: Scalar>(phi: &FeatureMap<T>) -> Result<(Vec<T>, T)> {
    match phi.kind() {
        crate::dynamics::FeatureKind::Bump1d { centers, width } => {
            Ok((centers.iter().map(|&c| T::of(c)).collect(), T::of(*width)))
        }
        _ => Err(config_err("bump-matching control needs the bump feature map")),
    }
}
