//! Finite-horizon LQR with affine dynamics and affine-quadratic stage cost,
//! plus exact cost evaluation of time-varying linear-affine policies.

use nalgebra::{DMatrix, DVector};

use super::{ControlPolicy, CostFunction, SynthesisResult};
use crate::dynamics::{FeatureKind, SystemModel};
use crate::error::{config_err, Error, Result};
use crate::scalar::Scalar;

/// `x' = F x + G u + c + w`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineSystem<T: Scalar> {
    pub f: DMatrix<T>,
    pub g: DMatrix<T>,
    pub c: DVector<T>,
}

impl<T: Scalar> AffineSystem<T> {
    pub fn from_model(model: &SystemModel<T>) -> Result<Self> {
        let (dx, du) = (model.d_x(), model.d_u());
        let a = model.a();
        let c = match model.phi().kind() {
            FeatureKind::Linear { .. } => DVector::zeros(dx),
            FeatureKind::AffineLinear { .. } => a.column(dx + du).into_owned(),
            _ => return Err(config_err("closed-form LQR needs a linear or affine-linear feature map")),
        };
        Ok(Self {
            f: a.columns(0, dx).into_owned(),
            g: a.columns(dx, du).into_owned(),
            c,
        })
    }
}

/// Stage cost `xᵀWxx x + 2xᵀWxu u + uᵀWuu u + 2gxᵀx + 2guᵀu + c0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticCost<T: Scalar> {
    pub wxx: DMatrix<T>,
    pub wxu: DMatrix<T>,
    pub wuu: DMatrix<T>,
    pub gx: DVector<T>,
    pub gu: DVector<T>,
    pub c0: T,
}

impl<T: Scalar> QuadraticCost<T> {
    pub fn from_cost(cost: &CostFunction<T>) -> Self {
        let (dx, du) = (cost.d_x(), cost.d_u());
        let w = cost.weight();
        let r = cost.x_ref();
        let wxx = w.view((0, 0), (dx, dx)).into_owned();
        let wxu = w.view((0, dx), (dx, du)).into_owned();
        let wux = w.view((dx, 0), (du, dx)).into_owned();
        let wuu = w.view((dx, dx), (du, du)).into_owned();
        let gx = -(&wxx * r);
        let gu = -(&wux * r);
        let c0 = (r.transpose() * &wxx * r)[(0, 0)];
        Self {
            wxx,
            wxu,
            wuu,
            gx,
            gu,
            c0,
        }
    }
}

struct Backward<T: Scalar> {
    gains: Vec<DMatrix<T>>,
    offsets: Vec<DVector<T>>,
    p: DMatrix<T>,
    q: DVector<T>,
    s: T,
}

/// Backward recursion over `V_h(x) = xᵀPx + 2qᵀx + s`. With `fixed` the given
/// policy is evaluated; otherwise the minimizing policy is built on the way.
fn backward<T: Scalar>(
    sys: &AffineSystem<T>,
    cost: &QuadraticCost<T>,
    horizon: usize,
    noise_var: T,
    fixed: Option<(&[DMatrix<T>], &[DVector<T>])>,
) -> Result<Backward<T>> {
    let (dx, du) = (sys.f.nrows(), sys.g.ncols());
    let mut p = DMatrix::<T>::zeros(dx, dx);
    let mut q = DVector::<T>::zeros(dx);
    let mut s = T::zero();
    let mut gains = vec![DMatrix::zeros(du, dx); horizon];
    let mut offsets = vec![DVector::zeros(du); horizon];
    let gt = sys.g.transpose();
    for h in (0..horizon).rev() {
        let (k, kk) = match fixed {
            Some((gs, os)) => {
                let idx = h.min(gs.len() - 1);
                (gs[idx].clone(), os[idx].clone())
            }
            None => {
                let gtp = &gt * &p;
                let s_mat = &cost.wuu + &gtp * &sys.g;
                let chol = crate::linalg::symmetrize(&s_mat)
                    .cholesky()
                    .ok_or_else(|| config_err("input cost R must be positive definite"))?;
                let lin = cost.wxu.transpose() + &gtp * &sys.f;
                let aff = &cost.gu + &gtp * &sys.c + &gt * &q;
                (-chol.solve(&lin), -chol.solve(&aff))
            }
        };
        // closed loop x' = Fc x + cc + w, cost zᵀWz with z = [x; Kx + k]
        let fc = &sys.f + &sys.g * &k;
        let cc = &sys.g * &kk + &sys.c;
        let kt = k.transpose();
        let wxu_k = &cost.wxu * &k;
        let quad = &cost.wxx + &wxu_k + wxu_k.transpose() + &kt * &cost.wuu * &k;
        let lin = &cost.wxu * &kk + &kt * (&cost.wuu * &kk) + &cost.gx + &kt * &cost.gu;
        let constant = (kk.transpose() * &cost.wuu * &kk)[(0, 0)]
            + T::of(2.0) * cost.gu.dot(&kk)
            + cost.c0;
        let pc = &p * &cc;
        let s_next = constant + cc.dot(&pc) + T::of(2.0) * q.dot(&cc) + s + noise_var * p.trace();
        let q_next = lin + fc.transpose() * (pc + &q);
        let p_next = quad + fc.transpose() * &p * &fc;
        p = crate::linalg::symmetrize(&p_next);
        q = q_next;
        s = s_next;
        gains[h] = k;
        offsets[h] = kk;
    }
    Ok(Backward {
        gains,
        offsets,
        p,
        q,
        s,
    })
}

fn value_at<T: Scalar>(b: &Backward<T>, x0: &DVector<T>) -> T {
    x0.dot(&(&b.p * x0)) + T::of(2.0) * b.q.dot(x0) + b.s
}

/// Optimal time-varying linear-affine controller for `model` under `cost`.
pub fn synthesize_lqr_affine<T: Scalar>(model: &SystemModel<T>, cost: &CostFunction<T>) -> Result<SynthesisResult<T>> {
    let sys = AffineSystem::from_model(model)?;
    if cost.d_x() != model.d_x() || cost.d_u() != model.d_u() {
        return Err(config_err("cost dimensions do not match the model"));
    }
    let qc = QuadraticCost::from_cost(cost);
    if qc.wuu.clone().cholesky().is_none() {
        return Err(config_err("input cost R must be positive definite"));
    }
    let sigma2 = model.noise_std() * model.noise_std();
    let b = backward(&sys, &qc, model.horizon(), sigma2, None)?;
    let j = value_at(&b, model.x0());
    if !j.is_finite() {
        return Err(Error::SynthesisFailed("LQR recursion produced a non-finite value".into()));
    }
    Ok(SynthesisResult {
        policy: ControlPolicy::LinearAffine {
            gains: b.gains,
            offsets: b.offsets,
        },
        estimated_cost: j.to_f64(),
        candidate_pool: None,
    })
}

pub fn closed_form_applicable<T: Scalar>(model: &SystemModel<T>, policy: &ControlPolicy<T>) -> bool {
    matches!(policy, ControlPolicy::LinearAffine { .. })
        && matches!(
            model.phi().kind(),
            FeatureKind::Linear { .. } | FeatureKind::AffineLinear { .. }
        )
}

/// Exact `J(π; A)` of a linear-affine policy on an affine-linear model.
pub fn closed_form_cost<T: Scalar>(model: &SystemModel<T>, cost: &CostFunction<T>, policy: &ControlPolicy<T>) -> Result<T> {
    let ControlPolicy::LinearAffine { gains, offsets } = policy else {
        return Err(config_err("closed-form evaluation needs a linear-affine policy"));
    };
    if gains.is_empty() || gains.len() != offsets.len() {
        return Err(config_err("linear-affine policy needs matching nonempty gains and offsets"));
    }
    let sys = AffineSystem::from_model(model)?;
    let qc = QuadraticCost::from_cost(cost);
    let sigma2 = model.noise_std() * model.noise_std();
    let b = backward(&sys, &qc, model.horizon(), sigma2, Some((gains, offsets)))?;
    Ok(value_at(&b, model.x0()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::evaluate_cost_mc;
    use crate::dynamics::FeatureMap;
    use crate::seed::rng_seeded;
    use rand::Rng;

    fn affine_model(a: DMatrix<f64>, noise: f64, h: usize) -> SystemModel<f64> {
        let phi = FeatureMap::new(FeatureKind::AffineLinear { d_x: 2, d_u: 1 }).unwrap();
        SystemModel::new(a, phi, noise, h)
            .unwrap()
            .with_initial_state(DVector::from_vec(vec![1.0, -0.5]))
            .unwrap()
    }

    fn unit_cost() -> CostFunction<f64> {
        CostFunction::state_input(DMatrix::identity(2, 2), DMatrix::identity(1, 1) * 0.5).unwrap()
    }

    #[test]
    fn zero_affine_drive_gives_zero_offsets() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 0.1, 0.0, 0.0, 0.0, 1.0, 0.1, 0.0]);
        let res = synthesize_lqr_affine(&affine_model(a, 0.3, 6), &unit_cost()).unwrap();
        let ControlPolicy::LinearAffine { offsets, .. } = res.policy else { unreachable!() };
        assert!(offsets.iter().all(|o| o.norm() == 0.0));
    }

    #[test]
    fn first_stage_gain_matches_single_step_minimizer() {
        // with no terminal cost the last stage plays K=0, so the value before it is Q
        let a = DMatrix::from_row_slice(2, 4, &[0.9, 0.2, 0.0, 0.0, -0.1, 1.1, 0.5, 0.0]);
        let res = synthesize_lqr_affine(&affine_model(a.clone(), 0.0, 2), &unit_cost()).unwrap();
        let ControlPolicy::LinearAffine { gains, .. } = res.policy else { unreachable!() };
        let f = a.columns(0, 2).into_owned();
        let g = a.columns(2, 1).into_owned();
        let q = DMatrix::<f64>::identity(2, 2);
        let r = DMatrix::<f64>::identity(1, 1) * 0.5;
        let oracle = -(r + g.transpose() * &q * &g).try_inverse().unwrap() * g.transpose() * &q * &f;
        assert!((&gains[0] - oracle).norm() < 1e-12);
        assert_eq!(gains[1].norm(), 0.0);
    }

    #[test]
    fn closed_form_matches_noiseless_simulation() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 0.1, 0.0, 0.3, 0.0, 1.0, 0.1, -0.98]);
        let model = affine_model(a, 0.0, 20);
        let res = synthesize_lqr_affine(&model, &unit_cost()).unwrap();
        let mc = evaluate_cost_mc(&model, &unit_cost(), &res.policy, 2, &mut rng_seeded(0)).unwrap();
        assert!((mc.mean - res.estimated_cost).abs() < 1e-10 * (1.0 + mc.mean.abs()));
    }

    #[test]
    fn closed_form_matches_noisy_monte_carlo() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 0.1, 0.0, 0.3, 0.0, 1.0, 0.1, -0.98]);
        let model = affine_model(a, 0.4, 15);
        let res = synthesize_lqr_affine(&model, &unit_cost()).unwrap();
        let mc = evaluate_cost_mc(&model, &unit_cost(), &res.policy, 20000, &mut rng_seeded(3)).unwrap();
        assert!((mc.mean - res.estimated_cost).abs() < 4.0 * mc.se);
    }

    #[test]
    fn reference_tracking_cost_is_handled() {
        let phi = FeatureMap::new(FeatureKind::Linear { d_x: 1, d_u: 1 }).unwrap();
        let model = SystemModel::new(DMatrix::from_row_slice(1, 2, &[0.8, 1.0]), phi, 0.0, 5).unwrap();
        let cost = CostFunction::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.01]), DVector::from_vec(vec![10.0])).unwrap();
        let res = synthesize_lqr_affine(&model, &cost).unwrap();
        let mc = evaluate_cost_mc(&model, &cost, &res.policy, 1, &mut rng_seeded(0)).unwrap();
        assert!((mc.mean - res.estimated_cost).abs() < 1e-9);
        let mut rng = rng_seeded(5);
        let ControlPolicy::LinearAffine { gains, offsets } = &res.policy else { unreachable!() };
        for _ in 0..50 {
            let o: Vec<DVector<f64>> = offsets.iter().map(|o| o.map(|v| v + rng.random_range(-0.1..0.1))).collect();
            let p = ControlPolicy::LinearAffine { gains: gains.clone(), offsets: o };
            assert!(closed_form_cost(&model, &cost, &p).unwrap() >= res.estimated_cost - 1e-9);
        }
    }

    #[test]
    fn rejects_indefinite_input_weight() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 0.1, 0.0, 0.0, 0.0, 1.0, 0.1, 0.0]);
        let cost = CostFunction::state_input(DMatrix::identity(2, 2), DMatrix::zeros(1, 1)).unwrap();
        assert!(matches!(
            synthesize_lqr_affine(&affine_model(a, 0.0, 3), &cost),
            Err(Error::Config(_))
        ));
    }
}
