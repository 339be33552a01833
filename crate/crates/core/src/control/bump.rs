//! Parameter-matching controller for the scalar bump system.

use nalgebra::{DMatrix, DVector};

use super::{bump_parts, ControlPolicy, SynthesisResult};
use crate::dynamics::FeatureMap;
use crate::error::{config_err, Error, Result};
use crate::scalar::Scalar;

/// `θ` cancelling `x` and the bumps through the estimated input gain, with
/// the constant term set to `goal`.
pub fn bump_matching_theta<T: Scalar>(a_hat: &DMatrix<T>, goal: T) -> Result<DVector<T>> {
    if a_hat.nrows() != 1 || a_hat.ncols() < 2 {
        return Err(config_err("bump-matching needs a 1 × (2 + n_bumps) parameter row"));
    }
    let gain = a_hat[(0, 1)];
    if gain.abs() < T::of(1e-6) {
        return Err(Error::SynthesisFailed(format!(
            "estimated input gain {gain} is too small to invert"
        )));
    }
    let n = a_hat.ncols();
    let mut theta = DVector::zeros(n);
    theta[0] = -a_hat[(0, 0)] / gain;
    for i in 2..n {
        theta[i - 1] = -a_hat[(0, i)] / gain;
    }
    theta[n - 1] = goal;
    Ok(theta)
}

pub fn synthesize_bump_matching<T: Scalar>(a_hat: &DMatrix<T>, phi: &FeatureMap<T>, goal: T) -> Result<SynthesisResult<T>> {
    let (centers, width) = bump_parts(phi)?;
    if a_hat.ncols() != centers.len() + 2 {
        return Err(config_err("parameter row does not match the number of bumps"));
    }
    let theta = bump_matching_theta(a_hat, goal)?;
    Ok(SynthesisResult {
        policy: ControlPolicy::BumpMatching { theta, centers, width },
        estimated_cost: f64::NAN,
        candidate_pool: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{FeatureKind, SystemModel};

    fn phi() -> FeatureMap<f64> {
        FeatureMap::new(FeatureKind::Bump1d {
            centers: vec![10.0, -14.0, -11.0, -8.0, -5.0, -2.0, 1.0, 4.0, 7.0, -17.0],
            width: 100.0,
        })
        .unwrap()
    }

    fn a_star() -> DMatrix<f64> {
        let mut a = DMatrix::from_element(1, 12, -3.0);
        a[(0, 0)] = 0.8;
        a[(0, 1)] = 1.0;
        a
    }

    #[test]
    fn true_model_holds_the_goal() {
        let res = synthesize_bump_matching(&a_star(), &phi(), 10.0).unwrap();
        let model = SystemModel::new(a_star(), phi(), 0.0, 10).unwrap();
        let mut x = DVector::from_vec(vec![10.0]);
        for h in 0..10 {
            let u = res.policy.act_vec(h, &x);
            x = model.step(&x, &u, &DVector::zeros(1)).unwrap();
            assert!((x[0] - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_bumps_give_zero_cancellation() {
        let mut a = DMatrix::zeros(1, 12);
        a[(0, 0)] = 0.8;
        a[(0, 1)] = 2.0;
        let theta = bump_matching_theta(&a, 10.0).unwrap();
        assert!(theta.rows(1, 10).iter().all(|&t| t == 0.0));
        assert_eq!(theta[0], -0.4);
        assert_eq!(theta[11], 10.0);
    }

    #[test]
    fn zero_gain_is_refused() {
        let mut a = a_star();
        a[(0, 1)] = 0.0;
        assert!(matches!(bump_matching_theta(&a, 10.0), Err(Error::SynthesisFailed(_))));
    }
}
