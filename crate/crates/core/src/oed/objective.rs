use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Smooth convex design criterion over (per-episode) covariance matrices.
#[derive(Clone, Debug, PartialEq)]
pub enum DesignObjective<T: Scalar> {
    /// `Φ(Γ) = tr(M (Γ + Γ₀)⁻¹)`.
    WeightedAOpt { m: DMatrix<T>, gamma0: DMatrix<T> },
    /// `Φ(Γ) = tr((Γ + λI)⁻¹)`.
    RegTraceInverse { lam: T },
}

impl<T: Scalar> DesignObjective<T> {
    /// Weighted A-optimal design. A singular `Γ₀` gets a small ridge so the
    /// objective stays finite at `Γ = 0`.
    pub fn weighted_a_opt(m: DMatrix<T>, gamma0: DMatrix<T>) -> Self {
        let mut gamma0 = linalg::symmetrize(&gamma0);
        let d = gamma0.nrows();
        let scale = (gamma0.trace() / T::of_count(d.max(1))).max(T::one());
        let floor = T::of(1e-9) * scale;
        if linalg::min_eigenvalue(&gamma0) < floor {
            for i in 0..d {
                gamma0[(i, i)] += floor;
            }
        }
        DesignObjective::WeightedAOpt {
            m: linalg::symmetrize(&m),
            gamma0,
        }
    }

    pub fn reg_trace_inverse(lam: T) -> Self {
        DesignObjective::RegTraceInverse { lam }
    }

    fn shifted_inverse(&self, gamma: &DMatrix<T>) -> Result<DMatrix<T>> {
        let mut g = linalg::symmetrize(gamma);
        match self {
            DesignObjective::WeightedAOpt { gamma0, .. } => g += gamma0,
            DesignObjective::RegTraceInverse { lam } => {
                for i in 0..g.nrows() {
                    g[(i, i)] += *lam;
                }
            }
        }
        linalg::spd_inverse(&g).ok_or_else(|| Error::DesignFailed("regularized covariance is not positive definite".into()))
    }

    pub fn value(&self, gamma: &DMatrix<T>) -> Result<T> {
        let inv = self.shifted_inverse(gamma)?;
        Ok(match self {
            DesignObjective::WeightedAOpt { m, .. } => linalg::trace_product(m, &inv),
            DesignObjective::RegTraceInverse { .. } => inv.trace(),
        })
    }

    /// Symmetric gradient `−(Γ+Γ₀)⁻¹ M (Γ+Γ₀)⁻¹` (with `M = I` for the
    /// trace-inverse form).
    pub fn grad(&self, gamma: &DMatrix<T>) -> Result<DMatrix<T>> {
        let inv = self.shifted_inverse(gamma)?;
        let g = match self {
            DesignObjective::WeightedAOpt { m, .. } => -(&inv * m * &inv),
            DesignObjective::RegTraceInverse { .. } => -(&inv * &inv),
        };
        let g = linalg::symmetrize(&g);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::DesignFailed("objective gradient is not finite".into()));
        }
        Ok(g)
    }

    pub fn weight(&self) -> Option<&DMatrix<T>> {
        match self {
            DesignObjective::WeightedAOpt { m, .. } => Some(m),
            DesignObjective::RegTraceInverse { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_seeded;
    use rand::Rng;

    fn random_pd(rng: &mut impl Rng, d: usize, shift: f64) -> DMatrix<f64> {
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(d, d) * shift
    }

    #[test]
    fn trace_inverse_value() {
        let obj = DesignObjective::reg_trace_inverse(1.0);
        let v = obj.value(&DMatrix::<f64>::identity(3, 3)).unwrap();
        assert!((v - 1.5).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_directional_difference() {
        let mut rng = rng_seeded(11);
        let m = random_pd(&mut rng, 4, 0.0);
        let obj = DesignObjective::weighted_a_opt(m, random_pd(&mut rng, 4, 0.1));
        let g = random_pd(&mut rng, 4, 0.5);
        let dir = random_pd(&mut rng, 4, 0.0);
        let eps = 1e-6;
        let fd = (obj.value(&(&g + &dir * eps)).unwrap() - obj.value(&(&g - &dir * eps)).unwrap()) / (2.0 * eps);
        let an = linalg::frob_inner(&obj.grad(&g).unwrap(), &dir);
        assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0));
    }

    #[test]
    fn midpoint_convexity() {
        let mut rng = rng_seeded(5);
        let obj = DesignObjective::weighted_a_opt(random_pd(&mut rng, 3, 0.0), DMatrix::zeros(3, 3));
        for _ in 0..20 {
            let a = random_pd(&mut rng, 3, 0.05);
            let b = random_pd(&mut rng, 3, 0.05);
            let mid = obj.value(&((&a + &b) * 0.5)).unwrap();
            let avg = 0.5 * (obj.value(&a).unwrap() + obj.value(&b).unwrap());
            assert!(mid <= avg + 1e-9);
        }
    }

    #[test]
    fn singular_regularizer_is_ridged() {
        let obj = DesignObjective::weighted_a_opt(DMatrix::<f64>::identity(2, 2), DMatrix::zeros(2, 2));
        assert!(obj.value(&DMatrix::zeros(2, 2)).unwrap().is_finite());
    }
}
