//! Task-driven exploration for learning controllers of unknown systems
//! `x_{h+1} = A·φ(x_h, u_h) + w_h`.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the benchmark harness.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod hessian;
pub mod linalg;
pub mod live;
pub mod oed;
pub mod scenarios;
pub mod scalar;
pub mod seed;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SystemModelF64 = dynamics::SystemModel<f64>;
pub type FeatureMapF64 = dynamics::FeatureMap<f64>;
pub type TrajectoryF64 = dynamics::Trajectory<f64>;
pub type CovariatesF64 = dynamics::Covariates<f64>;
pub type ControlPolicyF64 = control::ControlPolicy<f64>;
pub type CostFunctionF64 = control::CostFunction<f64>;
