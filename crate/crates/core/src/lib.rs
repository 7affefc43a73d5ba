//! Numerical laboratory for a partially hyperbolic deformation of a
//! hyperbolic automorphism of `T^4`.
//!
//! The crate builds the deformed map, certifies its dominated splitting by
//! sampled cone checks, estimates Lyapunov exponents and Gibbs u-states,
//! searches for hyperbolic periodic skeletons, and assembles skew products
//! over the toral base.

// `!(a < b)` is used deliberately so that NaN fails comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bump;
pub mod cone;
pub mod deformation;
pub mod ergodic;
pub mod error;
pub mod gibbs;
pub mod map;
pub mod numerics;
pub mod product;
pub mod rng;
pub mod scalar;
pub mod skeleton;
pub mod torus;
pub mod torus_linear;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TorusPointF64 = torus::TorusPoint<f64>;
pub type ToralAutomorphismF64 = torus_linear::ToralAutomorphism<f64>;
pub type SmoothBumpF64 = bump::SmoothBump<f64>;
pub type SmoothBumpF32 = bump::SmoothBump<f32>;
pub type DeformationParamsF64 = deformation::DeformationParams<f64>;
pub type DeformedSystemF64 = deformation::DeformedSystem<f64>;
pub type DeformedSystemF32 = deformation::DeformedSystem<f32>;
pub type ConeFieldF64 = cone::ConeField<f64>;
pub type PeriodicPointRecordF64 = skeleton::PeriodicPointRecord<f64>;
pub type ProductSystemF64 = product::ProductSystem<f64>;
