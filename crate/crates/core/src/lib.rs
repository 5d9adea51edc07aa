//! Numerics for practical stabilization entropy of nonlinear control systems.
//!
//! The crate is `no_std` (with `alloc`). It covers
//! - [`dynamics`]: systems, control signals, fixed-step RK4, closed loops;
//! - [`spanning`]: candidate pools, set cover, empirical entropy rates;
//! - [`bounds`]: Lipschitz/divergence/spectral bounds on the entropy;
//! - [`feedback`]: feedback entropy and its comparison with spanning entropy;
//! - [`models`]: the scalar quadratic/cubic systems and the chain system,
//!   with closed-form equilibria and feedback synthesis.
//!
//! All distances use the max-norm, and matrix norms are the induced max-norm
//! (largest absolute row sum).

#![no_std]
// NaN has to fail range checks, so `!(x > 0.0)` is intended
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod feedback;
pub mod linalg;
mod math;
pub mod models;
pub mod spanning;

pub use error::{Error, Result};
