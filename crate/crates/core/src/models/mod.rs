//! Worked example systems with closed-form equilibria and feedback synthesis.
//!
//! - [`quadratic`]: `x' = lambda x + a0 x^2 + b0 x u + c0 u^2` under `u = k x + q x^2`;
//! - [`cubic`]: the cubic extension under piecewise linear feedback;
//! - [`chain`]: a scalar quadratic state driven by an integrator chain.

pub mod chain;
pub mod cubic;
pub mod quadratic;
mod synth;

pub use chain::{chain_attractors, chain_system, gains_for_poles, Attractor, ChainParams, ChainSystem};
pub use cubic::{pwl_equilibria, pwl_sweep, synthesize_pwl, CubicParams, CubicSystem, PwlEquilibrium};
pub use quadratic::{
    asymptotic_equilibrium, cardano_equilibrium, quad_jacobian, quadratic_discriminant, quadratic_gain,
    quadratic_residual, quadratic_sweep, synthesize_quadratic, QuadraticParams, QuadraticSystem, SweepPoint,
};
pub use synth::{fit_overshoot_m, verify_practical_stability, OvershootFit, Synthesis, SynthesisOptions, VerifyReport};
