//! Control systems, control signals, envelopes and trajectory integration.

mod integrate;
mod kl;
mod region;
mod systems;

use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::math;

pub use integrate::{closed_loop, integrate, step_count, Rk4, SweepEnd, BLOWUP_LIMIT};
pub(crate) use integrate::{closed_loop_sweep, lane_sweep, open_loop_sweep};
pub use kl::{KlFunction, KlTable};
pub use region::{Grid, Region};
pub use systems::{FnSystem, LinearSystem};

/// A control-affine or general nonlinear system `x' = f(x, u)`.
pub trait ControlSystem: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Writes `f(x, u)` into `dx`.
    fn field(&self, x: &[f64], u: &[f64], dx: &mut [f64]);
    /// State Jacobian `f_x(x, u)`.
    fn jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64>;
    /// The compact control range used by simulations and bound scans.
    fn control_range(&self) -> &ControlRange;

    /// Slack subtracted from exponential lower bounds when the nominal control
    /// range is unbounded and [`control_range`](Self::control_range) is a truncation of it.
    fn truncation_slack(&self, _epsilon: f64) -> f64 {
        0.0
    }

    /// `(A, B)` when the system is linear.
    fn linear_part(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        None
    }

    fn divergence(&self, x: &[f64], u: &[f64]) -> f64 {
        self.jacobian(x, u).trace()
    }
}

/// Induced max-norm of the state Jacobian.
pub fn jacobian_norm<S: ControlSystem + ?Sized>(system: &S, x: &[f64], u: &[f64]) -> f64 {
    linalg::induced_max_norm(&system.jacobian(x, u))
}

/// A state feedback `u = k(x)`.
pub trait Feedback: Sync {
    fn control_dim(&self) -> usize;
    fn eval(&self, x: &[f64], u: &mut [f64]);
    /// Optional bound `|u|_inf <= radius` checked along closed loops.
    fn radius(&self) -> Option<f64> {
        None
    }
}

/// Box of admissible control values. Bounds may be infinite until truncated.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlRange {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ControlRange {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(invalid("control range needs lower <= upper"));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self { lower: alloc::vec![f64::NEG_INFINITY; dim], upper: alloc::vec![f64::INFINITY; dim] }
    }

    pub fn symmetric(dim: usize, rho: f64) -> Self {
        Self { lower: alloc::vec![-rho; dim], upper: alloc::vec![rho; dim] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    /// Intersection with the cube `[-rho, rho]^m`.
    pub fn truncated(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(invalid("truncation radius must be positive and finite"));
        }
        let lower: Vec<f64> = self.lower.iter().map(|l| l.max(-rho)).collect();
        let upper: Vec<f64> = self.upper.iter().map(|u| u.min(rho)).collect();
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(invalid("control range does not meet the truncation cube"));
        }
        Ok(Self { lower, upper })
    }

    #[inline]
    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, h))| {
            let tol = 1e-12 * (1.0 + math::abs(*v));
            *v >= l - tol && *v <= h + tol
        })
    }

    /// Tensor grid with `res` points per axis. Requires a bounded range.
    pub fn grid(&self, res: usize) -> Result<Vec<f64>> {
        if !self.is_bounded() {
            return Err(Error::UnboundedControlRange);
        }
        let counts = alloc::vec![res.max(1); self.dim()];
        Ok(linalg::box_grid(&self.lower, &self.upper, &counts))
    }
}

/// Piecewise-constant control signal with `len()` samples of width `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    step: f64,
    dim: usize,
    values: Vec<f64>,
}

impl ControlSignal {
    pub fn new(step: f64, dim: usize, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(invalid("control step must be positive"));
        }
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(invalid("control values do not match the control dimension"));
        }
        Ok(Self { step, dim, values })
    }

    pub fn constant(u: &[f64], step: f64, samples: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(u.len() * samples);
        for _ in 0..samples {
            values.extend_from_slice(u);
        }
        Self::new(step, u.len(), values)
    }

    #[inline]
    pub fn step(&self) -> f64 {
        self.step
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.len() as f64
    }

    #[inline]
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value in force at time `t` (the last sample beyond the horizon).
    pub fn value_at(&self, t: f64) -> &[f64] {
        let k = (t / self.step).max(0.0) as usize;
        self.at(k.min(self.len().saturating_sub(1)))
    }

    /// The first `samples` samples.
    pub fn truncated(&self, samples: usize) -> Self {
        let n = samples.min(self.len());
        Self { step: self.step, dim: self.dim, values: self.values[..n * self.dim].to_vec() }
    }
}

/// Sampled solution on the uniform grid `t_k = k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    dim: usize,
    states: Vec<f64>,
    control: ControlSignal,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of samples, including the initial state.
    #[inline]
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn initial_state(&self) -> &[f64] {
        self.state(0)
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn control(&self) -> &ControlSignal {
        &self.control
    }
}

/// Max-norm distance from `x` to the target set.
pub fn dist(x: &[f64], target: &Region) -> f64 {
    target.dist(x)
}
