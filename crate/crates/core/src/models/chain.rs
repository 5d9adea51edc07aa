//! `x1' = lambda x1 + a0 x1^2 + b0 x1 x2 + sum_{j>=2} c_j x_j^2` coupled to the
//! integrator chain `z' = A2 z + B2 u`, `z = (x2, ..., xd)`, under the linear
//! feedback `u = k1 x1 + K2 z`.

use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::dynamics::{closed_loop, ControlRange, ControlSystem, Feedback};
use crate::error::{invalid, Error, Result};
use crate::feedback::{pole_margin, FeedbackLaw};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChainParams {
    pub lambda: f64,
    pub alpha0: f64,
    pub beta0: f64,
    /// `c_2, ..., c_d`.
    pub gammas: Vec<f64>,
    pub k1: f64,
    /// Gains on `x2, ..., xd`.
    pub k2: Vec<f64>,
}

impl ChainParams {
    pub fn dim(&self) -> usize {
        self.gammas.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() {
            return Err(invalid("the chain needs at least one integrator"));
        }
        if self.k2.len() != self.gammas.len() {
            return Err(Error::DimensionMismatch { expected: self.gammas.len(), got: self.k2.len() });
        }
        let scalars = [self.lambda, self.alpha0, self.beta0, self.k1];
        if scalars.iter().chain(&self.gammas).chain(&self.k2).any(|v| !v.is_finite()) {
            return Err(invalid("chain coefficients must be finite"));
        }
        Ok(())
    }

    /// Shift matrix `A2` of the chain.
    pub fn a2(&self) -> DMatrix<f64> {
        let n = self.gammas.len();
        DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
    }

    /// Input column `B2 = e_last`.
    pub fn b2(&self) -> DMatrix<f64> {
        let n = self.gammas.len();
        DMatrix::from_fn(n, 1, |i, _| if i + 1 == n { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSystem {
    p: ChainParams,
    range: ControlRange,
}

impl ChainSystem {
    pub fn new(p: ChainParams, range: ControlRange) -> Result<Self> {
        p.validate()?;
        if range.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: range.dim() });
        }
        Ok(Self { p, range })
    }

    pub fn params(&self) -> &ChainParams {
        &self.p
    }
}

impl ControlSystem for ChainSystem {
    #[inline]
    fn state_dim(&self) -> usize {
        self.p.dim()
    }

    #[inline]
    fn control_dim(&self) -> usize {
        1
    }

    #[inline]
    fn field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let p = &self.p;
        let d = x.len();
        let mut s = x[0] * (p.lambda + p.alpha0 * x[0] + p.beta0 * x[1]);
        for (c, v) in p.gammas.iter().zip(&x[1..]) {
            s += c * v * v;
        }
        dx[0] = s;
        dx[1..d - 1].copy_from_slice(&x[2..]);
        dx[d - 1] = u[0];
    }

    fn jacobian(&self, x: &[f64], _u: &[f64]) -> DMatrix<f64> {
        let p = &self.p;
        let d = x.len();
        let mut j = DMatrix::zeros(d, d);
        j[(0, 0)] = p.lambda + 2.0 * p.alpha0 * x[0] + p.beta0 * x[1];
        for (i, c) in p.gammas.iter().enumerate() {
            j[(0, i + 1)] = 2.0 * c * x[i + 1];
        }
        j[(0, 1)] += p.beta0 * x[0];
        for i in 1..d - 1 {
            j[(i, i + 1)] = 1.0;
        }
        j
    }

    #[inline]
    fn divergence(&self, x: &[f64], _u: &[f64]) -> f64 {
        self.p.lambda + 2.0 * self.p.alpha0 * x[0] + self.p.beta0 * x[1]
    }

    fn control_range(&self) -> &ControlRange {
        &self.range
    }
}

/// Chain gains placing the closed-loop poles of `(A2, B2)` at `poles`.
pub fn gains_for_poles(poles: &[f64]) -> Vec<f64> {
    // coefficients of prod (s - p), constant term first
    let mut c = alloc::vec![1.0];
    for p in poles {
        let mut next = alloc::vec![0.0; c.len() + 1];
        for (i, v) in c.iter().enumerate() {
            next[i + 1] += v;
            next[i] -= p * v;
        }
        c = next;
    }
    c[..poles.len()].iter().map(|v| -v).collect()
}

/// The system with the feedback `u = k1 x1 + K2 z`.
///
/// Fails unless `A2 + B2 K2` is Hurwitz.
pub fn chain_system(p: ChainParams, range: ControlRange) -> Result<(ChainSystem, FeedbackLaw)> {
    p.validate()?;
    let k2 = DMatrix::from_row_slice(1, p.k2.len(), &p.k2);
    if !(pole_margin(&p.a2(), &p.b2(), &k2, 0.0)? > 0.0) {
        return Err(invalid("K2 does not stabilize the integrator chain"));
    }
    let mut k = Vec::with_capacity(p.dim());
    k.push(p.k1);
    k.extend_from_slice(&p.k2);
    let law = FeedbackLaw::linear(DMatrix::from_row_slice(1, k.len(), &k));
    Ok((ChainSystem::new(p, range)?, law))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Attractor {
    pub seed: Vec<f64>,
    pub state: Vec<f64>,
    /// `|f(x, k(x))|_inf` at the final state.
    pub residual: f64,
}

/// Long-horizon closed-loop limits from each seed.
pub fn chain_attractors<F: Feedback + ?Sized>(
    system: &ChainSystem,
    feedback: &F,
    seeds: &[Vec<f64>],
    horizon: f64,
    dt: f64,
) -> Result<Vec<Attractor>> {
    seeds
        .iter()
        .map(|s| {
            let traj = closed_loop(system, feedback, s, horizon, dt)?;
            let state = traj.final_state().to_vec();
            let mut u = [0.0];
            feedback.eval(&state, &mut u);
            let mut dx = alloc::vec![0.0; state.len()];
            system.field(&state, &u, &mut dx);
            Ok(Attractor { seed: s.clone(), state, residual: linalg::max_norm(&dx) })
        })
        .collect()
}

