//! `x' = lambda x + a0 x^2 + b0 x u + c0 u^2` under `u = k x + q x^2`.
//!
//! With `k = -b0 / (2 c0)` the closed loop is
//! `x' = lambda x + c x^2 + c0 q^2 x^4`, `c = (4 a0 c0 - b0^2) / (4 c0)`,
//! whose nonzero equilibrium solves the depressed cubic
//! `x^3 + 3 a x + b = 0` with `a = (4 a0 c0 - b0^2) / (12 c0^2 q^2)` and
//! `b = lambda / (c0 q^2)`.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use super::synth::{fit_overshoot_m, Synthesis, SynthesisOptions, M_INFLATION};
use crate::dynamics::{ControlRange, ControlSystem, KlFunction, Region};
use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::feedback::FeedbackLaw;
use crate::linalg;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadraticParams {
    pub lambda: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub gamma0: f64,
}

impl QuadraticParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda, self.alpha0, self.beta0, self.gamma0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid("quadratic coefficients must be finite"));
        }
        if self.gamma0 == 0.0 {
            return Err(invalid("gamma0 must be nonzero"));
        }
        Ok(())
    }

    /// Coefficient of `x^2` in the closed loop with the optimal linear gain.
    fn closed_square(&self) -> f64 {
        (4.0 * self.alpha0 * self.gamma0 - self.beta0 * self.beta0) / (4.0 * self.gamma0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSystem {
    p: QuadraticParams,
    range: ControlRange,
    truncated: bool,
}

impl QuadraticSystem {
    /// `nominal` may be unbounded; it is then truncated to `[-rho, rho]`.
    pub fn new(p: QuadraticParams, nominal: ControlRange, rho: Option<f64>) -> Result<Self> {
        p.validate()?;
        if nominal.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: nominal.dim() });
        }
        let truncated = !nominal.is_bounded();
        let range = match (truncated, rho) {
            (false, _) => nominal,
            (true, Some(r)) => nominal.truncated(r)?,
            (true, None) => ControlRange::unbounded(1),
        };
        Ok(Self { p, range, truncated })
    }

    pub fn params(&self) -> &QuadraticParams {
        &self.p
    }
}

impl ControlSystem for QuadraticSystem {
    #[inline]
    fn state_dim(&self) -> usize {
        1
    }

    #[inline]
    fn control_dim(&self) -> usize {
        1
    }

    #[inline]
    fn field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let (x, u, p) = (x[0], u[0], &self.p);
        dx[0] = x * (p.lambda + p.alpha0 * x + p.beta0 * u) + p.gamma0 * u * u;
    }

    fn jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.divergence(x, u))
    }

    #[inline]
    fn divergence(&self, x: &[f64], u: &[f64]) -> f64 {
        self.p.lambda + 2.0 * self.p.alpha0 * x[0] + self.p.beta0 * u[0]
    }

    fn control_range(&self) -> &ControlRange {
        &self.range
    }

    fn truncation_slack(&self, epsilon: f64) -> f64 {
        if self.truncated {
            math::abs(self.p.alpha0) * epsilon
        } else {
            0.0
        }
    }
}

/// The linear gain `k = -b0 / (2 c0)`.
pub fn quadratic_gain(p: &QuadraticParams) -> f64 {
    -p.beta0 / (2.0 * p.gamma0)
}

fn depressed(p: &QuadraticParams, q: f64) -> (f64, f64) {
    let g = p.gamma0;
    let a = (4.0 * p.alpha0 * g - p.beta0 * p.beta0) / (12.0 * g * g * q * q);
    let b = p.lambda / (g * q * q);
    (a, b)
}

/// `D = 4 a^3 + b^2`; a single real nonzero equilibrium exists when positive.
pub fn quadratic_discriminant(p: &QuadraticParams, q: f64) -> f64 {
    let (a, b) = depressed(p, q);
    4.0 * a * a * a + b * b
}

/// The real root `e(q)` of the depressed cubic by Cardano's formula.
///
/// Evaluated as `c - a / c` with `c` the cube root of the larger-magnitude
/// branch, which avoids cancellation when `a^3` is small against `b^2`.
pub fn cardano_equilibrium(p: &QuadraticParams, q: f64) -> Result<f64> {
    p.validate()?;
    if !(q != 0.0) || !q.is_finite() {
        return Err(invalid("q must be finite and nonzero"));
    }
    let (a, b) = depressed(p, q);
    let disc = 4.0 * a * a * a + b * b;
    if !(disc > 0.0) {
        return Err(Error::Discriminant(disc));
    }
    let half = 0.5 * math::sqrt(disc);
    let s1 = if b >= 0.0 { -0.5 * b - half } else { -0.5 * b + half };
    let c = math::cbrt(s1);
    Ok(c - a / c)
}

/// Closed-loop derivative `lambda + (4 a0 c0 - b0^2) / (2 c0) x + 4 c0 q^2 x^3`.
pub fn quad_jacobian(p: &QuadraticParams, q: f64, x: f64) -> f64 {
    p.lambda + 2.0 * p.closed_square() * x + 4.0 * p.gamma0 * q * q * x * x * x
}

/// Residual of the equilibrium equation
/// `lambda + (a0 + b0 k + c0 k^2) x + q (b0 + 2 c0 k) x^2 + c0 q^2 x^3`.
pub fn quadratic_residual(p: &QuadraticParams, q: f64, x: f64) -> f64 {
    let k = quadratic_gain(p);
    p.lambda
        + (p.alpha0 + p.beta0 * k + p.gamma0 * k * k) * x
        + q * (p.beta0 + 2.0 * p.gamma0 * k) * x * x
        + p.gamma0 * q * q * x * x * x
}

/// Leading-order behaviour `-|q|^{-2/3} (lambda / c0)^{1/3}` for large `|q|`.
pub fn asymptotic_equilibrium(p: &QuadraticParams, q: f64) -> f64 {
    -math::cbrt(p.lambda / p.gamma0) / math::cbrt(q * q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepPoint {
    pub q: f64,
    pub equilibrium: f64,
    pub jacobian: f64,
}

/// `(q, e(q), J(e(q)))` for each `q`, skipping those with `D <= 0`.
pub fn quadratic_sweep(p: &QuadraticParams, qs: &[f64]) -> Result<Vec<SweepPoint>> {
    p.validate()?;
    Ok(qs
        .iter()
        .filter_map(|q| cardano_equilibrium(p, *q).ok().map(|e| SweepPoint { q: *q, equilibrium: e, jacobian: quad_jacobian(p, *q, e) }))
        .collect())
}

fn scalar_interval(gamma: &Region) -> Result<(f64, f64)> {
    if gamma.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: gamma.dim() });
    }
    Ok((gamma.lower()[0], gamma.upper()[0]))
}

/// Largest `|g|` over 257 samples of `[lo, hi]`.
pub(crate) fn sampled_max(lo: f64, hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    linalg::linspace(lo, hi, 257).into_iter().map(|x| math::abs(g(x))).fold(0.0, f64::max)
}

/// Doubles `|q|` until the equilibrium is attracting faster than `alpha` and
/// close enough to the origin for `eps`-practical stability, then fits the
/// overshoot constant and the control bound.
///
/// Requires `lambda > 0`, `0 < alpha < 3 lambda`, and `G` on the side of the
/// origin fixed by the sign of `gamma0` (`G > 0` for `gamma0 < 0`).
pub fn synthesize_quadratic<E: Executor + ?Sized>(
    p: &QuadraticParams,
    eps: f64,
    alpha: f64,
    gamma: &Region,
    opts: &SynthesisOptions,
    exec: &E,
) -> Result<Synthesis> {
    p.validate()?;
    if !(p.lambda > 0.0) {
        return Err(invalid("lambda must be positive"));
    }
    if !(alpha > 0.0 && alpha < 3.0 * p.lambda) {
        return Err(invalid(format!("alpha must lie in (0, 3 lambda) = (0, {})", 3.0 * p.lambda)));
    }
    if !(eps > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    let (lo, hi) = scalar_interval(gamma)?;
    let positive = p.gamma0 < 0.0;
    if positive && !(lo > 0.0) {
        return Err(invalid("gamma0 < 0 needs an initial set inside (0, inf)"));
    }
    if !positive && !(hi < 0.0) {
        return Err(invalid("gamma0 > 0 needs an initial set inside (-inf, 0)"));
    }
    let grid = gamma.grid(&[opts.grid_points])?;
    let k = quadratic_gain(p);
    let sign = if positive { 1.0 } else { -1.0 };
    let free = QuadraticSystem::new(*p, ControlRange::unbounded(1), None)?;
    let mut mag = opts.gain_start;
    for doubling in 0..=opts.max_doublings {
        let q = sign * mag;
        mag *= 2.0;
        let Ok(e) = cardano_equilibrium(p, q) else { continue };
        let j = quad_jacobian(p, q, e);
        let far_side = if positive { lo > e } else { hi < e };
        if !(j < -alpha) || !(math::abs(e) < eps / (2.0 * M_INFLATION)) || !far_side {
            continue;
        }
        let (a, b) = (lo.min(e), hi.max(e));
        let closed = sampled_max(a, b, |x| quad_jacobian(p, q, x));
        let replay = sampled_max(a, b, |x| p.lambda + 2.0 * p.alpha0 * x + p.beta0 * (k * x + q * x * x));
        let dt = opts.step_for(closed.max(replay));
        let fb = FeedbackLaw::quadratic(k, q);
        let fit = match fit_overshoot_m(&free, &fb, &grid, alpha, &[e], opts.fit_horizon, dt, exec) {
            Ok(f) => f,
            Err(Error::NonAttraction { .. }) => continue,
            Err(other) => return Err(other),
        };
        if !(math::abs(e) < eps / (2.0 * fit.m_hat)) {
            continue;
        }
        let (rho, control_range, sign_consistent) = Synthesis::range_from_controls(fit.control_min, fit.control_max);
        return Ok(Synthesis {
            feedback: fb.with_radius(rho),
            equilibria: alloc::vec![e],
            jacobians: alloc::vec![j],
            zeta: KlFunction::exponential(alpha, fit.m_hat)?,
            rho,
            control_range,
            sign_consistent,
            gain: math::abs(q),
            doublings: doubling,
            dt,
            fit,
        });
    }
    Err(Error::SynthesisFailed(format!("no q with |q| <= {} met the conditions", opts.gain_start * libm::pow(2.0, opts.max_doublings as f64))))
}

