//! `x' = lambda x + a0 x^2 + b0 x u + c0 u^2 + a1 x^3 + b1 x^2 u + c1 x u^2 + e1 u^3`
//! under `u = k1 x` for `x >= 0` and `u = k2 x` for `x < 0`.
//!
//! With `D0(k) = a0 + b0 k + c0 k^2` and `D1(k) = a1 + b1 k + c1 k^2 + e1 k^3`
//! the closed loop on each half-line is `x (lambda + D0 x + D1 x^2)`.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use super::quadratic::sampled_max;
use super::synth::{fit_overshoot_m, OvershootFit, Synthesis, SynthesisOptions, M_INFLATION};
use crate::dynamics::{ControlRange, ControlSystem, KlFunction, Region};
use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::feedback::FeedbackLaw;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CubicParams {
    pub lambda: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub gamma0: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub gamma1: f64,
    pub eta1: f64,
}

impl CubicParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda, self.alpha0, self.beta0, self.gamma0, self.alpha1, self.beta1, self.gamma1, self.eta1];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid("cubic coefficients must be finite"));
        }
        if self.eta1 == 0.0 {
            return Err(invalid("eta1 must be nonzero"));
        }
        Ok(())
    }

    pub fn delta0(&self, k: f64) -> f64 {
        self.alpha0 + self.beta0 * k + self.gamma0 * k * k
    }

    pub fn delta1(&self, k: f64) -> f64 {
        self.alpha1 + self.beta1 * k + self.gamma1 * k * k + self.eta1 * k * k * k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSystem {
    p: CubicParams,
    range: ControlRange,
    truncated: bool,
}

impl CubicSystem {
    /// `nominal` may be unbounded; it is then truncated to `[-rho, rho]`.
    pub fn new(p: CubicParams, nominal: ControlRange, rho: Option<f64>) -> Result<Self> {
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

    pub fn params(&self) -> &CubicParams {
        &self.p
    }
}

impl ControlSystem for CubicSystem {
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
        dx[0] = x * (p.lambda + x * (p.alpha0 + p.alpha1 * x + p.beta1 * u) + u * (p.beta0 + p.gamma1 * u))
            + u * u * (p.gamma0 + p.eta1 * u);
    }

    fn jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.divergence(x, u))
    }

    /// `lambda + 2 a0 x + b0 u + 3 a1 x^2 + 2 b1 x u + c1 u^2`.
    #[inline]
    fn divergence(&self, x: &[f64], u: &[f64]) -> f64 {
        let (x, u, p) = (x[0], u[0], &self.p);
        p.lambda + 2.0 * p.alpha0 * x + p.beta0 * u + 3.0 * p.alpha1 * x * x + 2.0 * p.beta1 * x * u + p.gamma1 * u * u
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

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PwlEquilibrium {
    pub gain: f64,
    pub equilibrium: f64,
    /// Closed-loop derivative at the equilibrium.
    pub jacobian: f64,
    pub discriminant: f64,
}

/// Roots `(x_plus, x_minus) = (-D0 +- sqrt(disc)) / (2 D1)` computed without cancellation.
fn roots(p: &CubicParams, k: f64) -> Result<(f64, f64, f64)> {
    let d0 = p.delta0(k);
    let d1 = p.delta1(k);
    if d1 == 0.0 {
        return Err(invalid("D1 vanishes for this gain"));
    }
    let disc = d0 * d0 - 4.0 * p.lambda * d1;
    if !(disc > 0.0) {
        return Err(Error::Discriminant(disc));
    }
    let s = math::sqrt(disc);
    let q = if d0 >= 0.0 { -0.5 * (d0 + s) } else { 0.5 * (s - d0) };
    let (plus, minus) = if d0 >= 0.0 { (p.lambda / q, q / d1) } else { (q / d1, p.lambda / q) };
    Ok((plus, minus, disc))
}

/// Equilibria `e1 = x_minus(k1) > 0` and `e2 = x_plus(k2) < 0` with their
/// closed-loop derivatives `-e1 sqrt(disc1)` and `e2 sqrt(disc2)`.
///
/// Both gains must have the sign opposite to `eta1`.
pub fn pwl_equilibria(p: &CubicParams, k1: f64, k2: f64) -> Result<[PwlEquilibrium; 2]> {
    p.validate()?;
    let want = -p.eta1.signum();
    if k1.signum() != want || k2.signum() != want || k1 == 0.0 || k2 == 0.0 {
        return Err(invalid("gains must have the sign opposite to eta1"));
    }
    let (_, e1, disc1) = roots(p, k1)?;
    let (e2, _, disc2) = roots(p, k2)?;
    if !(e1 > 0.0) || !(e2 < 0.0) {
        return Err(invalid(format!("equilibria have the wrong sign: e1 = {e1}, e2 = {e2}")));
    }
    Ok([
        PwlEquilibrium { gain: k1, equilibrium: e1, jacobian: -e1 * math::sqrt(disc1), discriminant: disc1 },
        PwlEquilibrium { gain: k2, equilibrium: e2, jacobian: e2 * math::sqrt(disc2), discriminant: disc2 },
    ])
}

/// Equilibria for `k1 = k2 = k` over a list of gains, skipping invalid ones.
pub fn pwl_sweep(p: &CubicParams, ks: &[f64]) -> Vec<[PwlEquilibrium; 2]> {
    ks.iter().filter_map(|k| pwl_equilibria(p, *k, *k).ok()).collect()
}

/// Closed-loop derivative `lambda + 2 D0 x + 3 D1 x^2` at `x` for gain `k`.
fn closed_slope(p: &CubicParams, k: f64, x: f64) -> f64 {
    p.lambda + 2.0 * p.delta0(k) * x + 3.0 * p.delta1(k) * x * x
}

/// Doubles `|k|` (with `k1 = k2 = k`, sign opposite to `eta1`) until both
/// equilibria attract faster than `alpha` and lie close enough to the origin.
///
/// The overshoot fit uses grid points beyond each equilibrium; points between
/// the equilibria stay between them and need no fit.
pub fn synthesize_pwl<E: Executor + ?Sized>(
    p: &CubicParams,
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
    if !(alpha > 0.0) || !(eps > 0.0) {
        return Err(invalid("alpha and epsilon must be positive"));
    }
    if gamma.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: gamma.dim() });
    }
    let (lo, hi) = (gamma.lower()[0], gamma.upper()[0]);
    let grid = gamma.grid(&[opts.grid_points])?;
    let free = CubicSystem::new(*p, ControlRange::unbounded(1), None)?;
    let sign = -p.eta1.signum();
    let mut mag = opts.gain_start;
    for doubling in 0..=opts.max_doublings {
        let k = sign * mag;
        mag *= 2.0;
        let Ok([a, b]) = pwl_equilibria(p, k, k) else { continue };
        let (e1, e2) = (a.equilibrium, b.equilibrium);
        if !(a.jacobian < -alpha && b.jacobian < -alpha) {
            continue;
        }
        if !(e1 < eps / (2.0 * M_INFLATION) && -e2 < eps / (2.0 * M_INFLATION)) {
            continue;
        }
        let (l, h) = (lo.min(e2), hi.max(e1));
        let closed = sampled_max(l, h, |x| closed_slope(p, k, x));
        let replay = sampled_max(l, h, |x| {
            let u = k * x;
            p.lambda + 2.0 * p.alpha0 * x + p.beta0 * u + 3.0 * p.alpha1 * x * x + 2.0 * p.beta1 * x * u + p.gamma1 * u * u
        });
        let dt = opts.step_for(closed.max(replay));
        let fb = FeedbackLaw::piecewise_linear(k, k);
        let mut fits: Vec<OvershootFit> = Vec::new();
        let mut failed = false;
        for (e, side) in [(e1, grid.filtered(|x| x[0] > e1)), (e2, grid.filtered(|x| x[0] < e2))] {
            let Some(side) = side else { continue };
            match fit_overshoot_m(&free, &fb, &side, alpha, &[e], opts.fit_horizon, dt, exec) {
                Ok(f) => fits.push(f),
                Err(Error::NonAttraction { .. }) => failed = true,
                Err(other) => return Err(other),
            }
        }
        if failed {
            continue;
        }
        let m_hat = fits.iter().map(|f| f.m_hat).fold(M_INFLATION, f64::max);
        if !(e1 < eps / (2.0 * m_hat) && -e2 < eps / (2.0 * m_hat)) {
            continue;
        }
        // trapped points between the equilibria see at most |k| max(e1, -e2)
        let trapped = math::abs(k) * e1.max(-e2);
        let umin = fits.iter().map(|f| f.control_min).fold(-trapped, f64::min);
        let umax = fits.iter().map(|f| f.control_max).fold(trapped, f64::max);
        let (rho, control_range, sign_consistent) = Synthesis::range_from_controls(umin, umax);
        let fit = OvershootFit {
            m_hat,
            horizon: opts.fit_horizon,
            suspicious: fits.iter().any(|f| f.suspicious),
            control_min: umin,
            control_max: umax,
        };
        return Ok(Synthesis {
            feedback: fb.with_radius(rho),
            equilibria: alloc::vec![e1, e2],
            jacobians: alloc::vec![a.jacobian, b.jacobian],
            zeta: KlFunction::exponential(alpha, m_hat)?,
            rho,
            control_range,
            sign_consistent,
            gain: math::abs(k),
            doublings: doubling,
            dt,
            fit,
        });
    }
    Err(Error::SynthesisFailed(format!("no gain with |k| <= {} met the conditions", opts.gain_start * libm::pow(2.0, opts.max_doublings as f64))))
}
