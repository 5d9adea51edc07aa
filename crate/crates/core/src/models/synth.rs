use alloc::vec::Vec;

use crate::dynamics::{closed_loop_sweep, step_count, ControlRange, ControlSystem, Feedback, Grid, KlFunction, Region, Rk4, SweepEnd};
use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::feedback::FeedbackLaw;
use crate::linalg;
use crate::math;

/// Flag fitted overshoot constants above this value.
pub const SUSPICIOUS_M: f64 = 1e6;
/// Inflation applied to the fitted overshoot constant.
pub const M_INFLATION: f64 = 1.05;
/// Inflation applied to the largest visited feedback value.
pub const RHO_INFLATION: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthesisOptions {
    /// Grid points on the initial set used for fitting.
    pub grid_points: usize,
    /// Horizon of the overshoot fit.
    pub fit_horizon: f64,
    /// Fixed step; chosen from the closed-loop stiffness when `None`.
    pub dt: Option<f64>,
    /// Target value of `|f_x| dt` for the automatic step.
    pub stiffness_step: f64,
    pub dt_max: f64,
    pub gain_start: f64,
    pub max_doublings: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { grid_points: 101, fit_horizon: 10.0, dt: None, stiffness_step: 1.0, dt_max: 0.01, gain_start: 1.0, max_doublings: 60 }
    }
}

impl SynthesisOptions {
    /// `1 / n` with `n` large enough that `stiffness * dt <= stiffness_step`.
    pub(crate) fn step_for(&self, stiffness: f64) -> f64 {
        if let Some(dt) = self.dt {
            return dt;
        }
        let n = math::ceil((stiffness / self.stiffness_step).max(1.0 / self.dt_max));
        1.0 / n
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OvershootFit {
    /// `max e^{alpha t} |psi(t) - e| / |x0 - e|`, clamped to 1 and inflated.
    pub m_hat: f64,
    pub horizon: f64,
    pub suspicious: bool,
    /// Smallest and largest feedback component along the fitted trajectories.
    pub control_min: f64,
    pub control_max: f64,
}

/// Fits the overshoot constant of the closed loop around `equilibrium`.
///
/// Samples where `|psi - e|` has reached rounding level are skipped. Fails
/// with [`Error::NonAttraction`] when a trajectory ends farther from the
/// equilibrium than it started.
#[allow(clippy::too_many_arguments)]
pub fn fit_overshoot_m<S, F, E>(
    system: &S,
    feedback: &F,
    grid: &Grid,
    alpha: f64,
    equilibrium: &[f64],
    horizon: f64,
    dt: f64,
    exec: &E,
) -> Result<OvershootFit>
where
    S: ControlSystem + ?Sized,
    F: Feedback + ?Sized,
    E: Executor + ?Sized,
{
    let n = step_count("fit horizon", horizon, dt)?;
    let d = system.state_dim();
    let m = feedback.control_dim();
    let floor = 1e-12 * linalg::max_norm(equilibrium).max(1.0);
    let growth: Vec<f64> = (0..=n).map(|k| math::exp(alpha * dt * k as f64)).collect();
    let per_point = exec.map(grid.len(), |i| -> Result<(f64, f64, f64)> {
        let x0 = grid.point(i);
        let r0 = linalg::max_dist(x0, equilibrium);
        let mut ratio: f64 = 1.0;
        let mut umin = f64::INFINITY;
        let mut umax = f64::NEG_INFINITY;
        let mut last = r0;
        let mut u = alloc::vec![0.0; m];
        let mut ws = Rk4::new(d);
        let mut x = alloc::vec![0.0; d];
        let end = closed_loop_sweep(system, feedback, x0, n, dt, &mut ws, &mut x, None, |k, s| {
            let r = linalg::max_dist(s, equilibrium);
            if r > floor && r0 > 0.0 {
                ratio = ratio.max(growth[k] * r / r0);
            }
            feedback.eval(s, &mut u);
            for v in &u {
                umin = umin.min(*v);
                umax = umax.max(*v);
            }
            last = r;
            true
        })?;
        if let SweepEnd::Diverged(k) = end {
            return Err(Error::Divergence { time: dt * k as f64 });
        }
        if last > r0 {
            return Err(Error::NonAttraction { index: i });
        }
        Ok((ratio, umin, umax))
    });
    let mut ratio: f64 = 1.0;
    let mut control_min = f64::INFINITY;
    let mut control_max = f64::NEG_INFINITY;
    for r in per_point {
        let (q, lo, hi) = r?;
        ratio = ratio.max(q);
        control_min = control_min.min(lo);
        control_max = control_max.max(hi);
    }
    let m_hat = ratio.max(1.0) * M_INFLATION;
    Ok(OvershootFit { m_hat, horizon, suspicious: m_hat > SUSPICIOUS_M, control_min, control_max })
}

/// Outcome of a feedback synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub feedback: FeedbackLaw,
    /// Attracting equilibria of the closed loop.
    pub equilibria: Vec<f64>,
    /// Closed-loop derivative at each equilibrium.
    pub jacobians: Vec<f64>,
    /// Exponential envelope with the fitted overshoot constant.
    pub zeta: KlFunction,
    /// Truncation radius of the control range.
    pub rho: f64,
    pub control_range: ControlRange,
    /// Whether all feedback values had one sign.
    pub sign_consistent: bool,
    /// `|q|` or `|k|` of the accepted feedback.
    pub gain: f64,
    pub doublings: usize,
    pub dt: f64,
    pub fit: OvershootFit,
}

impl Synthesis {
    /// Scalar range `[0, rho]`, `[-rho, 0]` or `[-rho, rho]` covering `[lo, hi]`
    /// with `rho = 1.1 max(|lo|, |hi|)`; the flag reports a one-signed range.
    pub fn range_from_controls(lo: f64, hi: f64) -> (f64, ControlRange, bool) {
        let rho = RHO_INFLATION * math::abs(lo).max(math::abs(hi)).max(f64::MIN_POSITIVE);
        if lo >= 0.0 {
            (rho, ControlRange::new(alloc::vec![0.0], alloc::vec![rho]).expect("valid range"), true)
        } else if hi <= 0.0 {
            (rho, ControlRange::new(alloc::vec![-rho], alloc::vec![0.0]).expect("valid range"), true)
        } else {
            (rho, ControlRange::symmetric(1, rho), false)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VerifyReport {
    /// Per grid point, `min_t [zeta(d(x0), t) + eps - d(psi(t), L)]`.
    pub margins: Vec<f64>,
    /// Time attaining each minimum.
    pub argmin_times: Vec<f64>,
    pub min_margin: f64,
    pub pass: bool,
}

/// Checks `d(psi(t, x0), L) <= zeta(d(x0, L), t) + eps` on `[0, T]` for every grid point.
#[allow(clippy::too_many_arguments)]
pub fn verify_practical_stability<S, F, E>(
    system: &S,
    feedback: &F,
    zeta: &KlFunction,
    eps: f64,
    grid: &Grid,
    target: &Region,
    horizon: f64,
    dt: f64,
    exec: &E,
) -> Result<VerifyReport>
where
    S: ControlSystem + ?Sized,
    F: Feedback + ?Sized,
    E: Executor + ?Sized,
{
    if !(eps > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    let n = step_count("verification horizon", horizon, dt)?;
    let d = system.state_dim();
    let decay: Option<Vec<f64>> = match zeta {
        KlFunction::Exponential { alpha, m } => Some((0..=n).map(|k| m * math::exp(-alpha * dt * k as f64)).collect()),
        KlFunction::Tabulated(_) => None,
    };
    let per_point = exec.map(grid.len(), |i| -> Result<(f64, f64)> {
        let x0 = grid.point(i);
        let d0 = target.dist(x0);
        let mut best = f64::INFINITY;
        let mut when = 0.0;
        let mut ws = Rk4::new(d);
        let mut x = alloc::vec![0.0; d];
        let end = closed_loop_sweep(system, feedback, x0, n, dt, &mut ws, &mut x, None, |k, s| {
            let z = match &decay {
                Some(dec) => dec[k] * d0,
                None => zeta.eval(d0, dt * k as f64),
            };
            let margin = z + eps - target.dist(s);
            if margin < best {
                best = margin;
                when = dt * k as f64;
            }
            true
        })?;
        if let SweepEnd::Diverged(k) = end {
            return Err(Error::Divergence { time: dt * k as f64 });
        }
        Ok((best, when))
    });
    let mut margins = Vec::with_capacity(grid.len());
    let mut argmin_times = Vec::with_capacity(grid.len());
    for r in per_point {
        let (m, t) = r?;
        margins.push(m);
        argmin_times.push(t);
    }
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(VerifyReport { margins, argmin_times, min_margin, pass: min_margin >= 0.0 })
}
