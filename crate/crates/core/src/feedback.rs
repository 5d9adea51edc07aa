//! Feedback laws, feedback entropy, and its comparison with spanning entropy.
//!
//! A seed set `E` of grid points is *feedback spanning* when every grid point
//! `x0` has a seed `y` with `|x0 - y| < eps` such that the open-loop replay of
//! the seed's feedback control keeps `|phi(t, x0, u_y) - phi(t, y, u_y)|` below
//! `zeta(|x0 - y| + eps, t)`.

use alloc::boxed::Box;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::dynamics::{
    closed_loop_sweep, open_loop_sweep, step_count, ControlSignal, ControlSystem, Feedback, Grid, KlFunction, Region,
    Rk4, SweepEnd,
};
use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::linalg;
use crate::math;
use crate::spanning::{
    build_candidates, entropy_rate, estimate_from_counts, resolve, sets_at, validate_horizons, CoverMethod, Envelope,
    EntropyEstimate, SpanningMode,
};

#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackKind {
    /// `u = K x`.
    Linear { k: DMatrix<f64> },
    /// Scalar `u = k x + q x^2`.
    Quadratic { k: f64, q: f64 },
    /// Scalar `u = k1 x` for `x >= 0`, `u = k2 x` for `x < 0`.
    PiecewiseLinear { k1: f64, k2: f64 },
}

/// A feedback law with an optional bound on `|u|_inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackLaw {
    pub kind: FeedbackKind,
    pub radius: Option<f64>,
}

impl FeedbackLaw {
    pub fn linear(k: DMatrix<f64>) -> Self {
        Self { kind: FeedbackKind::Linear { k }, radius: None }
    }

    pub fn quadratic(k: f64, q: f64) -> Self {
        Self { kind: FeedbackKind::Quadratic { k, q }, radius: None }
    }

    pub fn piecewise_linear(k1: f64, k2: f64) -> Self {
        Self { kind: FeedbackKind::PiecewiseLinear { k1, k2 }, radius: None }
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = Some(radius);
        self
    }

    /// Scalar evaluation for the one-dimensional laws.
    pub fn eval_scalar(&self, x: f64) -> f64 {
        let mut u = [0.0];
        self.eval(&[x], &mut u);
        u[0]
    }
}

impl Feedback for FeedbackLaw {
    fn control_dim(&self) -> usize {
        match &self.kind {
            FeedbackKind::Linear { k } => k.nrows(),
            _ => 1,
        }
    }

    fn eval(&self, x: &[f64], u: &mut [f64]) {
        match &self.kind {
            FeedbackKind::Linear { k } => {
                for (i, out) in u.iter_mut().enumerate() {
                    *out = x.iter().enumerate().map(|(j, v)| k[(i, j)] * v).sum();
                }
            }
            FeedbackKind::Quadratic { k, q } => u[0] = k * x[0] + q * x[0] * x[0],
            FeedbackKind::PiecewiseLinear { k1, k2 } => u[0] = if x[0] >= 0.0 { k1 * x[0] } else { k2 * x[0] },
        }
    }

    fn radius(&self) -> Option<f64> {
        self.radius
    }
}

type FeedbackFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A feedback given by a closure.
pub struct FnFeedback {
    m: usize,
    f: FeedbackFn,
}

impl FnFeedback {
    pub fn new(m: usize, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self { m, f: Box::new(f) }
    }
}

impl Feedback for FnFeedback {
    fn control_dim(&self) -> usize {
        self.m
    }

    fn eval(&self, x: &[f64], u: &mut [f64]) {
        (self.f)(x, u)
    }
}

/// Which constraint decided the cover at a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BindingConstraint {
    /// Every pair inside the `eps`-ball also met the envelope.
    Ball,
    /// Some pair inside the ball violated the envelope.
    Envelope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSpanning {
    pub horizon: f64,
    pub count: usize,
    /// Seed grid indices.
    pub seeds: Vec<usize>,
    pub method: CoverMethod,
    pub binding: BindingConstraint,
    /// Ordered pairs `(x0, y)` with `|x0 - y| < eps`.
    pub ball_pairs: usize,
    /// Of those, the pairs violating the envelope.
    pub envelope_excluded: usize,
}

struct SeedSurvival {
    lists: Vec<Vec<(u32, u32)>>,
    ball_pairs: usize,
}

#[allow(clippy::too_many_arguments)]
fn seed_survival<S, F, E>(
    system: &S,
    feedback: &F,
    grid: &Grid,
    zeta: &KlFunction,
    eps: f64,
    n_steps: usize,
    dt: f64,
    exec: &E,
) -> Result<SeedSurvival>
where
    S: ControlSystem + ?Sized,
    F: Feedback + ?Sized,
    E: Executor + ?Sized,
{
    if !(eps > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    let d = system.state_dim();
    if grid.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: grid.dim() });
    }
    let m = feedback.control_dim();
    let env = Envelope::new(zeta, eps, 0.0, dt, n_steps);
    let per_seed = exec.map(grid.len(), |j| -> Result<(Vec<(u32, u32)>, usize)> {
        let y = grid.point(j);
        let mut ws = Rk4::new(d);
        let mut x = alloc::vec![0.0; d];
        let mut psi = Vec::with_capacity((n_steps + 1) * d);
        let mut rec = Vec::with_capacity(n_steps * m);
        let end = closed_loop_sweep(system, feedback, y, n_steps, dt, &mut ws, &mut x, Some(&mut rec), |_, s| {
            psi.extend_from_slice(s);
            true
        })?;
        if let SweepEnd::Diverged(k) = end {
            return Err(Error::Divergence { time: dt * k as f64 });
        }
        let u = ControlSignal::new(dt, m, rec)?;
        let mut list = Vec::new();
        let mut pairs = 0;
        for (i, x0) in grid.iter().enumerate() {
            let d0 = linalg::max_dist(x0, y);
            if !(d0 < eps) {
                continue;
            }
            pairs += 1;
            let end = open_loop_sweep(system, x0, &u, 1, n_steps, dt, &mut ws, &mut x, |k, s| {
                env.holds(linalg::max_dist(s, &psi[k * d..(k + 1) * d]), d0, k)
            });
            let alive = match end {
                SweepEnd::Completed => n_steps as u32 + 1,
                SweepEnd::Stopped(k) | SweepEnd::Diverged(k) => k as u32,
            };
            list.push((i as u32, alive));
        }
        Ok((list, pairs))
    });
    let mut lists = Vec::with_capacity(grid.len());
    let mut ball_pairs = 0;
    for r in per_seed {
        let (l, p) = r?;
        ball_pairs += p;
        lists.push(l);
    }
    Ok(SeedSurvival { lists, ball_pairs })
}

fn resolve_feedback(surv: &SeedSurvival, horizon: f64, n: usize, n_points: usize) -> Result<FeedbackSpanning> {
    let sets = sets_at(&surv.lists, n);
    let r = resolve(horizon, n_points, &sets)?;
    let kept: usize = sets.iter().map(Vec::len).sum();
    let envelope_excluded = surv.ball_pairs - kept;
    let binding = if envelope_excluded > 0 { BindingConstraint::Envelope } else { BindingConstraint::Ball };
    Ok(FeedbackSpanning {
        horizon,
        count: r.count,
        seeds: r.chosen,
        method: r.method,
        binding,
        ball_pairs: surv.ball_pairs,
        envelope_excluded,
    })
}

/// Smallest feedback-spanning seed set found on the grid at horizon `tau`.
#[allow(clippy::too_many_arguments)]
pub fn feedback_spanning_count<S, F, E>(
    system: &S,
    feedback: &F,
    grid: &Grid,
    zeta: &KlFunction,
    eps: f64,
    tau: f64,
    dt: f64,
    exec: &E,
) -> Result<FeedbackSpanning>
where
    S: ControlSystem + ?Sized,
    F: Feedback + ?Sized,
    E: Executor + ?Sized,
{
    let n = step_count("tau", tau, dt)?;
    let surv = seed_survival(system, feedback, grid, zeta, eps, n, dt, exec)?;
    let r = resolve_feedback(&surv, tau, n, grid.len())?;
    if r.count == grid.len() && grid.len() > 1 {
        return Err(Error::GridTooCoarse { horizon: tau });
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeedbackEntropy {
    pub estimate: EntropyEstimate,
    pub binding: Vec<BindingConstraint>,
    pub envelope_excluded: Vec<usize>,
    pub ball_pairs: usize,
}

/// Feedback spanning counts at each horizon and the fitted rate.
///
/// Fails with [`Error::GridTooCoarse`] when every seed covers only itself at
/// the largest horizon.
#[allow(clippy::too_many_arguments)]
pub fn feedback_entropy_rate<S, F, E>(
    system: &S,
    feedback: &F,
    grid: &Grid,
    zeta: &KlFunction,
    eps: f64,
    horizons: &[f64],
    dt: f64,
    exec: &E,
) -> Result<FeedbackEntropy>
where
    S: ControlSystem + ?Sized,
    F: Feedback + ?Sized,
    E: Executor + ?Sized,
{
    let steps = validate_horizons(horizons, dt)?;
    let n_max = steps[steps.len() - 1];
    let surv = seed_survival(system, feedback, grid, zeta, eps, n_max, dt, exec)?;
    let mut counts = Vec::new();
    let mut methods = Vec::new();
    let mut binding = Vec::new();
    let mut excluded = Vec::new();
    for (tau, n) in horizons.iter().zip(&steps) {
        let r = resolve_feedback(&surv, *tau, *n, grid.len())?;
        counts.push(r.count);
        methods.push(r.method);
        binding.push(r.binding);
        excluded.push(r.envelope_excluded);
    }
    if counts[counts.len() - 1] == grid.len() && grid.len() > 1 {
        return Err(Error::GridTooCoarse { horizon: horizons[horizons.len() - 1] });
    }
    Ok(FeedbackEntropy {
        estimate: estimate_from_counts(horizons, counts, methods)?,
        binding,
        envelope_excluded: excluded,
        ball_pairs: surv.ball_pairs,
    })
}

/// Allowed excess of the spanning rate over the feedback rate.
pub const COMPARISON_RATIO: f64 = 1.10;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComparisonReport {
    /// Strict spanning entropy with doubled envelope and tolerance.
    pub spanning: EntropyEstimate,
    pub feedback: FeedbackEntropy,
    pub ratio_limit: f64,
    pub pass: bool,
}

/// Checks that the strict spanning rate with `(2 eps, 2 zeta)` stays within
/// [`COMPARISON_RATIO`] times the feedback rate with `(eps, zeta)`.
///
/// The closed loop must first satisfy `d(psi(t, x0), L) <= zeta(d(x0, L) + eps, t)`
/// on the grid; otherwise the offending points are returned as an error.
#[allow(clippy::too_many_arguments)]
pub fn proposition42_check<S, E>(
    system: &S,
    feedback: &FeedbackLaw,
    grid: &Grid,
    zeta: &KlFunction,
    eps: f64,
    target: &Region,
    horizons: &[f64],
    dt: f64,
    exec: &E,
) -> Result<ComparisonReport>
where
    S: ControlSystem + ?Sized,
    E: Executor + ?Sized,
{
    let steps = validate_horizons(horizons, dt)?;
    let n_max = steps[steps.len() - 1];
    let d = system.state_dim();
    let env = Envelope::new(zeta, eps, 0.0, dt, n_max);
    let checks = exec.map(grid.len(), |i| -> Result<Option<(usize, f64)>> {
        let x0 = grid.point(i);
        let d0 = target.dist(x0);
        let mut ws = Rk4::new(d);
        let mut x = alloc::vec![0.0; d];
        let end = closed_loop_sweep(system, feedback, x0, n_max, dt, &mut ws, &mut x, None, |k, s| {
            env.holds(target.dist(s), d0, k)
        })?;
        Ok(match end {
            SweepEnd::Completed => None,
            SweepEnd::Stopped(k) | SweepEnd::Diverged(k) => Some((i, dt * k as f64)),
        })
    });
    let mut violations = Vec::new();
    for c in checks {
        if let Some(v) = c? {
            violations.push(v);
        }
    }
    if !violations.is_empty() {
        return Err(Error::Precondition { violations });
    }
    let tau_max = horizons[horizons.len() - 1];
    let fbs: [&dyn Feedback; 1] = [feedback];
    let candidates = build_candidates(system, &fbs, grid, tau_max, dt, 0, exec)?;
    let doubled = zeta.scaled(2.0);
    let spanning = entropy_rate(system, &doubled, &SpanningMode::strict(2.0 * eps), target, grid, &candidates, horizons, dt, exec)?;
    let feedback = feedback_entropy_rate(system, feedback, grid, zeta, eps, horizons, dt, exec)?;
    let pass = spanning.rate <= COMPARISON_RATIO * feedback.estimate.rate + 1e-9;
    Ok(ComparisonReport { spanning, feedback, ratio_limit: COMPARISON_RATIO, pass })
}

/// Number of max-norm balls of radius `radius` in the product cover of a box.
pub fn ball_cover_count(region: &Region, radius: f64) -> Result<u64> {
    if !(radius > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    Ok(region
        .lower()
        .iter()
        .zip(region.upper())
        .map(|(l, u)| (math::ceil((u - l) / (2.0 * radius)) as u64).max(1))
        .product())
}

/// `-alpha - max Re eig(A + B K)`; positive when the closed loop decays faster than `alpha`.
pub fn pole_margin(a: &DMatrix<f64>, b: &DMatrix<f64>, k: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    if b.nrows() != a.nrows() || k.nrows() != b.ncols() || k.ncols() != a.ncols() {
        return Err(invalid("A, B and K have incompatible shapes"));
    }
    let closed = a + b * k;
    let top = linalg::eigenvalues(&closed)?.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(-alpha - top)
}
