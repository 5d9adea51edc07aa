//! Spanning conditions, candidate control pools and empirical entropy rates.
//!
//! A control `u` *spans* `x0` up to time `tau` when
//! `d(phi(t, x0, u), L) <= zeta(d(x0, L) + eps, t)` (strict) or the same
//! plus `eps` (practical) at every sample. The count `r(tau)` is the size of a
//! smallest candidate subset spanning every grid point.

mod cover;

use alloc::vec::Vec;

pub use cover::{exact_cover, greedy_cover, minimal_cover, Cover, CoverMethod, EXACT_LIMIT};

use crate::dynamics::{
    closed_loop_sweep, lane_sweep, step_count, ControlSignal, ControlSystem, Feedback, Grid, KlFunction, Region,
    Rk4, SweepEnd, Trajectory,
};
use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::math;

/// Relative slack on envelope comparisons, absorbing rounding at equality.
pub const ENVELOPE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SpanningKind {
    Strict,
    Practical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpanningMode {
    pub kind: SpanningKind,
    pub epsilon: f64,
    /// Multiplies `epsilon` to absorb sampling error; 1 by default.
    pub sampling_factor: f64,
}

impl SpanningMode {
    pub fn strict(epsilon: f64) -> Self {
        Self { kind: SpanningKind::Strict, epsilon, sampling_factor: 1.0 }
    }

    pub fn practical(epsilon: f64) -> Self {
        Self { kind: SpanningKind::Practical, epsilon, sampling_factor: 1.0 }
    }

    pub fn with_sampling_factor(mut self, factor: f64) -> Self {
        self.sampling_factor = factor;
        self
    }

    fn tolerance(&self) -> f64 {
        self.epsilon * self.sampling_factor
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.sampling_factor >= 1.0) {
            return Err(invalid("epsilon must be positive and the sampling factor at least 1"));
        }
        Ok(())
    }
}

/// Envelope values on the sample grid, with the exponential case precomputed.
pub(crate) struct Envelope<'a> {
    zeta: &'a KlFunction,
    tol: f64,
    floor: f64,
    dt: f64,
    decay: Vec<f64>,
}

impl<'a> Envelope<'a> {
    /// `zeta(d0 + tol, t_k) + floor` for `k = 0..=n_steps`.
    pub(crate) fn new(zeta: &'a KlFunction, tol: f64, floor: f64, dt: f64, n_steps: usize) -> Self {
        let decay = match zeta {
            KlFunction::Exponential { alpha, m } => {
                (0..=n_steps).map(|k| m * math::exp(-alpha * dt * k as f64)).collect()
            }
            KlFunction::Tabulated(_) => Vec::new(),
        };
        Self { zeta, tol, floor, dt, decay }
    }

    pub(crate) fn for_mode(zeta: &'a KlFunction, mode: &SpanningMode, dt: f64, n_steps: usize) -> Self {
        let tol = mode.tolerance();
        let floor = if mode.kind == SpanningKind::Practical { tol } else { 0.0 };
        Self::new(zeta, tol, floor, dt, n_steps)
    }

    #[inline]
    pub(crate) fn bound(&self, d0: f64, k: usize) -> f64 {
        let r = d0 + self.tol;
        let z = if self.decay.is_empty() { self.zeta.eval(r, self.dt * k as f64) } else { self.decay[k] * r };
        z + self.floor
    }

    #[inline]
    pub(crate) fn holds(&self, d: f64, d0: f64, k: usize) -> bool {
        let b = self.bound(d0, k);
        d <= b + ENVELOPE_SLACK * (1.0 + b)
    }
}

/// Smallest envelope margin `bound - d(x(t_k), L)` along a trajectory.
pub fn spanning_margin(traj: &Trajectory, zeta: &KlFunction, mode: &SpanningMode, target: &Region) -> f64 {
    let env = Envelope::for_mode(zeta, mode, traj.dt(), traj.len() - 1);
    let d0 = target.dist(traj.initial_state());
    (0..traj.len()).map(|k| env.bound(d0, k) - target.dist(traj.state(k))).fold(f64::INFINITY, f64::min)
}

/// Whether the trajectory satisfies the spanning condition at every sample.
pub fn check_spanning(traj: &Trajectory, zeta: &KlFunction, mode: &SpanningMode, target: &Region) -> bool {
    let env = Envelope::for_mode(zeta, mode, traj.dt(), traj.len() - 1);
    let d0 = target.dist(traj.initial_state());
    (0..traj.len()).all(|k| env.holds(target.dist(traj.state(k)), d0, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateOrigin {
    /// Closed loop of feedback `law` started at grid point `seed`.
    Feedback { law: usize, seed: usize },
    /// Constant control number `index` of the quantized range.
    Constant { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub signal: ControlSignal,
    pub origin: CandidateOrigin,
}

/// Levels per axis used when no feedback is supplied and none are requested.
pub const DEFAULT_CONSTANT_LEVELS: usize = 5;

/// Candidate pool on `[0, tau]`: the open-loop records of every feedback from
/// every seed, plus `constant_levels^m` constant controls. Duplicate signals are
/// dropped, keeping the first.
pub fn build_candidates<S, E>(
    system: &S,
    feedbacks: &[&dyn Feedback],
    seeds: &Grid,
    tau: f64,
    dt: f64,
    constant_levels: usize,
    exec: &E,
) -> Result<Vec<Candidate>>
where
    S: ControlSystem + ?Sized,
    E: Executor + ?Sized,
{
    let n_steps = step_count("tau", tau, dt)?;
    let d = system.state_dim();
    let m = system.control_dim();
    if seeds.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: seeds.dim() });
    }
    let mut out = Vec::new();
    for (law, fb) in feedbacks.iter().enumerate() {
        if fb.control_dim() != m {
            return Err(Error::DimensionMismatch { expected: m, got: fb.control_dim() });
        }
        let signals = exec.map(seeds.len(), |seed| -> Result<ControlSignal> {
            let mut ws = Rk4::new(d);
            let mut x = alloc::vec![0.0; d];
            let mut rec = Vec::with_capacity(n_steps * m);
            let end = closed_loop_sweep(system, *fb, seeds.point(seed), n_steps, dt, &mut ws, &mut x, Some(&mut rec), |_, _| true)?;
            if let SweepEnd::Diverged(k) = end {
                return Err(Error::Divergence { time: dt * k as f64 });
            }
            ControlSignal::new(dt, m, rec)
        });
        for (seed, s) in signals.into_iter().enumerate() {
            out.push(Candidate { signal: s?, origin: CandidateOrigin::Feedback { law, seed } });
        }
    }
    let levels = if feedbacks.is_empty() && constant_levels == 0 { DEFAULT_CONSTANT_LEVELS } else { constant_levels };
    if levels > 0 {
        let range = system.control_range();
        let values = range.grid(levels)?;
        for (index, u) in values.chunks_exact(m).enumerate() {
            // one sample held over the whole horizon
            out.push(Candidate { signal: ControlSignal::constant(u, tau, 1)?, origin: CandidateOrigin::Constant { index } });
        }
    }
    Ok(dedup(out))
}

fn dedup(cands: Vec<Candidate>) -> Vec<Candidate> {
    fn key(c: &Candidate) -> (f64, &[f64]) {
        (c.signal.step(), c.signal.values())
    }
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, va) = key(&cands[a]);
        let (sb, vb) = key(&cands[b]);
        sa.total_cmp(&sb)
            .then(va.len().cmp(&vb.len()))
            .then_with(|| va.iter().zip(vb).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(core::cmp::Ordering::Equal))
            .then(a.cmp(&b))
    });
    let mut keep = alloc::vec![true; cands.len()];
    for w in order.windows(2) {
        if key(&cands[w[0]]) == key(&cands[w[1]]) {
            keep[w[1]] = false;
        }
    }
    cands.into_iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect()
}

/// For each candidate, the grid points it spans for at least `min_samples`
/// samples, with the number of leading samples satisfying the envelope.
#[allow(clippy::too_many_arguments)]
pub(crate) fn survival<S, E>(
    system: &S,
    grid: &Grid,
    candidates: &[Candidate],
    env: &Envelope<'_>,
    target: &Region,
    n_steps: usize,
    dt: f64,
    min_samples: u32,
    exec: &E,
) -> Result<Vec<Vec<(u32, u32)>>>
where
    S: ControlSystem + ?Sized,
    E: Executor + ?Sized,
{
    let mut holds = Vec::with_capacity(candidates.len());
    for c in candidates {
        if c.signal.dim() != system.control_dim() {
            return Err(Error::DimensionMismatch { expected: system.control_dim(), got: c.signal.dim() });
        }
        let hold = step_count("control step", c.signal.step(), dt)?;
        if c.signal.len() * hold < n_steps {
            return Err(Error::SignalTooShort { available: c.signal.len() * hold, required: n_steps });
        }
        holds.push(hold);
    }
    let d0: Vec<f64> = grid.iter().map(|p| target.dist(p)).collect();
    Ok(exec.map(candidates.len(), |ci| {
        let alive = lane_sweep(
            system,
            grid.len(),
            &candidates[ci].signal,
            holds[ci],
            n_steps,
            dt,
            |i, x| x.copy_from_slice(grid.point(i)),
            |i, k, s| env.holds(target.dist(s), d0[i], k),
        );
        alive.into_iter().enumerate().filter(|(_, a)| *a >= min_samples).map(|(p, a)| (p as u32, a)).collect()
    }))
}

/// Points spanned through sample `n` (inclusive), per candidate.
pub(crate) fn sets_at(surv: &[Vec<(u32, u32)>], n: usize) -> Vec<Vec<u32>> {
    surv.iter().map(|l| l.iter().filter(|(_, a)| *a as usize > n).map(|(p, _)| *p).collect()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanningResult {
    pub horizon: f64,
    pub count: usize,
    /// Chosen candidate indices.
    pub chosen: Vec<usize>,
    /// For each grid point, the chosen candidate that spans it.
    pub assignment: Vec<usize>,
    pub method: CoverMethod,
}

pub(crate) fn resolve(horizon: f64, n_points: usize, sets: &[Vec<u32>]) -> Result<SpanningResult> {
    let cover = minimal_cover(n_points, sets).map_err(|points| Error::Infeasible { horizon, points })?;
    let mut assignment = alloc::vec![usize::MAX; n_points];
    for &c in &cover.chosen {
        for &p in &sets[c] {
            if assignment[p as usize] == usize::MAX {
                assignment[p as usize] = c;
            }
        }
    }
    Ok(SpanningResult { horizon, count: cover.chosen.len(), chosen: cover.chosen, assignment, method: cover.method })
}

/// Smallest candidate subset spanning every grid point up to `tau`.
#[allow(clippy::too_many_arguments)]
pub fn minimal_spanning_set<S, E>(
    system: &S,
    zeta: &KlFunction,
    mode: &SpanningMode,
    target: &Region,
    grid: &Grid,
    candidates: &[Candidate],
    tau: f64,
    dt: f64,
    exec: &E,
) -> Result<SpanningResult>
where
    S: ControlSystem + ?Sized,
    E: Executor + ?Sized,
{
    mode.validate()?;
    let n = step_count("tau", tau, dt)?;
    let env = Envelope::for_mode(zeta, mode, dt, n);
    let surv = survival(system, grid, candidates, &env, target, n, dt, n as u32 + 1, exec)?;
    resolve(tau, grid.len(), &sets_at(&surv, n))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntropyEstimate {
    pub horizons: Vec<f64>,
    pub counts: Vec<usize>,
    pub methods: Vec<CoverMethod>,
    /// Least-squares slope of `ln r` against `tau` over the upper half of the horizons.
    pub rate: f64,
    /// `ln r(tau_max) / tau_max`.
    pub rate_at_max: f64,
    /// `ln r(tau) / tau` per horizon.
    pub running: Vec<f64>,
}

/// First index of the upper half used by the rate fit.
pub fn upper_half_start(n: usize) -> usize {
    n / 2
}

/// Slope of `ln counts` against `horizons` over the upper half of the points.
pub fn fit_entropy_rate(horizons: &[f64], counts: &[f64]) -> Result<f64> {
    if horizons.len() != counts.len() || horizons.len() < 3 {
        return Err(invalid("rate fit needs at least three horizons with one count each"));
    }
    if counts.iter().any(|c| !(*c > 0.0)) {
        return Err(invalid("counts must be positive"));
    }
    let start = upper_half_start(horizons.len());
    let t = &horizons[start..];
    let y: Vec<f64> = counts[start..].iter().map(|c| math::ln(*c)).collect();
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(&y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("horizons in the fit window must differ"));
    }
    Ok(sxy / sxx)
}

pub(crate) fn validate_horizons(horizons: &[f64], dt: f64) -> Result<Vec<usize>> {
    if horizons.len() < 3 {
        return Err(invalid("need at least three horizons"));
    }
    if horizons.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("horizons must increase strictly"));
    }
    horizons.iter().map(|t| step_count("horizon", *t, dt)).collect()
}

pub(crate) fn estimate_from_counts(horizons: &[f64], counts: Vec<usize>, methods: Vec<CoverMethod>) -> Result<EntropyEstimate> {
    let cf: Vec<f64> = counts.iter().map(|c| *c as f64).collect();
    let rate = fit_entropy_rate(horizons, &cf)?;
    let running: Vec<f64> = horizons.iter().zip(&cf).map(|(t, c)| math::ln(*c) / t).collect();
    let rate_at_max = running[running.len() - 1];
    Ok(EntropyEstimate { horizons: horizons.to_vec(), counts, methods, rate, rate_at_max, running })
}

/// Spanning counts at each horizon and the fitted entropy rate.
///
/// `candidates` must cover the largest horizon; shorter horizons use their
/// prefixes, so one sweep serves every horizon.
#[allow(clippy::too_many_arguments)]
pub fn entropy_rate<S, E>(
    system: &S,
    zeta: &KlFunction,
    mode: &SpanningMode,
    target: &Region,
    grid: &Grid,
    candidates: &[Candidate],
    horizons: &[f64],
    dt: f64,
    exec: &E,
) -> Result<EntropyEstimate>
where
    S: ControlSystem + ?Sized,
    E: Executor + ?Sized,
{
    mode.validate()?;
    let steps = validate_horizons(horizons, dt)?;
    let n_max = steps[steps.len() - 1];
    let env = Envelope::for_mode(zeta, mode, dt, n_max);
    let surv = survival(system, grid, candidates, &env, target, n_max, dt, steps[0] as u32 + 1, exec)?;
    let mut counts = Vec::new();
    let mut methods = Vec::new();
    for (tau, n) in horizons.iter().zip(&steps) {
        let r = resolve(*tau, grid.len(), &sets_at(&surv, *n))?;
        counts.push(r.count);
        methods.push(r.method);
    }
    estimate_from_counts(horizons, counts, methods)
}

