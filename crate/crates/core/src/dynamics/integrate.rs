use alloc::vec::Vec;

use super::{ControlSignal, ControlSystem, Feedback, Trajectory};
use crate::error::{Error, Result};
use crate::linalg;
use crate::math;

/// States with a coordinate beyond this magnitude count as diverged.
pub const BLOWUP_LIMIT: f64 = 1e12;

/// Classical fourth-order Runge-Kutta with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        let z = alloc::vec![0.0; dim];
        Self { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }

    /// Advances `x` by one step of length `dt` with `u` held constant.
    #[inline]
    #[allow(clippy::needless_range_loop)]
    pub fn step<S: ControlSystem + ?Sized>(&mut self, system: &S, x: &mut [f64], u: &[f64], dt: f64) {
        let h = 0.5 * dt;
        system.field(x, u, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * self.k1[i];
        }
        system.field(&self.tmp, u, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * self.k2[i];
        }
        system.field(&self.tmp, u, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        system.field(&self.tmp, u, &mut self.k4);
        let s = dt / 6.0;
        for i in 0..x.len() {
            x[i] += s * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }
}

/// `value / dt` as an integer, or an error when it is not one.
pub fn step_count(what: &'static str, value: f64, dt: f64) -> Result<usize> {
    let err = Error::NonIntegerRatio { what, value, dt };
    if !(dt > 0.0) || !(value > 0.0) || !value.is_finite() || !dt.is_finite() {
        return Err(err);
    }
    let r = value / dt;
    let n = math::round(r);
    if n < 1.0 || math::abs(r - n) > 1e-9 * n.max(1.0) {
        return Err(err);
    }
    Ok(n as usize)
}

/// How a sweep ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepEnd {
    /// Every sample was visited.
    Completed,
    /// The visitor rejected sample `k`.
    Stopped(usize),
    /// Sample `k` was non-finite or beyond [`BLOWUP_LIMIT`].
    Diverged(usize),
}

#[inline]
fn blown(x: &[f64]) -> bool {
    x.iter().any(|v| !(math::abs(*v) <= BLOWUP_LIMIT))
}

/// Integrates under an open-loop signal, visiting samples `0..=n_steps`.
///
/// `hold` is the number of integration steps per control sample. The caller
/// guarantees the signal is long enough.
#[allow(clippy::too_many_arguments)]
pub(crate) fn open_loop_sweep<S, V>(
    system: &S,
    x0: &[f64],
    u: &ControlSignal,
    hold: usize,
    n_steps: usize,
    dt: f64,
    ws: &mut Rk4,
    x: &mut [f64],
    mut visit: V,
) -> SweepEnd
where
    S: ControlSystem + ?Sized,
    V: FnMut(usize, &[f64]) -> bool,
{
    x.copy_from_slice(x0);
    let (mut sample, mut phase) = (0, 0);
    for k in 0..=n_steps {
        if !visit(k, x) {
            return SweepEnd::Stopped(k);
        }
        if k == n_steps {
            break;
        }
        ws.step(system, x, u.at(sample), dt);
        phase += 1;
        if phase == hold {
            phase = 0;
            sample += 1;
        }
        if blown(x) {
            return SweepEnd::Diverged(k + 1);
        }
    }
    SweepEnd::Completed
}

/// Sample-and-hold closed loop: `u_k = k(x(t_k))` is held over `[t_k, t_{k+1})`.
///
/// Controls are appended to `record` when given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn closed_loop_sweep<S, F, V>(
    system: &S,
    feedback: &F,
    x0: &[f64],
    n_steps: usize,
    dt: f64,
    ws: &mut Rk4,
    x: &mut [f64],
    mut record: Option<&mut Vec<f64>>,
    mut visit: V,
) -> Result<SweepEnd>
where
    S: ControlSystem + ?Sized,
    F: Feedback + ?Sized,
    V: FnMut(usize, &[f64]) -> bool,
{
    let range = system.control_range();
    let radius = feedback.radius();
    let mut u = alloc::vec![0.0; feedback.control_dim()];
    x.copy_from_slice(x0);
    for k in 0..=n_steps {
        if !visit(k, x) {
            return Ok(SweepEnd::Stopped(k));
        }
        if k == n_steps {
            break;
        }
        feedback.eval(x, &mut u);
        let outside = radius.is_some_and(|r| linalg::max_norm(&u) > r * (1.0 + 1e-12));
        if outside || !range.contains(&u) {
            return Err(Error::RangeViolation { time: dt * k as f64 });
        }
        if let Some(rec) = record.as_deref_mut() {
            rec.extend_from_slice(&u);
        }
        ws.step(system, x, &u, dt);
        if blown(x) {
            return Ok(SweepEnd::Diverged(k + 1));
        }
    }
    Ok(SweepEnd::Completed)
}

fn check_dims<S: ControlSystem + ?Sized>(system: &S, x0: &[f64], m: usize) -> Result<()> {
    if x0.len() != system.state_dim() {
        return Err(Error::DimensionMismatch { expected: system.state_dim(), got: x0.len() });
    }
    if m != system.control_dim() {
        return Err(Error::DimensionMismatch { expected: system.control_dim(), got: m });
    }
    Ok(())
}

/// Fixed-step RK4 solution of `x' = f(x, u(t))` on `[0, tau]`.
///
/// `tau` and the control step must both be integer multiples of `dt`.
pub fn integrate<S: ControlSystem + ?Sized>(
    system: &S,
    x0: &[f64],
    u: &ControlSignal,
    tau: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_dims(system, x0, u.dim())?;
    let n_steps = step_count("tau", tau, dt)?;
    let hold = step_count("control step", u.step(), dt)?;
    if u.len() * hold < n_steps {
        return Err(Error::SignalTooShort { available: u.len() * hold, required: n_steps });
    }
    let d = x0.len();
    let mut states = Vec::with_capacity((n_steps + 1) * d);
    let mut ws = Rk4::new(d);
    let mut x = alloc::vec![0.0; d];
    let end = open_loop_sweep(system, x0, u, hold, n_steps, dt, &mut ws, &mut x, |_, s| {
        states.extend_from_slice(s);
        true
    });
    if let SweepEnd::Diverged(k) = end {
        return Err(Error::Divergence { time: dt * k as f64 });
    }
    let samples = n_steps.div_ceil(hold);
    Ok(Trajectory { dt, dim: d, states, control: u.truncated(samples) })
}

/// Closed-loop solution with sample-and-hold feedback at the integration step.
///
/// The recorded control replays the same trajectory exactly through [`integrate`].
pub fn closed_loop<S, F>(system: &S, feedback: &F, x0: &[f64], tau: f64, dt: f64) -> Result<Trajectory>
where
    S: ControlSystem + ?Sized,
    F: Feedback + ?Sized,
{
    check_dims(system, x0, feedback.control_dim())?;
    let n_steps = step_count("tau", tau, dt)?;
    let d = x0.len();
    let mut states = Vec::with_capacity((n_steps + 1) * d);
    let mut controls = Vec::with_capacity(n_steps * feedback.control_dim());
    let mut ws = Rk4::new(d);
    let mut x = alloc::vec![0.0; d];
    let end = closed_loop_sweep(system, feedback, x0, n_steps, dt, &mut ws, &mut x, Some(&mut controls), |_, s| {
        states.extend_from_slice(s);
        true
    })?;
    if let SweepEnd::Diverged(k) = end {
        return Err(Error::Divergence { time: dt * k as f64 });
    }
    let control = ControlSignal::new(dt, feedback.control_dim(), controls)?;
    Ok(Trajectory { dt, dim: d, states, control })
}

/// Trajectories integrated side by side in [`lane_sweep`].
const LANES: usize = 8;

/// Integrates many initial states under one open-loop signal, interleaving
/// [`LANES`] trajectories so their stages overlap in the pipeline.
///
/// `init(i, x)` writes the initial state of item `i`. `visit(i, k, x)` checks
/// sample `k` of item `i`; an item stops at its first rejected or diverged
/// sample. Returns, per item, the number of leading samples accepted
/// (`n_steps + 1` when all were).
#[allow(clippy::too_many_arguments)]
pub(crate) fn lane_sweep<S, X, V>(
    system: &S,
    n_items: usize,
    u: &ControlSignal,
    hold: usize,
    n_steps: usize,
    dt: f64,
    init: X,
    visit: V,
) -> Vec<u32>
where
    S: ControlSystem + ?Sized,
    X: FnMut(usize, &mut [f64]),
    V: FnMut(usize, usize, &[f64]) -> bool,
{
    // fixed small dimensions let the per-lane loops unroll
    match system.state_dim() {
        1 => lanes::<S, X, V, 1>(system, n_items, u, hold, n_steps, dt, init, visit),
        2 => lanes::<S, X, V, 2>(system, n_items, u, hold, n_steps, dt, init, visit),
        3 => lanes::<S, X, V, 3>(system, n_items, u, hold, n_steps, dt, init, visit),
        4 => lanes::<S, X, V, 4>(system, n_items, u, hold, n_steps, dt, init, visit),
        _ => {
            let (mut init, mut visit) = (init, visit);
            let d = system.state_dim();
            let mut ws = Rk4::new(d);
            let mut x = alloc::vec![0.0; d];
            let mut x0 = alloc::vec![0.0; d];
            (0..n_items)
                .map(|i| {
                    init(i, &mut x0);
                    match open_loop_sweep(system, &x0, u, hold, n_steps, dt, &mut ws, &mut x, |k, s| visit(i, k, s)) {
                        SweepEnd::Completed => n_steps as u32 + 1,
                        SweepEnd::Stopped(k) | SweepEnd::Diverged(k) => k as u32,
                    }
                })
                .collect()
        }
    }
}

fn load<X, V, const D: usize>(
    lane: &mut Lane<D>,
    alive: &mut [u32],
    next: &mut usize,
    n_items: usize,
    init: &mut X,
    visit: &mut V,
) where
    X: FnMut(usize, &mut [f64]),
    V: FnMut(usize, usize, &[f64]) -> bool,
{
    lane.item = usize::MAX;
    while *next < n_items {
        let i = *next;
        *next += 1;
        init(i, &mut lane.x);
        if visit(i, 0, &lane.x) {
            *lane = Lane { item: i, step: 0, phase: 0, ctrl: 0, x: lane.x };
            return;
        }
        alive[i] = 0;
    }
}

#[derive(Clone, Copy)]
struct Lane<const D: usize> {
    item: usize,
    step: usize,
    // position within the current control sample, and that sample's index
    phase: usize,
    ctrl: usize,
    x: [f64; D],
}

#[allow(clippy::too_many_arguments)]
fn lanes<S, X, V, const D: usize>(
    system: &S,
    n_items: usize,
    u: &ControlSignal,
    hold: usize,
    n_steps: usize,
    dt: f64,
    mut init: X,
    mut visit: V,
) -> Vec<u32>
where
    S: ControlSystem + ?Sized,
    X: FnMut(usize, &mut [f64]),
    V: FnMut(usize, usize, &[f64]) -> bool,
{
    let mut alive = alloc::vec![0u32; n_items];
    let mut lanes = [Lane::<D> { item: usize::MAX, step: 0, phase: 0, ctrl: 0, x: [0.0; D] }; LANES];
    let mut next = 0;
    for lane in lanes.iter_mut() {
        load(lane, &mut alive, &mut next, n_items, &mut init, &mut visit);
    }
    let vals = u.values();
    let m = u.dim();
    let (h, s6) = (0.5 * dt, dt / 6.0);
    let mut k1 = [[0.0; D]; LANES];
    let mut k2 = [[0.0; D]; LANES];
    let mut k3 = [[0.0; D]; LANES];
    let mut k4 = [[0.0; D]; LANES];
    let mut tmp = [[0.0; D]; LANES];
    loop {
        let mut slots = [0usize; LANES];
        let mut na = 0;
        for (l, lane) in lanes.iter().enumerate() {
            if lane.item != usize::MAX {
                slots[na] = l;
                na += 1;
            }
        }
        if na == 0 {
            break;
        }
        let active = &slots[..na];
        let uc = |lane: &Lane<D>| &vals[lane.ctrl * m..(lane.ctrl + 1) * m];
        for &l in active {
            system.field(&lanes[l].x, uc(&lanes[l]), &mut k1[l]);
        }
        for &l in active {
            for i in 0..D {
                tmp[l][i] = lanes[l].x[i] + h * k1[l][i];
            }
            system.field(&tmp[l], uc(&lanes[l]), &mut k2[l]);
        }
        for &l in active {
            for i in 0..D {
                tmp[l][i] = lanes[l].x[i] + h * k2[l][i];
            }
            system.field(&tmp[l], uc(&lanes[l]), &mut k3[l]);
        }
        for &l in active {
            for i in 0..D {
                tmp[l][i] = lanes[l].x[i] + dt * k3[l][i];
            }
            system.field(&tmp[l], uc(&lanes[l]), &mut k4[l]);
        }
        for &l in active {
            let lane = &mut lanes[l];
            for i in 0..D {
                lane.x[i] += s6 * (k1[l][i] + 2.0 * (k2[l][i] + k3[l][i]) + k4[l][i]);
            }
            lane.step += 1;
            lane.phase += 1;
            if lane.phase == hold {
                lane.phase = 0;
                lane.ctrl += 1;
            }
            let k = lane.step;
            let done = if blown(&lane.x) || !visit(lane.item, k, &lane.x) {
                alive[lane.item] = k as u32;
                true
            } else if k == n_steps {
                alive[lane.item] = n_steps as u32 + 1;
                true
            } else {
                false
            };
            if done {
                load(lane, &mut alive, &mut next, n_items, &mut init, &mut visit);
            }
        }
    }
    alive
}
