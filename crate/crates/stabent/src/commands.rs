//! One function per subcommand; each returns its artifacts without touching the disk.

use anyhow::{anyhow, bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use stabent_core::bounds::{bound_report, linear_spectral_entropy, BoundReport};
use stabent_core::dynamics::{closed_loop, integrate, ControlSignal, ControlSystem, Feedback, KlFunction};
use stabent_core::exec::Executor;
use stabent_core::feedback::{feedback_entropy_rate, proposition42_check, ComparisonReport, FeedbackEntropy};
use stabent_core::models::{pwl_sweep, quadratic_sweep, verify_practical_stability};
use stabent_core::spanning::{build_candidates, entropy_rate, EntropyEstimate, SpanningKind, DEFAULT_CONSTANT_LEVELS};

use crate::experiment::{AnySystem, Experiment, SynthesisReport};
use crate::report::{self, number, Artifact};

/// Slack of the sandwich check on empirical rates.
pub const SANDWICH_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: String,
    pub artifacts: Vec<Artifact>,
    /// False when a check ran to completion and failed.
    pub passed: bool,
}

impl Outcome {
    fn ok(summary: String, artifacts: Vec<Artifact>) -> Self {
        Self { summary, artifacts, passed: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Series {
    /// Horizon against the log of the spanning count.
    Entropy,
    /// Time against the distance to the target.
    Trajectory,
    /// Log gain against log equilibrium magnitude.
    Sweep,
    /// First coordinate of the initial state against its verification margin.
    Verify,
}

fn mode_name(e: &Experiment) -> &'static str {
    match e.mode.kind {
        SpanningKind::Strict => "strict",
        SpanningKind::Practical => "practical",
    }
}

fn estimate_csv(name: &str, est: &EntropyEstimate) -> Result<Artifact> {
    let rows = est
        .horizons
        .iter()
        .zip(&est.counts)
        .zip(&est.methods)
        .zip(&est.running)
        .map(|(((t, c), m), r)| vec![number(*t), c.to_string(), m.as_str().to_string(), number(*r)]);
    report::csv(name, &["tau", "count", "method", "rate_running"], rows)
}

#[derive(Serialize)]
struct TrajectorySummary<'a> {
    name: &'a str,
    closed_loop: bool,
    x0: Vec<f64>,
    horizon: f64,
    dt: f64,
    final_state: Vec<f64>,
    final_distance: f64,
    max_distance: f64,
}

pub fn simulate<E: Executor>(e: &Experiment, _exec: &E) -> Result<Outcome> {
    let d = e.system.state_dim();
    let x0 = match &e.config.simulate.x0 {
        Some(x) if x.len() == d => x.clone(),
        Some(x) => bail!("simulate.x0: expected {d} entries, found {}", x.len()),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(e.config.seed);
            e.gamma.lower().iter().zip(e.gamma.upper()).map(|(l, u)| if l < u { rng.gen_range(*l..=*u) } else { *l }).collect()
        }
    };
    let horizon = e.config.simulate.horizon.unwrap_or(*e.config.run.horizons.last().expect("validated"));
    let dt = e.check_dt();
    let traj = match &e.feedback {
        Some(fb) => closed_loop(&e.system, fb, &x0, horizon, dt)?,
        None => {
            let range = e.system.control_range();
            let mid: Vec<f64> = range
                .lower()
                .iter()
                .zip(range.upper())
                .map(|(l, u)| if l.is_finite() && u.is_finite() { 0.5 * (l + u) } else { 0.0_f64.clamp(*l, *u) })
                .collect();
            let n = (horizon / dt).round() as usize;
            integrate(&e.system, &x0, &ControlSignal::constant(&mid, dt, n)?, horizon, dt)?
        }
    };
    let m = traj.control().dim();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.push("dist".into());
    let mut rows = Vec::with_capacity(traj.len());
    let mut max_distance: f64 = 0.0;
    for k in 0..traj.len() {
        let s = traj.state(k);
        let dist = e.target.dist(s);
        max_distance = max_distance.max(dist);
        let mut row = vec![number(traj.time(k))];
        row.extend(s.iter().map(|v| number(*v)));
        let u = traj.control().at(k.min(traj.control().len() - 1));
        row.extend(u.iter().map(|v| number(*v)));
        row.push(number(dist));
        rows.push(row);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let fin = traj.final_state().to_vec();
    let final_distance = e.target.dist(&fin);
    let summary = TrajectorySummary {
        name: &e.name,
        closed_loop: e.feedback.is_some(),
        x0: x0.clone(),
        horizon,
        dt,
        final_state: fin,
        final_distance,
        max_distance,
    };
    Ok(Outcome::ok(
        format!("simulate {}: {} steps, final distance {:.6}", e.name, traj.len() - 1, final_distance),
        vec![report::csv("trajectory.csv", &header, rows)?, report::json("trajectory.json", &summary)?],
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct Sandwich {
    pub lower: f64,
    pub upper: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropySummary {
    pub name: String,
    pub mode: &'static str,
    pub epsilon: f64,
    pub grid_points: usize,
    pub candidates: usize,
    pub dt: f64,
    #[serde(flatten)]
    pub estimate: EntropyEstimate,
    /// Spectral value `sum max(0, alpha + Re lambda)` for linear systems.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral_entropy: Option<f64>,
    pub bounds: BoundReport,
    pub sandwich: Sandwich,
}

pub fn entropy_summary<E: Executor>(e: &Experiment, exec: &E) -> Result<EntropySummary> {
    let run = &e.config.run;
    let tau = *run.horizons.last().expect("validated");
    let fbs: Vec<&dyn Feedback> = e.feedback.iter().map(|f| f as &dyn Feedback).collect();
    let levels = if fbs.is_empty() && run.constant_levels == 0 { DEFAULT_CONSTANT_LEVELS } else { run.constant_levels };
    let candidates = build_candidates(&e.system, &fbs, &e.grid, tau, run.dt, levels, exec)?;
    let estimate = entropy_rate(&e.system, &e.zeta, &e.mode, &e.target, &e.grid, &candidates, &run.horizons, run.dt, exec)?;
    let bounds = bound_report(&e.system, &e.gamma, &e.target, &e.zeta, run.epsilon, &e.config.bounds.options())?;
    let spectral_entropy = match (&e.system, &e.zeta) {
        (AnySystem::Linear(s), KlFunction::Exponential { alpha, .. }) => Some(linear_spectral_entropy(s.a(), *alpha)?.value),
        _ => None,
    };
    let pass = bounds.lower_general - SANDWICH_TOLERANCE <= estimate.rate && estimate.rate <= bounds.upper_lipschitz + SANDWICH_TOLERANCE;
    let sandwich = Sandwich { lower: bounds.lower_general, upper: bounds.upper_lipschitz, tolerance: SANDWICH_TOLERANCE, pass };
    Ok(EntropySummary {
        name: e.name.clone(),
        mode: mode_name(e),
        epsilon: run.epsilon,
        grid_points: e.grid.len(),
        candidates: candidates.len(),
        dt: run.dt,
        estimate,
        spectral_entropy,
        bounds,
        sandwich,
    })
}

pub fn entropy<E: Executor>(e: &Experiment, exec: &E) -> Result<Outcome> {
    let s = entropy_summary(e, exec)?;
    let oracle = s.spectral_entropy.map(|v| format!(", spectral {}", fmt4(v))).unwrap_or_default();
    let line = format!(
        "entropy {}: rate {} (counts {:?}{}), bounds [{}, {}] {}",
        e.name,
        fmt4(s.estimate.rate),
        s.estimate.counts,
        oracle,
        fmt4(s.sandwich.lower),
        fmt4(s.sandwich.upper),
        if s.sandwich.pass { "inside" } else { "OUTSIDE" }
    );
    Ok(Outcome::ok(line, vec![estimate_csv("entropy.csv", &s.estimate)?, report::json("entropy.json", &s)?]))
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

#[derive(Serialize)]
struct Named<'a, T: Serialize> {
    name: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

pub fn bounds<E: Executor>(e: &Experiment, _exec: &E) -> Result<Outcome> {
    let r = bound_report(&e.system, &e.gamma, &e.target, &e.zeta, e.config.run.epsilon, &e.config.bounds.options())?;
    let opt = |v: Option<f64>| v.map(fmt4).unwrap_or_else(|| "-".into());
    let line = format!(
        "bounds {}: lower {} (exponential {}), upper {} (exponential {}), spectral {}",
        e.name,
        fmt4(r.lower_general),
        opt(r.lower_exponential),
        fmt4(r.upper_lipschitz),
        opt(r.upper_exponential),
        opt(r.spectral_exact)
    );
    Ok(Outcome::ok(line, vec![report::json("bounds.json", &Named { name: &e.name, body: &r })?]))
}

pub fn fb_entropy<E: Executor>(e: &Experiment, exec: &E) -> Result<Outcome> {
    let fb = e.feedback()?;
    let run = &e.config.run;
    let r: FeedbackEntropy = feedback_entropy_rate(&e.system, fb, &e.grid, &e.zeta, run.epsilon, &run.horizons, run.dt, exec)?;
    let line = format!("fb-entropy {}: rate {} (counts {:?})", e.name, fmt4(r.estimate.rate), r.estimate.counts);
    Ok(Outcome::ok(line, vec![estimate_csv("fb_entropy.csv", &r.estimate)?, report::json("fb_entropy.json", &Named { name: &e.name, body: &r })?]))
}

pub fn synth<E: Executor>(e: &Experiment, _exec: &E) -> Result<Outcome> {
    let s: &SynthesisReport = e
        .synthesis
        .as_ref()
        .ok_or_else(|| anyhow!("synth: set feedback.kind or zeta.kind to \"synthesized\""))?;
    let line = format!(
        "synth {}: {} M {} (empirical, T = {}), rho {}, equilibria {:?}{}",
        e.name,
        s.method,
        fmt4(s.m_empirical),
        s.m_fit_horizon,
        fmt4(s.rho),
        s.equilibria,
        if s.epsilon_sufficient { "" } else { ", epsilon below the fitted floor" }
    );
    Ok(Outcome::ok(line, vec![report::json("synthesis.json", &Named { name: &e.name, body: s })?]))
}

#[derive(Serialize)]
struct VerifySummary<'a> {
    name: &'a str,
    epsilon: f64,
    horizon: f64,
    dt: f64,
    min_margin: f64,
    worst_point: Vec<f64>,
    pass: bool,
}

pub fn verify<E: Executor>(e: &Experiment, exec: &E) -> Result<Outcome> {
    let fb = e.feedback()?;
    let run = &e.config.run;
    let dt = e.check_dt();
    let r = verify_practical_stability(&e.system, fb, &e.zeta, run.epsilon, &e.grid, &e.target, run.verify_horizon, dt, exec)?;
    let d = e.grid.dim();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("margin".into());
    header.push("argmin_t".into());
    let rows = (0..e.grid.len()).map(|i| {
        let mut row: Vec<String> = e.grid.point(i).iter().map(|v| number(*v)).collect();
        row.push(number(r.margins[i]));
        row.push(number(r.argmin_times[i]));
        row
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let worst = (0..r.margins.len()).min_by(|a, b| r.margins[*a].total_cmp(&r.margins[*b])).unwrap_or(0);
    let summary = VerifySummary {
        name: &e.name,
        epsilon: run.epsilon,
        horizon: run.verify_horizon,
        dt,
        min_margin: r.min_margin,
        worst_point: e.grid.point(worst).to_vec(),
        pass: r.pass,
    };
    let line = format!("verify {}: min margin {:.3e} over {} points, {}", e.name, r.min_margin, e.grid.len(), if r.pass { "pass" } else { "FAIL" });
    Ok(Outcome { summary: line, artifacts: vec![report::csv("verify.csv", &header, rows)?, report::json("verify.json", &summary)?], passed: r.pass })
}

#[derive(Serialize)]
struct QuadraticSweepSummary<'a> {
    name: &'a str,
    points: usize,
    /// Least-squares slope of `ln |e|` against `ln |q|`.
    slope: f64,
    slope_expected: f64,
    jacobian_limit: f64,
    /// `|J(e(q)) + 3 lambda| / (3 lambda)` at the largest gain.
    final_relative_gap: f64,
}

#[derive(Serialize)]
struct PwlSweepSummary<'a> {
    name: &'a str,
    points: usize,
    slope_positive: f64,
    slope_negative: f64,
    slope_expected: f64,
}

pub fn sweep<E: Executor>(e: &Experiment, _exec: &E) -> Result<Outcome> {
    let w = &e.config.sweep;
    let mags = report::logspace(w.min, w.max, w.points);
    match &e.system {
        AnySystem::Quadratic(s) => {
            let p = s.params();
            let sign = -p.gamma0.signum();
            let qs: Vec<f64> = mags.iter().map(|m| sign * m).collect();
            let pts = quadratic_sweep(p, &qs)?;
            let rows = pts.iter().map(|s| vec![number(s.q), number(s.equilibrium), number(s.jacobian)]);
            let csv = report::csv("sweep.csv", &["q", "e", "J"], rows)?;
            let lx: Vec<f64> = pts.iter().map(|s| s.q.abs().ln()).collect();
            let ly: Vec<f64> = pts.iter().map(|s| s.equilibrium.abs().ln()).collect();
            let last = pts.last().ok_or_else(|| anyhow!("sweep: no gain produced an equilibrium"))?;
            let lim = -3.0 * p.lambda;
            let summary = QuadraticSweepSummary {
                name: &e.name,
                points: pts.len(),
                slope: report::slope(&lx, &ly),
                slope_expected: -2.0 / 3.0,
                jacobian_limit: lim,
                final_relative_gap: (last.jacobian - lim).abs() / lim.abs(),
            };
            let line = format!(
                "sweep {}: slope {} (expected -0.6667), J gap {:.2e} at |q| = {}",
                e.name,
                fmt4(summary.slope),
                summary.final_relative_gap,
                number(last.q.abs())
            );
            Ok(Outcome::ok(line, vec![csv, report::json("sweep.json", &summary)?]))
        }
        AnySystem::Cubic(s) => {
            let p = s.params();
            let sign = -p.eta1.signum();
            let ks: Vec<f64> = mags.iter().map(|m| sign * m).collect();
            let pts = pwl_sweep(p, &ks);
            if pts.len() < 2 {
                bail!("sweep: fewer than two gains produced equilibria");
            }
            let rows = pts.iter().map(|[a, b]| vec![number(a.gain), number(a.equilibrium), number(a.jacobian), number(b.equilibrium), number(b.jacobian)]);
            let csv = report::csv("sweep.csv", &["k", "e1", "J1", "e2", "J2"], rows)?;
            let lx: Vec<f64> = pts.iter().map(|[a, _]| a.gain.abs().ln()).collect();
            let l1: Vec<f64> = pts.iter().map(|[a, _]| a.equilibrium.abs().ln()).collect();
            let l2: Vec<f64> = pts.iter().map(|[_, b]| b.equilibrium.abs().ln()).collect();
            let summary = PwlSweepSummary {
                name: &e.name,
                points: pts.len(),
                slope_positive: report::slope(&lx, &l1),
                slope_negative: report::slope(&lx, &l2),
                slope_expected: -1.0,
            };
            let line = format!("sweep {}: slopes {} and {} (expected -1)", e.name, fmt4(summary.slope_positive), fmt4(summary.slope_negative));
            Ok(Outcome::ok(line, vec![csv, report::json("sweep.json", &summary)?]))
        }
        _ => bail!("sweep: needs a quadratic or cubic system"),
    }
}

pub fn check42<E: Executor>(e: &Experiment, exec: &E) -> Result<Outcome> {
    let fb = e.feedback()?;
    let run = &e.config.run;
    let r: ComparisonReport = proposition42_check(&e.system, fb, &e.grid, &e.zeta, run.epsilon, &e.target, &run.horizons, run.dt, exec)?;
    let line = format!(
        "check42 {}: spanning rate {} <= {} x feedback rate {}: {}",
        e.name,
        fmt4(r.spanning.rate),
        r.ratio_limit,
        fmt4(r.feedback.estimate.rate),
        if r.pass { "pass" } else { "FAIL" }
    );
    Ok(Outcome { summary: line, artifacts: vec![report::json("check42.json", &Named { name: &e.name, body: &r })?], passed: r.pass })
}

/// Two-column data for one figure.
pub fn plot<E: Executor>(e: &Experiment, series: Series, exec: &E) -> Result<Outcome> {
    let (file, header, rows): (&str, [&str; 2], Vec<(f64, f64)>) = match series {
        Series::Entropy => {
            let s = entropy_summary(e, exec)?;
            let rows = s.estimate.horizons.iter().zip(&s.estimate.counts).map(|(t, c)| (*t, (*c as f64).ln())).collect();
            ("plot_entropy.csv", ["tau", "log_count"], rows)
        }
        Series::Trajectory => {
            let out = simulate(e, exec)?;
            let csv = &out.artifacts[0].contents;
            let rows = csv
                .lines()
                .skip(1)
                .map(|l| {
                    let f: Vec<&str> = l.split(',').collect();
                    (f[0].parse().unwrap_or(f64::NAN), f[f.len() - 1].parse().unwrap_or(f64::NAN))
                })
                .collect();
            ("plot_trajectory.csv", ["t", "dist"], rows)
        }
        Series::Sweep => {
            let out = sweep(e, exec)?;
            let rows = out.artifacts[0]
                .contents
                .lines()
                .skip(1)
                .map(|l| {
                    let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect();
                    (f[0].abs().log10(), f[1].abs().log10())
                })
                .collect();
            ("plot_sweep.csv", ["log10_gain", "log10_equilibrium"], rows)
        }
        Series::Verify => {
            let out = verify(e, exec)?;
            let rows = out.artifacts[0]
                .contents
                .lines()
                .skip(1)
                .map(|l| {
                    let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect();
                    (f[0], f[f.len() - 2])
                })
                .collect();
            ("plot_verify.csv", ["x1", "margin"], rows)
        }
    };
    let n = rows.len();
    let art = report::csv(file, &header, rows.into_iter().map(|(a, b)| vec![number(a), number(b)]))?;
    Ok(Outcome::ok(format!("plot {}: {} rows to {}", e.name, n, file), vec![art]))
}
