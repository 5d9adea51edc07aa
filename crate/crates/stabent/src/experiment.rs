//! Turns a validated config into concrete system, feedback, envelope and grids.

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use stabent_core::dynamics::{closed_loop, ControlRange, ControlSystem, Grid, KlFunction, KlTable, LinearSystem, Region};
use stabent_core::exec::Executor;
use stabent_core::feedback::{FeedbackKind, FeedbackLaw};
use stabent_core::models::{
    chain_system, fit_overshoot_m, gains_for_poles, quadratic_gain, synthesize_pwl, synthesize_quadratic, ChainParams,
    ChainSystem, CubicParams, CubicSystem, OvershootFit, QuadraticParams, QuadraticSystem, Synthesis,
};
use stabent_core::spanning::SpanningMode;

use crate::config::{ExperimentConfig, FeedbackConfig, ModeConfig, SystemConfig, ZetaConfig};
use crate::demos;

/// One of the supported model families.
#[derive(Debug, Clone)]
pub enum AnySystem {
    Linear(LinearSystem),
    Quadratic(QuadraticSystem),
    Cubic(CubicSystem),
    Chain(ChainSystem),
}

macro_rules! each {
    ($self:expr, $s:ident => $e:expr) => {
        match $self {
            AnySystem::Linear($s) => $e,
            AnySystem::Quadratic($s) => $e,
            AnySystem::Cubic($s) => $e,
            AnySystem::Chain($s) => $e,
        }
    };
}

impl ControlSystem for AnySystem {
    #[inline]
    fn state_dim(&self) -> usize {
        each!(self, s => s.state_dim())
    }

    #[inline]
    fn control_dim(&self) -> usize {
        each!(self, s => s.control_dim())
    }

    #[inline]
    fn field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        each!(self, s => s.field(x, u, dx))
    }

    fn jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        each!(self, s => s.jacobian(x, u))
    }

    fn control_range(&self) -> &ControlRange {
        each!(self, s => s.control_range())
    }

    fn truncation_slack(&self, epsilon: f64) -> f64 {
        each!(self, s => s.truncation_slack(epsilon))
    }

    fn linear_part(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        each!(self, s => s.linear_part())
    }

    #[inline]
    fn divergence(&self, x: &[f64], u: &[f64]) -> f64 {
        each!(self, s => s.divergence(x, u))
    }
}

impl AnySystem {
    pub fn family(&self) -> &'static str {
        match self {
            AnySystem::Linear(_) => "linear",
            AnySystem::Quadratic(_) => "quadratic",
            AnySystem::Cubic(_) => "cubic",
            AnySystem::Chain(_) => "chain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeedbackSummary {
    Linear { k: Vec<Vec<f64>> },
    Quadratic { k: f64, q: f64 },
    Pwl { k1: f64, k2: f64 },
}

impl FeedbackSummary {
    pub fn of(law: &FeedbackLaw) -> Self {
        match &law.kind {
            FeedbackKind::Linear { k } => {
                FeedbackSummary::Linear { k: (0..k.nrows()).map(|i| k.row(i).iter().copied().collect()).collect() }
            }
            FeedbackKind::Quadratic { k, q } => FeedbackSummary::Quadratic { k: *k, q: *q },
            FeedbackKind::PiecewiseLinear { k1, k2 } => FeedbackSummary::Pwl { k1: *k1, k2: *k2 },
        }
    }
}

/// What the gain search or the overshoot fit produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisReport {
    /// `gain-search` or `overshoot-fit`.
    pub method: &'static str,
    pub alpha: f64,
    pub epsilon: f64,
    pub feedback: FeedbackSummary,
    /// Attracting equilibria of the closed loop.
    pub equilibria: Vec<Vec<f64>>,
    /// Closed-loop derivative at each equilibrium (scalar searches only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jacobians: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doublings: Option<usize>,
    /// Overshoot constant measured on finite trajectories, not a proven value.
    pub m_empirical: f64,
    pub m_fit_horizon: f64,
    pub m_suspicious: bool,
    pub dt: f64,
    pub rho: f64,
    pub control_lower: Vec<f64>,
    pub control_upper: Vec<f64>,
    pub sign_consistent: bool,
    /// Smallest `eps` for which the fitted envelope guarantees practical stability.
    pub epsilon_floor: f64,
    pub epsilon_sufficient: bool,
}

pub struct Experiment {
    pub name: String,
    pub config: ExperimentConfig,
    pub system: AnySystem,
    pub feedback: Option<FeedbackLaw>,
    pub zeta: KlFunction,
    pub gamma: Region,
    pub grid: Grid,
    pub target: Region,
    pub mode: SpanningMode,
    pub synthesis: Option<SynthesisReport>,
}

/// Replaces a `demo` system section by the demo's own system, control and feedback.
fn expand(cfg: &ExperimentConfig) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    if let SystemConfig::Demo { name } = &cfg.system {
        let demo = demos::config(name)?;
        out.system = demo.system;
        if out.control.is_none() {
            out.control = demo.control;
        }
        if out.feedback == FeedbackConfig::None {
            out.feedback = demo.feedback;
        }
    }
    Ok(out)
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn center(r: &Region) -> Vec<f64> {
    r.lower().iter().zip(r.upper()).map(|(l, u)| 0.5 * (l + u)).collect()
}

enum Family {
    Linear(DMatrix<f64>, DMatrix<f64>),
    Quadratic(QuadraticParams),
    Cubic(CubicParams),
    Chain(ChainParams),
}

impl Family {
    fn dims(&self) -> (usize, usize) {
        match self {
            Family::Linear(a, b) => (a.nrows(), b.ncols()),
            Family::Quadratic(_) | Family::Cubic(_) => (1, 1),
            Family::Chain(p) => (p.dim(), 1),
        }
    }

    /// Builds on `nominal`, truncated to radius `rho` when unbounded.
    fn build(&self, nominal: &ControlRange, rho: Option<f64>) -> Result<AnySystem> {
        let range = match (nominal.is_bounded(), rho) {
            (true, _) => nominal.clone(),
            (false, Some(r)) => nominal.truncated(r)?,
            (false, None) => bail!("control.rho: required to truncate an unbounded control range"),
        };
        Ok(match self {
            Family::Linear(a, b) => AnySystem::Linear(LinearSystem::new(a.clone(), b.clone(), range)?),
            Family::Quadratic(p) => AnySystem::Quadratic(QuadraticSystem::new(*p, nominal.clone(), rho)?),
            Family::Cubic(p) => AnySystem::Cubic(CubicSystem::new(*p, nominal.clone(), rho)?),
            Family::Chain(p) => AnySystem::Chain(chain_system(p.clone(), range)?.0),
        })
    }

    /// Same system without control constraints, for fitting.
    fn free(&self, m: usize) -> Result<AnySystem> {
        let open = ControlRange::unbounded(m);
        Ok(match self {
            Family::Linear(a, b) => AnySystem::Linear(LinearSystem::new(a.clone(), b.clone(), open)?),
            Family::Quadratic(p) => AnySystem::Quadratic(QuadraticSystem::new(*p, open, None)?),
            Family::Cubic(p) => AnySystem::Cubic(CubicSystem::new(*p, open, None)?),
            Family::Chain(p) => AnySystem::Chain(chain_system(p.clone(), open)?.0),
        })
    }
}

impl Experiment {
    pub fn resolve<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Result<Self> {
        cfg.validate()?;
        let cfg = expand(cfg)?;
        let family = match &cfg.system {
            SystemConfig::Linear { a, b } => Family::Linear(matrix(a), matrix(b)),
            SystemConfig::Quadratic { lambda, alpha0, beta0, gamma0 } => {
                Family::Quadratic(QuadraticParams { lambda: *lambda, alpha0: *alpha0, beta0: *beta0, gamma0: *gamma0 })
            }
            SystemConfig::Cubic { lambda, alpha0, beta0, gamma0, alpha1, beta1, gamma1, eta1 } => Family::Cubic(CubicParams {
                lambda: *lambda,
                alpha0: *alpha0,
                beta0: *beta0,
                gamma0: *gamma0,
                alpha1: *alpha1,
                beta1: *beta1,
                gamma1: *gamma1,
                eta1: *eta1,
            }),
            SystemConfig::Chain { lambda, alpha0, beta0, gammas, k1, k2, poles } => {
                let k2 = match (k2, poles) {
                    (Some(k), _) => k.clone(),
                    (None, Some(p)) => gains_for_poles(p),
                    (None, None) => bail!("system: give exactly one of k2 and poles"),
                };
                Family::Chain(ChainParams { lambda: *lambda, alpha0: *alpha0, beta0: *beta0, gammas: gammas.clone(), k1: *k1, k2 })
            }
            SystemConfig::Demo { .. } => unreachable!("expanded above"),
        };
        let (d, m) = family.dims();
        let name = cfg.name.clone().unwrap_or_else(|| "experiment".to_string());

        let gamma = Region::cuboid(cfg.gamma.lower.clone(), cfg.gamma.upper.clone()).context("gamma")?;
        if gamma.dim() != d {
            bail!("gamma.lower: expected {d} entries for this system, found {}", gamma.dim());
        }
        let grid = gamma.grid(&cfg.gamma.points).context("gamma.points")?;
        let target = match &cfg.target {
            None => Region::point(vec![0.0; d]),
            Some(t) if t.lower == t.upper => Region::point(t.lower.clone()),
            Some(t) => Region::cuboid(t.lower.clone(), t.upper.clone()).context("target")?,
        };
        if target.dim() != d {
            bail!("target.lower: expected {d} entries for this system, found {}", target.dim());
        }
        let nominal = match &cfg.control {
            None => ControlRange::unbounded(m),
            Some(c) => ControlRange::new(c.lower.clone(), c.upper.clone()).context("control")?,
        };
        if nominal.dim() != m {
            bail!("control.lower: expected {m} entries for this system, found {}", nominal.dim());
        }
        let rho = cfg.control.as_ref().and_then(|c| c.rho);
        let eps = cfg.run.epsilon;
        let alpha = match &cfg.zeta {
            ZetaConfig::Exponential { alpha, .. } | ZetaConfig::Synthesized { alpha } => Some(*alpha),
            ZetaConfig::Table { .. } => None,
        };

        // gain search for the scalar families
        let mut searched: Option<Synthesis> = None;
        let feedback: Option<FeedbackLaw> = match (&cfg.feedback, &family) {
            (FeedbackConfig::None, _) => None,
            (FeedbackConfig::Linear { k }, _) => {
                let k = matrix(k);
                if k.nrows() != m || k.ncols() != d {
                    bail!("feedback.k: expected a {m}x{d} matrix, found {}x{}", k.nrows(), k.ncols());
                }
                Some(FeedbackLaw::linear(k))
            }
            (FeedbackConfig::Quadratic { k, q }, Family::Quadratic(p)) => {
                Some(FeedbackLaw::quadratic(k.unwrap_or_else(|| quadratic_gain(p)), *q))
            }
            (FeedbackConfig::Pwl { k1, k2 }, Family::Cubic(_)) => Some(FeedbackLaw::piecewise_linear(*k1, *k2)),
            (FeedbackConfig::Quadratic { .. } | FeedbackConfig::Pwl { .. }, _) => {
                bail!("feedback.kind: scalar laws need a quadratic or cubic system")
            }
            (FeedbackConfig::Synthesized, Family::Quadratic(p)) => {
                let alpha = alpha.ok_or_else(|| anyhow!("zeta.kind: the gain search needs a decay rate"))?;
                let s = synthesize_quadratic(p, eps, alpha, &gamma, &cfg.synthesis.options(), exec).context("quadratic synthesis")?;
                let law = s.feedback.clone();
                searched = Some(s);
                Some(law)
            }
            (FeedbackConfig::Synthesized, Family::Cubic(p)) => {
                let alpha = alpha.ok_or_else(|| anyhow!("zeta.kind: the gain search needs a decay rate"))?;
                let s = synthesize_pwl(p, eps, alpha, &gamma, &cfg.synthesis.options(), exec).context("piecewise-linear synthesis")?;
                let law = s.feedback.clone();
                searched = Some(s);
                Some(law)
            }
            (FeedbackConfig::Synthesized, Family::Chain(p)) => Some(chain_system(p.clone(), ControlRange::unbounded(1))?.1),
            (FeedbackConfig::Synthesized, Family::Linear(..)) => {
                bail!("feedback.kind: linear systems need an explicit gain matrix")
            }
        };

        let mut synthesis = None;
        let (zeta, system) = if let Some(s) = searched {
            let zeta = match &cfg.zeta {
                ZetaConfig::Synthesized { .. } => s.zeta.clone(),
                other => explicit_zeta(other)?,
            };
            let system = family.build(&nominal, Some(rho.unwrap_or(s.rho)))?;
            let e_max = s.equilibria.iter().fold(0.0f64, |a, e| a.max(e.abs()));
            synthesis = Some(SynthesisReport {
                method: "gain-search",
                alpha: alpha.unwrap_or(f64::NAN),
                epsilon: eps,
                feedback: FeedbackSummary::of(&s.feedback),
                equilibria: s.equilibria.iter().map(|e| vec![*e]).collect(),
                jacobians: Some(s.jacobians.clone()),
                gain: Some(s.gain),
                doublings: Some(s.doublings),
                m_empirical: s.fit.m_hat,
                m_fit_horizon: s.fit.horizon,
                m_suspicious: s.fit.suspicious,
                dt: s.dt,
                rho: s.rho,
                control_lower: system.control_range().lower().to_vec(),
                control_upper: system.control_range().upper().to_vec(),
                sign_consistent: s.sign_consistent,
                epsilon_floor: 2.0 * s.fit.m_hat * e_max,
                epsilon_sufficient: 2.0 * s.fit.m_hat * e_max < eps,
            });
            (zeta, system)
        } else if let ZetaConfig::Synthesized { alpha } = &cfg.zeta {
            let law = feedback.as_ref().ok_or_else(|| anyhow!("zeta.kind: a fitted envelope needs a feedback law"))?;
            let free = family.free(m)?;
            let dt = cfg.synthesis.dt.unwrap_or(cfg.run.dt);
            let fit_grid = gamma.grid(&cfg.gamma.points)?;
            let settle = closed_loop(&free, law, &center(&gamma), cfg.synthesis.attractor_horizon, dt)
                .context("locating the closed-loop attractor")?;
            let e = settle.final_state().to_vec();
            let fit: OvershootFit = fit_overshoot_m(&free, law, &fit_grid, *alpha, &e, cfg.synthesis.fit_horizon, dt, exec)
                .context("overshoot fit")?;
            let (rho_fit, sign_consistent) = if m == 1 {
                let (r, _, one_signed) = Synthesis::range_from_controls(fit.control_min, fit.control_max);
                (r, one_signed)
            } else {
                (1.1 * fit.control_min.abs().max(fit.control_max.abs()), false)
            };
            let system = family.build(&nominal, Some(rho.unwrap_or(rho_fit)))?;
            let floor = (fit.m_hat + 1.0) * target.dist(&e);
            synthesis = Some(SynthesisReport {
                method: "overshoot-fit",
                alpha: *alpha,
                epsilon: eps,
                feedback: FeedbackSummary::of(law),
                equilibria: vec![e],
                jacobians: None,
                gain: None,
                doublings: None,
                m_empirical: fit.m_hat,
                m_fit_horizon: fit.horizon,
                m_suspicious: fit.suspicious,
                dt,
                rho: rho_fit,
                control_lower: system.control_range().lower().to_vec(),
                control_upper: system.control_range().upper().to_vec(),
                sign_consistent,
                epsilon_floor: floor,
                epsilon_sufficient: floor < eps,
            });
            (KlFunction::exponential(*alpha, fit.m_hat)?, system)
        } else {
            (explicit_zeta(&cfg.zeta)?, family.build(&nominal, rho)?)
        };

        let mode = match cfg.run.mode {
            ModeConfig::Strict => SpanningMode::strict(eps),
            ModeConfig::Practical => SpanningMode::practical(eps),
        }
        .with_sampling_factor(cfg.run.sampling_factor);

        Ok(Self { name, config: cfg, system, feedback, zeta, gamma, grid, target, mode, synthesis })
    }

    pub fn feedback(&self) -> Result<&FeedbackLaw> {
        self.feedback.as_ref().ok_or_else(|| anyhow!("feedback.kind: this command needs a feedback law"))
    }

    /// Step for closed-loop checks: the synthesized step when finer than `run.dt`.
    pub fn check_dt(&self) -> f64 {
        match &self.synthesis {
            Some(s) if s.dt < self.config.run.dt => s.dt,
            _ => self.config.run.dt,
        }
    }
}

fn explicit_zeta(z: &ZetaConfig) -> Result<KlFunction> {
    Ok(match z {
        ZetaConfig::Exponential { alpha, m } => KlFunction::exponential(*alpha, *m).context("zeta")?,
        ZetaConfig::Table { r, s, values } => KlFunction::Tabulated(KlTable::new(r.clone(), s.clone(), values.clone()).context("zeta")?),
        ZetaConfig::Synthesized { .. } => bail!("zeta.kind: synthesized envelopes need a feedback"),
    })
}
