//! TOML experiment configuration.
//!
//! Every file carries `config_version = 1`. Sections: `system`, `control`,
//! `feedback`, `gamma`, `target`, `zeta`, `run`, `bounds`, `synthesis`,
//! `sweep`, `simulate`. Only `system`, `gamma`, `zeta` and `run` are required.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use stabent_core::bounds::BoundOptions;
use stabent_core::models::SynthesisOptions;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub config_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlConfig>,
    #[serde(default)]
    pub feedback: FeedbackConfig,
    pub gamma: GammaConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
    pub zeta: ZetaConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    /// `x' = A x + B u`; matrices given row by row.
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
    Quadratic { lambda: f64, alpha0: f64, beta0: f64, gamma0: f64 },
    Cubic {
        lambda: f64,
        #[serde(default)]
        alpha0: f64,
        #[serde(default)]
        beta0: f64,
        #[serde(default)]
        gamma0: f64,
        #[serde(default)]
        alpha1: f64,
        #[serde(default)]
        beta1: f64,
        #[serde(default)]
        gamma1: f64,
        eta1: f64,
    },
    /// Scalar equation coupled to an integrator chain. `k2` or `poles` fixes the chain gains.
    Chain {
        lambda: f64,
        #[serde(default)]
        alpha0: f64,
        #[serde(default)]
        beta0: f64,
        gammas: Vec<f64>,
        k1: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k2: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        poles: Option<Vec<f64>>,
    },
    /// The system section of a built-in demo.
    Demo { name: String },
}

/// Control range box. Bounds may be `inf`/`-inf`; `rho` truncates an unbounded range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FeedbackConfig {
    #[default]
    None,
    /// `u = K x`, rows of `K`.
    Linear { k: Vec<Vec<f64>> },
    /// `u = k x + q x^2`; `k` defaults to `-beta0 / (2 gamma0)`.
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<f64>,
        q: f64,
    },
    Pwl { k1: f64, k2: f64 },
    /// Quadratic or piecewise-linear law from the gain search; the chain law for chain systems.
    Synthesized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Grid points per axis.
    pub points: Vec<usize>,
}

/// Target set; a point when `lower == upper`. Defaults to the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ZetaConfig {
    /// `M r e^{-alpha s}`.
    Exponential { alpha: f64, m: f64 },
    /// Decay rate given, overshoot fitted along the closed loop.
    Synthesized { alpha: f64 },
    /// Bilinear table on `r x s` nodes, values row-major in `r`.
    Table { r: Vec<f64>, s: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    Strict,
    Practical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: ModeConfig,
    pub epsilon: f64,
    pub horizons: Vec<f64>,
    pub dt: f64,
    /// Quantized constant controls per axis added to the candidate pool.
    #[serde(default)]
    pub constant_levels: usize,
    #[serde(default = "one")]
    pub sampling_factor: f64,
    /// Horizon of `verify`.
    #[serde(default = "twenty")]
    pub verify_horizon: f64,
}

fn one() -> f64 {
    1.0
}

fn twenty() -> f64 {
    20.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub grid_res: usize,
    pub safety_upper: f64,
    pub safety_lower: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        let o = BoundOptions::default();
        Self { grid_res: o.grid_res, safety_upper: o.safety_upper, safety_lower: o.safety_lower }
    }
}

impl BoundsConfig {
    pub fn options(&self) -> BoundOptions {
        BoundOptions { grid_res: self.grid_res, safety_upper: self.safety_upper, safety_lower: self.safety_lower }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub grid_points: usize,
    pub fit_horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub stiffness_step: f64,
    pub dt_max: f64,
    pub gain_start: f64,
    pub max_doublings: usize,
    /// Horizon of the forward run that locates a chain or linear attractor.
    pub attractor_horizon: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        let o = SynthesisOptions::default();
        Self {
            grid_points: o.grid_points,
            fit_horizon: o.fit_horizon,
            dt: o.dt,
            stiffness_step: o.stiffness_step,
            dt_max: o.dt_max,
            gain_start: o.gain_start,
            max_doublings: o.max_doublings,
            attractor_horizon: 200.0,
        }
    }
}

impl SynthesisConfig {
    pub fn options(&self) -> SynthesisOptions {
        SynthesisOptions {
            grid_points: self.grid_points,
            fit_horizon: self.fit_horizon,
            dt: self.dt,
            stiffness_step: self.stiffness_step,
            dt_max: self.dt_max,
            gain_start: self.gain_start,
            max_doublings: self.max_doublings,
        }
    }
}

/// Log-spaced gains for `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { min: 1e2, max: 1e6, points: 20 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Initial state; drawn from `gamma` with `seed` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Defaults to the largest entropy horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("config does not parse")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Checks ranges and shapes; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.config_version != CONFIG_VERSION {
            bail!("config_version: expected {CONFIG_VERSION}, found {}", self.config_version);
        }
        self.validate_system()?;
        if let Some(c) = &self.control {
            check_lengths("control", c.lower.len(), c.upper.len())?;
            for (i, (l, u)) in c.lower.iter().zip(&c.upper).enumerate() {
                if l.is_nan() || u.is_nan() || l > u {
                    bail!("control.lower[{i}]: must not exceed control.upper[{i}]");
                }
            }
            if let Some(r) = c.rho {
                positive("control.rho", r)?;
            }
        }
        match &self.feedback {
            FeedbackConfig::Linear { k } => matrix("feedback.k", k)?,
            FeedbackConfig::Quadratic { k, q } => {
                if let Some(k) = k {
                    finite("feedback.k", *k)?;
                }
                finite("feedback.q", *q)?;
            }
            FeedbackConfig::Pwl { k1, k2 } => {
                finite("feedback.k1", *k1)?;
                finite("feedback.k2", *k2)?;
            }
            FeedbackConfig::None | FeedbackConfig::Synthesized => {}
        }
        let g = &self.gamma;
        check_lengths("gamma", g.lower.len(), g.upper.len())?;
        if g.points.len() != g.lower.len() {
            bail!("gamma.points: expected {} entries, found {}", g.lower.len(), g.points.len());
        }
        for (i, (l, u)) in g.lower.iter().zip(&g.upper).enumerate() {
            finite(&format!("gamma.lower[{i}]"), *l)?;
            finite(&format!("gamma.upper[{i}]"), *u)?;
            if l > u {
                bail!("gamma.lower[{i}]: must not exceed gamma.upper[{i}]");
            }
        }
        if g.points.contains(&0) {
            bail!("gamma.points: every axis needs at least one point");
        }
        if let Some(t) = &self.target {
            check_lengths("target", t.lower.len(), t.upper.len())?;
            for (i, (l, u)) in t.lower.iter().zip(&t.upper).enumerate() {
                finite(&format!("target.lower[{i}]"), *l)?;
                finite(&format!("target.upper[{i}]"), *u)?;
                if l > u {
                    bail!("target.lower[{i}]: must not exceed target.upper[{i}]");
                }
            }
        }
        match &self.zeta {
            ZetaConfig::Exponential { alpha, m } => {
                positive("zeta.alpha", *alpha)?;
                finite("zeta.m", *m)?;
                if *m < 1.0 {
                    bail!("zeta.m: must be at least 1");
                }
            }
            ZetaConfig::Synthesized { alpha } => positive("zeta.alpha", *alpha)?,
            ZetaConfig::Table { r, s, values } => {
                for (what, v) in [("zeta.r", r), ("zeta.s", s), ("zeta.values", values)] {
                    for x in v.iter() {
                        finite(what, *x)?;
                    }
                }
            }
        }
        let r = &self.run;
        positive("run.epsilon", r.epsilon)?;
        positive("run.dt", r.dt)?;
        positive("run.sampling_factor", r.sampling_factor)?;
        positive("run.verify_horizon", r.verify_horizon)?;
        if r.horizons.is_empty() {
            bail!("run.horizons: at least one horizon is required");
        }
        for (i, h) in r.horizons.iter().enumerate() {
            positive(&format!("run.horizons[{i}]"), *h)?;
        }
        if r.horizons.windows(2).any(|w| w[1] <= w[0]) {
            bail!("run.horizons: must be strictly increasing");
        }
        let b = &self.bounds;
        if b.grid_res < 2 {
            bail!("bounds.grid_res: must be at least 2");
        }
        positive("bounds.safety_upper", b.safety_upper)?;
        positive("bounds.safety_lower", b.safety_lower)?;
        let s = &self.synthesis;
        positive("synthesis.fit_horizon", s.fit_horizon)?;
        positive("synthesis.stiffness_step", s.stiffness_step)?;
        positive("synthesis.dt_max", s.dt_max)?;
        positive("synthesis.gain_start", s.gain_start)?;
        positive("synthesis.attractor_horizon", s.attractor_horizon)?;
        if let Some(dt) = s.dt {
            positive("synthesis.dt", dt)?;
        }
        if s.grid_points == 0 {
            bail!("synthesis.grid_points: must be positive");
        }
        let w = &self.sweep;
        positive("sweep.min", w.min)?;
        positive("sweep.max", w.max)?;
        if w.max <= w.min || w.points < 2 {
            bail!("sweep: needs max > min and at least 2 points");
        }
        if let Some(x0) = &self.simulate.x0 {
            for (i, v) in x0.iter().enumerate() {
                finite(&format!("simulate.x0[{i}]"), *v)?;
            }
        }
        if let Some(h) = self.simulate.horizon {
            positive("simulate.horizon", h)?;
        }
        Ok(())
    }

    fn validate_system(&self) -> Result<()> {
        match &self.system {
            SystemConfig::Linear { a, b } => {
                matrix("system.a", a)?;
                matrix("system.b", b)?;
                if a.len() != a[0].len() {
                    bail!("system.a: must be square");
                }
                if b.len() != a.len() {
                    bail!("system.b: expected {} rows, found {}", a.len(), b.len());
                }
            }
            SystemConfig::Quadratic { lambda, alpha0, beta0, gamma0 } => {
                for (n, v) in [("lambda", lambda), ("alpha0", alpha0), ("beta0", beta0), ("gamma0", gamma0)] {
                    finite(&format!("system.{n}"), *v)?;
                }
                if *gamma0 == 0.0 {
                    bail!("system.gamma0: must be nonzero");
                }
            }
            SystemConfig::Cubic { lambda, alpha0, beta0, gamma0, alpha1, beta1, gamma1, eta1 } => {
                let named = [
                    ("lambda", lambda),
                    ("alpha0", alpha0),
                    ("beta0", beta0),
                    ("gamma0", gamma0),
                    ("alpha1", alpha1),
                    ("beta1", beta1),
                    ("gamma1", gamma1),
                    ("eta1", eta1),
                ];
                for (n, v) in named {
                    finite(&format!("system.{n}"), *v)?;
                }
                if *eta1 == 0.0 {
                    bail!("system.eta1: must be nonzero");
                }
            }
            SystemConfig::Chain { lambda, alpha0, beta0, gammas, k1, k2, poles } => {
                for (n, v) in [("lambda", lambda), ("alpha0", alpha0), ("beta0", beta0), ("k1", k1)] {
                    finite(&format!("system.{n}"), *v)?;
                }
                if gammas.is_empty() {
                    bail!("system.gammas: the chain needs at least one integrator");
                }
                for (i, g) in gammas.iter().enumerate() {
                    finite(&format!("system.gammas[{i}]"), *g)?;
                }
                match (k2, poles) {
                    (Some(k), None) | (None, Some(k)) => {
                        if k.len() != gammas.len() {
                            bail!("system.{}: expected {} entries", if k2.is_some() { "k2" } else { "poles" }, gammas.len());
                        }
                        for v in k {
                            finite("system.k2", *v)?;
                        }
                    }
                    _ => bail!("system: give exactly one of k2 and poles"),
                }
            }
            SystemConfig::Demo { name } => {
                if !crate::demos::names().contains(&name.as_str()) {
                    bail!("system.name: unknown demo {name:?}");
                }
            }
        }
        Ok(())
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(anyhow!("{field}: must be finite"))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(anyhow!("{field}: must be positive and finite, found {v}"))
    }
}

fn check_lengths(section: &str, lower: usize, upper: usize) -> Result<()> {
    if lower == 0 {
        bail!("{section}.lower: must not be empty");
    }
    if lower != upper {
        bail!("{section}.upper: expected {lower} entries, found {upper}");
    }
    Ok(())
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<()> {
    if rows.is_empty() || rows[0].is_empty() {
        bail!("{field}: must not be empty");
    }
    let w = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != w {
            bail!("{field}[{i}]: expected {w} columns, found {}", r.len());
        }
        for (j, v) in r.iter().enumerate() {
            finite(&format!("{field}[{i}][{j}]"), *v)?;
        }
    }
    Ok(())
}
