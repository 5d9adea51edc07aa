//! Upper and lower bounds on practical stabilization entropy.
//!
//! Grid scans run over a box of states times the (bounded) control box, with
//! `grid_res` points per axis. Lipschitz and divergence bounds are widened by
//! safety factors to absorb grid under-sampling.

use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::dynamics::{ControlSystem, KlFunction, Region};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Eigenvalue};
use crate::math;

/// Eigenvalues closer than this to `-alpha` are flagged as ambiguous.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundOptions {
    pub grid_res: usize,
    pub safety_upper: f64,
    pub safety_lower: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self { grid_res: 21, safety_upper: 1.05, safety_lower: 1.05 }
    }
}

impl BoundOptions {
    fn validate(&self) -> Result<()> {
        if self.grid_res < 2 || !(self.safety_upper >= 1.0) || !(self.safety_lower >= 1.0) {
            return Err(invalid("bound scans need grid_res >= 2 and safety factors >= 1"));
        }
        Ok(())
    }
}

/// The set `{x : d(x, L) <= zeta(kappa + eps, 0) + eps}` with `kappa = max_{y in G} d(y, L)`.
pub fn compute_p_eps(gamma: &Region, target: &Region, zeta: &KlFunction, eps: f64) -> Region {
    let kappa = gamma.max_dist_to(target);
    target.inflated(zeta.eval(kappa + eps, 0.0) + eps)
}

fn scan<S, F>(system: &S, states: &Region, res: usize, init: f64, mut pick: F) -> Result<f64>
where
    S: ControlSystem + ?Sized,
    F: FnMut(f64, &[f64], &[f64]) -> f64,
{
    let d = system.state_dim();
    if states.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: states.dim() });
    }
    let xs = states.grid(&alloc::vec![res; d])?;
    let us = system.control_range().grid(res)?;
    let m = system.control_dim();
    let mut acc = init;
    for x in xs.iter() {
        for u in us.chunks_exact(m) {
            acc = pick(acc, x, u);
        }
    }
    Ok(acc)
}

fn max_jacobian_norm<S: ControlSystem + ?Sized>(system: &S, states: &Region, res: usize) -> Result<f64> {
    scan(system, states, res, 0.0, |acc, x, u| acc.max(linalg::induced_max_norm(&system.jacobian(x, u))))
}

fn min_divergence<S: ControlSystem + ?Sized>(system: &S, states: &Region, res: usize) -> Result<f64> {
    scan(system, states, res, f64::INFINITY, |acc, x, u| acc.min(system.divergence(x, u)))
}

/// `safety * L_eps * d`, with `L_eps` the largest `|f_x|` over `P_eps x U`.
pub fn lipschitz_upper_bound<S: ControlSystem + ?Sized>(
    system: &S,
    gamma: &Region,
    target: &Region,
    zeta: &KlFunction,
    eps: f64,
    opts: &BoundOptions,
) -> Result<f64> {
    opts.validate()?;
    let p = compute_p_eps(gamma, target, zeta, eps);
    let l = max_jacobian_norm(system, &p, opts.grid_res)?;
    Ok(opts.safety_upper * l * system.state_dim() as f64)
}

/// `(safety * L + alpha) * d`, with `L` taken over `{d(x, L) <= M kappa}`.
pub fn exponential_upper_bound<S: ControlSystem + ?Sized>(
    system: &S,
    gamma: &Region,
    target: &Region,
    alpha: f64,
    m: f64,
    opts: &BoundOptions,
) -> Result<f64> {
    opts.validate()?;
    let p = target.inflated(m * gamma.max_dist_to(target));
    let l = max_jacobian_norm(system, &p, opts.grid_res)?;
    Ok((opts.safety_upper * l + alpha) * system.state_dim() as f64)
}

/// Smallest `tr f_x` over the closed `eps`-neighbourhood of the target times `U`,
/// lowered by the safety factor.
pub fn divergence_lower_bound<S: ControlSystem + ?Sized>(
    system: &S,
    target: &Region,
    eps: f64,
    opts: &BoundOptions,
) -> Result<f64> {
    opts.validate()?;
    let v = min_divergence(system, &target.inflated(eps), opts.grid_res)?;
    Ok(v - (opts.safety_lower - 1.0) * math::abs(v))
}

/// `alpha d + min tr f_x` over the `eps`-neighbourhood of the target, minus the
/// system's truncation slack. No safety factor is applied.
pub fn exponential_lower_bound<S: ControlSystem + ?Sized>(
    system: &S,
    target: &Region,
    alpha: f64,
    eps: f64,
    opts: &BoundOptions,
) -> Result<f64> {
    opts.validate()?;
    let v = min_divergence(system, &target.inflated(eps), opts.grid_res)?;
    Ok(alpha * system.state_dim() as f64 + v - system.truncation_slack(eps))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralEntropy {
    /// `sum over Re(lambda) > -alpha of (alpha + Re(lambda))`.
    pub value: f64,
    pub eigenvalues: Vec<Eigenvalue>,
    /// Eigenvalues within [`BOUNDARY_TOL`] of `Re = -alpha`.
    pub ambiguous: Vec<Eigenvalue>,
}

fn check_alpha(a: &DMatrix<f64>, alpha: f64) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    Ok(())
}

/// Exact entropy of a stabilizable linear system with exponential envelope.
pub fn linear_spectral_entropy(a: &DMatrix<f64>, alpha: f64) -> Result<SpectralEntropy> {
    check_alpha(a, alpha)?;
    let eigenvalues = linalg::eigenvalues(a)?;
    let value = eigenvalues.iter().filter(|e| e.re > -alpha).map(|e| alpha + e.re).sum();
    let ambiguous = eigenvalues.iter().filter(|e| math::abs(e.re + alpha) <= BOUNDARY_TOL).copied().collect();
    Ok(SpectralEntropy { value, eigenvalues, ambiguous })
}

/// `sum over Re(lambda) > -alpha of Re(lambda)`.
pub fn topological_entropy_linear(a: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    check_alpha(a, alpha)?;
    Ok(linalg::eigenvalues(a)?.iter().filter(|e| e.re > -alpha).map(|e| e.re).sum())
}

/// `alpha d' + tr(A P)` where `P` is the spectral projector onto the part of the
/// spectrum right of `-alpha`, computed from the matrix sign of `A + alpha I`.
pub fn projected_exponential_lower_bound(a: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    check_alpha(a, alpha)?;
    let n = a.nrows();
    let shifted = a + DMatrix::identity(n, n) * alpha;
    let sign = linalg::matrix_sign(&shifted)?;
    let p = (DMatrix::identity(n, n) + sign) * 0.5;
    Ok(alpha * p.trace() + (a * &p).trace())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundMeta {
    pub epsilon: f64,
    pub zeta: KlFunction,
    pub gamma: Region,
    pub target: Region,
    pub options: BoundOptions,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundReport {
    pub lower_general: f64,
    pub lower_exponential: Option<f64>,
    pub upper_lipschitz: f64,
    pub upper_exponential: Option<f64>,
    pub spectral_exact: Option<f64>,
    pub metadata: BoundMeta,
}

/// Every applicable bound for one configuration.
pub fn bound_report<S: ControlSystem + ?Sized>(
    system: &S,
    gamma: &Region,
    target: &Region,
    zeta: &KlFunction,
    eps: f64,
    opts: &BoundOptions,
) -> Result<BoundReport> {
    let lower_general = divergence_lower_bound(system, target, eps, opts)?;
    let upper_lipschitz = lipschitz_upper_bound(system, gamma, target, zeta, eps, opts)?;
    let (lower_exponential, upper_exponential, spectral_exact) = match zeta {
        KlFunction::Exponential { alpha, m } => {
            let upper = exponential_upper_bound(system, gamma, target, *alpha, *m, opts)?;
            match system.linear_part() {
                Some((a, _)) => {
                    let lower = projected_exponential_lower_bound(a, *alpha)
                        .or_else(|_| exponential_lower_bound(system, target, *alpha, eps, opts))?;
                    (Some(lower), Some(upper), Some(linear_spectral_entropy(a, *alpha)?.value))
                }
                None => (Some(exponential_lower_bound(system, target, *alpha, eps, opts)?), Some(upper), None),
            }
        }
        KlFunction::Tabulated(_) => (None, None, None),
    };
    Ok(BoundReport {
        lower_general,
        lower_exponential,
        upper_lipschitz,
        upper_exponential,
        spectral_exact,
        metadata: BoundMeta { epsilon: eps, zeta: zeta.clone(), gamma: gamma.clone(), target: target.clone(), options: *opts },
    })
}
