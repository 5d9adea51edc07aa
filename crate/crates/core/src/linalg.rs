//! Max-norm helpers and small dense linear algebra.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::math;

/// An eigenvalue as a plain pair, for reports.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[inline]
pub fn max_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| f64::max(m, math::abs(*v)))
}

#[inline]
pub fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (p, q)| f64::max(m, math::abs(p - q)))
}

/// Operator norm induced by the max-norm: the largest absolute row sum.
pub fn induced_max_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| math::abs(*v)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `n` evenly spaced points on `[lo, hi]`, endpoints included. `n == 1` gives the midpoint.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![0.5 * (lo + hi)],
        _ => {
            let h = (hi - lo) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
            v[n - 1] = hi;
            v
        }
    }
}

/// Tensor grid of a box, flattened row-major with the last axis varying fastest.
pub fn box_grid(lower: &[f64], upper: &[f64], counts: &[usize]) -> Vec<f64> {
    let axes: Vec<Vec<f64>> = lower
        .iter()
        .zip(upper)
        .zip(counts)
        .map(|((l, u), n)| if l == u { alloc::vec![*l] } else { linspace(*l, *u, *n) })
        .collect();
    let d = axes.len();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total * d);
    let mut idx = alloc::vec![0usize; d];
    for _ in 0..total {
        for (a, i) in axes.iter().zip(&idx) {
            out.push(a[*i]);
        }
        for ax in (0..d).rev() {
            idx[ax] += 1;
            if idx[ax] < axes[ax].len() {
                break;
            }
            idx[ax] = 0;
        }
    }
    out
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Eigenvalue>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("eigenvalue iteration did not converge".into()))?;
    let mut eig: Vec<Eigenvalue> = schur
        .complex_eigenvalues()
        .iter()
        .map(|c| Eigenvalue { re: c.re, im: c.im })
        .collect();
    eig.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(eig)
}

/// Matrix sign function by the scaled Newton iteration `S <- (cS + (cS)^-1) / 2`.
///
/// Fails when an eigenvalue sits on the imaginary axis.
pub fn matrix_sign(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut s = m.clone();
    for _ in 0..200 {
        let inv = s
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular iterate in sign iteration".into()))?;
        // determinant scaling speeds up the early iterations
        let det = s.determinant();
        let c = if det.is_finite() && det != 0.0 {
            libm::pow(math::abs(det), -1.0 / n as f64)
        } else {
            1.0
        };
        let next = (&s * c + &inv / c) * 0.5;
        let diff = induced_max_norm(&(&next - &s));
        s = next;
        if !s.iter().all(|v| v.is_finite()) {
            break;
        }
        if diff <= 1e-12 * induced_max_norm(&s) {
            // polish without scaling
            for _ in 0..3 {
                let inv = s.clone().try_inverse().ok_or_else(|| Error::Numeric("singular iterate".into()))?;
                s = (&s + inv) * 0.5;
            }
            return Ok(s);
        }
    }
    Err(Error::Numeric(format!("sign iteration did not converge for a {n}x{n} matrix")))
}
