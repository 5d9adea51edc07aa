use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math;

/// A class-KL envelope `zeta(r, s)`: increasing in `r`, decaying in `s`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum KlFunction {
    /// `zeta(r, s) = M r exp(-alpha s)`.
    Exponential { alpha: f64, m: f64 },
    Tabulated(KlTable),
}

impl KlFunction {
    pub fn exponential(alpha: f64, m: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid("decay rate alpha must be positive"));
        }
        if !(m >= 1.0) || !m.is_finite() {
            return Err(invalid("overshoot constant M must be at least 1"));
        }
        Ok(Self::Exponential { alpha, m })
    }

    #[inline]
    pub fn eval(&self, r: f64, s: f64) -> f64 {
        match self {
            Self::Exponential { alpha, m } => m * r * math::exp(-alpha * s),
            Self::Tabulated(t) => t.eval(r, s),
        }
    }

    /// `c * zeta`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            Self::Exponential { alpha, m } => Self::Exponential { alpha: *alpha, m: m * c },
            Self::Tabulated(t) => Self::Tabulated(KlTable {
                r: t.r.clone(),
                s: t.s.clone(),
                values: t.values.iter().map(|v| v * c).collect(),
            }),
        }
    }

    /// Decay rate for exponential envelopes.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            Self::Exponential { alpha, .. } => Some(*alpha),
            Self::Tabulated(_) => None,
        }
    }
}

/// Values on a rectangular `(r, s)` grid, interpolated bilinearly.
///
/// Beyond the last `r` node the last segment is extended linearly; beyond the
/// last `s` node the last column is held.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KlTable {
    r: Vec<f64>,
    s: Vec<f64>,
    /// Row-major, one row per `r` node.
    values: Vec<f64>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl KlTable {
    pub fn new(r: Vec<f64>, s: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if r.len() < 2 || s.len() < 2 || values.len() != r.len() * s.len() {
            return Err(invalid("KL table needs at least 2x2 nodes and one value per node"));
        }
        if r[0] != 0.0 || s[0] != 0.0 || !strictly_increasing(&r) || !strictly_increasing(&s) {
            return Err(invalid("KL table grids must start at 0 and increase strictly"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("KL table values must be finite"));
        }
        let ns = s.len();
        let at = |i: usize, j: usize| values[i * ns + j];
        for j in 0..ns {
            if at(0, j) != 0.0 {
                return Err(invalid("KL table must vanish at r = 0"));
            }
            if (1..r.len()).any(|i| at(i, j) <= at(i - 1, j)) {
                return Err(invalid("KL table must increase strictly in r"));
            }
        }
        for i in 1..r.len() {
            if (1..ns).any(|j| at(i, j) >= at(i, j - 1)) {
                return Err(invalid("KL table must decrease strictly in s"));
            }
        }
        Ok(Self { r, s, values })
    }

    fn segment(grid: &[f64], x: f64) -> (usize, f64) {
        let last = grid.len() - 2;
        let i = grid[1..].iter().position(|g| x < *g).unwrap_or(last + 1).min(last);
        (i, (x - grid[i]) / (grid[i + 1] - grid[i]))
    }

    #[inline]
    pub fn eval(&self, r: f64, s: f64) -> f64 {
        let r = r.max(0.0);
        let s = s.max(0.0).min(self.s[self.s.len() - 1]);
        let (i, a) = Self::segment(&self.r, r);
        let (j, b) = Self::segment(&self.s, s);
        let ns = self.s.len();
        let v = |i: usize, j: usize| self.values[i * ns + j];
        let lo = v(i, j) + b * (v(i, j + 1) - v(i, j));
        let hi = v(i + 1, j) + b * (v(i + 1, j + 1) - v(i + 1, j));
        lo + a * (hi - lo)
    }
}
