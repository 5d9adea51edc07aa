use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg;

/// A compact set given as a point or an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Region {
    Point { x: Vec<f64> },
    Cuboid { lower: Vec<f64>, upper: Vec<f64> },
}

impl Region {
    #[inline]
    pub fn point(x: Vec<f64>) -> Self {
        Self::Point { x }
    }

    pub fn cuboid(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !l.is_finite() || !u.is_finite() || l > u) {
            return Err(invalid("box needs finite bounds with lower <= upper"));
        }
        Ok(Self::Cuboid { lower, upper })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower().len()
    }

    #[inline]
    pub fn lower(&self) -> &[f64] {
        match self {
            Self::Point { x } => x,
            Self::Cuboid { lower, .. } => lower,
        }
    }

    #[inline]
    pub fn upper(&self) -> &[f64] {
        match self {
            Self::Point { x } => x,
            Self::Cuboid { upper, .. } => upper,
        }
    }

    /// Max-norm distance from `x` to the set.
    #[inline]
    pub fn dist(&self, x: &[f64]) -> f64 {
        let mut d: f64 = 0.0;
        for ((v, l), u) in x.iter().zip(self.lower()).zip(self.upper()) {
            d = d.max(l - v).max(v - u);
        }
        d
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.dist(x) <= 0.0
    }

    /// The closed `r`-neighbourhood, which is again a box in the max-norm.
    pub fn inflated(&self, r: f64) -> Self {
        Self::Cuboid {
            lower: self.lower().iter().map(|v| v - r).collect(),
            upper: self.upper().iter().map(|v| v + r).collect(),
        }
    }

    /// `max_{y in self} dist(y, other)`.
    pub fn max_dist_to(&self, other: &Region) -> f64 {
        let mut k: f64 = 0.0;
        for i in 0..self.dim() {
            k = k.max(other.lower()[i] - self.lower()[i]).max(self.upper()[i] - other.upper()[i]);
        }
        k
    }

    /// Tensor grid with `counts[i]` points on axis `i` (degenerate axes get one).
    pub fn grid(&self, counts: &[usize]) -> Result<Grid> {
        if counts.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: counts.len() });
        }
        if counts.contains(&0) {
            return Err(invalid("grid counts must be positive"));
        }
        Grid::new(self.dim(), linalg::box_grid(self.lower(), self.upper(), counts))
    }
}

/// A finite set of points, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    points: Vec<f64>,
}

impl Grid {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) || points.is_empty() {
            return Err(invalid("grid needs a positive number of points of the given dimension"));
        }
        Ok(Self { dim, points })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// The subset of points for which `keep` holds.
    pub fn filtered(&self, mut keep: impl FnMut(&[f64]) -> bool) -> Option<Self> {
        let points: Vec<f64> = self.iter().filter(|p| keep(p)).flatten().copied().collect();
        Self::new(self.dim, points).ok()
    }
}
