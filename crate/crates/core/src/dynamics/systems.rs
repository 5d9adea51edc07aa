use alloc::vec::Vec;
use nalgebra::DMatrix;

use super::{ControlRange, ControlSystem};
use crate::error::{invalid, Error, Result};

/// `x' = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    // row-major copies for the integration loop
    a_rows: Vec<f64>,
    b_rows: Vec<f64>,
    range: ControlRange,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, range: ControlRange) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(invalid("A must be square and non-empty"));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.nrows() });
        }
        if range.dim() != b.ncols() {
            return Err(Error::DimensionMismatch { expected: b.ncols(), got: range.dim() });
        }
        let a_rows = a.transpose().as_slice().to_vec();
        let b_rows = b.transpose().as_slice().to_vec();
        Ok(Self { a, b, a_rows, b_rows, range })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

impl ControlSystem for LinearSystem {
    #[inline]
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    #[inline]
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    #[inline]
    fn field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let (n, m) = (x.len(), u.len());
        if n == 1 && m == 1 {
            dx[0] = self.a_rows[0] * x[0] + self.b_rows[0] * u[0];
            return;
        }
        for (i, out) in dx.iter_mut().enumerate() {
            let ar = &self.a_rows[i * n..(i + 1) * n];
            let br = &self.b_rows[i * m..(i + 1) * m];
            *out = ar.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + br.iter().zip(u).map(|(p, q)| p * q).sum::<f64>();
        }
    }

    fn jacobian(&self, _x: &[f64], _u: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }

    fn control_range(&self) -> &ControlRange {
        &self.range
    }

    fn linear_part(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        Some((&self.a, &self.b))
    }

    #[inline]
    fn divergence(&self, _x: &[f64], _u: &[f64]) -> f64 {
        self.a.trace()
    }
}

/// A system given by closures for the field and its state Jacobian.
pub struct FnSystem<F, J> {
    n: usize,
    m: usize,
    range: ControlRange,
    field: F,
    jacobian: J,
}

impl<F, J> FnSystem<F, J>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Sync,
    J: Fn(&[f64], &[f64]) -> DMatrix<f64> + Sync,
{
    pub fn new(n: usize, range: ControlRange, field: F, jacobian: J) -> Self {
        Self { n, m: range.dim(), range, field, jacobian }
    }
}

impl<F, J> ControlSystem for FnSystem<F, J>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Sync,
    J: Fn(&[f64], &[f64]) -> DMatrix<f64> + Sync,
{
    #[inline]
    fn state_dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn control_dim(&self) -> usize {
        self.m
    }

    #[inline]
    fn field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        (self.field)(x, u, dx)
    }

    fn jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        (self.jacobian)(x, u)
    }

    fn control_range(&self) -> &ControlRange {
        &self.range
    }
}
