//! Dense row-major matrices of `f64`, rank at most 2.
//!
//! Vectors are represented as `1 x n` or `n x 1` tensors; scalars as `1 x 1`.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

/// Two operands had incompatible shapes. Carries both shapes so the message
/// names them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
pub struct ShapeError {
    pub op: &'static str,
    pub lhs: (usize, usize),
    pub rhs: (usize, usize),
}

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a tensor from row-major data.
    ///
    /// Panics if `data.len() != rows * cols` or any entry is NaN/Inf; tensors
    /// hold finite values by contract.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length mismatch");
        assert!(data.iter().all(|v| v.is_finite()), "tensor entries must be finite");
        Tensor { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_vec(rows, cols, data)
    }

    /// 1x1 tensor.
    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Value of a 1x1 tensor. Panics on any other shape.
    pub fn scalar_value(&self) -> f64 {
        assert_eq!((self.rows, self.cols), (1, 1), "not a scalar tensor");
        self.data[0]
    }

    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, ShapeError> {
        if self.cols != other.rows {
            return Err(ShapeError { op: "matmul", lhs: self.shape(), rhs: other.shape() });
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for (k, &aik) in a_row.iter().enumerate() {
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                    *o += aik * bkj;
                }
            }
        }
        Ok(Tensor { rows: self.rows, cols: other.cols, data: out })
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, ShapeError> {
        if self.shape() != other.shape() {
            return Err(ShapeError { op, lhs: self.shape(), rhs: other.shape() });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    /// Adds `other` into `self` in place.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<(), ShapeError> {
        if self.shape() != other.shape() {
            return Err(ShapeError { op: "add_assign", lhs: self.shape(), rhs: other.shape() });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, k: f64) -> Tensor {
        let data = self.data.iter().map(|&a| a * k).collect();
        Tensor { rows: self.rows, cols: self.cols, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let data = self.data.iter().map(|&a| f(a)).collect();
        Tensor { rows: self.rows, cols: self.cols, data }
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Sum of all entries.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Per-column sums: `1 x cols`, entry j is the sum over all rows of
    /// column j.
    pub fn col_sums(&self) -> Tensor {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        Tensor { rows: 1, cols: self.cols, data: out }
    }

    /// Per-row sums: `rows x 1`.
    pub fn row_sums(&self) -> Tensor {
        let data = (0..self.rows).map(|i| self.row(i).iter().sum()).collect();
        Tensor { rows: self.rows, cols: 1, data }
    }

    /// Squared Frobenius norm.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|&v| v * v).sum()
    }
}
