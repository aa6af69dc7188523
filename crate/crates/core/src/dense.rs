//! Row-major dense matrices and the handful of dense kernels the model needs.

use rayon::prelude::*;

use crate::error::{invalid_arg, Result};

/// Rows below this count are processed on the calling thread.
const PAR_MIN_ROWS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn filled(n_rows: usize, n_cols: usize, value: f64) -> Self {
        DenseMatrix {
            n_rows,
            n_cols,
            data: vec![value; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(invalid_arg!(
                "dense data has {} values, expected {}x{}",
                data.len(),
                n_rows,
                n_cols
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid_arg!(
                "non-finite entry at row {} col {}",
                pos / n_cols.max(1),
                pos % n_cols.max(1)
            ));
        }
        Ok(DenseMatrix {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(invalid_arg!("ragged rows"));
        }
        Self::from_vec(rows.len(), n_cols, rows.concat())
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in 0..n_rows {
            for c in 0..n_cols {
                data.push(f(r, c));
            }
        }
        DenseMatrix {
            n_rows,
            n_cols,
            data,
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n_cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &DenseMatrix) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for r in 0..self.n_rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        out
    }

    /// `self · other`, with `other` of shape `n_cols × p`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(invalid_arg!(
                "matmul: {}x{} times {}x{}",
                self.n_rows,
                self.n_cols,
                other.n_rows,
                other.n_cols
            ));
        }
        let p = other.n_cols;
        let mut out = DenseMatrix::zeros(self.n_rows, p);
        if p == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(p)
            .with_min_len(PAR_MIN_ROWS)
            .enumerate()
            .for_each(|(r, out_row)| {
                for (k, &a) in self.row(r).iter().enumerate() {
                    for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                        *o += a * b;
                    }
                }
            });
        Ok(out)
    }

    /// `self · otherᵀ`, with `other` of shape `p × n_cols`.
    pub fn matmul_transposed(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != other.n_cols {
            return Err(invalid_arg!(
                "matmul_transposed: {}x{} times ({}x{})^T",
                self.n_rows,
                self.n_cols,
                other.n_rows,
                other.n_cols
            ));
        }
        let p = other.n_rows;
        let mut out = DenseMatrix::zeros(self.n_rows, p);
        if p == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(p)
            .with_min_len(PAR_MIN_ROWS)
            .enumerate()
            .for_each(|(r, out_row)| {
                let x = self.row(r);
                for (j, o) in out_row.iter_mut().enumerate() {
                    *o = dot(x, other.row(j));
                }
            });
        Ok(out)
    }

    /// `selfᵀ · other`, both with the same row count. Sequential so the row
    /// reduction order is fixed.
    pub fn transpose_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_rows != other.n_rows {
            return Err(invalid_arg!(
                "transpose_matmul: ({}x{})^T times {}x{}",
                self.n_rows,
                self.n_cols,
                other.n_rows,
                other.n_cols
            ));
        }
        let mut out = DenseMatrix::zeros(self.n_cols, other.n_cols);
        for r in 0..self.n_rows {
            let b = other.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, bv) in out.row_mut(i).iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Ok(out)
    }

    /// Per-row dot products `out[r] = <self[r,·], other[r,·]>`.
    pub fn row_dots(&self, other: &DenseMatrix) -> Vec<f64> {
        assert_eq!(self.shape(), other.shape(), "row_dots shape mismatch");
        (0..self.n_rows)
            .map(|r| dot(self.row(r), other.row(r)))
            .collect()
    }

    /// Lossy conversion for export.
    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
