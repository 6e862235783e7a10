//! Batches of nodal vectors with the batch index innermost.
//!
//! Entry `(node, axis, column)` lives at `((node * 3) + axis) * batch + column`.
//! All column-wise kernels perform the same floating-point operations in the
//! same order for every column, independent of the batch width, so a column
//! computed inside a batch of 16 is bit-identical to the same column computed
//! alone.

use crate::exec::{column_reduce, for_each_chunk_mut, ExecMode, REDUCE_ROWS};
use crate::scalar::{Precision, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct VectorBatch<T> {
    data: Vec<T>,
    n_nodes: usize,
    batch: usize,
}

pub type VectorBatch64 = VectorBatch<f64>;
pub type VectorBatch32 = VectorBatch<f32>;

impl<T: Scalar> VectorBatch<T> {
    pub fn zeros(n_nodes: usize, batch: usize) -> Self {
        assert!(batch >= 1, "batch width must be at least 1");
        Self {
            data: vec![T::ZERO; 3 * n_nodes * batch],
            n_nodes,
            batch,
        }
    }

    pub fn from_raw(n_nodes: usize, batch: usize, data: Vec<T>) -> Self {
        assert!(batch >= 1, "batch width must be at least 1");
        assert_eq!(data.len(), 3 * n_nodes * batch, "raw data length mismatch");
        Self {
            data,
            n_nodes,
            batch,
        }
    }

    /// Builds a batch whose column `b` is `columns[b]` (each of length `3 * n_nodes`).
    pub fn from_columns(n_nodes: usize, columns: &[Vec<f64>]) -> Self {
        let mut out = Self::zeros(n_nodes, columns.len());
        for (b, col) in columns.iter().enumerate() {
            out.set_column(b, col);
        }
        out
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Number of scalar unknowns per column.
    pub fn n_dofs(&self) -> usize {
        3 * self.n_nodes
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, node: usize, axis: usize, col: usize) -> usize {
        (node * 3 + axis) * self.batch + col
    }

    #[inline]
    pub fn get(&self, node: usize, axis: usize, col: usize) -> T {
        self.data[self.index(node, axis, col)]
    }

    #[inline]
    pub fn set(&mut self, node: usize, axis: usize, col: usize, v: T) {
        let i = self.index(node, axis, col);
        self.data[i] = v;
    }

    /// Row of `batch` values for one dof.
    #[inline]
    pub fn dof_row(&self, dof: usize) -> &[T] {
        &self.data[dof * self.batch..(dof + 1) * self.batch]
    }

    #[inline]
    pub fn dof_row_mut(&mut self, dof: usize) -> &mut [T] {
        let b = self.batch;
        &mut self.data[dof * b..(dof + 1) * b]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_dofs())
            .map(|d| self.data[d * self.batch + col].to_f64())
            .collect()
    }

    pub fn set_column(&mut self, col: usize, values: &[f64]) {
        assert_eq!(values.len(), self.n_dofs(), "column length mismatch");
        for (d, v) in values.iter().enumerate() {
            self.data[d * self.batch + col] = T::from_f64(*v);
        }
    }

    /// Copy of a contiguous range of columns.
    pub fn columns(&self, range: std::ops::Range<usize>) -> Self {
        let mut out = Self::zeros(self.n_nodes, range.len());
        for d in 0..self.n_dofs() {
            let src = &self.data[d * self.batch + range.start..d * self.batch + range.end];
            out.dof_row_mut(d).copy_from_slice(src);
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> VectorBatch<U> {
        VectorBatch {
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            n_nodes: self.n_nodes,
            batch: self.batch,
        }
    }

    /// Overwrites `self` with `src` converted to this precision.
    pub fn assign_from<U: Scalar>(&mut self, src: &VectorBatch<U>) {
        self.check_shape(src.n_nodes, src.batch);
        for (d, s) in self.data.iter_mut().zip(&src.data) {
            *d = T::from_f64(s.to_f64());
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = T::ZERO);
    }

    pub fn same_shape<U>(&self, other: &VectorBatch<U>) -> bool {
        self.n_nodes == other.n_nodes && self.batch == other.batch
    }

    fn check_shape(&self, n_nodes: usize, batch: usize) {
        assert!(
            self.n_nodes == n_nodes && self.batch == batch,
            "batch shape mismatch: ({}, {}) vs ({}, {})",
            self.n_nodes,
            self.batch,
            n_nodes,
            batch
        );
    }

    /// Per-column squared 2-norm, accumulated in 64-bit.
    pub fn norms_sq(&self, mode: ExecMode) -> Vec<f64> {
        let b = self.batch;
        let data = &self.data;
        column_reduce(mode, self.n_dofs(), b, |rows, acc| {
            for d in rows {
                let row = &data[d * b..(d + 1) * b];
                for (a, v) in acc.iter_mut().zip(row) {
                    let v = v.to_f64();
                    *a += v * v;
                }
            }
        })
    }

    /// Per-column inner product, accumulated in 64-bit.
    pub fn dot(&self, other: &Self, mode: ExecMode) -> Vec<f64> {
        self.check_shape(other.n_nodes, other.batch);
        let b = self.batch;
        let (x, y) = (&self.data, &other.data);
        column_reduce(mode, self.n_dofs(), b, |rows, acc| {
            for d in rows {
                let xr = &x[d * b..(d + 1) * b];
                let yr = &y[d * b..(d + 1) * b];
                for ((a, u), v) in acc.iter_mut().zip(xr).zip(yr) {
                    *a += u.to_f64() * v.to_f64();
                }
            }
        })
    }

    /// `self[:, c] += alpha[c] * x[:, c]`
    pub fn axpy(&mut self, alpha: &[f64], x: &Self, mode: ExecMode) {
        self.check_shape(x.n_nodes, x.batch);
        assert_eq!(alpha.len(), self.batch);
        let b = self.batch;
        let a: Vec<T> = alpha.iter().map(|v| T::from_f64(*v)).collect();
        let xs = &x.data;
        for_each_chunk_mut(mode, &mut self.data, REDUCE_ROWS * b, |ci, chunk| {
            let base = ci * REDUCE_ROWS * b;
            for (r, row) in chunk.chunks_mut(b).enumerate() {
                let xr = &xs[base + r * b..base + (r + 1) * b];
                for ((y, xv), av) in row.iter_mut().zip(xr).zip(&a) {
                    *y += *av * *xv;
                }
            }
        });
    }

    /// `self[:, c] = x[:, c] + beta[c] * self[:, c]`
    pub fn xpby(&mut self, x: &Self, beta: &[f64], mode: ExecMode) {
        self.check_shape(x.n_nodes, x.batch);
        assert_eq!(beta.len(), self.batch);
        let b = self.batch;
        let bt: Vec<T> = beta.iter().map(|v| T::from_f64(*v)).collect();
        let xs = &x.data;
        for_each_chunk_mut(mode, &mut self.data, REDUCE_ROWS * b, |ci, chunk| {
            let base = ci * REDUCE_ROWS * b;
            for (r, row) in chunk.chunks_mut(b).enumerate() {
                let xr = &xs[base + r * b..base + (r + 1) * b];
                for ((y, xv), bv) in row.iter_mut().zip(xr).zip(&bt) {
                    *y = *xv + *bv * *y;
                }
            }
        });
    }

    /// `self = a - self`
    pub fn rsub_from(&mut self, a: &Self, mode: ExecMode) {
        self.check_shape(a.n_nodes, a.batch);
        let len = REDUCE_ROWS * self.batch;
        let xs = &a.data;
        for_each_chunk_mut(mode, &mut self.data, len, |ci, chunk| {
            let base = ci * len;
            for (i, y) in chunk.iter_mut().enumerate() {
                *y = xs[base + i] - *y;
            }
        });
    }

    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .fold(0.0f64, |m, v| m.max(v.to_f64().abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_batch_innermost() {
        let mut v = VectorBatch::<f64>::zeros(2, 4);
        v.set(1, 2, 3, 7.0);
        assert_eq!(v.as_slice()[(1 * 3 + 2) * 4 + 3], 7.0);
        assert_eq!(v.as_slice().len(), 3 * 2 * 4);
    }

    #[test]
    fn column_roundtrip_and_subset() {
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|c| (0..6).map(|i| (i * 10 + c) as f64).collect())
            .collect();
        let v = VectorBatch::<f64>::from_columns(2, &cols);
        assert_eq!(v.column(2), cols[2]);
        let sub = v.columns(1..3);
        assert_eq!(sub.batch(), 2);
        assert_eq!(sub.column(0), cols[1]);
    }

    #[test]
    fn batched_reductions_match_single_columns_bitwise() {
        let n = 3000;
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|c| (0..3 * n).map(|i| ((i * 7 + c * 13) % 101) as f64 * 0.37 - 11.0).collect())
            .collect();
        let batch = VectorBatch::<f32>::from_columns(n, &cols);
        let norms = batch.norms_sq(ExecMode::Parallel);
        for (c, col) in cols.iter().enumerate() {
            let single = VectorBatch::<f32>::from_columns(n, std::slice::from_ref(col));
            assert_eq!(single.norms_sq(ExecMode::Serial)[0].to_bits(), norms[c].to_bits());
        }
    }

    #[test]
    fn axpy_and_xpby() {
        let x = VectorBatch::<f64>::from_columns(1, &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let mut y = VectorBatch::<f64>::from_columns(1, &[vec![1.0; 3], vec![2.0; 3]]);
        y.axpy(&[2.0, -1.0], &x, ExecMode::Serial);
        assert_eq!(y.column(0), vec![3.0, 5.0, 7.0]);
        assert_eq!(y.column(1), vec![-2.0, -3.0, -4.0]);
        y.xpby(&x, &[0.5, 0.0], ExecMode::Serial);
        assert_eq!(y.column(0), vec![2.5, 4.5, 6.5]);
        assert_eq!(y.column(1), vec![4.0, 5.0, 6.0]);
    }
}
