use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use super::{check_dims, EbeError, EbeOperator, LinearOperator};
use crate::batch::VectorBatch;
use crate::exec::{for_each_chunk_mut_init, ExecMode};
use crate::scalar::Scalar;

/// Block rows per parallel work unit.
const ROW_CHUNK: usize = 256;

/// Sparse matrix of 3x3 blocks in compressed-row layout.
///
/// Blocks are row-major: entry `(a, b)` of block `k` is `blocks[k][3 * a + b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCsr<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    blocks: Vec<[T; 9]>,
    mode: ExecMode,
}

impl<T: Scalar> BlockCsr<T> {
    /// Validates that column indices are in range and strictly increasing per row.
    pub fn new(n: usize, row_ptr: Vec<usize>, col_idx: Vec<u32>, blocks: Vec<[T; 9]>) -> Result<Self, String> {
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return Err("row pointer array inconsistent with block count".into());
        }
        if blocks.len() != col_idx.len() {
            return Err("one block per column index required".into());
        }
        for i in 0..n {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(format!("row pointer decreases at row {i}"));
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c as usize >= n) {
                return Err(format!("row {i}: column indices must be strictly increasing and < {n}"));
            }
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            blocks,
            mode: ExecMode::default(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut eye = [T::ZERO; 9];
        eye[0] = T::ONE;
        eye[4] = T::ONE;
        eye[8] = T::ONE;
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            blocks: vec![eye; n],
            mode: ExecMode::default(),
        }
    }

    /// Block matrix from a dense `3n x 3n` matrix, keeping blocks that are not all zero
    /// plus every diagonal block.
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        assert!(a.is_square() && a.nrows() % 3 == 0);
        let n = a.nrows() / 3;
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut blocks = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let blk: [f64; 9] = std::array::from_fn(|k| a[(3 * i + k / 3, 3 * j + k % 3)]);
                if i == j || blk.iter().any(|v| *v != 0.0) {
                    col_idx.push(j as u32);
                    blocks.push(blk.map(T::from_f64));
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            blocks,
            mode: ExecMode::default(),
        }
    }

    pub fn with_mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn set_mode(&mut self, mode: ExecMode) {
        self.mode = mode;
    }

    pub fn n_block_rows(&self) -> usize {
        self.n
    }

    pub fn nnz_blocks(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn blocks(&self) -> &[[T; 9]] {
        &self.blocks
    }

    /// Block columns of row `i` with their blocks.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, &[T; 9])> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .map(|&c| c as usize)
            .zip(&self.blocks[r])
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&[T; 9]> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .binary_search(&(j as u32))
            .ok()
            .map(|k| &self.blocks[r.start + k])
    }

    pub fn diagonal_blocks(&self) -> Vec<[f64; 9]> {
        (0..self.n)
            .map(|i| {
                self.block(i, i)
                    .map(|b| b.map(|v| v.to_f64()))
                    .unwrap_or([0.0; 9])
            })
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> BlockCsr<U> {
        BlockCsr {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| b.map(|v| U::from_f64(v.to_f64())))
                .collect(),
            mode: self.mode,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(3 * self.n, 3 * self.n);
        for i in 0..self.n {
            for (j, b) in self.row(i) {
                for k in 0..9 {
                    a[(3 * i + k / 3, 3 * j + k % 3)] = b[k].to_f64();
                }
            }
        }
        a
    }

    /// Writes the scalar entries in MatrixMarket coordinate format (1-based).
    pub fn write_matrix_market(&self, path: &Path) -> std::io::Result<()> {
        crate::io::write_atomic(path, |w| {
            writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
            writeln!(w, "{} {} {}", 3 * self.n, 3 * self.n, 9 * self.nnz_blocks())?;
            for i in 0..self.n {
                for (j, b) in self.row(i) {
                    for k in 0..9 {
                        writeln!(w, "{} {} {:?}", 3 * i + k / 3 + 1, 3 * j + k % 3 + 1, b[k].to_f64())?;
                    }
                }
            }
            Ok(())
        })
    }
}

impl BlockCsr<f64> {
    /// Explicit matrix of an EBE operator, built from Voigt element matrices.
    ///
    /// Masked rows and columns are zeroed and masked diagonal entries set to one,
    /// so the result reproduces the operator's action on every vector.
    pub fn assemble(op: &EbeOperator) -> Result<Self, EbeError> {
        let mesh = op.mesh();
        let order = match op.order() {
            super::ElementOrder::Linear => 1,
            super::ElementOrder::Quadratic => 2,
        };
        let adj = mesh.node_adjacency(order);
        let n = adj.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for row in &adj {
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let mut blocks = vec![[0.0f64; 9]; col_idx.len()];
        let mask = op.mask();
        for e in 0..mesh.element_count() {
            let k = op.element_matrix(e)?;
            let nodes = op.element_nodes(e);
            for (a, &na) in nodes.iter().enumerate() {
                let r = row_ptr[na as usize]..row_ptr[na as usize + 1];
                for (b, &nb) in nodes.iter().enumerate() {
                    let pos = r.start + col_idx[r.clone()].binary_search(&nb).expect("adjacency covers element");
                    let blk = &mut blocks[pos];
                    for i in 0..3 {
                        for j in 0..3 {
                            blk[3 * i + j] += k[(3 * a + i, 3 * b + j)];
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for p in row_ptr[i]..row_ptr[i + 1] {
                let j = col_idx[p] as usize;
                for a in 0..3 {
                    for b in 0..3 {
                        if mask.is_masked(i, a) || mask.is_masked(j, b) {
                            blocks[p][3 * a + b] = if i == j && a == b { 1.0 } else { 0.0 };
                        }
                    }
                }
            }
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            blocks,
            mode: op.mode(),
        })
    }
}

impl<T: Scalar> LinearOperator<T> for BlockCsr<T> {
    fn n_nodes(&self) -> usize {
        self.n
    }

    fn apply_into(&self, u: &VectorBatch<T>, out: &mut VectorBatch<T>) -> Result<(), EbeError> {
        check_dims(self.n, u, out)?;
        let b = u.batch();
        let us = u.as_slice();
        for_each_chunk_mut_init(
            self.mode,
            out.as_mut_slice(),
            ROW_CHUNK * 3 * b,
            || vec![0.0f64; 3 * b],
            |acc, ci, chunk| {
                let row0 = ci * ROW_CHUNK;
                for (r, orow) in chunk.chunks_mut(3 * b).enumerate() {
                    let i = row0 + r;
                    acc.fill(0.0);
                    for (j, blk) in self.row(i) {
                        for a in 0..3 {
                            let arow = &mut acc[a * b..(a + 1) * b];
                            for c in 0..3 {
                                let m = blk[3 * a + c].to_f64();
                                let x = &us[(3 * j + c) * b..(3 * j + c + 1) * b];
                                for (y, xv) in arow.iter_mut().zip(x) {
                                    *y += m * xv.to_f64();
                                }
                            }
                        }
                    }
                    for (o, v) in orow.iter_mut().zip(acc.iter()) {
                        *o = T::from_f64(*v);
                    }
                }
            },
        );
        Ok(())
    }
}
