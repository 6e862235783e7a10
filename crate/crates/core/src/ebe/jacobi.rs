use nalgebra::Matrix3;

use super::{check_dims, BlockCsr, EbeError, EbeOperator, LinearOperator};
use crate::batch::VectorBatch;
use crate::exec::{for_each_chunk_mut, ExecMode};
use crate::scalar::Scalar;

const NODE_CHUNK: usize = 512;

/// Inverted nodal 3x3 diagonal blocks; applying it computes `z = M⁻¹ r`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockJacobi<T> {
    inv: Vec<[T; 9]>,
    mode: ExecMode,
}

impl<T: Scalar> BlockJacobi<T> {
    /// Inverts the given row-major blocks in 64-bit.
    pub fn from_blocks(blocks: &[[f64; 9]]) -> Result<Self, EbeError> {
        let mut inv = Vec::with_capacity(blocks.len());
        for (node, b) in blocks.iter().enumerate() {
            let m = Matrix3::from_row_slice(b);
            // for SPD blocks 0 < det ≤ d₀d₁d₂
            let diag = (m[(0, 0)] * m[(1, 1)] * m[(2, 2)]).abs();
            let scale = if diag > 0.0 { diag } else { m.amax().powi(3) };
            let det = m.determinant();
            if !(scale > 0.0) || !(det.abs() > 1e-12 * scale) {
                return Err(EbeError::SingularBlock { node });
            }
            let mi = m.try_inverse().ok_or(EbeError::SingularBlock { node })?;
            inv.push(std::array::from_fn(|k| T::from_f64(mi[(k / 3, k % 3)])));
        }
        Ok(Self {
            inv,
            mode: ExecMode::default(),
        })
    }

    pub fn from_ebe(op: &EbeOperator) -> Result<Self, EbeError> {
        Ok(Self::from_blocks(&op.diagonal_blocks())?.with_mode(op.mode()))
    }

    pub fn from_bcsr<U: Scalar>(a: &BlockCsr<U>) -> Result<Self, EbeError> {
        Self::from_blocks(&a.diagonal_blocks())
    }

    pub fn with_mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn set_mode(&mut self, mode: ExecMode) {
        self.mode = mode;
    }

    pub fn n_nodes(&self) -> usize {
        self.inv.len()
    }

    pub fn inverse_block(&self, node: usize) -> &[T; 9] {
        &self.inv[node]
    }
}

impl<T: Scalar> LinearOperator<T> for BlockJacobi<T> {
    fn n_nodes(&self) -> usize {
        self.inv.len()
    }

    fn apply_into(&self, r: &VectorBatch<T>, z: &mut VectorBatch<T>) -> Result<(), EbeError> {
        check_dims(self.inv.len(), r, z)?;
        let b = r.batch();
        let rs = r.as_slice();
        for_each_chunk_mut(self.mode, z.as_mut_slice(), NODE_CHUNK * 3 * b, |ci, chunk| {
            let n0 = ci * NODE_CHUNK;
            for (k, zn) in chunk.chunks_mut(3 * b).enumerate() {
                let node = n0 + k;
                let m = &self.inv[node];
                let rn = &rs[3 * node * b..3 * (node + 1) * b];
                for a in 0..3 {
                    let (m0, m1, m2) = (m[3 * a], m[3 * a + 1], m[3 * a + 2]);
                    for c in 0..b {
                        zn[a * b + c] = m0 * rn[c] + m1 * rn[b + c] + m2 * rn[2 * b + c];
                    }
                }
            }
        });
        Ok(())
    }
}
