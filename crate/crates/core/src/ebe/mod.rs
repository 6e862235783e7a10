//! Element-by-element operators, block-CSR matrices and 3x3 block Jacobi.

mod bcsr;
mod jacobi;
mod operator;

use thiserror::Error;

use crate::batch::VectorBatch;
use crate::elasticity::ElasticityError;
use crate::scalar::Scalar;

pub use bcsr::BlockCsr;
pub use jacobi::BlockJacobi;
pub use operator::{ElementOrder, EbeOperator};

#[derive(Debug, Error)]
pub enum EbeError {
    #[error("dimension mismatch: operator has {expected} nodes, vector has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("batch width mismatch: {a} vs {b}")]
    BatchMismatch { a: usize, b: usize },
    #[error("no material for id {id} ({available} materials given)")]
    MissingMaterial { id: u32, available: usize },
    #[error("singular diagonal block at node {node}")]
    SingularBlock { node: usize },
    #[error("mask covers {found} nodes, operator has {expected}")]
    MaskMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Elasticity(#[from] ElasticityError),
}

/// A square operator on nodal vector batches.
pub trait LinearOperator<T: Scalar>: Sync {
    fn n_nodes(&self) -> usize;

    /// `out = A u` for every column.
    fn apply_into(&self, u: &VectorBatch<T>, out: &mut VectorBatch<T>) -> Result<(), EbeError>;

    fn apply(&self, u: &VectorBatch<T>) -> Result<VectorBatch<T>, EbeError> {
        let mut out = VectorBatch::zeros(u.n_nodes(), u.batch());
        self.apply_into(u, &mut out)?;
        Ok(out)
    }
}

pub(crate) fn check_dims<T: Scalar>(n: usize, u: &VectorBatch<T>, out: &VectorBatch<T>) -> Result<(), EbeError> {
    for v in [u.n_nodes(), out.n_nodes()] {
        if v != n {
            return Err(EbeError::DimensionMismatch { expected: n, found: v });
        }
    }
    if u.batch() != out.batch() {
        return Err(EbeError::BatchMismatch {
            a: u.batch(),
            b: out.batch(),
        });
    }
    Ok(())
}
