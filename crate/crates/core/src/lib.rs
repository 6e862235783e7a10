//! Mixed-precision multigrid conjugate-gradient solver for quadratic
//! tetrahedral elasticity with batched right-hand sides, split-node fault
//! sources, Green's-function banks and regularized slip inversion.

pub mod batch;
pub mod ebe;
pub mod elasticity;
pub mod exec;
pub mod fault;
pub mod inversion;
pub mod io;
pub mod mesh;
pub mod multigrid;
pub mod scalar;
pub mod solver;

pub use batch::{VectorBatch, VectorBatch32, VectorBatch64};
pub use exec::ExecMode;
pub use scalar::{Precision, Scalar};
