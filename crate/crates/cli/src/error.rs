use crustfem::ebe::EbeError;
use crustfem::fault::FaultError;
use crustfem::inversion::InversionError;
use crustfem::mesh::MeshError;
use crustfem::multigrid::MultigridError;
use crustfem::solver::SolverError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    Internal(String),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) | CliError::Config(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Internal(_) | CliError::VerifyFailed(_) => 4,
        }
    }

    /// Failure while writing outputs.
    pub fn write(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Internal(format!("writing {}: {e}", path.display()))
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<EbeError> for CliError {
    fn from(e: EbeError) -> Self {
        match e {
            EbeError::MissingMaterial { .. } | EbeError::Elasticity(_) => CliError::Invalid(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<MultigridError> for CliError {
    fn from(e: MultigridError) -> Self {
        match e {
            MultigridError::TargetSize(_) => CliError::Invalid(e.to_string()),
            MultigridError::Ebe(e) => e.into(),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidConfig(_) => CliError::Invalid(e.to_string()),
            SolverError::NotConverged(_) => CliError::NotConverged(e.to_string()),
            SolverError::Ebe(e) => e.into(),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<FaultError> for CliError {
    fn from(e: FaultError) -> Self {
        match e {
            FaultError::Solver(e) => e.into(),
            FaultError::Ebe(e) => e.into(),
            FaultError::Io(_) => CliError::Internal(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<InversionError> for CliError {
    fn from(e: InversionError) -> Self {
        match e {
            InversionError::Singular { .. } | InversionError::DegenerateCurve | InversionError::Io(_) => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::Invalid(e.to_string()),
        }
    }
}
