use thiserror::Error;

use crate::solver::BoundaryTag;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("matrix is not symmetric: |a_{row}{col} - a_{col}{row}| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("matrix is not positive definite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point {point:?} lies outside the region of validity")]
    OutsideDomain { point: Vec<f64> },

    #[error("mesh too coarse: {triangles} triangles (at least 50 required)")]
    MeshTooCoarse { triangles: usize },

    #[error("boundary data violates compatibility: total flux {total:e} (must vanish within 1e-8)")]
    Compatibility { total: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("linear solve did not reach tolerance: relative residual {residual:e}")]
    NonConvergence { residual: f64 },

    #[error("mesh has no boundary edges tagged {0:?}")]
    MissingBoundary(BoundaryTag),

    #[error("flat-boundary structure violated: max |a_id| = {max_offdiag:e}, max |eta| = {max_eta:e}")]
    StructureViolation { max_offdiag: f64, max_eta: f64 },

    #[error("field is numerically zero on the averaging region of radius {radius:e} (mean square {mean_square:e})")]
    ZeroField { radius: f64, mean_square: f64 },

    #[error("degree {degree} is inconsistent with the blowup limit: relative residual {residual:.3}")]
    InconsistentDegree { degree: u32, residual: f64 },

    #[error("point {point:?} is not a detected zero")]
    NotAZero { point: Vec<f64> },

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
