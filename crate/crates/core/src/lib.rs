//! Numerical laboratory for unique continuation of elliptic Robin problems.
//!
//! The pipeline: solve a divergence-form problem with a Robin condition on a flat or
//! curved boundary, remove the Robin potential with a gauge factor `e^Psi`, reflect
//! evenly across the flat boundary, and study the result through the doubling index,
//! the frequency function, blowups and nodal sets.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod asymptotics;
pub mod error;
pub mod fields;
pub mod frequency;
pub mod geometry;
pub mod presets;
pub mod quadrature;
pub mod solver;
pub mod transforms;

pub use error::{Error, Result};
pub use fields::{AnalyticField, CoefficientSet, Field, MatrixField, Polynomial, ScalarField, VectorField};
pub use geometry::{FlatteningMap, GraphDomain, HalfBall, LinearChange};
pub use solver::{BoundaryTag, Mesh, SolutionField};
