//! Meshes, finite-element assembly and linear solves.

pub mod assemble;
pub mod io;
pub mod mesh;
pub mod solution;
pub mod sparse;

pub use assemble::{
    assemble, assemble_with, solve_system, solve_system_from, system_residual, weak_residual, AssemblyOptions,
    BoundaryConditions, BoundaryData, DiscreteSystem, EdgeCondition, SOLVE_TOLERANCE,
};
pub use io::{read_mesh, write_mesh, write_solution_csv};
pub use mesh::{build_mesh, BoundaryEdge, BoundaryTag, Mesh, MeshDomain, MeshOptions};
pub use solution::{boundary_flux, EdgeFlux, SolutionField};
pub use sparse::CsrMatrix;
