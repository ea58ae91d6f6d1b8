//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use ucplab_core::fields::{AnalyticField, CoefficientSet, ScalarField};
use ucplab_core::solver::{
    build_mesh, BoundaryConditions, BoundaryData, BoundaryTag, EdgeCondition, Mesh, MeshDomain, MeshOptions,
};

pub fn half_disk(h: f64) -> Arc<Mesh> {
    Arc::new(build_mesh(&MeshDomain::HalfDisk { radius: 1.0 }, &MeshOptions::uniform(h)).expect("mesh"))
}

/// `u = e^y cos x` with `eta = -1` on the flat side and its trace on the arc.
pub fn robin_problem() -> (CoefficientSet, BoundaryConditions) {
    let exact = AnalyticField::parse(2, "exp(y)*cos(x)").expect("expression");
    let c = CoefficientSet::laplace(2).with_eta(ScalarField::constant(-1.0));
    let bc = BoundaryConditions::new()
        .with(BoundaryTag::Flat, EdgeCondition::Robin)
        .with(
            BoundaryTag::Arc,
            EdgeCondition::Dirichlet(BoundaryData::values_of(exact)),
        );
    (c, bc)
}

pub fn field(d: usize, src: &str) -> AnalyticField {
    AnalyticField::parse(d, src).expect("expression")
}
