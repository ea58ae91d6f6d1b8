//! Solve, gauge and analyze: vanishing orders and blowups of finite element solutions.

use std::sync::Arc;

use nalgebra::DMatrix;
use ucplab_core::asymptotics::{boundary_zero_set, fit_homogeneous, rescale_blowup, tangent_set};
use ucplab_core::fields::{AnalyticField, CoefficientSet, Field, ScalarField};
use ucplab_core::frequency::{default_radii, radial_profile, vanishing_order, DEFAULT_CUTOFF};
use ucplab_core::solver::{
    assemble, assemble_with, build_mesh, solve_system, AssemblyOptions, BoundaryConditions, BoundaryData, BoundaryTag,
    EdgeCondition, MeshDomain, MeshOptions,
};
use ucplab_core::transforms::{gauge_transform, solve_gauge_potential};
use ucplab_core::SolutionField;

fn modes(m: u32) -> &'static str {
    ["1", "x", "x^2 - y^2", "x^3 - 3*x*y^2", "x^4 - 6*x^2*y^2 + y^4"][m as usize]
}

fn neumann_solution(m: u32, h: f64) -> SolutionField {
    let exact = AnalyticField::parse(2, modes(m)).unwrap();
    let mesh = Arc::new(build_mesh(&MeshDomain::HalfDisk { radius: 1.0 }, &MeshOptions::graded(h, 2.0)).unwrap());
    let bc = BoundaryConditions::new()
        .with(BoundaryTag::Flat, EdgeCondition::Natural)
        .with(
            BoundaryTag::Arc,
            EdgeCondition::Dirichlet(BoundaryData::values_of(exact)),
        );
    solve_system(&assemble(&CoefficientSet::laplace(2), &mesh, &bc, false).unwrap()).unwrap()
}

#[test]
fn finite_element_vanishing_orders() {
    for m in 1..=3 {
        let u = neumann_solution(m, 0.02);
        let p = radial_profile(&u, &default_radii(1.0), None).unwrap();
        let est = vanishing_order(&p, DEFAULT_CUTOFF).unwrap();
        assert_eq!(est.m_rounded, m, "{est:?}");
        assert!(est.deviation < 0.05, "m = {m}: {est:?}");
        let zs = boundary_zero_set(&u, 0.9, 1e-3).unwrap();
        assert!(
            zs.is_finite_list() && zs.roots.len() == 1,
            "m = {m}: {:?} {:?} {:e}",
            zs.roots,
            zs.plateaus,
            u.value(&[0.0, 0.0])
        );
    }
}

/// `u = P_m e^y` with `eta = -1` on the flat piece and the matching source.
fn robin_order(m: u32, h: f64) -> (SolutionField, CoefficientSet) {
    let p = modes(m);
    let exact = AnalyticField::parse(2, &format!("({p})*exp(y)")).unwrap();
    let neg_u = ucplab_core::fields::expr::parse_expr(&format!("-(({p})*exp(y))")).unwrap();
    let f = ScalarField::from_expr(&neg_u.laplacian(2));
    let c = CoefficientSet::laplace(2).with_eta(ScalarField::constant(-1.0));
    let mesh = Arc::new(
        build_mesh(
            &MeshDomain::HalfDisk { radius: 2.0 },
            &MeshOptions::graded(h, 1.5).with_breakpoints(&[1.0]),
        )
        .unwrap(),
    );
    let bc = BoundaryConditions::new()
        .with(BoundaryTag::Flat, EdgeCondition::Robin)
        .with(
            BoundaryTag::Arc,
            EdgeCondition::Dirichlet(BoundaryData::values_of(exact)),
        );
    let opts = AssemblyOptions {
        source: Some(f),
        ..Default::default()
    };
    (solve_system(&assemble_with(&c, &mesh, &bc, &opts).unwrap()).unwrap(), c)
}

#[test]
fn gauged_robin_vanishing_orders() {
    for m in 1..=3 {
        let (u, c) = robin_order(m, 0.01);
        let psi = solve_gauge_potential(&c, &u.mesh).unwrap();
        let g = gauge_transform(&u, &c, &psi).unwrap();
        let p = radial_profile(&g.v, &default_radii(1.0), None).unwrap();
        let est = vanishing_order(&p, DEFAULT_CUTOFF).unwrap();
        assert_eq!(est.m_rounded, m, "{est:?}");
    }
}

#[test]
fn gauged_robin_tangent_set() {
    let (u, c) = robin_order(2, 0.01);
    let psi = solve_gauge_potential(&c, &u.mesh).unwrap();
    let g = gauge_transform(&u, &c, &psi).unwrap();
    let eye = DMatrix::identity(2, 2);
    let zs = boundary_zero_set(&g.v, 0.9, 0.01).unwrap();
    assert!(zs.is_finite_list());
    let t = tangent_set(&zs, &[0.0, 0.0], &[0.4, 0.2, 0.1], &g.v, &eye).unwrap();
    let fit = fit_homogeneous(&t.blowup, 2).unwrap();
    assert!(fit.residual < 0.05, "{:?}", fit.residuals);
    let seq = rescale_blowup(&g.v, &[0.4, 0.2, 0.1], &eye).unwrap();
    assert!(fit_homogeneous(&seq, 2).unwrap().residual < 0.05);
}
