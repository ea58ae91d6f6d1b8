//! Randomized invariants across geometry, coefficients, frequency and blowup analysis.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use proptest::prelude::*;
use ucplab_core::asymptotics::{
    boundary_zero_set, fit_homogeneous, neumann_harmonic_basis, rescale_blowup_at, Normalization,
};
use ucplab_core::fields::coefficients::{extend_eta, reflect_coefficients};
use ucplab_core::fields::{AnalyticField, CoefficientSet, MatrixField, ScalarField, ShiftedField};
use ucplab_core::frequency::{default_radii, monotonicity_violations, radial_profile};
use ucplab_core::geometry::{normalizing_map, theta_matrix};
use ucplab_core::presets::harmonic_mode;
use ucplab_core::solver::{build_mesh, Mesh, MeshDomain, MeshOptions};
use ucplab_core::LinearChange;

fn host_mesh() -> Arc<Mesh> {
    static MESH: OnceLock<Arc<Mesh>> = OnceLock::new();
    MESH.get_or_init(|| {
        Arc::new(
            build_mesh(
                &MeshDomain::HalfDisk { radius: 2.0 },
                &MeshOptions::uniform(0.1).with_breakpoints(&[1.0]),
            )
            .unwrap(),
        )
    })
    .clone()
}

/// `Q diag(e) Q^T` with a rotation `Q` and eigenvalues in [0.5, 2].
fn spd(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (
        prop::collection::vec(-1.0f64..1.0, d * d),
        prop::collection::vec(0.5f64..2.0, d),
    )
        .prop_map(move |(g, e)| {
            let q = DMatrix::from_vec(d, d, g).qr().q();
            &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e)) * q.transpose()
        })
}

/// Sum of `c_m r^m cos(m theta)`, `m = 0..=4`.
fn mixture() -> impl Strategy<Value = AnalyticField> {
    prop::collection::vec(-1.0f64..1.0, 5).prop_map(|c| {
        let src: Vec<String> = c
            .iter()
            .enumerate()
            .map(|(m, c)| format!("({c:?})*({})", harmonic_mode(m as u32)))
            .collect();
        AnalyticField::parse(2, &src.join(" + ")).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn theta_clears_last_column(a0 in (2usize..=3).prop_flat_map(spd)) {
        let d = a0.nrows();
        let t = theta_matrix(&a0).unwrap();
        let s = &t * &a0 * t.transpose();
        for i in 0..d - 1 {
            prop_assert!(s[(i, d - 1)].abs() < 1e-12);
        }
        let psi = normalizing_map(&a0).unwrap();
        let id = &psi.matrix * &a0 * psi.matrix.transpose();
        prop_assert!((id - DMatrix::identity(d, d)).abs().max() < 1e-10);
        for j in 0..d - 1 {
            prop_assert_eq!(psi.matrix[(d - 1, j)], 0.0);
        }
        prop_assert!(psi.matrix[(d - 1, d - 1)] > 0.0);
    }

    #[test]
    fn linear_round_trip(a0 in spd(3), pts in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 100)) {
        let psi = normalizing_map(&a0).unwrap();
        for p in pts {
            let back = psi.apply_inverse(&psi.apply(&p));
            prop_assert!(back.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }

    #[test]
    fn extended_eta_has_zero_mean(c in prop::collection::vec(-3.0f64..3.0, 3)) {
        let eta = ScalarField::from_fn("poly", move |x| c[0] + c[1] * x[0] + c[2] * x[0] * x[0]);
        let ext = extend_eta(&eta, &host_mesh()).unwrap();
        prop_assert!(ext.total.abs() < 1e-8, "total {}", ext.total);
    }

    #[test]
    fn reflection_preserves_symmetry_and_is_idempotent(a0 in spd(2), x in -1.0f64..1.0, y in 0.01f64..1.0) {
        let m = [[a0[(0, 0)], 0.0, 0.0], [0.0, a0[(1, 1)], 0.0], [0.0; 3]];
        let skew = a0[(0, 1)];
        let a = MatrixField::from_fn(2, "skewed", move |p| {
            let mut m = m;
            m[0][1] = skew * p[1];
            m[1][0] = skew * p[1];
            m
        });
        let c = CoefficientSet::laplace(2).with_a(a);
        let once = reflect_coefficients(&c);
        let twice = reflect_coefficients(&once);
        for p in [[x, y], [x, -y]] {
            let r = once.a.eval(&p);
            prop_assert_eq!(r[0][1], r[1][0]);
            prop_assert_eq!(r, twice.a.eval(&p));
        }
        prop_assert_eq!(once.a.eval(&[x, y]), c.a.eval(&[x, y]));
    }

    #[test]
    fn profile_is_scale_invariant(u in mixture(), c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let cu = AnalyticField::parse(2, &format!("({c:?})*({})", u.expr())).unwrap();
        let radii = default_radii(1.0);
        let (p, q) = (radial_profile(&u, &radii, None).unwrap(), radial_profile(&cu, &radii, None).unwrap());
        for k in 0..radii.len() {
            prop_assert!((p.n[k] - q.n[k]).abs() <= 1e-12 * p.n[k].abs());
            prop_assert!((p.f[k] - q.f[k]).abs() <= 1e-12 * p.f[k].abs().max(1e-12));
        }
    }

    #[test]
    fn mixtures_are_monotone(u in mixture()) {
        let p = radial_profile(&u, &default_radii(1.0), None).unwrap();
        prop_assert_eq!(monotonicity_violations(&p, 1e-6), (0, 0));
    }

    #[test]
    fn zero_sets_are_scale_equivariant(c in prop::collection::vec(-1.0f64..1.0, 4), y in -0.2f64..0.2, k in 1u32..=2) {
        // roots of a cubic on the flat boundary, and of its rescaling about (y, 0)
        let src = format!("({:?}) + ({:?})*x + ({:?})*x^2 + ({:?})*x^3 + y", c[0], c[1], c[2], c[3]);
        let u = AnalyticField::parse(2, &src).unwrap();
        let lambda = 0.5f64.powi(k as i32);
        let scaled = ShiftedField::new(u.clone(), &[y, 0.0], lambda);
        let base = boundary_zero_set(&u, 2.0, 1.0 / 1024.0).unwrap();
        let small = boundary_zero_set(&scaled, 0.5, 1.0 / 1024.0).unwrap();
        prop_assume!(base.is_finite_list());
        let expected: Vec<f64> = base.roots.iter().map(|r| (r - y) / lambda).filter(|t| t.abs() < 0.5 - 1e-3).collect();
        let found: Vec<f64> = small.roots.iter().copied().filter(|t| t.abs() < 0.5 - 1e-3).collect();
        prop_assert_eq!(expected.len(), found.len(), "{:?} vs {:?}", expected, found);
        for (a, b) in expected.iter().zip(&found) {
            prop_assert!((a - b).abs() < 1e-9 / lambda);
        }
    }

    #[test]
    fn blowups_are_normalized(u in mixture(), a0 in spd(2), normalization in prop_oneof![Just(Normalization::Mapped), Just(Normalization::Plain)]) {
        let seq = rescale_blowup_at(&u, &[0.0, 0.0], &[0.4, 0.2, 0.1, 0.05], &a0, normalization).unwrap();
        for ms in &seq.mean_squares {
            prop_assert!((ms - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn homogeneous_fields_are_fixed(m in 0u32..=4, c in prop::collection::vec(-1.0f64..1.0, 5), a0 in (2usize..=3).prop_flat_map(spd)) {
        let d = a0.nrows();
        let basis = neumann_harmonic_basis(&a0, d, m).unwrap();
        let p = basis.iter().zip(&c).fold(ucplab_core::Polynomial::zero(d), |acc, (b, c)| acc.add(&b.scale(*c)));
        prop_assume!(!p.is_zero());
        let seq = rescale_blowup_at(&p, &vec![0.0; d], &[0.4, 0.2, 0.1], &a0, Normalization::Mapped).unwrap();
        prop_assert!(seq.distance(0, 2) < 1e-8);
        prop_assert!(fit_homogeneous(&seq, m).unwrap().residual < 1e-8);
    }
}

#[test]
fn profiles_are_deterministic() {
    let u = AnalyticField::parse(2, "x^3 - 3*x*y^2 + 0.3*x").unwrap();
    let radii = default_radii(1.0);
    let a = radial_profile(&u, &radii, None).unwrap();
    let b = radial_profile(&u, &radii, Some(&LinearChange::identity(2))).unwrap();
    assert_eq!(
        a.h.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.h.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}
