//! Gauge reduction `v = u e^{-Psi}` and even reflection across the flat boundary.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::fields::{extend_eta, reflect_coefficients, CoefficientSet, Field, ScalarField, Vec3, VectorField};
use crate::solver::{
    assemble, assemble_with, boundary_flux, solve_system, weak_residual, AssemblyOptions, BoundaryConditions,
    BoundaryData, BoundaryTag, EdgeCondition, Mesh, SolutionField,
};

/// Flat edges with midpoints inside this radius enter the conormal residual. The
/// extended potential jumps at `|x| = 1`, which spoils the discrete flux on the
/// adjacent edges, so the window stays a little inside the unit ball.
pub const GAUGE_WINDOW: f64 = 0.9;

/// Structure tolerance for the reflection precondition.
pub const STRUCTURE_TOL: f64 = 1e-8;

/// Neumann potential: `div(A grad Psi) = 0`, `A grad Psi . n = eta_ext` on the whole
/// boundary, mesh mean zero.
pub fn solve_gauge_potential(c: &CoefficientSet, mesh: &Arc<Mesh>) -> Result<SolutionField> {
    let ext = extend_eta(&c.eta, mesh)?;
    if ext.total.abs() > 1e-8 {
        return Err(Error::Compatibility { total: ext.total });
    }
    let data = BoundaryData::from_scalar(ext.field).with_breaks(&[1.0]);
    let bc = BoundaryConditions::new()
        .with(BoundaryTag::Flat, EdgeCondition::Neumann(data.clone()))
        .with(BoundaryTag::Arc, EdgeCondition::Neumann(data.clone()))
        .with(BoundaryTag::Full, EdgeCondition::Neumann(data));
    let sys = assemble_with(
        &c.principal(),
        mesh,
        &bc,
        &AssemblyOptions {
            mean_zero: true,
            ..AssemblyOptions::default()
        },
    )?;
    solve_system(&sys)
}

#[derive(Debug, Clone)]
pub struct GaugeResult {
    pub psi: SolutionField,
    pub v: SolutionField,
    /// `W + 2 A grad Psi`, `V + grad Psi . A grad Psi + (b + W) . grad Psi`, `b` unchanged, `eta = 0`.
    pub transformed: CoefficientSet,
    /// `max |(A grad v + b v) . n|` over flat edges inside the window.
    pub conormal_residual: f64,
    /// Same quantity for `u` (equals `|eta u|` for an exact Robin solution).
    pub u_conormal_residual: f64,
    pub window: f64,
}

fn same_topology(a: &Mesh, b: &Mesh) -> bool {
    a.vertices == b.vertices && a.triangles == b.triangles
}

/// Largest conormal flux magnitude over flat edges with midpoint radius `<= window`.
pub fn conormal_residual(u: &SolutionField, c: &CoefficientSet, window: f64) -> Result<f64> {
    let fluxes = boundary_flux(u, c, BoundaryTag::Flat)?;
    Ok(fluxes
        .iter()
        .filter(|f| f.midpoint[0].hypot(f.midpoint[1]) <= window)
        .map(|f| f.value.abs())
        .fold(0.0, f64::max))
}

pub fn gauge_transform(u: &SolutionField, c: &CoefficientSet, psi: &SolutionField) -> Result<GaugeResult> {
    gauge_transform_in(u, c, psi, GAUGE_WINDOW)
}

pub fn gauge_transform_in(
    u: &SolutionField,
    c: &CoefficientSet,
    psi: &SolutionField,
    window: f64,
) -> Result<GaugeResult> {
    if !same_topology(&u.mesh, &psi.mesh) {
        return Err(invalid("u and Psi must live on the same mesh"));
    }
    if c.dim != 2 {
        return Err(Error::UnsupportedDimension(c.dim));
    }
    let values: Vec<f64> = u.values.iter().zip(&psi.values).map(|(a, p)| a * (-p).exp()).collect();
    let v = SolutionField::new(Arc::clone(&u.mesh), values)?;
    let transformed = if psi.values.iter().all(|p| *p == 0.0) {
        c.clone().with_eta(ScalarField::zero())
    } else {
        gauged_coefficients(c, Arc::new(psi.clone()))
    };
    let conormal = conormal_residual(&v, &transformed, window)?;
    let u_res = conormal_residual(u, c, window)?;
    Ok(GaugeResult {
        psi: psi.clone(),
        v,
        transformed,
        conormal_residual: conormal,
        u_conormal_residual: u_res,
        window,
    })
}

/// Lower-order coefficients after substituting `u = v e^Psi` for any potential with
/// `div(A grad Psi) = 0`.
pub fn gauged_coefficients<F: Field + 'static>(c: &CoefficientSet, psi: Arc<F>) -> CoefficientSet {
    let d = c.dim;
    let (a, b, w, v) = (c.a.clone(), c.b.clone(), c.w.clone(), c.v.clone());
    let p1 = Arc::clone(&psi);
    let a1 = a.clone();
    let w_hat = VectorField::from_fn(d, format!("{} + 2 A grad Psi", w.label()), move |x| {
        let g = p1.gradient(x);
        let m = a1.eval(x);
        let mut out: Vec3 = w.eval(x);
        for i in 0..d {
            for j in 0..d {
                out[i] += 2.0 * m[i][j] * g[j];
            }
        }
        out
    });
    let w2 = c.w.clone();
    let v_hat = ScalarField::from_fn(format!("{} + gauge terms", v.label()), move |x| {
        let g = psi.gradient(x);
        let m = a.eval(x);
        let bv = b.eval(x);
        let wv = w2.eval(x);
        let mut out = v.eval(x);
        for i in 0..d {
            for j in 0..d {
                out += g[i] * m[i][j] * g[j];
            }
            out += (bv[i] + wv[i]) * g[i];
        }
        out
    });
    CoefficientSet {
        dim: d,
        a: c.a.clone(),
        b: c.b.clone(),
        w: w_hat,
        v: v_hat,
        eta: ScalarField::zero(),
        ellipticity: c.ellipticity,
        integrability: c.integrability,
    }
}

/// Recovers `u = v e^{Psi}` at the vertices.
pub fn undo_gauge(g: &GaugeResult) -> Vec<f64> {
    g.v.values.iter().zip(&g.psi.values).map(|(v, p)| v * p.exp()).collect()
}

/// `w(x', x_d) = v(x', |x_d|)`.
#[derive(Debug, Clone)]
pub struct EvenExtension<F> {
    pub inner: F,
}

impl<F: Field> Field for EvenExtension<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut p = x[..d].to_vec();
        p[d - 1] = p[d - 1].abs();
        self.inner.value(&p)
    }

    fn gradient(&self, x: &[f64]) -> Vec3 {
        let d = self.dim();
        let mut p = x[..d].to_vec();
        let below = p[d - 1] < 0.0;
        p[d - 1] = p[d - 1].abs();
        let mut g = self.inner.gradient(&p);
        if below {
            g[d - 1] = -g[d - 1];
        }
        g
    }

    fn extent(&self) -> Option<f64> {
        self.inner.extent()
    }
}

#[derive(Debug, Clone)]
pub struct ReflectedProblem {
    pub mesh: Arc<Mesh>,
    /// The even extension on the mirrored mesh.
    pub field: SolutionField,
    pub coefficients: CoefficientSet,
}

/// Largest `|a_id|` (`i < d`) and `|eta|` sampled on the flat boundary.
pub fn structure_defect(mesh: &Mesh, c: &CoefficientSet) -> (f64, f64) {
    let d = c.dim;
    let mut off: f64 = 0.0;
    let mut eta: f64 = 0.0;
    for e in mesh.edges_with_tag(BoundaryTag::Flat) {
        let (p, q) = (mesh.vertices[e.v[0]], mesh.vertices[e.v[1]]);
        for x in [p, [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])], q] {
            let m = c.a.eval(&x);
            for i in 0..d - 1 {
                off = off.max(m[i][d - 1].abs());
            }
            eta = eta.max(c.eta.eval(&x).abs());
        }
    }
    (off, eta)
}

pub fn reflect_even_extension(v: &SolutionField, c: &CoefficientSet) -> Result<ReflectedProblem> {
    let (off, eta) = structure_defect(&v.mesh, c);
    if off > STRUCTURE_TOL || eta > STRUCTURE_TOL || !off.is_finite() || !eta.is_finite() {
        return Err(Error::StructureViolation {
            max_offdiag: off,
            max_eta: eta,
        });
    }
    let full = v.mesh.mirror()?;
    let n = v.mesh.num_vertices();
    let mirror = full.mirror.clone().expect("mirrored mesh has a mirror map");
    let values: Vec<f64> = (0..full.num_vertices())
        .map(|j| if j < n { v.values[j] } else { v.values[mirror[j]] })
        .collect();
    let mesh = Arc::new(full);
    Ok(ReflectedProblem {
        field: SolutionField::new(Arc::clone(&mesh), values)?,
        mesh,
        coefficients: reflect_coefficients(c),
    })
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl ReflectedProblem {
    /// l2 norm of the discrete residual `B(v_h, phi_i)` over interior hats of the full disk.
    pub fn interior_residual(&self) -> Result<f64> {
        let sys = assemble(&self.coefficients, &self.mesh, &BoundaryConditions::new(), false)?;
        Ok(l2(&sys.interior_residual(&self.field.values)))
    }

    /// Same residual for an arbitrary field with exact gradients (e.g. the even
    /// extension of an analytic solution).
    pub fn residual_of(&self, field: &dyn Field) -> f64 {
        l2(&weak_residual(&self.mesh, &self.coefficients, field, None))
    }

    /// Re-solves the extended problem with Dirichlet data from the extension itself.
    pub fn resolve(&self) -> Result<SolutionField> {
        let values = self.field.values.clone();
        let mesh = Arc::clone(&self.mesh);
        let data = BoundaryData::new("extension trace", move |x, _| {
            let (t, b) = mesh
                .locate_or_extrapolate([x[0], x[1]])
                .expect("boundary point on mesh");
            let tri = mesh.triangles[t];
            b[0] * values[tri[0]] + b[1] * values[tri[1]] + b[2] * values[tri[2]]
        });
        let bc = BoundaryConditions::new().with(BoundaryTag::Full, EdgeCondition::Dirichlet(data));
        let sys = assemble(&self.coefficients, &self.mesh, &bc, false)?;
        solve_system(&sys)
    }

    /// Largest `|v(x', x_d) - v(x', -x_d)|` over mirrored vertex pairs.
    pub fn symmetry_gap(&self) -> f64 {
        let mirror = self.mesh.mirror.as_ref().expect("mirror map");
        mirror
            .iter()
            .enumerate()
            .map(|(i, &j)| (self.field.values[i] - self.field.values[j]).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{AnalyticField, MatrixField};
    use crate::solver::{build_mesh, MeshDomain, MeshOptions};

    fn half(r: f64, h: f64) -> Arc<Mesh> {
        Arc::new(
            build_mesh(
                &MeshDomain::HalfDisk { radius: r },
                &MeshOptions::uniform(h).with_breakpoints(&[1.0]),
            )
            .unwrap(),
        )
    }

    #[test]
    fn zero_eta_gives_zero_potential() {
        let mesh = half(2.0, 0.2);
        let psi = solve_gauge_potential(&CoefficientSet::laplace(2), &mesh).unwrap();
        assert!(psi.values.iter().all(|v| *v == 0.0));
        let u = SolutionField::interpolate(mesh, |x| x[0] + 2.0);
        let g = gauge_transform(&u, &CoefficientSet::laplace(2), &psi).unwrap();
        assert_eq!(g.v.values, u.values);
        assert!(g.transformed.w.is_zero() && g.transformed.v.is_zero());
    }

    #[test]
    fn potential_flux_matches_data() {
        for a in [
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0; 3]],
            [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0; 3]],
        ] {
            let mut errs = Vec::new();
            for h in [0.1, 0.05] {
                let mesh = half(2.0, h);
                let c = CoefficientSet::laplace(2)
                    .with_a(MatrixField::constant(2, a))
                    .with_eta(ScalarField::constant(1.0));
                let psi = solve_gauge_potential(&c, &mesh).unwrap();
                let err = boundary_flux(&psi, &c, BoundaryTag::Flat)
                    .unwrap()
                    .iter()
                    .filter(|f| f.midpoint[0].abs() < GAUGE_WINDOW)
                    .map(|f| (f.value - 1.0).abs())
                    .fold(0.0, f64::max);
                errs.push(err);
            }
            assert!(errs[0] / errs[1] > 1.6 && errs[1] < 0.2, "{errs:?}");
        }
    }

    #[test]
    fn gauge_is_invertible() {
        let mesh = half(2.0, 0.2);
        let c = CoefficientSet::laplace(2).with_eta(ScalarField::constant(-1.0));
        let psi = solve_gauge_potential(&c, &mesh).unwrap();
        let u = SolutionField::interpolate(mesh, |x| x[1].exp() * x[0].cos());
        let g = gauge_transform(&u, &c, &psi).unwrap();
        let back = undo_gauge(&g);
        let gap = back
            .iter()
            .zip(&u.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-12);
    }

    #[test]
    fn linear_gauge_coefficients() {
        let psi = Arc::new(AnalyticField::parse(2, "y").unwrap());
        let c = CoefficientSet::laplace(2).with_eta(ScalarField::constant(1.0));
        let t = gauged_coefficients(&c, psi);
        assert_eq!(t.w.eval(&[0.3, 0.2]), [0.0, 2.0, 0.0]);
        assert_eq!(t.v.eval(&[0.3, 0.2]), 1.0);
    }

    #[test]
    fn even_harmonic_quadratic_has_zero_residual() {
        let mesh = half(1.0, 0.1);
        let u = AnalyticField::parse(2, "x^2 - y^2").unwrap();
        let v = SolutionField::interpolate(mesh, |x| u.value(x));
        let r = reflect_even_extension(&v, &CoefficientSet::laplace(2)).unwrap();
        assert_eq!(r.symmetry_gap(), 0.0);
        let ext = EvenExtension { inner: u };
        let res = weak_residual(&r.mesh, &r.coefficients, &ext, None);
        assert!(res.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn structure_violation_rejected() {
        let mesh = half(1.0, 0.2);
        let v = SolutionField::interpolate(mesh, |x| x[0]);
        let c =
            CoefficientSet::laplace(2).with_a(MatrixField::constant(2, [[1.0, 0.2, 0.0], [0.2, 1.0, 0.0], [0.0; 3]]));
        match reflect_even_extension(&v, &c) {
            Err(Error::StructureViolation { max_offdiag, .. }) => assert!((max_offdiag - 0.2).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        let c = CoefficientSet::laplace(2).with_eta(ScalarField::constant(-1.0));
        assert!(matches!(
            reflect_even_extension(&SolutionField::interpolate(half(1.0, 0.2), |x| x[0]), &c),
            Err(Error::StructureViolation { .. })
        ));
    }
}
