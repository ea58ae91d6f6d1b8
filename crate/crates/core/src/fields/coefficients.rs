//! Coefficient sets for `D_i(a_ij D_j u + b_i u) + W_i D_i u + V u = 0` with the
//! Robin condition `(a_ij D_j u + b_i u) n_i = eta u`.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{Mat3, MatrixField, ScalarField, Vec3, VectorField};
use crate::geometry::{congruence, determinant, CoordinateMap};
use crate::quadrature::{gauss_interval, HalfBallRule};
use crate::solver::Mesh;

/// Uniform ellipticity bounds `lambda |xi|^2 <= a xi.xi <= big_lambda |xi|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipticity {
    pub lambda: f64,
    pub big_lambda: f64,
}

impl Default for Ellipticity {
    fn default() -> Self {
        Ellipticity {
            lambda: 1.0,
            big_lambda: 1.0,
        }
    }
}

/// Declared Lebesgue exponents: `b, W` in `L_p`, `V` in `L_q`, `eta` in `L_s(boundary)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrability {
    pub p: f64,
    pub q: f64,
    pub s: f64,
}

impl Default for Integrability {
    fn default() -> Self {
        Integrability {
            p: f64::INFINITY,
            q: f64::INFINITY,
            s: f64::INFINITY,
        }
    }
}

impl Integrability {
    /// Checks `p > d`, `q > d/2`, `s > d-1`; the error names the failing exponent.
    pub fn validate(&self, dim: usize) -> std::result::Result<(), (&'static str, String)> {
        let d = dim as f64;
        if !(self.p > d) {
            return Err(("p", format!("requires p > d (p = {}, d = {dim})", self.p)));
        }
        if !(self.q > d / 2.0) {
            return Err(("q", format!("requires q > d/2 (q = {}, d = {dim})", self.q)));
        }
        if !(self.s > d - 1.0) {
            return Err(("s", format!("requires s > d−1 (s = {}, d = {dim})", self.s)));
        }
        Ok(())
    }
}

/// Pointwise coefficient values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientSample {
    pub a: Mat3,
    pub b: Vec3,
    pub w: Vec3,
    pub v: f64,
}

#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub dim: usize,
    pub a: MatrixField,
    pub b: VectorField,
    pub w: VectorField,
    pub v: ScalarField,
    pub eta: ScalarField,
    pub ellipticity: Ellipticity,
    pub integrability: Integrability,
}

impl CoefficientSet {
    /// `A = I`, all lower-order terms zero.
    pub fn laplace(dim: usize) -> Self {
        CoefficientSet {
            dim,
            a: MatrixField::identity(dim),
            b: VectorField::zero(dim),
            w: VectorField::zero(dim),
            v: ScalarField::zero(),
            eta: ScalarField::zero(),
            ellipticity: Ellipticity::default(),
            integrability: Integrability::default(),
        }
    }

    pub fn with_a(mut self, a: MatrixField) -> Self {
        self.a = a;
        self
    }

    pub fn with_b(mut self, b: VectorField) -> Self {
        self.b = b;
        self
    }

    pub fn with_w(mut self, w: VectorField) -> Self {
        self.w = w;
        self
    }

    pub fn with_v(mut self, v: ScalarField) -> Self {
        self.v = v;
        self
    }

    pub fn with_eta(mut self, eta: ScalarField) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_ellipticity(mut self, lambda: f64, big_lambda: f64) -> Self {
        self.ellipticity = Ellipticity { lambda, big_lambda };
        self
    }

    #[inline]
    pub fn sample(&self, x: &[f64]) -> CoefficientSample {
        CoefficientSample {
            a: self.a.eval(x),
            b: self.b.eval(x),
            w: self.w.eval(x),
            v: self.v.eval(x),
        }
    }

    /// Only the principal part `A`.
    pub fn principal(&self) -> Self {
        CoefficientSet {
            b: VectorField::zero(self.dim),
            w: VectorField::zero(self.dim),
            v: ScalarField::zero(),
            eta: ScalarField::zero(),
            ..self.clone()
        }
    }

    /// Symmetry and declared ellipticity at the given points.
    pub fn check_at(&self, points: &[[f64; 3]]) -> Result<()> {
        let d = self.dim;
        for p in points {
            let a = self.a.eval(p);
            for i in 0..d {
                for j in i + 1..d {
                    let gap = (a[i][j] - a[j][i]).abs();
                    if gap > 1e-12 * (1.0 + a[i][j].abs()) {
                        return Err(Error::NotSymmetric { row: i, col: j, gap });
                    }
                }
            }
            let (lo, hi) = eig_range(&a, d);
            if lo <= 0.0 || lo.is_nan() {
                return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
            }
            let slack = 1e-9;
            if lo < self.ellipticity.lambda * (1.0 - slack) || hi > self.ellipticity.big_lambda * (1.0 + slack) {
                return Err(invalid(format!(
                    "ellipticity bounds [{}, {}] violated at {:?}: eigenvalues in [{lo}, {hi}]",
                    self.ellipticity.lambda,
                    self.ellipticity.big_lambda,
                    &p[..d]
                )));
            }
        }
        Ok(())
    }

    /// Observed eigenvalue range of `A` over the points (non-finite samples skipped).
    pub fn estimate_ellipticity(&self, points: &[[f64; 3]]) -> Ellipticity {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for p in points {
            let a = self.a.eval(p);
            if a.iter().flatten().any(|v| !v.is_finite()) {
                continue;
            }
            let (l, h) = eig_range(&a, self.dim);
            lo = lo.min(l);
            hi = hi.max(h);
        }
        Ellipticity {
            lambda: lo,
            big_lambda: hi,
        }
    }
}

pub(crate) fn eig_range(a: &Mat3, d: usize) -> (f64, f64) {
    let m = nalgebra::DMatrix::from_fn(d, d, |i, j| 0.5 * (a[i][j] + a[j][i]));
    let e = SymmetricEigen::new(m).eigenvalues;
    (e.min(), e.max())
}

/// Sample points on the unit upper half-ball for ellipticity estimates.
pub(crate) fn probe_points(dim: usize, radius: f64) -> Vec<[f64; 3]> {
    let rule = if dim == 3 {
        HalfBallRule::ball(3, 1, 4, 8)
    } else {
        HalfBallRule::disk(4, 1, 8)
    };
    let mut pts: Vec<[f64; 3]> = rule
        .points
        .iter()
        .map(|p| [p[0] * radius, p[1] * radius, p[2] * radius])
        .collect();
    pts.push([0.0; 3]);
    pts
}

/// The mean-zero extension of a Robin potential.
#[derive(Debug, Clone)]
pub struct ExtendedEta {
    pub field: ScalarField,
    /// Value taken on `boundary \ B_1`.
    pub exterior_value: f64,
    pub inner_integral: f64,
    pub exterior_length: f64,
    /// `int_boundary eta_ext`, zero up to rounding.
    pub total: f64,
}

/// Number of Gauss points per boundary sub-segment for boundary data.
pub const BOUNDARY_DATA_POINTS: usize = 4;

/// Applies `f(point, weight)` at Gauss points on every boundary edge, after splitting
/// edges where they cross the circles `|x| = r` for `r` in `breaks`.
pub(crate) fn for_each_boundary_point(
    mesh: &Mesh,
    breaks: &[f64],
    points: usize,
    mut f: impl FnMut(usize, [f64; 2], f64, f64),
) {
    let (gx, gw) = gauss_interval(points, 0.0, 1.0);
    for (k, e) in mesh.boundary.iter().enumerate() {
        let (a, b) = (mesh.vertices[e.v[0]], mesh.vertices[e.v[1]]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let cuts = split_parameters(a, b, breaks);
        for w in cuts.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            for (x, wq) in gx.iter().zip(&gw) {
                let t = t0 + (t1 - t0) * x;
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                f(k, p, t, wq * (t1 - t0) * len);
            }
        }
    }
}

/// Edge parameters in [0, 1] where the segment crosses the circles.
pub(crate) fn split_parameters(a: [f64; 2], b: [f64; 2], breaks: &[f64]) -> Vec<f64> {
    let mut ts = vec![0.0, 1.0];
    let d = [b[0] - a[0], b[1] - a[1]];
    let qa = d[0] * d[0] + d[1] * d[1];
    let qb = 2.0 * (a[0] * d[0] + a[1] * d[1]);
    for r in breaks {
        let qc = a[0] * a[0] + a[1] * a[1] - r * r;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 || qa == 0.0 {
            continue;
        }
        for sgn in [-1.0, 1.0] {
            let t = (-qb + sgn * disc.sqrt()) / (2.0 * qa);
            if t > 1e-12 && t < 1.0 - 1e-12 {
                ts.push(t);
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// `eta_ext = eta` on `boundary ∩ B_1` and the constant making the total integral vanish
/// elsewhere. Boundary measure is polygonal arc length on the mesh.
pub fn extend_eta(eta: &ScalarField, mesh: &Mesh) -> Result<ExtendedEta> {
    if eta.constant_value() == Some(0.0) {
        return Ok(ExtendedEta {
            field: ScalarField::zero(),
            exterior_value: 0.0,
            inner_integral: 0.0,
            exterior_length: 0.0,
            total: 0.0,
        });
    }
    let mut inner = 0.0;
    let mut exterior = 0.0;
    for_each_boundary_point(mesh, &[1.0], BOUNDARY_DATA_POINTS, |_, p, _, w| {
        if p[0] * p[0] + p[1] * p[1] < 1.0 {
            inner += w * eta.eval(&p);
        } else {
            exterior += w;
        }
    });
    if !inner.is_finite() {
        return Err(invalid("eta is not integrable on the boundary inside B_1"));
    }
    if exterior <= 0.0 {
        return Err(invalid(
            "the boundary lies inside B_1; no room for the mean-zero extension",
        ));
    }
    let c = -inner / exterior;
    let field = match eta.constant_value() {
        Some(0.0) => ScalarField::zero(),
        _ => {
            let eta = eta.clone();
            ScalarField::from_fn(format!("ext({})", eta.label()), move |x| {
                if x[0] * x[0] + x[1] * x[1] < 1.0 {
                    eta.eval(x)
                } else {
                    c
                }
            })
        }
    };
    let mut total = 0.0;
    for_each_boundary_point(mesh, &[1.0], BOUNDARY_DATA_POINTS, |_, p, _, w| {
        total += w * field.eval(&p);
    });
    Ok(ExtendedEta {
        field,
        exterior_value: if eta.is_zero() { 0.0 } else { c },
        inner_integral: inner,
        exterior_length: exterior,
        total,
    })
}

fn mirror(x: &[f64], d: usize) -> [f64; 3] {
    let mut p = [0.0; 3];
    for (i, v) in x.iter().take(3).enumerate() {
        p[i] = *v;
    }
    p[d - 1] = -p[d - 1];
    p
}

/// Even extension across `{x_d = 0}` with the sign rules: `a_ij` odd when exactly one
/// index is `d`, `b_d` and `W_d` odd, everything else even; `eta` is dropped.
pub fn reflect_coefficients(c: &CoefficientSet) -> CoefficientSet {
    let d = c.dim;
    let flip_m = move |mut m: Mat3| {
        for i in 0..d - 1 {
            m[i][d - 1] = -m[i][d - 1];
            m[d - 1][i] = -m[d - 1][i];
        }
        m
    };
    let flip_v = move |mut v: Vec3| {
        v[d - 1] = -v[d - 1];
        v
    };
    let a = match c.a.constant_value() {
        Some(m) if (0..d - 1).all(|i| m[i][d - 1] == 0.0 && m[d - 1][i] == 0.0) => c.a.clone(),
        _ => {
            let a = c.a.clone();
            MatrixField::from_fn(d, format!("even({})", a.label()), move |x| {
                if x[d - 1] < 0.0 {
                    flip_m(a.eval(&mirror(x, d)))
                } else {
                    a.eval(x)
                }
            })
        }
    };
    let vec = |f: &VectorField| match f.constant_value() {
        Some(v) if v[d - 1] == 0.0 => f.clone(),
        _ => {
            let f = f.clone();
            VectorField::from_fn(d, format!("even({})", f.label()), move |x| {
                if x[d - 1] < 0.0 {
                    flip_v(f.eval(&mirror(x, d)))
                } else {
                    f.eval(x)
                }
            })
        }
    };
    let v = match c.v.constant_value() {
        Some(_) => c.v.clone(),
        None => {
            let v = c.v.clone();
            ScalarField::from_fn(format!("even({})", v.label()), move |x| {
                if x[d - 1] < 0.0 {
                    v.eval(&mirror(x, d))
                } else {
                    v.eval(x)
                }
            })
        }
    };
    CoefficientSet {
        dim: d,
        a,
        b: vec(&c.b),
        w: vec(&c.w),
        v,
        eta: ScalarField::zero(),
        ellipticity: c.ellipticity,
        integrability: c.integrability,
    }
}

/// Coefficients of the same weak form in coordinates `y = map(x)`:
/// `A -> J A J^T / |det J|`, `b, W -> J b / |det J|`, `V -> V / |det J|` and
/// `eta -> eta |J^T n_y| / |det J|` with `n_y = -e_d`.
pub fn pushforward_coefficients<M>(c: &CoefficientSet, map: &M) -> Result<CoefficientSet>
where
    M: CoordinateMap + Clone + 'static,
{
    let d = c.dim;
    if map.dim() != d {
        return Err(invalid("map dimension does not match the coefficients"));
    }
    let origin = vec![0.0; d];
    let j0 = map.jacobian(&origin)?;
    let det0 = determinant(&j0, d);
    if det0.abs() < 1e-14 || !det0.is_finite() {
        return Err(invalid(format!("singular Jacobian at the origin (det = {det0:e})")));
    }

    let frame = {
        let map = map.clone();
        move |y: &[f64]| -> Option<(Vec<f64>, Mat3, f64)> {
            let x = map.inverse(&y[..d]).ok()?;
            let j = map.jacobian(&x).ok()?;
            let det = determinant(&j, d).abs();
            (det > 0.0).then_some((x, j, det))
        }
    };
    let nan_m = [[f64::NAN; 3]; 3];
    let nan_v = [f64::NAN; 3];
    let jv = move |j: &Mat3, v: Vec3, det: f64| {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate().take(d) {
            *o = (0..d).map(|k| j[i][k] * v[k]).sum::<f64>() / det;
        }
        out
    };
    let boundary_factor = move |j: &Mat3, det: f64| {
        // |J^T n_y| with n_y = -e_d is the norm of the last row of J
        (0..d).map(|k| j[d - 1][k] * j[d - 1][k]).sum::<f64>().sqrt() / det
    };

    let affine = is_affine(map, d);
    let a = match (affine, c.a.constant_value()) {
        (true, Some(m)) => MatrixField::constant(d, scale_m(congruence(&j0, &m, d), 1.0 / det0.abs())),
        _ => {
            let (a, frame) = (c.a.clone(), frame.clone());
            MatrixField::from_fn(d, format!("push({})", c.a.label()), move |y| match frame(y) {
                Some((x, j, det)) => scale_m(congruence(&j, &a.eval(&x), d), 1.0 / det),
                None => nan_m,
            })
        }
    };
    let vec = |f: &VectorField| match (affine, f.constant_value()) {
        (true, Some(v)) => VectorField::constant(d, jv(&j0, v, det0.abs())),
        _ => {
            let (f, frame) = (f.clone(), frame.clone());
            VectorField::from_fn(d, format!("push({})", f.label()), move |y| match frame(y) {
                Some((x, j, det)) => jv(&j, f.eval(&x), det),
                None => nan_v,
            })
        }
    };
    let v = match (affine, c.v.constant_value()) {
        (true, Some(v)) => ScalarField::constant(v / det0.abs()),
        _ => {
            let (f, frame) = (c.v.clone(), frame.clone());
            ScalarField::from_fn(format!("push({})", c.v.label()), move |y| match frame(y) {
                Some((x, _, det)) => f.eval(&x) / det,
                None => f64::NAN,
            })
        }
    };
    let eta = match (affine, c.eta.constant_value()) {
        (_, Some(0.0)) => ScalarField::zero(),
        (true, Some(e)) => ScalarField::constant(e * boundary_factor(&j0, det0.abs())),
        _ => {
            let (f, frame) = (c.eta.clone(), frame.clone());
            ScalarField::from_fn(format!("push({})", c.eta.label()), move |y| match frame(y) {
                Some((x, j, det)) => f.eval(&x) * boundary_factor(&j, det),
                None => f64::NAN,
            })
        }
    };
    let mut out = CoefficientSet {
        dim: d,
        a,
        b: vec(&c.b),
        w: vec(&c.w),
        v,
        eta,
        ellipticity: c.ellipticity,
        integrability: c.integrability,
    };
    let est = out.estimate_ellipticity(&probe_points(d, 0.5));
    if est.lambda.is_finite() && est.lambda > 0.0 {
        out.ellipticity = est;
    }
    Ok(out)
}

fn is_affine<M: CoordinateMap>(map: &M, d: usize) -> bool {
    // A map whose Jacobian agrees at a few scattered points is treated as linear.
    let pts = [[0.0; 3], [0.31, 0.17, 0.23], [-0.27, 0.41, 0.11]];
    let Ok(j0) = map.jacobian(&pts[0][..d]) else {
        return false;
    };
    pts[1..].iter().all(|p| match map.jacobian(&p[..d]) {
        Ok(j) => (0..d).all(|r| (0..d).all(|c| j[r][c] == j0[r][c])),
        Err(_) => false,
    })
}

fn scale_m(mut m: Mat3, s: f64) -> Mat3 {
    for row in m.iter_mut() {
        for v in row.iter_mut() {
            *v *= s;
        }
    }
    m
}

/// `omega(r) = mean over B_r^+ of |A - A0|^2` (Frobenius).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillationModulus {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn oscillation_modulus(a: &MatrixField, a0: &Mat3, radii: &[f64]) -> Result<OscillationModulus> {
    if radii.is_empty() {
        return Err(invalid("oscillation modulus needs at least one radius"));
    }
    if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(invalid("radii must be positive"));
    }
    let d = a.dim();
    let rule = HalfBallRule::standard(d);
    let values = radii
        .iter()
        .map(|r| {
            rule.points
                .iter()
                .zip(&rule.weights)
                .map(|(p, w)| {
                    let x = [p[0] * r, p[1] * r, p[2] * r];
                    let m = a.eval(&x);
                    let mut s = 0.0;
                    for i in 0..d {
                        for j in 0..d {
                            s += (m[i][j] - a0[i][j]).powi(2);
                        }
                    }
                    w * s
                })
                .sum()
        })
        .collect();
    Ok(OscillationModulus {
        radii: radii.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::expr::parse_expr;
    use crate::geometry::{flatten_map, normalizing_map, GraphDomain, LinearChange};

    fn exprs(src: &[&[&str]]) -> Vec<Vec<crate::fields::expr::Expr>> {
        src.iter()
            .map(|r| r.iter().map(|s| parse_expr(s).unwrap()).collect())
            .collect()
    }

    #[test]
    fn zero_eta_needs_no_exterior() {
        use crate::solver::{build_mesh, MeshDomain, MeshOptions};
        let mesh = build_mesh(&MeshDomain::HalfDisk { radius: 1.0 }, &MeshOptions::uniform(0.2)).unwrap();
        let ext = extend_eta(&ScalarField::zero(), &mesh).unwrap();
        assert!(ext.field.is_zero() && ext.total == 0.0);
        assert!(extend_eta(&ScalarField::constant(-1.0), &mesh).is_err());
    }

    #[test]
    fn integrability_conditions() {
        let ok = Integrability { p: 3.0, q: 1.5, s: 1.5 };
        assert!(ok.validate(2).is_ok());
        let bad = Integrability { s: 1.0, ..ok };
        let (key, msg) = bad.validate(2).unwrap_err();
        assert_eq!(key, "s");
        assert!(msg.contains("requires s > d−1"));
        assert_eq!(Integrability { p: 2.0, ..ok }.validate(2).unwrap_err().0, "p");
        assert_eq!(Integrability { q: 1.0, ..ok }.validate(2).unwrap_err().0, "q");
    }

    #[test]
    fn reflection_sign_rules() {
        let a = MatrixField::from_exprs(&exprs(&[&["2 + x", "0.3*y"], &["0.3*y", "1 + y^2"]])).unwrap();
        let c = CoefficientSet::laplace(2)
            .with_a(a)
            .with_b(VectorField::constant(2, [1.0, 1.0, 0.0]))
            .with_v(ScalarField::constant(5.0))
            .with_eta(ScalarField::constant(-1.0));
        let r = reflect_coefficients(&c);
        let (up, down) = ([0.4, 0.3], [0.4, -0.3]);
        let (au, ad) = (r.a.eval(&up), r.a.eval(&down));
        assert_eq!(ad[0][0], au[0][0]);
        assert_eq!(ad[1][1], au[1][1]);
        assert_eq!(ad[0][1], -au[0][1]);
        assert_eq!(ad[1][0], -au[1][0]);
        assert_eq!(r.b.eval(&down), [1.0, -1.0, 0.0]);
        assert_eq!(r.v.constant_value(), Some(5.0));
        assert!(r.eta.is_zero());
    }

    #[test]
    fn pushforward_under_diagonal_scaling() {
        let psi = LinearChange::new(nalgebra::DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0])).unwrap();
        let c = pushforward_coefficients(&CoefficientSet::laplace(2), &psi).unwrap();
        let a = c.a.constant_value().unwrap();
        assert!((a[0][0] - 0.5).abs() < 1e-15 && (a[1][1] - 2.0).abs() < 1e-15);
        assert_eq!(a[0][1], 0.0);
    }

    #[test]
    fn pushforward_normalizes_a0() {
        let a0 = [[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0; 3]];
        let psi = normalizing_map(&MatrixField::constant(2, a0).matrix_at(&[0.0, 0.0])).unwrap();
        let c =
            pushforward_coefficients(&CoefficientSet::laplace(2).with_a(MatrixField::constant(2, a0)), &psi).unwrap();
        let a = c.a.eval(&[0.0, 0.0]);
        // proportional to the identity
        assert!((a[0][0] - a[1][1]).abs() < 1e-12 && a[0][1].abs() < 1e-12);
    }

    #[test]
    fn identity_pushforward_is_unchanged() {
        let dom = GraphDomain::flat(2, 1.0).unwrap();
        let map = flatten_map(&dom, None).unwrap();
        let a = MatrixField::from_exprs(&exprs(&[&["2 + x", "0.1"], &["0.1", "1"]])).unwrap();
        let c = CoefficientSet::laplace(2)
            .with_a(a.clone())
            .with_eta(ScalarField::constant(-1.0));
        let p = pushforward_coefficients(&c, &map).unwrap();
        let y = [0.3, 0.2];
        assert_eq!(p.a.eval(&y), a.eval(&y));
        assert_eq!(p.eta.eval(&[0.3, 0.0]), -1.0);
    }

    #[test]
    fn oscillation_examples() {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0; 3]];
        let om = oscillation_modulus(&MatrixField::identity(2), &id, &[0.5, 0.1]).unwrap();
        assert_eq!(om.values, vec![0.0, 0.0]);

        // A = I + r M with |M|_F^2 = 2: omega(r) = 2 * mean(r^2) = r^2
        let a = MatrixField::from_exprs(&exprs(&[&["1 + r", "0"], &["0", "1 + r"]])).unwrap();
        let om = oscillation_modulus(&a, &id, &[0.4, 0.2, 0.1]).unwrap();
        for (r, w) in om.radii.iter().zip(&om.values) {
            assert!((w - r * r).abs() < 1e-12, "{r}: {w}");
        }

        let jump = MatrixField::from_exprs(&exprs(&[&["1 + 0.1*sign(x)", "0"], &["0", "1"]])).unwrap();
        let om = oscillation_modulus(&jump, &id, &[0.5, 0.01, 1e-4]).unwrap();
        assert!(om.values.iter().all(|v| (v - 0.01).abs() < 1e-12));
        assert!(oscillation_modulus(&jump, &id, &[]).is_err());
    }
}
