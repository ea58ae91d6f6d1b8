//! Piecewise-linear assembly of the weak form
//!
//! `B(u, phi) = int (A grad u + b u) . grad phi - (W . grad u + V u) phi - int_Robin eta u phi`
//!
//! against `int f phi + int_Neumann g phi`, i.e. the weak form of `-Lu = f`,
//! `(A grad u + b u) . n = eta u` (Robin) or `= g` (Neumann).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fields::coefficients::{for_each_boundary_point, BOUNDARY_DATA_POINTS};
use crate::fields::{CoefficientSet, Field, ScalarField};
use crate::quadrature::{gauss_interval, TriangleRule, TRI_3, TRI_7};
use crate::solver::mesh::{BoundaryTag, Mesh};
use crate::solver::solution::SolutionField;
use crate::solver::sparse::{norm2, solve_bordered, solve_sparse, CsrMatrix};

type DataFn = Arc<dyn Fn(&[f64], [f64; 2]) -> f64 + Send + Sync>;

/// Boundary values `g(x, n)`; `breaks` lists radii where `g` may jump, so edges are split there.
#[derive(Clone)]
pub struct BoundaryData {
    f: DataFn,
    pub breaks: Vec<f64>,
    label: String,
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoundaryData({})", self.label)
    }
}

impl BoundaryData {
    pub fn new(label: impl Into<String>, f: impl Fn(&[f64], [f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        BoundaryData {
            f: Arc::new(f),
            breaks: Vec::new(),
            label: label.into(),
        }
    }

    pub fn zero() -> Self {
        Self::new("0", |_, _| 0.0)
    }

    pub fn from_scalar(s: ScalarField) -> Self {
        let label = s.label().to_string();
        Self::new(label, move |x, _| s.eval(x))
    }

    /// The values of a field (for Dirichlet data).
    pub fn values_of<F: Field + 'static>(field: F) -> Self {
        Self::new("field values", move |x, _| field.value(x))
    }

    /// The conormal flux `(A grad u + b u) . n` of a field (for Neumann data).
    pub fn conormal_flux_of<F: Field + 'static>(field: F, c: &CoefficientSet) -> Self {
        let (a, b) = (c.a.clone(), c.b.clone());
        Self::new("conormal flux", move |x, n| {
            let g = field.gradient(x);
            let u = field.value(x);
            let am = a.eval(x);
            let bv = b.eval(x);
            (0..2)
                .map(|i| (am[i][0] * g[0] + am[i][1] * g[1] + bv[i] * u) * n[i])
                .sum()
        })
    }

    pub fn with_breaks(mut self, breaks: &[f64]) -> Self {
        self.breaks = breaks.to_vec();
        self
    }

    #[inline]
    pub fn eval(&self, x: &[f64], n: [f64; 2]) -> f64 {
        (self.f)(x, n)
    }
}

#[derive(Debug, Clone, Default)]
pub enum EdgeCondition {
    /// Homogeneous conormal condition.
    #[default]
    Natural,
    /// `(A grad u + b u) . n = eta u` with `eta` from the coefficient set.
    Robin,
    Neumann(BoundaryData),
    Dirichlet(BoundaryData),
}

#[derive(Debug, Clone, Default)]
pub struct BoundaryConditions {
    by_tag: BTreeMap<BoundaryTag, EdgeCondition>,
}

impl BoundaryConditions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, tag: BoundaryTag, cond: EdgeCondition) -> Self {
        self.by_tag.insert(tag, cond);
        self
    }

    pub fn get(&self, tag: BoundaryTag) -> &EdgeCondition {
        static NATURAL: EdgeCondition = EdgeCondition::Natural;
        self.by_tag.get(&tag).unwrap_or(&NATURAL)
    }

    fn has_dirichlet(&self) -> bool {
        self.by_tag.values().any(|c| matches!(c, EdgeCondition::Dirichlet(_)))
    }
}

#[derive(Debug, Clone, Default)]
pub struct AssemblyOptions {
    /// Add the mean-zero Lagrange row (pure Neumann problems).
    pub mean_zero: bool,
    /// Optional right-hand side `f` of `-Lu = f`.
    pub source: Option<ScalarField>,
    /// 7-point element and 4-point edge rules, for singular coefficients.
    pub singular: bool,
}

#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub mesh: Arc<Mesh>,
    /// Bilinear form on all hat functions, before boundary values are imposed.
    pub operator: CsrMatrix,
    /// Load vector before boundary values are imposed.
    pub load: Vec<f64>,
    /// Dirichlet vertices and their values.
    pub dirichlet: Vec<(usize, f64)>,
    /// Lumped masses `int phi_i` of the mean-zero row, when present.
    pub constraint: Option<Vec<f64>>,
    /// Final matrix: `n` rows, or `n + 1` with the constraint.
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Constants lie in the kernel of the operator (no zeroth-order or Robin terms).
    pub constant_kernel: bool,
}

impl DiscreteSystem {
    pub fn num_vertices(&self) -> usize {
        self.mesh.num_vertices()
    }

    /// `B(u_h, phi_i) - F_i` for all vertices.
    pub fn residual(&self, values: &[f64]) -> Vec<f64> {
        let ku = self.operator.matvec(values);
        ku.iter().zip(&self.load).map(|(a, b)| a - b).collect()
    }

    /// Residual restricted to hats of non-boundary vertices.
    pub fn interior_residual(&self, values: &[f64]) -> Vec<f64> {
        let r = self.residual(values);
        self.mesh.interior_vertices().into_iter().map(|i| r[i]).collect()
    }
}

/// Assembly with default options apart from the mean-zero flag.
pub fn assemble(
    c: &CoefficientSet,
    mesh: &Arc<Mesh>,
    bc: &BoundaryConditions,
    mean_zero: bool,
) -> Result<DiscreteSystem> {
    assemble_with(
        c,
        mesh,
        bc,
        &AssemblyOptions {
            mean_zero,
            ..AssemblyOptions::default()
        },
    )
}

struct Local {
    k: [[f64; 3]; 3],
    f: [f64; 3],
}

fn element(
    c: &CoefficientSet,
    mesh: &Mesh,
    t: usize,
    rule: &TriangleRule,
    source: Option<&ScalarField>,
) -> Result<Local> {
    let p = mesh.triangle_points(t);
    let area = mesh.area(t);
    let g = mesh.barycentric_gradients(t);
    let mut k = [[0.0; 3]; 3];
    let mut f = [0.0; 3];
    for (bary, w) in rule.points.iter().zip(rule.weights) {
        let x = [
            bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
            bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
        ];
        let s = c.sample(&x);
        let src = source.map_or(0.0, |f| f.eval(&x));
        let finite =
            s.a.iter().flatten().chain(&s.b).chain(&s.w).all(|v| v.is_finite()) && s.v.is_finite() && src.is_finite();
        if !finite {
            return Err(invalid(format!("coefficient not finite at ({}, {})", x[0], x[1])));
        }
        let wa = w * area;
        for i in 0..3 {
            for j in 0..3 {
                let agj = [
                    s.a[0][0] * g[j][0] + s.a[0][1] * g[j][1],
                    s.a[1][0] * g[j][0] + s.a[1][1] * g[j][1],
                ];
                let principal = agj[0] * g[i][0] + agj[1] * g[i][1];
                let drift = bary[j] * (s.b[0] * g[i][0] + s.b[1] * g[i][1]);
                let transport = (s.w[0] * g[j][0] + s.w[1] * g[j][1]) * bary[i];
                let potential = s.v * bary[j] * bary[i];
                k[i][j] += wa * (principal + drift - transport - potential);
            }
            f[i] += wa * src * bary[i];
        }
    }
    Ok(Local { k, f })
}

pub fn assemble_with(
    c: &CoefficientSet,
    mesh: &Arc<Mesh>,
    bc: &BoundaryConditions,
    opts: &AssemblyOptions,
) -> Result<DiscreteSystem> {
    if c.dim != 2 {
        return Err(Error::UnsupportedDimension(c.dim));
    }
    if opts.mean_zero && bc.has_dirichlet() {
        return Err(invalid("mean-zero mode does not allow Dirichlet boundary parts"));
    }
    let n = mesh.num_vertices();
    let rule = if opts.singular { &TRI_7 } else { &TRI_3 };
    let edge_points = if opts.singular { 4 } else { 2 };

    let locals: Vec<Local> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| element(c, mesh, t, rule, opts.source.as_ref()))
        .collect::<Result<_>>()?;

    let mut triplets = Vec::with_capacity(9 * locals.len() + 4 * mesh.boundary.len());
    let mut load = vec![0.0; n];
    for (tri, loc) in mesh.triangles.iter().zip(&locals) {
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], loc.k[i][j]));
            }
            load[tri[i]] += loc.f[i];
        }
    }

    // Robin terms
    let mut robin_active = false;
    let (gx, gw) = gauss_interval(edge_points, 0.0, 1.0);
    for e in &mesh.boundary {
        if !matches!(bc.get(e.tag), EdgeCondition::Robin) {
            continue;
        }
        let (a, b) = (mesh.vertices[e.v[0]], mesh.vertices[e.v[1]]);
        let (_, len) = mesh.edge_normal(e);
        let mut m = [[0.0; 2]; 2];
        for (t, w) in gx.iter().zip(&gw) {
            let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let eta = c.eta.eval(&x);
            if !eta.is_finite() {
                return Err(invalid(format!("eta not finite at ({}, {})", x[0], x[1])));
            }
            if eta != 0.0 {
                robin_active = true;
            }
            let phi = [1.0 - t, *t];
            for i in 0..2 {
                for j in 0..2 {
                    m[i][j] += w * len * eta * phi[i] * phi[j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                triplets.push((e.v[i], e.v[j], -m[i][j]));
            }
        }
    }
    let operator = CsrMatrix::from_triplets(n, n, triplets);

    // Neumann loads, one pass per distinct condition
    for tag in [BoundaryTag::Flat, BoundaryTag::Arc, BoundaryTag::Full] {
        let EdgeCondition::Neumann(data) = bc.get(tag) else {
            continue;
        };
        let points = BOUNDARY_DATA_POINTS.max(edge_points);
        let mut bad = None;
        for_each_boundary_point(mesh, &data.breaks, points, |k, p, t, w| {
            let e = &mesh.boundary[k];
            if e.tag != tag {
                return;
            }
            let (nrm, _) = mesh.edge_normal(e);
            let g = data.eval(&p, nrm);
            if !g.is_finite() {
                bad = Some(p);
            }
            load[e.v[0]] += w * g * (1.0 - t);
            load[e.v[1]] += w * g * t;
        });
        if let Some(p) = bad {
            return Err(invalid(format!("Neumann data not finite at ({}, {})", p[0], p[1])));
        }
    }

    // Dirichlet values
    let mut fixed: BTreeMap<usize, f64> = BTreeMap::new();
    for e in &mesh.boundary {
        if let EdgeCondition::Dirichlet(data) = bc.get(e.tag) {
            let (nrm, _) = mesh.edge_normal(e);
            for &v in &e.v {
                if let std::collections::btree_map::Entry::Vacant(slot) = fixed.entry(v) {
                    let val = data.eval(&mesh.vertices[v], nrm);
                    if !val.is_finite() {
                        let p = mesh.vertices[v];
                        return Err(invalid(format!("Dirichlet data not finite at ({}, {})", p[0], p[1])));
                    }
                    slot.insert(val);
                }
            }
        }
    }
    let dirichlet: Vec<(usize, f64)> = fixed.iter().map(|(&i, &v)| (i, v)).collect();

    let constant_kernel = c.b.is_zero() && c.v.is_zero() && !robin_active;

    // final system
    let mut is_fixed = vec![None; n];
    for &(i, v) in &dirichlet {
        is_fixed[i] = Some(v);
    }
    let mut rhs = load.clone();
    let mut final_triplets = Vec::with_capacity(operator.nnz() + 2 * n);
    for i in 0..n {
        if let Some(v) = is_fixed[i] {
            final_triplets.push((i, i, 1.0));
            rhs[i] = v;
            continue;
        }
        for (j, a) in operator.row(i) {
            match is_fixed[j] {
                Some(v) => rhs[i] -= a * v,
                None => final_triplets.push((i, j, a)),
            }
        }
    }
    let constraint = if opts.mean_zero {
        let total: f64 = load.iter().sum();
        if total.abs() > 1e-8 {
            return Err(Error::Compatibility { total });
        }
        let mut m = vec![0.0; n];
        for t in 0..mesh.num_triangles() {
            let a = mesh.area(t) / 3.0;
            for &v in &mesh.triangles[t] {
                m[v] += a;
            }
        }
        for (i, &mi) in m.iter().enumerate() {
            final_triplets.push((i, n, mi));
            final_triplets.push((n, i, mi));
        }
        rhs.push(0.0);
        Some(m)
    } else {
        None
    };
    let size = if opts.mean_zero { n + 1 } else { n };
    let matrix = CsrMatrix::from_triplets(size, size, final_triplets);
    Ok(DiscreteSystem {
        mesh: Arc::clone(mesh),
        operator,
        load,
        dirichlet,
        constraint,
        matrix,
        rhs,
        constant_kernel,
    })
}

/// Relative residual target of the direct solve.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

pub fn solve_system(sys: &DiscreteSystem) -> Result<SolutionField> {
    solve_system_from(sys, None)
}

/// Solve starting iterative refinement from an initial guess (vertex values).
pub fn solve_system_from(sys: &DiscreteSystem, guess: Option<&[f64]>) -> Result<SolutionField> {
    let n = sys.num_vertices();
    if sys.constraint.is_none() && sys.dirichlet.is_empty() && sys.constant_kernel {
        return Err(Error::SingularSystem(
            "constants are in the kernel: add Dirichlet data or use mean-zero mode".into(),
        ));
    }
    let start = guess.map(|g| {
        let mut x = g.to_vec();
        x.resize(sys.matrix.n_rows, 0.0);
        x
    });
    let (x, rel) = match &sys.constraint {
        Some(m) => solve_bordered(
            &sys.operator,
            m,
            &sys.matrix,
            &sys.rhs,
            start.as_deref(),
            SOLVE_TOLERANCE,
        )?,
        None => solve_sparse(&sys.matrix, &sys.rhs, start.as_deref(), SOLVE_TOLERANCE)?,
    };
    let mut values = x[..n].to_vec();
    if let Some(m) = &sys.constraint {
        // remove the rounding-level mean left by the solve
        let area: f64 = m.iter().sum();
        let mean = values.iter().zip(m).map(|(u, w)| u * w).sum::<f64>() / area;
        for v in values.iter_mut() {
            *v -= mean;
        }
    }
    let mut field = SolutionField::new(Arc::clone(&sys.mesh), values)?;
    field.residual = rel;
    Ok(field)
}

/// Relative residual of a candidate vector against the final system.
pub fn system_residual(sys: &DiscreteSystem, x: &[f64]) -> f64 {
    let ax = sys.matrix.matvec(x);
    let r: Vec<f64> = ax.iter().zip(&sys.rhs).map(|(a, b)| a - b).collect();
    let b = norm2(&sys.rhs);
    if b == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / b
    }
}

/// Weak residual `B(u, phi_i) - int f phi_i` of an arbitrary field against the hat
/// functions of interior vertices, with exact gradients and a 7-point rule.
pub fn weak_residual(mesh: &Mesh, c: &CoefficientSet, field: &dyn Field, source: Option<&ScalarField>) -> Vec<f64> {
    let n = mesh.num_vertices();
    let locals: Vec<[f64; 3]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let p = mesh.triangle_points(t);
            let area = mesh.area(t);
            let g = mesh.barycentric_gradients(t);
            let mut r = [0.0; 3];
            for (bary, w) in TRI_7.points.iter().zip(TRI_7.weights) {
                let x = [
                    bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                    bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
                ];
                let s = c.sample(&x);
                let u = field.value(&x);
                let du = field.gradient(&x);
                let flux = [
                    s.a[0][0] * du[0] + s.a[0][1] * du[1] + s.b[0] * u,
                    s.a[1][0] * du[0] + s.a[1][1] * du[1] + s.b[1] * u,
                ];
                let zeroth = s.w[0] * du[0] + s.w[1] * du[1] + s.v * u + source.map_or(0.0, |f| f.eval(&x));
                for i in 0..3 {
                    r[i] += w * area * (flux[0] * g[i][0] + flux[1] * g[i][1] - zeroth * bary[i]);
                }
            }
            r
        })
        .collect();
    let mut total = vec![0.0; n];
    for (tri, r) in mesh.triangles.iter().zip(&locals) {
        for i in 0..3 {
            total[tri[i]] += r[i];
        }
    }
    mesh.interior_vertices().into_iter().map(|i| total[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::mesh::{build_mesh, MeshDomain, MeshOptions};

    fn half(h: f64) -> Arc<Mesh> {
        Arc::new(build_mesh(&MeshDomain::HalfDisk { radius: 1.0 }, &MeshOptions::uniform(h)).unwrap())
    }

    fn two_triangles() -> Arc<Mesh> {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let t = vec![[0, 1, 2], [0, 2, 3]];
        Arc::new(
            Mesh::from_parts(v, t, 1.0, |a, b| {
                if a[1] == 0.0 && b[1] == 0.0 {
                    BoundaryTag::Flat
                } else {
                    BoundaryTag::Arc
                }
            })
            .unwrap(),
        )
    }

    #[test]
    fn laplace_stiffness_matches_cotangent_formula() {
        let mesh = half(0.2);
        let bc = BoundaryConditions::new().with(BoundaryTag::Arc, EdgeCondition::Dirichlet(BoundaryData::zero()));
        let sys = assemble(&CoefficientSet::laplace(2), &mesh, &bc, false).unwrap();
        // K_ij = -(cot a + cot b)/2 for an edge, K_ii = -sum_j K_ij
        let mut expect: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for tri in &mesh.triangles {
            for k in 0..3 {
                let (i, j, o) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let (pi, pj, po) = (mesh.vertices[i], mesh.vertices[j], mesh.vertices[o]);
                let u = [pi[0] - po[0], pi[1] - po[1]];
                let v = [pj[0] - po[0], pj[1] - po[1]];
                let cot = (u[0] * v[0] + u[1] * v[1]) / (u[0] * v[1] - u[1] * v[0]).abs();
                for (a, b) in [(i, j), (j, i)] {
                    *expect.entry((a, b)).or_default() -= 0.5 * cot;
                    *expect.entry((a, a)).or_default() += 0.5 * cot;
                }
            }
        }
        let mut gap = 0.0f64;
        for (&(i, j), &v) in &expect {
            gap = gap.max((sys.operator.get(i, j) - v).abs());
        }
        assert!(gap < 1e-12, "gap {gap}");
        assert!(sys.operator.asymmetry() < 1e-14);
    }

    #[test]
    fn robin_term_is_boundary_mass() {
        let mesh = two_triangles();
        let natural = assemble(&CoefficientSet::laplace(2), &mesh, &BoundaryConditions::new(), false).unwrap();
        let c = CoefficientSet::laplace(2).with_eta(ScalarField::constant(-1.0));
        let bc = BoundaryConditions::new().with(BoundaryTag::Flat, EdgeCondition::Robin);
        let robin = assemble(&c, &mesh, &bc, false).unwrap();
        // int eta phi_i phi_j on the edge (0,0)-(1,0) equals the negated consistent mass
        let eta_mass = |i: usize, j: usize| natural.operator.get(i, j) - robin.operator.get(i, j);
        assert!((eta_mass(0, 0) + 1.0 / 3.0).abs() < 1e-15);
        assert!((eta_mass(0, 1) + 1.0 / 6.0).abs() < 1e-15);
        // and its row sums equal the negated lumped mass
        assert!((eta_mass(0, 0) + eta_mass(0, 1) + 0.5).abs() < 1e-15);
        assert!((eta_mass(1, 1) + eta_mass(1, 0) + 0.5).abs() < 1e-15);
        assert_eq!(eta_mass(2, 2), 0.0);
        assert!(!robin.constant_kernel);
    }

    #[test]
    fn recovers_linear_function() {
        let mesh = half(0.1);
        let bc = BoundaryConditions::new().with(
            BoundaryTag::Arc,
            EdgeCondition::Dirichlet(BoundaryData::new("x", |x, _| x[0])),
        );
        let sys = assemble(&CoefficientSet::laplace(2), &mesh, &bc, false).unwrap();
        let u = solve_system(&sys).unwrap();
        assert!(u.l2_error(|x| x[0]) < 1e-10);
        assert!(u.residual <= 1e-10);
    }

    #[test]
    fn mean_zero_neumann() {
        let mesh = half(0.1);
        let bc = BoundaryConditions::new().with(
            BoundaryTag::Arc,
            EdgeCondition::Neumann(BoundaryData::new("cos", |x, _| x[0].atan2(x[1]).sin())),
        );
        // sin(atan2(x, y)) = x/r = cos(theta) on the arc
        let sys = assemble(&CoefficientSet::laplace(2), &mesh, &bc, true).unwrap();
        let u = solve_system(&sys).unwrap();
        assert!(u.mean().abs() < 1e-10);
        assert!(u.residual <= 1e-10);
        let v = solve_system_from(&sys, Some(&vec![3.0; mesh.num_vertices()])).unwrap();
        let gap = u
            .values
            .iter()
            .zip(&v.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-9);
    }

    #[test]
    fn incompatible_neumann_rejected() {
        let mesh = half(0.2);
        let bc = BoundaryConditions::new().with(
            BoundaryTag::Arc,
            EdgeCondition::Neumann(BoundaryData::new("1", |_, _| 1.0)),
        );
        let err = assemble(&CoefficientSet::laplace(2), &mesh, &bc, true).unwrap_err();
        assert!(matches!(err, Error::Compatibility { .. }));
    }

    #[test]
    fn pure_neumann_without_constraint_is_singular() {
        let mesh = half(0.2);
        let sys = assemble(&CoefficientSet::laplace(2), &mesh, &BoundaryConditions::new(), false).unwrap();
        assert!(matches!(solve_system(&sys), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn assembly_is_thread_count_independent() {
        let mesh = half(0.05);
        let c = CoefficientSet::laplace(2).with_v(ScalarField::from_fn("v", |x| x[0] * x[1]));
        let bc = BoundaryConditions::new().with(BoundaryTag::Arc, EdgeCondition::Dirichlet(BoundaryData::zero()));
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| assemble(&c, &mesh, &bc, false).unwrap());
        let b = four.install(|| assemble(&c, &mesh, &bc, false).unwrap());
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.rhs, b.rhs);
    }
}
