//! Piecewise-linear fields on a mesh.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::fields::{CoefficientSet, Field, Vec3};
use crate::quadrature::TRI_7;
use crate::solver::mesh::{BoundaryTag, Mesh};

#[derive(Debug, Clone)]
pub struct SolutionField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
    /// Relative residual of the solve that produced the values (0 for interpolants).
    pub residual: f64,
}

impl SolutionField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(invalid(format!(
                "{} nodal values for {} vertices",
                values.len(),
                mesh.num_vertices()
            )));
        }
        Ok(SolutionField {
            mesh,
            values,
            residual: 0.0,
        })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: Arc<Mesh>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = mesh.vertices.iter().map(|p| f(p)).collect();
        SolutionField {
            mesh,
            values,
            residual: 0.0,
        }
    }

    /// Gradient of the interpolant on triangle `t`.
    pub fn triangle_gradient(&self, t: usize) -> [f64; 2] {
        let g = self.mesh.barycentric_gradients(t);
        let tri = self.mesh.triangles[t];
        let mut out = [0.0; 2];
        for i in 0..3 {
            out[0] += self.values[tri[i]] * g[i][0];
            out[1] += self.values[tri[i]] * g[i][1];
        }
        out
    }

    fn eval_in(&self, t: usize, b: [f64; 3]) -> f64 {
        let tri = self.mesh.triangles[t];
        b[0] * self.values[tri[0]] + b[1] * self.values[tri[1]] + b[2] * self.values[tri[2]]
    }

    /// Boundary vertices on edges with `tag` as `(vertex, point, value)`, ordered by x then y.
    pub fn trace(&self, tag: BoundaryTag) -> Vec<(usize, [f64; 2], f64)> {
        let mut out: Vec<(usize, [f64; 2], f64)> = self
            .mesh
            .boundary_vertices(tag)
            .into_iter()
            .map(|v| (v, self.mesh.vertices[v], self.values[v]))
            .collect();
        out.sort_by(|a, b| a.1[0].total_cmp(&b.1[0]).then(a.1[1].total_cmp(&b.1[1])));
        out
    }

    /// `||u_h - exact||_{L2}` with a 7-point rule per triangle.
    pub fn l2_error(&self, exact: impl Fn(&[f64]) -> f64) -> f64 {
        let mut total = 0.0;
        for t in 0..self.mesh.num_triangles() {
            let p = self.mesh.triangle_points(t);
            let area = self.mesh.area(t);
            for (b, w) in TRI_7.points.iter().zip(TRI_7.weights) {
                let x = [
                    b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0],
                    b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1],
                ];
                let d = self.eval_in(t, *b) - exact(&x);
                total += w * area * d * d;
            }
        }
        total.sqrt()
    }

    /// Mesh-weighted mean `int u / |Omega|`.
    pub fn mean(&self) -> f64 {
        let mut int = 0.0;
        let mut area = 0.0;
        for t in 0..self.mesh.num_triangles() {
            let a = self.mesh.area(t);
            let tri = self.mesh.triangles[t];
            int += a * (self.values[tri[0]] + self.values[tri[1]] + self.values[tri[2]]) / 3.0;
            area += a;
        }
        int / area
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The same nodal values on another mesh with identical topology.
    pub fn on_mesh(&self, mesh: Arc<Mesh>) -> Result<Self> {
        if mesh.triangles != self.mesh.triangles && mesh.num_vertices() != self.mesh.num_vertices() {
            return Err(invalid("meshes differ in topology"));
        }
        Self::new(mesh, self.values.clone())
    }
}

impl Field for SolutionField {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self.mesh.locate_or_extrapolate([x[0], x[1]]) {
            Some((t, b)) => self.eval_in(t, b),
            None => f64::NAN,
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec3 {
        match self.mesh.locate_or_extrapolate([x[0], x[1]]) {
            Some((t, _)) => {
                let g = self.triangle_gradient(t);
                [g[0], g[1], 0.0]
            }
            None => [f64::NAN; 3],
        }
    }

    fn extent(&self) -> Option<f64> {
        Some(self.mesh.radius)
    }
}

/// Conormal flux on one boundary edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFlux {
    pub edge: usize,
    pub midpoint: [f64; 2],
    pub normal: [f64; 2],
    pub length: f64,
    /// `(A grad u + b u) . n` at the midpoint, from the owner triangle's gradient.
    pub value: f64,
}

pub fn boundary_flux(u: &SolutionField, c: &CoefficientSet, tag: BoundaryTag) -> Result<Vec<EdgeFlux>> {
    let mesh = &u.mesh;
    let out: Vec<EdgeFlux> = mesh
        .boundary
        .iter()
        .enumerate()
        .filter(|(_, e)| e.tag == tag)
        .map(|(k, e)| {
            let (a, b) = (mesh.vertices[e.v[0]], mesh.vertices[e.v[1]]);
            let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let (n, length) = mesh.edge_normal(e);
            let g = u.triangle_gradient(e.triangle);
            let um = 0.5 * (u.values[e.v[0]] + u.values[e.v[1]]);
            let s = c.sample(&m);
            let flux = [
                s.a[0][0] * g[0] + s.a[0][1] * g[1] + s.b[0] * um,
                s.a[1][0] * g[0] + s.a[1][1] * g[1] + s.b[1] * um,
            ];
            EdgeFlux {
                edge: k,
                midpoint: m,
                normal: n,
                length,
                value: flux[0] * n[0] + flux[1] * n[1],
            }
        })
        .collect();
    if out.is_empty() {
        return Err(Error::MissingBoundary(tag));
    }
    Ok(out)
}
