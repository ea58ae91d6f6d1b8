//! Graded ring meshes of half-disks, full disks and graph domains.
//!
//! Vertices sit on concentric rings; ring `k` carries `12 q_k` points around the full
//! circle. One 30 degree sector is triangulated by zipping consecutive rings and then
//! mirrored into the others, so the mesh is invariant under the reflections of the
//! 12-gon. That symmetry keeps discrete solutions with data `cos(m theta)` free of
//! lower angular modes.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::GraphDomain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    /// The flat part `{x_d = 0}` (or the graph).
    Flat,
    /// The curved part of a half-disk.
    Arc,
    /// The boundary circle of a full disk.
    Full,
}

impl BoundaryTag {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::Flat => "flat",
            BoundaryTag::Arc => "arc",
            BoundaryTag::Full => "full",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "flat" => Some(BoundaryTag::Flat),
            "arc" => Some(BoundaryTag::Arc),
            "full" => Some(BoundaryTag::Full),
            _ => None,
        }
    }
}

/// A boundary edge oriented counter-clockwise with respect to its triangle, so the
/// outward normal is `(e_y, -e_x) / |e|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub v: [usize; 2],
    pub tag: BoundaryTag,
    pub triangle: usize,
}

#[derive(Debug, Clone)]
pub enum MeshDomain {
    HalfDisk { radius: f64 },
    FullDisk { radius: f64 },
    Graph { domain: GraphDomain, radius: f64 },
}

impl MeshDomain {
    pub fn radius(&self) -> f64 {
        match self {
            MeshDomain::HalfDisk { radius } | MeshDomain::FullDisk { radius } | MeshDomain::Graph { radius, .. } => {
                *radius
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshOptions {
    /// Target element size away from the origin.
    pub h: f64,
    /// Radial grading exponent in [1, 3]; sizes behave like `h (|x|/R)^(g-1)`.
    pub grading: Option<f64>,
    /// Radii that must appear exactly as rings (e.g. `1.0` inside a radius-2 host).
    pub breakpoints: Vec<f64>,
}

impl MeshOptions {
    pub fn uniform(h: f64) -> Self {
        MeshOptions {
            h,
            grading: None,
            breakpoints: Vec::new(),
        }
    }

    pub fn graded(h: f64, grading: f64) -> Self {
        MeshOptions {
            h,
            grading: Some(grading),
            breakpoints: Vec::new(),
        }
    }

    pub fn with_breakpoints(mut self, radii: &[f64]) -> Self {
        self.breakpoints = radii.to_vec();
        self
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryEdge>,
    /// Target size used to build the mesh.
    pub h: f64,
    /// Radius of the largest centred (half-)disk covered by the mesh.
    pub radius: f64,
    /// For mirrored meshes: index of the reflected vertex under `y -> -y`.
    pub mirror: Option<Vec<usize>>,
    locator: Locator,
}

/// Builds a mesh of the domain; fails when fewer than 50 triangles result.
pub fn build_mesh(domain: &MeshDomain, opts: &MeshOptions) -> Result<Mesh> {
    let radius = domain.radius();
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid(format!("mesh radius must be positive, got {radius}")));
    }
    if !(opts.h > 0.0 && opts.h.is_finite()) {
        return Err(invalid(format!("mesh size h must be positive, got {}", opts.h)));
    }
    if let Some(g) = opts.grading {
        if !(1.0..=3.0).contains(&g) {
            return Err(invalid(format!("grading exponent must lie in [1, 3], got {g}")));
        }
    }
    let half = half_disk(radius, opts)?;
    match domain {
        MeshDomain::HalfDisk { .. } => Ok(half),
        MeshDomain::FullDisk { .. } => half.mirror(),
        MeshDomain::Graph { domain, .. } => {
            if domain.dim != 2 {
                return Err(Error::UnsupportedDimension(domain.dim));
            }
            let mut m = half;
            for v in m.vertices.iter_mut() {
                let phi = domain.phi_at(&[v[0]]);
                v[1] = if v[1] == 0.0 { phi } else { v[1] + phi };
            }
            m.locator = Locator::build(&m.vertices, &m.triangles);
            Ok(m)
        }
    }
}

/// Element size `max(h (r/R)^(g-1), min(h^2, h))`, additionally capped by `pi r / 6` in
/// the graded region so the radial step never outruns the angular spacing of a
/// single-point sector. `G(r) = int_0^r dr/s` is tabulated for inversion.
struct Sizing {
    h: f64,
    g: f64,
    radius: f64,
    smin: f64,
    rstar: f64,
    /// `(r, G(r))` on a geometric grid beyond `rstar` (graded case only).
    table: Vec<(f64, f64)>,
}

const GROWTH_CAP: f64 = PI / 6.0;

impl Sizing {
    fn new(h: f64, grading: Option<f64>, radius: f64) -> Self {
        let g = grading.unwrap_or(1.0);
        let smin = (h * h).min(h);
        let rstar = if g > 1.0 {
            (radius * (smin / h).powf(1.0 / (g - 1.0))).min(radius)
        } else {
            0.0
        };
        let mut sz = Sizing {
            h,
            g,
            radius,
            smin,
            rstar,
            table: Vec::new(),
        };
        if g > 1.0 && rstar < radius {
            let (gx, gw) = crate::quadrature::gauss_interval(4, 0.0, 1.0);
            let n = 4000;
            let ratio = (radius / rstar).powf(1.0 / n as f64);
            let mut r0 = rstar;
            let mut acc = rstar / smin;
            sz.table.push((r0, acc));
            for k in 1..=n {
                let r1 = if k == n { radius } else { rstar * ratio.powi(k) };
                acc += gx
                    .iter()
                    .zip(&gw)
                    .map(|(x, w)| w * (r1 - r0) / sz.size(r0 + x * (r1 - r0)))
                    .sum::<f64>();
                sz.table.push((r1, acc));
                r0 = r1;
            }
        }
        sz
    }

    fn size(&self, r: f64) -> f64 {
        if self.g == 1.0 {
            return self.h;
        }
        if r <= self.rstar {
            return self.smin;
        }
        (self.h * (r / self.radius).powf(self.g - 1.0))
            .min(GROWTH_CAP * r)
            .max(self.smin)
    }

    fn cumulative(&self, r: f64) -> f64 {
        if self.g == 1.0 {
            return r / self.h;
        }
        if r <= self.rstar || self.table.is_empty() {
            return r / self.smin;
        }
        let k = self
            .table
            .partition_point(|&(x, _)| x < r)
            .clamp(1, self.table.len() - 1);
        let (r0, g0) = self.table[k - 1];
        let (r1, g1) = self.table[k];
        g0 + (g1 - g0) * (r - r0) / (r1 - r0)
    }

    fn invert(&self, target: f64, lo: f64, hi: f64) -> f64 {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.cumulative(m) < target {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (a + b)
    }
}

fn ring_radii(radius: f64, opts: &MeshOptions) -> Vec<f64> {
    let sizing = Sizing::new(opts.h, opts.grading, radius);
    let mut stops: Vec<f64> = opts
        .breakpoints
        .iter()
        .copied()
        .filter(|b| *b > 0.0 && *b < radius)
        .collect();
    stops.push(radius);
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let mut radii = Vec::new();
    let mut lo = 0.0;
    for &hi in &stops {
        let (g0, g1) = (sizing.cumulative(lo), sizing.cumulative(hi));
        let k = ((g1 - g0).round() as usize).max(1);
        for l in 1..k {
            let target = g0 + (g1 - g0) * l as f64 / k as f64;
            radii.push(sizing.invert(target, lo, hi));
        }
        radii.push(hi);
        lo = hi;
    }
    radii
}

fn ring_counts(radii: &[f64], sizing: &Sizing) -> Vec<usize> {
    let mut q: Vec<usize> = radii
        .iter()
        .map(|&r| ((PI * r / (6.0 * sizing.size(r))).round() as usize).max(1))
        .collect();
    q[0] = 1;
    for k in 1..q.len() {
        q[k] = q[k].min(2 * q[k - 1]);
    }
    for k in (0..q.len() - 1).rev() {
        q[k] = q[k].min(2 * q[k + 1]);
    }
    q
}

/// Point at angle fraction `j / (12 q)` of the full turn on a ring, built so that the
/// half-disk is exactly symmetric under `x -> -x` and the flat side has `y == 0`.
fn ring_point(r: f64, j: usize, q: usize) -> [f64; 2] {
    let quarter = 3 * q;
    let half = 6 * q;
    if j == 0 {
        return [r, 0.0];
    }
    if j == half {
        return [-r, 0.0];
    }
    if j == quarter {
        return [0.0, r];
    }
    if j < quarter {
        let t = PI * j as f64 / half as f64;
        // Use the complementary angle near the top so both halves of the quarter are accurate.
        if 2 * j <= quarter {
            [r * t.cos(), r * t.sin()]
        } else {
            let c = PI * (quarter - j) as f64 / half as f64;
            [r * c.sin(), r * c.cos()]
        }
    } else {
        let p = ring_point(r, half - j, q);
        [-p[0], p[1]]
    }
}

fn min_angle_of(p: [[f64; 2]; 3]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..3 {
        let a = p[i];
        let b = p[(i + 1) % 3];
        let c = p[(i + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cos = (u[0] * v[0] + u[1] * v[1]) / ((u[0].hypot(u[1])) * (v[0].hypot(v[1])));
        m = m.min(cos.clamp(-1.0, 1.0).acos());
    }
    m.to_degrees()
}

fn signed_area(p: [[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

/// Vertex handle in the base sector: (ring, index within the sector), ring 0 is the origin.
type Local = (usize, usize);

fn half_disk(radius: f64, opts: &MeshOptions) -> Result<Mesh> {
    let sizing = Sizing::new(opts.h, opts.grading, radius);
    let radii = ring_radii(radius, opts);
    let q = ring_counts(&radii, &sizing);

    // vertices: origin, then ring by ring, angle index 0..=6q
    let mut vertices = vec![[0.0, 0.0]];
    let mut offset = vec![0usize];
    for (k, &r) in radii.iter().enumerate() {
        offset.push(vertices.len());
        for j in 0..=6 * q[k] {
            vertices.push(ring_point(r, j, q[k]));
        }
    }
    let qs = |ring: usize| if ring == 0 { 0 } else { q[ring - 1] };
    let global = |(ring, i): Local, sector: usize| -> usize {
        if ring == 0 {
            return 0;
        }
        let qq = q[ring - 1];
        let j = if sector.is_multiple_of(2) {
            sector * qq + i
        } else {
            (sector + 1) * qq - i
        };
        offset[ring] + j
    };
    let base_point = |(ring, i): Local| -> [f64; 2] {
        if ring == 0 {
            [0.0, 0.0]
        } else {
            vertices[offset[ring] + i]
        }
    };

    // triangulate the base sector [0, 30 degrees]
    let mut base: Vec<[Local; 3]> = Vec::new();
    for ring in 1..=radii.len() {
        let (qa, qb) = (qs(ring - 1), qs(ring));
        if ring == 1 {
            for j in 0..qb {
                base.push([(0, 0), (1, j), (1, j + 1)]);
            }
            continue;
        }
        let (mut i, mut j) = (0usize, 0usize);
        while i < qa || j < qb {
            let inner_step = [(ring - 1, i), (ring - 1, i + 1), (ring, j)];
            let outer_step = [(ring - 1, i), (ring, j), (ring, j + 1)];
            let advance_inner = if i == qa {
                false
            } else if j == qb {
                true
            } else {
                let (a, b) = ((i + 1) * qb, (j + 1) * qa);
                if a != b {
                    a < b
                } else {
                    let qi = min_angle_of(inner_step.map(base_point));
                    let qo = min_angle_of(outer_step.map(base_point));
                    qi >= qo
                }
            };
            if advance_inner {
                base.push(inner_step);
                i += 1;
            } else {
                base.push(outer_step);
                j += 1;
            }
        }
    }

    let mut triangles = Vec::with_capacity(base.len() * 6);
    for sector in 0..6 {
        for t in &base {
            let mut tri = t.map(|l| global(l, sector));
            let pts = tri.map(|v| vertices[v]);
            if signed_area(pts) < 0.0 {
                tri.swap(1, 2);
            }
            triangles.push(tri);
        }
    }
    if triangles.len() < 50 {
        return Err(Error::MeshTooCoarse {
            triangles: triangles.len(),
        });
    }
    let boundary = boundary_edges(&vertices, &triangles, |a, b| {
        if a[1] == 0.0 && b[1] == 0.0 {
            BoundaryTag::Flat
        } else {
            BoundaryTag::Arc
        }
    });
    let locator = Locator::build(&vertices, &triangles);
    Ok(Mesh {
        vertices,
        triangles,
        boundary,
        h: opts.h,
        radius,
        mirror: None,
        locator,
    })
}

fn boundary_edges(
    vertices: &[[f64; 2]],
    triangles: &[[usize; 3]],
    tag: impl Fn([f64; 2], [f64; 2]) -> BoundaryTag,
) -> Vec<BoundaryEdge> {
    let mut count: HashMap<(usize, usize), (usize, usize, usize, usize)> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let e = count.entry(key).or_insert((0, t, a, b));
            e.0 += 1;
        }
    }
    let mut edges: Vec<BoundaryEdge> = count
        .into_values()
        .filter(|e| e.0 == 1)
        .map(|(_, t, a, b)| BoundaryEdge {
            v: [a, b],
            tag: tag(vertices[a], vertices[b]),
            triangle: t,
        })
        .collect();
    edges.sort_by_key(|e| (e.triangle, e.v));
    edges
}

impl Mesh {
    /// Assembles a mesh from raw parts; triangles are reoriented counter-clockwise and
    /// boundary edges recomputed, keeping tags given by `tag`.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        h: f64,
        tag: impl Fn([f64; 2], [f64; 2]) -> BoundaryTag,
    ) -> Result<Mesh> {
        for tri in triangles.iter_mut() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(invalid("triangle references a missing vertex"));
            }
            let a = signed_area(tri.map(|v| vertices[v]));
            if a == 0.0 {
                return Err(invalid("degenerate triangle"));
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }
        let boundary = boundary_edges(&vertices, &triangles, tag);
        let locator = Locator::build(&vertices, &triangles);
        let mut m = Mesh {
            vertices,
            triangles,
            boundary,
            h,
            radius: 0.0,
            mirror: None,
            locator,
        };
        m.radius = m.inner_radius();
        Ok(m)
    }

    /// Distance from the origin to the nearest non-flat boundary vertex.
    pub fn inner_radius(&self) -> f64 {
        self.boundary
            .iter()
            .filter(|e| e.tag != BoundaryTag::Flat)
            .flat_map(|e| e.v)
            .map(|v| self.vertices[v][0].hypot(self.vertices[v][1]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(self.triangle_points(t))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// Gradients of the three barycentric coordinates of triangle `t`.
    pub fn barycentric_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let p = self.triangle_points(t);
        let two_a = 2.0 * signed_area(p);
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let b = p[(i + 1) % 3];
            let c = p[(i + 2) % 3];
            g[i] = [(b[1] - c[1]) / two_a, (c[0] - b[0]) / two_a];
        }
        g
    }

    pub fn min_angle(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| min_angle_of(self.triangle_points(t)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Outward unit normal and length of a boundary edge.
    pub fn edge_normal(&self, e: &BoundaryEdge) -> ([f64; 2], f64) {
        let (a, b) = (self.vertices[e.v[0]], self.vertices[e.v[1]]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let len = d[0].hypot(d[1]);
        ([d[1] / len, -d[0] / len], len)
    }

    pub fn edges_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary.iter().filter(move |e| e.tag == tag)
    }

    /// Sorted, de-duplicated vertices on edges with the given tag.
    pub fn boundary_vertices(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self.edges_with_tag(tag).flat_map(|e| e.v).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Vertices not on any boundary edge.
    pub fn interior_vertices(&self) -> Vec<usize> {
        let mut on = vec![false; self.vertices.len()];
        for e in &self.boundary {
            on[e.v[0]] = true;
            on[e.v[1]] = true;
        }
        (0..self.vertices.len()).filter(|&i| !on[i]).collect()
    }

    /// Full-disk mesh from a mesh whose flat boundary lies on `y = 0`.
    pub fn mirror(&self) -> Result<Mesh> {
        let flat = self.boundary_vertices(BoundaryTag::Flat);
        if flat.is_empty() {
            return Err(Error::MissingBoundary(BoundaryTag::Flat));
        }
        if let Some(&v) = flat.iter().find(|&&v| self.vertices[v][1] != 0.0) {
            return Err(invalid(format!(
                "cannot mirror: flat boundary vertex {v} has y = {:e}",
                self.vertices[v][1]
            )));
        }
        let n = self.vertices.len();
        let mut vertices = self.vertices.clone();
        let mut map = vec![0usize; n];
        for (i, p) in self.vertices.iter().enumerate() {
            if p[1] == 0.0 {
                map[i] = i;
            } else {
                map[i] = vertices.len();
                vertices.push([p[0], -p[1]]);
            }
        }
        let mut mirror = vec![0usize; vertices.len()];
        for i in 0..n {
            mirror[i] = map[i];
            mirror[map[i]] = i;
        }
        let mut triangles = self.triangles.clone();
        for t in &self.triangles {
            triangles.push([map[t[0]], map[t[2]], map[t[1]]]);
        }
        let boundary = boundary_edges(&vertices, &triangles, |_, _| BoundaryTag::Full);
        let locator = Locator::build(&vertices, &triangles);
        Ok(Mesh {
            vertices,
            triangles,
            boundary,
            h: self.h,
            radius: self.radius,
            mirror: Some(mirror),
            locator,
        })
    }

    /// The sub-mesh of triangles inside `|x| <= r`; new boundary edges are tagged `Arc`.
    /// Returns the mesh and, for every new vertex, its index in `self`.
    pub fn restrict_to_ball(&self, r: f64) -> Result<(Mesh, Vec<usize>)> {
        let lim = r * (1.0 + 1e-12);
        let inside: Vec<bool> = self.vertices.iter().map(|p| p[0].hypot(p[1]) <= lim).collect();
        let mut new_index = vec![usize::MAX; self.vertices.len()];
        let mut parent = Vec::new();
        let mut triangles = Vec::new();
        for t in &self.triangles {
            if t.iter().all(|&v| inside[v]) {
                let tri = t.map(|v| {
                    if new_index[v] == usize::MAX {
                        new_index[v] = parent.len();
                        parent.push(v);
                    }
                    new_index[v]
                });
                triangles.push(tri);
            }
        }
        if triangles.is_empty() {
            return Err(invalid(format!("no triangles inside radius {r}")));
        }
        let old_tags: HashMap<(usize, usize), BoundaryTag> = self
            .boundary
            .iter()
            .map(|e| ((e.v[0].min(e.v[1]), e.v[0].max(e.v[1])), e.tag))
            .collect();
        let vertices: Vec<[f64; 2]> = parent.iter().map(|&v| self.vertices[v]).collect();
        let mut boundary = boundary_edges(&vertices, &triangles, |_, _| BoundaryTag::Arc);
        for e in boundary.iter_mut() {
            let (a, b) = (parent[e.v[0]], parent[e.v[1]]);
            if let Some(tag) = old_tags.get(&(a.min(b), a.max(b))) {
                e.tag = *tag;
            }
        }
        let locator = Locator::build(&vertices, &triangles);
        let mut m = Mesh {
            vertices,
            triangles,
            boundary,
            h: self.h,
            radius: r,
            mirror: None,
            locator,
        };
        m.radius = m.inner_radius().min(r);
        Ok((m, parent))
    }

    /// Same topology with moved vertices; orientation and tags are preserved.
    pub fn map_vertices(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Mesh> {
        let mut vertices: Vec<[f64; 2]> = self.vertices.iter().map(|&p| f(p)).collect();
        // flat vertices stay exactly on y = 0 when the map keeps them there up to rounding
        for v in self.boundary_vertices(BoundaryTag::Flat) {
            if self.vertices[v][1] == 0.0 && vertices[v][1].abs() < 1e-12 {
                vertices[v][1] = 0.0;
            }
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(invalid("vertex map produced non-finite coordinates"));
        }
        let mut triangles = self.triangles.clone();
        let mut flipped = false;
        for tri in triangles.iter_mut() {
            let a = signed_area(tri.map(|v| vertices[v]));
            if a == 0.0 {
                return Err(invalid("vertex map collapsed a triangle"));
            }
            if a < 0.0 {
                tri.swap(1, 2);
                flipped = true;
            }
        }
        let mut boundary = self.boundary.clone();
        if flipped {
            let tags: HashMap<(usize, usize), BoundaryTag> = self
                .boundary
                .iter()
                .map(|e| ((e.v[0].min(e.v[1]), e.v[0].max(e.v[1])), e.tag))
                .collect();
            boundary = boundary_edges(&vertices, &triangles, |_, _| BoundaryTag::Arc);
            for e in boundary.iter_mut() {
                e.tag = tags[&(e.v[0].min(e.v[1]), e.v[0].max(e.v[1]))];
            }
        }
        let locator = Locator::build(&vertices, &triangles);
        let mut m = Mesh {
            vertices,
            triangles,
            boundary,
            h: self.h,
            radius: 0.0,
            mirror: self.mirror.clone(),
            locator,
        };
        m.radius = m.inner_radius();
        Ok(m)
    }

    /// Triangle containing `p` with its barycentric coordinates.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        self.locator.find(p, &self.vertices, &self.triangles)
    }

    /// Like [`Mesh::locate`], but points slightly outside (within half an edge length of the
    /// boundary) are assigned to the owner triangle of the nearest boundary edge, with
    /// extrapolated barycentric coordinates.
    pub fn locate_or_extrapolate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        if let Some(hit) = self.locate(p) {
            return Some(hit);
        }
        let mut best: Option<(f64, &BoundaryEdge, f64)> = None;
        for e in &self.boundary {
            let (a, b) = (self.vertices[e.v[0]], self.vertices[e.v[1]]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
            let c = [a[0] + t * d[0], a[1] + t * d[1]];
            let dist = (p[0] - c[0]).hypot(p[1] - c[1]);
            if best.is_none_or(|(bd, _, _)| dist < bd) {
                best = Some((dist, e, len2.sqrt()));
            }
        }
        let (dist, e, len) = best?;
        if dist > 0.5 * len {
            return None;
        }
        Some((e.triangle, barycentric(self.triangle_points(e.triangle), p)))
    }
}

pub(crate) fn barycentric(t: [[f64; 2]; 3], p: [f64; 2]) -> [f64; 3] {
    let det = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]);
    let l1 = ((p[0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (p[1] - t[0][1])) / det;
    let l2 = ((t[1][0] - t[0][0]) * (p[1] - t[0][1]) - (p[0] - t[0][0]) * (t[1][1] - t[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Bounding-volume hierarchy over triangles for point location.
#[derive(Debug, Clone, Default)]
struct Locator {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Node {
    lo: [f64; 2],
    hi: [f64; 2],
    /// Leaf: range into `order`; inner: child indices.
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf(usize, usize),
    Inner(usize, usize),
}

const LEAF_SIZE: usize = 8;

impl Locator {
    fn build(vertices: &[[f64; 2]], triangles: &[[usize; 3]]) -> Self {
        let boxes: Vec<([f64; 2], [f64; 2], [f64; 2])> = triangles
            .iter()
            .map(|t| {
                let p = t.map(|v| vertices[v]);
                let lo = [p[0][0].min(p[1][0]).min(p[2][0]), p[0][1].min(p[1][1]).min(p[2][1])];
                let hi = [p[0][0].max(p[1][0]).max(p[2][0]), p[0][1].max(p[1][1]).max(p[2][1])];
                (lo, hi, [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])])
            })
            .collect();
        let mut loc = Locator {
            nodes: Vec::new(),
            order: (0..triangles.len()).collect(),
        };
        if !triangles.is_empty() {
            loc.split(&boxes, 0, triangles.len());
        }
        loc
    }

    fn split(&mut self, boxes: &[([f64; 2], [f64; 2], [f64; 2])], start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &t in &self.order[start..end] {
            for k in 0..2 {
                lo[k] = lo[k].min(boxes[t].0[k]);
                hi[k] = hi[k].max(boxes[t].1[k]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Leaf(start, end),
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            boxes[a].2[axis].total_cmp(&boxes[b].2[axis]).then(a.cmp(&b))
        });
        let left = self.split(boxes, start, mid);
        let right = self.split(boxes, mid, end);
        self.nodes[id].kind = NodeKind::Inner(left, right);
        id
    }

    fn find(&self, p: [f64; 2], vertices: &[[f64; 2]], triangles: &[[usize; 3]]) -> Option<(usize, [f64; 3])> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut stack = vec![0usize];
        let eps = 1e-12;
        let mut fallback: Option<(usize, [f64; 3], f64)> = None;
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let pad = eps * (1.0 + node.hi[0].abs().max(node.hi[1].abs()));
            if p[0] < node.lo[0] - pad || p[0] > node.hi[0] + pad || p[1] < node.lo[1] - pad || p[1] > node.hi[1] + pad
            {
                continue;
            }
            match node.kind {
                NodeKind::Leaf(s, e) => {
                    for &t in &self.order[s..e] {
                        let b = barycentric(triangles[t].map(|v| vertices[v]), p);
                        let worst = b[0].min(b[1]).min(b[2]);
                        if worst >= 0.0 {
                            return Some((t, b));
                        }
                        if worst >= -eps && fallback.is_none_or(|f| worst > f.2) {
                            fallback = Some((t, b, worst));
                        }
                    }
                }
                NodeKind::Inner(l, r) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        fallback.map(|(t, b, _)| (t, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::expr::parse_expr;

    fn half(h: f64) -> Mesh {
        build_mesh(&MeshDomain::HalfDisk { radius: 1.0 }, &MeshOptions::uniform(h)).unwrap()
    }

    #[test]
    fn half_disk_structure() {
        let m = half(0.2);
        assert!(m.min_angle() >= 20.0, "min angle {}", m.min_angle());
        assert!((m.total_area() - PI / 2.0).abs() < 0.05);
        let flat = m.boundary_vertices(BoundaryTag::Flat);
        assert!(!flat.is_empty());
        assert!(flat.iter().all(|&v| m.vertices[v][1] == 0.0));
        for e in m.edges_with_tag(BoundaryTag::Flat) {
            let (n, _) = m.edge_normal(e);
            assert_eq!(n, [0.0, -1.0]);
        }
        for v in m.boundary_vertices(BoundaryTag::Arc) {
            let r = m.vertices[v][0].hypot(m.vertices[v][1]);
            assert!((r - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn x_mirror_symmetry_is_exact() {
        let m = half(0.1);
        let mut pts: Vec<(u64, u64)> = m.vertices.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect();
        let mut mirrored: Vec<(u64, u64)> = m.vertices.iter().map(|p| ((-p[0]).to_bits(), p[1].to_bits())).collect();
        // +0 and -0 at x = 0
        for v in pts.iter_mut().chain(mirrored.iter_mut()) {
            if f64::from_bits(v.0) == 0.0 {
                v.0 = 0f64.to_bits();
            }
        }
        pts.sort_unstable();
        mirrored.sort_unstable();
        assert_eq!(pts, mirrored);
    }

    #[test]
    fn coarse_mesh_rejected() {
        let err = build_mesh(&MeshDomain::HalfDisk { radius: 1.0 }, &MeshOptions::uniform(0.6)).unwrap_err();
        assert!(matches!(err, Error::MeshTooCoarse { .. }));
    }

    #[test]
    fn full_disk_is_mirror_symmetric() {
        let m = build_mesh(&MeshDomain::FullDisk { radius: 1.0 }, &MeshOptions::uniform(0.1)).unwrap();
        let mirror = m.mirror.as_ref().unwrap();
        for (i, p) in m.vertices.iter().enumerate() {
            let q = m.vertices[mirror[i]];
            assert_eq!(q[0], p[0]);
            assert_eq!(q[1], -p[1]);
        }
        assert!((m.total_area() - PI).abs() < 0.05);
        assert!(m.boundary.iter().all(|e| e.tag == BoundaryTag::Full));
        assert!(m.min_angle() >= 20.0);
    }

    #[test]
    fn graph_domain_boundary_on_graph() {
        let dom = GraphDomain::new(2, parse_expr("0.1*x^2").unwrap(), 1.0).unwrap();
        let m = build_mesh(
            &MeshDomain::Graph {
                domain: dom,
                radius: 1.0,
            },
            &MeshOptions::uniform(0.1),
        )
        .unwrap();
        for v in m.boundary_vertices(BoundaryTag::Flat) {
            let p = m.vertices[v];
            assert!((p[1] - 0.1 * p[0] * p[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn graded_sizes_shrink_toward_origin() {
        let m = build_mesh(&MeshDomain::HalfDisk { radius: 1.0 }, &MeshOptions::graded(0.1, 2.0)).unwrap();
        assert!(m.min_angle() >= 20.0, "min angle {}", m.min_angle());
        let mut near = f64::INFINITY;
        let mut far = 0.0f64;
        for t in 0..m.num_triangles() {
            let p = m.triangle_points(t);
            let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
            let size = m.area(t).sqrt();
            if c[0].hypot(c[1]) < 0.02 {
                near = near.min(size);
            }
            if c[0].hypot(c[1]) > 0.8 {
                far = far.max(size);
            }
        }
        assert!(near < 0.15 * far, "near {near} far {far}");
    }

    #[test]
    fn breakpoints_appear_as_rings() {
        let host = build_mesh(
            &MeshDomain::HalfDisk { radius: 2.0 },
            &MeshOptions::uniform(0.1).with_breakpoints(&[1.0]),
        )
        .unwrap();
        let (inner, _) = host.restrict_to_ball(1.0).unwrap();
        assert!((inner.total_area() - PI / 2.0).abs() < 0.02);
        assert!(inner
            .boundary_vertices(BoundaryTag::Flat)
            .iter()
            .any(|&v| inner.vertices[v][0] == 1.0));
    }

    #[test]
    fn point_location() {
        let m = half(0.1);
        for p in [[0.3, 0.2], [-0.7, 0.1], [0.0, 0.999], [0.5, 0.0]] {
            let (t, b) = m.locate(p).unwrap();
            let tp = m.triangle_points(t);
            let x = b[0] * tp[0][0] + b[1] * tp[1][0] + b[2] * tp[2][0];
            assert!((x - p[0]).abs() < 1e-14);
        }
        assert!(m.locate([0.0, -0.1]).is_none());
        assert!(m.locate([2.0, 0.5]).is_none());
        // just outside the polygonal arc
        assert!(m.locate_or_extrapolate([0.0, 1.0 + 1e-4]).is_some());
        assert!(m.locate_or_extrapolate([0.0, 1.5]).is_none());
    }
}
