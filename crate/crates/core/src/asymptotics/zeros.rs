use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::{rescale_blowup_at, BlowupSequence, Normalization};
use crate::error::{invalid, Error, Result};
use crate::fields::{Field, ScaledField, ShiftedField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoveredCell {
    pub center: [f64; 2],
    pub size: f64,
}

/// Zeros of a field on the flat boundary piece `{|x| < radius, x_d = 0}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryZeroSet {
    /// Dimension of the boundary, `d - 1`.
    pub dim: usize,
    pub radius: f64,
    pub resolution: f64,
    /// Sorted roots (planar fields).
    pub roots: Vec<f64>,
    /// Intervals where the trace stays below the plateau threshold (planar fields).
    pub plateaus: Vec<(f64, f64)>,
    /// Covered cells at the finest scale (spatial fields).
    pub cells: Vec<CoveredCell>,
    /// `(cell size, count)`, coarsest first.
    pub box_counts: Vec<(f64, usize)>,
    /// Largest sampled `|u|` on the boundary piece.
    pub sup: f64,
}

impl BoundaryZeroSet {
    pub fn is_empty(&self) -> bool {
        self.roots.is_empty() && self.plateaus.is_empty() && self.cells.is_empty()
    }

    /// Finite set of isolated roots with no plateau flags.
    pub fn is_finite_list(&self) -> bool {
        self.dim == 1 && self.plateaus.is_empty()
    }

    /// Representative points: roots and plateau ends, or cell centers.
    fn points(&self) -> Vec<Vec<f64>> {
        if self.dim == 1 {
            self.roots
                .iter()
                .copied()
                .chain(self.plateaus.iter().flat_map(|&(a, b)| [a, b]))
                .map(|r| vec![r])
                .collect()
        } else {
            self.cells.iter().map(|c| c.center.to_vec()).collect()
        }
    }
}

const PLATEAU: f64 = 1e-8;
const ROOT_TOL: f64 = 1e-12;

pub fn boundary_zero_set(u: &dyn Field, radius: f64, resolution: f64) -> Result<BoundaryZeroSet> {
    if !(radius > 0.0) || !(resolution > 0.0) {
        return Err(invalid("radius and resolution must be positive"));
    }
    if resolution > 2.0 * radius {
        return Err(invalid(format!(
            "resolution {resolution} is coarser than the boundary piece of width {}",
            2.0 * radius
        )));
    }
    if let Some(ext) = u.extent() {
        if radius > ext * (1.0 + 1e-12) {
            return Err(invalid(format!("radius {radius} exceeds the domain radius {ext}")));
        }
    }
    match u.dim() {
        2 => Ok(planar(u, radius, resolution)),
        3 => Ok(spatial(u, radius, resolution)),
        d => Err(Error::UnsupportedDimension(d)),
    }
}

fn levels(radius: f64, resolution: f64) -> usize {
    ((2.0 * radius / resolution).log2().round() as usize).max(1)
}

fn planar(u: &dyn Field, radius: f64, resolution: f64) -> BoundaryZeroSet {
    let trace = |x: f64| u.value(&[x, 0.0]);
    let n = (2.0 * radius / resolution).ceil() as usize;
    let xs: Vec<f64> = (0..=n)
        .map(|k| {
            if k == n {
                radius
            } else {
                -radius + 2.0 * radius * k as f64 / n as f64
            }
        })
        .collect();
    let vals: Vec<f64> = xs.par_iter().map(|&x| trace(x)).collect();
    let sup = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eps = PLATEAU * sup;

    let mut roots = Vec::new();
    let mut plateaus = Vec::new();
    let small: Vec<bool> = vals.iter().map(|v| v.abs() <= eps).collect();
    let mut k = 0;
    while k <= n {
        if small[k] {
            let start = k;
            while k < n && small[k + 1] {
                k += 1;
            }
            match isolated_root(&vals[start..=k]) {
                None => plateaus.push((xs[start], xs[k])),
                Some(Crossing::Exact(j)) => roots.push(xs[start + j]),
                Some(Crossing::Sign(j)) => {
                    roots.push(bisect(&trace, xs[start + j], xs[start + j + 1], vals[start + j]))
                }
                Some(Crossing::Touch(j)) => roots.push(refine_touch(&trace, &xs, start + j)),
            }
        } else if k < n && !small[k + 1] && vals[k].signum() != vals[k + 1].signum() {
            roots.push(bisect(&trace, xs[k], xs[k + 1], vals[k]));
        }
        k += 1;
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 10.0 * ROOT_TOL);

    let kmax = levels(radius, resolution);
    let mut box_counts = Vec::with_capacity(kmax + 1);
    for level in 0..=kmax {
        let cells = 1usize << level;
        let s = 2.0 * radius / cells as f64;
        let idx = |x: f64| (((x + radius) / s).floor() as usize).min(cells - 1);
        let mut hit = BTreeSet::new();
        for &r in &roots {
            hit.insert(idx(r));
        }
        for &(a, b) in &plateaus {
            hit.extend(idx(a)..=idx(b));
        }
        box_counts.push((s, hit.len()));
    }
    BoundaryZeroSet {
        dim: 1,
        radius,
        resolution,
        roots,
        plateaus,
        cells: Vec::new(),
        box_counts,
        sup,
    }
}

enum Crossing {
    Exact(usize),
    Sign(usize),
    Touch(usize),
}

/// A run of sub-threshold samples is one isolated root when `|u|` falls strictly to a
/// single minimum and rises strictly after it, changing sign at most there.
fn isolated_root(run: &[f64]) -> Option<Crossing> {
    let a: Vec<f64> = run.iter().map(|v| v.abs()).collect();
    let j = (0..a.len()).min_by(|&i, &k| a[i].total_cmp(&a[k]))?;
    let down = a[..=j].windows(2).all(|w| w[1] < w[0]);
    let up = a[j..].windows(2).all(|w| w[1] > w[0]);
    if !(down && up) {
        return None;
    }
    let flips: Vec<usize> = (0..run.len() - 1)
        .filter(|&i| run[i].signum() != run[i + 1].signum())
        .collect();
    match flips.as_slice() {
        _ if run[j] == 0.0 => Some(Crossing::Exact(j)),
        [] => Some(Crossing::Touch(j)),
        [i] if *i == j || *i + 1 == j => Some(Crossing::Sign(*i)),
        _ => None,
    }
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    while b - a > ROOT_TOL {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Golden-section minimization of `|f|` around a sample where the trace touches zero.
fn refine_touch(f: &impl Fn(f64) -> f64, xs: &[f64], k: usize) -> f64 {
    let mut a = xs[k.saturating_sub(1)];
    let mut b = xs[(k + 1).min(xs.len() - 1)];
    let g = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > ROOT_TOL {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c).abs() <= f(d).abs() {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Quadtree over `[-radius, radius]^2` in the plane `x_3 = 0`; a cell is covered when
/// `|u(center)|` is within the half-diagonal times a finite-difference gradient bound.
fn spatial(u: &dyn Field, radius: f64, resolution: f64) -> BoundaryZeroSet {
    let kmax = levels(radius, resolution);
    let eval = |x: f64, y: f64| u.value(&[x, y, 0.0]);
    // (|u(c)|, bound) for a cell
    let test = |c: [f64; 2], s: f64| -> (f64, f64) {
        let h = 0.5 * s;
        let gx = (eval(c[0] + h, c[1]) - eval(c[0] - h, c[1])) / s;
        let gy = (eval(c[0], c[1] + h) - eval(c[0], c[1] - h)) / s;
        let corner = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)]
            .iter()
            .map(|(a, b)| (eval(c[0] + a * h, c[1] + b * h) - eval(c[0], c[1])).abs() / (h * std::f64::consts::SQRT_2))
            .fold(0.0f64, f64::max);
        let g = gx.hypot(gy).max(corner);
        (eval(c[0], c[1]).abs(), std::f64::consts::FRAC_1_SQRT_2 * s * g)
    };
    let mut sup = 0.0f64;
    let mut frontier: Vec<[f64; 2]> = vec![[0.0, 0.0]];
    let mut box_counts = Vec::with_capacity(kmax + 1);
    let mut cells = Vec::new();
    for level in 0..=kmax {
        let s = 2.0 * radius / (1usize << level) as f64;
        let tested: Vec<([f64; 2], f64, f64)> = frontier
            .par_iter()
            .filter(|c| c[0].hypot(c[1]) - std::f64::consts::FRAC_1_SQRT_2 * s <= radius)
            .map(|&c| {
                let (v, b) = test(c, s);
                (c, v, b)
            })
            .collect();
        let mut count = 0;
        let mut next = Vec::new();
        for &(c, v, b) in &tested {
            if c[0].hypot(c[1]) <= radius {
                sup = sup.max(v);
            }
            if v <= b {
                count += 1;
                if level == kmax {
                    cells.push(CoveredCell { center: c, size: s });
                }
            }
            if v <= 2.0 * b && level < kmax {
                let q = 0.25 * s;
                for (a, bb) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
                    next.push([c[0] + a * q, c[1] + bb * q]);
                }
            }
        }
        box_counts.push((s, count));
        frontier = next;
    }
    BoundaryZeroSet {
        dim: 2,
        radius,
        resolution,
        roots: Vec::new(),
        plateaus: Vec::new(),
        cells,
        box_counts,
        sup,
    }
}

/// Least-squares slope of `log count` against `log(1/size)` over the finest half of the
/// scales; negative infinity for an empty set.
pub fn box_count_dimension(zs: &BoundaryZeroSet) -> Result<f64> {
    let k = zs.box_counts.len();
    if k < 4 {
        return Err(invalid(format!("box counting needs at least 4 scales, got {k}")));
    }
    let fine = &zs.box_counts[k / 2..];
    if fine.iter().any(|&(_, c)| c == 0) {
        return Ok(f64::NEG_INFINITY);
    }
    let pts: Vec<(f64, f64)> = fine.iter().map(|&(s, c)| ((1.0 / s).ln(), (c as f64).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

pub fn write_zeros_csv(zs: &BoundaryZeroSet, mut w: impl Write) -> std::io::Result<()> {
    if zs.dim == 1 {
        writeln!(w, "kind,start,end")?;
        for r in &zs.roots {
            writeln!(w, "root,{r:e},{r:e}")?;
        }
        for (a, b) in &zs.plateaus {
            writeln!(w, "plateau,{a:e},{b:e}")?;
        }
    } else {
        writeln!(w, "kind,x,y,size")?;
        for c in &zs.cells {
            writeln!(w, "cell,{:e},{:e},{:e}", c.center[0], c.center[1], c.size)?;
        }
    }
    Ok(())
}

pub fn write_boxcount_csv(zs: &BoundaryZeroSet, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "scale,count")?;
    for (s, c) in &zs.box_counts {
        writeln!(w, "{s:e},{c}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct TangentSet {
    pub center: Vec<f64>,
    /// Zero set of the last snapshot on the unit boundary piece.
    pub zero_set: BoundaryZeroSet,
    /// Largest distance from a dilated zero to the set, for dilations 1/2 and 2.
    pub dilation_gaps: [f64; 2],
    pub homogeneous: bool,
    pub blowup: BlowupSequence,
}

/// Blowup of `u` at the boundary zero `y` and the zero set of its last snapshot.
///
/// `y` counts as a zero when it lies within the resolution of `zs` or `u(y)` is below the
/// plateau threshold.
pub fn tangent_set(
    zs: &BoundaryZeroSet,
    y: &[f64],
    lambdas: &[f64],
    u: &dyn Field,
    a0: &DMatrix<f64>,
) -> Result<TangentSet> {
    let d = u.dim();
    if y.len() != d || y[d - 1] != 0.0 {
        return Err(invalid("tangent sets are taken at points of the flat boundary"));
    }
    let scale = if zs.sup > 0.0 { zs.sup } else { 1.0 };
    let tangential = &y[..d - 1];
    let near = zs.points().iter().any(|p| {
        p.iter()
            .zip(tangential)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
            <= zs.resolution
    });
    if !near && u.value(y).abs() > PLATEAU * scale {
        return Err(Error::NotAZero { point: y.to_vec() });
    }
    let seq = rescale_blowup_at(u, y, lambdas, a0, Normalization::Mapped)?;
    let k = seq.len() - 1;
    let limit = ScaledField {
        inner: ShiftedField::new(u, y, seq.lambdas[k]),
        factor: 1.0 / seq.normalizers[k],
    };
    // the resolution scales with the blowup, capped so that box counting keeps enough scales
    let res = (zs.resolution / seq.lambdas[k]).min(1.0 / 16.0);
    let zero_set = boundary_zero_set(&limit, 1.0, res)?;
    let pts = zero_set.points();
    let tol = res * ((d - 1) as f64).sqrt() + 1e-9;
    let gap = |rho: f64| -> f64 {
        pts.iter()
            .filter(|p| rho * crate::geometry::norm(p) <= 0.9)
            .map(|p| {
                pts.iter()
                    .map(|q| p.iter().zip(q).map(|(a, b)| (rho * a - b).powi(2)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    let dilation_gaps = [gap(0.5), gap(2.0)];
    Ok(TangentSet {
        center: y.to_vec(),
        homogeneous: !pts.is_empty() && dilation_gaps.iter().all(|g| *g <= tol),
        zero_set,
        dilation_gaps,
        blowup: seq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::AnalyticField;

    fn f(d: usize, s: &str) -> AnalyticField {
        AnalyticField::parse(d, s).unwrap()
    }

    #[test]
    fn planar_roots() {
        let zs = boundary_zero_set(&f(2, "x"), 1.0, 0.01).unwrap();
        assert_eq!(zs.roots.len(), 1);
        assert!(zs.roots[0].abs() < 1e-12 && zs.is_finite_list());
        let zs = boundary_zero_set(&f(2, "x^3 - 3*x*y^2"), 0.9, 0.013).unwrap();
        assert_eq!(zs.roots.len(), 1);
        assert!(zs.roots[0].abs() < 1e-10);
        let zs = boundary_zero_set(&f(2, "cos(5*x) + y"), 0.9, 0.01).unwrap();
        let pi10 = std::f64::consts::PI / 10.0;
        assert_eq!(zs.roots.len(), 2);
        assert!((zs.roots[1] - pi10).abs() < 1e-11 && (zs.roots[0] + pi10).abs() < 1e-11);
        let dim = box_count_dimension(&zs).unwrap();
        assert!(dim.abs() < 0.15);
    }

    #[test]
    fn plateaus_are_flagged() {
        let zs = boundary_zero_set(&f(2, "(x - 0.2 + abs(x - 0.2)) / 2 + y"), 0.9, 0.01).unwrap();
        assert_eq!(zs.plateaus.len(), 1);
        assert!(!zs.is_finite_list());
        assert!(zs.plateaus[0].0 < -0.88 && (zs.plateaus[0].1 - 0.2).abs() < 0.011);
    }

    #[test]
    fn segment_dimension_one() {
        let zs = boundary_zero_set(&f(2, "y"), 0.9, 0.01).unwrap();
        assert_eq!(zs.plateaus.len(), 1);
        let dim = box_count_dimension(&zs).unwrap();
        assert!((dim - 1.0).abs() < 0.1, "{dim}");
    }

    #[test]
    fn spatial_dimensions() {
        for (src, expect) in [("x*y", 1.0), ("y", 1.0), ("x^2 + y^2 - 2*z^2", 0.0)] {
            let zs = boundary_zero_set(&f(3, src), 1.0, 1.0 / 256.0).unwrap();
            let dim = box_count_dimension(&zs).unwrap();
            assert!((dim - expect).abs() < 0.15, "{src}: {dim} {:?}", zs.box_counts);
            assert!(zs.box_counts.windows(2).all(|w| w[1].1 >= w[0].1));
        }
        let empty = boundary_zero_set(&f(3, "1 + x^2"), 1.0, 1.0 / 64.0).unwrap();
        assert_eq!(box_count_dimension(&empty).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn coarse_resolution_rejected() {
        assert!(boundary_zero_set(&f(2, "x"), 0.5, 2.0).is_err());
        let zs = boundary_zero_set(&f(2, "x"), 0.5, 0.4).unwrap();
        assert!(box_count_dimension(&zs).is_err());
    }

    #[test]
    fn tangent_sets() {
        let eye2 = DMatrix::identity(2, 2);
        let u = f(2, "x");
        let zs = boundary_zero_set(&u, 1.0, 0.01).unwrap();
        let t = tangent_set(&zs, &[0.0, 0.0], &[0.2, 0.1], &u, &eye2).unwrap();
        assert!(t.homogeneous && t.zero_set.roots.len() == 1);
        assert!(matches!(
            tangent_set(&zs, &[0.5, 0.0], &[0.2], &u, &eye2),
            Err(Error::NotAZero { .. })
        ));

        let u = f(3, "x*y");
        let zs = boundary_zero_set(&u, 1.0, 1.0 / 64.0).unwrap();
        let t = tangent_set(&zs, &[0.3, 0.0, 0.0], &[0.2, 0.1], &u, &DMatrix::identity(3, 3)).unwrap();
        assert!(t.homogeneous, "{:?}", t.dilation_gaps);
        assert!(t.zero_set.cells.iter().all(|c| c.center[1].abs() < c.size));
        let dim = box_count_dimension(&t.zero_set).unwrap();
        assert!((dim - 1.0).abs() < 0.15);
    }
}
