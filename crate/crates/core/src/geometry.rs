//! Half-balls, graph domains, the normalizing linear map and flattening maps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::fields::expr::Expr;
use crate::fields::{Mat3, MatrixField};

/// `{|x| < radius, x_d > 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfBall {
    pub radius: f64,
    pub dim: usize,
}

impl HalfBall {
    pub fn new(radius: f64, dim: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!("half-ball radius must be positive, got {radius}")));
        }
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        Ok(HalfBall { radius, dim })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        norm(x) < self.radius && x[self.dim - 1] > 0.0
    }

    /// True on the flat part `Γ_r = {|x| < r, x_d = 0}`.
    pub fn on_flat(&self, x: &[f64]) -> bool {
        norm(x) < self.radius && x[self.dim - 1] == 0.0
    }
}

/// The region above the graph of `phi` inside a ball of radius `extent`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDomain {
    pub dim: usize,
    pub phi: Expr,
    grad: Vec<Expr>,
    pub extent: f64,
    /// Sampled bounds for `|phi|` and `|grad phi|` on the extent.
    pub lipschitz: (f64, f64),
}

impl GraphDomain {
    /// `phi` is an expression in the tangential variables (`x`, and `y` when `dim == 3`).
    pub fn new(dim: usize, phi: Expr, extent: f64) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(invalid(format!("graph extent must be positive, got {extent}")));
        }
        let grad: Vec<Expr> = (0..dim - 1).map(|k| phi.derivative(k)).collect();
        let mut dom = GraphDomain {
            dim,
            phi,
            grad,
            extent,
            lipschitz: (0.0, 0.0),
        };
        let origin = vec![0.0; dim - 1];
        let p0 = dom.phi_at(&origin);
        let g0 = dom.grad_phi(&origin);
        if p0.abs() > 1e-12 || g0.iter().any(|g| g.abs() > 1e-12) {
            return Err(invalid(format!(
                "graph must satisfy phi(0) = 0 and grad phi(0) = 0, got phi(0) = {p0:e}, grad = {g0:?}"
            )));
        }
        dom.lipschitz = dom.sample_bounds();
        Ok(dom)
    }

    pub fn flat(dim: usize, extent: f64) -> Result<Self> {
        Self::new(dim, Expr::num(0.0), extent)
    }

    pub fn phi_at(&self, xt: &[f64]) -> f64 {
        self.phi.eval(&pad(xt))
    }

    pub fn grad_phi(&self, xt: &[f64]) -> Vec<f64> {
        let p = pad(xt);
        self.grad.iter().map(|g| g.eval(&p)).collect()
    }

    pub fn is_flat(&self) -> bool {
        self.phi.constant_value() == Some(0.0)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let d = self.dim;
        norm(x) < self.extent && x[d - 1] > self.phi_at(&x[..d - 1])
    }

    fn sample_bounds(&self) -> (f64, f64) {
        let n = 64;
        let mut bounds = (0.0f64, 0.0f64);
        let mut visit = |xt: &[f64]| {
            bounds.0 = bounds.0.max(self.phi_at(xt).abs());
            let g = self.grad_phi(xt);
            bounds.1 = bounds.1.max(norm(&g));
        };
        if self.dim == 2 {
            for i in 0..=n {
                visit(&[self.extent * (2.0 * i as f64 / n as f64 - 1.0)]);
            }
        } else {
            for i in 0..=n {
                for j in 0..=n {
                    let p = [
                        self.extent * (2.0 * i as f64 / n as f64 - 1.0),
                        self.extent * (2.0 * j as f64 / n as f64 - 1.0),
                    ];
                    if norm(&p) <= self.extent {
                        visit(&p);
                    }
                }
            }
        }
        bounds
    }
}

/// A change of variables `y = map(x)` with a Jacobian.
pub trait CoordinateMap: Send + Sync {
    fn dim(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>>;
    /// `J_ij = d y_i / d x_j`, stored in the leading `dim x dim` block.
    fn jacobian(&self, x: &[f64]) -> Result<Mat3>;
}

/// An invertible linear map `y = M x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearChange {
    pub matrix: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
}

impl LinearChange {
    pub fn identity(dim: usize) -> Self {
        LinearChange {
            matrix: DMatrix::identity(dim, dim),
            inverse: DMatrix::identity(dim, dim),
        }
    }

    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(invalid("linear change must be square"));
        }
        let inverse = matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| invalid("linear change is singular"))?;
        Ok(LinearChange { matrix, inverse })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        mat_vec(&self.matrix, x)
    }

    pub fn apply_inverse(&self, y: &[f64]) -> Vec<f64> {
        mat_vec(&self.inverse, y)
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    /// Largest deviation of `matrix * inverse` from the identity.
    pub fn inverse_gap(&self) -> f64 {
        let prod = &self.matrix * &self.inverse;
        let id = DMatrix::<f64>::identity(self.dim(), self.dim());
        (prod - id).amax()
    }
}

impl CoordinateMap for LinearChange {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_point(x, self.dim())?;
        Ok(self.apply(x))
    }

    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_point(y, self.dim())?;
        Ok(self.apply_inverse(y))
    }

    fn jacobian(&self, x: &[f64]) -> Result<Mat3> {
        check_point(x, self.dim())?;
        let mut j = [[0.0; 3]; 3];
        for r in 0..self.dim() {
            for c in 0..self.dim() {
                j[r][c] = self.matrix[(r, c)];
            }
        }
        Ok(j)
    }
}

fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)] * x[c]).sum())
        .collect()
}

fn check_point(x: &[f64], dim: usize) -> Result<()> {
    if x.len() < dim || x.iter().take(dim).any(|v| !v.is_finite()) {
        return Err(Error::OutsideDomain { point: x.to_vec() });
    }
    Ok(())
}

/// Checks symmetry and positive definiteness, returning the eigenvalue range.
pub fn check_spd(a0: &DMatrix<f64>) -> Result<(f64, f64)> {
    if !a0.is_square() || a0.nrows() == 0 {
        return Err(invalid("coefficient matrix must be square and non-empty"));
    }
    let n = a0.nrows();
    let scale = a0.amax().max(1.0);
    for r in 0..n {
        for c in r + 1..n {
            let gap = (a0[(r, c)] - a0[(c, r)]).abs();
            if gap > 1e-12 * scale {
                return Err(Error::NotSymmetric { row: r, col: c, gap });
            }
        }
    }
    let eig = SymmetricEigen::new(a0.clone()).eigenvalues;
    let lo = eig.min();
    if lo.is_nan() || lo <= 1e-14 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
    }
    Ok((lo, eig.max()))
}

/// `Θ`: the identity except `Θ_id = -a_id / a_dd` for `i < d`.
pub fn theta_matrix(a0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_spd(a0)?;
    let d = a0.nrows();
    let mut theta = DMatrix::identity(d, d);
    for i in 0..d - 1 {
        theta[(i, d - 1)] = -a0[(i, d - 1)] / a0[(d - 1, d - 1)];
    }
    Ok(theta)
}

/// `Ψ = (Θ A0 Θ^T)^{-1/2} Θ`, so that `Ψ A0 Ψ^T = I` and `Ψ` keeps the upper half-space.
pub fn normalizing_map(a0: &DMatrix<f64>) -> Result<LinearChange> {
    let theta = theta_matrix(a0)?;
    let d = a0.nrows();
    let mut s = &theta * a0 * theta.transpose();
    // The off-diagonal column vanishes up to rounding; make the block structure exact.
    for i in 0..d - 1 {
        s[(i, d - 1)] = 0.0;
        s[(d - 1, i)] = 0.0;
    }
    let mut root_inv = DMatrix::zeros(d, d);
    let mut root = DMatrix::zeros(d, d);
    if d > 1 {
        let block = s.view((0, 0), (d - 1, d - 1)).into_owned();
        let eig = SymmetricEigen::new(block);
        if eig.eigenvalues.min() < 1e-14 {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: eig.eigenvalues.min(),
            });
        }
        let q = &eig.eigenvectors;
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        root_inv
            .view_mut((0, 0), (d - 1, d - 1))
            .copy_from(&(q * inv_sqrt * q.transpose()));
        root.view_mut((0, 0), (d - 1, d - 1))
            .copy_from(&(q * sqrt * q.transpose()));
    }
    let sdd = s[(d - 1, d - 1)];
    root_inv[(d - 1, d - 1)] = 1.0 / sdd.sqrt();
    root[(d - 1, d - 1)] = sdd.sqrt();
    let mut theta_inv = DMatrix::identity(d, d);
    for i in 0..d - 1 {
        theta_inv[(i, d - 1)] = -theta[(i, d - 1)];
    }
    Ok(LinearChange {
        matrix: root_inv * theta,
        inverse: theta_inv * root,
    })
}

/// `χ`: 1 below `0.1 * extent`, 0 above `0.5 * extent`, C² quintic in between.
fn cutoff(t: f64, extent: f64) -> (f64, f64) {
    let (a, b) = (0.1 * extent, 0.5 * extent);
    if t <= a {
        return (1.0, 0.0);
    }
    if t >= b {
        return (0.0, 0.0);
    }
    let s = (t - a) / (b - a);
    let smooth = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    let dsmooth = 30.0 * s * s * (1.0 - s) * (1.0 - s) / (b - a);
    (1.0 - smooth, -dsmooth)
}

/// Graph shear followed by an optional conormal shear.
#[derive(Clone)]
pub struct FlatteningMap {
    pub domain: GraphDomain,
    shear: Option<MatrixField>,
}

impl std::fmt::Debug for FlatteningMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlatteningMap")
            .field("domain", &self.domain)
            .field("conormal_shear", &self.shear.is_some())
            .finish()
    }
}

/// Builds the flattening map of a graph domain. When boundary coefficients are given,
/// a conormal shear makes the pushed-forward `a_id` vanish on the flat boundary.
pub fn flatten_map(dom: &GraphDomain, boundary_coefficients: Option<&MatrixField>) -> Result<FlatteningMap> {
    let origin = vec![0.0; dom.dim - 1];
    if dom.phi_at(&origin).abs() > 1e-12 || dom.grad_phi(&origin).iter().any(|g| g.abs() > 1e-12) {
        return Err(invalid("graph must satisfy phi(0) = 0 and grad phi(0) = 0"));
    }
    if let Some(a) = boundary_coefficients {
        if a.dim() != dom.dim {
            return Err(invalid("coefficient dimension does not match the domain"));
        }
    }
    Ok(FlatteningMap {
        domain: dom.clone(),
        shear: boundary_coefficients.cloned(),
    })
}

impl FlatteningMap {
    pub fn has_conormal_shear(&self) -> bool {
        self.shear.is_some()
    }

    /// Shear field `c(y')` from the graph-sheared coefficients on the flat boundary.
    pub fn shear_field(&self, yt: &[f64]) -> Vec<f64> {
        let d = self.domain.dim;
        let Some(a) = &self.shear else {
            return vec![0.0; d - 1];
        };
        let mut x = yt.to_vec();
        x.push(self.domain.phi_at(yt));
        let am = a.eval(&x);
        let g = self.domain.grad_phi(yt);
        // graph-shear Jacobian G = [[I, 0], [-grad phi^T, 1]], A_hat = G A G^T
        let mut gm = [[0.0; 3]; 3];
        for i in 0..d {
            gm[i][i] = 1.0;
        }
        for (k, gk) in g.iter().enumerate() {
            gm[d - 1][k] = -gk;
        }
        let ah = congruence(&gm, &am, d);
        (0..d - 1).map(|i| ah[i][d - 1] / ah[d - 1][d - 1]).collect()
    }

    fn shear_gradient(&self, yt: &[f64]) -> Vec<Vec<f64>> {
        let n = yt.len();
        let step = 1e-6 * self.domain.extent.max(1.0);
        let mut grad = vec![vec![0.0; n]; n];
        if self.shear.is_none() {
            return grad;
        }
        for k in 0..n {
            let mut p = yt.to_vec();
            let mut m = yt.to_vec();
            p[k] += step;
            m[k] -= step;
            let (cp, cm) = (self.shear_field(&p), self.shear_field(&m));
            for i in 0..n {
                grad[i][k] = (cp[i] - cm[i]) / (2.0 * step);
            }
        }
        grad
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        let d = self.domain.dim;
        check_point(x, d)?;
        if norm(&x[..d - 1]) > self.domain.extent * (1.0 + 1e-12) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
        Ok(())
    }
}

impl CoordinateMap for FlatteningMap {
    fn dim(&self) -> usize {
        self.domain.dim
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let d = self.domain.dim;
        let xt = &x[..d - 1];
        let yd = x[d - 1] - self.domain.phi_at(xt);
        let mut out = xt.to_vec();
        if self.shear.is_some() {
            let c = self.shear_field(xt);
            let (chi, _) = cutoff(yd, self.domain.extent);
            for (o, ci) in out.iter_mut().zip(&c) {
                *o -= ci * yd * chi;
            }
        }
        out.push(yd);
        Ok(out)
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.domain.dim;
        check_point(z, d)?;
        let zd = z[d - 1];
        let zt = &z[..d - 1];
        let mut yt = zt.to_vec();
        if self.shear.is_some() {
            let (chi, _) = cutoff(zd, self.domain.extent);
            let s = zd * chi;
            if s != 0.0 {
                // Newton on y' - c(y') s = z'
                for _ in 0..50 {
                    let c = self.shear_field(&yt);
                    let res: Vec<f64> = (0..d - 1).map(|i| yt[i] - c[i] * s - zt[i]).collect();
                    if norm(&res) < 1e-15 * (1.0 + norm(zt)) {
                        break;
                    }
                    let gc = self.shear_gradient(&yt);
                    let mut jac = DMatrix::<f64>::identity(d - 1, d - 1);
                    for i in 0..d - 1 {
                        for k in 0..d - 1 {
                            jac[(i, k)] -= gc[i][k] * s;
                        }
                    }
                    let step = jac
                        .lu()
                        .solve(&DVector::from_vec(res))
                        .ok_or_else(|| Error::OutsideDomain { point: z.to_vec() })?;
                    for i in 0..d - 1 {
                        yt[i] -= step[i];
                    }
                }
            }
        }
        let mut x = yt.clone();
        x.push(zd + self.domain.phi_at(&yt));
        self.check(&x)?;
        Ok(x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Mat3> {
        self.check(x)?;
        let d = self.domain.dim;
        let xt = &x[..d - 1];
        let g = self.domain.grad_phi(xt);
        let mut gm = [[0.0; 3]; 3];
        for i in 0..d {
            gm[i][i] = 1.0;
        }
        for (k, gk) in g.iter().enumerate() {
            gm[d - 1][k] = -gk;
        }
        if self.shear.is_none() {
            return Ok(gm);
        }
        let yd = x[d - 1] - self.domain.phi_at(xt);
        let (chi, dchi) = cutoff(yd, self.domain.extent);
        let c = self.shear_field(xt);
        let gc = self.shear_gradient(xt);
        let mut k = [[0.0; 3]; 3];
        for i in 0..d {
            k[i][i] = 1.0;
        }
        for i in 0..d - 1 {
            for j in 0..d - 1 {
                k[i][j] -= gc[i][j] * yd * chi;
            }
            k[i][d - 1] = -c[i] * (chi + yd * dchi);
        }
        Ok(mat_mul(&k, &gm, d))
    }
}

pub(crate) fn mat_mul(a: &Mat3, b: &Mat3, d: usize) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            out[i][j] = (0..d).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// `J A J^T`.
pub(crate) fn congruence(j: &Mat3, a: &Mat3, d: usize) -> Mat3 {
    let mut ja = [[0.0; 3]; 3];
    for i in 0..d {
        for k in 0..d {
            ja[i][k] = (0..d).map(|l| j[i][l] * a[l][k]).sum();
        }
    }
    let mut out = [[0.0; 3]; 3];
    for i in 0..d {
        for k in 0..d {
            out[i][k] = (0..d).map(|l| ja[i][l] * j[k][l]).sum();
        }
    }
    out
}

pub(crate) fn determinant(j: &Mat3, d: usize) -> f64 {
    match d {
        1 => j[0][0],
        2 => j[0][0] * j[1][1] - j[0][1] * j[1][0],
        _ => {
            j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
        }
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn pad(xt: &[f64]) -> [f64; 3] {
    let mut p = [0.0; 3];
    for (i, v) in xt.iter().take(3).enumerate() {
        p[i] = *v;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::expr::parse_expr;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn theta_examples() {
        assert_eq!(theta_matrix(&DMatrix::identity(2, 2)).unwrap(), DMatrix::identity(2, 2));
        let t = theta_matrix(&m2(1.0, 0.5, 0.5, 1.0)).unwrap();
        assert_eq!(t, m2(1.0, -0.5, 0.0, 1.0));
        let a = m2(2.0, 0.0, 0.0, 3.0);
        let t = theta_matrix(&a).unwrap();
        assert_eq!(t, DMatrix::identity(2, 2));
        assert_eq!((&t * &a * t.transpose())[(0, 1)], 0.0);
    }

    #[test]
    fn theta_rejects_bad_input() {
        assert!(matches!(
            theta_matrix(&m2(1.0, 0.3, 0.2, 1.0)),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(
            theta_matrix(&m2(1.0, 2.0, 2.0, 1.0)),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn normalizing_examples() {
        let psi = normalizing_map(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(psi.matrix, DMatrix::identity(2, 2));

        let psi = normalizing_map(&m2(4.0, 0.0, 0.0, 1.0)).unwrap();
        assert!((psi.matrix.clone() - m2(0.5, 0.0, 0.0, 1.0)).amax() < 1e-15);

        let a = m2(1.0, 0.5, 0.5, 1.0);
        let psi = normalizing_map(&a).unwrap();
        let s3 = 3f64.sqrt();
        let expected = m2(2.0 / s3, -1.0 / s3, 0.0, 1.0);
        assert!((psi.matrix.clone() - expected).amax() < 1e-14);
        let id = &psi.matrix * &a * psi.matrix.transpose();
        assert!((id - DMatrix::identity(2, 2)).amax() < 1e-14);
        assert!(psi.inverse_gap() < 1e-14);
    }

    #[test]
    fn normalizing_three_dimensional() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.4, 0.3, 1.5, 0.2, -0.4, 0.2, 1.2]);
        let psi = normalizing_map(&a).unwrap();
        let id = &psi.matrix * &a * psi.matrix.transpose();
        assert!((id - DMatrix::identity(3, 3)).amax() < 1e-12);
        assert_eq!(psi.matrix[(2, 0)], 0.0);
        assert_eq!(psi.matrix[(2, 1)], 0.0);
        assert!(psi.matrix[(2, 2)] > 0.0);
    }

    #[test]
    fn apply_examples() {
        let id = LinearChange::identity(2);
        assert_eq!(id.forward(&[0.3, 0.4]).unwrap(), vec![0.3, 0.4]);
        let psi = normalizing_map(&m2(4.0, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!(psi.forward(&[1.0, 1.0]).unwrap(), vec![0.5, 1.0]);
        assert!(id.forward(&[f64::NAN, 0.0]).is_err());

        let dom = GraphDomain::new(2, parse_expr("0.1*x^2").unwrap(), 2.0).unwrap();
        let map = flatten_map(&dom, None).unwrap();
        let y = map.forward(&[1.0, 0.1]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-15 && y[1].abs() < 1e-15);
        assert!(map.forward(&[3.0, 0.0]).is_err());
    }

    #[test]
    fn graph_shear_jacobian() {
        let dom = GraphDomain::new(2, parse_expr("0.1*x^2").unwrap(), 2.0).unwrap();
        let map = flatten_map(&dom, None).unwrap();
        let j = map.jacobian(&[0.7, 0.3]).unwrap();
        assert_eq!(j[0][0], 1.0);
        assert_eq!(j[0][1], 0.0);
        assert!((j[1][0] + 0.14).abs() < 1e-15);
        assert_eq!(j[1][1], 1.0);
        assert_eq!(determinant(&j, 2), 1.0);
    }

    #[test]
    fn graph_normalization_enforced() {
        assert!(GraphDomain::new(2, parse_expr("0.1 + x^2").unwrap(), 1.0).is_err());
        assert!(GraphDomain::new(2, parse_expr("0.2*x").unwrap(), 1.0).is_err());
    }

    #[test]
    fn identity_flattening() {
        let dom = GraphDomain::flat(2, 1.0).unwrap();
        let map = flatten_map(&dom, Some(&MatrixField::identity(2))).unwrap();
        for p in [[0.3, 0.2], [-0.5, 0.01], [0.0, 0.9]] {
            assert_eq!(map.forward(&p).unwrap(), p.to_vec());
        }
    }

    #[test]
    fn conormal_shear_kills_offdiagonal() {
        let a = MatrixField::constant(2, [[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0; 3]]);
        let dom = GraphDomain::flat(2, 1.0).unwrap();
        let map = flatten_map(&dom, Some(&a)).unwrap();
        for x in [-0.8, -0.3, 0.0, 0.4, 0.9] {
            let j = map.jacobian(&[x, 0.0]).unwrap();
            let at = congruence(&j, &a.eval(&[x, 0.0]), 2);
            assert!(at[0][1].abs() < 1e-10, "x={x}: {}", at[0][1]);
        }
    }

    #[test]
    fn curved_shear_round_trip() {
        let a = MatrixField::constant(2, [[2.0, 0.3, 0.0], [0.3, 1.0, 0.0], [0.0; 3]]);
        let dom = GraphDomain::new(2, parse_expr("0.1*x^2").unwrap(), 1.0).unwrap();
        let map = flatten_map(&dom, Some(&a)).unwrap();
        for p in [[0.3, 0.2], [-0.5, 0.31], [0.1, 0.05], [0.7, 0.6]] {
            let y = map.forward(&p).unwrap();
            let back = map.inverse(&y).unwrap();
            assert!((back[0] - p[0]).abs() < 1e-10 && (back[1] - p[1]).abs() < 1e-10);
        }
    }
}
