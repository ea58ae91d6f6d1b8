//! Blowups, homogeneous fits, boundary zero sets and tangent sets.

mod zeros;

pub use zeros::{
    boundary_zero_set, box_count_dimension, tangent_set, write_boxcount_csv, write_zeros_csv, BoundaryZeroSet,
    CoveredCell, TangentSet,
};

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fields::{Field, Polynomial};
use crate::geometry::{normalizing_map, LinearChange};
use crate::quadrature::HalfBallRule;

/// Degree-`m` polynomials solving `div(A0 grad P) = 0` in the upper half-space with
/// `e_d . A0 grad P = 0` on its boundary.
pub fn neumann_harmonic_basis(a0: &DMatrix<f64>, d: usize, m: u32) -> Result<Vec<Polynomial>> {
    if d != 2 && d != 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    if a0.nrows() != d || a0.ncols() != d {
        return Err(invalid(format!("A0 must be {d}x{d}")));
    }
    let psi = normalizing_map(a0)?;
    Ok(laplace_neumann_harmonics(d, m)
        .into_iter()
        .map(|q| q.compose_linear(&psi.matrix))
        .collect())
}

/// Harmonic polynomials even in the last variable: the even extension
/// `sum_k (-1)^k x_d^{2k} / (2k)! Lap'^k p` of each tangential monomial `p`.
fn laplace_neumann_harmonics(d: usize, m: u32) -> Vec<Polynomial> {
    let tangential: Vec<[u32; 3]> = if d == 2 {
        vec![[m, 0, 0]]
    } else {
        (0..=m).rev().map(|a| [a, m - a, 0]).collect()
    };
    tangential
        .into_iter()
        .map(|e| {
            let mut lap = Polynomial::monomial(d, e, 1.0);
            let mut out = lap.clone();
            let mut k = 1u32;
            let mut fact = 1.0;
            loop {
                lap = lap.laplacian_in(d - 1);
                if lap.is_zero() {
                    break;
                }
                fact *= ((2 * k - 1) * (2 * k)) as f64;
                let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
                let mut z = [0u32; 3];
                z[d - 1] = 2 * k;
                out = out.add(&lap.mul(&Polynomial::monomial(d, z, sign / fact)));
                k += 1;
            }
            out
        })
        .collect()
}

/// Which region normalizes a blowup snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Mean square over the preimage of the half-ball under the normalizing map.
    #[default]
    Mapped,
    /// Mean square over the plain half-ball.
    Plain,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupSequence {
    pub dim: usize,
    pub center: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub normalizers: Vec<f64>,
    /// Snapshot values at the reference grid points, one vector per lambda.
    pub snapshots: Vec<Vec<f64>>,
    /// Mean square of each snapshot over the normalizing region; 1 up to rounding.
    pub mean_squares: Vec<f64>,
    pub normalization: Normalization,
    #[serde(skip)]
    pub grid: HalfBallRule,
    #[serde(skip)]
    pub a0: DMatrix<f64>,
}

impl BlowupSequence {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Discrete L2 distance between two snapshots on the reference grid.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        weighted_norm(
            &self.grid.weights,
            self.snapshots[i].iter().zip(&self.snapshots[j]).map(|(a, b)| a - b),
        )
    }

    pub fn write_snapshot_csv(&self, k: usize, mut w: impl Write) -> std::io::Result<()> {
        if self.dim == 2 {
            writeln!(w, "theta,rho,value")?;
            for (p, v) in self.grid.points.iter().zip(&self.snapshots[k]) {
                writeln!(w, "{:e},{:e},{:e}", p[1].atan2(p[0]), p[0].hypot(p[1]), v)?;
            }
        } else {
            writeln!(w, "x,y,z,value")?;
            for (p, v) in self.grid.points.iter().zip(&self.snapshots[k]) {
                writeln!(w, "{:e},{:e},{:e},{:e}", p[0], p[1], p[2], v)?;
            }
        }
        Ok(())
    }

    /// File name of the snapshot for `lambdas[k]`.
    pub fn snapshot_name(&self, k: usize) -> String {
        format!("lambda_{:.6}.csv", self.lambdas[k])
    }
}

fn weighted_norm(w: &[f64], v: impl Iterator<Item = f64>) -> f64 {
    w.iter().zip(v).map(|(w, v)| w * v * v).sum::<f64>().sqrt()
}

fn mapped_grid(map: &LinearChange, grid: &HalfBallRule) -> Vec<[f64; 3]> {
    let d = grid.dim;
    grid.points
        .iter()
        .map(|p| {
            let x = map.apply_inverse(&p[..d]);
            let mut out = [0.0; 3];
            out[..d].copy_from_slice(&x);
            out
        })
        .collect()
}

pub fn rescale_blowup(u: &dyn Field, lambdas: &[f64], a0: &DMatrix<f64>) -> Result<BlowupSequence> {
    let origin = vec![0.0; u.dim()];
    rescale_blowup_at(u, &origin, lambdas, a0, Normalization::Mapped)
}

/// Snapshots `u(center + lambda x) / N_lambda` on the reference grid of the unit half-ball.
pub fn rescale_blowup_at(
    u: &dyn Field,
    center: &[f64],
    lambdas: &[f64],
    a0: &DMatrix<f64>,
    normalization: Normalization,
) -> Result<BlowupSequence> {
    let d = u.dim();
    if center.len() != d {
        return Err(invalid("center has the wrong dimension"));
    }
    if lambdas.is_empty() {
        return Err(invalid("no blowup scales given"));
    }
    if lambdas.iter().any(|&l| !(l > 0.0)) || lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("blowup scales must be positive and strictly decreasing"));
    }
    let grid = HalfBallRule::standard(d);
    let map = match normalization {
        Normalization::Mapped => normalizing_map(a0)?,
        Normalization::Plain => LinearChange::identity(d),
    };
    let reach = map.inverse.clone().svd(false, false).singular_values.max().max(1.0);
    if let Some(ext) = u.extent() {
        let c = crate::geometry::norm(center);
        if c + lambdas[0] * reach > ext * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "blowup scale {} leaves the domain of radius {ext} around {center:?}",
                lambdas[0]
            )));
        }
    }
    let norm_points = mapped_grid(&map, &grid);
    let at = |lambda: f64, p: &[f64; 3]| -> f64 {
        let mut x = [0.0; 3];
        for k in 0..d {
            x[k] = center[k] + lambda * p[k];
        }
        u.value(&x[..d])
    };
    let results: Vec<Result<(f64, Vec<f64>, f64)>> = lambdas
        .par_iter()
        .map(|&lambda| {
            let region: Vec<f64> = norm_points.iter().map(|p| at(lambda, p)).collect();
            let ms: f64 = grid.weights.iter().zip(&region).map(|(w, v)| w * v * v).sum();
            if !(ms >= 1e-300) {
                return Err(Error::ZeroField {
                    radius: lambda,
                    mean_square: ms,
                });
            }
            let n = ms.sqrt();
            let snap: Vec<f64> = grid.points.iter().map(|p| at(lambda, p) / n).collect();
            let check: f64 = grid
                .weights
                .iter()
                .zip(&region)
                .map(|(w, v)| w * (v / n) * (v / n))
                .sum();
            Ok((n, snap, check))
        })
        .collect();
    let mut seq = BlowupSequence {
        dim: d,
        center: center.to_vec(),
        lambdas: lambdas.to_vec(),
        normalizers: Vec::new(),
        snapshots: Vec::new(),
        mean_squares: Vec::new(),
        normalization,
        grid,
        a0: a0.clone(),
    };
    for r in results {
        let (n, s, c) = r?;
        seq.normalizers.push(n);
        seq.snapshots.push(s);
        seq.mean_squares.push(c);
    }
    Ok(seq)
}

#[derive(Debug, Clone, Serialize)]
pub struct HomogeneousFit {
    pub degree: u32,
    /// Coefficients of the final snapshot in the basis.
    pub coefficients: Vec<f64>,
    #[serde(skip)]
    pub basis: Vec<Polynomial>,
    /// Relative L2 residual of the final snapshot.
    pub residual: f64,
    pub lambdas: Vec<f64>,
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl HomogeneousFit {
    pub fn limit(&self) -> Polynomial {
        self.basis
            .iter()
            .zip(&self.coefficients)
            .fold(Polynomial::zero(self.basis[0].dim()), |acc, (p, c)| {
                acc.add(&p.scale(*c))
            })
    }
}

const INCONSISTENT: f64 = 0.5;

/// Least-squares projection onto the degree-`m` basis; fails when the final residual
/// exceeds 0.5.
pub fn fit_homogeneous(seq: &BlowupSequence, m: u32) -> Result<HomogeneousFit> {
    let fit = fit_homogeneous_unchecked(seq, m)?;
    if fit.residual > INCONSISTENT {
        return Err(Error::InconsistentDegree {
            degree: m,
            residual: fit.residual,
        });
    }
    Ok(fit)
}

/// As [`fit_homogeneous`] but returns poor fits instead of rejecting them.
pub fn fit_homogeneous_unchecked(seq: &BlowupSequence, m: u32) -> Result<HomogeneousFit> {
    if seq.is_empty() {
        return Err(invalid("blowup sequence has no snapshots"));
    }
    let d = seq.dim;
    let basis = neumann_harmonic_basis(&seq.a0, d, m)?;
    let sw: Vec<f64> = seq.grid.weights.iter().map(|w| w.sqrt()).collect();
    let n = seq.grid.len();
    let design = DMatrix::from_fn(n, basis.len(), |i, j| sw[i] * basis[j].eval(&seq.grid.points[i][..d]));
    let svd = design.clone().svd(true, true);
    let mut residuals = Vec::with_capacity(seq.len());
    let mut coefficients = Vec::new();
    for s in &seq.snapshots {
        let rhs = DVector::from_iterator(n, s.iter().zip(&sw).map(|(v, w)| v * w));
        let c = svd.solve(&rhs, 1e-12).map_err(|e| invalid(e.to_string()))?;
        let r = &rhs - &design * &c;
        residuals.push(r.norm() / rhs.norm());
        coefficients = c.iter().copied().collect();
    }
    let residual = *residuals.last().expect("nonempty");
    let tail = &residuals[residuals.len().saturating_sub(3)..];
    let converged = residual < 1e-8 || (tail.len() >= 2 && tail.windows(2).all(|w| w[1] <= 1.1 * w[0]));
    Ok(HomogeneousFit {
        degree: m,
        coefficients,
        basis,
        residual,
        lambdas: seq.lambdas.clone(),
        residuals,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::AnalyticField;

    fn eye(d: usize) -> DMatrix<f64> {
        DMatrix::identity(d, d)
    }

    #[test]
    fn planar_basis() {
        let b = neumann_harmonic_basis(&eye(2), 2, 1).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].eval(&[0.3, 0.7]), 0.3);
        let b = neumann_harmonic_basis(&eye(2), 2, 2).unwrap();
        assert!((b[0].eval(&[0.3, 0.7]) - (0.09 - 0.49)).abs() < 1e-15);
        let b = neumann_harmonic_basis(&eye(2), 2, 0).unwrap();
        assert_eq!(b[0].eval(&[0.3, 0.7]), 1.0);
        assert!(neumann_harmonic_basis(&eye(4), 4, 1).is_err());
    }

    #[test]
    fn basis_solves_conormal_problem() {
        let a2 = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a3 = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.4, 0.3, 1.5, -0.2, 0.4, -0.2, 1.0]);
        for (a, d) in [(a2, 2), (a3, 3)] {
            for m in 0..5 {
                let basis = neumann_harmonic_basis(&a, d, m).unwrap();
                let expect = if d == 2 { 1 } else { m as usize + 1 };
                assert_eq!(basis.len(), expect);
                for p in &basis {
                    assert!(p.is_homogeneous(m));
                    let mut div = Polynomial::zero(d);
                    for i in 0..d {
                        for j in 0..d {
                            div = div.add(&p.derivative(j).derivative(i).scale(a[(i, j)]));
                        }
                    }
                    let conormal = (0..d).fold(Polynomial::zero(d), |acc, j| {
                        acc.add(&p.derivative(j).scale(a[(d - 1, j)]))
                    });
                    for x in [[0.3, -0.2, 0.4], [-0.7, 0.1, 0.2], [0.25, 0.5, 0.3]] {
                        assert!(div.eval(&x[..d]).abs() < 1e-10);
                        let mut b = x;
                        b[d - 1] = 0.0;
                        assert!(conormal.eval(&b[..d]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn homogeneous_snapshots_are_fixed() {
        let u = AnalyticField::parse(2, "x^2 - y^2").unwrap();
        let seq = rescale_blowup(&u, &[0.4, 0.2, 0.1], &eye(2)).unwrap();
        let s6 = 6f64.sqrt();
        for (p, v) in seq.grid.points.iter().zip(&seq.snapshots[2]) {
            assert!((v - s6 * (p[0] * p[0] - p[1] * p[1])).abs() < 1e-10);
        }
        assert!(seq.distance(0, 2) < 1e-8);
        assert!(seq.mean_squares.iter().all(|m| (m - 1.0).abs() < 1e-12));
        let fit = fit_homogeneous(&seq, 2).unwrap();
        assert!(fit.residuals.iter().all(|r| *r < 1e-8) && fit.converged);
        assert!((fit.coefficients[0] - s6).abs() < 1e-10);
        assert!(matches!(
            fit_homogeneous(&seq, 1),
            Err(Error::InconsistentDegree { .. })
        ));
    }

    #[test]
    fn constant_blows_up_to_one() {
        let u = AnalyticField::parse(2, "-3").unwrap();
        let seq = rescale_blowup(&u, &[0.5, 0.25], &eye(2)).unwrap();
        assert!(seq.snapshots[1].iter().all(|v| (v + 1.0).abs() < 1e-14));
    }

    #[test]
    fn two_term_residual_halves() {
        let u = AnalyticField::parse(2, "x^2 - y^2 + x^3 - 3*x*y^2").unwrap();
        let seq = rescale_blowup(&u, &[0.4, 0.2, 0.1], &eye(2)).unwrap();
        let fit = fit_homogeneous(&seq, 2).unwrap();
        let ratio = fit.residuals[2] / fit.residuals[1];
        assert!((0.45..0.55).contains(&ratio), "{:?}", fit.residuals);
        assert!(fit.converged);
    }

    #[test]
    fn mapped_normalization_uses_preimage() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let u = AnalyticField::parse(2, "x").unwrap();
        let mapped = rescale_blowup_at(&u, &[0.0, 0.0], &[0.5], &a, Normalization::Mapped).unwrap();
        let plain = rescale_blowup_at(&u, &[0.0, 0.0], &[0.5], &a, Normalization::Plain).unwrap();
        // the preimage half-ball is stretched by 2 in x
        assert!((mapped.normalizers[0] / plain.normalizers[0] - 2.0).abs() < 1e-12);
        assert!(fit_homogeneous(&mapped, 1).unwrap().residual < 1e-10);
    }

    #[test]
    fn scales_must_decrease() {
        let u = AnalyticField::parse(2, "x").unwrap();
        assert!(rescale_blowup(&u, &[0.1, 0.2], &eye(2)).is_err());
        assert!(matches!(
            rescale_blowup(&AnalyticField::parse(2, "0").unwrap(), &[0.1], &eye(2)),
            Err(Error::ZeroField { .. })
        ));
    }
}
