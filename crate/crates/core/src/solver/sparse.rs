//! Compressed-row matrices and the direct solve.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicates are summed in the order they appear, so the result does not depend on
    /// anything but the triplet sequence.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().expect("entry") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n_rows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, t)
    }

    /// Largest absolute entry of `A - A^T`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        self.triplets()
            .into_iter()
            .map(|(i, j, v)| (v - t.get(i, j)).abs())
            .chain(t.triplets().into_iter().map(|(i, j, v)| (v - self.get(i, j)).abs()))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A sparse LU factorization.
pub struct Factorization {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl Factorization {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let entries: Vec<Triplet<usize, usize, f64>> = a
            .triplets()
            .into_iter()
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(a.n_rows, a.n_cols, &entries)
            .map_err(|e| Error::SingularSystem(format!("matrix construction failed: {e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| Error::SingularSystem(format!("factorization failed: {e:?}")))?;
        Ok(Factorization { n: a.n_rows, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(x.as_mut());
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Iterative refinement of `A x = b` with an approximate inverse `step`.
fn refine(
    a: &CsrMatrix,
    b: &[f64],
    guess: Option<&[f64]>,
    tol: f64,
    step: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<(Vec<f64>, f64)> {
    let n = a.n_rows;
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0.0));
    }
    let residual = |x: &[f64]| -> Vec<f64> {
        let ax = a.matvec(x);
        b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
    };
    let mut x = match guess {
        Some(g) => g.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = residual(&x);
    let mut rel = norm2(&r) / bnorm;
    for _ in 0..6 {
        let dx = step(&r);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
        let rc = residual(&candidate);
        let relc = norm2(&rc) / bnorm;
        if !relc.is_finite() {
            return Err(Error::SingularSystem("factorization produced non-finite values".into()));
        }
        if relc >= rel && rel <= tol {
            break;
        }
        let improved = relc < 0.5 * rel;
        x = candidate;
        r = rc;
        rel = relc;
        if rel <= 1e-3 * tol || !improved {
            break;
        }
    }
    if rel > tol {
        return Err(Error::NonConvergence { residual: rel });
    }
    Ok((x, rel))
}

/// Sparse LU solve with iterative refinement; returns the solution and the final
/// relative residual `|Ax - b| / |b|`.
pub fn solve_sparse(a: &CsrMatrix, b: &[f64], guess: Option<&[f64]>, tol: f64) -> Result<(Vec<f64>, f64)> {
    let f = Factorization::new(a)?;
    refine(a, b, guess, tol, |r| f.solve(r))
}

/// Solves the bordered system `[K m; m^T 0] [x; l] = b` (given in full as `full`).
///
/// A dense border ruins the fill of a direct factorization, so `K` is made regular by a
/// diagonal bump `s e_p e_p^T` at the vertex with the largest diagonal and the two
/// scalar unknowns `x_p`, `l` are recovered from a 2x2 system.
pub fn solve_bordered(
    k: &CsrMatrix,
    m: &[f64],
    full: &CsrMatrix,
    b: &[f64],
    guess: Option<&[f64]>,
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let n = k.n_rows;
    let (p, s) = (0..n)
        .map(|i| (i, k.get(i, i)))
        .fold((0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
    let s = if s > 0.0 { s } else { 1.0 };
    let mut t = k.triplets();
    t.push((p, p, s));
    let bumped = CsrMatrix::from_triplets(n, n, t);
    let f = Factorization::new(&bumped)?;
    let mut ep = vec![0.0; n];
    ep[p] = 1.0;
    let zp = f.solve(&ep);
    let zm = f.solve(m);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (mzp, mzm) = (dot(m, &zp), dot(m, &zm));
    // x = y + s x_p zp - l zm;  rows: x_p and m^T x = g
    let a11 = 1.0 - s * zp[p];
    let a12 = zm[p];
    let a21 = s * mzp;
    let a22 = -mzm;
    let det = a11 * a22 - a12 * a21;
    if det.abs() < 1e-14 * (a11.abs() + a12.abs()) * (a21.abs() + a22.abs()) || !det.is_finite() {
        return Err(Error::SingularSystem("mean-zero system is singular".into()));
    }
    let step = |r: &[f64]| -> Vec<f64> {
        let y = f.solve(&r[..n]);
        let g = r[n];
        // a11 x_p + a12 l = y_p ; a21 x_p + a22 l = g - m^T y
        let (r1, r2) = (y[p], g - dot(m, &y));
        let xp = (r1 * a22 - a12 * r2) / det;
        let l = (a11 * r2 - a21 * r1) / det;
        let mut x: Vec<f64> = (0..n).map(|i| y[i] + s * xp * zp[i] - l * zm[i]).collect();
        x.push(l);
        x
    };
    refine(full, b, guess, tol, step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(1, 0, 2.0), (0, 0, 1.0), (1, 0, 3.0), (0, 1, -1.0)]);
        assert_eq!(m.get(1, 0), 5.0);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.matvec(&[1.0, 2.0]), vec![-1.0, 5.0]);
        assert_eq!(m.asymmetry(), 6.0);
    }

    #[test]
    fn solves_small_system() {
        let m = CsrMatrix::from_triplets(
            3,
            3,
            vec![
                (0, 0, 4.0),
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 1, 3.0),
                (2, 2, 2.0),
                (2, 0, 0.5),
            ],
        );
        let (x, rel) = solve_sparse(&m, &[1.0, 2.0, 3.0], None, 1e-12).unwrap();
        assert!(rel < 1e-14);
        let r = m.matvec(&x);
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn bordered_matches_direct() {
        // path-graph Laplacian (singular) with a mass border
        let n = 5;
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.extend([(i, i, 1.0), (i + 1, i + 1, 1.0), (i, i + 1, -1.0), (i + 1, i, -1.0)]);
        }
        let k = CsrMatrix::from_triplets(n, n, t.clone());
        let m = vec![0.5, 1.0, 1.0, 1.0, 0.5];
        for (i, &mi) in m.iter().enumerate() {
            t.push((i, n, mi));
            t.push((n, i, mi));
        }
        let full = CsrMatrix::from_triplets(n + 1, n + 1, t);
        let b = vec![1.0, -0.5, 0.25, 0.0, -0.75, 0.0];
        let (x1, _) = solve_bordered(&k, &m, &full, &b, None, 1e-12).unwrap();
        let (x2, _) = solve_sparse(&full, &b, None, 1e-12).unwrap();
        for (a, c) in x1.iter().zip(&x2) {
            assert!((a - c).abs() < 1e-12);
        }
    }
}
