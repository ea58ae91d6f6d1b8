//! Sparse multivariate polynomials in up to three variables.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::fields::{Field, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<[u32; 3], f64>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Polynomial {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::monomial(dim, [0, 0, 0], c)
    }

    pub fn monomial(dim: usize, exps: [u32; 3], coef: f64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(exps, coef);
        p
    }

    /// The coordinate `x_k`.
    pub fn var(dim: usize, k: usize) -> Self {
        let mut e = [0; 3];
        e[k] = 1;
        Self::monomial(dim, e, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32; 3], &f64)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, exps: [u32; 3], coef: f64) {
        if coef == 0.0 {
            return;
        }
        let entry = self.terms.entry(exps).or_insert(0.0);
        *entry += coef;
        if *entry == 0.0 {
            self.terms.remove(&exps);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    pub fn is_homogeneous(&self, m: u32) -> bool {
        self.terms.keys().all(|e| e.iter().sum::<u32>() == m)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, v) in &self.terms {
            out.add_term(*e, v * c);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, v) in &other.terms {
            out.add_term(*e, *v);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.dim.max(other.dim));
        for (ea, va) in &self.terms {
            for (eb, vb) in &other.terms {
                out.add_term([ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]], va * vb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::constant(self.dim, 1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn derivative(&self, k: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, v) in &self.terms {
            if e[k] > 0 {
                let mut f = *e;
                f[k] -= 1;
                out.add_term(f, v * e[k] as f64);
            }
        }
        out
    }

    /// Laplacian in the first `n` variables.
    pub fn laplacian_in(&self, n: usize) -> Self {
        (0..n).fold(Self::zero(self.dim), |acc, k| {
            acc.add(&self.derivative(k).derivative(k))
        })
    }

    /// `x -> P(M x)`.
    pub fn compose_linear(&self, m: &DMatrix<f64>) -> Self {
        let d = self.dim;
        let rows: Vec<Polynomial> = (0..d)
            .map(|i| (0..d).fold(Self::zero(d), |acc, j| acc.add(&Self::var(d, j).scale(m[(i, j)]))))
            .collect();
        let mut out = Self::zero(d);
        for (e, v) in &self.terms {
            let mut term = Self::constant(d, *v);
            for (i, row) in rows.iter().enumerate() {
                if e[i] > 0 {
                    term = term.mul(&row.pow(e[i]));
                }
            }
            out = out.add(&term);
        }
        out.prune(1e-15);
        out
    }

    /// Drops coefficients below `tol` relative to the largest one.
    pub fn prune(&mut self, tol: f64) {
        let big = self.terms.values().fold(0.0f64, |m, v| m.max(v.abs()));
        self.terms.retain(|_, v| v.abs() > tol * big);
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut p = [0.0; 3];
        for (i, v) in x.iter().take(3).enumerate() {
            p[i] = *v;
        }
        self.terms
            .iter()
            .map(|(e, c)| c * p[0].powi(e[0] as i32) * p[1].powi(e[1] as i32) * p[2].powi(e[2] as i32))
            .sum()
    }
}

impl Field for Polynomial {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec3 {
        let mut g = [0.0; 3];
        for (k, gk) in g.iter_mut().enumerate().take(self.dim) {
            *gk = self.derivative(k).eval(x);
        }
        g
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        const NAMES: [&str; 3] = ["x", "y", "z"];
        for (n, (e, c)) in self.terms.iter().rev().enumerate() {
            if n > 0 {
                f.write_str(if *c < 0.0 { " - " } else { " + " })?;
            } else if *c < 0.0 {
                f.write_str("-")?;
            }
            write!(f, "{:?}", c.abs())?;
            for (k, p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "*{}", NAMES[k])?,
                    _ => write!(f, "*{}^{}", NAMES[k], p)?,
                }
            }
        }
        Ok(())
    }
}
