//! Scalar, vector and matrix fields, coefficient sets and their transformations.

pub mod analytic;
pub mod coefficients;
pub mod expr;
pub mod polynomial;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use expr::Expr;

pub use analytic::{AnalyticField, FramedField, ScaledField, ShiftedField};
pub use coefficients::{
    extend_eta, oscillation_modulus, pushforward_coefficients, reflect_coefficients, CoefficientSet, Ellipticity,
    ExtendedEta, Integrability, OscillationModulus,
};
pub use polynomial::Polynomial;

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

/// Anything that can be evaluated with a gradient: analytic expressions,
/// polynomials, discrete solutions.
pub trait Field: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec3;
    /// Radius of the region where the field is defined, if bounded.
    fn extent(&self) -> Option<f64> {
        None
    }
}

impl<F: Field + ?Sized> Field for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec3 {
        (**self).gradient(x)
    }
    fn extent(&self) -> Option<f64> {
        (**self).extent()
    }
}

impl<F: Field + ?Sized> Field for Arc<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec3 {
        (**self).gradient(x)
    }
    fn extent(&self) -> Option<f64> {
        (**self).extent()
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64]) -> Vec3 + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&[f64]) -> Mat3 + Send + Sync>;

/// A scalar coefficient such as `V` or `eta`.
#[derive(Clone)]
pub struct ScalarField {
    f: ScalarFn,
    constant: Option<f64>,
    label: String,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({})", self.label)
    }
}

impl ScalarField {
    pub fn constant(c: f64) -> Self {
        ScalarField {
            f: Arc::new(move |_| c),
            constant: Some(c),
            label: format!("{c:?}"),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn from_expr(e: &Expr) -> Self {
        if let Some(c) = e.constant_value() {
            return Self::constant(c);
        }
        let label = e.to_string();
        let e = e.clone();
        ScalarField {
            f: Arc::new(move |x| e.eval(x)),
            constant: None,
            label,
        }
    }

    pub fn from_fn(label: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField {
            f: Arc::new(f),
            constant: None,
            label: label.into(),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self.constant {
            Some(c) => c,
            None => (self.f)(x),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        self.constant
    }

    pub fn is_zero(&self) -> bool {
        self.constant == Some(0.0)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// A vector coefficient such as `b` or `W`; unused trailing components are zero.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    f: VectorFn,
    constant: Option<Vec3>,
    label: String,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField({})", self.label)
    }
}

impl VectorField {
    pub fn constant(dim: usize, v: Vec3) -> Self {
        let mut v = v;
        for c in v.iter_mut().skip(dim) {
            *c = 0.0;
        }
        VectorField {
            dim,
            f: Arc::new(move |_| v),
            constant: Some(v),
            label: format!("{:?}", &v[..dim]),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, [0.0; 3])
    }

    pub fn from_exprs(exprs: &[Expr]) -> Self {
        let dim = exprs.len();
        let consts: Vec<Option<f64>> = exprs.iter().map(Expr::constant_value).collect();
        if consts.iter().all(Option::is_some) {
            let mut v = [0.0; 3];
            for (i, c) in consts.iter().enumerate() {
                v[i] = c.unwrap_or(0.0);
            }
            return Self::constant(dim, v);
        }
        let label = exprs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ");
        let exprs = exprs.to_vec();
        VectorField {
            dim,
            f: Arc::new(move |x| {
                let mut v = [0.0; 3];
                for (i, e) in exprs.iter().enumerate() {
                    v[i] = e.eval(x);
                }
                v
            }),
            constant: None,
            label,
        }
    }

    pub fn from_fn(dim: usize, label: impl Into<String>, f: impl Fn(&[f64]) -> Vec3 + Send + Sync + 'static) -> Self {
        VectorField {
            dim,
            f: Arc::new(f),
            constant: None,
            label: label.into(),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> Vec3 {
        match self.constant {
            Some(c) => c,
            None => (self.f)(x),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant_value(&self) -> Option<Vec3> {
        self.constant
    }

    pub fn is_zero(&self) -> bool {
        self.constant == Some([0.0; 3])
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// A symmetric matrix field `a_ij`.
#[derive(Clone)]
pub struct MatrixField {
    dim: usize,
    f: MatrixFn,
    constant: Option<Mat3>,
    label: String,
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MatrixField({})", self.label)
    }
}

impl MatrixField {
    pub fn constant(dim: usize, m: Mat3) -> Self {
        let mut m = m;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if i >= dim || j >= dim {
                    *v = 0.0;
                }
            }
        }
        MatrixField {
            dim,
            f: Arc::new(move |_| m),
            constant: Some(m),
            label: format!("{:?}", &m[..dim]),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate().take(dim) {
            row[i] = 1.0;
        }
        Self::constant(dim, m)
    }

    /// Builds the field from a full `dim x dim` array of expressions, which must be symmetric.
    pub fn from_exprs(entries: &[Vec<Expr>]) -> Result<Self> {
        let dim = entries.len();
        if entries.iter().any(|r| r.len() != dim) {
            return Err(crate::error::invalid("matrix field must be square"));
        }
        for i in 0..dim {
            for j in i + 1..dim {
                if entries[i][j] != entries[j][i] {
                    // Structurally different expressions may still agree; probe a few points.
                    let probes = [[0.13, 0.37, 0.21], [-0.41, 0.29, 0.05], [0.61, 0.07, -0.33]];
                    let gap = probes
                        .iter()
                        .map(|p| (entries[i][j].eval(p) - entries[j][i].eval(p)).abs())
                        .fold(0.0, f64::max);
                    if gap > 1e-12 || gap.is_nan() {
                        return Err(Error::NotSymmetric { row: i, col: j, gap });
                    }
                }
            }
        }
        let consts: Vec<Vec<Option<f64>>> = entries
            .iter()
            .map(|r| r.iter().map(Expr::constant_value).collect())
            .collect();
        if consts.iter().flatten().all(Option::is_some) {
            let mut m = [[0.0; 3]; 3];
            for i in 0..dim {
                for j in 0..dim {
                    m[i][j] = consts[i][j].unwrap_or(0.0);
                }
            }
            return Ok(Self::constant(dim, m));
        }
        let label = entries
            .iter()
            .map(|r| r.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", "))
            .collect::<Vec<_>>()
            .join("; ");
        let upper: Vec<(usize, usize, Expr)> = (0..dim)
            .flat_map(|i| (i..dim).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, entries[i][j].clone()))
            .collect();
        Ok(MatrixField {
            dim,
            f: Arc::new(move |x| {
                let mut m = [[0.0; 3]; 3];
                for (i, j, e) in &upper {
                    let v = e.eval(x);
                    m[*i][*j] = v;
                    m[*j][*i] = v;
                }
                m
            }),
            constant: None,
            label,
        })
    }

    pub fn from_fn(dim: usize, label: impl Into<String>, f: impl Fn(&[f64]) -> Mat3 + Send + Sync + 'static) -> Self {
        MatrixField {
            dim,
            f: Arc::new(f),
            constant: None,
            label: label.into(),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> Mat3 {
        match self.constant {
            Some(c) => c,
            None => (self.f)(x),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant_value(&self) -> Option<Mat3> {
        self.constant
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The value at a point as a nalgebra matrix.
    pub fn matrix_at(&self, x: &[f64]) -> nalgebra::DMatrix<f64> {
        let m = self.eval(x);
        nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, j| m[i][j])
    }
}
