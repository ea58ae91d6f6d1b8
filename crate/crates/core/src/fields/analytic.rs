//! Closed-form fields and field adapters (shift/scale, linear frames).

use std::sync::Arc;

use crate::error::Result;
use crate::fields::expr::{parse_expr, Expr};
use crate::fields::{Field, Vec3};
use crate::geometry::LinearChange;

/// A field given by an expression, with a symbolic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticField {
    dim: usize,
    expr: Expr,
    grad: Vec<Expr>,
}

impl AnalyticField {
    pub fn new(dim: usize, expr: Expr) -> Self {
        let grad = (0..dim).map(|k| expr.derivative(k)).collect();
        AnalyticField { dim, expr, grad }
    }

    pub fn parse(dim: usize, source: &str) -> Result<Self> {
        Ok(Self::new(dim, parse_expr(source)?))
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl Field for AnalyticField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.expr.eval(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec3 {
        let mut g = [0.0; 3];
        for (k, e) in self.grad.iter().enumerate() {
            g[k] = e.eval(x);
        }
        g
    }
}

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec3 + Send + Sync>;

/// A field from closures; the gradient defaults to central differences.
#[derive(Clone)]
pub struct FnField {
    dim: usize,
    value: ValueFn,
    grad: Option<GradFn>,
}

impl FnField {
    pub fn new(dim: usize, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnField {
            dim,
            value: Arc::new(value),
            grad: None,
        }
    }

    pub fn with_gradient(mut self, grad: impl Fn(&[f64]) -> Vec3 + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }
}

impl Field for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec3 {
        if let Some(g) = &self.grad {
            return g(x);
        }
        finite_difference_gradient(|p| (self.value)(p), x, self.dim)
    }
}

/// Central-difference gradient with a step relative to the point's size.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], dim: usize) -> Vec3 {
    let scale = x.iter().take(dim).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
    let h = 1e-6 * scale;
    let mut g = [0.0; 3];
    let mut p = x[..dim].to_vec();
    for k in 0..dim {
        let orig = p[k];
        p[k] = orig + h;
        let fp = f(&p);
        p[k] = orig - h;
        let fm = f(&p);
        p[k] = orig;
        g[k] = (fp - fm) / (2.0 * h);
    }
    g
}

/// `w(x) = u(center + lambda x)`.
#[derive(Debug, Clone)]
pub struct ShiftedField<F> {
    pub inner: F,
    pub center: Vec<f64>,
    pub lambda: f64,
}

impl<F: Field> ShiftedField<F> {
    pub fn new(inner: F, center: &[f64], lambda: f64) -> Self {
        ShiftedField {
            inner,
            center: center.to_vec(),
            lambda,
        }
    }

    fn point(&self, x: &[f64]) -> Vec<f64> {
        (0..self.inner.dim())
            .map(|i| self.center.get(i).copied().unwrap_or(0.0) + self.lambda * x[i])
            .collect()
    }
}

impl<F: Field> Field for ShiftedField<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(&self.point(x))
    }

    fn gradient(&self, x: &[f64]) -> Vec3 {
        let g = self.inner.gradient(&self.point(x));
        [self.lambda * g[0], self.lambda * g[1], self.lambda * g[2]]
    }

    fn extent(&self) -> Option<f64> {
        let c = crate::geometry::norm(&self.center);
        self.inner.extent().map(|r| ((r - c) / self.lambda).max(0.0))
    }
}

/// `w(x) = factor * u(x)`.
#[derive(Debug, Clone)]
pub struct ScaledField<F> {
    pub inner: F,
    pub factor: f64,
}

impl<F: Field> Field for ScaledField<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.factor * self.inner.value(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec3 {
        let g = self.inner.gradient(x);
        [self.factor * g[0], self.factor * g[1], self.factor * g[2]]
    }

    fn extent(&self) -> Option<f64> {
        self.inner.extent()
    }
}

/// A field read in new linear coordinates: `w(y) = u(M^{-1} y)`.
#[derive(Debug, Clone)]
pub struct FramedField<F> {
    pub inner: F,
    pub map: LinearChange,
}

impl<F: Field> FramedField<F> {
    pub fn new(inner: F, map: LinearChange) -> Self {
        FramedField { inner, map }
    }
}

impl<F: Field> Field for FramedField<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, y: &[f64]) -> f64 {
        self.inner.value(&self.map.apply_inverse(&y[..self.dim()]))
    }

    fn gradient(&self, y: &[f64]) -> Vec3 {
        let d = self.dim();
        let g = self.inner.gradient(&self.map.apply_inverse(&y[..d]));
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate().take(d) {
            *o = (0..d).map(|k| self.map.inverse[(k, i)] * g[k]).sum();
        }
        out
    }

    fn extent(&self) -> Option<f64> {
        let norm = self.map.inverse.clone().svd(false, false).singular_values.max();
        self.inner.extent().map(|r| r / norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn analytic_gradient() {
        let f = AnalyticField::parse(2, "x^2 - y^2").unwrap();
        assert_eq!(f.value(&[1.0, 0.0]), 1.0);
        assert_eq!(f.gradient(&[1.0, 2.0]), [2.0, -4.0, 0.0]);
    }

    #[test]
    fn framed_chain_rule() {
        let u = AnalyticField::parse(2, "x^2 + 3*x*y").unwrap();
        let m = LinearChange::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 0.5])).unwrap();
        let w = FramedField::new(u.clone(), m.clone());
        let y = [0.3, -0.7];
        let x = m.apply_inverse(&y);
        assert!((w.value(&y) - u.value(&x)).abs() < 1e-14);
        let fd = finite_difference_gradient(|p| w.value(p), &y, 2);
        let g = w.gradient(&y);
        assert!((g[0] - fd[0]).abs() < 1e-7 && (g[1] - fd[1]).abs() < 1e-7);
    }

    #[test]
    fn shifted_scaling() {
        let u = AnalyticField::parse(2, "x*y").unwrap();
        let w = ShiftedField::new(u, &[1.0, 0.0], 0.5);
        assert_eq!(w.value(&[2.0, 2.0]), 2.0);
        assert_eq!(w.gradient(&[0.0, 0.0]), [0.0, 0.5, 0.0]);
    }
}
