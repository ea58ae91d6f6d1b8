//! Quadrature rules: Gauss-Legendre on intervals, symmetric triangle rules and
//! composite polar rules on half-balls.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_interval(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|w| w * half).collect(),
    )
}

/// Composite Gauss rule with `panels` equal panels of `n` points on [a, b].
pub fn composite_gauss(n: usize, panels: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n * panels);
    let mut weights = Vec::with_capacity(n * panels);
    let step = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + step * p as f64;
        let hi = if p + 1 == panels { b } else { lo + step };
        let (x, w) = gauss_interval(n, lo, hi);
        nodes.extend(x);
        weights.extend(w);
    }
    (nodes, weights)
}

/// A triangle rule in barycentric coordinates; weights sum to 1.
#[derive(Debug, Clone, Copy)]
pub struct TriangleRule {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
}

/// Degree-2 three point rule.
pub const TRI_3: TriangleRule = TriangleRule {
    points: &[
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ],
    weights: &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
};

const A1: f64 = 0.797_426_985_353_087_3;
const B1: f64 = 0.101_286_507_323_456_3;
const A2: f64 = 0.059_715_871_789_769_8;
const B2: f64 = 0.470_142_064_105_115_1;
const W1: f64 = 0.125_939_180_544_827_1;
const W2: f64 = 0.132_394_152_788_506_2;

/// Degree-5 seven point rule (Radon).
pub const TRI_7: TriangleRule = TriangleRule {
    points: &[
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [A1, B1, B1],
        [B1, A1, B1],
        [B1, B1, A1],
        [A2, B2, B2],
        [B2, A2, B2],
        [B2, B2, A2],
    ],
    weights: &[0.225, W1, W1, W1, W2, W2, W2],
};

/// Points and weights (summing to one) that average over the unit half-ball
/// `{|x| < 1, x_d > 0}`. Scaling the points by `r` gives the rule for radius `r`.
#[derive(Debug, Clone)]
pub struct HalfBallRule {
    pub dim: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl HalfBallRule {
    /// Polar composite rule on the unit half-disk.
    pub fn disk(radial: usize, panels: usize, angular: usize) -> Self {
        let (rho, wr) = composite_gauss(radial, panels, 0.0, 1.0);
        let (theta, wt) = gauss_interval(angular, 0.0, PI);
        let mut points = Vec::with_capacity(rho.len() * theta.len());
        let mut weights = Vec::with_capacity(rho.len() * theta.len());
        let area = 0.5 * PI;
        for (r, wr) in rho.iter().zip(&wr) {
            for (t, wt) in theta.iter().zip(&wt) {
                points.push([r * t.cos(), r * t.sin(), 0.0]);
                weights.push(r * wr * wt / area);
            }
        }
        HalfBallRule {
            dim: 2,
            points,
            weights,
        }
    }

    /// Spherical rule on the unit upper half-ball in three dimensions.
    pub fn ball(radial: usize, panels: usize, polar: usize, azimuthal: usize) -> Self {
        let (rho, wr) = composite_gauss(radial, panels, 0.0, 1.0);
        let (phi, wp) = gauss_interval(polar, 0.0, 0.5 * PI);
        let volume = 2.0 * PI / 3.0;
        let dtheta = 2.0 * PI / azimuthal as f64;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (r, wr) in rho.iter().zip(&wr) {
            for (p, wp) in phi.iter().zip(&wp) {
                for k in 0..azimuthal {
                    let t = (k as f64 + 0.5) * dtheta;
                    let s = p.sin();
                    points.push([r * s * t.cos(), r * s * t.sin(), r * p.cos()]);
                    weights.push(r * r * s * wr * wp * dtheta / volume);
                }
            }
        }
        HalfBallRule {
            dim: 3,
            points,
            weights,
        }
    }

    /// Default analysis rule for the given dimension.
    pub fn standard(dim: usize) -> Self {
        if dim == 3 {
            Self::ball(12, 3, 16, 32)
        } else {
            Self::disk(16, 4, 64)
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
