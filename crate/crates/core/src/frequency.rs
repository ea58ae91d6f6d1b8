//! Doubling index, frequency function and vanishing order on half-balls.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fields::{Field, FramedField};
use crate::geometry::LinearChange;
use crate::quadrature::{composite_gauss, HalfBallRule};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    pub radii: Vec<f64>,
    /// Mean of `v^2` over the half-ball of radius `r`.
    pub h: Vec<f64>,
    /// `H(2r) / H(r)`.
    pub n: Vec<f64>,
    /// Mean of `|grad v|^2 (r^2 - |x|^2)` over the half-ball, divided by `H(r)`.
    pub f: Vec<f64>,
    /// `log2 sqrt N(r)`.
    pub dyadic_log: Vec<f64>,
}

/// Half-ball means of `v^2` and `|grad v|^2 (r^2 - |x|^2)`.
fn half_ball_means(v: &dyn Field, rule: &HalfBallRule, r: f64) -> (f64, f64) {
    let d = v.dim();
    let mut h = 0.0;
    let mut g = 0.0;
    let mut x = [0.0; 3];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        for k in 0..d {
            x[k] = r * p[k];
        }
        let val = v.value(&x[..d]);
        let grad = v.gradient(&x[..d]);
        let r2: f64 = x[..d].iter().map(|c| c * c).sum();
        let g2: f64 = grad[..d].iter().map(|c| c * c).sum();
        h += w * val * val;
        g += w * g2 * (r * r - r2);
    }
    (h, g)
}

fn check_extent(v: &dyn Field, outer: f64) -> Result<()> {
    if let Some(ext) = v.extent() {
        if outer > ext * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "radius {outer} exceeds the field's domain radius {ext}"
            )));
        }
    }
    Ok(())
}

/// `n` log-spaced radii from `lo` to `hi`.
pub fn log_radii(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Default grid: 40 log-spaced radii over `[0.01, 0.5] R`.
pub fn default_radii(domain_radius: f64) -> Vec<f64> {
    log_radii(0.01 * domain_radius, 0.5 * domain_radius, 40)
}

/// Profile of `v`, or of `y -> v(M^{-1} y)` when a linear change `M` is given.
pub fn radial_profile(v: &dyn Field, radii: &[f64], map: Option<&LinearChange>) -> Result<RadialProfile> {
    match map {
        Some(m) => {
            if m.dim() != v.dim() {
                return Err(invalid("map dimension does not match the field"));
            }
            let framed = FramedField::new(v, m.clone());
            profile_of(&framed, radii)
        }
        None => profile_of(v, radii),
    }
}

fn profile_of(v: &dyn Field, radii: &[f64]) -> Result<RadialProfile> {
    if radii.is_empty() {
        return Err(invalid("no radii given"));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(invalid("radii must be positive and strictly increasing"));
    }
    let rmax = radii[radii.len() - 1];
    check_extent(v, 2.0 * rmax)?;
    let rule = HalfBallRule::standard(v.dim());
    let all: Vec<f64> = radii.iter().flat_map(|&r| [r, 2.0 * r]).collect();
    let means: Vec<(f64, f64)> = all.par_iter().map(|&r| half_ball_means(v, &rule, r)).collect();
    let mut out = RadialProfile {
        radii: radii.to_vec(),
        h: Vec::with_capacity(radii.len()),
        n: Vec::with_capacity(radii.len()),
        f: Vec::with_capacity(radii.len()),
        dyadic_log: Vec::with_capacity(radii.len()),
    };
    for (k, &r) in radii.iter().enumerate() {
        let (h1, g1) = means[2 * k];
        let (h2, _) = means[2 * k + 1];
        for (rad, h) in [(r, h1), (2.0 * r, h2)] {
            if !(h >= 1e-300) {
                return Err(Error::ZeroField {
                    radius: rad,
                    mean_square: h,
                });
            }
        }
        let n = h2 / h1;
        out.h.push(h1);
        out.n.push(n);
        out.f.push(g1 / h1);
        out.dyadic_log.push(0.5 * n.log2());
    }
    Ok(out)
}

/// Adjacent-pair violations of monotonicity beyond `slack`, as `(F, N)` counts.
pub fn monotonicity_violations(p: &RadialProfile, slack: f64) -> (usize, usize) {
    let f = p.f.windows(2).filter(|w| w[1] < w[0] - slack).count();
    let n = p.n.windows(2).filter(|w| w[1] < w[0] - slack).count();
    (f, n)
}

pub fn write_profile_csv(p: &RadialProfile, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "r,H,N,F,log2_sqrt_N")?;
    for k in 0..p.radii.len() {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e}",
            p.radii[k], p.h[k], p.n[k], p.f[k], p.dyadic_log[k]
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub r: f64,
    /// Richardson-extrapolated central difference of `H`.
    pub dh_dr: f64,
    /// `2 r^{-1} mean(v x.grad v)`.
    pub virial: f64,
    /// `r^{-1} mean(|grad v|^2 (r^2 - |x|^2))`.
    pub dirichlet: f64,
    /// Largest pairwise gap of the three, relative to `H / r`.
    pub gap_derivative: f64,
    /// `r H'(r) / H(r)`.
    pub log_derivative: f64,
    pub frequency: f64,
    /// `|r H'/H - F|`.
    pub gap_log_derivative: f64,
    pub doubling: f64,
    /// `exp(ln 2 int_{log2 r}^{1 + log2 r} F(2^s) ds)`.
    pub doubling_from_frequency: f64,
    /// Relative gap between the two.
    pub gap_doubling: f64,
}

impl IdentityReport {
    pub fn max_gap(&self) -> f64 {
        self.gap_derivative.max(self.gap_log_derivative).max(self.gap_doubling)
    }
}

fn mean_h(v: &dyn Field, rule: &HalfBallRule, r: f64) -> f64 {
    half_ball_means(v, rule, r).0
}

pub fn verify_identities(v: &dyn Field, r: f64) -> Result<IdentityReport> {
    if !(r > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    let delta = 1e-2 * r;
    check_extent(v, 2.0 * r + delta).map_err(|_| {
        invalid(format!(
            "radius {r} too close to the domain edge for the identities (needs 2r + {delta})"
        ))
    })?;
    let d = v.dim();
    let rule = HalfBallRule::standard(d);
    let central = |h: f64| (mean_h(v, &rule, r + h) - mean_h(v, &rule, r - h)) / (2.0 * h);
    let dh_dr = (4.0 * central(0.5 * delta) - central(delta)) / 3.0;

    let mut virial = 0.0;
    let mut x = [0.0; 3];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        for k in 0..d {
            x[k] = r * p[k];
        }
        let g = v.gradient(&x[..d]);
        let xg: f64 = (0..d).map(|k| x[k] * g[k]).sum();
        virial += w * v.value(&x[..d]) * xg;
    }
    virial *= 2.0 / r;
    let (h, g) = half_ball_means(v, &rule, r);
    if !(h >= 1e-300) {
        return Err(Error::ZeroField {
            radius: r,
            mean_square: h,
        });
    }
    let dirichlet = g / r;
    let scale = h / r;
    let gap_derivative = [
        (dh_dr - virial).abs(),
        (dh_dr - dirichlet).abs(),
        (virial - dirichlet).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
        / scale;

    let frequency = g / h;
    let log_derivative = r * dh_dr / h;

    let (h2, _) = half_ball_means(v, &rule, 2.0 * r);
    let doubling = h2 / h;
    let (s, ws) = composite_gauss(8, 8, r.log2(), 1.0 + r.log2());
    let integral: f64 = s
        .iter()
        .zip(&ws)
        .map(|(&si, &wi)| {
            let rho = si.exp2();
            let (hh, gg) = half_ball_means(v, &rule, rho);
            wi * gg / hh
        })
        .sum();
    let doubling_from_frequency = (std::f64::consts::LN_2 * integral).exp();
    Ok(IdentityReport {
        r,
        dh_dr,
        virial,
        dirichlet,
        gap_derivative,
        log_derivative,
        frequency,
        gap_log_derivative: (log_derivative - frequency).abs(),
        doubling,
        doubling_from_frequency,
        gap_doubling: (doubling - doubling_from_frequency).abs() / doubling,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderClass {
    FiniteOrder,
    InfiniteOrderSuspicion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VanishingOrderEstimate {
    pub m_hat: f64,
    pub m_rounded: u32,
    pub deviation: f64,
    pub classification: OrderClass,
    /// Both neighbours when `m_hat` sits on a half-integer.
    pub inconclusive: Option<(u32, u32)>,
}

pub const DEFAULT_CUTOFF: f64 = 12.0;
const TIE_BAND: f64 = 1e-6;

/// Estimate from the median dyadic log over the smallest quartile of radii.
pub fn vanishing_order(p: &RadialProfile, cutoff: f64) -> Result<VanishingOrderEstimate> {
    let k = p.radii.len();
    if k < 8 {
        return Err(invalid(format!("profile needs at least 8 radii, got {k}")));
    }
    let span = 2.0 * p.radii[k - 1] / p.radii[0];
    if span < 100.0 * (1.0 - 1e-12) {
        return Err(invalid(format!(
            "profile radii must span two decades (2 r_max / r_min = {span:.3})"
        )));
    }
    let q = k.div_ceil(4);
    let mut small: Vec<f64> = p.dyadic_log[..q].to_vec();
    if small.iter().any(|v| !v.is_finite()) {
        return Ok(VanishingOrderEstimate {
            m_hat: f64::INFINITY,
            m_rounded: u32::MAX,
            deviation: f64::INFINITY,
            classification: OrderClass::InfiniteOrderSuspicion,
            inconclusive: None,
        });
    }
    small.sort_by(f64::total_cmp);
    let m_hat = if q % 2 == 1 {
        small[q / 2]
    } else {
        0.5 * (small[q / 2 - 1] + small[q / 2])
    };
    let classification = if m_hat > cutoff {
        OrderClass::InfiniteOrderSuspicion
    } else {
        OrderClass::FiniteOrder
    };
    let clamped = m_hat.max(0.0);
    let frac = clamped - clamped.floor();
    if (frac - 0.5).abs() < TIE_BAND {
        let lo = clamped.floor() as u32;
        return Ok(VanishingOrderEstimate {
            m_hat,
            m_rounded: lo,
            deviation: 0.5,
            classification,
            inconclusive: Some((lo, lo + 1)),
        });
    }
    let m_rounded = clamped.round() as u32;
    Ok(VanishingOrderEstimate {
        m_hat,
        m_rounded,
        deviation: (m_hat - m_rounded as f64).abs(),
        classification,
        inconclusive: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidityReport {
    pub s: f64,
    pub t: f64,
    pub f_s: f64,
    pub f_t: f64,
    pub homogeneous: bool,
    pub dominant_mode: u32,
    /// Smallest purity over the three sampled radii.
    pub mode_purity: f64,
    pub radii: [f64; 3],
    pub purities: [f64; 3],
    pub modes: [u32; 3],
}

const MAX_MODE: u32 = 24;

/// Dominant `cos(m theta)` mode on the half circle of radius `r` and its energy fraction.
pub fn dominant_mode(v: &dyn Field, r: f64) -> Result<(u32, f64)> {
    let (th, w) = composite_gauss(16, 16, 0.0, std::f64::consts::PI);
    let vals: Vec<f64> = th.iter().map(|t| v.value(&[r * t.cos(), r * t.sin()])).collect();
    let total: f64 = vals.iter().zip(&w).map(|(v, w)| w * v * v).sum();
    if !(total > 1e-300) {
        return Err(Error::ZeroField {
            radius: r,
            mean_square: total,
        });
    }
    let mut best = (0, 0.0);
    for m in 0..=MAX_MODE {
        let c: f64 = th
            .iter()
            .zip(&vals)
            .zip(&w)
            .map(|((t, v), w)| w * v * (m as f64 * t).cos())
            .sum();
        let norm = if m == 0 {
            std::f64::consts::PI
        } else {
            std::f64::consts::FRAC_PI_2
        };
        let e = c * c / norm;
        if e > best.1 {
            best = (m, e);
        }
    }
    Ok((best.0, best.1 / total))
}

pub fn rigidity_check(v: &dyn Field, s: f64, t: f64, tol: f64) -> Result<RigidityReport> {
    if v.dim() != 2 {
        return Err(Error::UnsupportedDimension(v.dim()));
    }
    if !(0.0 < s && s < t) {
        return Err(invalid(format!("radii must satisfy 0 < s < t, got s = {s}, t = {t}")));
    }
    check_extent(v, t)?;
    let rule = HalfBallRule::standard(2);
    let freq = |r: f64| -> Result<f64> {
        let (h, g) = half_ball_means(v, &rule, r);
        if !(h >= 1e-300) {
            return Err(Error::ZeroField {
                radius: r,
                mean_square: h,
            });
        }
        Ok(g / h)
    };
    let (f_s, f_t) = (freq(s)?, freq(t)?);
    let radii = [s, 0.5 * (s + t), t];
    let mut purities = [0.0; 3];
    let mut modes = [0; 3];
    for k in 0..3 {
        let (m, p) = dominant_mode(v, radii[k])?;
        modes[k] = m;
        purities[k] = p;
    }
    let mode_purity = purities.iter().copied().fold(f64::INFINITY, f64::min);
    let same = modes.iter().all(|&m| m == modes[0]);
    Ok(RigidityReport {
        s,
        t,
        f_s,
        f_t,
        homogeneous: (f_t - f_s).abs() < tol && mode_purity > 0.999 && same,
        dominant_mode: modes[0],
        mode_purity,
        radii,
        purities,
        modes,
    })
}
