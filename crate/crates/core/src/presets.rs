//! Built-in test fields: Neumann-harmonic modes `r^m cos(m theta)` and seeded mixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fields::AnalyticField;

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub name: String,
    pub source: String,
    /// Homogeneity degree for pure modes.
    pub degree: Option<u32>,
}

impl CatalogEntry {
    pub fn field(&self) -> Result<AnalyticField> {
        AnalyticField::parse(2, &self.source)
    }
}

fn binomial(n: u32, k: u32) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * u64::from(n - i) / u64::from(i + 1))
}

/// `Re (x + i y)^m` expanded as a polynomial in `x, y`.
pub fn harmonic_mode(m: u32) -> String {
    if m == 0 {
        return "1".into();
    }
    let mut out = String::new();
    for k in (0..=m).step_by(2) {
        let c = binomial(m, k);
        let sign = if (k / 2) % 2 == 0 { '+' } else { '-' };
        let mut term = Vec::new();
        if c != 1 {
            term.push(c.to_string());
        }
        match m - k {
            0 => {}
            1 => term.push("x".into()),
            p => term.push(format!("x^{p}")),
        }
        match k {
            0 => {}
            1 => term.push("y".into()),
            p => term.push(format!("y^{p}")),
        }
        if out.is_empty() {
            if sign == '-' {
                out.push('-');
            }
        } else {
            out.push_str(&format!(" {sign} "));
        }
        out.push_str(&term.join("*"));
    }
    out
}

/// Pure modes `m = 0..=max_degree` followed by `mixtures` random combinations with
/// coefficients uniform in [-1, 1].
pub fn neumann_harmonic_catalog(max_degree: u32, mixtures: usize, seed: u64) -> Vec<CatalogEntry> {
    let mut out: Vec<CatalogEntry> = (0..=max_degree)
        .map(|m| CatalogEntry {
            name: format!("mode{m}"),
            source: harmonic_mode(m),
            degree: Some(m),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..mixtures {
        let terms: Vec<String> = (0..=max_degree)
            .map(|m| {
                let c: f64 = rng.random_range(-1.0..1.0);
                format!("({c:?})*({})", harmonic_mode(m))
            })
            .collect();
        out.push(CatalogEntry {
            name: format!("mix{k}"),
            source: terms.join(" + "),
            degree: None,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Field;

    #[test]
    fn modes_match_polar_form() {
        for m in 0..=6 {
            let f = AnalyticField::parse(2, &harmonic_mode(m)).unwrap();
            for (r, t) in [(0.3, 0.2), (0.8, 1.4), (0.5, 3.0)] {
                let x = [r * f64::cos(t), r * f64::sin(t)];
                let exact = r.powi(m as i32) * (m as f64 * t).cos();
                assert!((f.value(&x) - exact).abs() < 1e-14, "m = {m}: {}", harmonic_mode(m));
            }
        }
        assert_eq!(harmonic_mode(2), "x^2 - y^2");
        assert_eq!(harmonic_mode(3), "x^3 - 3*x*y^2");
    }

    #[test]
    fn catalog_is_seeded() {
        let a = neumann_harmonic_catalog(4, 5, 7);
        assert_eq!(a.len(), 10);
        assert_eq!(a, neumann_harmonic_catalog(4, 5, 7));
        assert_ne!(a[5], neumann_harmonic_catalog(4, 5, 8)[5]);
        for e in &a {
            e.field().unwrap();
        }
    }
}
