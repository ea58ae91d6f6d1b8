//! Run configuration: a TOML document with quoted expression strings.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ucplab_core::fields::coefficients::Integrability;
use ucplab_core::fields::expr::parse_expr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    pub domain: DomainSection,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default)]
    pub coefficients: CoefficientSection,
    #[serde(default)]
    pub boundary: BoundarySection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub gates: GateSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    #[default]
    HalfBall,
    Graph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(default)]
    pub kind: DomainKind,
    #[serde(default = "two")]
    pub dim: usize,
    pub radius: f64,
    /// Graph function of `x` (d = 2) for `kind = "graph"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    /// Mesh radius when the gauge potential needs a larger host than the analysis ball.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grading: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub breakpoints: Vec<f64>,
    /// Mesh sizes of a refinement study, run in parallel.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<f64>,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection {
            h: default_h(),
            grading: None,
            breakpoints: Vec::new(),
            sweep: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// Finite element solve of the configured boundary value problem.
    #[default]
    Fem,
    /// A closed-form field given by `expr`.
    Analytic,
    /// The built-in Neumann-harmonic catalog: modes and seeded mixtures.
    Catalog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    #[serde(default)]
    pub kind: FieldKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    /// Exact solution of a manufactured problem: default Dirichlet data and error oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
    #[serde(default = "four")]
    pub max_degree: u32,
    #[serde(default = "five")]
    pub mixtures: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for FieldSection {
    fn default() -> Self {
        FieldSection {
            kind: FieldKind::default(),
            expr: None,
            exact: None,
            max_degree: four(),
            mixtures: five(),
            seed: default_seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    /// Rows of `a_ij`; empty means the identity.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub a: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub b: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub w: Vec<String>,
    #[serde(default = "zero_expr")]
    pub v: String,
    #[serde(default = "zero_expr")]
    pub eta: String,
    /// Right-hand side `f` of `-Lu = f`; `"auto"` derives it from `field.exact`.
    #[serde(default = "zero_expr")]
    pub source: String,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub big_lambda: f64,
    #[serde(default = "inf")]
    pub p: f64,
    #[serde(default = "inf")]
    pub q: f64,
    #[serde(default = "inf")]
    pub s: f64,
}

impl Default for CoefficientSection {
    fn default() -> Self {
        CoefficientSection {
            a: Vec::new(),
            b: Vec::new(),
            w: Vec::new(),
            v: zero_expr(),
            eta: zero_expr(),
            source: zero_expr(),
            lambda: 1.0,
            big_lambda: 1.0,
            p: f64::INFINITY,
            q: f64::INFINITY,
            s: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatCondition {
    #[default]
    Natural,
    Robin,
    Neumann,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    #[serde(default)]
    pub flat: FlatCondition,
    /// Conormal flux for `flat = "neumann"`; defaults to the flux of `field.exact`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux: Option<String>,
    /// Dirichlet data on the arc; defaults to `field.exact`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arc: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationKind {
    #[default]
    Mapped,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii_max: Option<f64>,
    #[serde(default = "forty")]
    pub radii_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub identity_radii: Vec<f64>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Degree of the homogeneous fit; defaults to the estimated vanishing order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default)]
    pub normalization: NormalizationKind,
    #[serde(default = "default_zero_radius")]
    pub zero_radius: f64,
    #[serde(default = "default_zero_resolution")]
    pub zero_resolution: f64,
    /// Boundary point whose tangent set is extracted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangent_point: Option<Vec<f64>>,
    /// Even reflection across the flat boundary.
    #[serde(default)]
    pub reflect: bool,
    /// Extra random SPD matrices pushed through the normalizing map.
    #[serde(default)]
    pub spd_samples: usize,
    /// Frequencies compared by the rigidity check, as `[s, t]`.
    #[serde(default = "default_rigidity")]
    pub rigidity_radii: [f64; 2],
    /// Energy identities under `verify`; by default only for homogeneous problems
    /// (no source, no prescribed flux).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identities: Option<bool>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            radii_min: None,
            radii_max: None,
            radii_count: forty(),
            identity_radii: Vec::new(),
            lambdas: default_lambdas(),
            degree: None,
            cutoff: default_cutoff(),
            normalization: NormalizationKind::default(),
            zero_radius: default_zero_radius(),
            zero_resolution: default_zero_resolution(),
            tangent_point: None,
            reflect: false,
            spd_samples: 0,
            rigidity_radii: default_rigidity(),
            identities: None,
        }
    }
}

/// Pass/fail thresholds. Optional gates apply only when set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    #[serde(default = "tol_solve")]
    pub solver_residual: f64,
    #[serde(default = "tol_identity")]
    pub identity_gap: f64,
    #[serde(default = "tol_identity")]
    pub reconstruction: f64,
    #[serde(default = "tol_monotone")]
    pub monotone_slack: f64,
    #[serde(default = "tol_monotone")]
    pub rigidity_f: f64,
    #[serde(default = "tol_identity")]
    pub rigidity_n: f64,
    /// Require zero monotonicity violations.
    #[serde(default)]
    pub monotone: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_order: Option<u32>,
    #[serde(default = "tol_order")]
    pub order_deviation: f64,
    /// Largest allowed fit residual at every scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_residual: Option<f64>,
    /// Allowed range of the residual ratio between the last two scales.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_ratio: Option<[f64; 2]>,
    /// Smallest L2 convergence order over a sweep with an exact solution.
    #[serde(default = "min_order")]
    pub min_order: f64,
    /// Smallest residual reduction per mesh halving (gauge, reflection).
    #[serde(default = "min_ratio")]
    pub min_ratio: f64,
    /// `conormal_residual(u)` must stay above this floor.
    #[serde(default = "half")]
    pub u_floor: f64,
    /// Require a finite root list without plateaus (d = 2).
    #[serde(default)]
    pub finite_zeros: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_dimension: Option<f64>,
    #[serde(default = "tol_dim")]
    pub dimension_tol: f64,
    #[serde(default = "tol_map")]
    pub map_identity: f64,
}

impl Default for GateSection {
    fn default() -> Self {
        GateSection {
            solver_residual: tol_solve(),
            identity_gap: tol_identity(),
            reconstruction: tol_identity(),
            monotone_slack: tol_monotone(),
            rigidity_f: tol_monotone(),
            rigidity_n: tol_identity(),
            monotone: false,
            expected_order: None,
            order_deviation: tol_order(),
            fit_residual: None,
            fit_ratio: None,
            min_order: min_order(),
            min_ratio: min_ratio(),
            u_floor: half(),
            finite_zeros: false,
            expected_dimension: None,
            dimension_tol: tol_dim(),
            map_identity: tol_map(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default)]
    pub plots: bool,
}

fn two() -> usize {
    2
}
fn four() -> u32 {
    4
}
fn five() -> usize {
    5
}
fn forty() -> usize {
    40
}
fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn inf() -> f64 {
    f64::INFINITY
}
fn zero_expr() -> String {
    "0".into()
}
fn default_h() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    20240917
}
fn default_lambdas() -> Vec<f64> {
    vec![0.4, 0.2, 0.1]
}
fn default_cutoff() -> f64 {
    ucplab_core::frequency::DEFAULT_CUTOFF
}
fn default_zero_radius() -> f64 {
    0.9
}
fn default_zero_resolution() -> f64 {
    1e-3
}
fn default_rigidity() -> [f64; 2] {
    [0.1, 0.4]
}
fn tol_solve() -> f64 {
    1e-10
}
fn tol_identity() -> f64 {
    1e-5
}
fn tol_monotone() -> f64 {
    1e-6
}
fn tol_order() -> f64 {
    0.05
}
fn tol_dim() -> f64 {
    0.15
}
fn tol_map() -> f64 {
    1e-10
}
fn min_order() -> f64 {
    1.8
}
fn min_ratio() -> f64 {
    1.7
}

/// A load or validation failure, located by section and key (and by line/column for
/// syntax errors).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub section: String,
    pub key: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(section: &str, key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            section: section.into(),
            key: Some(key.into()),
            line: None,
            column: None,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        ConfigError {
            section: String::new(),
            key: None,
            line: None,
            column: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "line {l}, column {c}: ")?;
        }
        match (&self.key, self.section.is_empty()) {
            (Some(k), false) => write!(f, "[{}] {k}: ", self.section)?,
            (Some(k), true) => write!(f, "{k}: ")?,
            (None, false) => write!(f, "[{}]: ", self.section)?,
            (None, true) => {}
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| syntax_error(text, &e))?;
    cfg.validate()?;
    Ok(cfg)
}

/// TOML text that loads back to an equal config.
pub fn print_config(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}

fn syntax_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let message = e.message().to_string();
    let (line, column, section) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            let section = before
                .lines()
                .rev()
                .find_map(|l| {
                    let l = l.trim();
                    (l.starts_with('[') && l.ends_with(']'))
                        .then(|| l.trim_matches(|c| c == '[' || c == ']').to_string())
                })
                .unwrap_or_default();
            (Some(line), Some(column), section)
        }
        None => (None, None, String::new()),
    };
    let key = message.split('`').nth(1).map(str::to_string);
    ConfigError {
        section,
        key,
        line,
        column,
        message,
    }
}

fn check_expr(section: &str, key: &str, src: &str) -> Result<(), ConfigError> {
    parse_expr(src)
        .map(|_| ())
        .map_err(|e| ConfigError::at(section, key, format!("{e} in \"{src}\"")))
}

fn positive(section: &str, key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::at(
            section,
            key,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

impl RunConfig {
    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    /// Radius of the ball on which the solution is analysed.
    pub fn analysis_radius(&self) -> f64 {
        self.domain.radius
    }

    pub fn radii(&self) -> Vec<f64> {
        let r = self.analysis_radius();
        let lo = self.analysis.radii_min.unwrap_or(0.01 * r);
        let hi = self.analysis.radii_max.unwrap_or(0.5 * r);
        ucplab_core::frequency::log_radii(lo, hi, self.analysis.radii_count)
    }

    pub fn integrability(&self) -> Integrability {
        Integrability {
            p: self.coefficients.p,
            q: self.coefficients.q,
            s: self.coefficients.s,
        }
    }

    /// Checks every invariant that does not need a solve.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = self.domain.dim;
        if !(2..=3).contains(&d) {
            return Err(ConfigError::at("domain", "dim", format!("must be 2 or 3, got {d}")));
        }
        positive("domain", "radius", self.domain.radius)?;
        if let Some(h) = self.domain.host_radius {
            positive("domain", "host_radius", h)?;
            if h < self.domain.radius {
                return Err(ConfigError::at(
                    "domain",
                    "host_radius",
                    "must be at least the domain radius",
                ));
            }
        }
        match (self.domain.kind, &self.domain.phi) {
            (DomainKind::Graph, Some(phi)) => {
                if d != 2 {
                    return Err(ConfigError::at(
                        "domain",
                        "kind",
                        "graph domains are supported for d = 2",
                    ));
                }
                check_expr("domain", "phi", phi)?;
            }
            (DomainKind::Graph, None) => {
                return Err(ConfigError::at("domain", "phi", "missing key for kind = \"graph\""))
            }
            (DomainKind::HalfBall, Some(_)) => {
                return Err(ConfigError::at("domain", "phi", "only allowed for kind = \"graph\""))
            }
            (DomainKind::HalfBall, None) => {}
        }

        positive("mesh", "h", self.mesh.h)?;
        if let Some(g) = self.mesh.grading {
            if !(1.0..=3.0).contains(&g) {
                return Err(ConfigError::at(
                    "mesh",
                    "grading",
                    format!("must lie in [1, 3], got {g}"),
                ));
            }
        }
        for &h in &self.mesh.sweep {
            positive("mesh", "sweep", h)?;
        }

        let c = &self.coefficients;
        if !c.a.is_empty() {
            if c.a.len() != d || c.a.iter().any(|row| row.len() != d) {
                return Err(ConfigError::at("coefficients", "a", format!("must be a {d}x{d} array")));
            }
            for row in &c.a {
                for e in row {
                    check_expr("coefficients", "a", e)?;
                }
            }
        }
        for (key, v) in [("b", &c.b), ("w", &c.w)] {
            if !v.is_empty() && v.len() != d {
                return Err(ConfigError::at("coefficients", key, format!("must have {d} entries")));
            }
            for e in v {
                check_expr("coefficients", key, e)?;
            }
        }
        check_expr("coefficients", "v", &c.v)?;
        check_expr("coefficients", "eta", &c.eta)?;
        if c.source != "auto" {
            check_expr("coefficients", "source", &c.source)?;
        } else if self.field.exact.is_none() {
            return Err(ConfigError::at("coefficients", "source", "\"auto\" needs field.exact"));
        }
        positive("coefficients", "lambda", c.lambda)?;
        positive("coefficients", "big_lambda", c.big_lambda)?;
        if c.big_lambda < c.lambda {
            return Err(ConfigError::at("coefficients", "big_lambda", "must be at least lambda"));
        }
        if let Err((key, msg)) = self.integrability().validate(d) {
            return Err(ConfigError::at("coefficients", key, msg));
        }

        let f = &self.field;
        for (key, e) in [("expr", &f.expr), ("exact", &f.exact)] {
            if let Some(e) = e {
                check_expr("field", key, e)?;
            }
        }
        match f.kind {
            FieldKind::Analytic if f.expr.is_none() => {
                return Err(ConfigError::at("field", "expr", "missing key for kind = \"analytic\""))
            }
            FieldKind::Fem if d != 2 => {
                return Err(ConfigError::at(
                    "field",
                    "kind",
                    "finite element solves are two-dimensional",
                ))
            }
            FieldKind::Fem if self.boundary.arc.is_none() && f.exact.is_none() => {
                return Err(ConfigError::at(
                    "boundary",
                    "arc",
                    "missing Dirichlet data (or field.exact)",
                ))
            }
            FieldKind::Catalog if d != 2 => {
                return Err(ConfigError::at(
                    "field",
                    "kind",
                    "the harmonic catalog is two-dimensional",
                ))
            }
            _ => {}
        }
        for (key, e) in [("flux", &self.boundary.flux), ("arc", &self.boundary.arc)] {
            if let Some(e) = e {
                check_expr("boundary", key, e)?;
            }
        }
        if self.boundary.flat == FlatCondition::Neumann && self.boundary.flux.is_none() && f.exact.is_none() {
            return Err(ConfigError::at("boundary", "flux", "missing flux (or field.exact)"));
        }

        let a = &self.analysis;
        let r = self.analysis_radius();
        let radii = self.radii();
        if a.radii_count < 2 {
            return Err(ConfigError::at(
                "analysis",
                "radii_count",
                "at least 2 radii are needed",
            ));
        }
        if !(radii[0] > 0.0) || radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ConfigError::at(
                "analysis",
                "radii_min",
                "need 0 < radii_min < radii_max",
            ));
        }
        if 2.0 * radii[radii.len() - 1] > r * (1.0 + 1e-12) {
            return Err(ConfigError::at(
                "analysis",
                "radii_max",
                format!("2 * radii_max must not exceed the domain radius {r}"),
            ));
        }
        for &s in &a.identity_radii {
            if !(s > 0.0) || 2.0 * s >= r {
                return Err(ConfigError::at(
                    "analysis",
                    "identity_radii",
                    format!("{s} must lie in (0, {})", r / 2.0),
                ));
            }
        }
        if a.lambdas.iter().any(|&l| !(l > 0.0) || l > r) || a.lambdas.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(ConfigError::at(
                "analysis",
                "lambdas",
                format!("must decrease strictly within (0, {r}]"),
            ));
        }
        if !(a.zero_radius > 0.0 && a.zero_radius <= r) {
            return Err(ConfigError::at(
                "analysis",
                "zero_radius",
                format!("must lie in (0, {r}]"),
            ));
        }
        if !(a.zero_resolution > 0.0 && a.zero_resolution <= 2.0 * a.zero_radius) {
            return Err(ConfigError::at(
                "analysis",
                "zero_resolution",
                "must be positive and at most the boundary width",
            ));
        }
        if let Some(p) = &a.tangent_point {
            if p.len() != d || p[d - 1] != 0.0 || p.iter().map(|c| c * c).sum::<f64>().sqrt() >= a.zero_radius {
                return Err(ConfigError::at(
                    "analysis",
                    "tangent_point",
                    "must be a flat-boundary point inside zero_radius",
                ));
            }
        }
        let [s, t] = a.rigidity_radii;
        if !(s > 0.0 && t > s && 2.0 * t < r) {
            return Err(ConfigError::at(
                "analysis",
                "rigidity_radii",
                format!("need 0 < s < t < {}", r / 2.0),
            ));
        }
        positive("analysis", "cutoff", a.cutoff)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "[domain]\nradius = 1.0\n\n[field]\nkind = \"analytic\"\nexpr = \"x\"\n\n[coefficients]\neta = \"0\"\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.domain.dim, 2);
        assert_eq!(cfg.mesh.h, 0.05);
        assert_eq!(cfg.coefficients.s, f64::INFINITY);
        assert_eq!(cfg.radii().len(), 40);
    }

    #[test]
    fn borderline_exponent_rejected() {
        let err = parse_config(&format!("{MINIMAL}s = 1.0\n")).unwrap_err();
        assert_eq!((err.section.as_str(), err.key.as_deref()), ("coefficients", Some("s")));
        assert!(err.message.contains("requires s > d−1"), "{err}");
        assert!(parse_config(&format!("{MINIMAL}s = 1.01\n")).is_ok());
    }

    #[test]
    fn expression_errors_are_located() {
        let err = parse_config(&MINIMAL.replace("eta = \"0\"", "a = [[\"x+*y\", \"0\"], [\"0\", \"1\"]]")).unwrap_err();
        assert_eq!((err.section.as_str(), err.key.as_deref()), ("coefficients", Some("a")));
        assert!(err.message.contains("offset 2"), "{err}");
    }

    #[test]
    fn syntax_errors_have_positions() {
        let err = parse_config("[domain]\nradius = 1.0\n[mesh]\nh = = 2\n").unwrap_err();
        assert_eq!(err.line, Some(4));
        assert_eq!(err.section, "mesh");
        let err = parse_config("[domain]\ndim = 2\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("radius"));
        let err = parse_config("[domain]\nradius = 1.0\nradis = 2.0\n").unwrap_err();
        assert_eq!((err.section.as_str(), err.key.as_deref()), ("domain", Some("radis")));
    }

    #[test]
    fn radii_must_fit() {
        let err = parse_config(&format!("{MINIMAL}\n[analysis]\nradii_max = 0.6\n")).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("radii_max"));
        let err = parse_config(&format!("{MINIMAL}\n[analysis]\nlambdas = [0.1, 0.2]\n")).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("lambdas"));
    }

    #[test]
    fn print_round_trip() {
        let mut cfg = parse_config(MINIMAL).unwrap();
        cfg.coefficients.a = vec![vec!["1".into(), "0.5".into()], vec!["0.5".into(), "1".into()]];
        cfg.gates.fit_ratio = Some([0.4, 0.6]);
        cfg.mesh.sweep = vec![0.1, 0.05];
        assert_eq!(parse_config(&print_config(&cfg)).unwrap(), cfg);
    }
}
