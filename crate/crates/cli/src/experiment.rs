//! Stage orchestration: solve, gauge, flatten/normalize, reflect, then the requested
//! analyses. A failing stage stops the run and leaves a partial report.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use ucplab_core::asymptotics::{
    boundary_zero_set, box_count_dimension, fit_homogeneous_unchecked, rescale_blowup_at, tangent_set,
    write_boxcount_csv, write_zeros_csv, Normalization,
};
use ucplab_core::fields::analytic::FnField;
use ucplab_core::fields::coefficients::pushforward_coefficients;
use ucplab_core::fields::expr::{parse_expr, Expr};
use ucplab_core::fields::FramedField;
use ucplab_core::frequency::{
    monotonicity_violations, radial_profile, rigidity_check, vanishing_order, verify_identities, write_profile_csv,
    OrderClass, RadialProfile,
};
use ucplab_core::geometry::{flatten_map, normalizing_map, theta_matrix, CoordinateMap};
use ucplab_core::presets::neumann_harmonic_catalog;
use ucplab_core::solver::{
    assemble_with, build_mesh, solve_system, AssemblyOptions, BoundaryConditions, BoundaryData, EdgeCondition,
    MeshDomain, MeshOptions,
};
use ucplab_core::transforms::{gauge_transform, reflect_even_extension, solve_gauge_potential, structure_defect};
use ucplab_core::{
    AnalyticField, BoundaryTag, CoefficientSet, Field, GraphDomain, LinearChange, MatrixField, ScalarField,
    SolutionField, VectorField,
};

use crate::config::{DomainKind, FieldKind, FlatCondition, NormalizationKind, RunConfig};
use crate::report::{line_plot, Bound, Report, StageRecord, StageStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pipeline {
    Solve,
    Gauge,
    Frequency,
    Blowup,
    Nodal,
    Verify,
}

impl Pipeline {
    pub const ALL: [Pipeline; 6] = [
        Pipeline::Solve,
        Pipeline::Gauge,
        Pipeline::Frequency,
        Pipeline::Blowup,
        Pipeline::Nodal,
        Pipeline::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Solve => "solve",
            Pipeline::Gauge => "gauge",
            Pipeline::Frequency => "frequency",
            Pipeline::Blowup => "blowup",
            Pipeline::Nodal => "nodal",
            Pipeline::Verify => "verify",
        }
    }

    fn analyses(self) -> bool {
        !matches!(self, Pipeline::Solve | Pipeline::Gauge)
    }
}

impl FromStr for Pipeline {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown pipeline {s:?}"))
    }
}

/// Marks an aborted run; the failed stage is already in the report.
#[derive(Debug)]
struct Abort;

type Step<T> = Result<T, Abort>;

struct Run<'a> {
    cfg: &'a RunConfig,
    report: Report,
}

impl Run<'_> {
    fn stage<T, E: std::fmt::Display>(&mut self, name: &str, r: Result<T, E>) -> Step<T> {
        match r {
            Ok(v) => {
                if !self.report.stages.iter().any(|s| s.name == name) {
                    self.report.stages.push(StageRecord {
                        name: name.into(),
                        status: StageStatus::Ok,
                        message: None,
                    });
                }
                Ok(v)
            }
            Err(e) => {
                self.report.stages.retain(|s| s.name != name);
                self.report.stages.push(StageRecord {
                    name: name.into(),
                    status: StageStatus::Failed,
                    message: Some(format!("{name}: {e}")),
                });
                Err(Abort)
            }
        }
    }

    fn metric(&mut self, stage: &str, key: &str, v: f64) {
        self.report.metric(stage, key, v);
    }

    fn gate(&mut self, name: &str, v: f64, b: Bound) {
        self.report.gate(name, v, b);
    }

    fn table(&mut self, name: &str, body: String) {
        self.report.tables.insert(name.into(), body);
    }

    fn plot(&mut self, name: &str, svg: String) {
        if self.cfg.output.plots {
            self.report.plots.insert(name.into(), svg);
        }
    }
}

/// Runs `pipeline` on the configuration; never panics on numerical failure.
pub fn run_experiment(cfg: &RunConfig, pipeline: Pipeline) -> Report {
    let mut run = Run {
        cfg,
        report: Report::new(&cfg.name, pipeline.name()),
    };
    let _ = execute(&mut run, pipeline);
    run.report
}

fn execute(run: &mut Run, pipeline: Pipeline) -> Step<()> {
    let cfg = run.cfg;
    let problem = run.stage("setup", Problem::build(cfg))?;
    if cfg.field.kind == FieldKind::Catalog {
        return catalog(run, pipeline);
    }
    let sweeping = cfg.mesh.sweep.len() >= 2;
    if sweeping && (pipeline == Pipeline::Solve || pipeline == Pipeline::Gauge || pipeline == Pipeline::Verify) {
        sweep(run, &problem, pipeline)?;
        if !pipeline.analyses() {
            return Ok(());
        }
    }
    let mut subject = match cfg.field.kind {
        FieldKind::Fem => {
            let u = solve(run, &problem, cfg.mesh.h, "solve")?;
            if pipeline == Pipeline::Solve {
                return Ok(());
            }
            let g = run.stage("gauge", gauge_transform_checked(&u, &problem.coefficients))?;
            record_gauge(run, "gauge", &g);
            gauge_gates(run, "gauge", &g);
            Subject::Mesh(g.v, g.transformed)
        }
        _ if !pipeline.analyses() => return Ok(()),
        _ => {
            let expr = cfg.field.expr.as_deref().expect("validated");
            let f = run.stage("setup", AnalyticField::parse(cfg.dim(), expr))?;
            Subject::Analytic(Arc::new(f), problem.coefficients.clone())
        }
    };
    if pipeline == Pipeline::Gauge {
        return Ok(());
    }
    if let Some(graph) = &problem.graph {
        subject = flatten(run, subject, graph)?;
    }
    subject = normalize(run, subject)?;
    if cfg.analysis.reflect {
        reflect(run, &subject)?;
    }
    let field = subject.field();
    let mut estimate = None;
    if matches!(pipeline, Pipeline::Frequency | Pipeline::Verify)
        || (pipeline == Pipeline::Blowup && cfg.analysis.degree.is_none())
    {
        let full = pipeline == Pipeline::Verify;
        let ids = full && cfg.analysis.identities.unwrap_or_else(|| problem.homogeneous(cfg));
        estimate = Some(frequency(run, field.as_ref(), full, ids)?);
    }
    if matches!(pipeline, Pipeline::Blowup | Pipeline::Verify) {
        let degree = match (cfg.analysis.degree, estimate) {
            (Some(m), _) => Some(m),
            (None, Some(Some(m))) => Some(m),
            _ => None,
        };
        match degree {
            Some(m) => blowup(run, field.as_ref(), m)?,
            // an infinite or inconclusive order leaves nothing to fit
            None => run.metric("blowup", "skipped", 1.0),
        }
    }
    if matches!(pipeline, Pipeline::Nodal | Pipeline::Verify) {
        nodal(run, field.as_ref())?;
    }
    Ok(())
}

/// Parsed coefficients and boundary data.
struct Problem {
    coefficients: CoefficientSet,
    exact: Option<AnalyticField>,
    source: Option<ScalarField>,
    flat: EdgeCondition,
    arc: Option<BoundaryData>,
    graph: Option<GraphDomain>,
}

fn parse(src: &str) -> ucplab_core::Result<Expr> {
    parse_expr(src)
}

/// `f = -L u` for `L u = D_i(a_ij D_j u + b_i u) + W_i D_i u + V u`.
fn manufactured_source(cfg: &RunConfig, u: &Expr) -> ucplab_core::Result<Expr> {
    let d = cfg.dim();
    let c = &cfg.coefficients;
    let a = |i: usize, j: usize| -> String {
        if c.a.is_empty() {
            if i == j { "1" } else { "0" }.to_string()
        } else {
            c.a[i][j].clone()
        }
    };
    let vec_entry = |v: &Vec<String>, i: usize| v.get(i).cloned().unwrap_or_else(|| "0".into());
    let du: Vec<String> = (0..d).map(|k| u.derivative(k).to_string()).collect();
    let mut lu = String::new();
    for i in 0..d {
        let mut flux = format!("({})*({u})", vec_entry(&c.b, i));
        for (j, dj) in du.iter().enumerate() {
            let _ = write!(flux, " + ({})*({dj})", a(i, j));
        }
        let _ = write!(
            lu,
            "({}) + ({})*({}) + ",
            parse(&flux)?.derivative(i),
            vec_entry(&c.w, i),
            du[i]
        );
    }
    let _ = write!(lu, "({})*({u})", c.v);
    parse(&format!("-({lu})"))
}

impl Problem {
    fn build(cfg: &RunConfig) -> ucplab_core::Result<Self> {
        let d = cfg.dim();
        let c = &cfg.coefficients;
        let mut coefficients = CoefficientSet::laplace(d);
        if !c.a.is_empty() {
            let rows: Vec<Vec<Expr>> =
                c.a.iter()
                    .map(|r| r.iter().map(|e| parse(e)).collect())
                    .collect::<Result<_, _>>()?;
            coefficients = coefficients.with_a(MatrixField::from_exprs(&rows)?);
        }
        if !c.b.is_empty() {
            coefficients = coefficients.with_b(VectorField::from_exprs(
                &c.b.iter().map(|e| parse(e)).collect::<Result<Vec<_>, _>>()?,
            ));
        }
        if !c.w.is_empty() {
            coefficients = coefficients.with_w(VectorField::from_exprs(
                &c.w.iter().map(|e| parse(e)).collect::<Result<Vec<_>, _>>()?,
            ));
        }
        coefficients = coefficients
            .with_v(ScalarField::from_expr(&parse(&c.v)?))
            .with_eta(ScalarField::from_expr(&parse(&c.eta)?))
            .with_ellipticity(c.lambda, c.big_lambda);
        coefficients.integrability = cfg.integrability();

        let exact = cfg
            .field
            .exact
            .as_deref()
            .map(|s| AnalyticField::parse(d, s))
            .transpose()?;
        let source = match c.source.as_str() {
            "auto" => Some(ScalarField::from_expr(&manufactured_source(
                cfg,
                exact.as_ref().expect("validated").expr(),
            )?)),
            s => {
                let e = parse(s)?;
                (e.constant_value() != Some(0.0)).then(|| ScalarField::from_expr(&e))
            }
        };
        let flat = match cfg.boundary.flat {
            FlatCondition::Natural => EdgeCondition::Natural,
            FlatCondition::Robin => EdgeCondition::Robin,
            FlatCondition::Neumann => EdgeCondition::Neumann(match &cfg.boundary.flux {
                Some(g) => BoundaryData::from_scalar(ScalarField::from_expr(&parse(g)?)),
                None => BoundaryData::conormal_flux_of(exact.clone().expect("validated"), &coefficients),
            }),
        };
        let arc = match (&cfg.boundary.arc, &exact) {
            (Some(s), _) => Some(BoundaryData::values_of(AnalyticField::parse(d, s)?)),
            (None, Some(u)) => Some(BoundaryData::values_of(u.clone())),
            (None, None) => None,
        };
        let graph = match (cfg.domain.kind, &cfg.domain.phi) {
            (DomainKind::Graph, Some(phi)) => Some(GraphDomain::new(d, parse(phi)?, mesh_radius(cfg))?),
            _ => None,
        };
        Ok(Problem {
            coefficients,
            exact,
            source,
            flat,
            arc,
            graph,
        })
    }
}

impl Problem {
    /// Constant `A`, no lower-order terms, no source and zero conormal data on a flat
    /// boundary: the setting in which the energy identities hold exactly.
    fn homogeneous(&self, cfg: &RunConfig) -> bool {
        let c = &self.coefficients;
        !prescribed_flux(cfg)
            && cfg.boundary.flat != FlatCondition::Robin
            && self.graph.is_none()
            && self.source.is_none()
            && c.a.constant_value().is_some()
            && c.b.is_zero()
            && c.w.is_zero()
            && c.v.is_zero()
            && c.eta.is_zero()
    }
}

/// Nonzero Neumann data on the flat side; blowups then need not be Neumann-harmonic.
fn prescribed_flux(cfg: &RunConfig) -> bool {
    cfg.boundary.flat == FlatCondition::Neumann
        && cfg
            .boundary
            .flux
            .as_deref()
            .and_then(|g| parse(g).ok())
            .and_then(|e| e.constant_value())
            != Some(0.0)
}

fn mesh_radius(cfg: &RunConfig) -> f64 {
    cfg.domain.host_radius.unwrap_or(cfg.domain.radius)
}

fn mesh_options(cfg: &RunConfig, h: f64) -> MeshOptions {
    let opts = match cfg.mesh.grading {
        Some(g) => MeshOptions::graded(h, g),
        None => MeshOptions::uniform(h),
    };
    opts.with_breakpoints(&cfg.mesh.breakpoints)
}

fn build_domain_mesh(cfg: &RunConfig, problem: &Problem, h: f64) -> ucplab_core::Result<Arc<ucplab_core::Mesh>> {
    let radius = mesh_radius(cfg);
    let domain = match &problem.graph {
        Some(g) => MeshDomain::Graph {
            domain: g.clone(),
            radius,
        },
        None => MeshDomain::HalfDisk { radius },
    };
    Ok(Arc::new(build_mesh(&domain, &mesh_options(cfg, h))?))
}

struct Solved {
    u: SolutionField,
    l2_error: Option<f64>,
}

fn solve_at(cfg: &RunConfig, problem: &Problem, h: f64) -> ucplab_core::Result<Solved> {
    let mesh = build_domain_mesh(cfg, problem, h)?;
    let mut bc = BoundaryConditions::new().with(BoundaryTag::Flat, problem.flat.clone());
    if let Some(arc) = &problem.arc {
        bc = bc.with(BoundaryTag::Arc, EdgeCondition::Dirichlet(arc.clone()));
    }
    let opts = AssemblyOptions {
        source: problem.source.clone(),
        ..Default::default()
    };
    let u = solve_system(&assemble_with(&problem.coefficients, &mesh, &bc, &opts)?)?;
    let l2_error = problem.exact.as_ref().map(|e| u.l2_error(|x| e.value(x)));
    Ok(Solved { u, l2_error })
}

fn solve(run: &mut Run, problem: &Problem, h: f64, stage: &str) -> Step<SolutionField> {
    let s = run.stage(stage, solve_at(run.cfg, problem, h))?;
    run.metric(stage, "h", h);
    run.metric(stage, "vertices", s.u.mesh.num_vertices() as f64);
    run.metric(stage, "triangles", s.u.mesh.num_triangles() as f64);
    run.metric(stage, "solver_residual", s.u.residual);
    run.gate(
        &format!("{stage}.solver_residual"),
        s.u.residual,
        Bound::AtMost {
            limit: run.cfg.gates.solver_residual,
        },
    );
    if let Some(e) = s.l2_error {
        run.metric(stage, "l2_error", e);
    }
    Ok(s.u)
}

fn gauge_transform_checked(
    u: &SolutionField,
    c: &CoefficientSet,
) -> ucplab_core::Result<ucplab_core::transforms::GaugeResult> {
    let psi = solve_gauge_potential(c, &u.mesh)?;
    gauge_transform(u, c, &psi)
}

fn record_gauge(run: &mut Run, stage: &str, g: &ucplab_core::transforms::GaugeResult) {
    run.metric(stage, "psi_mean", g.psi.mean());
    run.metric(stage, "psi_residual", g.psi.residual);
    run.metric(stage, "psi_max", g.psi.max_abs());
    run.metric(stage, "conormal_residual_u", g.u_conormal_residual);
    run.metric(stage, "conormal_residual_v", g.conormal_residual);
}

fn gauge_gates(run: &mut Run, stage: &str, g: &ucplab_core::transforms::GaugeResult) {
    let tol = run.cfg.gates.solver_residual;
    run.gate(
        &format!("{stage}.psi_mean_zero"),
        g.psi.mean().abs(),
        Bound::AtMost { limit: tol },
    );
    run.gate(
        &format!("{stage}.psi_residual"),
        g.psi.residual,
        Bound::AtMost { limit: tol },
    );
}

/// Field under analysis with the coefficients of the equation it solves.
enum Subject {
    Mesh(SolutionField, CoefficientSet),
    Analytic(Arc<dyn Field>, CoefficientSet),
}

impl Subject {
    fn field(&self) -> Arc<dyn Field> {
        match self {
            Subject::Mesh(u, _) => Arc::new(u.clone()),
            Subject::Analytic(f, _) => Arc::clone(f),
        }
    }

    fn coefficients(&self) -> &CoefficientSet {
        match self {
            Subject::Mesh(_, c) | Subject::Analytic(_, c) => c,
        }
    }
}

fn flatten(run: &mut Run, subject: Subject, graph: &GraphDomain) -> Step<Subject> {
    let c = subject.coefficients().clone();
    let map = run.stage("flatten", flatten_map(graph, Some(&c.a)))?;
    let pushed = run.stage("flatten", pushforward_coefficients(&c, &map))?;
    let out = match subject {
        Subject::Mesh(u, _) => {
            let m = map.clone();
            let mesh = run.stage(
                "flatten",
                u.mesh.map_vertices(|p| match m.forward(&p) {
                    Ok(y) => [y[0], if y[1].abs() < 1e-12 { 0.0 } else { y[1] }],
                    Err(_) => [f64::NAN; 2],
                }),
            )?;
            let (off, eta) = structure_defect(&mesh, &pushed);
            run.metric("flatten", "offdiag_defect", off);
            run.metric("flatten", "eta_defect", eta);
            let v = run.stage("flatten", SolutionField::new(Arc::new(mesh), u.values))?;
            Subject::Mesh(v, pushed)
        }
        Subject::Analytic(f, _) => {
            let d = f.dim();
            let m = map.clone();
            let g = FnField::new(d, move |y| m.inverse(y).map_or(f64::NAN, |x| f.value(&x)));
            Subject::Analytic(Arc::new(g), pushed)
        }
    };
    Ok(out)
}

/// Random SPD matrix `Q diag(e) Q^T`, eigenvalues in [0.5, 2].
fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    let e = DVector::from_fn(d, |_, _| rng.random_range(0.5..2.0));
    &q * DMatrix::from_diagonal(&e) * q.transpose()
}

/// `(|Psi A0 Psi^T - I|, max |(Theta A0 Theta^T)_id|, max |Psi_dj|, Psi_dd)`.
fn map_checks(a0: &DMatrix<f64>) -> ucplab_core::Result<(LinearChange, [f64; 4])> {
    let d = a0.nrows();
    let t = theta_matrix(a0)?;
    let s = &t * a0 * t.transpose();
    let theta_gap = (0..d - 1).map(|i| s[(i, d - 1)].abs()).fold(0.0, f64::max);
    let psi = normalizing_map(a0)?;
    let id_gap = (&psi.matrix * a0 * psi.matrix.transpose() - DMatrix::identity(d, d))
        .abs()
        .max();
    let row = (0..d - 1).map(|j| psi.matrix[(d - 1, j)].abs()).fold(0.0, f64::max);
    let factor = psi.matrix[(d - 1, d - 1)];
    Ok((psi, [id_gap, theta_gap, row, factor]))
}

fn normalize(run: &mut Run, subject: Subject) -> Step<Subject> {
    let d = run.cfg.dim();
    let origin = vec![0.0; d];
    let a0 = subject.coefficients().a.matrix_at(&origin);
    let (psi, checks) = run.stage("normalize", map_checks(&a0))?;
    let gates = run.cfg.gates.clone();
    let record = |run: &mut Run, label: &str, [id_gap, theta_gap, row, factor]: [f64; 4]| {
        run.metric("normalize", &format!("{label}identity_gap"), id_gap);
        run.metric("normalize", &format!("{label}theta_gap"), theta_gap);
        run.metric("normalize", &format!("{label}last_row_offdiag"), row);
        run.metric("normalize", &format!("{label}last_row_factor"), factor);
        run.gate(
            &format!("normalize.{label}identity"),
            id_gap,
            Bound::AtMost {
                limit: gates.map_identity,
            },
        );
        run.gate(
            &format!("normalize.{label}theta"),
            theta_gap,
            Bound::AtMost { limit: 1e-12 },
        );
        run.gate(
            &format!("normalize.{label}half_space"),
            row,
            Bound::Equals { target: 0.0 },
        );
        run.gate(
            &format!("normalize.{label}orientation"),
            factor,
            Bound::Above { limit: 0.0 },
        );
    };
    record(run, "", checks);
    if run.cfg.analysis.spd_samples > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(run.cfg.field.seed);
        let mut worst = [0.0, 0.0, 0.0, f64::INFINITY];
        for _ in 0..run.cfg.analysis.spd_samples {
            let (_, c) = run.stage("normalize", map_checks(&random_spd(&mut rng, d)))?;
            for k in 0..3 {
                worst[k] = f64::max(worst[k], c[k]);
            }
            worst[3] = worst[3].min(c[3]);
        }
        run.metric("normalize", "samples", run.cfg.analysis.spd_samples as f64);
        record(run, "random_", worst);
    }
    if psi.matrix == DMatrix::identity(d, d) {
        return Ok(subject);
    }
    Ok(match subject {
        Subject::Mesh(u, c) => {
            let pushed = run.stage("normalize", pushforward_coefficients(&c, &psi))?;
            let m = psi.clone();
            let mesh = run.stage(
                "normalize",
                u.mesh.map_vertices(|p| {
                    let y = m.apply(&p);
                    [y[0], y[1]]
                }),
            )?;
            let v = run.stage("normalize", SolutionField::new(Arc::new(mesh), u.values))?;
            Subject::Mesh(v, pushed)
        }
        Subject::Analytic(f, c) => {
            let pushed = run.stage("normalize", pushforward_coefficients(&c, &psi))?;
            Subject::Analytic(Arc::new(FramedField::new(f, psi)), pushed)
        }
    })
}

/// Interior residual of the even extension.
fn reflection_residual(cfg: &RunConfig, subject: &Subject, h: f64) -> ucplab_core::Result<(f64, f64)> {
    let (v, c) = match subject {
        Subject::Mesh(u, c) => (u.clone(), c.clone()),
        Subject::Analytic(f, c) => {
            let mesh = Arc::new(build_mesh(
                &MeshDomain::HalfDisk {
                    radius: cfg.domain.radius,
                },
                &mesh_options(cfg, h),
            )?);
            (SolutionField::interpolate(mesh, |x| f.value(x)), c.clone())
        }
    };
    let r = reflect_even_extension(&v, &c)?;
    Ok((r.interior_residual()?, r.symmetry_gap()))
}

fn reflect(run: &mut Run, subject: &Subject) -> Step<()> {
    let (res, gap) = run.stage("reflect", reflection_residual(run.cfg, subject, run.cfg.mesh.h))?;
    run.metric("reflect", "interior_residual", res);
    run.metric("reflect", "symmetry_gap", gap);
    run.gate("reflect.symmetry", gap, Bound::Equals { target: 0.0 });
    Ok(())
}

fn profile_plots(run: &mut Run, prefix: &str, p: &RadialProfile) {
    let f: Vec<(f64, f64)> = p.radii.iter().copied().zip(p.f.iter().copied()).collect();
    let n: Vec<(f64, f64)> = p.radii.iter().copied().zip(p.dyadic_log.iter().copied()).collect();
    run.plot(
        &format!("{prefix}frequency.svg"),
        line_plot("frequency F(r)", "r", "F", &f, (true, false)),
    );
    run.plot(
        &format!("{prefix}doubling.svg"),
        line_plot("dyadic doubling index", "r", "log2 sqrt N", &n, (true, false)),
    );
}

fn csv<F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>>(f: F) -> String {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("utf-8")
}

/// Profile, vanishing order, monotonicity and (for `verify`) identities and rigidity.
/// Returns the rounded order when finite.
fn frequency(run: &mut Run, field: &dyn Field, full: bool, ids: bool) -> Step<Option<u32>> {
    let cfg = run.cfg;
    let p = run.stage("frequency", radial_profile(field, &cfg.radii(), None))?;
    run.table("profile.csv", csv(|w| write_profile_csv(&p, w)));
    profile_plots(run, "", &p);
    let (vf, vn) = monotonicity_violations(&p, cfg.gates.monotone_slack);
    run.metric("frequency", "f_violations", vf as f64);
    run.metric("frequency", "n_violations", vn as f64);
    if cfg.gates.monotone {
        run.gate("frequency.monotone_f", vf as f64, Bound::Equals { target: 0.0 });
        run.gate("frequency.monotone_n", vn as f64, Bound::Equals { target: 0.0 });
    }
    let est = run.stage("frequency", vanishing_order(&p, cfg.analysis.cutoff))?;
    run.metric("frequency", "m_hat", est.m_hat);
    run.metric("frequency", "m_rounded", est.m_rounded as f64);
    run.metric("frequency", "deviation", est.deviation);
    let infinite = est.classification == OrderClass::InfiniteOrderSuspicion;
    run.metric(
        "frequency",
        "infinite_order_suspicion",
        if infinite { 1.0 } else { 0.0 },
    );
    if let Some((a, b)) = est.inconclusive {
        run.metric("frequency", "inconclusive_lo", a as f64);
        run.metric("frequency", "inconclusive_hi", b as f64);
    }
    if let Some(m) = cfg.gates.expected_order {
        run.gate(
            "frequency.order",
            est.m_rounded as f64,
            Bound::Equals { target: m as f64 },
        );
        run.gate(
            "frequency.deviation",
            est.deviation,
            Bound::Below {
                limit: cfg.gates.order_deviation,
            },
        );
    }
    if ids || (!full && !cfg.analysis.identity_radii.is_empty()) {
        identities(run, "identities", "identities.csv", field, &identity_radii(cfg))?;
    }
    if full && field.dim() == 2 {
        let [s, t] = cfg.analysis.rigidity_radii;
        let rig = run.stage("rigidity", rigidity_check(field, s, t, cfg.gates.rigidity_f))?;
        run.metric("rigidity", "f_s", rig.f_s);
        run.metric("rigidity", "f_t", rig.f_t);
        run.metric("rigidity", "homogeneous", if rig.homogeneous { 1.0 } else { 0.0 });
        run.metric("rigidity", "dominant_mode", rig.dominant_mode as f64);
        run.metric("rigidity", "mode_purity", rig.mode_purity);
    }
    Ok((!infinite && est.inconclusive.is_none()).then_some(est.m_rounded))
}

fn identity_radii(cfg: &RunConfig) -> Vec<f64> {
    if cfg.analysis.identity_radii.is_empty() {
        [0.2, 0.4, 0.6].iter().map(|s| s * cfg.domain.radius / 1.5).collect()
    } else {
        cfg.analysis.identity_radii.clone()
    }
}

fn identities(run: &mut Run, stage: &str, file: &str, field: &dyn Field, radii: &[f64]) -> Step<()> {
    let reports = run.stage(
        stage,
        radii
            .iter()
            .map(|&r| verify_identities(field, r))
            .collect::<Result<Vec<_>, _>>(),
    )?;
    let mut t = String::from("r,gap_derivative,gap_log_derivative,doubling,doubling_from_frequency,gap_doubling\n");
    for r in &reports {
        let _ = writeln!(
            t,
            "{:e},{:e},{:e},{:e},{:e},{:e}",
            r.r, r.gap_derivative, r.gap_log_derivative, r.doubling, r.doubling_from_frequency, r.gap_doubling
        );
    }
    run.table(file, t);
    let worst = |f: fn(&ucplab_core::frequency::IdentityReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    let (gd, gl, gr) = (
        worst(|r| r.gap_derivative),
        worst(|r| r.gap_log_derivative),
        worst(|r| r.gap_doubling),
    );
    run.metric(stage, "max_gap_derivative", gd);
    run.metric(stage, "max_gap_log_derivative", gl);
    run.metric(stage, "max_gap_reconstruction", gr);
    let tol = run.cfg.gates.identity_gap;
    run.gate(&format!("{stage}.derivative"), gd, Bound::Below { limit: tol });
    run.gate(&format!("{stage}.log_derivative"), gl, Bound::Below { limit: tol });
    run.gate(
        &format!("{stage}.reconstruction"),
        gr,
        Bound::Below {
            limit: run.cfg.gates.reconstruction,
        },
    );
    Ok(())
}

fn normalization(cfg: &RunConfig) -> Normalization {
    match cfg.analysis.normalization {
        NormalizationKind::Mapped => Normalization::Mapped,
        NormalizationKind::Plain => Normalization::Plain,
    }
}

fn blowup(run: &mut Run, field: &dyn Field, m: u32) -> Step<()> {
    let cfg = run.cfg;
    let d = field.dim();
    let eye = DMatrix::identity(d, d);
    let origin = vec![0.0; d];
    let seq = run.stage(
        "blowup",
        rescale_blowup_at(field, &origin, &cfg.analysis.lambdas, &eye, normalization(cfg)),
    )?;
    for k in 0..seq.len() {
        run.table(
            &format!("snapshots/{}", seq.snapshot_name(k)),
            csv(|w| seq.write_snapshot_csv(k, w)),
        );
    }
    let fit = run.stage("blowup", fit_homogeneous_unchecked(&seq, m))?;
    let mut t = String::from("lambda,normalizer,mean_square,residual\n");
    for k in 0..seq.len() {
        let _ = writeln!(
            t,
            "{:e},{:e},{:e},{:e}",
            seq.lambdas[k], seq.normalizers[k], seq.mean_squares[k], fit.residuals[k]
        );
    }
    run.table("fit.csv", t);
    run.metric("blowup", "degree", m as f64);
    run.metric("blowup", "residual", fit.residual);
    run.metric("blowup", "converged", if fit.converged { 1.0 } else { 0.0 });
    let ms_gap = seq.mean_squares.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    run.metric("blowup", "mean_square_gap", ms_gap);
    run.gate("blowup.normalized", ms_gap, Bound::Below { limit: 1e-6 });
    if !prescribed_flux(cfg) {
        run.gate("blowup.consistent", fit.residual, Bound::AtMost { limit: 0.5 });
    }
    let worst = fit.residuals.iter().copied().fold(0.0, f64::max);
    run.metric("blowup", "max_residual", worst);
    if let Some(tol) = cfg.gates.fit_residual {
        run.gate("blowup.residual", worst, Bound::Below { limit: tol });
    }
    if fit.residuals.len() >= 2 {
        let k = fit.residuals.len();
        let ratio = fit.residuals[k - 1] / fit.residuals[k - 2];
        run.metric("blowup", "residual_ratio", ratio);
        if let Some([lo, hi]) = cfg.gates.fit_ratio {
            run.gate("blowup.residual_ratio", ratio, Bound::Within { lo, hi });
        }
    }
    let pts: Vec<(f64, f64)> = fit.lambdas.iter().copied().zip(fit.residuals.iter().copied()).collect();
    run.plot(
        "blowup.svg",
        line_plot("homogeneous fit residual", "lambda", "residual", &pts, (true, true)),
    );
    Ok(())
}

fn nodal(run: &mut Run, field: &dyn Field) -> Step<()> {
    let cfg = run.cfg;
    let d = field.dim();
    let zs = run.stage(
        "nodal",
        boundary_zero_set(field, cfg.analysis.zero_radius, cfg.analysis.zero_resolution),
    )?;
    run.table("zeros.csv", csv(|w| write_zeros_csv(&zs, w)));
    run.table("boxcount.csv", csv(|w| write_boxcount_csv(&zs, w)));
    run.metric("nodal", "roots", zs.roots.len() as f64);
    run.metric("nodal", "plateaus", zs.plateaus.len() as f64);
    run.metric("nodal", "cells", zs.cells.len() as f64);
    run.metric("nodal", "sup", zs.sup);
    let dim = run.stage("nodal", box_count_dimension(&zs))?;
    run.metric("nodal", "dimension", dim);
    if d == 2 && cfg.gates.finite_zeros {
        run.gate("nodal.finite", zs.plateaus.len() as f64, Bound::Equals { target: 0.0 });
    }
    if d == 3 && !zs.is_empty() {
        run.gate(
            "nodal.codimension",
            dim,
            Bound::AtMost {
                limit: (d - 2) as f64 + cfg.gates.dimension_tol,
            },
        );
    }
    if let Some(e) = cfg.gates.expected_dimension {
        run.gate(
            "nodal.dimension",
            dim,
            Bound::Within {
                lo: e - cfg.gates.dimension_tol,
                hi: e + cfg.gates.dimension_tol,
            },
        );
    }
    let pts: Vec<(f64, f64)> = zs.box_counts.iter().map(|&(s, c)| (1.0 / s, c as f64)).collect();
    run.plot(
        "boxcount.svg",
        line_plot("box counts", "1/size", "count", &pts, (true, true)),
    );
    if let Some(y) = &cfg.analysis.tangent_point {
        let eye = DMatrix::identity(d, d);
        let t = run.stage("tangent", tangent_set(&zs, y, &cfg.analysis.lambdas, field, &eye))?;
        run.metric("tangent", "dilation_gap_half", t.dilation_gaps[0]);
        run.metric("tangent", "dilation_gap_double", t.dilation_gaps[1]);
        run.metric("tangent", "homogeneous", if t.homogeneous { 1.0 } else { 0.0 });
        run.metric("tangent", "roots", t.zero_set.roots.len() as f64);
        run.metric("tangent", "cells", t.zero_set.cells.len() as f64);
        run.table("tangent_zeros.csv", csv(|w| write_zeros_csv(&t.zero_set, w)));
        run.gate(
            "tangent.homogeneous",
            if t.homogeneous { 1.0 } else { 0.0 },
            Bound::Equals { target: 1.0 },
        );
    }
    Ok(())
}

/// One refinement level of a sweep; `NaN` marks quantities that were not computed.
#[derive(Debug, Clone, Copy)]
struct Level {
    h: f64,
    vertices: f64,
    solver_residual: f64,
    l2_error: f64,
    conormal_u: f64,
    conormal_v: f64,
    psi_mean: f64,
    psi_residual: f64,
    reflection: f64,
}

fn sweep_level(cfg: &RunConfig, problem: &Problem, pipeline: Pipeline, h: f64) -> ucplab_core::Result<Level> {
    let mut lv = Level {
        h,
        vertices: f64::NAN,
        solver_residual: f64::NAN,
        l2_error: f64::NAN,
        conormal_u: f64::NAN,
        conormal_v: f64::NAN,
        psi_mean: f64::NAN,
        psi_residual: f64::NAN,
        reflection: f64::NAN,
    };
    if cfg.field.kind != FieldKind::Fem {
        if cfg.analysis.reflect {
            let f: Arc<dyn Field> = Arc::new(AnalyticField::parse(
                cfg.dim(),
                cfg.field.expr.as_deref().expect("validated"),
            )?);
            lv.reflection = reflection_residual(cfg, &Subject::Analytic(f, problem.coefficients.clone()), h)?.0;
        }
        return Ok(lv);
    }
    let s = solve_at(cfg, problem, h)?;
    lv.vertices = s.u.mesh.num_vertices() as f64;
    lv.solver_residual = s.u.residual;
    lv.l2_error = s.l2_error.unwrap_or(f64::NAN);
    if pipeline != Pipeline::Solve {
        let g = gauge_transform_checked(&s.u, &problem.coefficients)?;
        lv.conormal_u = g.u_conormal_residual;
        lv.conormal_v = g.conormal_residual;
        lv.psi_mean = g.psi.mean();
        lv.psi_residual = g.psi.residual;
        if cfg.analysis.reflect && problem.graph.is_none() {
            lv.reflection = reflection_residual(cfg, &Subject::Mesh(g.v, g.transformed), h)?.0;
        }
    }
    Ok(lv)
}

fn sweep(run: &mut Run, problem: &Problem, pipeline: Pipeline) -> Step<()> {
    let cfg = run.cfg;
    let levels: Vec<_> = cfg
        .mesh
        .sweep
        .par_iter()
        .map(|&h| sweep_level(cfg, problem, pipeline, h))
        .collect();
    let levels = run.stage("sweep", levels.into_iter().collect::<Result<Vec<_>, _>>())?;
    let mut t = String::from(
        "h,vertices,solver_residual,l2_error,conormal_u,conormal_v,psi_mean,psi_residual,reflection_residual\n",
    );
    for l in &levels {
        let _ = writeln!(
            t,
            "{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            l.h,
            l.vertices,
            l.solver_residual,
            l.l2_error,
            l.conormal_u,
            l.conormal_v,
            l.psi_mean,
            l.psi_residual,
            l.reflection
        );
    }
    run.table("convergence.csv", t);
    let gates = cfg.gates.clone();
    for (k, l) in levels.iter().enumerate() {
        if !l.solver_residual.is_nan() {
            run.gate(
                &format!("sweep.solver_residual.{k}"),
                l.solver_residual,
                Bound::AtMost {
                    limit: gates.solver_residual,
                },
            );
        }
        if !l.psi_residual.is_nan() {
            run.gate(
                &format!("sweep.psi_mean_zero.{k}"),
                l.psi_mean.abs(),
                Bound::AtMost {
                    limit: gates.solver_residual,
                },
            );
            run.gate(
                &format!("sweep.psi_residual.{k}"),
                l.psi_residual,
                Bound::AtMost {
                    limit: gates.solver_residual,
                },
            );
        }
        if !l.conormal_u.is_nan() && !problem.coefficients.eta.is_zero() {
            run.gate(
                &format!("sweep.conormal_u.{k}"),
                l.conormal_u,
                Bound::Above { limit: gates.u_floor },
            );
        }
    }
    let rates = |get: fn(&Level) -> f64| -> Vec<f64> {
        levels
            .windows(2)
            .map(|w| get(&w[0]) / get(&w[1]))
            .filter(|r| !r.is_nan())
            .collect()
    };
    for (k, r) in rates(|l| l.l2_error).iter().enumerate() {
        let order = r.log2() / (levels[k].h / levels[k + 1].h).log2();
        run.metric("sweep", &format!("l2_order.{k}"), order);
        run.gate(
            &format!("sweep.l2_order.{k}"),
            order,
            Bound::AtLeast { limit: gates.min_order },
        );
    }
    if !problem.coefficients.eta.is_zero() {
        for (k, r) in rates(|l| l.conormal_v).iter().enumerate() {
            run.metric("sweep", &format!("conormal_ratio.{k}"), *r);
            run.gate(
                &format!("sweep.conormal_ratio.{k}"),
                *r,
                Bound::AtLeast { limit: gates.min_ratio },
            );
        }
    }
    for (k, r) in rates(|l| l.reflection).iter().enumerate() {
        run.metric("sweep", &format!("reflection_ratio.{k}"), *r);
        run.gate(
            &format!("sweep.reflection_ratio.{k}"),
            *r,
            Bound::AtLeast { limit: gates.min_ratio },
        );
    }
    Ok(())
}

/// Per-entry results of the harmonic catalog.
struct EntryResult {
    name: String,
    degree: Option<u32>,
    profile: RadialProfile,
    identities: Vec<ucplab_core::frequency::IdentityReport>,
    rigidity: Option<ucplab_core::frequency::RigidityReport>,
}

fn catalog(run: &mut Run, pipeline: Pipeline) -> Step<()> {
    let cfg = run.cfg;
    if !matches!(pipeline, Pipeline::Frequency | Pipeline::Verify) {
        return run.stage(
            "catalog",
            Err(format!(
                "the harmonic catalog supports frequency and verify, not {}",
                pipeline.name()
            )),
        );
    }
    let entries = neumann_harmonic_catalog(cfg.field.max_degree, cfg.field.mixtures, cfg.field.seed);
    let radii = cfg.radii();
    let id_radii = if pipeline == Pipeline::Verify {
        identity_radii(cfg)
    } else {
        cfg.analysis.identity_radii.clone()
    };
    let results: Vec<ucplab_core::Result<EntryResult>> = entries
        .par_iter()
        .map(|e| {
            let f = e.field()?;
            let profile = radial_profile(&f, &radii, None)?;
            let identities = id_radii
                .iter()
                .map(|&r| verify_identities(&f, r))
                .collect::<Result<Vec<_>, _>>()?;
            let [s, t] = cfg.analysis.rigidity_radii;
            let rigidity = match e.degree {
                Some(_) if pipeline == Pipeline::Verify => Some(rigidity_check(&f, s, t, cfg.gates.rigidity_f)?),
                _ => None,
            };
            Ok(EntryResult {
                name: e.name.clone(),
                degree: e.degree,
                profile,
                identities,
                rigidity,
            })
        })
        .collect();
    let results = run.stage("catalog", results.into_iter().collect::<Result<Vec<_>, _>>())?;
    let gates = cfg.gates.clone();
    let mut summary =
        String::from("name,degree,max_f_gap,max_n_gap,f_violations,n_violations,max_gap_derivative,max_gap_log_derivative,max_gap_reconstruction\n");
    let mut ids =
        String::from("name,r,gap_derivative,gap_log_derivative,doubling,doubling_from_frequency,gap_doubling\n");
    for r in &results {
        let p = &r.profile;
        run.table(&format!("profiles/{}.csv", r.name), csv(|w| write_profile_csv(p, w)));
        let (vf, vn) = monotonicity_violations(p, gates.monotone_slack);
        let stage = format!("catalog.{}", r.name);
        run.metric(&stage, "f_violations", vf as f64);
        run.metric(&stage, "n_violations", vn as f64);
        run.gate(&format!("{stage}.monotone_f"), vf as f64, Bound::Equals { target: 0.0 });
        run.gate(&format!("{stage}.monotone_n"), vn as f64, Bound::Equals { target: 0.0 });
        let (mut fgap, mut ngap) = (f64::NAN, f64::NAN);
        if let Some(m) = r.degree {
            fgap = p.f.iter().map(|f| (f - 2.0 * m as f64).abs()).fold(0.0, f64::max);
            ngap = p.n.iter().map(|n| (n - 4f64.powi(m as i32)).abs()).fold(0.0, f64::max);
            run.metric(&stage, "max_f_gap", fgap);
            run.metric(&stage, "max_n_gap", ngap);
            run.gate(
                &format!("{stage}.rigidity_f"),
                fgap,
                Bound::Below {
                    limit: gates.rigidity_f,
                },
            );
            run.gate(
                &format!("{stage}.rigidity_n"),
                ngap,
                Bound::Below {
                    limit: gates.rigidity_n,
                },
            );
        }
        if let Some(rig) = &r.rigidity {
            run.metric(&stage, "homogeneous", if rig.homogeneous { 1.0 } else { 0.0 });
            run.metric(&stage, "dominant_mode", rig.dominant_mode as f64);
            run.gate(
                &format!("{stage}.homogeneous"),
                if rig.homogeneous { 1.0 } else { 0.0 },
                Bound::Equals { target: 1.0 },
            );
            run.gate(
                &format!("{stage}.mode"),
                rig.dominant_mode as f64,
                Bound::Equals {
                    target: r.degree.unwrap_or(0) as f64,
                },
            );
        }
        let worst =
            |f: fn(&ucplab_core::frequency::IdentityReport) -> f64| r.identities.iter().map(f).fold(0.0, f64::max);
        let (gd, gl, gr) = (
            worst(|x| x.gap_derivative),
            worst(|x| x.gap_log_derivative),
            worst(|x| x.gap_doubling),
        );
        if !r.identities.is_empty() {
            run.metric(&stage, "max_gap_derivative", gd);
            run.metric(&stage, "max_gap_log_derivative", gl);
            run.metric(&stage, "max_gap_reconstruction", gr);
            run.gate(
                &format!("{stage}.derivative"),
                gd,
                Bound::Below {
                    limit: gates.identity_gap,
                },
            );
            run.gate(
                &format!("{stage}.log_derivative"),
                gl,
                Bound::Below {
                    limit: gates.identity_gap,
                },
            );
            run.gate(
                &format!("{stage}.reconstruction"),
                gr,
                Bound::Below {
                    limit: gates.reconstruction,
                },
            );
        }
        for x in &r.identities {
            let _ = writeln!(
                ids,
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.name,
                x.r,
                x.gap_derivative,
                x.gap_log_derivative,
                x.doubling,
                x.doubling_from_frequency,
                x.gap_doubling
            );
        }
        let deg = r.degree.map_or_else(String::new, |m| m.to_string());
        let _ = writeln!(
            summary,
            "{},{deg},{fgap:e},{ngap:e},{vf},{vn},{gd:e},{gl:e},{gr:e}",
            r.name
        );
        profile_plots(run, &format!("plots/{}_", r.name), p);
    }
    run.table("catalog.csv", summary);
    if !id_radii.is_empty() {
        run.table("identities.csv", ids);
    }
    Ok(())
}
