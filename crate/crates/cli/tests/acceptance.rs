//! The eleven acceptance criteria, each checked at its stated tolerance against the
//! shipped presets. One PASS/FAIL line per criterion goes straight to stderr, so it shows
//! without `--nocapture`.

use std::collections::BTreeMap;
use std::io::Write;

use ucplab_cli::presets::load_preset;
use ucplab_cli::{emit_report, run_experiment, Pipeline, Report};

struct Runs(BTreeMap<(String, Pipeline), Report>);

impl Runs {
    fn get(&mut self, preset: &str, pipeline: Pipeline) -> &Report {
        self.0.entry((preset.to_string(), pipeline)).or_insert_with(|| {
            let cfg = load_preset(preset).expect("preset loads");
            run_experiment(&cfg, pipeline)
        })
    }
}

/// Rows of a CSV table as `column -> value`; non-numeric cells are skipped.
fn rows(report: &Report, table: &str) -> Result<Vec<BTreeMap<String, f64>>, String> {
    let body = report
        .tables
        .get(table)
        .ok_or_else(|| format!("{}: no {table}", report.name))?;
    let mut lines = body.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    Ok(lines
        .map(|l| {
            header
                .iter()
                .zip(l.split(','))
                .filter_map(|(h, v)| Some((h.to_string(), v.parse().ok()?)))
                .collect()
        })
        .collect())
}

fn column(report: &Report, table: &str, name: &str) -> Result<Vec<f64>, String> {
    rows(report, table)?
        .iter()
        .map(|r| r.get(name).copied().ok_or_else(|| format!("{table}: missing {name}")))
        .collect()
}

fn metric(report: &Report, stage: &str, key: &str) -> Result<f64, String> {
    report
        .get(stage, key)
        .ok_or_else(|| format!("{}: no metric {stage}.{key}", report.name))
}

fn ok_run(report: &Report) -> Result<(), String> {
    match report.failed_stage() {
        Some(s) => Err(format!(
            "{}: stage {} failed: {}",
            report.name,
            s.name,
            s.message.as_deref().unwrap_or("")
        )),
        None => Ok(()),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs(it: impl Iterator<Item = f64>) -> f64 {
    it.map(f64::abs).fold(0.0, f64::max)
}

/// Successive ratios `e[k] / e[k + 1]`.
fn ratios(e: &[f64]) -> Vec<f64> {
    e.windows(2).map(|w| w[0] / w[1]).collect()
}

const CATALOG: &str = "harmonic-catalog";

fn rigidity(runs: &mut Runs) -> Result<String, String> {
    let r = runs.get(CATALOG, Pipeline::Verify);
    ok_run(r)?;
    let (mut wf, mut wn) = (0.0f64, 0.0f64);
    for m in 0..=4u32 {
        let t = format!("profiles/mode{m}.csv");
        let f = column(r, &t, "F")?;
        let n = column(r, &t, "N")?;
        ensure(f.len() == 40, || format!("mode{m}: {} radii", f.len()))?;
        let gf = max_abs(f.iter().map(|v| v - 2.0 * m as f64));
        let gn = max_abs(n.iter().map(|v| v - 4f64.powi(m as i32)));
        ensure(gf < 1e-6 && gn < 1e-5, || {
            format!("mode{m}: |F - 2m| = {gf:e}, |N - 4^m| = {gn:e}")
        })?;
        wf = wf.max(gf);
        wn = wn.max(gn);
    }
    Ok(format!(
        "max |F - 2m| = {wf:.1e}, max |N - 4^m| = {wn:.1e} over 40 radii, m = 0..4"
    ))
}

fn monotonicity(runs: &mut Runs) -> Result<String, String> {
    let r = runs.get(CATALOG, Pipeline::Verify);
    ok_run(r)?;
    let cat = rows(r, "catalog.csv")?;
    ensure(cat.len() == 10, || format!("{} catalog entries", cat.len()))?;
    let violations: f64 = cat.iter().map(|e| e["f_violations"] + e["n_violations"]).sum();
    ensure(violations == 0.0, || format!("{violations} violations"))?;
    // independent pass over the written profiles
    let slack = 1e-6;
    for name in r.tables.keys().filter(|k| k.starts_with("profiles/")) {
        for col in ["F", "N"] {
            let v = column(r, name, col)?;
            let bad = v
                .windows(2)
                .filter(|w| w[1] < w[0] - slack * w[0].abs().max(1.0))
                .count();
            ensure(bad == 0, || format!("{name}: {col} decreases {bad} times"))?;
        }
    }
    Ok("5 modes and 5 mixtures, no violations beyond 1e-6".into())
}

fn identities(runs: &mut Runs) -> Result<String, String> {
    let r = runs.get(CATALOG, Pipeline::Verify);
    ok_run(r)?;
    let ids = rows(r, "identities.csv")?;
    ensure(ids.len() == 30, || format!("{} identity rows", ids.len()))?;
    let mut radii: Vec<f64> = ids.iter().map(|e| e["r"]).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    ensure(
        radii.iter().zip([0.2, 0.4, 0.6]).all(|(a, b)| (a - b).abs() < 1e-12) && radii.len() == 3,
        || format!("radii {radii:?}"),
    )?;
    let worst = |k: &str| max_abs(ids.iter().map(|e| e[k]));
    let (d, l) = (worst("gap_derivative"), worst("gap_log_derivative"));
    let rec = max_abs(
        ids.iter()
            .map(|e| (e["doubling_from_frequency"] - e["doubling"]) / e["doubling"]),
    );
    ensure(
        d < 1e-5 && l < 1e-5 && rec < 1e-5 && worst("gap_doubling") < 1e-5,
        || format!("gaps {d:e}, {l:e}, reconstruction {rec:e}"),
    )?;
    Ok(format!(
        "derivative {d:.1e}, log-derivative {l:.1e}, reconstruction {rec:.1e}"
    ))
}

fn vanishing_order(runs: &mut Runs) -> Result<String, String> {
    let mut out = Vec::new();
    for m in 1..=3u32 {
        let r = runs.get(&format!("neumann-order-{m}"), Pipeline::Frequency);
        ok_run(r)?;
        let h = metric(r, "solve", "h")?;
        let mr = metric(r, "frequency", "m_rounded")?;
        let dev = metric(r, "frequency", "deviation")?;
        ensure(h == 0.02 && mr == m as f64 && dev < 0.05, || {
            format!("m = {m}: h = {h}, m_rounded = {mr}, deviation = {dev:e}")
        })?;
        out.push(format!("m{m}: {:.4}", metric(r, "frequency", "m_hat")?));
    }
    Ok(format!("h = 0.02, m_hat {}", out.join(", ")))
}

fn gauge(runs: &mut Runs) -> Result<String, String> {
    let r = runs.get("robin-manufactured", Pipeline::Gauge);
    ok_run(r)?;
    let h = column(r, "convergence.csv", "h")?;
    ensure(h == [0.1, 0.05, 0.025], || format!("mesh sizes {h:?}"))?;
    let cu = column(r, "convergence.csv", "conormal_u")?;
    let q = ratios(&column(r, "convergence.csv", "conormal_v")?);
    ensure(q.iter().all(|&q| q >= 1.7), || format!("conormal ratios {q:?}"))?;
    ensure(cu.iter().all(|&c| c > 0.5), || format!("conormal_residual(u) {cu:?}"))?;
    Ok(format!(
        "v ratios {:.2}, {:.2}; min u residual {:.3}",
        q[0],
        q[1],
        cu.iter().copied().fold(f64::INFINITY, f64::min)
    ))
}

fn reflection(runs: &mut Runs) -> Result<String, String> {
    let r = runs.get("reflection", Pipeline::Verify);
    ok_run(r)?;
    let q = ratios(&column(r, "convergence.csv", "reflection_residual")?);
    ensure(q.len() == 2 && q.iter().all(|&q| q >= 1.7), || format!("ratios {q:?}"))?;
    Ok(format!("interior residual ratios {:.2}, {:.2}", q[0], q[1]))
}

fn normalizing_map(runs: &mut Runs) -> Result<String, String> {
    let r = runs.get("normalizing-map", Pipeline::Frequency);
    ok_run(r)?;
    ensure(metric(r, "normalize", "samples")? == 20.0, || "sample count".into())?;
    let mut worst = (0.0f64, 0.0f64);
    for p in ["", "random_"] {
        let id = metric(r, "normalize", &format!("{p}identity_gap"))?;
        let th = metric(r, "normalize", &format!("{p}theta_gap"))?;
        let row = metric(r, "normalize", &format!("{p}last_row_offdiag"))?;
        let f = metric(r, "normalize", &format!("{p}last_row_factor"))?;
        ensure(id <= 1e-10 && th <= 1e-12 && row == 0.0 && f > 0.0, || {
            format!("{p}: identity {id:e}, theta {th:e}, last row {row:e}, factor {f}")
        })?;
        worst = (worst.0.max(id), worst.1.max(th));
    }
    Ok(format!(
        "20 random SPD: identity gap {:.1e}, theta gap {:.1e}",
        worst.0, worst.1
    ))
}

fn blowup(runs: &mut Runs) -> Result<String, String> {
    let r = runs.get("blowup-two-term", Pipeline::Blowup);
    ok_run(r)?;
    let lam = column(r, "fit.csv", "lambda")?;
    let res = column(r, "fit.csv", "residual")?;
    ensure(lam == [0.2, 0.1], || format!("lambdas {lam:?}"))?;
    let ratio = res[1] / res[0];
    ensure((0.4..=0.6).contains(&ratio), || format!("two-term ratio {ratio}"))?;
    let h = runs.get("blowup-homogeneous", Pipeline::Blowup);
    ok_run(h)?;
    let hres = column(h, "fit.csv", "residual")?;
    let hmax = max_abs(hres.iter().copied());
    ensure(hres.len() == 5 && hmax < 1e-8, || {
        format!("homogeneous residuals {hres:?}")
    })?;
    Ok(format!(
        "two-term ratio {ratio:.3}; homogeneous max residual {hmax:.1e}"
    ))
}

const SOLVED_2D: [&str; 9] = [
    "neumann-order-1",
    "neumann-order-2",
    "neumann-order-3",
    "robin-order-1",
    "robin-order-2",
    "robin-order-3",
    "robin-manufactured",
    "neumann-manufactured",
    "graph-neumann",
];

fn nodal(runs: &mut Runs) -> Result<String, String> {
    let mut roots = 0.0;
    for p in SOLVED_2D {
        let r = runs.get(p, Pipeline::Nodal);
        ok_run(r)?;
        let plateaus = metric(r, "nodal", "plateaus")?;
        ensure(plateaus == 0.0, || format!("{p}: {plateaus} plateau flags"))?;
        ensure(load_preset(p).unwrap().analysis.zero_radius >= 0.9, || {
            format!("{p}: window below 0.9")
        })?;
        roots += metric(r, "nodal", "roots")?;
    }
    let mut dims = Vec::new();
    for (p, want) in [("nodal-cross", 1.0), ("nodal-line", 1.0), ("nodal-point", 0.0)] {
        let r = runs.get(p, Pipeline::Nodal);
        ok_run(r)?;
        let dim = metric(r, "nodal", "dimension")?;
        ensure((dim - want).abs() <= 0.15 && dim <= 1.15, || {
            format!("{p}: dimension {dim} (want {want})")
        })?;
        dims.push(format!("{dim:.3}"));
    }
    Ok(format!(
        "{} 2D solutions, {roots} isolated roots, no plateaus; 3D dimensions {}",
        SOLVED_2D.len(),
        dims.join(", ")
    ))
}

fn solver(runs: &mut Runs) -> Result<String, String> {
    let mut orders = Vec::new();
    for p in ["robin-manufactured", "neumann-manufactured"] {
        let r = runs.get(p, Pipeline::Gauge);
        ok_run(r)?;
        let h = column(r, "convergence.csv", "h")?;
        let e = column(r, "convergence.csv", "l2_error")?;
        ensure(h.len() == 3, || format!("{p}: {} levels", h.len()))?;
        for k in 0..2 {
            let order = (e[k] / e[k + 1]).ln() / (h[k] / h[k + 1]).ln();
            ensure(order >= 1.8, || format!("{p}: L2 order {order}"))?;
            orders.push(order);
        }
        let mean = max_abs(column(r, "convergence.csv", "psi_mean")?.into_iter());
        let res = max_abs(column(r, "convergence.csv", "psi_residual")?.into_iter());
        let solver = max_abs(column(r, "convergence.csv", "solver_residual")?.into_iter());
        ensure(mean <= 1e-10 && res <= 1e-10 && solver <= 1e-10, || {
            format!("{p}: psi mean {mean:e}, psi residual {res:e}, solver residual {solver:e}")
        })?;
    }
    let lo = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!("min L2 order {lo:.3}; mean-zero Neumann solves within 1e-10"))
}

fn csv_bytes(report: &Report) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let written = emit_report(report, dir.path()).map_err(|e| e.to_string())?;
    written
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            let key = p.strip_prefix(dir.path()).unwrap().display().to_string();
            std::fs::read(p).map(|b| (key, b)).map_err(|e| e.to_string())
        })
        .collect()
}

fn determinism(runs: &mut Runs) -> Result<String, String> {
    let mut files = 0;
    for p in [CATALOG, "neumann-order-2"] {
        let a = csv_bytes(runs.get(p, Pipeline::Verify))?;
        let b = csv_bytes(&run_experiment(&load_preset(p).unwrap(), Pipeline::Verify))?;
        ensure(a.keys().eq(b.keys()), || format!("{p}: different file sets"))?;
        for (k, v) in &a {
            ensure(*v == b[k], || format!("{p}: {k} differs"))?;
        }
        files += a.len();
    }
    Ok(format!(
        "{files} CSV files bitwise identical across repeated verify runs"
    ))
}

#[test]
fn acceptance_criteria() {
    type Check = fn(&mut Runs) -> Result<String, String>;
    let criteria: [(&str, Check); 11] = [
        ("rigidity values", rigidity),
        ("monotonicity", monotonicity),
        ("energy identities", identities),
        ("vanishing order", vanishing_order),
        ("gauge reduction", gauge),
        ("reflection", reflection),
        ("normalizing map", normalizing_map),
        ("blowup", blowup),
        ("nodal sets", nodal),
        ("solver convergence", solver),
        ("determinism", determinism),
    ];
    let mut runs = Runs(BTreeMap::new());
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let line = match check(&mut runs) {
            Ok(detail) => format!("criterion {:>2} {name:<20} PASS  {detail}", k + 1),
            Err(detail) => {
                failed.push(k + 1);
                format!("criterion {:>2} {name:<20} FAIL  {detail}", k + 1)
            }
        };
        let _ = writeln!(err, "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
