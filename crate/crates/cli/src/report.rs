//! Experiment reports: recorded stages, metrics and gates, CSV tables, JSON summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub stage: String,
    pub key: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Bound {
    AtMost { limit: f64 },
    Below { limit: f64 },
    AtLeast { limit: f64 },
    Above { limit: f64 },
    Within { lo: f64, hi: f64 },
    Equals { target: f64 },
}

impl Bound {
    pub fn holds(&self, v: f64) -> bool {
        match *self {
            Bound::AtMost { limit } => v <= limit,
            Bound::Below { limit } => v < limit,
            Bound::AtLeast { limit } => v >= limit,
            Bound::Above { limit } => v > limit,
            Bound::Within { lo, hi } => (lo..=hi).contains(&v),
            Bound::Equals { target } => v == target,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Bound::AtMost { limit } => format!("<= {limit:e}"),
            Bound::Below { limit } => format!("< {limit:e}"),
            Bound::AtLeast { limit } => format!(">= {limit:e}"),
            Bound::Above { limit } => format!("> {limit:e}"),
            Bound::Within { lo, hi } => format!("in [{lo:e}, {hi:e}]"),
            Bound::Equals { target } => format!("== {target:e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub name: String,
    pub pipeline: String,
    pub stages: Vec<StageRecord>,
    pub metrics: Vec<Metric>,
    pub gates: Vec<Gate>,
    /// CSV tables keyed by relative path.
    pub tables: BTreeMap<String, String>,
    /// SVG plots keyed by relative path.
    pub plots: BTreeMap<String, String>,
}

impl Report {
    pub fn new(name: &str, pipeline: &str) -> Self {
        Report {
            name: name.into(),
            pipeline: pipeline.into(),
            ..Default::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Ok) && self.gates.iter().all(|g| g.passed)
    }

    pub fn metric(&mut self, stage: &str, key: &str, value: f64) {
        self.metrics.push(Metric {
            stage: stage.into(),
            key: key.into(),
            value,
        });
    }

    pub fn get(&self, stage: &str, key: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.stage == stage && m.key == key)
            .map(|m| m.value)
    }

    pub fn gate(&mut self, name: &str, value: f64, bound: Bound) -> bool {
        let passed = bound.holds(value);
        self.gates.push(Gate {
            name: name.into(),
            value,
            bound,
            passed,
        });
        passed
    }

    pub fn failed_stage(&self) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.status == StageStatus::Failed)
    }

    /// The JSON summary; its numbers are exactly those of `stages.csv` and `gates.csv`.
    pub fn summary(&self) -> Value {
        let mut metrics = Map::new();
        for m in &self.metrics {
            let entry = metrics
                .entry(m.stage.clone())
                .or_insert_with(|| Value::Object(Map::new()));
            entry
                .as_object_mut()
                .expect("object")
                .insert(m.key.clone(), json!(m.value));
        }
        let files: Vec<&String> = self.file_names().collect();
        json!({
            "name": self.name,
            "pipeline": self.pipeline,
            "passed": self.passed(),
            "stages": self.stages,
            "metrics": metrics,
            "gates": self.gates,
            "files": files,
        })
    }

    fn file_names(&self) -> impl Iterator<Item = &String> {
        self.tables.keys().chain(self.plots.keys())
    }

    pub fn stages_csv(&self) -> String {
        let mut s = String::from("stage,key,value\n");
        for m in &self.metrics {
            let _ = writeln!(s, "{},{},{:e}", m.stage, m.key, m.value);
        }
        s
    }

    pub fn gates_csv(&self) -> String {
        let mut s = String::from("gate,value,bound,passed\n");
        for g in &self.gates {
            let _ = writeln!(s, "{},{:e},{},{}", g.name, g.value, g.bound.describe(), g.passed);
        }
        s
    }
}

/// Writes `summary.json` and every table and plot; returns the written paths in order.
pub fn emit_report(report: &Report, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files: BTreeMap<String, String> = report.tables.clone();
    if !report.metrics.is_empty() {
        files.insert("stages.csv".into(), report.stages_csv());
    }
    if !report.gates.is_empty() {
        files.insert("gates.csv".into(), report.gates_csv());
    }
    files.extend(report.plots.iter().map(|(k, v)| (k.clone(), v.clone())));
    let mut summary = report.summary();
    summary["files"] = json!(files.keys().collect::<Vec<_>>());
    let mut written = Vec::new();
    let path = dir.join("summary.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;
    written.push(path);
    for (name, body) in &files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// A polyline plot with labelled axes; `log` flags choose log10 axes.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, pts: &[(f64, f64)], log: (bool, bool)) -> String {
    let tf = |v: f64, l: bool| if l { v.log10() } else { v };
    let pts: Vec<(f64, f64)> = pts
        .iter()
        .map(|&(x, y)| (tf(x, log.0), tf(y, log.1)))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (w, h, m) = (480.0, 320.0, 50.0);
    let range = |it: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 * hi.abs().max(1.0) {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = range(&mut pts.iter().map(|p| p.1));
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>",
        w / 2.0
    );
    let _ = writeln!(
        s,
        "<line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        h - m,
        w - m,
        h - m
    );
    let _ = writeln!(
        s,
        "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>",
        h - m
    );
    let lx = if log.0 {
        format!("log10 {xlabel}")
    } else {
        xlabel.to_string()
    };
    let ly = if log.1 {
        format!("log10 {ylabel}")
    } else {
        ylabel.to_string()
    };
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{lx}</text>",
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{ly}</text>",
        h / 2.0,
        h / 2.0
    );
    for (v, x, y, anchor) in [(x0, sx(x0), h - m + 14.0, "start"), (x1, sx(x1), h - m + 14.0, "end")] {
        let _ = writeln!(
            s,
            "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\">{v:.3}</text>"
        );
    }
    for (v, y) in [(y0, sy(y0)), (y1, sy(y1))] {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.3}</text>",
            m - 4.0,
            y + 4.0
        );
    }
    let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    let _ = writeln!(
        s,
        "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{}\"/>",
        path.join(" ")
    );
    s.push_str("</svg>\n");
    s
}
