use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ucplab_cli::{emit_report, load_config, presets, run_experiment, Pipeline};

#[derive(Parser)]
#[command(
    name = "ucplab",
    version,
    about = "Unique continuation laboratory for Robin problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the boundary value problem (and a refinement sweep, if configured).
    Solve(RunArgs),
    /// Solve, then remove the Robin potential with the gauge factor.
    Gauge(RunArgs),
    /// Doubling index, frequency function and vanishing order.
    Frequency(RunArgs),
    /// Rescaled snapshots and the homogeneous fit.
    Blowup(RunArgs),
    /// Boundary zero set and its box-counting dimension.
    Nodal(RunArgs),
    /// Every stage and analysis with all gates.
    Verify(RunArgs),
    /// List the built-in configurations.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file.
    #[arg(short, long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Output directory (defaults to output.dir from the config, then ./ucplab-out).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Built-in configuration name.
    #[arg(long)]
    preset: Option<String>,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (pipeline, args) = match cli.command {
        Command::Solve(a) => (Pipeline::Solve, a),
        Command::Gauge(a) => (Pipeline::Gauge, a),
        Command::Frequency(a) => (Pipeline::Frequency, a),
        Command::Blowup(a) => (Pipeline::Blowup, a),
        Command::Nodal(a) => (Pipeline::Nodal, a),
        Command::Verify(a) => (Pipeline::Verify, a),
        Command::Presets => {
            for name in presets::names() {
                println!("{name}");
            }
            return ExitCode::SUCCESS;
        }
    };
    if let Ok(n) = std::env::var("UCPLAB_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: UCPLAB_THREADS ignored: {e}");
                }
            }
            _ => {
                eprintln!("error: UCPLAB_THREADS must be a positive integer, got {n:?}");
                return ExitCode::from(2);
            }
        }
    }
    let loaded = match (&args.config, &args.preset) {
        (Some(path), _) => load_config(path),
        (None, Some(name)) => presets::load_preset(name),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let mut cfg = match loaded {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    cfg.output.plots |= args.plots;
    let out = args
        .out
        .or_else(|| cfg.output.dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ucplab-out"));
    let report = run_experiment(&cfg, pipeline);
    if let Err(e) = emit_report(&report, &out) {
        eprintln!("error: writing {}: {e}", out.display());
        return ExitCode::from(2);
    }
    for s in &report.stages {
        if let Some(msg) = &s.message {
            eprintln!("stage failed: {msg}");
        }
    }
    let failed: Vec<_> = report.gates.iter().filter(|g| !g.passed).collect();
    for g in &failed {
        eprintln!("gate failed: {} = {:e} (want {})", g.name, g.value, g.bound.describe());
    }
    println!(
        "{} {}: {} ({} gates, {} failed) -> {}",
        pipeline.name(),
        if report.name.is_empty() {
            "<unnamed>"
        } else {
            &report.name
        },
        if report.passed() { "PASS" } else { "FAIL" },
        report.gates.len(),
        failed.len(),
        out.display()
    );
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
