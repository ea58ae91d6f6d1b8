//! Configuration, experiment orchestration and report emission for `ucplab`.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod experiment;
pub mod presets;
pub mod report;

pub use config::{load_config, parse_config, print_config, ConfigError, RunConfig};
pub use experiment::{run_experiment, Pipeline};
pub use report::{emit_report, Report};
