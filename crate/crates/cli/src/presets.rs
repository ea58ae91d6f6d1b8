//! Built-in experiment configurations, runnable by name.

use crate::config::{parse_config, ConfigError, RunConfig};

/// `(name, TOML source)` for every shipped configuration.
pub const PRESETS: &[(&str, &str)] = &[
    ("blowup-homogeneous", include_str!("../configs/blowup-homogeneous.toml")),
    ("blowup-two-term", include_str!("../configs/blowup-two-term.toml")),
    ("flat-field", include_str!("../configs/flat-field.toml")),
    ("graph-neumann", include_str!("../configs/graph-neumann.toml")),
    ("harmonic-catalog", include_str!("../configs/harmonic-catalog.toml")),
    (
        "neumann-manufactured",
        include_str!("../configs/neumann-manufactured.toml"),
    ),
    ("neumann-order-1", include_str!("../configs/neumann-order-1.toml")),
    ("neumann-order-2", include_str!("../configs/neumann-order-2.toml")),
    ("neumann-order-3", include_str!("../configs/neumann-order-3.toml")),
    ("nodal-cross", include_str!("../configs/nodal-cross.toml")),
    ("nodal-line", include_str!("../configs/nodal-line.toml")),
    ("nodal-point", include_str!("../configs/nodal-point.toml")),
    ("normalizing-map", include_str!("../configs/normalizing-map.toml")),
    ("reflection", include_str!("../configs/reflection.toml")),
    ("robin-manufactured", include_str!("../configs/robin-manufactured.toml")),
    ("robin-order-1", include_str!("../configs/robin-order-1.toml")),
    ("robin-order-2", include_str!("../configs/robin-order-2.toml")),
    ("robin-order-3", include_str!("../configs/robin-order-3.toml")),
];

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load_preset(name: &str) -> Result<RunConfig, ConfigError> {
    let src = preset_source(name).ok_or_else(|| ConfigError {
        section: String::new(),
        key: None,
        line: None,
        column: None,
        message: format!("unknown preset {name:?}; available: {}", names().join(", ")),
    })?;
    parse_config(src)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load_and_round_trip() {
        for (name, _) in PRESETS {
            let cfg = load_preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.name, *name);
            assert_eq!(parse_config(&crate::config::print_config(&cfg)).unwrap(), cfg);
        }
        assert!(load_preset("nope").is_err());
    }
}
