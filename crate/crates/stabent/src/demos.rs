//! Built-in demo configurations, shipped as TOML under `demos/`.

use anyhow::{anyhow, Result};

use crate::config::ExperimentConfig;

const DEMOS: [(&str, &str); 5] = [
    ("linear-1d", include_str!("../demos/linear-1d.toml")),
    ("linear-2d", include_str!("../demos/linear-2d.toml")),
    ("quadratic-5.2", include_str!("../demos/quadratic-5.2.toml")),
    ("cubic-5.3", include_str!("../demos/cubic-5.3.toml")),
    ("chain-5.4", include_str!("../demos/chain-5.4.toml")),
];

/// Names of the built-in demos, in a fixed order.
pub fn names() -> Vec<&'static str> {
    DEMOS.iter().map(|(n, _)| *n).collect()
}

/// TOML text of a demo.
pub fn source(name: &str) -> Option<&'static str> {
    DEMOS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn config(name: &str) -> Result<ExperimentConfig> {
    let text = source(name).ok_or_else(|| anyhow!("unknown demo {name:?}; try one of {}", names().join(", ")))?;
    ExperimentConfig::from_toml(text)
}
