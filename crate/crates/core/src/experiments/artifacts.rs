use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::engine::{InitSpec, RunTrace, SampleOrder};
use crate::error::Result;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub data: u64,
    pub order: Option<u64>,
    pub init: Option<u64>,
}

impl Seeds {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            data: cfg.seed,
            order: match cfg.order {
                SampleOrder::Cyclic => None,
                SampleOrder::Shuffled { seed } | SampleOrder::Uniform { seed } => Some(seed),
            },
            init: match cfg.init {
                InitSpec::NearZero { seed, .. } | InitSpec::Gaussian { seed, .. } => Some(seed),
                _ => None,
            },
        }
    }
}

/// `manifest.json`: what produced the files next to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub scenario: crate::config::Scenario,
    pub config_hash: String,
    pub seeds: Seeds,
    pub termination: Option<String>,
    pub steps: Option<usize>,
    pub final_w: Option<Vec<f64>>,
    pub files: Vec<String>,
    pub version: String,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, trace: Option<&RunTrace>, files: Vec<String>) -> Result<Self> {
        Ok(Self {
            name: cfg.name.clone(),
            scenario: cfg.scenario,
            config_hash: cfg.hash()?,
            seeds: Seeds::of(cfg),
            termination: trace.map(|t| t.termination.as_str().to_string()),
            steps: trace.map(|t| t.len()),
            final_w: trace.map(|t| t.final_w().iter().copied().collect()),
            files,
            version: env!("CARGO_PKG_VERSION").into(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}
