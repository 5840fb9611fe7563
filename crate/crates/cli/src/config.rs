use std::path::{Path, PathBuf};

use physnet_core::dataset::{Dataset, GenerationConfig, LocationEncoding};
use physnet_core::physnet::NetworkConfig;
use physnet_core::trainer::{ExperimentConfig, TrainConfig};
use physnet_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Run configuration file. Every section is optional; flags override it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub generation: Option<GenerationConfig>,
    pub network: Option<NetworkConfig>,
    pub train: Option<TrainConfig>,
    pub experiment: Option<ExperimentConfig>,
    pub seed: Option<u64>,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }
}

/// What `predict` needs to turn raw physical values into a condition vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    pub encoding: LocationEncoding,
    pub location_count: usize,
    /// Force that maps to a normalized force of 1, in newtons.
    pub force_max: f64,
}

pub const CONDITION_FILE: &str = "condition.json";

impl ConditionSpec {
    pub fn of(ds: &Dataset) -> Option<Self> {
        let first = ds.records.first()?;
        if ds.records.iter().any(|r| r.metadata.force_max != first.metadata.force_max) {
            log::warn!("objects use different force ranges; recording the first one's");
        }
        Some(Self {
            encoding: ds.manifest.encoding,
            location_count: ds.manifest.plan.location_count,
            force_max: first.metadata.force_max,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(CONDITION_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Reads `condition.json` from `dir` when present.
    pub fn find(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(CONDITION_FILE);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&std::fs::read_to_string(path)?)?))
    }
}

/// Writes the configuration a command actually ran with.
pub fn echo_resolved(dir: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("resolved_config.json"), serde_json::to_string_pretty(value)?)?;
    Ok(())
}
