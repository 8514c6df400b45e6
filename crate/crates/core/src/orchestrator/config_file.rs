//! TOML experiment files.
//!
//! ```toml
//! [society]
//! resource_labels = ["A", "B", "C"]
//! rounds = 10
//! injection_per_round = 15
//! value_coefficients = [1, 4, 9]
//! max_discussion_rounds = 3
//! initial_allocation = "uniform_all"   # or "specialized_only"
//! initial_units = 5
//! rng_seed = 0
//! repetitions = 5
//!
//! [[agents]]
//! id = "alice"
//! name = "Alice"
//! specialization = "A"
//! svo = "prosocial"
//! rei_rational = 3
//! rei_experiential = 3
//! controller = "scripted:honest-reciprocator"
//! # initial_holdings = { A = 5, B = 5, C = 5 }
//!
//! [llm]
//! model_name = "claude-3-5-sonnet-20240620"
//! ```
//!
//! Every key is optional; omitted keys take the standard values, and
//! omitting `[[agents]]` gives the default three-agent society.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::domain::{
    normalize_labeled, validate_config, AgentId, AgentProfile, Controller, ExperimentConfig, InitialAllocation, Svo,
    ValidationReport, ValueCoefficients,
};
use crate::llm::LlmSettings;

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSociety {
    resource_labels: Option<Vec<String>>,
    rounds: Option<u32>,
    injection_per_round: Option<u64>,
    value_coefficients: Option<Vec<u64>>,
    max_discussion_rounds: Option<u32>,
    initial_allocation: Option<InitialAllocation>,
    initial_units: Option<u64>,
    rng_seed: Option<u64>,
    repetitions: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileAgent {
    id: String,
    name: Option<String>,
    specialization: String,
    #[serde(default = "default_svo")]
    svo: Svo,
    #[serde(default = "default_rei")]
    rei_rational: u8,
    #[serde(default = "default_rei")]
    rei_experiential: u8,
    controller: Option<Controller>,
    initial_holdings: Option<BTreeMap<String, i64>>,
}

fn default_svo() -> Svo {
    Svo::Prosocial
}

fn default_rei() -> u8 {
    3
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    society: FileSociety,
    #[serde(default)]
    agents: Vec<FileAgent>,
    llm: Option<LlmSettings>,
}

/// A parsed configuration together with the exact text it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub snapshot: String,
    pub path: Option<PathBuf>,
}

/// Parses TOML text; validation is left to the caller.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigFileError> {
    let file: FileConfig = toml::from_str(text).map_err(|e| ConfigFileError::Parse(e.to_string()))?;
    let mut cfg = ExperimentConfig::standard();
    let s = file.society;
    if let Some(v) = s.resource_labels {
        cfg.resource_labels = v;
    }
    if let Some(v) = s.rounds {
        cfg.rounds = v;
    }
    if let Some(v) = s.injection_per_round {
        cfg.injection_per_round = v;
    }
    if let Some(v) = s.value_coefficients {
        cfg.value_coefficients = ValueCoefficients(v);
    }
    if let Some(v) = s.max_discussion_rounds {
        cfg.max_discussion_rounds = v;
    }
    if let Some(v) = s.initial_allocation {
        cfg.initial_allocation = v;
    }
    if let Some(v) = s.initial_units {
        cfg.initial_units = v;
    }
    if let Some(v) = s.rng_seed {
        cfg.rng_seed = v;
    }
    if let Some(v) = s.repetitions {
        cfg.repetitions = v;
    }
    if let Some(llm) = file.llm {
        cfg.llm = llm;
    }

    let mut overrides = BTreeMap::new();
    if !file.agents.is_empty() {
        let mut agents = Vec::new();
        for a in file.agents {
            let specialization = cfg.resource_index(&a.specialization).ok_or_else(|| {
                ConfigFileError::Parse(format!("agent {} specializes in unknown resource {}", a.id, a.specialization))
            })?;
            if let Some(h) = &a.initial_holdings {
                let v = normalize_labeled(h, &cfg.resource_labels)
                    .map_err(|e| ConfigFileError::Parse(format!("agent {} initial_holdings: {e}", a.id)))?;
                overrides.insert(a.id.clone(), v);
            }
            agents.push(AgentProfile {
                display_name: a.name.unwrap_or_else(|| a.id.clone()),
                agent_id: AgentId::new(a.id),
                specialization,
                svo: a.svo,
                rei_rational: a.rei_rational,
                rei_experiential: a.rei_experiential,
                initial_holdings: Default::default(),
                controller: a.controller.unwrap_or(Controller::Scripted("honest-reciprocator".into())),
            });
        }
        cfg.agents = agents;
    } else if cfg.resource_labels.len() != 3 {
        return Err(ConfigFileError::Parse("custom resource_labels need an explicit [[agents]] list".into()));
    }
    cfg.apply_initial_allocation();
    for agent in &mut cfg.agents {
        if let Some(v) = overrides.remove(agent.agent_id.as_str()) {
            agent.initial_holdings = v;
        }
    }
    Ok(cfg)
}

/// Reads, parses and validates a config file.
pub fn load_config_file(path: &Path) -> Result<LoadedConfig, ConfigFileError> {
    let snapshot =
        fs::read_to_string(path).map_err(|source| ConfigFileError::Io { path: path.to_path_buf(), source })?;
    let config = parse_config(&snapshot)?;
    let report = validate_config(&config);
    if !report.is_ok() {
        return Err(ConfigFileError::Invalid(report));
    }
    Ok(LoadedConfig { config, snapshot, path: Some(path.to_path_buf()) })
}
