use crate::dsl::Distribution;
use crate::strategy::Archetype;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

/// Problem with a scenario document. `path` locates the offending field,
/// e.g. `families[1].n_agents`.
#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyConfig {
    Archetype {
        kind: Archetype,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        params: BTreeMap<String, Distribution>,
    },
    Avatar {
        source: String,
    },
    /// Path to an `.avt` file; replaced by its contents at load time.
    AvatarFile(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub name: String,
    pub strategy: StrategyConfig,
    pub n_agents: u32,
    pub initial_cash: i64,
    pub initial_shares: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunLength {
    Transactions(u64),
    SimTime(u64),
}

fn default_snapshot_interval() -> u64 {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub families: Vec<FamilyConfig>,
    pub initial_reference_price: i64,
    #[serde(default)]
    pub news_rate: f64,
    #[serde(default)]
    pub news_sigma: f64,
    #[serde(default)]
    pub message_latency: u64,
    pub run_length: RunLength,
    /// Hard stop on simulation time, whatever the run length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sim_time: Option<u64>,
    #[serde(default = "default_snapshot_interval")]
    pub snapshot_interval: u64,
    #[serde(default)]
    pub master_seed: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| {
            ConfigError::new(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })
    }

    /// Reads a scenario file and inlines any `avatar_file` references,
    /// resolved relative to the scenario's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.inline_files(base)?;
        Ok(cfg)
    }

    pub fn inline_files(&mut self, base: &Path) -> Result<(), ConfigError> {
        for (i, f) in self.families.iter_mut().enumerate() {
            if let StrategyConfig::AvatarFile(p) = &f.strategy {
                let full = base.join(p);
                let source = std::fs::read_to_string(&full).map_err(|e| {
                    ConfigError::new(
                        format!("families[{i}].strategy.avatar_file"),
                        format!("{}: {e}", full.display()),
                    )
                })?;
                f.strategy = StrategyConfig::Avatar { source };
            }
        }
        Ok(())
    }

    pub fn total_agents(&self) -> u64 {
        self.families.iter().map(|f| f.n_agents as u64).sum()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.families.is_empty() {
            return Err(ConfigError::new(
                "families",
                "at least one family is required",
            ));
        }
        for (i, f) in self.families.iter().enumerate() {
            let at = |field: &str| format!("families[{i}].{field}");
            if f.n_agents < 1 {
                return Err(ConfigError::new(at("n_agents"), "must be at least 1"));
            }
            if f.initial_cash < 0 {
                return Err(ConfigError::new(at("initial_cash"), "must be non-negative"));
            }
            if f.initial_shares < 0 {
                return Err(ConfigError::new(
                    at("initial_shares"),
                    "must be non-negative",
                ));
            }
            match &f.strategy {
                StrategyConfig::Archetype { kind, params } => {
                    kind.configure(params)
                        .map_err(|e| ConfigError::new(at("strategy.params"), e.to_string()))?;
                }
                StrategyConfig::Avatar { .. } => {}
                StrategyConfig::AvatarFile(_) => {
                    return Err(ConfigError::new(
                        at("strategy.avatar_file"),
                        "file reference was not resolved",
                    ))
                }
            }
        }
        if self.total_agents() > u32::MAX as u64 {
            return Err(ConfigError::new("families", "too many agents"));
        }
        if self.initial_reference_price < 1 {
            return Err(ConfigError::new(
                "initial_reference_price",
                "must be at least 1",
            ));
        }
        if !(self.news_rate >= 0.0 && self.news_rate.is_finite()) {
            return Err(ConfigError::new(
                "news_rate",
                "must be finite and non-negative",
            ));
        }
        if !(self.news_sigma >= 0.0 && self.news_sigma.is_finite()) {
            return Err(ConfigError::new(
                "news_sigma",
                "must be finite and non-negative",
            ));
        }
        match self.run_length {
            RunLength::Transactions(0) => {
                return Err(ConfigError::new(
                    "run_length.transactions",
                    "must be positive",
                ))
            }
            RunLength::SimTime(0) => {
                return Err(ConfigError::new("run_length.sim_time", "must be positive"))
            }
            _ => {}
        }
        if self.snapshot_interval < 1 {
            return Err(ConfigError::new("snapshot_interval", "must be at least 1"));
        }
        Ok(())
    }
}
