//! Declarative experiment input: the scenario file schema, defaults and
//! validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::satellite::GroundPath;
use crate::sim::FaultPlan;
use crate::types::Point;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid scenario field {field}: {message}")]
pub struct ValidationError {
    pub field: &'static str,
    pub message: String,
}

fn invalid(field: &'static str, message: impl Into<String>) -> ValidationError {
    ValidationError { field, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteConfig {
    /// Virtual times at which the device flies over the circle.
    pub passes: Vec<u64>,
    pub path: GroundPath,
    /// Seed for the pre-flight circle token; derived from the scenario seed
    /// when absent.
    #[serde(default)]
    pub token_seed: Option<u64>,
    /// Fly with a token that does not match the circle's registered one.
    #[serde(default)]
    pub corrupt_token: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default = "default_circle_id")]
    pub circle_id: String,
    pub mystic_count: usize,
    pub mystic_positions: Vec<Point>,
    #[serde(default = "default_one")]
    pub watchtower_count: usize,
    #[serde(default = "default_watchtower_positions")]
    pub watchtower_positions: Vec<Point>,
    #[serde(default = "default_difficulty")]
    pub difficulty: u8,
    #[serde(default = "default_fanout")]
    pub gossip_fanout: usize,
    #[serde(default = "default_gossip_interval")]
    pub gossip_min_interval_s: u64,
    #[serde(default = "default_charm_interval")]
    pub charm_interval_s: u64,
    #[serde(default = "default_quorum_fraction")]
    pub quorum_fraction: f64,
    #[serde(default = "default_token_ttl")]
    pub token_ttl_s: u64,
    #[serde(default = "default_round_window")]
    pub hash_round_window_s: u64,
    #[serde(default = "default_audit_sample")]
    pub audit_sample: usize,
    #[serde(default = "default_audit_timeout")]
    pub audit_timeout_s: u64,
    #[serde(default = "default_base_latency")]
    pub base_latency_s: u64,
    #[serde(default)]
    pub per_km_latency_s: f64,
    #[serde(default = "default_discovery_window")]
    pub discovery_window_s: u64,
    #[serde(default = "default_transmit_timeout")]
    pub transmit_timeout_s: u64,
    #[serde(default = "default_secret")]
    pub registration_secret: String,
    /// File whose bytes bind the circle's payload key.
    pub key_source_path: PathBuf,
    pub satellite: SatelliteConfig,
    #[serde(default)]
    pub fault_plan: FaultPlan,
    /// Total virtual runtime; derived from the passes when absent.
    #[serde(default)]
    pub duration_s: Option<u64>,
    /// Foreign Watchtower ids allowed to request inter-circle tokens.
    #[serde(default)]
    pub foreign_watchtowers: Vec<String>,
}

fn default_circle_id() -> String {
    "circle-a".to_string()
}
fn default_one() -> usize {
    1
}
fn default_watchtower_positions() -> Vec<Point> {
    vec![Point::new(0.0, 0.0)]
}
fn default_difficulty() -> u8 {
    8
}
fn default_fanout() -> usize {
    2
}
fn default_gossip_interval() -> u64 {
    900
}
fn default_charm_interval() -> u64 {
    300
}
fn default_quorum_fraction() -> f64 {
    0.8
}
fn default_token_ttl() -> u64 {
    900
}
fn default_round_window() -> u64 {
    2
}
fn default_audit_sample() -> usize {
    3
}
fn default_audit_timeout() -> u64 {
    30
}
fn default_base_latency() -> u64 {
    1
}
fn default_discovery_window() -> u64 {
    5
}
fn default_transmit_timeout() -> u64 {
    30
}
fn default_secret() -> String {
    "circle-secret".to_string()
}

impl ScenarioConfig {
    /// Quorum fraction quantized to permille; 0.8 becomes exactly 800/1000.
    pub fn quorum_permille(&self) -> u64 {
        (self.quorum_fraction * 1000.0).round() as u64
    }

    /// Virtual end time of the run.
    pub fn duration(&self) -> u64 {
        self.duration_s.unwrap_or_else(|| {
            let last_pass = self.satellite.passes.iter().max().copied().unwrap_or(0);
            last_pass + 2 * self.charm_interval_s + 300
        })
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.mystic_count == 0 {
            return Err(invalid("mystic_count", "at least one Mystic is required"));
        }
        if self.watchtower_count == 0 {
            return Err(invalid("watchtower_count", "at least one Watchtower is required"));
        }
        if self.mystic_positions.len() != self.mystic_count {
            return Err(invalid(
                "mystic_positions",
                format!(
                    "expected {} positions, got {}",
                    self.mystic_count,
                    self.mystic_positions.len()
                ),
            ));
        }
        if self.watchtower_positions.len() != self.watchtower_count {
            return Err(invalid(
                "watchtower_positions",
                format!(
                    "expected {} positions, got {}",
                    self.watchtower_count,
                    self.watchtower_positions.len()
                ),
            ));
        }
        if !(self.quorum_fraction > 0.0 && self.quorum_fraction <= 1.0) {
            return Err(invalid(
                "quorum_fraction",
                format!("{} is outside (0, 1]", self.quorum_fraction),
            ));
        }
        if self.difficulty > crate::ledger::MAX_DIFFICULTY {
            return Err(invalid(
                "difficulty",
                format!("{} exceeds the cap of {}", self.difficulty, crate::ledger::MAX_DIFFICULTY),
            ));
        }
        if self.gossip_fanout == 0 {
            return Err(invalid("gossip_fanout", "fan-out must be at least 1"));
        }
        if self.charm_interval_s == 0 {
            return Err(invalid("charm_interval_s", "charm interval must be positive"));
        }
        if self.gossip_min_interval_s == 0 {
            return Err(invalid("gossip_min_interval_s", "gossip interval must be positive"));
        }
        if self.satellite.passes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("satellite.passes", "pass times must be strictly increasing"));
        }
        if self.per_km_latency_s < 0.0 {
            return Err(invalid("per_km_latency_s", "latency cannot be negative"));
        }
        Ok(())
    }
}

/// Load, default-fill and validate a scenario file. A relative
/// `key_source_path` resolves against the scenario file's directory.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    let mut config: ScenarioConfig = serde_json::from_str(&text)?;
    if config.key_source_path.is_relative() {
        if let Some(dir) = path.parent() {
            config.key_source_path = dir.join(&config.key_source_path);
        }
    }
    config.validate()?;
    Ok(config)
}
