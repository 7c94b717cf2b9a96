//! Experiment configuration and shipped presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Mode, ModelConfig, DEFAULT_DEPTH, DEFAULT_LEVEL, DEFAULT_THETA};
use crate::shift::WeightRule;
use crate::space::{FSpace, IndexKind};
use crate::verify::DEFAULT_DELTA;

pub const PRESETS: [&str; 3] = ["l2-doubling", "l2-bilateral", "omega-any"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default = "default_level")]
    pub level: u32,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_lags")]
    pub lags: Vec<u64>,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    /// Number of ball events for the invariance and density checks.
    #[serde(default = "default_events")]
    pub events: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_level() -> u32 {
    DEFAULT_LEVEL
}

fn default_samples() -> usize {
    100_000
}

fn default_lags() -> Vec<u64> {
    (0..=50).collect()
}

fn default_horizon() -> u64 {
    10_000
}

fn default_events() -> usize {
    10
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

impl ExperimentConfig {
    pub fn for_model(model: ModelConfig) -> Self {
        ExperimentConfig {
            model,
            level: default_level(),
            samples: default_samples(),
            lags: default_lags(),
            horizon: default_horizon(),
            events: default_events(),
            seed: 0,
            delta: default_delta(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let l2 = FSpace::lp(2.0)?;
        let model = match name {
            "l2-doubling" => ModelConfig {
                space: l2,
                side: IndexKind::Unilateral,
                weights: WeightRule::Constant { lambda: 2.0 },
                mode: Mode::Fhc,
                depth: DEFAULT_DEPTH,
                theta: DEFAULT_THETA,
            },
            "l2-bilateral" => ModelConfig {
                space: l2,
                side: IndexKind::Bilateral,
                weights: WeightRule::Power { a: 3.0 },
                mode: Mode::Fhc,
                depth: DEFAULT_DEPTH,
                theta: DEFAULT_THETA,
            },
            "omega-any" => ModelConfig {
                space: FSpace::omega(),
                side: IndexKind::Unilateral,
                weights: WeightRule::Constant { lambda: 1.0 },
                mode: Mode::UnilateralExact,
                depth: DEFAULT_DEPTH,
                theta: DEFAULT_THETA,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; expected one of {PRESETS:?}"
                )))
            }
        };
        Ok(Self::for_model(model))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.level == 0 || self.level as usize > self.model.depth {
            return Err(Error::Config(format!(
                "level {} must lie in 1..={}",
                self.level, self.model.depth
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta {} not in (0,1)", self.delta)));
        }
        if self.model.mode == Mode::UnilateralExact && self.model.side != IndexKind::Unilateral {
            return Err(Error::ModeMismatch("the exact model needs a unilateral shift".into()));
        }
        Ok(())
    }

    /// Pretty JSON; serializing the same config always yields the same text.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
