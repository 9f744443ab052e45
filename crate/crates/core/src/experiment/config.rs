use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassWeightTable, ClassifierWeights};
use crate::dual_learner::TrainConfig;
use crate::error::{LabError, Result};
use crate::monitors::MonitorConfig;
use crate::world_sim::{Scenario, ScenarioConfig};

pub const SCHEMA_VERSION: u32 = 1;

fn d_true() -> bool {
    true
}
fn d_cohort() -> f64 {
    0.7
}
fn d_outer() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    /// When false every override carries full weight in both losses.
    #[serde(default = "d_true")]
    pub enabled: bool,
    #[serde(default)]
    pub weights: ClassifierWeights,
    #[serde(default)]
    pub class_weights: ClassWeightTable,
    /// Capability estimate at or above which a clinician counts towards the
    /// high-capability cohort.
    #[serde(default = "d_cohort")]
    pub cohort_kappa_threshold: f64,
    /// Reclassification passes around the inner training loop.
    #[serde(default = "d_outer")]
    pub outer_iterations: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            weights: ClassifierWeights::default(),
            class_weights: ClassWeightTable::default(),
            cohort_kappa_threshold: d_cohort(),
            outer_iterations: d_outer(),
        }
    }
}

fn d_round_steps() -> u32 {
    10
}

/// Closed-loop runs: the simulator is driven by the current learned model,
/// retrained every `steps_per_round` simulated steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedLoopConfig {
    /// Number of recommendation rounds; 0 runs the scenario open loop.
    #[serde(default)]
    pub rounds: u32,
    #[serde(default = "d_round_steps")]
    pub steps_per_round: u32,
    /// Retrain on all data so far (true) or on the latest round only.
    #[serde(default = "d_true")]
    pub cumulative: bool,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        Self {
            rounds: 0,
            steps_per_round: d_round_steps(),
            cumulative: true,
        }
    }
}

/// Everything one run needs: the simulated world and every learner and
/// monitor setting. All defaults are filled in on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabConfig {
    pub schema_version: u32,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub monitors: MonitorConfig,
    #[serde(default)]
    pub closed_loop: ClosedLoopConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl LabConfig {
    /// Parses a TOML document. Schema violations name the offending field
    /// path and, where known, its line.
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| LabError::Schema {
            path: String::new(),
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let config: LabConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            LabError::Schema {
                path,
                line: inner.span().map(|s| line_of(text, s.start)),
                message: inner.message().to_string(),
            }
        })?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(LabError::Schema {
                path: "schema_version".into(),
                line: None,
                message: format!(
                    "unsupported schema version {}, expected {SCHEMA_VERSION}",
                    config.schema_version
                ),
            });
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.classifier.class_weights.validate()?;
        self.training.beta()?;
        self.training.priors.validate()?;
        self.monitors.validate()?;
        if self.closed_loop.rounds > 0 && self.closed_loop.steps_per_round == 0 {
            return Err(LabError::Config("closed_loop.steps_per_round must be positive".into()));
        }
        Scenario::from_config(self.scenario.clone()).map(|_| ())
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let mut sc = self.scenario.clone();
        if self.closed_loop.rounds > 0 {
            sc.horizon = self.closed_loop.rounds * self.closed_loop.steps_per_round;
        }
        Scenario::from_config(sc)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenario.seed = seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}
