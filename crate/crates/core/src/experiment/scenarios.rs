use crate::error::{LabError, Result};

use super::config::LabConfig;

const FIG1: &str = include_str!("../../scenarios/fig1.toml");
const IDENTIFIABILITY: &str = include_str!("../../scenarios/identifiability.toml");
const HOMOGENEOUS: &str = include_str!("../../scenarios/homogeneous.toml");
const TIERS: &str = include_str!("../../scenarios/tiers.toml");
const FLYWHEEL: &str = include_str!("../../scenarios/flywheel.toml");
const STACKING: &str = include_str!("../../scenarios/stacking.toml");
const MONITORS: &str = include_str!("../../scenarios/monitors.toml");
const AMPLIFICATION: &str = include_str!("../../scenarios/amplification.toml");

/// Names accepted by [`canonical`].
pub const NAMES: &[&str] = &["fig1", "identifiability", "homogeneous", "tiers", "flywheel", "stacking", "amplification", "monitors"];

/// Source text of a canonical scenario config.
pub fn canonical_source(name: &str) -> Result<&'static str> {
    match name {
        "fig1" => Ok(FIG1),
        "identifiability" => Ok(IDENTIFIABILITY),
        "homogeneous" => Ok(HOMOGENEOUS),
        "tiers" => Ok(TIERS),
        "flywheel" => Ok(FLYWHEEL),
        "stacking" => Ok(STACKING),
        "amplification" => Ok(AMPLIFICATION),
        "monitors" => Ok(MONITORS),
        _ => Err(LabError::Unknown {
            kind: "scenario",
            name: name.to_string(),
        }),
    }
}

pub fn canonical(name: &str) -> Result<LabConfig> {
    LabConfig::parse(canonical_source(name)?)
}
