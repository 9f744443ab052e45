use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::kernel::{Catalog, RewardModel};
use crate::stats::spearman;
use crate::world_sim::OutcomePair;

fn d_threshold() -> f64 {
    0.3
}
fn d_min_pairs() -> usize {
    30
}
fn d_factor() -> f64 {
    4.0
}
fn d_reinits() -> usize {
    1
}
fn d_heldout() -> usize {
    600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    /// Minimum rank correlation for a model to pass.
    #[serde(default = "d_threshold")]
    pub threshold: f64,
    #[serde(default = "d_min_pairs")]
    pub min_pairs: usize,
    /// Multiplier on prior evidence when reinitialising after a failure.
    #[serde(default = "d_factor")]
    pub reinit_factor: f64,
    #[serde(default = "d_reinits")]
    pub max_reinits: usize,
    /// Number of simulated held-out pairs drawn for validation.
    #[serde(default = "d_heldout")]
    pub heldout_pairs: usize,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            threshold: d_threshold(),
            min_pairs: d_min_pairs(),
            reinit_factor: d_factor(),
            max_reinits: d_reinits(),
            heldout_pairs: d_heldout(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorReport {
    /// Spearman correlation between model margins and outcome differences;
    /// 0 when either side is constant.
    pub concordance: f64,
    pub pass: bool,
    pub threshold: f64,
    pub pairs: usize,
}

/// Rank correlation between `R(first) - R(second)` and the difference in
/// outcome quality over held-out pairs.
pub fn anchor_validate(
    model: &RewardModel,
    catalog: &Catalog,
    heldout: &[OutcomePair],
    threshold: f64,
    min_pairs: usize,
) -> Result<AnchorReport> {
    if heldout.len() < min_pairs.max(2) {
        return Err(LabError::TooFewHeldout {
            got: heldout.len(),
            min: min_pairs.max(2),
        });
    }
    let mut margins = Vec::with_capacity(heldout.len());
    let mut diffs = Vec::with_capacity(heldout.len());
    for p in heldout {
        margins.push(model.margin(catalog, &p.state, p.first, p.second, p.contract)?);
        diffs.push(p.first_quality - p.second_quality);
    }
    let concordance = spearman(&margins, &diffs).unwrap_or(0.0);
    Ok(AnchorReport {
        concordance,
        pass: concordance >= threshold,
        threshold,
        pairs: heldout.len(),
    })
}
