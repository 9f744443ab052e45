use nalgebra::{DMatrix, DVector};

use super::config::Scenario;
use crate::error::{LabError, Result};
use crate::kernel::{ContractId, FeatureMap, RewardModel};

/// Linear reward model reproducing the true reward table at every cluster
/// center, as the minimum-norm least-squares solution. Exact whenever the
/// table is expressible under the scenario's feature map, which holds for
/// one-hot actions with a single cluster or one-hot cluster centers.
pub fn truth_model(scenario: &Scenario) -> Result<RewardModel> {
    let catalog = &scenario.catalog;
    let map = FeatureMap::for_catalog(scenario.state_dim, catalog);
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (ci, cluster) in scenario.clusters.iter().enumerate() {
        for a in catalog.action_ids() {
            for k in 0..catalog.contracts().len() {
                let c = ContractId(k);
                rows.push(map.features(
                    &cluster.center,
                    &catalog.action(a).features,
                    &catalog.contract(c).features,
                )?);
                targets.push(scenario.true_reward(ci, a, c));
            }
        }
    }
    let x = DMatrix::from_fn(rows.len(), map.dim(), |i, j| rows[i][j]);
    let y = DVector::from_vec(targets);
    let theta = x
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| LabError::Config(format!("true reward table: {e}")))?;
    RewardModel::new(map, theta.iter().copied().collect())
}
