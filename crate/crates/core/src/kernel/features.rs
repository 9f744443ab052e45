use serde::{Deserialize, Serialize};

use super::types::{ActionId, Catalog, ContractId};
use crate::error::{LabError, Result};

/// Layout of the reward feature vector
/// `f(s, a, c) = [phi(s) (x) psi(a), psi(a), gamma(c) (x) psi(a)]`.
///
/// Outer products are stored row-major with the action coordinate varying
/// fastest, so block `i` of the first segment is `phi_i * psi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub state_dim: usize,
    pub action_dim: usize,
    pub contract_dim: usize,
}

impl FeatureMap {
    pub fn new(state_dim: usize, action_dim: usize, contract_dim: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            contract_dim,
        }
    }

    pub fn for_catalog(state_dim: usize, catalog: &Catalog) -> Self {
        Self::new(state_dim, catalog.action_dim(), catalog.contract_dim())
    }

    pub fn dim(&self) -> usize {
        self.state_dim * self.action_dim + self.action_dim + self.contract_dim * self.action_dim
    }

    fn check(&self, state: &[f64], action: &[f64], contract: &[f64]) -> Result<()> {
        for (what, expected, got) in [
            ("state features", self.state_dim, state.len()),
            ("action features", self.action_dim, action.len()),
            ("contract features", self.contract_dim, contract.len()),
        ] {
            if expected != got {
                return Err(LabError::DimensionMismatch { what, expected, got });
            }
        }
        Ok(())
    }

    /// Writes `f(s, a, c)` into `out`, which must have length `dim()`.
    pub fn write_features(
        &self,
        state: &[f64],
        action: &[f64],
        contract: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        self.check(state, action, contract)?;
        if out.len() != self.dim() {
            return Err(LabError::DimensionMismatch {
                what: "feature buffer",
                expected: self.dim(),
                got: out.len(),
            });
        }
        let a = self.action_dim;
        let mut offset = 0;
        for &s in state {
            for (o, &x) in out[offset..offset + a].iter_mut().zip(action) {
                *o = s * x;
            }
            offset += a;
        }
        out[offset..offset + a].copy_from_slice(action);
        offset += a;
        for &c in contract {
            for (o, &x) in out[offset..offset + a].iter_mut().zip(action) {
                *o = c * x;
            }
            offset += a;
        }
        Ok(())
    }

    pub fn features(&self, state: &[f64], action: &[f64], contract: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.write_features(state, action, contract, &mut out)?;
        Ok(out)
    }

    /// `f(s, preferred, c) - f(s, dispreferred, c)` for catalog actions.
    pub fn pair_difference(
        &self,
        catalog: &Catalog,
        state: &[f64],
        preferred: ActionId,
        dispreferred: ActionId,
        contract: ContractId,
    ) -> Result<Vec<f64>> {
        let c = &catalog.contract(contract).features;
        let mut hi = self.features(state, &catalog.action(preferred).features, c)?;
        let lo = self.features(state, &catalog.action(dispreferred).features, c)?;
        for (h, l) in hi.iter_mut().zip(&lo) {
            *h -= l;
        }
        Ok(hi)
    }
}

/// Linear-in-parameters reward model `R_theta(s, a, c) = theta . f(s, a, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    theta: Vec<f64>,
    map: FeatureMap,
}

impl RewardModel {
    pub fn new(map: FeatureMap, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != map.dim() {
            return Err(LabError::DimensionMismatch {
                what: "theta",
                expected: map.dim(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(LabError::NonFinite("theta"));
        }
        Ok(Self { theta, map })
    }

    pub fn zeros(map: FeatureMap) -> Self {
        Self {
            theta: vec![0.0; map.dim()],
            map,
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn map(&self) -> FeatureMap {
        self.map
    }

    /// Reward for raw encodings. Evaluated without materialising `f`.
    pub fn reward(&self, state: &[f64], action: &[f64], contract: &[f64]) -> Result<f64> {
        self.map.check(state, action, contract)?;
        let a_dim = self.map.action_dim;
        let s_block = self.map.state_dim * a_dim;
        let mut total = 0.0;
        for (j, &aj) in action.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            let mut coef = self.theta[s_block + j];
            for (i, &si) in state.iter().enumerate() {
                coef += si * self.theta[i * a_dim + j];
            }
            for (k, &ck) in contract.iter().enumerate() {
                coef += ck * self.theta[s_block + a_dim + k * a_dim + j];
            }
            total += aj * coef;
        }
        Ok(total)
    }

    pub fn reward_of(
        &self,
        catalog: &Catalog,
        state: &[f64],
        action: ActionId,
        contract: ContractId,
    ) -> Result<f64> {
        self.reward(
            state,
            &catalog.action(action).features,
            &catalog.contract(contract).features,
        )
    }

    /// `R(s, a, c) - R(s, b, c)`.
    pub fn margin(
        &self,
        catalog: &Catalog,
        state: &[f64],
        a: ActionId,
        b: ActionId,
        contract: ContractId,
    ) -> Result<f64> {
        Ok(self.reward_of(catalog, state, a, contract)? - self.reward_of(catalog, state, b, contract)?)
    }
}
