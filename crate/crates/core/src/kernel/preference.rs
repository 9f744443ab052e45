//! Capability-conditioned Bradley-Terry preference model.
//!
//! Accept and preference probabilities are logistic in a reward margin scaled by
//! a capability-dependent inverse temperature `beta(kappa)`. The training
//! objective weights each pair's log-probability by `beta(kappa)` times the
//! pair's classification weight, so with `beta1 = 0` and unit class weights
//! it is exactly `beta0` times the plain Bradley-Terry log-likelihood.

use serde::{Deserialize, Serialize};

use super::features::RewardModel;
use super::types::{ActionId, Catalog, ContractId, PreferencePair};
use crate::error::{LabError, Result};

/// Probabilities are kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]` before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Logit at which `sigma(x) = 1 - PROB_FLOOR`.
pub fn logit_ceiling() -> f64 {
    ((1.0 - PROB_FLOOR) / PROB_FLOOR).ln()
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln sigma(x)` without overflow for large `|x|`.
pub fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaForm {
    /// `beta0 + beta1 * kappa`
    #[default]
    Linear,
    /// `beta0 + beta1 * sigma(kappa)`
    Sigmoid,
}

/// Capability-dependent inverse temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub beta0: f64,
    pub beta1: f64,
    #[serde(default)]
    pub form: BetaForm,
}

impl BetaParams {
    pub fn new(beta0: f64, beta1: f64) -> Result<Self> {
        Self::with_form(beta0, beta1, BetaForm::Linear)
    }

    pub fn with_form(beta0: f64, beta1: f64, form: BetaForm) -> Result<Self> {
        let p = Self { beta0, beta1, form };
        p.validate()?;
        Ok(p)
    }

    /// Uniform weighting: `beta(kappa) = beta0` for every clinician.
    pub fn uniform(beta0: f64) -> Result<Self> {
        Self::new(beta0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return Err(LabError::OutOfRange {
                name: "beta0",
                value: self.beta0,
                range: "(0, inf)",
            });
        }
        if !(self.beta1 >= 0.0 && self.beta1.is_finite()) {
            return Err(LabError::OutOfRange {
                name: "beta1",
                value: self.beta1,
                range: "[0, inf)",
            });
        }
        Ok(())
    }

    pub fn at(&self, kappa: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&kappa) {
            return Err(LabError::OutOfRange {
                name: "kappa",
                value: kappa,
                range: "[0, 1]",
            });
        }
        Ok(match self.form {
            BetaForm::Linear => self.beta0 + self.beta1 * kappa,
            BetaForm::Sigmoid => self.beta0 + self.beta1 * logistic(kappa),
        })
    }
}

/// `beta0 + beta1 * kappa`.
pub fn beta_of_kappa(kappa: f64, beta0: f64, beta1: f64) -> Result<f64> {
    BetaParams::new(beta0, beta1)?.at(kappa)
}

/// Where a decision is made: the catalog, the encoded state, and the contract.
#[derive(Debug, Clone, Copy)]
pub struct Situation<'a> {
    pub catalog: &'a Catalog,
    pub state: &'a [f64],
    pub contract: ContractId,
}

/// Probability that a clinician with capability `kappa` accepts `rec` over
/// doing `default`.
pub fn p_accept(
    model: &RewardModel,
    at: &Situation<'_>,
    rec: ActionId,
    default: ActionId,
    kappa: f64,
    beta: &BetaParams,
) -> Result<f64> {
    let margin = model.margin(at.catalog, at.state, rec, default, at.contract)?;
    Ok(logistic(beta.at(kappa)? * margin))
}

/// Probability that `alt` is preferred to `rec`.
pub fn p_prefer(
    model: &RewardModel,
    at: &Situation<'_>,
    alt: ActionId,
    rec: ActionId,
    kappa: f64,
    beta: &BetaParams,
) -> Result<f64> {
    if alt == rec {
        return Err(LabError::IdenticalActions(alt.index()));
    }
    let margin = model.margin(at.catalog, at.state, alt, rec, at.contract)?;
    Ok(logistic(beta.at(kappa)? * margin))
}

/// `weight * ln sigma(theta . diff)` and its gradient in theta, accumulated into `grad`.
///
/// Margins beyond the probability clamp saturate: the log-likelihood is flat
/// there and the gradient is evaluated at the clamped probability.
pub fn accumulate_logsig(theta: &[f64], diff: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
    if weight == 0.0 {
        return 0.0;
    }
    let z: f64 = theta.iter().zip(diff).map(|(t, d)| t * d).sum();
    let bound = logit_ceiling();
    let zc = z.clamp(-bound, bound);
    let scale = weight * (1.0 - logistic(zc));
    for (g, d) in grad.iter_mut().zip(diff) {
        *g += scale * d;
    }
    weight * log_logistic(zc)
}

/// Weighted log-likelihood of one preference pair and its exact gradient in theta.
///
/// The weight is `beta(kappa) * reward_class_weight`.
pub fn pair_loglik_and_grad(
    pair: &PreferencePair,
    model: &RewardModel,
    catalog: &Catalog,
    kappa: f64,
    beta: &BetaParams,
) -> Result<(f64, Vec<f64>)> {
    pair.validate()?;
    let weight = beta.at(kappa)? * pair.reward_class_weight;
    let diff = model.map().pair_difference(
        catalog,
        &pair.state.features,
        pair.preferred,
        pair.dispreferred,
        pair.contract,
    )?;
    let mut grad = vec![0.0; diff.len()];
    let ll = accumulate_logsig(model.theta(), &diff, weight, &mut grad);
    Ok((ll, grad))
}
