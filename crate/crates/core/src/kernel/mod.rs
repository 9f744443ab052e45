//! Shared domain types and the preference-model mathematics.

mod features;
mod preference;
mod types;

pub use features::{FeatureMap, RewardModel};
pub use preference::{
    accumulate_logsig, beta_of_kappa, log_logistic, logistic, logit_ceiling, p_accept, p_prefer,
    pair_loglik_and_grad, BetaForm, BetaParams, Situation, PROB_FLOOR,
};
pub use types::{
    ActionId, CapabilityParts, CapabilityProfile, Catalog, ClinicalAction, ClinicianId,
    ContractContext, ContractId, ContractKind, Decision, DecisionKind, DomainId,
    InteractionRecord, Outcome, PairKind, PatientId, PatientState, PreferencePair, ReasonCode,
};
