//! Joint estimation of the reward model and clinician capability by
//! alternating a capability-weighted preference fit with Beta-counting
//! capability updates, plus outcome anchoring.

pub mod alternate;
pub mod anchor;
pub mod e_step;
pub mod m_step;
pub mod pairs;
pub mod priors;

pub use alternate::{
    alternate, fit_with_kappa, train_with_anchor, AnchoredRun, TraceRow, TrainConfig, TrainState,
    TrainStatus, Weighting,
};
pub use anchor::{anchor_validate, AnchorConfig, AnchorReport};
pub use e_step::{agreement, e_step, identifiability, AgreementCounts, DomainDispersion, IdentifiabilityReport};
pub use m_step::{m_step, m_step_objective, MStepOptions, MStepResult, PairObjective};
pub use pairs::{build_pairs, record_class_weights, PairSet};
pub use priors::{cold_start_priors, CapabilityEstimate, ClinicianMeta, KappaTable, PriorConfig};
