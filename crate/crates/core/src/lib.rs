//! Capability-aware learning from clinician overrides of recommendations.
//!
//! Modules, bottom-up: [`kernel`] holds the data model and the
//! capability-weighted Bradley-Terry likelihood, [`world_sim`] generates
//! synthetic populations with known ground truth, [`classifier`] types
//! overrides, [`dual_learner`] alternates reward and capability estimation,
//! [`monitors`] computes stratified rates and failure-mode monitors, and
//! [`experiment`] wires everything into reproducible runs.

pub mod classifier;
pub mod dual_learner;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod monitors;
pub mod stats;
pub mod world_sim;

pub use error::{LabError, Result};
