//! Synthetic clinician populations, decisions, outcomes and capability
//! dynamics with fully known ground truth.

pub mod behavior;
pub mod capability;
pub mod config;
pub mod dataset;
pub mod outcome;
pub mod population;
pub mod rng;
pub mod truth;

pub use behavior::{believed_reward, simulate_decision, LatentDraw, SimulatedDecision};
pub use capability::evolve_capability;
pub use config::{
    ActionSpec, Archetype, ArchetypeKind, ArchetypeSpec, BehaviorConfig, CapabilityConfig, Cluster,
    ClusterSpec, ContractSpec, OutcomeConfig, Scenario, ScenarioConfig,
};
pub use dataset::{
    counterfactual_pairs, generate_dataset, ClinicianTruth, Dataset, GroundTruth, GuidelineRecommender,
    ModelRecommender, OutcomePair, Recommender, Simulator,
};
pub use outcome::{outcome_quality, simulate_outcome, SimulatedOutcome};
pub use population::{make_population, Clinician};
pub use rng::{stream, Stream};
pub use truth::truth_model;
