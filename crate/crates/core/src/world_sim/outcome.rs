use rand::Rng;

use super::behavior::LatentDraw;
use super::config::Scenario;
use crate::kernel::{ActionId, ContractId, Outcome, PatientState};

/// Outcome quality of `action` for this patient, observed or not.
///
/// `clamp01(base + gain * normalised(R* + effect) + noise)`, where the true
/// reward is normalised by the range of the reward table. The noise term is
/// shared by every arm of the same interaction.
pub fn outcome_quality(
    scenario: &Scenario,
    state: &PatientState,
    action: ActionId,
    contract: ContractId,
    draw: &LatentDraw,
) -> f64 {
    let o = &scenario.config.outcome;
    let (lo, hi) = scenario.reward_range();
    let r = scenario.true_reward(state.cluster, action, contract) + draw.effects[action.index()];
    let normalised = if hi > lo { (r - lo) / (hi - lo) } else { 0.5 };
    (o.base + o.gain * normalised + draw.noise).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedOutcome {
    /// What the record will carry.
    pub outcome: Outcome,
    /// The realised quality and adverse-event flag, known to the simulator
    /// even when not observed.
    pub quality: f64,
    pub event: bool,
}

pub fn simulate_outcome<R: Rng + ?Sized>(
    scenario: &Scenario,
    state: &PatientState,
    executed: ActionId,
    contract: ContractId,
    draw: &LatentDraw,
    rng: &mut R,
) -> SimulatedOutcome {
    let quality = outcome_quality(scenario, state, executed, contract, draw);
    let event = quality < scenario.config.outcome.event_threshold;
    let lag = scenario.config.outcome_lag;
    let p = scenario.config.observability;
    let observed = p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p);
    let outcome = if observed {
        Outcome::observed(quality, event, lag).expect("quality is clamped to [0, 1]")
    } else {
        Outcome::missing(lag)
    };
    SimulatedOutcome {
        outcome,
        quality,
        event,
    }
}
