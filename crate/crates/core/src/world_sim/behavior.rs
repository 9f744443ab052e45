use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{ArchetypeKind, Scenario};
use super::population::Clinician;
use crate::kernel::{logistic, ActionId, ContractId, Decision, PatientState, ReasonCode};

/// Per-interaction latent draws shared by the decision and the outcome:
/// patient-specific action effects and the outcome noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDraw {
    pub effects: Vec<f64>,
    pub noise: f64,
}

impl LatentDraw {
    pub fn sample<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Self {
        let sd = scenario.config.behavior.private_info_sd;
        let effects = (0..scenario.catalog.len())
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                sd * z
            })
            .collect();
        let z: f64 = rng.sample(StandardNormal);
        Self {
            effects,
            noise: scenario.config.outcome.noise_sd * z,
        }
    }

    pub fn neutral(n_actions: usize) -> Self {
        Self {
            effects: vec![0.0; n_actions],
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDecision {
    pub decision: Decision,
    pub executed: ActionId,
    pub reason: Option<ReasonCode>,
}

/// Reward the clinician believes an action has: the true reward shifted by
/// archetype bias, an execution-difficulty penalty, and whatever share of the
/// patient-specific effect the clinician perceives.
pub fn believed_reward(
    scenario: &Scenario,
    clinician: &Clinician,
    state: &PatientState,
    action: ActionId,
    contract: ContractId,
    draw: &LatentDraw,
) -> f64 {
    let arch = &scenario.archetypes[clinician.archetype];
    let exec = clinician.profile(state.domain_id).exec();
    let complexity = scenario.catalog.action(action).complexity;
    scenario.true_reward(state.cluster, action, contract) + arch.bias[action.index()]
        - arch.aversion * (1.0 - exec) * complexity
        + arch.insight * draw.effects[action.index()]
}

fn capture<R: Rng + ?Sized>(scenario: &Scenario, reason: ReasonCode, rng: &mut R) -> Option<ReasonCode> {
    let rate = scenario.config.behavior.reason_capture_rate;
    (rate > 0.0 && rng.random::<f64>() < rate).then_some(reason)
}

fn argmax_believed(
    candidates: impl Iterator<Item = ActionId>,
    believed: &[f64],
) -> Option<ActionId> {
    candidates.fold(None, |best, a| match best {
        Some(b) if believed[b.index()] >= believed[a.index()] => Some(b),
        _ => Some(a),
    })
}

/// Draws a clinician's response to a recommendation.
///
/// Order of mechanisms: workflow noise, automation bias, low-execution escape,
/// then a logistic accept on the believed margin over the default action.
/// Non-accepts become MODIFY toward the best believed action near the
/// recommendation, or REJECT toward the best believed action overall.
pub fn simulate_decision<R: Rng + ?Sized>(
    scenario: &Scenario,
    clinician: &Clinician,
    state: &PatientState,
    rec: ActionId,
    contract: ContractId,
    draw: &LatentDraw,
    rng: &mut R,
) -> SimulatedDecision {
    let b = &scenario.config.behavior;
    let arch = &scenario.archetypes[clinician.archetype];
    let catalog = &scenario.catalog;
    let default = catalog.default_action();
    let profile = clinician.profile(state.domain_id);

    if b.workflow_noise_rate > 0.0 && rng.random::<f64>() < b.workflow_noise_rate {
        return SimulatedDecision {
            decision: Decision::reject(None),
            executed: default,
            reason: Some(ReasonCode::NoTime),
        };
    }

    let believed: Vec<f64> = catalog
        .action_ids()
        .map(|a| believed_reward(scenario, clinician, state, a, contract, draw))
        .collect();

    let accept = if arch.kind == ArchetypeKind::AutomationBiased {
        rng.random::<f64>() < arch.accept_floor.unwrap_or(1.0)
    } else {
        if let Some(escape) = arch.escape_action {
            if escape != rec
                && profile.exec() < b.low_exec_threshold
                && catalog.action(rec).complexity >= b.complexity_threshold
                && rng.random::<f64>() < arch.escape_prob
            {
                return SimulatedDecision {
                    decision: Decision::reject(Some(escape)),
                    executed: escape,
                    reason: capture(scenario, ReasonCode::NotComfortable, rng),
                };
            }
        }
        let temperature = b.beta0 + b.beta1 * profile.kappa();
        let margin = believed[rec.index()] - believed[default.index()];
        rng.random::<f64>() < logistic(temperature * margin)
    };
    if accept {
        return SimulatedDecision {
            decision: Decision::accept(),
            executed: rec,
            reason: None,
        };
    }

    if b.p_modify > 0.0 && rng.random::<f64>() < b.p_modify {
        let near = catalog
            .action_ids()
            .filter(|&a| a != rec && a != default && catalog.proximity(a, rec) <= b.modify_radius);
        if let Some(alt) = argmax_believed(near, &believed) {
            return SimulatedDecision {
                decision: Decision::modify(alt),
                executed: alt,
                reason: capture(scenario, ReasonCode::Other, rng),
            };
        }
    }
    let alt = argmax_believed(catalog.action_ids().filter(|&a| a != rec), &believed)
        .unwrap_or(default);
    let hidden = b.unobserved_alternative_rate > 0.0 && rng.random::<f64>() < b.unobserved_alternative_rate;
    SimulatedDecision {
        decision: Decision::reject(if hidden { None } else { Some(alt) }),
        executed: alt,
        reason: capture(scenario, ReasonCode::Other, rng),
    }
}
