use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernel::{BetaForm, BetaParams, Catalog, FeatureMap, InteractionRecord, RewardModel};

use super::anchor::{anchor_validate, AnchorConfig, AnchorReport};
use crate::world_sim::OutcomePair;
use super::e_step::{e_step, identifiability, IdentifiabilityReport};
use super::m_step::{m_step, MStepOptions, MStepResult};
use super::pairs::build_pairs;
use super::priors::{KappaTable, PriorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Every pair weighted by `beta0`, ignoring capability.
    Naive,
    /// Pairs weighted by `beta(kappa_hat)`.
    #[default]
    Kappa,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::Naive => "naive",
            Weighting::Kappa => "kappa",
        }
    }
}

fn d_beta0() -> f64 {
    0.1
}
fn d_beta1() -> f64 {
    5.0
}
fn d_rounds() -> usize {
    30
}
fn d_tol() -> f64 {
    1e-4
}
fn d_ident() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default = "d_beta0")]
    pub beta0: f64,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default)]
    pub beta_form: BetaForm,
    #[serde(default = "d_rounds")]
    pub max_rounds: usize,
    #[serde(default = "d_tol")]
    pub tol_kappa: f64,
    #[serde(default = "d_tol")]
    pub tol_theta: f64,
    /// Count logistic agreement probabilities instead of margin signs.
    #[serde(default)]
    pub soft_agreement: bool,
    /// Dispersion index below which a domain is reported non-identifiable.
    #[serde(default = "d_ident")]
    pub identifiability_threshold: f64,
    #[serde(default)]
    pub m_step: MStepOptions,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default)]
    pub anchor: AnchorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weighting: Weighting::default(),
            beta0: d_beta0(),
            beta1: d_beta1(),
            beta_form: BetaForm::default(),
            max_rounds: d_rounds(),
            tol_kappa: d_tol(),
            tol_theta: d_tol(),
            soft_agreement: false,
            identifiability_threshold: d_ident(),
            m_step: MStepOptions::default(),
            priors: PriorConfig::default(),
            anchor: AnchorConfig::default(),
        }
    }
}

impl TrainConfig {
    /// The inverse temperature used for pair weights under this weighting.
    pub fn beta(&self) -> Result<BetaParams> {
        match self.weighting {
            Weighting::Naive => BetaParams::uniform(self.beta0),
            Weighting::Kappa => BetaParams::with_form(self.beta0, self.beta1, self.beta_form),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    /// Zero-round budget; the state is the cold start.
    NotRun,
    Converged,
    MaxRounds,
    /// A delta grew on three consecutive rounds; alternation stopped.
    Oscillating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loglik: f64,
    pub theta_delta: f64,
    pub kappa_delta: f64,
    /// `round` for a regular alternation step, `reinit` where training was
    /// restarted with stronger priors after an anchor failure.
    pub event: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: RewardModel,
    pub kappa: KappaTable,
    pub iteration: usize,
    pub trace: Vec<TraceRow>,
    pub status: TrainStatus,
    pub identifiability: Option<IdentifiabilityReport>,
}

impl TrainState {
    pub fn cold_start(map: FeatureMap, priors: KappaTable) -> Self {
        Self {
            model: RewardModel::zeros(map),
            kappa: priors,
            iteration: 0,
            trace: Vec::new(),
            status: TrainStatus::NotRun,
            identifiability: None,
        }
    }
}

fn grew_three_times(series: &[f64]) -> bool {
    series.len() >= 4 && series[series.len() - 4..].windows(2).all(|w| w[1] > w[0])
}

/// Alternates M-steps (reward fit under the current capability estimates)
/// and E-steps (capability from agreement with the fitted reward) until both
/// the capability and parameter changes fall below tolerance. The first round
/// weights pairs by the prior means. Class weights are held fixed.
pub fn alternate(
    records: &[InteractionRecord],
    catalog: &Catalog,
    map: FeatureMap,
    class_weights: &[(f64, f64)],
    priors: &KappaTable,
    config: &TrainConfig,
) -> Result<TrainState> {
    continue_alternation(
        TrainState::cold_start(map, priors.clone()),
        records,
        catalog,
        class_weights,
        priors,
        config,
    )
}

fn continue_alternation(
    mut state: TrainState,
    records: &[InteractionRecord],
    catalog: &Catalog,
    class_weights: &[(f64, f64)],
    priors: &KappaTable,
    config: &TrainConfig,
) -> Result<TrainState> {
    let beta = config.beta()?;
    let cap_weights: Vec<f64> = class_weights.iter().map(|w| w.1).collect();
    let mut theta_deltas = Vec::new();
    let mut kappa_deltas = Vec::new();
    let mut last_counts = None;
    for _ in 0..config.max_rounds {
        let pairs = build_pairs(records, catalog, class_weights, |c, d| state.kappa.mean(c, d), &beta)?;
        let fit = m_step(&pairs.pairs, catalog, &state.model, &config.m_step)?;
        let (kappa, counts) = e_step(records, &cap_weights, &fit.model, catalog, priors, config.soft_agreement)?;
        let theta_delta = fit
            .model
            .theta()
            .iter()
            .zip(state.model.theta())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let kappa_delta = kappa.max_abs_change(&state.kappa);
        state.iteration += 1;
        state.trace.push(TraceRow {
            iteration: state.iteration,
            loglik: fit.objective,
            theta_delta,
            kappa_delta,
            event: "round".into(),
        });
        state.model = fit.model;
        state.kappa = kappa;
        last_counts = Some(counts);
        theta_deltas.push(theta_delta);
        kappa_deltas.push(kappa_delta);
        if kappa_delta < config.tol_kappa && theta_delta < config.tol_theta {
            state.status = TrainStatus::Converged;
            break;
        }
        if grew_three_times(&theta_deltas) || grew_three_times(&kappa_deltas) {
            state.status = TrainStatus::Oscillating;
            break;
        }
        state.status = TrainStatus::MaxRounds;
    }
    if let Some(counts) = last_counts {
        state.identifiability = Some(identifiability(&counts, &state.kappa, config.identifiability_threshold));
    }
    Ok(state)
}

/// Fits the reward model once with capability fixed, e.g. to ground truth.
pub fn fit_with_kappa(
    records: &[InteractionRecord],
    catalog: &Catalog,
    map: FeatureMap,
    class_weights: &[(f64, f64)],
    kappa: impl Fn(crate::kernel::ClinicianId, crate::kernel::DomainId) -> f64,
    beta: &BetaParams,
    options: &MStepOptions,
) -> Result<MStepResult> {
    let pairs = build_pairs(records, catalog, class_weights, kappa, beta)?;
    m_step(&pairs.pairs, catalog, &RewardModel::zeros(map), options)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchoredRun {
    pub state: TrainState,
    /// Anchor result of every attempt, in order.
    pub attempts: Vec<AnchorReport>,
    pub reinitialized: bool,
}

impl AnchoredRun {
    pub fn anchor(&self) -> &AnchorReport {
        self.attempts.last().expect("at least one anchor attempt")
    }
}

/// Alternation wrapped in outcome anchoring: a converged model that fails the
/// held-out outcome check is discarded and training restarts from the prior
/// means with the prior evidence multiplied by the configured factor.
pub fn train_with_anchor(
    records: &[InteractionRecord],
    catalog: &Catalog,
    map: FeatureMap,
    class_weights: &[(f64, f64)],
    priors: &KappaTable,
    heldout: &[OutcomePair],
    config: &TrainConfig,
) -> Result<AnchoredRun> {
    let a = &config.anchor;
    let mut state = alternate(records, catalog, map, class_weights, priors, config)?;
    let mut attempts = vec![anchor_validate(&state.model, catalog, heldout, a.threshold, a.min_pairs)?];
    let mut strength = 1.0;
    let mut reinitialized = false;
    while !attempts.last().is_some_and(|r| r.pass) && attempts.len() <= a.max_reinits {
        strength *= a.reinit_factor;
        let stronger = priors.strengthen(strength);
        let mut restart = TrainState::cold_start(map, stronger.clone());
        restart.iteration = state.iteration;
        restart.trace = std::mem::take(&mut state.trace);
        restart.trace.push(TraceRow {
            iteration: restart.iteration,
            loglik: f64::NAN,
            theta_delta: f64::NAN,
            kappa_delta: f64::NAN,
            event: "reinit".into(),
        });
        state = continue_alternation(restart, records, catalog, class_weights, &stronger, config)?;
        attempts.push(anchor_validate(&state.model, catalog, heldout, a.threshold, a.min_pairs)?);
        reinitialized = true;
    }
    Ok(AnchoredRun {
        state,
        attempts,
        reinitialized,
    })
}
