use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::kernel::{
    ActionId, Catalog, ClinicalAction, ContractContext, ContractId, ContractKind, DomainId,
};

fn one_u32() -> u32 {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn default_panel() -> u32 {
    200
}

/// Simulated scenario: population, catalog, ground-truth rewards and the
/// behavioural and outcome models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Number of simulated time steps.
    pub horizon: u32,
    #[serde(default = "one_u32")]
    pub interactions_per_step: u32,
    #[serde(default = "default_panel")]
    pub patients_per_clinician: u32,
    #[serde(default)]
    pub state_noise: f64,
    /// Follow-up horizon, in steps, before an outcome can be observed.
    #[serde(default)]
    pub outcome_lag: u32,
    /// Probability that an outcome is captured once its lag has elapsed.
    #[serde(default = "one_f64")]
    pub observability: f64,
    pub domains: Vec<String>,
    pub clusters: Vec<ClusterSpec>,
    pub actions: Vec<ActionSpec>,
    pub contracts: Vec<ContractSpec>,
    pub archetypes: Vec<ArchetypeSpec>,
    #[serde(default)]
    pub behavior: BehaviorConfig,
    #[serde(default)]
    pub outcome: OutcomeConfig,
    #[serde(default)]
    pub capability: CapabilityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub name: String,
    pub domain: String,
    #[serde(default = "one_f64")]
    pub weight: f64,
    /// State-feature centre; defaults to the one-hot vector of the cluster.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// True reward per action name; unlisted actions have reward 0.
    #[serde(default)]
    pub rewards: BTreeMap<String, f64>,
    /// Recommendation mix surfaced by the guideline prior. Empty means the
    /// cluster's best non-default action.
    #[serde(default)]
    pub recommend: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub name: String,
    #[serde(default)]
    pub class: Option<String>,
    #[serde(default)]
    pub complexity: f64,
    /// Action encoding; defaults to one-hot over the catalog.
    #[serde(default)]
    pub features: Option<Vec<f64>>,
    /// The no-intervention baseline. Exactly one action must set this.
    #[serde(default)]
    pub default: bool,
    /// Guideline benchmark marks this action as first-line.
    #[serde(default)]
    pub first_line: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractSpec {
    pub name: String,
    pub kind: ContractKind,
    #[serde(default = "one_f64")]
    pub weight: f64,
    #[serde(default)]
    pub features: Option<Vec<f64>>,
    /// Additive reward shift per action under this contract.
    #[serde(default)]
    pub reward_adjust: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchetypeKind {
    Expert,
    Hesitant,
    AutomationBiased,
    Custom,
}

impl ArchetypeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchetypeKind::Expert => "expert",
            ArchetypeKind::Hesitant => "hesitant",
            ArchetypeKind::AutomationBiased => "automation_biased",
            ArchetypeKind::Custom => "custom",
        }
    }
}

fn default_escape_prob() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeSpec {
    pub name: String,
    pub kind: ArchetypeKind,
    pub count: u32,
    pub exec: f64,
    pub align: f64,
    /// Per-clinician uniform jitter applied to `exec`.
    #[serde(default)]
    pub exec_jitter: f64,
    /// Per-domain execution capability overrides.
    #[serde(default)]
    pub exec_by_domain: BTreeMap<String, f64>,
    /// Acceptance probability regardless of margin; automation-biased only.
    #[serde(default)]
    pub accept_floor: Option<f64>,
    /// Action taken instead of a complex recommendation when execution
    /// capability is below threshold (e.g. a referral).
    #[serde(default)]
    pub escape_action: Option<String>,
    #[serde(default = "default_escape_prob")]
    pub escape_prob: f64,
    /// Believed-reward penalty `aversion * (1 - exec) * complexity`.
    #[serde(default)]
    pub aversion: f64,
    /// Share of the patient-specific effects the clinician perceives.
    #[serde(default)]
    pub insight: f64,
    #[serde(default)]
    pub years_experience: f64,
    /// Additive believed-reward shift per action.
    #[serde(default)]
    pub bias: BTreeMap<String, f64>,
    /// Scaffolding level for this archetype; falls back to the scenario level.
    #[serde(default)]
    pub scaffolding: Option<f64>,
}

fn d_beta0() -> f64 {
    0.5
}
fn d_beta1() -> f64 {
    4.0
}
fn d_half() -> f64 {
    0.5
}
fn d_radius() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorConfig {
    /// Behavioural inverse temperature `beta0 + beta1 * kappa` of the population.
    #[serde(default = "d_beta0")]
    pub beta0: f64,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_half")]
    pub low_exec_threshold: f64,
    #[serde(default = "d_half")]
    pub complexity_threshold: f64,
    /// Share of non-accepts that become MODIFY (when a nearby action exists).
    #[serde(default)]
    pub p_modify: f64,
    #[serde(default = "d_radius")]
    pub modify_radius: f64,
    /// Share of REJECTs whose alternative is not captured.
    #[serde(default)]
    pub unobserved_alternative_rate: f64,
    /// Rate of workflow overrides injected as noise.
    #[serde(default)]
    pub workflow_noise_rate: f64,
    /// Probability a structured reason is captured with an override.
    #[serde(default)]
    pub reason_capture_rate: f64,
    /// Standard deviation of patient-specific action effects.
    #[serde(default)]
    pub private_info_sd: f64,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            beta0: d_beta0(),
            beta1: d_beta1(),
            low_exec_threshold: d_half(),
            complexity_threshold: d_half(),
            p_modify: 0.0,
            modify_radius: d_radius(),
            unobserved_alternative_rate: 0.0,
            workflow_noise_rate: 0.0,
            reason_capture_rate: 0.0,
            private_info_sd: 0.0,
        }
    }
}

fn d_base() -> f64 {
    0.2
}
fn d_gain() -> f64 {
    0.6
}
fn d_noise() -> f64 {
    0.05
}
fn d_event() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeConfig {
    #[serde(default = "d_base")]
    pub base: f64,
    #[serde(default = "d_gain")]
    pub gain: f64,
    #[serde(default = "d_noise")]
    pub noise_sd: f64,
    /// Quality below which the outcome counts as an adverse event.
    #[serde(default = "d_event")]
    pub event_threshold: f64,
}

impl Default for OutcomeConfig {
    fn default() -> Self {
        Self {
            base: d_base(),
            gain: d_gain(),
            noise_sd: d_noise(),
            event_threshold: d_event(),
        }
    }
}

fn d_eta() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapabilityConfig {
    #[serde(default = "d_eta")]
    pub eta: f64,
    /// Scaffolding level in [0, 1]; 0 freezes capability.
    #[serde(default)]
    pub scaffolding: f64,
}

impl Default for CapabilityConfig {
    fn default() -> Self {
        Self {
            eta: d_eta(),
            scaffolding: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub name: String,
    pub domain: DomainId,
    pub weight: f64,
    pub center: Vec<f64>,
    /// Guideline recommendation mix as cumulative (action, probability).
    pub recommend: Vec<(ActionId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archetype {
    pub name: String,
    pub kind: ArchetypeKind,
    pub count: u32,
    pub exec: f64,
    pub align: f64,
    pub exec_jitter: f64,
    pub exec_by_domain: Vec<Option<f64>>,
    pub accept_floor: Option<f64>,
    pub escape_action: Option<ActionId>,
    pub escape_prob: f64,
    pub aversion: f64,
    pub insight: f64,
    pub years_experience: f64,
    pub bias: Vec<f64>,
    pub scaffolding: f64,
}

/// A validated scenario with names resolved to ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub catalog: Catalog,
    pub clusters: Vec<Cluster>,
    pub archetypes: Vec<Archetype>,
    pub contract_weights: Vec<f64>,
    /// True reward `R*[cluster][action][contract]`.
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub first_line: Vec<bool>,
    pub state_dim: usize,
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(LabError::Config(format!("{name} = {v} must lie in [0, 1]")))
    }
}

fn check_unique<'a>(kind: &str, names: impl Iterator<Item = &'a String>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(LabError::Config(format!("duplicate {kind} name `{n}`")));
        }
    }
    Ok(())
}

fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        let c = &config;
        if c.domains.is_empty() || c.clusters.is_empty() || c.actions.is_empty() {
            return Err(LabError::Config(
                "scenario needs at least one domain, cluster and action".into(),
            ));
        }
        if c.contracts.is_empty() {
            return Err(LabError::Config("scenario needs at least one contract".into()));
        }
        check_unique("domain", c.domains.iter())?;
        check_unique("cluster", c.clusters.iter().map(|x| &x.name))?;
        check_unique("action", c.actions.iter().map(|x| &x.name))?;
        check_unique("contract", c.contracts.iter().map(|x| &x.name))?;
        check_unique("archetype", c.archetypes.iter().map(|x| &x.name))?;

        check_prob("observability", c.observability)?;
        if !(c.state_noise >= 0.0) {
            return Err(LabError::Config("state_noise must be non-negative".into()));
        }
        if c.patients_per_clinician == 0 {
            return Err(LabError::Config("patients_per_clinician must be positive".into()));
        }
        let b = &c.behavior;
        for (name, v) in [
            ("behavior.low_exec_threshold", b.low_exec_threshold),
            ("behavior.p_modify", b.p_modify),
            ("behavior.unobserved_alternative_rate", b.unobserved_alternative_rate),
            ("behavior.workflow_noise_rate", b.workflow_noise_rate),
            ("behavior.reason_capture_rate", b.reason_capture_rate),
        ] {
            check_prob(name, v)?;
        }
        if !(b.beta0 > 0.0 && b.beta1 >= 0.0) {
            return Err(LabError::Config("behavior.beta0 must be > 0 and beta1 >= 0".into()));
        }
        if !(b.private_info_sd >= 0.0 && b.modify_radius >= 0.0) {
            return Err(LabError::Config(
                "behavior.private_info_sd and modify_radius must be non-negative".into(),
            ));
        }
        if !(c.outcome.noise_sd >= 0.0) {
            return Err(LabError::Config("outcome.noise_sd must be non-negative".into()));
        }
        if !(c.capability.eta > 0.0 && c.capability.eta < 1.0) {
            return Err(LabError::Config("capability.eta must lie in (0, 1)".into()));
        }
        check_prob("capability.scaffolding", c.capability.scaffolding)?;

        // actions
        let defaults: Vec<usize> = c
            .actions
            .iter()
            .enumerate()
            .filter(|(_, a)| a.default)
            .map(|(i, _)| i)
            .collect();
        if defaults.len() != 1 {
            return Err(LabError::Config(format!(
                "exactly one default action required, found {}",
                defaults.len()
            )));
        }
        let n_actions = c.actions.len();
        let explicit_action_features = c.actions.iter().filter(|a| a.features.is_some()).count();
        if explicit_action_features != 0 && explicit_action_features != n_actions {
            return Err(LabError::Config(
                "either every action lists features or none does".into(),
            ));
        }
        let actions: Vec<ClinicalAction> = c
            .actions
            .iter()
            .enumerate()
            .map(|(i, a)| ClinicalAction {
                id: ActionId(i),
                name: a.name.clone(),
                class: a.class.clone().unwrap_or_else(|| a.name.clone()),
                features: a.features.clone().unwrap_or_else(|| one_hot(i, n_actions)),
                complexity: a.complexity,
            })
            .collect();
        let n_contracts = c.contracts.len();
        let explicit_contract_features = c.contracts.iter().filter(|x| x.features.is_some()).count();
        if explicit_contract_features != 0 && explicit_contract_features != n_contracts {
            return Err(LabError::Config(
                "either every contract lists features or none does".into(),
            ));
        }
        let contracts: Vec<ContractContext> = c
            .contracts
            .iter()
            .enumerate()
            .map(|(i, x)| ContractContext {
                id: ContractId(i),
                name: x.name.clone(),
                kind: x.kind,
                features: x.features.clone().unwrap_or_else(|| one_hot(i, n_contracts)),
            })
            .collect();
        let catalog = Catalog::new(actions, contracts, ActionId(defaults[0]))?;

        let action_id = |name: &str, ctx: &str| -> Result<ActionId> {
            catalog.action_by_name(name).ok_or_else(|| {
                LabError::Config(format!("{ctx} references unknown action `{name}`"))
            })
        };
        let domain_id = |name: &str, ctx: &str| -> Result<DomainId> {
            c.domains
                .iter()
                .position(|d| d == name)
                .map(DomainId)
                .ok_or_else(|| LabError::Config(format!("{ctx} references unknown domain `{name}`")))
        };

        // clusters
        let n_clusters = c.clusters.len();
        let explicit_centers = c.clusters.iter().filter(|x| x.center.is_some()).count();
        if explicit_centers != 0 && explicit_centers != n_clusters {
            return Err(LabError::Config(
                "either every cluster lists a center or none does".into(),
            ));
        }
        let mut clusters = Vec::with_capacity(n_clusters);
        let mut rewards = Vec::with_capacity(n_clusters);
        for (ci, spec) in c.clusters.iter().enumerate() {
            let ctx = format!("cluster `{}`", spec.name);
            if !(spec.weight > 0.0 && spec.weight.is_finite()) {
                return Err(LabError::Config(format!("{ctx}: weight must be positive")));
            }
            let mut base = vec![0.0; n_actions];
            for (name, &r) in &spec.rewards {
                if !r.is_finite() {
                    return Err(LabError::Config(format!("{ctx}: non-finite reward")));
                }
                base[action_id(name, &ctx)?.index()] = r;
            }
            let mut recommend = Vec::new();
            let mut total = 0.0;
            for (name, &p) in &spec.recommend {
                if !(p >= 0.0 && p.is_finite()) {
                    return Err(LabError::Config(format!("{ctx}: negative recommendation weight")));
                }
                let id = action_id(name, &ctx)?;
                if id == catalog.default_action() {
                    return Err(LabError::Config(format!(
                        "{ctx}: the default action cannot be recommended"
                    )));
                }
                total += p;
                recommend.push((id, p));
            }
            if recommend.is_empty() {
                let best = catalog
                    .action_ids()
                    .filter(|&a| a != catalog.default_action())
                    .max_by(|&a, &b| base[a.index()].total_cmp(&base[b.index()]).then(b.cmp(&a)))
                    .ok_or_else(|| LabError::Config(format!("{ctx}: nothing to recommend")))?;
                recommend.push((best, 1.0));
                total = 1.0;
            }
            if total <= 0.0 {
                return Err(LabError::Config(format!("{ctx}: recommendation mix sums to 0")));
            }
            let mut acc = 0.0;
            for entry in &mut recommend {
                acc += entry.1 / total;
                entry.1 = acc;
            }
            let per_contract: Vec<Vec<f64>> = (0..n_actions)
                .map(|a| {
                    c.contracts
                        .iter()
                        .map(|ct| {
                            base[a] + ct.reward_adjust.get(&c.actions[a].name).copied().unwrap_or(0.0)
                        })
                        .collect()
                })
                .collect();
            for ct in &c.contracts {
                for name in ct.reward_adjust.keys() {
                    action_id(name, &format!("contract `{}`", ct.name))?;
                }
            }
            rewards.push(per_contract);
            clusters.push(Cluster {
                name: spec.name.clone(),
                domain: domain_id(&spec.domain, &ctx)?,
                weight: spec.weight,
                center: spec.center.clone().unwrap_or_else(|| one_hot(ci, n_clusters)),
                recommend,
            });
        }
        let state_dim = clusters[0].center.len();
        if clusters.iter().any(|cl| cl.center.len() != state_dim) {
            return Err(LabError::Config("cluster centers differ in length".into()));
        }
        for ct in &c.contracts {
            if !(ct.weight > 0.0 && ct.weight.is_finite()) {
                return Err(LabError::Config(format!(
                    "contract `{}`: weight must be positive",
                    ct.name
                )));
            }
        }

        // archetypes
        let mut archetypes = Vec::with_capacity(c.archetypes.len());
        for a in &c.archetypes {
            let ctx = format!("archetype `{}`", a.name);
            check_prob(&format!("{ctx}.exec"), a.exec)?;
            check_prob(&format!("{ctx}.align"), a.align)?;
            check_prob(&format!("{ctx}.escape_prob"), a.escape_prob)?;
            check_prob(&format!("{ctx}.insight"), a.insight)?;
            if !(a.exec_jitter >= 0.0 && a.aversion >= 0.0 && a.years_experience >= 0.0) {
                return Err(LabError::Config(format!(
                    "{ctx}: jitter, aversion and years_experience must be non-negative"
                )));
            }
            match (a.kind, a.accept_floor) {
                (ArchetypeKind::AutomationBiased, Some(f)) => check_prob(&format!("{ctx}.accept_floor"), f)?,
                (ArchetypeKind::AutomationBiased, None) => {
                    return Err(LabError::Config(format!(
                        "{ctx}: automation_biased archetypes need accept_floor"
                    )))
                }
                (_, Some(_)) => {
                    return Err(LabError::Config(format!(
                        "{ctx}: accept_floor is only valid for automation_biased archetypes"
                    )))
                }
                (_, None) => {}
            }
            let mut exec_by_domain = vec![None; c.domains.len()];
            for (d, &v) in &a.exec_by_domain {
                check_prob(&format!("{ctx}.exec_by_domain.{d}"), v)?;
                exec_by_domain[domain_id(d, &ctx)?.index()] = Some(v);
            }
            let mut bias = vec![0.0; n_actions];
            for (name, &v) in &a.bias {
                bias[action_id(name, &ctx)?.index()] = v;
            }
            let escape_action = a
                .escape_action
                .as_deref()
                .map(|n| action_id(n, &ctx))
                .transpose()?;
            let scaffolding = a.scaffolding.unwrap_or(c.capability.scaffolding);
            check_prob(&format!("{ctx}.scaffolding"), scaffolding)?;
            archetypes.push(Archetype {
                name: a.name.clone(),
                kind: a.kind,
                count: a.count,
                exec: a.exec,
                align: a.align,
                exec_jitter: a.exec_jitter,
                exec_by_domain,
                accept_floor: a.accept_floor,
                escape_action,
                escape_prob: a.escape_prob,
                aversion: a.aversion,
                insight: a.insight,
                years_experience: a.years_experience,
                bias,
                scaffolding,
            });
        }

        let first_line = c.actions.iter().map(|a| a.first_line).collect();
        let contract_weights = c.contracts.iter().map(|x| x.weight).collect();
        Ok(Self {
            config,
            catalog,
            clusters,
            archetypes,
            contract_weights,
            rewards,
            first_line,
            state_dim,
        })
    }

    pub fn true_reward(&self, cluster: usize, action: ActionId, contract: ContractId) -> f64 {
        self.rewards[cluster][action.index()][contract.index()]
    }

    /// Range of the true reward table, used to normalise outcome quality.
    pub fn reward_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in self.rewards.iter().flatten().flatten() {
            lo = lo.min(*r);
            hi = hi.max(*r);
        }
        (lo, hi)
    }

    pub fn domain_count(&self) -> usize {
        self.config.domains.len()
    }

    pub fn population_size(&self) -> usize {
        self.archetypes.iter().map(|a| a.count as usize).sum()
    }
}
