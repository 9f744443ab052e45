use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::behavior::{simulate_decision, LatentDraw};
use super::capability::evolve_capability;
use super::config::{ArchetypeKind, Scenario};
use super::outcome::{outcome_quality, simulate_outcome};
use super::population::{make_population, Clinician};
use super::rng::{stream, Stream};
use crate::error::{LabError, Result};
use crate::kernel::{
    ActionId, ClinicianId, ContractId, DomainId, InteractionRecord, PatientId, PatientState,
    RewardModel,
};

/// Chooses the action surfaced for a patient.
pub trait Recommender {
    fn recommend(
        &self,
        scenario: &Scenario,
        state: &PatientState,
        contract: ContractId,
        rng: &mut ChaCha8Rng,
    ) -> ActionId;
}

/// Samples from each cluster's configured guideline recommendation mix.
#[derive(Debug, Clone, Copy, Default)]
pub struct GuidelineRecommender;

impl Recommender for GuidelineRecommender {
    fn recommend(
        &self,
        scenario: &Scenario,
        state: &PatientState,
        _contract: ContractId,
        rng: &mut ChaCha8Rng,
    ) -> ActionId {
        let mix = &scenario.clusters[state.cluster].recommend;
        if mix.len() == 1 {
            return mix[0].0;
        }
        let u: f64 = rng.random();
        mix.iter()
            .find(|(_, cum)| u < *cum)
            .unwrap_or(&mix[mix.len() - 1])
            .0
    }
}

/// Surfaces the non-default action with the highest learned reward. With
/// probability `probe_rate` one of `probe_actions` is surfaced instead.
#[derive(Debug, Clone)]
pub struct ModelRecommender<'m> {
    pub model: &'m RewardModel,
    pub probe_actions: Vec<ActionId>,
    pub probe_rate: f64,
}

impl<'m> ModelRecommender<'m> {
    pub fn new(model: &'m RewardModel) -> Self {
        Self {
            model,
            probe_actions: Vec::new(),
            probe_rate: 0.0,
        }
    }
}

impl Recommender for ModelRecommender<'_> {
    fn recommend(
        &self,
        scenario: &Scenario,
        state: &PatientState,
        contract: ContractId,
        rng: &mut ChaCha8Rng,
    ) -> ActionId {
        let catalog = &scenario.catalog;
        if !self.probe_actions.is_empty() && self.probe_rate > 0.0 && rng.random::<f64>() < self.probe_rate {
            return self.probe_actions[rng.random_range(0..self.probe_actions.len())];
        }
        let mut best = None;
        let mut best_r = f64::NEG_INFINITY;
        for a in catalog.action_ids().filter(|&a| a != catalog.default_action()) {
            let r = self
                .model
                .reward_of(catalog, &state.features, a, contract)
                .unwrap_or(f64::NEG_INFINITY);
            if r > best_r {
                best_r = r;
                best = Some(a);
            }
        }
        best.unwrap_or(catalog.default_action())
    }
}

/// Ground-truth capability of one clinician.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicianTruth {
    pub id: ClinicianId,
    pub archetype: String,
    pub kind: ArchetypeKind,
    pub years_experience: f64,
    pub align: f64,
    /// `kappa[domain][t]` at the start of step `t`; the last entry is the
    /// value after the final step.
    pub kappa: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub seed: u64,
    pub domains: Vec<String>,
    pub clusters: Vec<String>,
    pub actions: Vec<String>,
    pub contracts: Vec<String>,
    /// `rewards[cluster][action][contract]`.
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub clinicians: Vec<ClinicianTruth>,
}

impl GroundTruth {
    pub fn initial_kappa(&self, clinician: ClinicianId, domain: DomainId) -> f64 {
        self.clinicians[clinician.index()].kappa[domain.index()][0]
    }

    pub fn final_kappa(&self, clinician: ClinicianId, domain: DomainId) -> f64 {
        *self.clinicians[clinician.index()].kappa[domain.index()]
            .last()
            .expect("trajectory has an initial entry")
    }

    pub fn kappa_at(&self, clinician: ClinicianId, domain: DomainId, t: u32) -> f64 {
        let traj = &self.clinicians[clinician.index()].kappa[domain.index()];
        traj[(t as usize).min(traj.len() - 1)]
    }
}

/// Simulated records with the simulator-only counterfactual quality of the
/// arm the clinician did not take: the recommendation for overrides, the
/// default action for accepts. `None` when the outcome was not observed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<InteractionRecord>,
    pub counterfactual: Vec<Option<f64>>,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, Copy)]
struct Patient {
    id: PatientId,
    cluster: usize,
    contract: ContractId,
}

/// Stepwise simulator. Steps can be driven by different recommenders, which is
/// how closed-loop experiments feed a learned model back into the stream.
pub struct Simulator<'s> {
    scenario: &'s Scenario,
    clinicians: Vec<Clinician>,
    panels: Vec<Vec<Patient>>,
    rng: ChaCha8Rng,
    t: u32,
    trajectories: Vec<Vec<Vec<f64>>>,
    records: Vec<InteractionRecord>,
    counterfactual: Vec<Option<f64>>,
}

impl<'s> Simulator<'s> {
    pub fn new(scenario: &'s Scenario) -> Result<Self> {
        Self::with_stream(scenario, Stream::Interactions)
    }

    /// A simulator over an independent interaction stream, e.g. for held-out data.
    pub fn with_stream(scenario: &'s Scenario, which: Stream) -> Result<Self> {
        let clinicians = make_population(scenario)?;
        let mut rng = stream(scenario.config.seed, which);
        let cluster_pick = WeightedIndex::new(scenario.clusters.iter().map(|c| c.weight))
            .map_err(|e| LabError::Config(format!("cluster weights: {e}")))?;
        let contract_pick = WeightedIndex::new(&scenario.contract_weights)
            .map_err(|e| LabError::Config(format!("contract weights: {e}")))?;
        let per = scenario.config.patients_per_clinician as u64;
        let panels = clinicians
            .iter()
            .map(|c| {
                (0..per)
                    .map(|j| Patient {
                        id: PatientId(c.id.0 as u64 * per + j),
                        cluster: cluster_pick.sample(&mut rng),
                        contract: ContractId(contract_pick.sample(&mut rng)),
                    })
                    .collect()
            })
            .collect();
        let trajectories = clinicians
            .iter()
            .map(|c| c.profiles.iter().map(|p| vec![p.kappa()]).collect())
            .collect();
        Ok(Self {
            scenario,
            clinicians,
            panels,
            rng,
            t: 0,
            trajectories,
            records: Vec::new(),
            counterfactual: Vec::new(),
        })
    }

    pub fn time(&self) -> u32 {
        self.t
    }

    pub fn clinicians(&self) -> &[Clinician] {
        &self.clinicians
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    fn draw_state(&mut self, patient: Patient) -> Result<PatientState> {
        let cluster = &self.scenario.clusters[patient.cluster];
        let noise = self.scenario.config.state_noise;
        let features = cluster
            .center
            .iter()
            .map(|&x| {
                if noise > 0.0 {
                    let z: f64 = self.rng.sample(StandardNormal);
                    x + noise * z
                } else {
                    x
                }
            })
            .collect();
        PatientState::new(patient.id, cluster.domain, patient.cluster, features, self.t)
    }

    /// Advances `steps` time steps, each clinician seeing
    /// `interactions_per_step` patients per step.
    pub fn run(&mut self, steps: u32, recommender: &dyn Recommender) -> Result<()> {
        let sc = self.scenario;
        let per_step = sc.config.interactions_per_step;
        let complexity_threshold = sc.config.behavior.complexity_threshold;
        let eta = sc.config.capability.eta;
        for _ in 0..steps {
            for ci in 0..self.clinicians.len() {
                for _ in 0..per_step {
                    let panel = &self.panels[ci];
                    let patient = panel[self.rng.random_range(0..panel.len())];
                    let state = self.draw_state(patient)?;
                    let rec = recommender.recommend(sc, &state, patient.contract, &mut self.rng);
                    let draw = LatentDraw::sample(sc, &mut self.rng);
                    let clinician = &self.clinicians[ci];
                    let sim = simulate_decision(
                        sc,
                        clinician,
                        &state,
                        rec,
                        patient.contract,
                        &draw,
                        &mut self.rng,
                    );
                    let out = simulate_outcome(sc, &state, sim.executed, patient.contract, &draw, &mut self.rng);
                    let other = if sim.decision.is_override() {
                        rec
                    } else {
                        sc.catalog.default_action()
                    };
                    let cf = outcome_quality(sc, &state, other, patient.contract, &draw);

                    let scaffolding = sc.archetypes[clinician.archetype].scaffolding;
                    if scaffolding > 0.0 {
                        let success = sc.catalog.action(sim.executed).complexity >= complexity_threshold
                            && !out.event;
                        let d = state.domain_id.index();
                        let profile = &self.clinicians[ci].profiles[d];
                        self.clinicians[ci].profiles[d] = evolve_capability(profile, scaffolding, success, eta)?;
                    }

                    let mut record = InteractionRecord::new(
                        state,
                        rec,
                        sim.decision,
                        sim.executed,
                        self.clinicians[ci].id,
                        patient.contract,
                        sim.reason,
                    )?;
                    let arrived = u64::from(self.t) + u64::from(sc.config.outcome_lag) < u64::from(sc.config.horizon);
                    let mut cf_seen = None;
                    if arrived {
                        if out.outcome.observed {
                            cf_seen = Some(cf);
                        }
                        record.attach_outcome(out.outcome)?;
                    }
                    self.records.push(record);
                    self.counterfactual.push(cf_seen);
                }
            }
            self.t += 1;
            for (ci, c) in self.clinicians.iter_mut().enumerate() {
                for (d, p) in c.profiles.iter_mut().enumerate() {
                    p.time_index = self.t;
                    self.trajectories[ci][d].push(p.kappa());
                }
            }
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let sc = self.scenario;
        GroundTruth {
            scenario: sc.config.name.clone(),
            seed: sc.config.seed,
            domains: sc.config.domains.clone(),
            clusters: sc.clusters.iter().map(|c| c.name.clone()).collect(),
            actions: sc.catalog.actions().iter().map(|a| a.name.clone()).collect(),
            contracts: sc.catalog.contracts().iter().map(|c| c.name.clone()).collect(),
            rewards: sc.rewards.clone(),
            clinicians: self
                .clinicians
                .iter()
                .zip(&self.trajectories)
                .map(|(c, traj)| {
                    let arch = &sc.archetypes[c.archetype];
                    ClinicianTruth {
                        id: c.id,
                        archetype: arch.name.clone(),
                        kind: c.kind,
                        years_experience: c.years_experience,
                        align: arch.align,
                        kappa: traj.clone(),
                    }
                })
                .collect(),
        }
    }

    pub fn into_dataset(self) -> Dataset {
        let truth = self.ground_truth();
        Dataset {
            records: self.records,
            counterfactual: self.counterfactual,
            truth,
        }
    }
}

/// Runs the scenario for its full horizon under the guideline recommender.
pub fn generate_dataset(scenario: &Scenario) -> Result<Dataset> {
    let mut sim = Simulator::new(scenario)?;
    sim.run(scenario.config.horizon, &GuidelineRecommender)?;
    Ok(sim.into_dataset())
}

/// Two actions for the same patient with the outcome quality of each arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomePair {
    pub state: Vec<f64>,
    pub contract: ContractId,
    pub first: ActionId,
    pub second: ActionId,
    pub first_quality: f64,
    pub second_quality: f64,
}

/// Held-out outcome-labeled pairs: patients drawn from the scenario's case
/// mix, two distinct catalog actions in random order, and the simulated
/// outcome of both arms under shared patient effects and noise.
pub fn counterfactual_pairs(scenario: &Scenario, n: usize) -> Result<Vec<OutcomePair>> {
    let mut rng = stream(scenario.config.seed, Stream::Heldout);
    let cluster_pick = WeightedIndex::new(scenario.clusters.iter().map(|c| c.weight))
        .map_err(|e| LabError::Config(format!("cluster weights: {e}")))?;
    let contract_pick = WeightedIndex::new(&scenario.contract_weights)
        .map_err(|e| LabError::Config(format!("contract weights: {e}")))?;
    let n_actions = scenario.catalog.len();
    if n_actions < 2 {
        return Ok(Vec::new());
    }
    let noise = scenario.config.state_noise;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let ci = cluster_pick.sample(&mut rng);
        let cluster = &scenario.clusters[ci];
        let contract = ContractId(contract_pick.sample(&mut rng));
        let features: Vec<f64> = cluster
            .center
            .iter()
            .map(|&x| {
                if noise > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    x + noise * z
                } else {
                    x
                }
            })
            .collect();
        let state = PatientState::new(PatientId(i as u64), cluster.domain, ci, features, 0)?;
        let first = rng.random_range(0..n_actions);
        let mut second = rng.random_range(0..n_actions - 1);
        if second >= first {
            second += 1;
        }
        let draw = LatentDraw::sample(scenario, &mut rng);
        let (first, second) = (ActionId(first), ActionId(second));
        out.push(OutcomePair {
            first_quality: outcome_quality(scenario, &state, first, contract, &draw),
            second_quality: outcome_quality(scenario, &state, second, contract, &draw),
            state: state.features,
            contract,
            first,
            second,
        });
    }
    Ok(out)
}
