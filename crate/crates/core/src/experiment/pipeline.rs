use serde::{Deserialize, Serialize};

use super::config::LabConfig;
use super::io::ClinicianRow;
use crate::classifier::{classify_records, ClassWeightTable, OverrideType, TypePosterior};
use crate::dual_learner::{
    cold_start_priors, record_class_weights, train_with_anchor, AnchorReport, ClinicianMeta, IdentifiabilityReport,
    KappaTable, PriorConfig, TrainState, TrainStatus,
};
use crate::error::Result;
use crate::kernel::{ActionId, ClinicianId, ContractId, DomainId, FeatureMap, InteractionRecord};
use crate::monitors::{
    acceptance_entropy, band_name, band_of, complexity_trend, concordance_by_type, observability,
    stratified_override_rates, suppression_audit, MonitorReport, StratifiedRates, TypeConcordance,
};
use crate::world_sim::{
    counterfactual_pairs, Dataset, GroundTruth, GuidelineRecommender, ModelRecommender, OutcomePair, Scenario,
    Simulator,
};

pub fn meta_from_truth(truth: &GroundTruth) -> Vec<ClinicianMeta> {
    truth
        .clinicians
        .iter()
        .map(|c| ClinicianMeta {
            clinician: c.id,
            years_experience: Some(c.years_experience),
        })
        .collect()
}

pub fn meta_from_rows(rows: &[ClinicianRow]) -> Vec<ClinicianMeta> {
    rows.iter()
        .map(|r| ClinicianMeta {
            clinician: ClinicianId(r.clinician),
            years_experience: Some(r.years_experience),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub state: TrainState,
    pub priors: KappaTable,
    /// Anchor result of every attempt; empty when no training round ran.
    pub attempts: Vec<AnchorReport>,
    pub reinitialized: bool,
    /// Override type posteriors from the final classifier pass.
    pub posteriors: Vec<Option<TypePosterior>>,
    pub class_weights: Vec<(f64, f64)>,
    pub classifier_passes: usize,
}

impl TrainOutput {
    pub fn anchor(&self) -> Option<&AnchorReport> {
        self.attempts.last()
    }
}

/// Classifier outer loop around anchored alternation. Each pass reclassifies
/// overrides with the latest capability estimates and retrains from the cold
/// start; the classifier itself is fixed within a pass.
pub fn train(
    records: &[InteractionRecord],
    scenario: &Scenario,
    cfg: &LabConfig,
    meta: &[ClinicianMeta],
    heldout: &[OutcomePair],
) -> Result<TrainOutput> {
    let catalog = &scenario.catalog;
    let map = FeatureMap::for_catalog(scenario.state_dim, catalog);
    let priors = cold_start_priors(meta, scenario.domain_count(), &cfg.training.priors)?;
    let classify = |kappa: &KappaTable| -> Result<Vec<Option<TypePosterior>>> {
        if cfg.classifier.enabled {
            classify_records(
                records,
                catalog,
                |c, d| kappa.mean(c, d),
                cfg.classifier.cohort_kappa_threshold,
                &cfg.classifier.weights,
            )
        } else {
            Ok(vec![None; records.len()])
        }
    };
    let weights_for = |posteriors: &[Option<TypePosterior>]| {
        record_class_weights(
            records,
            cfg.classifier.enabled.then_some(posteriors),
            &cfg.classifier.class_weights,
        )
    };

    if cfg.training.max_rounds == 0 {
        let posteriors = classify(&priors)?;
        let class_weights = weights_for(&posteriors)?;
        return Ok(TrainOutput {
            state: TrainState::cold_start(map, priors.clone()),
            priors,
            attempts: Vec::new(),
            reinitialized: false,
            posteriors,
            class_weights,
            classifier_passes: 0,
        });
    }

    let passes = if cfg.classifier.enabled {
        cfg.classifier.outer_iterations.max(1)
    } else {
        1
    };
    let mut kappa = priors.clone();
    let mut last = None;
    for _ in 0..passes {
        let posteriors = classify(&kappa)?;
        let class_weights = weights_for(&posteriors)?;
        let run = train_with_anchor(records, catalog, map, &class_weights, &priors, heldout, &cfg.training)?;
        kappa = run.state.kappa.clone();
        last = Some((run, posteriors, class_weights));
    }
    let (run, posteriors, class_weights) = last.expect("at least one classifier pass");
    Ok(TrainOutput {
        state: run.state,
        priors,
        attempts: run.attempts,
        reinitialized: run.reinitialized,
        posteriors,
        class_weights,
        classifier_passes: passes,
    })
}

/// Held-out outcome-labeled pairs for the configured anchor.
pub fn heldout_pairs(scenario: &Scenario, cfg: &LabConfig) -> Result<Vec<OutcomePair>> {
    counterfactual_pairs(scenario, cfg.training.anchor.heldout_pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub cluster: String,
    pub contract: String,
    pub first: String,
    pub second: String,
    /// `R(first) - R(second)` at the cluster center.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaRow {
    pub clinician: u32,
    pub domain: String,
    pub alpha: f64,
    pub beta: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMass {
    pub override_type: String,
    /// Sum of posterior probabilities over all overrides.
    pub expected_count: f64,
    pub argmax_count: usize,
    /// Set for context (I) and protocol (IV) overrides, whose remedy is a
    /// richer state or contract description rather than a reweighting.
    pub review_for_expansion: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub scenario: String,
    pub seed: u64,
    pub weighting: String,
    pub beta0: f64,
    pub beta1: f64,
    pub records: usize,
    pub status: TrainStatus,
    pub iterations: usize,
    pub margins: Vec<MarginRow>,
    pub kappa: Vec<KappaRow>,
    pub anchor: Option<AnchorReport>,
    pub anchor_attempts: Vec<AnchorReport>,
    pub reinitialized: bool,
    pub identifiability: Option<IdentifiabilityReport>,
    /// Capability is estimated by Beta counting of margin-sign agreement.
    pub capability_estimator: String,
    pub priors: PriorConfig,
    pub classifier_enabled: bool,
    pub classifier_passes: usize,
    pub class_weight_table: ClassWeightTable,
    pub override_types: Vec<TypeMass>,
    pub theta: Vec<f64>,
}

impl TrainSummary {
    pub fn margin(&self, cluster: &str, first: &str, second: &str) -> Option<f64> {
        self.margins
            .iter()
            .find(|m| m.cluster == cluster && m.first == first && m.second == second)
            .map(|m| m.margin)
    }

    pub fn kappa_mean(&self, clinician: ClinicianId, domain: &str) -> Option<f64> {
        self.kappa
            .iter()
            .find(|k| k.clinician == clinician.0 && k.domain == domain)
            .map(|k| k.mean)
    }
}

pub fn summarize(out: &TrainOutput, scenario: &Scenario, cfg: &LabConfig, records: &[InteractionRecord]) -> Result<TrainSummary> {
    let catalog = &scenario.catalog;
    let model = &out.state.model;
    let mut margins = Vec::new();
    for cluster in &scenario.clusters {
        for k in 0..catalog.contracts().len() {
            let c = ContractId(k);
            for a in catalog.action_ids() {
                for b in catalog.action_ids().filter(|&b| b != a) {
                    margins.push(MarginRow {
                        cluster: cluster.name.clone(),
                        contract: catalog.contract(c).name.clone(),
                        first: catalog.action(a).name.clone(),
                        second: catalog.action(b).name.clone(),
                        margin: model.margin(catalog, &cluster.center, a, b, c)?,
                    });
                }
            }
        }
    }
    let kappa = out
        .state
        .kappa
        .iter()
        .map(|e| KappaRow {
            clinician: e.clinician.0,
            domain: scenario.config.domains[e.domain.index()].clone(),
            alpha: e.alpha,
            beta: e.beta,
            mean: e.mean(),
        })
        .collect();
    let mut expected = [0.0; 5];
    let mut argmax = [0usize; 5];
    for p in out.posteriors.iter().flatten() {
        for t in OverrideType::ALL {
            expected[t.index()] += p.prob(t);
        }
        argmax[p.argmax().index()] += 1;
    }
    let override_types = OverrideType::ALL
        .iter()
        .map(|&t| TypeMass {
            override_type: t.as_str().to_string(),
            expected_count: expected[t.index()],
            argmax_count: argmax[t.index()],
            review_for_expansion: matches!(t, OverrideType::Context | OverrideType::Protocol)
                && argmax[t.index()] > 0,
        })
        .collect();
    Ok(TrainSummary {
        scenario: scenario.config.name.clone(),
        seed: scenario.config.seed,
        weighting: cfg.training.weighting.as_str().to_string(),
        beta0: cfg.training.beta0,
        beta1: cfg.training.beta1,
        records: records.len(),
        status: out.state.status,
        iterations: out.state.iteration,
        margins,
        kappa,
        anchor: out.anchor().copied(),
        anchor_attempts: out.attempts.clone(),
        reinitialized: out.reinitialized,
        identifiability: out.state.identifiability.clone(),
        capability_estimator: if cfg.training.soft_agreement {
            "beta counting of logistic agreement probabilities".into()
        } else {
            "beta counting of margin-sign agreement".into()
        },
        priors: cfg.training.priors.clone(),
        classifier_enabled: cfg.classifier.enabled,
        classifier_passes: out.classifier_passes,
        class_weight_table: cfg.classifier.class_weights.clone(),
        override_types,
        theta: model.theta().to_vec(),
    })
}

/// A simulation whose recommendations come from the model retrained at the
/// end of every round. Round 0 uses the guideline recommender.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub dataset: Dataset,
    /// Recommended actions per round.
    pub rounds: Vec<Vec<ActionId>>,
    /// Model trained after each round except the last.
    pub trainings: Vec<TrainOutput>,
}

pub fn run_closed_loop(scenario: &Scenario, cfg: &LabConfig) -> Result<ClosedLoopRun> {
    let steps = cfg.closed_loop.steps_per_round;
    let rounds = cfg.closed_loop.rounds;
    let heldout = heldout_pairs(scenario, cfg)?;
    let mut sim = Simulator::new(scenario)?;
    let meta = meta_from_truth(&sim.ground_truth());
    sim.run(steps, &GuidelineRecommender)?;
    let mut trainings = Vec::new();
    let mut round_start = 0;
    for _ in 1..rounds {
        let all = sim.records();
        let data = if cfg.closed_loop.cumulative { all } else { &all[round_start..] };
        let trained = train(data, scenario, cfg, &meta, &heldout)?;
        round_start = sim.records().len();
        sim.run(steps, &ModelRecommender::new(&trained.state.model))?;
        trainings.push(trained);
    }
    let dataset = sim.into_dataset();
    let rounds = recommendation_rounds(&dataset.records, steps);
    Ok(ClosedLoopRun {
        dataset,
        rounds,
        trainings,
    })
}

/// Recommended actions grouped into consecutive rounds of `steps` time steps.
pub fn recommendation_rounds(records: &[InteractionRecord], steps: u32) -> Vec<Vec<ActionId>> {
    let mut rounds: Vec<Vec<ActionId>> = Vec::new();
    for r in records {
        let i = (r.state.time_index / steps.max(1)) as usize;
        if rounds.len() <= i {
            rounds.resize(i + 1, Vec::new());
        }
        rounds[i].push(r.recommendation);
    }
    rounds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub scenario: String,
    pub records: usize,
    /// Set when there was nothing to audit.
    pub note: Option<String>,
    /// Which capability values define the bands.
    pub kappa_source: String,
    pub rates: Option<StratifiedRates>,
    pub concordance: Option<Vec<TypeConcordance>>,
    pub monitors: MonitorReport,
}

/// Runs every monitor over one record stream. `counterfactual` holds the
/// simulator's other-arm outcomes; without it concordance is skipped.
pub fn audit(
    records: &[InteractionRecord],
    counterfactual: Option<&[Option<f64>]>,
    scenario: &Scenario,
    cfg: &LabConfig,
    kappa: &dyn Fn(ClinicianId, DomainId) -> f64,
    kappa_source: &str,
) -> Result<AuditReport> {
    let m = &cfg.monitors;
    let catalog = &scenario.catalog;
    let counterfactual_source = if counterfactual.is_some() {
        "simulator: both arms evaluated"
    } else {
        "unavailable"
    };
    if records.is_empty() {
        return Ok(AuditReport {
            scenario: scenario.config.name.clone(),
            records: 0,
            note: Some("no data: the dataset has no interaction records".into()),
            kappa_source: kappa_source.into(),
            rates: None,
            concordance: None,
            monitors: MonitorReport {
                automation_flags: Vec::new(),
                suppression: None,
                complexity_trend: complexity_trend(records, catalog, m.window_steps),
                observability: Vec::new(),
                counterfactual_source: counterfactual_source.into(),
            },
        });
    }
    let rates = stratified_override_rates(records, kappa, &m.band_edges, m.window_steps)?;
    let concordance = match counterfactual {
        Some(cf) => {
            let posteriors = classify_records(
                records,
                catalog,
                kappa,
                cfg.classifier.cohort_kappa_threshold,
                &cfg.classifier.weights,
            )?;
            Some(concordance_by_type(records, cf, &posteriors, m.min_outcomes_per_type)?)
        }
        None => None,
    };
    let automation_flags = acceptance_entropy(records, None, m.entropy_threshold, m.accept_ceiling)
        .into_iter()
        .filter(|r| r.flagged)
        .collect();
    let round_steps = if cfg.closed_loop.rounds > 0 {
        cfg.closed_loop.steps_per_round
    } else {
        m.window_steps
    };
    let rounds = recommendation_rounds(records, round_steps);
    let suppression = if rounds.len() >= 2 {
        let eligible = rounds.last().map_or(0, Vec::len);
        Some(suppression_audit(
            &rounds,
            &scenario.first_line,
            m.suppression_floor,
            m.probe_rate,
            eligible,
            scenario.config.seed,
        )?)
    } else {
        None
    };
    let n_bands = m.band_edges.len() + 1;
    let observability = observability(records, |r| {
        format!(
            "{}/{}",
            scenario.config.domains[r.domain().index()],
            band_name(band_of(kappa(r.clinician, r.domain()), &m.band_edges), n_bands)
        )
    });
    Ok(AuditReport {
        scenario: scenario.config.name.clone(),
        records: records.len(),
        note: None,
        kappa_source: kappa_source.into(),
        rates: Some(rates),
        concordance,
        monitors: MonitorReport {
            automation_flags,
            suppression,
            complexity_trend: complexity_trend(records, catalog, m.window_steps),
            observability,
            counterfactual_source: counterfactual_source.into(),
        },
    })
}
