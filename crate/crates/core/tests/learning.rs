mod common;

use override_lab::classifier::{
    class_weights, classify_override, extract_signals, ClassWeightTable, ClassifierWeights, CohortStats,
    OverrideHistory, OverrideSignals, OverrideType, TypePosterior,
};
use override_lab::dual_learner::{
    alternate, anchor_validate, build_pairs, cold_start_priors, e_step, fit_with_kappa, ClinicianMeta, PriorConfig,
    TrainConfig, TrainState, TrainStatus,
};
use override_lab::experiment::pipeline::{heldout_pairs, meta_from_truth, train};
use override_lab::experiment::scenarios::canonical;
use override_lab::kernel::{
    ActionId, BetaParams, Catalog, ClinicianId, ContractId, Decision, DomainId, FeatureMap, InteractionRecord, PairKind,
    ReasonCode, RewardModel,
};
use override_lab::world_sim::{generate_dataset, truth_model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ones(n: usize) -> Vec<(f64, f64)> {
    vec![(1.0, 1.0); n]
}

fn softmax(logits: [f64; 5]) -> [f64; 5] {
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    logits.map(|l| l.exp() / z)
}

#[test]
fn no_time_reason_points_to_workflow() {
    let signals = OverrideSignals {
        proximity: None,
        class_preserved: None,
        clinician_domain_override_rate: None,
        cohort_high_kappa_accept_rate: None,
        structured_reason: Some(ReasonCode::NoTime),
    };
    let post = classify_override(&signals, &ClassifierWeights::default());
    // Default weights on [bias, no_alternative] plus the reason bonus.
    let oracle = softmax([0.0, 0.5, -1.0 + 1.5 + 4.0, -1.5, -1.0]);
    for t in OverrideType::ALL {
        assert!((post.prob(t) - oracle[t.index()]).abs() < 1e-12, "{t:?}");
    }
    assert!(post.prob(OverrideType::Workflow) > 0.5);
    assert_eq!(post.argmax(), OverrideType::Workflow);
}

#[test]
fn signals_from_records() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cat = common::random_catalog(&mut rng, 4, 2, 1);
    let state = common::random_state(&mut rng, 1);
    let rec = |decision, executed| {
        InteractionRecord::new(state.clone(), ActionId(1), decision, executed, ClinicianId(0), ContractId(0), None)
            .unwrap()
    };
    let mut records = vec![rec(Decision::accept(), ActionId(1))];
    for _ in 0..4 {
        records.push(rec(Decision::modify(ActionId(2)), ActionId(2)));
    }
    let history = OverrideHistory::from_records(&records);
    let cohort = CohortStats::from_records(&records, |_, _| 1.0, 0.7);
    let s = extract_signals(&records[1], &cat, &history, &cohort).unwrap();
    assert_eq!(s.clinician_domain_override_rate, Some(0.8));
    assert_eq!(s.cohort_high_kappa_accept_rate, Some(0.2));
    assert_eq!(s.class_preserved, Some(false));
    assert_eq!(s.proximity, Some(cat.proximity(ActionId(2), ActionId(1))));
    assert!(extract_signals(&records[0], &cat, &history, &cohort).is_err());

    let mut actions = cat.actions().to_vec();
    actions[2].class = actions[1].class.clone();
    let same = Catalog::new(actions, cat.contracts().to_vec(), cat.default_action()).unwrap();
    assert_eq!(extract_signals(&records[1], &same, &history, &cohort).unwrap().class_preserved, Some(true));
}

#[test]
fn workflow_and_protocol_overrides_carry_no_weight() {
    let table = ClassWeightTable::default();
    for t in [OverrideType::Workflow, OverrideType::Protocol] {
        assert_eq!(class_weights(&TypePosterior::pure(t), &table), (0.0, 0.0));
    }
    assert_eq!(class_weights(&TypePosterior::pure(OverrideType::Judgment), &table), (1.0, 1.0));
}

#[test]
fn pairs_follow_the_decision() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cat = common::random_catalog(&mut rng, 4, 2, 1);
    let state = common::random_state(&mut rng, 1);
    let mk = |decision, executed| {
        InteractionRecord::new(state.clone(), ActionId(2), decision, executed, ClinicianId(4), ContractId(1), None)
            .unwrap()
    };
    let records = vec![
        mk(Decision::accept(), ActionId(2)),
        mk(Decision::modify(ActionId(3)), ActionId(3)),
        mk(Decision::reject(None), ActionId(0)),
    ];
    let beta = BetaParams::new(0.5, 2.0).unwrap();
    let set = build_pairs(&records, &cat, &[(1.0, 1.0), (0.3, 0.6), (1.0, 1.0)], |_, _| 0.25, &beta).unwrap();
    assert_eq!(set.pairs.len(), 2);
    assert_eq!(set.unobserved_alternatives, 1);
    let (a, m) = (&set.pairs[0], &set.pairs[1]);
    assert_eq!((a.kind, a.preferred, a.dispreferred), (PairKind::AcceptPair, ActionId(2), ActionId(0)));
    assert_eq!((m.kind, m.preferred, m.dispreferred), (PairKind::ModifyPair, ActionId(3), ActionId(2)));
    assert_eq!(a.capability_weight, 1.0);
    assert_eq!((m.reward_class_weight, m.capability_class_weight), (0.3, 0.6));
    assert!(m.proximity.is_some() && a.proximity.is_none());
    assert_eq!(set.source, vec![0, 1]);
}

#[test]
fn e_step_counts_agreements_on_a_beta_2_2_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cat = common::random_catalog(&mut rng, 3, 2, 1);
    let map = FeatureMap::for_catalog(1, &cat);
    let meta = [ClinicianMeta {
        clinician: ClinicianId(0),
        years_experience: None,
    }];
    let priors = cold_start_priors(&meta, 1, &PriorConfig::default()).unwrap();
    let state = common::random_state(&mut rng, 1);
    // A model that strictly prefers action 1 over the default everywhere.
    let mut theta = vec![0.0; map.dim()];
    let gap = cat.action(ActionId(1)).features[0] - cat.action(ActionId(0)).features[0];
    theta[map.state_dim * map.action_dim] = gap.signum();
    let model = RewardModel::new(map, theta).unwrap();
    let records: Vec<_> = (0..16)
        .map(|_| {
            InteractionRecord::new(state.clone(), ActionId(1), Decision::accept(), ActionId(1), ClinicianId(0), ContractId(0), None)
                .unwrap()
        })
        .collect();
    let (kappa, counts) = e_step(&records, &[1.0; 16], &model, &cat, &priors, false).unwrap();
    assert_eq!(counts.counts[&(ClinicianId(0), DomainId(0))], (16.0, 16.0));
    assert!((kappa.mean(ClinicianId(0), DomainId(0)) - 0.9).abs() < 1e-12);

    let (empty, _) = e_step(&[], &[], &model, &cat, &priors, false).unwrap();
    assert_eq!(empty.mean(ClinicianId(0), DomainId(0)), 0.5);
}

#[test]
fn true_reward_model_is_perfectly_concordant_without_noise() {
    let mut cfg = canonical("fig1").unwrap();
    cfg.scenario.outcome.noise_sd = 0.0;
    let sc = cfg.scenario().unwrap();
    let heldout = heldout_pairs(&sc, &cfg).unwrap();
    let report = anchor_validate(&truth_model(&sc).unwrap(), &sc.catalog, &heldout, 0.3, 30).unwrap();
    assert!(report.concordance > 0.999, "{}", report.concordance);
    assert!(report.pass);
}

#[test]
fn random_models_are_not_concordant_on_average() {
    let cfg = canonical("fig1").unwrap();
    let sc = cfg.scenario().unwrap();
    let heldout = heldout_pairs(&sc, &cfg).unwrap();
    let map = FeatureMap::for_catalog(sc.state_dim, &sc.catalog);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 200;
    let mean: f64 = (0..n)
        .map(|_| {
            let theta = (0..map.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let m = RewardModel::new(map, theta).unwrap();
            anchor_validate(&m, &sc.catalog, &heldout, 0.3, 30).unwrap().concordance
        })
        .sum::<f64>()
        / n as f64;
    assert!(mean.abs() < 0.1, "mean concordance {mean}");
}

#[test]
fn low_capability_clinicians_get_lower_estimates() {
    let cfg = canonical("fig1").unwrap();
    let sc = cfg.scenario().unwrap();
    let data = generate_dataset(&sc).unwrap();
    let heldout = heldout_pairs(&sc, &cfg).unwrap();
    let out = train(&data.records, &sc, &cfg, &meta_from_truth(&data.truth), &heldout).unwrap();
    let state = &out.state;
    let cat = &sc.catalog;
    let (a, r) = (cat.action_by_name("sglt2i").unwrap(), cat.action_by_name("referral").unwrap());
    assert!(state.model.margin(cat, &sc.clusters[0].center, a, r, ContractId(0)).unwrap() > 0.0);

    let mean_of = |low: bool| {
        let v: Vec<f64> = data
            .truth
            .clinicians
            .iter()
            .filter(|c| (c.kappa[0][0] < 0.5) == low)
            .map(|c| state.kappa.mean(c.id, DomainId(0)))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean_of(true) < mean_of(false), "low {} high {}", mean_of(true), mean_of(false));
}

#[test]
fn experience_priors_wash_out() {
    let cfg = canonical("identifiability").unwrap();
    let sc = cfg.scenario().unwrap();
    let data = generate_dataset(&sc).unwrap();
    let map = FeatureMap::for_catalog(sc.state_dim, &sc.catalog);
    let tc = TrainConfig::default();
    let w = ones(data.records.len());
    let plain = cold_start_priors(&[], sc.domain_count(), &tc.priors).unwrap();
    let meta: Vec<_> = data
        .truth
        .clinicians
        .iter()
        .map(|c| ClinicianMeta {
            clinician: c.id,
            years_experience: Some(if c.id.0 % 2 == 0 { 0.0 } else { 30.0 }),
        })
        .collect();
    let proxied = cold_start_priors(&meta, sc.domain_count(), &tc.priors).unwrap();
    let a = alternate(&data.records, &sc.catalog, map, &w, &plain, &tc).unwrap();
    let b = alternate(&data.records, &sc.catalog, map, &w, &proxied, &tc).unwrap();
    assert!(b.kappa.max_abs_change(&a.kappa) < 0.05, "{}", b.kappa.max_abs_change(&a.kappa));
}

#[test]
fn zero_rounds_returns_the_cold_start() {
    let cfg = canonical("fig1").unwrap();
    let sc = cfg.scenario().unwrap();
    let data = generate_dataset(&sc).unwrap();
    let map = FeatureMap::for_catalog(sc.state_dim, &sc.catalog);
    let priors = cold_start_priors(&[], sc.domain_count(), &PriorConfig::default()).unwrap();
    let tc = TrainConfig {
        max_rounds: 0,
        ..TrainConfig::default()
    };
    let state = alternate(&data.records, &sc.catalog, map, &ones(data.records.len()), &priors, &tc).unwrap();
    assert_eq!(state, TrainState::cold_start(map, priors));
    assert_eq!(state.status, TrainStatus::NotRun);
}

#[test]
fn expert_only_fit_keeps_true_orderings() {
    let mut cfg = canonical("fig1").unwrap();
    cfg.scenario.archetypes.retain(|a| a.exec > 0.5);
    let sc = cfg.scenario().unwrap();
    let data = generate_dataset(&sc).unwrap();
    let map = FeatureMap::for_catalog(sc.state_dim, &sc.catalog);
    let fit = fit_with_kappa(
        &data.records,
        &sc.catalog,
        map,
        &ones(data.records.len()),
        |_, _| 0.5,
        &BetaParams::uniform(1.0).unwrap(),
        &cfg.training.m_step,
    )
    .unwrap();
    let truth = truth_model(&sc).unwrap();
    let cat = &sc.catalog;
    let center = &sc.clusters[0].center;
    let a = cat.action_by_name("sglt2i").unwrap();
    for b in (0..cat.len()).map(ActionId).filter(|b| *b != a) {
        let t = truth.margin(cat, center, a, b, ContractId(0)).unwrap();
        let f = fit.model.margin(cat, center, a, b, ContractId(0)).unwrap();
        assert_eq!(t.signum(), f.signum(), "{} vs {}", cat.action(a).name, cat.action(b).name);
    }
}
