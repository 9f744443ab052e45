mod common;

use override_lab::kernel::{
    beta_of_kappa, logistic, p_accept, p_prefer, pair_loglik_and_grad, ActionId, BetaParams, ClinicianId, ContractId,
    DomainId, FeatureMap, PairKind, PreferencePair, RewardModel, Situation,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup() -> (override_lab::kernel::Catalog, FeatureMap, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cat = common::random_catalog(&mut rng, 3, 2, 1);
    let map = FeatureMap::for_catalog(2, &cat);
    (cat, map, rng)
}

#[test]
fn logistic_fixed_points() {
    assert_eq!(logistic(0.0), 0.5);
    assert!((logistic(50.0) - 1.0).abs() < 1e-15);
    assert!((logistic(1.7) + logistic(-1.7) - 1.0).abs() < 1e-15);
}

#[test]
fn beta_endpoints() {
    assert_eq!(beta_of_kappa(0.0, 0.5, 2.0).unwrap(), 0.5);
    assert_eq!(beta_of_kappa(1.0, 0.5, 2.0).unwrap(), 2.5);
    assert_eq!(beta_of_kappa(0.5, 1.0, 0.0).unwrap(), 1.0);
}

/// Model whose reward is the first action feature, so margins are easy to set.
fn first_feature_model(map: FeatureMap, scale: f64) -> RewardModel {
    let mut theta = vec![0.0; map.dim()];
    theta[map.state_dim * map.action_dim] = scale;
    RewardModel::new(map, theta).unwrap()
}

#[test]
fn accept_probability_examples() {
    let (cat, map, _) = setup();
    let state = [0.3, -0.2];
    let at = Situation {
        catalog: &cat,
        state: &state,
        contract: ContractId(0),
    };
    let (rec, default) = (ActionId(1), ActionId(0));
    let gap = cat.action(rec).features[0] - cat.action(default).features[0];
    let model = first_feature_model(map, 1.0 / gap);
    let beta = BetaParams::new(1.0, 1.0).unwrap();
    let p = p_accept(&model, &at, rec, default, 1.0, &beta).unwrap();
    assert!((p - common::sigmoid(2.0)).abs() < 1e-12);
    assert_eq!((p * 1e4).round() / 1e4, 0.8808);

    let zero = RewardModel::zeros(map);
    for kappa in [0.0, 0.3, 1.0] {
        assert_eq!(p_accept(&zero, &at, rec, default, kappa, &beta).unwrap(), 0.5);
    }
    let high = p_accept(&model, &at, rec, default, 0.9, &beta).unwrap();
    let low = p_accept(&model, &at, rec, default, 0.1, &beta).unwrap();
    assert!(high > low);
}

#[test]
fn preference_is_antisymmetric_and_reduces_to_bradley_terry() {
    let (cat, map, mut rng) = setup();
    let theta: Vec<f64> = (0..map.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let model = RewardModel::new(map, theta).unwrap();
    let state = [0.5, 0.1];
    let at = Situation {
        catalog: &cat,
        state: &state,
        contract: ContractId(1),
    };
    let beta = BetaParams::new(0.8, 2.0).unwrap();
    let (a, b) = (ActionId(1), ActionId(2));
    let ab = p_prefer(&model, &at, a, b, 0.4, &beta).unwrap();
    let ba = p_prefer(&model, &at, b, a, 0.4, &beta).unwrap();
    assert!((ab + ba - 1.0).abs() < 1e-15);

    let plain = BetaParams::new(0.8, 0.0).unwrap();
    let ra = common::dot(model.theta(), &common::features(&state, &cat.action(a).features, &cat.contract(ContractId(1)).features));
    let rb = common::dot(model.theta(), &common::features(&state, &cat.action(b).features, &cat.contract(ContractId(1)).features));
    for kappa in [0.0, 0.5, 1.0] {
        let p = p_prefer(&model, &at, a, b, kappa, &plain).unwrap();
        assert!((p - common::sigmoid(0.8 * (ra - rb))).abs() < 1e-12);
    }
    assert!(p_prefer(&model, &at, a, a, 0.4, &beta).is_err());
}

fn pair(class_weight: f64) -> PreferencePair {
    let state = override_lab::kernel::PatientState::new(
        override_lab::kernel::PatientId(3),
        DomainId(0),
        0,
        vec![0.7, -0.4],
        0,
    )
    .unwrap();
    PreferencePair {
        preferred: ActionId(2),
        dispreferred: ActionId(1),
        state,
        contract: ContractId(0),
        clinician: ClinicianId(1),
        domain: DomainId(0),
        time_index: 0,
        kind: PairKind::RejectPair,
        capability_weight: 1.0,
        reward_class_weight: class_weight,
        capability_class_weight: class_weight,
        proximity: None,
        outcome_label: None,
    }
}

#[test]
fn zero_class_weight_pair_is_inert() {
    let (cat, map, mut rng) = setup();
    let theta: Vec<f64> = (0..map.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let model = RewardModel::new(map, theta).unwrap();
    let beta = BetaParams::new(0.5, 3.0).unwrap();
    let (ll, grad) = pair_loglik_and_grad(&pair(0.0), &model, &cat, 0.7, &beta).unwrap();
    assert_eq!(ll, 0.0);
    assert!(grad.iter().all(|g| *g == 0.0));
}

#[test]
fn gradient_at_zero_is_half_the_feature_difference() {
    let (cat, map, _) = setup();
    let p = pair(0.6);
    let beta = BetaParams::new(0.5, 3.0).unwrap();
    let kappa = 0.7;
    let weight = (0.5 + 3.0 * kappa) * 0.6;
    let (ll, grad) = pair_loglik_and_grad(&p, &RewardModel::zeros(map), &cat, kappa, &beta).unwrap();
    assert!((ll - weight * 0.5f64.ln()).abs() < 1e-12);
    let diff = common::pair_diff(&cat, &p.state.features, p.preferred, p.dispreferred, p.contract);
    for (g, d) in grad.iter().zip(&diff) {
        assert!((g - weight / 2.0 * d).abs() < 1e-12);
    }
}

#[test]
fn pair_gradient_matches_finite_differences() {
    let (cat, map, mut rng) = setup();
    let beta = BetaParams::new(0.5, 3.0).unwrap();
    let p = pair(0.9);
    for _ in 0..20 {
        let theta: Vec<f64> = (0..map.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let model = RewardModel::new(map, theta.clone()).unwrap();
        let (_, grad) = pair_loglik_and_grad(&p, &model, &cat, 0.3, &beta).unwrap();
        let fd = common::fd_gradient(
            |t| {
                let m = RewardModel::new(map, t.to_vec()).unwrap();
                pair_loglik_and_grad(&p, &m, &cat, 0.3, &beta).unwrap().0
            },
            &theta,
            1e-5,
        );
        assert!(common::rel_err(&grad, &fd, 1e-8) < 1e-6);
    }
}
