mod common;

use override_lab::classifier::{
    class_weights, classify_override, ClassWeightTable, ClassifierWeights, OverrideSignals, TypePosterior, N_TYPES,
};
use override_lab::dual_learner::{build_pairs, cold_start_priors, e_step, m_step, MStepOptions, PriorConfig};
use override_lab::experiment::scenarios::canonical;
use override_lab::kernel::{
    beta_of_kappa, logistic, p_accept, ActionId, BetaParams, ClinicianId, ContractId, DomainId, FeatureMap,
    ReasonCode, RewardModel, Situation,
};
use override_lab::monitors::stratified_override_rates;
use override_lab::stats::{binary_entropy, spearman};
use override_lab::world_sim::generate_dataset;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

fn posterior() -> impl Strategy<Value = TypePosterior> {
    prop::array::uniform5(0.001..1.0f64).prop_map(|raw| {
        let z: f64 = raw.iter().sum();
        TypePosterior::new(raw.map(|r| r / z)).unwrap()
    })
}

fn signals() -> impl Strategy<Value = OverrideSignals> {
    (
        prop::option::of(0.0..10.0f64),
        prop::option::of(any::<bool>()),
        prop::option::of(unit()),
        prop::option::of(unit()),
        prop::option::of(prop::sample::select(ReasonCode::ALL.to_vec())),
    )
        .prop_map(|(proximity, class_preserved, rate, cohort, reason)| OverrideSignals {
            proximity,
            class_preserved,
            clinician_domain_override_rate: rate,
            cohort_high_kappa_accept_rate: cohort,
            structured_reason: reason,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn classifier_output_is_a_distribution(s in signals()) {
        let post = classify_override(&s, &ClassifierWeights::default());
        let total: f64 = post.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(post.probs().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn class_weights_are_linear_in_the_posterior(a in posterior(), b in posterior(), w in unit()) {
        let table = ClassWeightTable::default();
        let mixed = class_weights(&a.mix(&b, w), &table);
        let (ra, ca) = class_weights(&a, &table);
        let (rb, cb) = class_weights(&b, &table);
        prop_assert!((mixed.0 - (w * ra + (1.0 - w) * rb)).abs() < 1e-12);
        prop_assert!((mixed.1 - (w * ca + (1.0 - w) * cb)).abs() < 1e-12);
        let total: f64 = a.mix(&b, w).probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert_eq!(a.probs().len(), N_TYPES);
    }

    #[test]
    fn temperature_and_acceptance_grow_with_capability(
        k1 in unit(), k2 in unit(), b0 in 0.01..2.0f64, b1 in 0.0..6.0f64, seed in any::<u64>(),
    ) {
        let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
        prop_assert!(beta_of_kappa(lo, b0, b1).unwrap() <= beta_of_kappa(hi, b0, b1).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cat = common::random_catalog(&mut rng, 3, 2, 1);
        let map = FeatureMap::for_catalog(1, &cat);
        let theta = (0..map.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = RewardModel::new(map, theta).unwrap();
        let state = [rng.random_range(-1.0..1.0)];
        let at = Situation { catalog: &cat, state: &state, contract: ContractId(0) };
        let beta = BetaParams::new(b0, b1).unwrap();
        let (rec, default) = (ActionId(1), ActionId(0));
        let margin = model.margin(&cat, &state, rec, default, ContractId(0)).unwrap();
        let p_lo = p_accept(&model, &at, rec, default, lo, &beta).unwrap();
        let p_hi = p_accept(&model, &at, rec, default, hi, &beta).unwrap();
        if margin >= 0.0 {
            prop_assert!(p_hi >= p_lo - 1e-15);
        } else {
            prop_assert!(p_hi <= p_lo + 1e-15);
        }
    }

    #[test]
    fn logistic_is_symmetric(x in -50.0..50.0f64) {
        prop_assert!((logistic(x) + logistic(-x) - 1.0).abs() < 1e-15);
        prop_assert!((logistic(x) - common::sigmoid(x)).abs() < 1e-15);
    }

    #[test]
    fn entropy_is_bounded_and_symmetric(p in unit()) {
        let h = binary_entropy(p);
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!((h - binary_entropy(1.0 - p)).abs() < 1e-12);
        prop_assert!((h - common::entropy_bits(p)).abs() < 1e-12);
    }

    #[test]
    fn spearman_is_a_correlation(v in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 3..40)) {
        let (x, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        if let Some(r) = spearman(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert!((r - common::spearman(&x, &y)).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn strata_partition_the_records(seed in any::<u64>(), n in 0usize..300, window in 1u32..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cat = common::random_catalog(&mut rng, 4, 2, 1);
        let records = common::random_records(&mut rng, &cat, n, 6);
        let kappa = |c: ClinicianId, _| c.0 as f64 / 6.0;
        let rates = stratified_override_rates(&records, kappa, &[0.4, 0.7], window).unwrap();
        let total: u64 = rates.strata.iter().map(|s| s.interactions).sum();
        let overrides: u64 = rates.strata.iter().map(|s| s.overrides).sum();
        prop_assert_eq!(total as usize, records.len());
        prop_assert_eq!(overrides as usize, records.iter().filter(|r| r.is_override()).count());
    }

    #[test]
    fn newton_objective_never_decreases(seed in any::<u64>(), n in 5usize..200, ridge in 1e-3..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cat = common::random_catalog(&mut rng, 4, 2, 1);
        let map = FeatureMap::for_catalog(1, &cat);
        let records = common::random_records(&mut rng, &cat, n, 5);
        let weights: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(0.0..1.0), 1.0)).collect();
        let kappas: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let beta = BetaParams::new(0.3, 2.0).unwrap();
        let set = build_pairs(&records, &cat, &weights, |c, _| kappas[c.0 as usize], &beta).unwrap();
        let options = MStepOptions { ridge, ..MStepOptions::default() };
        let fit = m_step(&set.pairs, &cat, &RewardModel::zeros(map), &options).unwrap();
        prop_assert!(!fit.objective_trace.is_empty());
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12, "{} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn e_step_adds_the_weight_mass_to_the_prior(seed in any::<u64>(), n in 0usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cat = common::random_catalog(&mut rng, 4, 2, 1);
        let map = FeatureMap::for_catalog(1, &cat);
        let records = common::random_records(&mut rng, &cat, n, 4);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let theta = (0..map.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = RewardModel::new(map, theta).unwrap();
        let priors = cold_start_priors(&[], 1, &PriorConfig::default()).unwrap();
        let (kappa, counts) = e_step(&records, &weights, &model, &cat, &priors, false).unwrap();
        for c in (0..4).map(ClinicianId) {
            let e = kappa.get(c, DomainId(0));
            let (agree, total) = counts.counts.get(&(c, DomainId(0))).copied().unwrap_or((0.0, 0.0));
            prop_assert!((e.alpha + e.beta - (4.0 + total)).abs() < 1e-9);
            prop_assert!((e.alpha - (2.0 + agree)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&e.mean()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn datasets_are_a_function_of_the_seed(seed in any::<u64>()) {
        let sc = canonical("fig1").unwrap().with_seed(seed).scenario().unwrap();
        let a = generate_dataset(&sc).unwrap();
        let b = generate_dataset(&sc).unwrap();
        prop_assert_eq!(a.records, b.records);
        prop_assert_eq!(a.counterfactual, b.counterfactual);
    }
}
