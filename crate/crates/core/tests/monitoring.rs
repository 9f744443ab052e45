mod common;

use override_lab::classifier::{OverrideType, TypePosterior};
use override_lab::kernel::{ActionId, ClinicianId, ContractId, Decision, DomainId, InteractionRecord, Outcome};
use override_lab::monitors::{
    acceptance_entropy, concordance_by_type, probe_slots, stratified_override_rates, suppression_audit,
    MonitorConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stream(clinician: u32, accepts: usize, overrides: usize) -> Vec<InteractionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(clinician as u64);
    let state = common::random_state(&mut rng, 1);
    let mk = |decision, executed| {
        InteractionRecord::new(state.clone(), ActionId(1), decision, executed, ClinicianId(clinician), ContractId(0), None)
            .unwrap()
    };
    let mut out: Vec<_> = (0..accepts).map(|_| mk(Decision::accept(), ActionId(1))).collect();
    out.extend((0..overrides).map(|_| mk(Decision::reject(Some(ActionId(2))), ActionId(2))));
    out
}

#[test]
fn entropy_flags_only_confident_acceptance() {
    let cfg = MonitorConfig::default();
    let mut records = stream(0, 95, 5);
    records.extend(stream(1, 50, 50));
    records.extend(stream(2, 5, 95));
    let rows = acceptance_entropy(&records, None, cfg.entropy_threshold, cfg.accept_ceiling);
    assert_eq!(rows.len(), 3);
    assert!((rows[0].entropy_bits - common::entropy_bits(0.95)).abs() < 1e-12);
    assert_eq!((rows[0].entropy_bits * 1e4).round() / 1e4, 0.2864);
    assert!(rows[0].flagged);
    assert!((rows[1].entropy_bits - 1.0).abs() < 1e-12);
    assert!(!rows[1].flagged);
    assert!(rows[2].entropy_bits < cfg.entropy_threshold);
    assert!(!rows[2].flagged, "low acceptance is not automation bias");
}

#[test]
fn entropy_window_filters_by_time() {
    let records = stream(0, 10, 0);
    let t = records[0].state.time_index;
    assert_eq!(acceptance_entropy(&records, Some((t, t + 1)), 0.4, 0.9).len(), 1);
    assert!(acceptance_entropy(&records, Some((t + 1, t + 2)), 0.4, 0.9).is_empty());
}

#[test]
fn all_accept_stream_has_no_gap() {
    let mut records = stream(0, 40, 0);
    records.extend(stream(1, 40, 0));
    let kappa = |c: ClinicianId, _| if c.0 == 0 { 0.1 } else { 0.9 };
    let rates = stratified_override_rates(&records, kappa, &[0.4, 0.7], 1000).unwrap();
    assert!(rates.strata.iter().all(|s| s.rate == 0.0 && s.overrides == 0));
    assert!(rates.gaps.iter().all(|g| g.gap == Some(0.0)));
    let total: u64 = rates.strata.iter().map(|s| s.interactions).sum();
    assert_eq!(total, 80);
}

#[test]
fn gap_is_high_minus_low_band() {
    let mut records = stream(0, 20, 80);
    records.extend(stream(1, 90, 10));
    let kappa = |c: ClinicianId, _| if c.0 == 0 { 0.1 } else { 0.9 };
    let rates = stratified_override_rates(&records, kappa, &[0.4, 0.7], 1000).unwrap();
    assert!((rates.gap(DomainId(0), 0).unwrap() - (0.1 - 0.8)).abs() < 1e-12);
    assert_eq!(rates.rate(1, DomainId(0), 0), None, "empty mid band is omitted");
}

#[test]
fn ties_with_the_counterfactual_score_one_half() {
    let records: Vec<_> = stream(0, 0, 20)
        .into_iter()
        .map(|mut r| {
            r.attach_outcome(Outcome::observed(0.3, false, 0).unwrap()).unwrap();
            r
        })
        .collect();
    let cf = vec![Some(0.3); records.len()];
    let post = vec![Some(TypePosterior::pure(OverrideType::Judgment)); records.len()];
    let rows = concordance_by_type(&records, &cf, &post, 10.0).unwrap();
    let ii = rows.iter().find(|r| r.override_type == OverrideType::Judgment).unwrap();
    assert_eq!((ii.mass, ii.concordance), (20.0, Some(0.5)));
    let v = rows.iter().find(|r| r.override_type == OverrideType::Capability).unwrap();
    assert_eq!((v.mass, v.concordance), (0.0, None));
    assert!(concordance_by_type(&records, &cf[1..], &post, 1.0).is_err());
}

#[test]
fn suppression_flags_only_starved_first_line_actions() {
    let first_line = [false, true, true];
    let balanced = vec![vec![ActionId(0), ActionId(1), ActionId(2)]; 3];
    let r = suppression_audit(&balanced, &first_line, 0.05, 0.01, 500, 1).unwrap();
    assert!(r.suppressed.is_empty() && r.probe_schedule.is_empty());

    let starved = vec![
        vec![ActionId(1), ActionId(2)],
        vec![ActionId(1); 40],
        vec![ActionId(0); 40],
    ];
    let r = suppression_audit(&starved, &first_line, 0.05, 0.01, 500, 1).unwrap();
    let flagged: Vec<_> = r.suppressed.iter().map(|s| (s.action, s.first_flagged_round)).collect();
    assert_eq!(flagged, vec![(ActionId(2), 1), (ActionId(1), 2)]);
    assert_eq!(r.probe_schedule.len(), 2);
    for p in &r.probe_schedule {
        assert!(!p.slots.is_empty() && p.slots.iter().all(|s| *s < 500));
    }
    assert!(suppression_audit(&starved[..1], &first_line, 0.05, 0.01, 500, 1).is_err());
}

#[test]
fn probe_schedule_is_deterministic() {
    let a = probe_slots(42, ActionId(3), 10_000, 0.01);
    assert_eq!(a, probe_slots(42, ActionId(3), 10_000, 0.01));
    assert_ne!(a, probe_slots(42, ActionId(4), 10_000, 0.01));
    assert!((a.len() as f64 - 100.0).abs() < 40.0, "{} slots", a.len());
    assert_eq!(probe_slots(1, ActionId(0), 3, 0.0).len(), 1);
    assert!(probe_slots(1, ActionId(0), 0, 0.5).is_empty());
}
