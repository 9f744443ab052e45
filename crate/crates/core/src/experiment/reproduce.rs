use std::path::Path;

use serde::{Deserialize, Serialize};

use super::commands::{audit_into, simulate_into, train_into};
use super::config::LabConfig;
use super::io::write_json;
use super::manifest::{timestamp, write_manifest};
use super::pipeline::{heldout_pairs, meta_from_truth};
use super::scenarios::canonical;
use crate::classifier::{classify_records, OverrideType};
use crate::dual_learner::{anchor_validate, Weighting};
use crate::error::{LabError, Result};
use crate::monitors::concordance_by_type;
use crate::stats::spearman;
use crate::world_sim::{truth_model, ArchetypeKind};

/// Experiments accepted by [`reproduce`].
pub const EXPERIMENTS: &[&str] = &[
    "fig1",
    "identifiability",
    "flywheel",
    "stacking",
    "amplification",
    "tiers",
    "monitors",
];

pub const VERDICT_FILE: &str = "verdict.json";

/// Largest quarter-to-quarter widening of the override-rate gap that still
/// counts as narrowing.
pub const FLYWHEEL_NOISE_BAND: f64 = 0.05;
/// Override rates the tiers scenario is built to produce, low band first.
pub const TIER_TARGETS: [f64; 3] = [0.80, 0.55, 0.15];
pub const TIER_TOLERANCE: f64 = 0.02;
pub const MIN_TYPE_OUTCOMES: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub expected: String,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, value: Option<f64>, expected: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.to_string(),
            value,
            expected: expected.into(),
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub experiment: String,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
}

/// Runs a named experiment end to end under its canonical config, writing
/// every intermediate artifact and a verdict into `out/<name>`.
pub fn reproduce(name: &str, out: &Path, seed: Option<u64>) -> Result<Verdict> {
    if !EXPERIMENTS.contains(&name) {
        return Err(LabError::Unknown {
            kind: "experiment",
            name: name.to_string(),
        });
    }
    let started = timestamp();
    let dir = out.join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    let load = |scenario: &str| -> Result<LabConfig> {
        let cfg = canonical(scenario)?;
        Ok(match seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        })
    };
    let cfg = load(name)?;
    let checks = match name {
        "fig1" => fig1(&dir, &cfg)?,
        "identifiability" => identifiability(&dir, &cfg, &load("homogeneous")?)?,
        "flywheel" => flywheel(&dir, &cfg)?,
        "stacking" => stacking(&dir, &cfg)?,
        "amplification" => amplification(&dir, &cfg)?,
        "tiers" => tiers(&dir, &cfg)?,
        "monitors" => monitors(&dir, &cfg)?,
        _ => unreachable!("checked against the experiment list"),
    };
    let verdict = Verdict {
        experiment: name.to_string(),
        seed: cfg.scenario.seed,
        pass: checks.iter().all(|c| c.pass),
        checks,
    };
    write_json(&dir.join(VERDICT_FILE), &verdict)?;
    write_manifest(&dir, &format!("reproduce {name}"), &cfg, started)?;
    Ok(verdict)
}

fn with_weighting(cfg: &LabConfig, weighting: Weighting) -> LabConfig {
    let mut c = cfg.clone();
    c.training.weighting = weighting;
    c
}

fn fig1(dir: &Path, cfg: &LabConfig) -> Result<Vec<Check>> {
    let (scenario, data) = simulate_into(&dir.join("data"), cfg)?;
    let meta = meta_from_truth(&data.truth);
    let cluster = &scenario.clusters[0].name;
    let mut checks = Vec::new();
    for (weighting, sign) in [(Weighting::Naive, -1.0), (Weighting::Kappa, 1.0)] {
        let c = with_weighting(cfg, weighting);
        let (_, summary) = train_into(&dir.join(weighting.as_str()), &data.records, &scenario, &c, &meta)?;
        let m = summary.margin(cluster, "sglt2i", "referral");
        let (name, expected) = if sign < 0.0 {
            ("naive margin(sglt2i, referral)", "< 0")
        } else {
            ("kappa margin(sglt2i, referral)", "> 0")
        };
        checks.push(Check::new(name, m, expected, m.is_some_and(|x| x * sign > 0.0)));
    }
    let t = &data.truth;
    audit_into(
        &dir.join("audit"),
        &data.records,
        Some(&data.counterfactual),
        &scenario,
        cfg,
        &|c, d| t.initial_kappa(c, d),
        "ground_truth_initial",
    )?;
    Ok(checks)
}

fn identifiability(dir: &Path, cfg: &LabConfig, homogeneous: &LabConfig) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let (scenario, data) = simulate_into(&dir.join("heterogeneous/data"), cfg)?;
    let (out, _) = train_into(
        &dir.join("heterogeneous/train"),
        &data.records,
        &scenario,
        cfg,
        &meta_from_truth(&data.truth),
    )?;
    let (est, tru): (Vec<f64>, Vec<f64>) = out
        .state
        .kappa
        .iter()
        .map(|e| (e.mean(), data.truth.initial_kappa(e.clinician, e.domain)))
        .unzip();
    let rho = spearman(&est, &tru);
    checks.push(Check::new(
        "heterogeneous spearman(kappa_hat, kappa)",
        rho,
        ">= 0.8",
        rho.is_some_and(|r| r >= 0.8),
    ));
    let flagged = out.state.identifiability.as_ref().map(|r| r.non_identifiable);
    checks.push(Check::new(
        "heterogeneous non-identifiable",
        flagged.map(f64::from_bool),
        "false",
        flagged == Some(false),
    ));

    let (scenario, data) = simulate_into(&dir.join("homogeneous/data"), homogeneous)?;
    let (out, _) = train_into(
        &dir.join("homogeneous/train"),
        &data.records,
        &scenario,
        homogeneous,
        &meta_from_truth(&data.truth),
    )?;
    let flagged = out.state.identifiability.as_ref().map(|r| r.non_identifiable);
    checks.push(Check::new(
        "homogeneous non-identifiable",
        flagged.map(f64::from_bool),
        "true",
        flagged == Some(true),
    ));
    Ok(checks)
}

trait FromBool {
    fn from_bool(b: bool) -> f64;
}

impl FromBool for f64 {
    fn from_bool(b: bool) -> f64 {
        if b {
            1.0
        } else {
            0.0
        }
    }
}

/// Absolute override-rate gap per window of the first domain.
pub fn gap_series(report: &super::pipeline::AuditReport) -> Vec<Option<f64>> {
    report
        .rates
        .as_ref()
        .map(|r| r.gaps.iter().filter(|g| g.domain.index() == 0).map(|g| g.gap.map(f64::abs)).collect())
        .unwrap_or_default()
}

fn flywheel(dir: &Path, cfg: &LabConfig) -> Result<Vec<Check>> {
    let (scenario, data) = simulate_into(&dir.join("data"), cfg)?;
    let t = &data.truth;
    let report = audit_into(
        &dir.join("audit"),
        &data.records,
        Some(&data.counterfactual),
        &scenario,
        cfg,
        &|c, d| t.initial_kappa(c, d),
        "ground_truth_initial",
    )?;
    let gaps = gap_series(&report);
    let first = gaps.first().copied().flatten();
    let last = gaps.last().copied().flatten();
    let complete = gaps.len() >= 2 && gaps.iter().all(Option::is_some);
    let monotone = complete
        && gaps
            .windows(2)
            .all(|w| w[1].unwrap() <= w[0].unwrap() + FLYWHEEL_NOISE_BAND);
    Ok(vec![
        Check::new(
            "final |gap| below first |gap|",
            last.zip(first).map(|(l, f)| l - f),
            "< 0",
            matches!((first, last), (Some(f), Some(l)) if l < f),
        ),
        Check::new(
            "|gap| narrows window to window",
            Some(f64::from_bool(monotone)),
            format!("every step widens by at most {FLYWHEEL_NOISE_BAND}"),
            monotone,
        ),
    ])
}

fn stacking(dir: &Path, cfg: &LabConfig) -> Result<Vec<Check>> {
    let (scenario, data) = simulate_into(&dir.join("data"), cfg)?;
    let t = &data.truth;
    let report = audit_into(
        &dir.join("audit"),
        &data.records,
        Some(&data.counterfactual),
        &scenario,
        cfg,
        &|c, d| t.initial_kappa(c, d),
        "ground_truth_initial",
    )?;
    let suppressed: Vec<_> = report
        .monitors
        .suppression
        .as_ref()
        .map(|s| s.suppressed.iter().map(|x| x.action).collect())
        .unwrap_or_default();
    Ok(scenario
        .catalog
        .action_ids()
        .filter(|a| scenario.first_line[a.index()])
        .map(|a| {
            let hit = suppressed.contains(&a);
            Check::new(
                &format!("{} in suppressed actions", scenario.catalog.action(a).name),
                Some(f64::from_bool(hit)),
                "true",
                hit,
            )
        })
        .collect())
}

fn amplification(dir: &Path, cfg: &LabConfig) -> Result<Vec<Check>> {
    let (scenario, data) = simulate_into(&dir.join("data"), cfg)?;
    let (out, _) = train_into(
        &dir.join("train"),
        &data.records,
        &scenario,
        cfg,
        &meta_from_truth(&data.truth),
    )?;
    let learned = out
        .anchor()
        .copied()
        .ok_or_else(|| LabError::Config("amplification needs at least one training round".into()))?;
    let heldout = heldout_pairs(&scenario, cfg)?;
    let a = &cfg.training.anchor;
    let truth = anchor_validate(&truth_model(&scenario)?, &scenario.catalog, &heldout, a.threshold, a.min_pairs)?;
    write_json(&dir.join("truth_anchor.json"), &truth)?;
    Ok(vec![
        Check::new(
            "true-reward concordance minus learned concordance",
            Some(truth.concordance - learned.concordance),
            "> 0",
            truth.concordance > learned.concordance,
        ),
        Check::new(
            "learned model fails the anchor",
            Some(learned.concordance),
            format!("< {}", a.threshold),
            !learned.pass,
        ),
        Check::new(
            "reinitialisation recorded",
            Some(f64::from_bool(out.reinitialized)),
            "true",
            out.reinitialized == (a.max_reinits > 0),
        ),
    ])
}

fn tiers(dir: &Path, cfg: &LabConfig) -> Result<Vec<Check>> {
    let (scenario, data) = simulate_into(&dir.join("data"), cfg)?;
    let t = &data.truth;
    let report = audit_into(
        &dir.join("audit"),
        &data.records,
        Some(&data.counterfactual),
        &scenario,
        cfg,
        &|c, d| t.initial_kappa(c, d),
        "ground_truth_initial",
    )?;
    let rates = report.rates.as_ref();
    Ok(TIER_TARGETS
        .iter()
        .enumerate()
        .map(|(band, &target)| {
            let rate = rates.and_then(|r| {
                let (o, n) = r
                    .strata
                    .iter()
                    .filter(|s| s.band == band)
                    .fold((0u64, 0u64), |(o, n), s| (o + s.overrides, n + s.interactions));
                (n > 0).then(|| o as f64 / n as f64)
            });
            Check::new(
                &format!("override rate, band {band}"),
                rate,
                format!("{target} +/- {TIER_TOLERANCE}"),
                rate.is_some_and(|r| (r - target).abs() <= TIER_TOLERANCE),
            )
        })
        .collect())
}

fn monitors(dir: &Path, cfg: &LabConfig) -> Result<Vec<Check>> {
    let (scenario, data) = simulate_into(&dir.join("data"), cfg)?;
    let t = &data.truth;
    let kappa = |c, d| t.initial_kappa(c, d);
    let report = audit_into(
        &dir.join("audit"),
        &data.records,
        Some(&data.counterfactual),
        &scenario,
        cfg,
        &kappa,
        "ground_truth_initial",
    )?;
    let mut checks = Vec::new();
    let automation: Vec<_> = t
        .clinicians
        .iter()
        .filter(|c| c.kind == ArchetypeKind::AutomationBiased)
        .map(|c| c.id)
        .collect();
    let flagged = automation
        .iter()
        .filter(|id| report.monitors.automation_flags.iter().any(|f| f.clinician == **id))
        .count();
    checks.push(Check::new(
        "automation-biased clinicians flagged",
        Some(flagged as f64),
        format!("{}", automation.len()),
        !automation.is_empty() && flagged == automation.len(),
    ));

    let row = |rows: &[crate::monitors::TypeConcordance], ty: OverrideType| {
        rows.iter().find(|r| r.override_type == ty).cloned()
    };
    let all = report.concordance.clone().unwrap_or_default();
    let v = row(&all, OverrideType::Capability);
    let v_ok = v
        .as_ref()
        .is_some_and(|r| r.mass >= MIN_TYPE_OUTCOMES && r.concordance.is_some_and(|c| c < 0.5));
    checks.push(Check::new(
        "type V concordance",
        v.and_then(|r| r.concordance),
        format!("< 0.5 over >= {MIN_TYPE_OUTCOMES} outcomes"),
        v_ok,
    ));

    let posteriors = classify_records(
        &data.records,
        &scenario.catalog,
        kappa,
        cfg.classifier.cohort_kappa_threshold,
        &cfg.classifier.weights,
    )?;
    let expert: Vec<usize> = (0..data.records.len())
        .filter(|&i| t.clinicians[data.records[i].clinician.0 as usize].kind == ArchetypeKind::Expert)
        .collect();
    let records: Vec<_> = expert.iter().map(|&i| data.records[i].clone()).collect();
    let cf: Vec<_> = expert.iter().map(|&i| data.counterfactual[i]).collect();
    let post: Vec<_> = expert.iter().map(|&i| posteriors[i]).collect();
    let rows = concordance_by_type(&records, &cf, &post, cfg.monitors.min_outcomes_per_type)?;
    let ii = row(&rows, OverrideType::Judgment);
    let ii_ok = ii
        .as_ref()
        .is_some_and(|r| r.mass >= MIN_TYPE_OUTCOMES && r.concordance.is_some_and(|c| c > 0.5));
    checks.push(Check::new(
        "expert type II concordance",
        ii.and_then(|r| r.concordance),
        format!("> 0.5 over >= {MIN_TYPE_OUTCOMES} outcomes"),
        ii_ok,
    ));
    Ok(checks)
}
