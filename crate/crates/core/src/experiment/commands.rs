use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::LabConfig;
use super::io::{
    read_clinicians, read_dataset, read_json, require_outcome_columns, write_clinicians, write_dataset, write_json,
    LoadedDataset,
};
use super::manifest::{timestamp, write_manifest};
use super::pipeline::{
    audit, heldout_pairs, meta_from_rows, run_closed_loop, summarize, train, AuditReport,
    TrainOutput, TrainSummary,
};
use crate::dual_learner::ClinicianMeta;
use crate::error::{LabError, Result};
use crate::kernel::{ClinicianId, DomainId, InteractionRecord};
use crate::monitors::band_name;
use crate::world_sim::{generate_dataset, Dataset, GroundTruth, Scenario};

pub const DATASET_FILE: &str = "dataset.csv";
pub const TRUTH_FILE: &str = "ground_truth.json";
pub const CLINICIANS_FILE: &str = "clinicians.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RATES_FILE: &str = "stratified_rates.csv";
pub const GAPS_FILE: &str = "gaps.csv";
pub const CONCORDANCE_FILE: &str = "concordance.csv";
pub const REPORT_FILE: &str = "monitor_report.json";

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Simulates the configured scenario (closed loop when configured) and writes
/// the dataset, ground truth, observable clinician metadata and the resolved
/// config into `dir`.
pub fn simulate_into(dir: &Path, cfg: &LabConfig) -> Result<(Scenario, Dataset)> {
    ensure_dir(dir)?;
    let scenario = cfg.scenario()?;
    let dataset = if cfg.closed_loop.rounds > 0 {
        run_closed_loop(&scenario, cfg)?.dataset
    } else {
        generate_dataset(&scenario)?
    };
    write_dataset(&dir.join(DATASET_FILE), &scenario, &dataset.records, &dataset.counterfactual)?;
    write_json(&dir.join(TRUTH_FILE), &dataset.truth)?;
    write_clinicians(&dir.join(CLINICIANS_FILE), &dataset.truth)?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_toml())?;
    Ok((scenario, dataset))
}

pub fn train_into(
    dir: &Path,
    records: &[InteractionRecord],
    scenario: &Scenario,
    cfg: &LabConfig,
    meta: &[ClinicianMeta],
) -> Result<(TrainOutput, TrainSummary)> {
    ensure_dir(dir)?;
    let heldout = heldout_pairs(scenario, cfg)?;
    let out = train(records, scenario, cfg, meta, &heldout)?;
    let summary = summarize(&out, scenario, cfg, records)?;
    let mut w = csv::Writer::from_path(dir.join(TRACE_FILE))?;
    for row in &out.state.trace {
        w.serialize(row)?;
    }
    if out.state.trace.is_empty() {
        w.write_record(["iteration", "loglik", "theta_delta", "kappa_delta", "event"])?;
    }
    w.flush()?;
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok((out, summary))
}

#[derive(Serialize)]
struct RateRow<'a> {
    domain: &'a str,
    band: String,
    window: u32,
    interactions: u64,
    overrides: u64,
    rate: f64,
}

#[derive(Serialize)]
struct GapCsvRow<'a> {
    domain: &'a str,
    window: u32,
    high_rate: Option<f64>,
    low_rate: Option<f64>,
    gap: Option<f64>,
}

#[derive(Serialize)]
struct ConcordanceRow {
    override_type: String,
    mass: f64,
    concordance: Option<f64>,
}

pub fn audit_into(
    dir: &Path,
    records: &[InteractionRecord],
    counterfactual: Option<&[Option<f64>]>,
    scenario: &Scenario,
    cfg: &LabConfig,
    kappa: &dyn Fn(ClinicianId, DomainId) -> f64,
    kappa_source: &str,
) -> Result<AuditReport> {
    ensure_dir(dir)?;
    let report = audit(records, counterfactual, scenario, cfg, kappa, kappa_source)?;
    let domains = &scenario.config.domains;
    let n_bands = cfg.monitors.band_edges.len() + 1;
    let mut w = csv::Writer::from_path(dir.join(RATES_FILE))?;
    let mut g = csv::Writer::from_path(dir.join(GAPS_FILE))?;
    match &report.rates {
        Some(rates) => {
            for s in &rates.strata {
                w.serialize(RateRow {
                    domain: &domains[s.domain.index()],
                    band: band_name(s.band, n_bands),
                    window: s.window,
                    interactions: s.interactions,
                    overrides: s.overrides,
                    rate: s.rate,
                })?;
            }
            for row in &rates.gaps {
                g.serialize(GapCsvRow {
                    domain: &domains[row.domain.index()],
                    window: row.window,
                    high_rate: row.high_rate,
                    low_rate: row.low_rate,
                    gap: row.gap,
                })?;
            }
        }
        None => {
            w.write_record(["domain", "band", "window", "interactions", "overrides", "rate"])?;
            g.write_record(["domain", "window", "high_rate", "low_rate", "gap"])?;
        }
    }
    w.flush()?;
    g.flush()?;
    let mut c = csv::Writer::from_path(dir.join(CONCORDANCE_FILE))?;
    c.write_record(["override_type", "mass", "concordance"])?;
    for row in report.concordance.iter().flatten() {
        c.serialize(ConcordanceRow {
            override_type: row.override_type.roman().to_string(),
            mass: row.mass,
            concordance: row.concordance,
        })?;
    }
    c.flush()?;
    write_json(&dir.join(REPORT_FILE), &report)?;
    Ok(report)
}

pub fn cmd_simulate(cfg: &LabConfig, out: &Path) -> Result<Dataset> {
    let started = timestamp();
    let (_, dataset) = simulate_into(out, cfg)?;
    write_manifest(out, "simulate", cfg, started)?;
    Ok(dataset)
}

/// Accepts either a dataset file or a directory written by `simulate`.
pub fn dataset_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(DATASET_FILE)
    } else {
        path.to_path_buf()
    }
}

fn sibling(dataset: &Path, name: &str) -> Option<PathBuf> {
    let p = dataset.parent().unwrap_or(Path::new(".")).join(name);
    p.exists().then_some(p)
}

fn load(dataset: &Path, scenario: &Scenario) -> Result<LoadedDataset> {
    if std::fs::metadata(dataset)?.len() == 0 {
        return Ok(LoadedDataset {
            records: Vec::new(),
            counterfactual: None,
        });
    }
    read_dataset(dataset, scenario)
}

/// Trains on a stored dataset. Cold-start priors use the clinician metadata
/// file next to the dataset when there is one.
pub fn cmd_train(dataset: &Path, cfg: &LabConfig, out: &Path) -> Result<TrainSummary> {
    let started = timestamp();
    let scenario = cfg.scenario()?;
    let file = dataset_file(dataset);
    let data = load(&file, &scenario)?;
    if data.records.is_empty() {
        return Err(LabError::Dataset("no data: the dataset has no interaction records".into()));
    }
    let meta = match sibling(&file, CLINICIANS_FILE) {
        Some(p) => meta_from_rows(&read_clinicians(&p)?),
        None => Vec::new(),
    };
    let (_, summary) = train_into(out, &data.records, &scenario, cfg, &meta)?;
    write_manifest(out, "train", cfg, started)?;
    Ok(summary)
}

/// Capability used to band clinicians in an audit: the trained estimates
/// when a training directory is given, else the simulator's initial values
/// when ground truth sits next to the dataset, else the diffuse prior mean.
fn audit_kappa(
    file: &Path,
    trace: Option<&Path>,
    domains: &[String],
) -> Result<(Box<dyn Fn(ClinicianId, DomainId) -> f64>, String)> {
    if let Some(dir) = trace {
        let path = if dir.is_dir() { dir.join(SUMMARY_FILE) } else { dir.to_path_buf() };
        let summary: TrainSummary = read_json(&path)?;
        let table: std::collections::BTreeMap<(u32, String), f64> = summary
            .kappa
            .iter()
            .map(|k| ((k.clinician, k.domain.clone()), k.mean))
            .collect();
        let domains = domains.to_vec();
        return Ok((
            Box::new(move |c, d| {
                domains
                    .get(d.index())
                    .and_then(|name| table.get(&(c.0, name.clone())))
                    .copied()
                    .unwrap_or(0.5)
            }),
            "estimated".into(),
        ));
    }
    if let Some(p) = sibling(file, TRUTH_FILE) {
        let truth: GroundTruth = read_json(&p)?;
        return Ok((Box::new(move |c, d| truth.initial_kappa(c, d)), "ground_truth_initial".into()));
    }
    Ok((Box::new(|_, _| 0.5), "prior_mean".into()))
}

pub fn cmd_audit(dataset: &Path, trace: Option<&Path>, cfg: &LabConfig, out: &Path) -> Result<AuditReport> {
    let started = timestamp();
    let scenario = cfg.scenario()?;
    let file = dataset_file(dataset);
    let data = load(&file, &scenario)?;
    if !data.records.is_empty() {
        require_outcome_columns(&file)?;
    }
    let (kappa, source) = audit_kappa(&file, trace, &scenario.config.domains)?;
    let report = audit_into(
        out,
        &data.records,
        data.counterfactual.as_deref(),
        &scenario,
        cfg,
        &*kappa,
        &source,
    )?;
    write_manifest(out, "audit", cfg, started)?;
    Ok(report)
}
