use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::kernel::{
    ActionId, ClinicianId, Decision, DecisionKind, DomainId, InteractionRecord, Outcome, PatientId,
    PatientState, ReasonCode,
};
use crate::world_sim::{GroundTruth, Scenario};

/// Columns every dataset file must carry, in order.
pub const CORE_COLUMNS: [&str; 11] = [
    "t",
    "patient",
    "domain",
    "clinician",
    "contract",
    "rec_action",
    "decision",
    "alt_action",
    "outcome_quality",
    "outcome_observed",
    "reason_code",
];

/// Simulator extras written after the core columns; state features follow as
/// `s0`, `s1`, ...
pub const EXTRA_COLUMNS: [&str; 5] = ["state_cluster", "executed_action", "outcome_lag", "event_flag", "cf_quality"];

const OUTCOME_COLUMNS: [&str; 2] = ["outcome_quality", "outcome_observed"];

/// Records plus the simulator counterfactual column, when present.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub records: Vec<InteractionRecord>,
    pub counterfactual: Option<Vec<Option<f64>>>,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_dataset(
    path: &Path,
    scenario: &Scenario,
    records: &[InteractionRecord],
    counterfactual: &[Option<f64>],
) -> Result<()> {
    if counterfactual.len() != records.len() {
        return Err(LabError::DimensionMismatch {
            what: "counterfactual column",
            expected: records.len(),
            got: counterfactual.len(),
        });
    }
    let catalog = &scenario.catalog;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = CORE_COLUMNS.iter().chain(&EXTRA_COLUMNS).map(|s| s.to_string()).collect();
    header.extend((0..scenario.state_dim).map(|i| format!("s{i}")));
    w.write_record(&header)?;
    for (r, cf) in records.iter().zip(counterfactual) {
        let (quality, observed, lag, event) = match r.outcome() {
            Some(o) => (opt(o.quality()), o.observed.to_string(), o.lag.to_string(), o.event_flag.to_string()),
            None => Default::default(),
        };
        let mut row = vec![
            r.state.time_index.to_string(),
            r.state.patient_id.0.to_string(),
            scenario.config.domains[r.domain().index()].clone(),
            r.clinician.0.to_string(),
            catalog.contract(r.contract).name.clone(),
            catalog.action(r.recommendation).name.clone(),
            r.decision.kind().as_str().to_string(),
            r.decision.alternative().map(|a| catalog.action(a).name.clone()).unwrap_or_default(),
            quality,
            observed,
            r.reason.map(|x| x.as_str().to_string()).unwrap_or_default(),
            scenario.clusters[r.state.cluster].name.clone(),
            catalog.action(r.executed).name.clone(),
            lag,
            event,
            opt(*cf),
        ];
        row.extend(r.state.features.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

struct Columns(BTreeMap<String, usize>);

impl Columns {
    fn get<'r>(&self, row: &'r csv::StringRecord, name: &str) -> &'r str {
        self.0.get(name).and_then(|&i| row.get(i)).unwrap_or("")
    }
}

fn bad(line: u64, msg: impl std::fmt::Display) -> LabError {
    LabError::Dataset(format!("line {line}: {msg}"))
}

fn parse_num<T: std::str::FromStr>(line: u64, field: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| bad(line, format!("{field}: cannot parse {s:?}")))
}

fn action(line: u64, scenario: &Scenario, name: &str) -> Result<ActionId> {
    scenario
        .catalog
        .action_by_name(name)
        .ok_or_else(|| bad(line, format!("unknown action {name:?}")))
}

/// Reads a dataset written by [`write_dataset`] or any file with the core
/// columns. Names are resolved against the scenario's catalog; when the
/// simulator extras are missing the executed action is inferred from the
/// decision and the state features default to the cluster center.
pub fn read_dataset(path: &Path, scenario: &Scenario) -> Result<LoadedDataset> {
    let mut rd = csv::Reader::from_path(path)?;
    let header = rd.headers()?.clone();
    let cols = Columns(header.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect());
    let missing: Vec<&str> = CORE_COLUMNS.iter().copied().filter(|c| !cols.0.contains_key(*c)).collect();
    if !missing.is_empty() {
        return Err(LabError::Dataset(format!("missing columns: {}", missing.join(", "))));
    }
    let feature_cols: Vec<String> = (0..)
        .map(|i| format!("s{i}"))
        .take_while(|c| cols.0.contains_key(c))
        .collect();
    if !feature_cols.is_empty() && feature_cols.len() != scenario.state_dim {
        return Err(LabError::DimensionMismatch {
            what: "state feature columns",
            expected: scenario.state_dim,
            got: feature_cols.len(),
        });
    }
    let has_cf = cols.0.contains_key("cf_quality");
    let catalog = &scenario.catalog;
    let mut records = Vec::new();
    let mut counterfactual = Vec::new();
    for row in rd.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let f = |name: &str| cols.get(&row, name);
        let t: u32 = parse_num(line, "t", f("t"))?;
        let domain = scenario
            .config
            .domains
            .iter()
            .position(|d| d == f("domain"))
            .ok_or_else(|| bad(line, format!("unknown domain {:?}", f("domain"))))?;
        let contract = catalog
            .contract_by_name(f("contract"))
            .ok_or_else(|| bad(line, format!("unknown contract {:?}", f("contract"))))?;
        let rec = action(line, scenario, f("rec_action"))?;
        let kind = DecisionKind::parse(f("decision")).ok_or_else(|| bad(line, format!("unknown decision {:?}", f("decision"))))?;
        let alt = match f("alt_action") {
            "" => None,
            name => Some(action(line, scenario, name)?),
        };
        let decision = Decision::new(kind, alt).map_err(|e| bad(line, e))?;
        let cluster = match f("state_cluster") {
            "" => scenario
                .clusters
                .iter()
                .position(|c| c.domain.index() == domain)
                .ok_or_else(|| bad(line, "domain has no state cluster"))?,
            name => scenario
                .clusters
                .iter()
                .position(|c| c.name == name)
                .ok_or_else(|| bad(line, format!("unknown state cluster {name:?}")))?,
        };
        let executed = match f("executed_action") {
            "" => match kind {
                DecisionKind::Accept => rec,
                _ => alt.unwrap_or(catalog.default_action()),
            },
            name => action(line, scenario, name)?,
        };
        let features = if feature_cols.is_empty() {
            scenario.clusters[cluster].center.clone()
        } else {
            feature_cols
                .iter()
                .map(|c| parse_num(line, c, f(c)))
                .collect::<Result<Vec<f64>>>()?
        };
        let patient = PatientId(parse_num(line, "patient", f("patient"))?);
        let state = PatientState::new(patient, DomainId(domain), cluster, features, t)?;
        let reason = match f("reason_code") {
            "" => None,
            s => Some(ReasonCode::parse(s).ok_or_else(|| bad(line, format!("unknown reason code {s:?}")))?),
        };
        let clinician = ClinicianId(parse_num(line, "clinician", f("clinician"))?);
        let mut record = InteractionRecord::new(state, rec, decision, executed, clinician, contract, reason)
            .map_err(|e| bad(line, e))?;
        let lag: u32 = match f("outcome_lag") {
            "" => 0,
            s => parse_num(line, "outcome_lag", s)?,
        };
        match f("outcome_observed") {
            "" => {}
            "true" => {
                let q: f64 = parse_num(line, "outcome_quality", f("outcome_quality"))?;
                let event = f("event_flag") == "true";
                record.attach_outcome(Outcome::observed(q, event, lag).map_err(|e| bad(line, e))?)?;
            }
            "false" => record.attach_outcome(Outcome::missing(lag))?,
            s => return Err(bad(line, format!("outcome_observed must be true or false, got {s:?}"))),
        }
        if has_cf {
            counterfactual.push(match f("cf_quality") {
                "" => None,
                s => Some(parse_num(line, "cf_quality", s)?),
            });
        }
        records.push(record);
    }
    Ok(LoadedDataset {
        records,
        counterfactual: has_cf.then_some(counterfactual),
    })
}

/// Fails unless the file carries outcome columns, which every monitor that
/// looks at outcomes needs.
pub fn require_outcome_columns(path: &Path) -> Result<()> {
    let mut rd = csv::Reader::from_path(path)?;
    let header = rd.headers()?;
    let missing: Vec<&str> = OUTCOME_COLUMNS
        .iter()
        .copied()
        .filter(|c| !header.iter().any(|h| h == *c))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(LabError::Dataset(format!("missing outcome columns: {}", missing.join(", "))))
    }
}

/// Observable per-clinician metadata used for cold-start priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicianRow {
    pub clinician: u32,
    pub years_experience: f64,
}

pub fn write_clinicians(path: &Path, truth: &GroundTruth) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in &truth.clinicians {
        w.serialize(ClinicianRow {
            clinician: c.id.0,
            years_experience: c.years_experience,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_clinicians(path: &Path) -> Result<Vec<ClinicianRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.deserialize().map(|r| r.map_err(LabError::from)).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
