//! Override typing: turns each override into a posterior over five override
//! types and converts that posterior into training weights.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::kernel::{ActionId, Catalog, ClinicianId, DecisionKind, DomainId, InteractionRecord, ReasonCode};

pub const N_TYPES: usize = 5;
pub const N_FEATURES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrideType {
    /// I: missing patient context.
    Context,
    /// II: clinical judgment that disagrees with the model.
    Judgment,
    /// III: workflow friction unrelated to the recommendation.
    Workflow,
    /// IV: institutional protocol.
    Protocol,
    /// V: the clinician lacks capability to act on the recommendation.
    Capability,
}

impl OverrideType {
    pub const ALL: [OverrideType; N_TYPES] = [
        OverrideType::Context,
        OverrideType::Judgment,
        OverrideType::Workflow,
        OverrideType::Protocol,
        OverrideType::Capability,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OverrideType::Context => "context",
            OverrideType::Judgment => "judgment",
            OverrideType::Workflow => "workflow",
            OverrideType::Protocol => "protocol",
            OverrideType::Capability => "capability",
        }
    }

    pub fn roman(self) -> &'static str {
        ["I", "II", "III", "IV", "V"][self.index()]
    }

    /// The type a structured reason code points to.
    pub fn for_reason(reason: ReasonCode) -> Self {
        match reason {
            ReasonCode::PatientPreference => OverrideType::Context,
            ReasonCode::Other => OverrideType::Judgment,
            ReasonCode::NoTime => OverrideType::Workflow,
            ReasonCode::Protocol => OverrideType::Protocol,
            ReasonCode::NotComfortable => OverrideType::Capability,
        }
    }
}

/// Probability distribution over the five override types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; N_TYPES]", into = "[f64; N_TYPES]")]
pub struct TypePosterior {
    probs: [f64; N_TYPES],
}

impl TryFrom<[f64; N_TYPES]> for TypePosterior {
    type Error = LabError;
    fn try_from(probs: [f64; N_TYPES]) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<TypePosterior> for [f64; N_TYPES] {
    fn from(p: TypePosterior) -> Self {
        p.probs
    }
}

impl TypePosterior {
    pub fn new(probs: [f64; N_TYPES]) -> Result<Self> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(LabError::NonFinite("type posterior"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(LabError::OutOfRange {
                name: "type posterior total",
                value: total,
                range: "1 +/- 1e-9",
            });
        }
        Ok(Self { probs })
    }

    pub fn pure(t: OverrideType) -> Self {
        let mut probs = [0.0; N_TYPES];
        probs[t.index()] = 1.0;
        Self { probs }
    }

    pub fn uniform() -> Self {
        Self {
            probs: [1.0 / N_TYPES as f64; N_TYPES],
        }
    }

    /// `w * self + (1 - w) * other`.
    pub fn mix(&self, other: &Self, w: f64) -> Self {
        let mut probs = [0.0; N_TYPES];
        for (i, p) in probs.iter_mut().enumerate() {
            *p = w * self.probs[i] + (1.0 - w) * other.probs[i];
        }
        Self { probs }
    }

    pub fn probs(&self) -> &[f64; N_TYPES] {
        &self.probs
    }

    pub fn prob(&self, t: OverrideType) -> f64 {
        self.probs[t.index()]
    }

    /// Most probable type; ties go to the lower type number.
    pub fn argmax(&self) -> OverrideType {
        let mut best = 0;
        for i in 1..N_TYPES {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        OverrideType::ALL[best]
    }
}

/// Evidence about why an override happened. Components that cannot be
/// computed are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideSignals {
    /// Distance between alternative and recommendation encodings.
    pub proximity: Option<f64>,
    /// Alternative shares the recommendation's therapeutic class.
    pub class_preserved: Option<bool>,
    pub clinician_domain_override_rate: Option<f64>,
    /// Acceptance rate of the same recommendation in the same state cluster
    /// among high-capability clinicians.
    pub cohort_high_kappa_accept_rate: Option<f64>,
    pub structured_reason: Option<ReasonCode>,
}

impl OverrideSignals {
    /// Fixed-length design vector:
    /// `[bias, class_preserved, substitution, closeness, override_rate,
    ///   cohort_accept, no_alternative, override_rate * cohort_accept]`.
    /// Absent components contribute 0.
    pub fn design(&self) -> [f64; N_FEATURES] {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let rate = self.clinician_domain_override_rate.unwrap_or(0.0);
        let cohort = self.cohort_high_kappa_accept_rate.unwrap_or(0.0);
        [
            1.0,
            flag(self.class_preserved == Some(true)),
            flag(self.class_preserved == Some(false)),
            self.proximity.map_or(0.0, |d| (-d).exp()),
            rate,
            cohort,
            flag(self.proximity.is_none()),
            rate * cohort,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("clinician_domain_override_rate", self.clinician_domain_override_rate),
            ("cohort_high_kappa_accept_rate", self.cohort_high_kappa_accept_rate),
        ] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(LabError::OutOfRange {
                        name,
                        value: v,
                        range: "[0, 1]",
                    });
                }
            }
        }
        if let Some(d) = self.proximity {
            if !(d.is_finite() && d >= 0.0) {
                return Err(LabError::OutOfRange {
                    name: "proximity",
                    value: d,
                    range: "[0, inf)",
                });
            }
        }
        Ok(())
    }
}

/// Override and interaction counts per (clinician, domain).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OverrideHistory {
    counts: BTreeMap<(ClinicianId, DomainId), (u64, u64)>,
}

impl OverrideHistory {
    pub fn from_records(records: &[InteractionRecord]) -> Self {
        let mut counts = BTreeMap::new();
        for r in records {
            let e = counts.entry((r.clinician, r.domain())).or_insert((0, 0));
            e.0 += u64::from(r.is_override());
            e.1 += 1;
        }
        Self { counts }
    }

    pub fn rate(&self, clinician: ClinicianId, domain: DomainId) -> Option<f64> {
        self.counts
            .get(&(clinician, domain))
            .filter(|(_, n)| *n > 0)
            .map(|&(o, n)| o as f64 / n as f64)
    }
}

/// Acceptance of each (state cluster, recommendation) among clinicians whose
/// estimated capability is at least the cohort threshold.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CohortStats {
    counts: BTreeMap<(usize, ActionId), (u64, u64)>,
}

impl CohortStats {
    pub fn from_records(
        records: &[InteractionRecord],
        kappa: impl Fn(ClinicianId, DomainId) -> f64,
        threshold: f64,
    ) -> Self {
        let mut counts = BTreeMap::new();
        for r in records {
            if kappa(r.clinician, r.domain()) >= threshold {
                let e = counts.entry((r.state.cluster, r.recommendation)).or_insert((0, 0));
                e.0 += u64::from(!r.is_override());
                e.1 += 1;
            }
        }
        Self { counts }
    }

    pub fn accept_rate(&self, cluster: usize, rec: ActionId) -> Option<f64> {
        self.counts
            .get(&(cluster, rec))
            .filter(|(_, n)| *n > 0)
            .map(|&(a, n)| a as f64 / n as f64)
    }
}

pub fn extract_signals(
    record: &InteractionRecord,
    catalog: &Catalog,
    history: &OverrideHistory,
    cohort: &CohortStats,
) -> Result<OverrideSignals> {
    if record.decision.kind() == DecisionKind::Accept {
        return Err(LabError::SignalsOnAccept);
    }
    let alt = record.decision.alternative();
    Ok(OverrideSignals {
        proximity: alt.map(|a| catalog.proximity(a, record.recommendation)),
        class_preserved: alt.map(|a| catalog.action(a).class == catalog.action(record.recommendation).class),
        clinician_domain_override_rate: history.rate(record.clinician, record.domain()),
        cohort_high_kappa_accept_rate: cohort.accept_rate(record.state.cluster, record.recommendation),
        structured_reason: record.reason,
    })
}

/// Per-type linear score weights over [`OverrideSignals::design`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierWeights {
    pub context: [f64; N_FEATURES],
    pub judgment: [f64; N_FEATURES],
    pub workflow: [f64; N_FEATURES],
    pub protocol: [f64; N_FEATURES],
    pub capability: [f64; N_FEATURES],
    /// Logit bonus added to the type matching a captured structured reason.
    pub reason_bonus: f64,
}

impl ClassifierWeights {
    pub fn zeros() -> Self {
        Self {
            context: [0.0; N_FEATURES],
            judgment: [0.0; N_FEATURES],
            workflow: [0.0; N_FEATURES],
            protocol: [0.0; N_FEATURES],
            capability: [0.0; N_FEATURES],
            reason_bonus: 0.0,
        }
    }

    fn row(&self, t: OverrideType) -> &[f64; N_FEATURES] {
        match t {
            OverrideType::Context => &self.context,
            OverrideType::Judgment => &self.judgment,
            OverrideType::Workflow => &self.workflow,
            OverrideType::Protocol => &self.protocol,
            OverrideType::Capability => &self.capability,
        }
    }
}

impl Default for ClassifierWeights {
    fn default() -> Self {
        //            bias  keep  subst close rate  cohort noalt rate*cohort
        Self {
            context: [0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            judgment: [0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, -2.0],
            workflow: [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.5, 0.0],
            protocol: [-1.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            capability: [-1.0, 0.0, 0.5, 0.0, 1.0, 0.0, 0.0, 4.0],
            reason_bonus: 4.0,
        }
    }
}

/// Softmax over per-type linear scores of the signals.
pub fn classify_override(signals: &OverrideSignals, weights: &ClassifierWeights) -> TypePosterior {
    let x = signals.design();
    let mut logits = [0.0; N_TYPES];
    for t in OverrideType::ALL {
        logits[t.index()] = weights.row(t).iter().zip(&x).map(|(w, v)| w * v).sum();
    }
    if let Some(reason) = signals.structured_reason {
        logits[OverrideType::for_reason(reason).index()] += weights.reason_bonus;
    }
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs = logits.map(|l| (l - top).exp());
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    TypePosterior { probs }
}

/// Per-type (reward, capability) training weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassWeightTable {
    pub context: (f64, f64),
    pub judgment: (f64, f64),
    pub workflow: (f64, f64),
    pub protocol: (f64, f64),
    pub capability: (f64, f64),
}

impl Default for ClassWeightTable {
    fn default() -> Self {
        Self {
            context: (0.5, 0.5),
            judgment: (1.0, 1.0),
            workflow: (0.0, 0.0),
            protocol: (0.0, 0.0),
            capability: (0.25, 1.0),
        }
    }
}

impl ClassWeightTable {
    pub fn get(&self, t: OverrideType) -> (f64, f64) {
        match t {
            OverrideType::Context => self.context,
            OverrideType::Judgment => self.judgment,
            OverrideType::Workflow => self.workflow,
            OverrideType::Protocol => self.protocol,
            OverrideType::Capability => self.capability,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in OverrideType::ALL {
            let (r, c) = self.get(t);
            if !(r.is_finite() && c.is_finite() && r >= 0.0 && c >= 0.0) {
                return Err(LabError::Config(format!(
                    "class weights for {} must be finite and non-negative",
                    t.as_str()
                )));
            }
        }
        Ok(())
    }
}

/// Posterior-weighted average of the per-type weights:
/// `(reward_class_weight, capability_class_weight)`.
pub fn class_weights(posterior: &TypePosterior, table: &ClassWeightTable) -> (f64, f64) {
    let mut reward = 0.0;
    let mut capability = 0.0;
    for t in OverrideType::ALL {
        let p = posterior.prob(t);
        let (r, c) = table.get(t);
        reward += p * r;
        capability += p * c;
    }
    (reward, capability)
}

/// Classifies every override in `records`. Accepts map to `None`.
pub fn classify_records(
    records: &[InteractionRecord],
    catalog: &Catalog,
    kappa: impl Fn(ClinicianId, DomainId) -> f64,
    cohort_threshold: f64,
    weights: &ClassifierWeights,
) -> Result<Vec<Option<TypePosterior>>> {
    let history = OverrideHistory::from_records(records);
    let cohort = CohortStats::from_records(records, kappa, cohort_threshold);
    records
        .iter()
        .map(|r| {
            if r.is_override() {
                let s = extract_signals(r, catalog, &history, &cohort)?;
                Ok(Some(classify_override(&s, weights)))
            } else {
                Ok(None)
            }
        })
        .collect()
}
