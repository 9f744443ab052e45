use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident($inner:ty)) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_newtype!(
    /// Position of an action in the scenario's action catalog.
    ActionId(usize)
);
id_newtype!(ClinicianId(u32));
id_newtype!(DomainId(usize));
id_newtype!(ContractId(usize));
id_newtype!(PatientId(u64));

fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LabError::NonFinite(what))
    }
}

/// Encoded patient state at one decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientState {
    pub patient_id: PatientId,
    pub domain_id: DomainId,
    /// Latent state cluster the simulator drew this state from.
    pub cluster: usize,
    pub features: Vec<f64>,
    pub time_index: u32,
}

impl PatientState {
    pub fn new(
        patient_id: PatientId,
        domain_id: DomainId,
        cluster: usize,
        features: Vec<f64>,
        time_index: u32,
    ) -> Result<Self> {
        ensure_finite(&features, "patient state features")?;
        Ok(Self {
            patient_id,
            domain_id,
            cluster,
            features,
            time_index,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalAction {
    pub id: ActionId,
    pub name: String,
    /// Therapeutic class, used to tell class-preserving modifications from substitutions.
    pub class: String,
    pub features: Vec<f64>,
    pub complexity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractKind {
    Ffs,
    OutcomeBased,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractContext {
    pub id: ContractId,
    pub name: String,
    pub kind: ContractKind,
    pub features: Vec<f64>,
}

/// The finite action set and contract contexts of a scenario. Records refer to
/// actions and contracts by id; the catalog owns their encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    actions: Vec<ClinicalAction>,
    contracts: Vec<ContractContext>,
    default_action: ActionId,
}

impl Catalog {
    pub fn new(
        actions: Vec<ClinicalAction>,
        contracts: Vec<ContractContext>,
        default_action: ActionId,
    ) -> Result<Self> {
        if actions.is_empty() {
            return Err(LabError::Config("action catalog is empty".into()));
        }
        if contracts.is_empty() {
            return Err(LabError::Config("contract catalog is empty".into()));
        }
        if default_action.index() >= actions.len() {
            return Err(LabError::Config("default action is not in the catalog".into()));
        }
        let action_dim = actions[0].features.len();
        for (i, a) in actions.iter().enumerate() {
            if a.id.index() != i {
                return Err(LabError::Config(format!(
                    "action `{}` has id {} but sits at position {i}",
                    a.name, a.id
                )));
            }
            if a.features.len() != action_dim {
                return Err(LabError::DimensionMismatch {
                    what: "action features",
                    expected: action_dim,
                    got: a.features.len(),
                });
            }
            ensure_finite(&a.features, "action features")?;
            if !(a.complexity >= 0.0 && a.complexity.is_finite()) {
                return Err(LabError::OutOfRange {
                    name: "action complexity",
                    value: a.complexity,
                    range: "[0, inf)",
                });
            }
        }
        let contract_dim = contracts[0].features.len();
        for (i, c) in contracts.iter().enumerate() {
            if c.id.index() != i {
                return Err(LabError::Config(format!(
                    "contract `{}` has id {} but sits at position {i}",
                    c.name, c.id
                )));
            }
            if c.features.len() != contract_dim {
                return Err(LabError::DimensionMismatch {
                    what: "contract features",
                    expected: contract_dim,
                    got: c.features.len(),
                });
            }
            ensure_finite(&c.features, "contract features")?;
        }
        Ok(Self {
            actions,
            contracts,
            default_action,
        })
    }

    pub fn actions(&self) -> &[ClinicalAction] {
        &self.actions
    }

    pub fn contracts(&self) -> &[ContractContext] {
        &self.contracts
    }

    pub fn action(&self, id: ActionId) -> &ClinicalAction {
        &self.actions[id.index()]
    }

    pub fn contract(&self, id: ContractId) -> &ContractContext {
        &self.contracts[id.index()]
    }

    pub fn default_action(&self) -> ActionId {
        self.default_action
    }

    pub fn action_dim(&self) -> usize {
        self.actions[0].features.len()
    }

    pub fn contract_dim(&self) -> usize {
        self.contracts[0].features.len()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action_ids(&self) -> impl Iterator<Item = ActionId> + '_ {
        (0..self.actions.len()).map(ActionId)
    }

    pub fn action_by_name(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().find(|a| a.name == name).map(|a| a.id)
    }

    pub fn contract_by_name(&self, name: &str) -> Option<ContractId> {
        self.contracts.iter().find(|c| c.name == name).map(|c| c.id)
    }

    /// Euclidean distance between action encodings.
    pub fn proximity(&self, a: ActionId, b: ActionId) -> f64 {
        self.action(a)
            .features
            .iter()
            .zip(&self.action(b).features)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Accept,
    Modify,
    Reject,
}

impl DecisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::Accept => "accept",
            DecisionKind::Modify => "modify",
            DecisionKind::Reject => "reject",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "accept" => Some(DecisionKind::Accept),
            "modify" => Some(DecisionKind::Modify),
            "reject" => Some(DecisionKind::Reject),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    kind: DecisionKind,
    alternative: Option<ActionId>,
}

impl Decision {
    pub fn new(kind: DecisionKind, alternative: Option<ActionId>) -> Result<Self> {
        match (kind, alternative) {
            (DecisionKind::Accept, Some(_)) => Err(LabError::InvalidDecision(
                "accept never carries an alternative".into(),
            )),
            (DecisionKind::Modify, None) => Err(LabError::InvalidDecision(
                "modify requires an alternative".into(),
            )),
            _ => Ok(Self { kind, alternative }),
        }
    }

    pub fn accept() -> Self {
        Self {
            kind: DecisionKind::Accept,
            alternative: None,
        }
    }

    pub fn modify(alternative: ActionId) -> Self {
        Self {
            kind: DecisionKind::Modify,
            alternative: Some(alternative),
        }
    }

    pub fn reject(alternative: Option<ActionId>) -> Self {
        Self {
            kind: DecisionKind::Reject,
            alternative,
        }
    }

    pub fn kind(&self) -> DecisionKind {
        self.kind
    }

    pub fn alternative(&self) -> Option<ActionId> {
        self.alternative
    }

    pub fn is_override(&self) -> bool {
        self.kind != DecisionKind::Accept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    quality: Option<f64>,
    pub event_flag: bool,
    pub lag: u32,
    pub observed: bool,
}

impl Outcome {
    pub fn observed(quality: f64, event_flag: bool, lag: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&quality) {
            return Err(LabError::OutOfRange {
                name: "outcome quality",
                value: quality,
                range: "[0, 1]",
            });
        }
        Ok(Self {
            quality: Some(quality),
            event_flag,
            lag,
            observed: true,
        })
    }

    /// Outcome whose follow-up exists but was not captured.
    pub fn missing(lag: u32) -> Self {
        Self {
            quality: None,
            event_flag: false,
            lag,
            observed: false,
        }
    }

    pub fn quality(&self) -> Option<f64> {
        self.quality
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReasonCode {
    PatientPreference,
    NotComfortable,
    Protocol,
    NoTime,
    Other,
}

impl ReasonCode {
    pub const ALL: [ReasonCode; 5] = [
        ReasonCode::PatientPreference,
        ReasonCode::NotComfortable,
        ReasonCode::Protocol,
        ReasonCode::NoTime,
        ReasonCode::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReasonCode::PatientPreference => "PATIENT_PREFERENCE",
            ReasonCode::NotComfortable => "NOT_COMFORTABLE",
            ReasonCode::Protocol => "PROTOCOL",
            ReasonCode::NoTime => "NO_TIME",
            ReasonCode::Other => "OTHER",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

/// One recommendation interaction: state, recommendation, decision, executed
/// action, clinician, contract, and (eventually) the follow-up outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub state: PatientState,
    pub recommendation: ActionId,
    pub decision: Decision,
    pub executed: ActionId,
    pub clinician: ClinicianId,
    pub contract: ContractId,
    outcome: Option<Outcome>,
    pub reason: Option<ReasonCode>,
}

impl InteractionRecord {
    pub fn new(
        state: PatientState,
        recommendation: ActionId,
        decision: Decision,
        executed: ActionId,
        clinician: ClinicianId,
        contract: ContractId,
        reason: Option<ReasonCode>,
    ) -> Result<Self> {
        match decision.kind() {
            DecisionKind::Accept if executed != recommendation => {
                return Err(LabError::InvalidDecision(
                    "accepted recommendation must be the executed action".into(),
                ))
            }
            DecisionKind::Modify if decision.alternative() != Some(executed) => {
                return Err(LabError::InvalidDecision(
                    "modified action must be the executed action".into(),
                ))
            }
            _ => {}
        }
        Ok(Self {
            state,
            recommendation,
            decision,
            executed,
            clinician,
            contract,
            outcome: None,
            reason,
        })
    }

    /// Appends the follow-up outcome. Outcomes are write-once.
    pub fn attach_outcome(&mut self, outcome: Outcome) -> Result<()> {
        if self.outcome.is_some() {
            return Err(LabError::OutcomeAlreadySet);
        }
        self.outcome = Some(outcome);
        Ok(())
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn observed_quality(&self) -> Option<f64> {
        self.outcome.and_then(|o| o.quality())
    }

    pub fn domain(&self) -> DomainId {
        self.state.domain_id
    }

    pub fn is_override(&self) -> bool {
        self.decision.is_override()
    }
}

/// Ground-truth split of capability, only known inside the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapabilityParts {
    pub exec: f64,
    pub align: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityProfile {
    pub clinician: ClinicianId,
    pub domain: DomainId,
    pub time_index: u32,
    kappa: f64,
    parts: Option<CapabilityParts>,
}

fn unit_interval(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(LabError::OutOfRange {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

impl CapabilityProfile {
    pub fn new(clinician: ClinicianId, domain: DomainId, time_index: u32, kappa: f64) -> Result<Self> {
        Ok(Self {
            clinician,
            domain,
            time_index,
            kappa: unit_interval("kappa", kappa)?,
            parts: None,
        })
    }

    /// Scalar capability is the product of execution and alignment capability.
    pub fn from_parts(
        clinician: ClinicianId,
        domain: DomainId,
        time_index: u32,
        exec: f64,
        align: f64,
    ) -> Result<Self> {
        let exec = unit_interval("exec", exec)?;
        let align = unit_interval("align", align)?;
        Ok(Self {
            clinician,
            domain,
            time_index,
            kappa: exec * align,
            parts: Some(CapabilityParts { exec, align }),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn parts(&self) -> Option<CapabilityParts> {
        self.parts
    }

    /// Execution capability; profiles without a decomposition report kappa.
    pub fn exec(&self) -> f64 {
        self.parts.map_or(self.kappa, |p| p.exec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    AcceptPair,
    RejectPair,
    ModifyPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub preferred: ActionId,
    pub dispreferred: ActionId,
    pub state: PatientState,
    pub contract: ContractId,
    pub clinician: ClinicianId,
    pub domain: DomainId,
    pub time_index: u32,
    pub kind: PairKind,
    /// beta(kappa-hat) stamped at construction.
    pub capability_weight: f64,
    pub reward_class_weight: f64,
    pub capability_class_weight: f64,
    /// Distance between the two actions; set on modify pairs.
    pub proximity: Option<f64>,
    pub outcome_label: Option<f64>,
}

impl PreferencePair {
    /// Total weight the pair carries in the reward likelihood.
    pub fn reward_weight(&self) -> f64 {
        self.capability_weight * self.reward_class_weight
    }

    pub fn validate(&self) -> Result<()> {
        if self.preferred == self.dispreferred {
            return Err(LabError::IdenticalActions(self.preferred.index()));
        }
        for (name, w) in [
            ("capability weight", self.capability_weight),
            ("reward class weight", self.reward_class_weight),
            ("capability class weight", self.capability_class_weight),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(LabError::OutOfRange {
                    name,
                    value: w,
                    range: "[0, inf)",
                });
            }
        }
        if self.kind == PairKind::ModifyPair && !self.proximity.is_some_and(f64::is_finite) {
            return Err(LabError::InvalidDecision(
                "modify pair needs a finite proximity".into(),
            ));
        }
        Ok(())
    }
}
