use crate::classifier::{class_weights, ClassWeightTable, TypePosterior};
use crate::error::{LabError, Result};
use crate::kernel::{
    BetaParams, Catalog, ClinicianId, DecisionKind, DomainId, InteractionRecord, PairKind, PreferencePair,
};

/// Pairs built from a record stream plus what could not be turned into a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<PreferencePair>,
    /// Index of the record each pair came from.
    pub source: Vec<usize>,
    /// REJECT records without an observed alternative.
    pub unobserved_alternatives: usize,
    /// ACCEPT records whose recommendation was the default action itself.
    pub degenerate_accepts: usize,
}

/// Class weights per record: accepts carry full weight in both losses;
/// overrides use their type posterior, or full weight when untyped.
pub fn record_class_weights(
    records: &[InteractionRecord],
    posteriors: Option<&[Option<TypePosterior>]>,
    table: &ClassWeightTable,
) -> Result<Vec<(f64, f64)>> {
    if let Some(p) = posteriors {
        if p.len() != records.len() {
            return Err(LabError::DimensionMismatch {
                what: "override posteriors",
                expected: records.len(),
                got: p.len(),
            });
        }
    }
    Ok(records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if !r.is_override() {
                return (1.0, 1.0);
            }
            match posteriors.and_then(|p| p[i].as_ref()) {
                Some(post) => class_weights(post, table),
                None => (1.0, 1.0),
            }
        })
        .collect())
}

/// ACCEPT gives `rec > default`; REJECT or MODIFY with an observed
/// alternative gives `alt > rec`. Each pair carries `beta(kappa_hat)` of its
/// clinician and domain and the record's class weights.
pub fn build_pairs(
    records: &[InteractionRecord],
    catalog: &Catalog,
    weights: &[(f64, f64)],
    kappa: impl Fn(ClinicianId, DomainId) -> f64,
    beta: &BetaParams,
) -> Result<PairSet> {
    if weights.len() != records.len() {
        return Err(LabError::DimensionMismatch {
            what: "record class weights",
            expected: records.len(),
            got: weights.len(),
        });
    }
    let default = catalog.default_action();
    let mut set = PairSet {
        pairs: Vec::with_capacity(records.len()),
        source: Vec::with_capacity(records.len()),
        unobserved_alternatives: 0,
        degenerate_accepts: 0,
    };
    for (i, r) in records.iter().enumerate() {
        let (preferred, dispreferred, kind) = match (r.decision.kind(), r.decision.alternative()) {
            (DecisionKind::Accept, _) => {
                if r.recommendation == default {
                    set.degenerate_accepts += 1;
                    continue;
                }
                (r.recommendation, default, PairKind::AcceptPair)
            }
            (DecisionKind::Reject, None) => {
                set.unobserved_alternatives += 1;
                continue;
            }
            (DecisionKind::Reject, Some(alt)) => (alt, r.recommendation, PairKind::RejectPair),
            (DecisionKind::Modify, Some(alt)) => (alt, r.recommendation, PairKind::ModifyPair),
            (DecisionKind::Modify, None) => {
                return Err(LabError::InvalidDecision("modify without alternative".into()))
            }
        };
        if preferred == dispreferred {
            return Err(LabError::IdenticalActions(preferred.index()));
        }
        let (reward_w, cap_w) = weights[i];
        set.pairs.push(PreferencePair {
            preferred,
            dispreferred,
            state: r.state.clone(),
            contract: r.contract,
            clinician: r.clinician,
            domain: r.domain(),
            time_index: r.state.time_index,
            kind,
            capability_weight: beta.at(kappa(r.clinician, r.domain()))?,
            reward_class_weight: reward_w,
            capability_class_weight: cap_w,
            proximity: (kind == PairKind::ModifyPair).then(|| catalog.proximity(preferred, dispreferred)),
            outcome_label: r.observed_quality(),
        });
        set.source.push(i);
    }
    Ok(set)
}
