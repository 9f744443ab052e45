use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::kernel::{logistic, Catalog, ClinicianId, DecisionKind, DomainId, InteractionRecord, RewardModel};

use super::priors::{CapabilityEstimate, KappaTable};

/// Whether the model agrees with what the clinician did, in [0, 1].
///
/// ACCEPT agrees when the recommendation scores at least the default. An
/// override with an alternative agrees when the alternative scores strictly
/// higher than the recommendation. A REJECT without alternative agrees when
/// the recommendation scores strictly below the default. With `soft`, the
/// logistic of the same margin is returned instead of its sign. Accepting a
/// recommendation of the default action carries no information (`None`).
pub fn agreement(
    record: &InteractionRecord,
    model: &RewardModel,
    catalog: &Catalog,
    soft: bool,
) -> Result<Option<f64>> {
    let s = &record.state.features;
    let c = record.contract;
    let rec = record.recommendation;
    let default = catalog.default_action();
    let (margin, tie_agrees) = match (record.decision.kind(), record.decision.alternative()) {
        (DecisionKind::Accept, _) => {
            if rec == default {
                return Ok(None);
            }
            (model.margin(catalog, s, rec, default, c)?, true)
        }
        (_, Some(alt)) => (model.margin(catalog, s, alt, rec, c)?, false),
        (_, None) => {
            if rec == default {
                return Ok(None);
            }
            (model.margin(catalog, s, default, rec, c)?, false)
        }
    };
    Ok(Some(if soft {
        logistic(margin)
    } else if margin > 0.0 || (margin == 0.0 && tie_agrees) {
        1.0
    } else {
        0.0
    }))
}

/// Weighted agreement mass and record mass per (clinician, domain).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgreementCounts {
    pub counts: BTreeMap<(ClinicianId, DomainId), (f64, f64)>,
}

/// Beta counting: every record adds its capability class weight to alpha
/// when the model agrees with the clinician and to beta otherwise. The model
/// is held fixed for the whole pass.
pub fn e_step(
    records: &[InteractionRecord],
    capability_weights: &[f64],
    model: &RewardModel,
    catalog: &Catalog,
    priors: &KappaTable,
    soft: bool,
) -> Result<(KappaTable, AgreementCounts)> {
    if capability_weights.len() != records.len() {
        return Err(LabError::DimensionMismatch {
            what: "capability weights",
            expected: records.len(),
            got: capability_weights.len(),
        });
    }
    let mut counts = AgreementCounts::default();
    for (r, &w) in records.iter().zip(capability_weights) {
        let entry = counts.counts.entry((r.clinician, r.domain())).or_insert((0.0, 0.0));
        if w == 0.0 {
            continue;
        }
        if let Some(a) = agreement(r, model, catalog, soft)? {
            entry.0 += w * a;
            entry.1 += w;
        }
    }
    let mut entries = priors.entries.clone();
    for (&(c, d), &(agree, total)) in &counts.counts {
        let prior = priors.get(c, d);
        entries.insert(
            (c, d),
            CapabilityEstimate::new(c, d, prior.alpha + agree, prior.beta + (total - agree))?,
        );
    }
    Ok((
        KappaTable {
            entries,
            fallback: priors.fallback,
        },
        counts,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDispersion {
    pub domain: DomainId,
    pub clinicians: usize,
    /// Pearson dispersion of per-clinician agreement counts around the pooled
    /// rate; near 1 when every clinician agrees at the same rate.
    pub dispersion: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub domains: Vec<DomainDispersion>,
    pub threshold: f64,
    /// Standard deviation of the capability point estimates.
    pub kappa_spread: f64,
    /// Some domain shows no more between-clinician variation than chance.
    pub non_identifiable: bool,
}

/// Tests whether clinicians differ in agreement more than binomial noise
/// would explain. Capability cannot be told apart in domains where they do not.
pub fn identifiability(counts: &AgreementCounts, kappa: &KappaTable, threshold: f64) -> IdentifiabilityReport {
    let mut by_domain: BTreeMap<DomainId, Vec<(f64, f64)>> = BTreeMap::new();
    for (&(_, d), &(a, n)) in &counts.counts {
        if n > 0.0 {
            by_domain.entry(d).or_default().push((a, n));
        }
    }
    let domains: Vec<DomainDispersion> = by_domain
        .into_iter()
        .map(|(domain, rows)| {
            let k = rows.len();
            let (sa, sn) = rows.iter().fold((0.0, 0.0), |(x, y), (a, n)| (x + a, y + n));
            let p = sa / sn;
            let dispersion = if k >= 2 && p > 0.0 && p < 1.0 {
                let chi: f64 = rows
                    .iter()
                    .map(|(a, n)| (a - n * p).powi(2) / (n * p * (1.0 - p)))
                    .sum();
                Some(chi / (k - 1) as f64)
            } else {
                None
            };
            DomainDispersion {
                domain,
                clinicians: k,
                dispersion,
                flagged: dispersion.is_none_or(|d| d < threshold),
            }
        })
        .collect();
    let means: Vec<f64> = kappa.iter().map(|e| e.mean()).collect();
    let kappa_spread = if means.is_empty() {
        0.0
    } else {
        let m = means.iter().sum::<f64>() / means.len() as f64;
        (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / means.len() as f64).sqrt()
    };
    IdentifiabilityReport {
        non_identifiable: domains.iter().any(|d| d.flagged),
        domains,
        threshold,
        kappa_spread,
    }
}
