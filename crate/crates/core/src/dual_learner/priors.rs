use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::kernel::{ClinicianId, DomainId};

/// Beta-distributed belief about one clinician's capability in one domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapabilityEstimate {
    pub clinician: ClinicianId,
    pub domain: DomainId,
    pub alpha: f64,
    pub beta: f64,
}

impl CapabilityEstimate {
    pub fn new(clinician: ClinicianId, domain: DomainId, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(LabError::Config(format!(
                "Beta evidence must be positive, got alpha={alpha} beta={beta}"
            )));
        }
        Ok(Self {
            clinician,
            domain,
            alpha,
            beta,
        })
    }

    /// Posterior mean, used as the point estimate of capability.
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn evidence(&self) -> f64 {
        self.alpha + self.beta
    }
}

/// Estimates keyed by (clinician, domain), with a fallback for pairs that
/// were never seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaTable {
    pub entries: BTreeMap<(ClinicianId, DomainId), CapabilityEstimate>,
    pub fallback: (f64, f64),
}

impl KappaTable {
    pub fn get(&self, clinician: ClinicianId, domain: DomainId) -> CapabilityEstimate {
        self.entries
            .get(&(clinician, domain))
            .copied()
            .unwrap_or(CapabilityEstimate {
                clinician,
                domain,
                alpha: self.fallback.0,
                beta: self.fallback.1,
            })
    }

    pub fn mean(&self, clinician: ClinicianId, domain: DomainId) -> f64 {
        self.get(clinician, domain).mean()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CapabilityEstimate> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest absolute change in the point estimate over the union of keys.
    pub fn max_abs_change(&self, other: &KappaTable) -> f64 {
        self.entries
            .keys()
            .chain(other.entries.keys())
            .map(|&(c, d)| (self.mean(c, d) - other.mean(c, d)).abs())
            .fold(0.0, f64::max)
    }

    /// Same means with every evidence mass multiplied by `factor`.
    pub fn strengthen(&self, factor: f64) -> KappaTable {
        KappaTable {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| {
                    (
                        *k,
                        CapabilityEstimate {
                            alpha: e.alpha * factor,
                            beta: e.beta * factor,
                            ..*e
                        },
                    )
                })
                .collect(),
            fallback: (self.fallback.0 * factor, self.fallback.1 * factor),
        }
    }
}

/// Metadata available about a clinician before any interaction is observed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClinicianMeta {
    pub clinician: ClinicianId,
    pub years_experience: Option<f64>,
}

fn d_evidence() -> f64 {
    4.0
}
fn d_scale() -> f64 {
    1.0
}
fn d_max_offset() -> f64 {
    0.2
}
fn d_ceiling() -> f64 {
    0.7
}
fn d_floor() -> f64 {
    0.3
}
fn d_years() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// `alpha + beta` of each prior; 4 with a centred mean is Beta(2, 2).
    #[serde(default = "d_evidence")]
    pub evidence: f64,
    /// Mean offset per unit of proxy score away from 0.5.
    #[serde(default = "d_scale")]
    pub proxy_scale: f64,
    #[serde(default = "d_max_offset")]
    pub max_offset: f64,
    #[serde(default = "d_ceiling")]
    pub ceiling: f64,
    #[serde(default = "d_floor")]
    pub floor: f64,
    /// Years of experience that map to the maximum proxy score.
    #[serde(default = "d_years")]
    pub full_experience_years: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            evidence: d_evidence(),
            proxy_scale: d_scale(),
            max_offset: d_max_offset(),
            ceiling: d_ceiling(),
            floor: d_floor(),
            full_experience_years: d_years(),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.evidence > 0.0) {
            return Err(LabError::Config("priors.evidence must be positive".into()));
        }
        if !(0.0 < self.floor && self.floor <= self.ceiling && self.ceiling < 1.0) {
            return Err(LabError::Config(
                "priors need 0 < floor <= ceiling < 1".into(),
            ));
        }
        if !(self.max_offset >= 0.0 && self.proxy_scale >= 0.0 && self.full_experience_years > 0.0) {
            return Err(LabError::Config(
                "priors.max_offset, proxy_scale and full_experience_years must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Prior mean for a proxy score in [0, 1]; `None` means no metadata.
    pub fn prior_mean(&self, proxy: Option<f64>) -> f64 {
        let offset = proxy.map_or(0.0, |p| {
            ((p - 0.5) * self.proxy_scale).clamp(-self.max_offset, self.max_offset)
        });
        (0.5 + offset).clamp(self.floor, self.ceiling)
    }
}

/// Small-evidence Beta priors shifted by a bounded offset derived from years
/// of experience.
pub fn cold_start_priors(meta: &[ClinicianMeta], domains: usize, config: &PriorConfig) -> Result<KappaTable> {
    config.validate()?;
    let mut entries = BTreeMap::new();
    for m in meta {
        let proxy = m
            .years_experience
            .map(|y| (y / config.full_experience_years).clamp(0.0, 1.0));
        let mean = config.prior_mean(proxy);
        for d in 0..domains {
            let e = CapabilityEstimate::new(
                m.clinician,
                DomainId(d),
                mean * config.evidence,
                (1.0 - mean) * config.evidence,
            )?;
            entries.insert((m.clinician, DomainId(d)), e);
        }
    }
    let half = config.evidence / 2.0;
    Ok(KappaTable {
        entries,
        fallback: (half, half),
    })
}
