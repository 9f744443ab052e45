use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ArchetypeKind, Scenario};
use super::rng::{stream, Stream};
use crate::error::{LabError, Result};
use crate::kernel::{CapabilityProfile, ClinicianId, DomainId};

/// A simulated clinician with its ground-truth capability in every domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clinician {
    pub id: ClinicianId,
    /// Index into the scenario's archetype list.
    pub archetype: usize,
    pub kind: ArchetypeKind,
    pub years_experience: f64,
    /// Current capability, indexed by domain.
    pub profiles: Vec<CapabilityProfile>,
}

impl Clinician {
    pub fn profile(&self, domain: DomainId) -> &CapabilityProfile {
        &self.profiles[domain.index()]
    }

    pub fn kappa(&self, domain: DomainId) -> f64 {
        self.profiles[domain.index()].kappa()
    }
}

/// Draws the clinician population. Ids are assigned in archetype order.
pub fn make_population(scenario: &Scenario) -> Result<Vec<Clinician>> {
    if scenario.population_size() == 0 {
        return Err(LabError::EmptyPopulation);
    }
    let mut rng: ChaCha8Rng = stream(scenario.config.seed, Stream::Population);
    let mut out = Vec::with_capacity(scenario.population_size());
    for (ai, arch) in scenario.archetypes.iter().enumerate() {
        for _ in 0..arch.count {
            let id = ClinicianId(out.len() as u32);
            let jitter = if arch.exec_jitter > 0.0 {
                rng.random_range(-arch.exec_jitter..=arch.exec_jitter)
            } else {
                0.0
            };
            let profiles = (0..scenario.domain_count())
                .map(|d| {
                    let base = arch.exec_by_domain[d].unwrap_or(arch.exec);
                    let exec = (base + jitter).clamp(0.0, 1.0);
                    CapabilityProfile::from_parts(id, DomainId(d), 0, exec, arch.align)
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(Clinician {
                id,
                archetype: ai,
                kind: arch.kind,
                years_experience: arch.years_experience,
                profiles,
            });
        }
    }
    Ok(out)
}
