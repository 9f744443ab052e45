use crate::error::{LabError, Result};
use crate::kernel::CapabilityProfile;

/// One capability update: `k' = k + eta * scaffolding * [success] * (1 - k)`.
///
/// Profiles with a ground-truth decomposition grow their execution part by
/// this rule and recompute `kappa = exec * align`; alignment is fixed.
pub fn evolve_capability(
    profile: &CapabilityProfile,
    scaffolding: f64,
    executed_successfully: bool,
    eta: f64,
) -> Result<CapabilityProfile> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(LabError::OutOfRange {
            name: "eta",
            value: eta,
            range: "(0, 1)",
        });
    }
    if !(0.0..=1.0).contains(&scaffolding) {
        return Err(LabError::OutOfRange {
            name: "scaffolding",
            value: scaffolding,
            range: "[0, 1]",
        });
    }
    let step = if executed_successfully { eta * scaffolding } else { 0.0 };
    let grow = |x: f64| (x + step * (1.0 - x)).min(1.0);
    match profile.parts() {
        Some(parts) => CapabilityProfile::from_parts(
            profile.clinician,
            profile.domain,
            profile.time_index,
            grow(parts.exec),
            parts.align,
        ),
        None => CapabilityProfile::new(
            profile.clinician,
            profile.domain,
            profile.time_index,
            grow(profile.kappa()),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{ClinicianId, DomainId};

    fn scalar(k: f64) -> CapabilityProfile {
        CapabilityProfile::new(ClinicianId(0), DomainId(0), 0, k).unwrap()
    }

    #[test]
    fn single_successful_step() {
        let next = evolve_capability(&scalar(0.2), 1.0, true, 0.1).unwrap();
        assert!((next.kappa() - 0.28).abs() < 1e-12);
    }

    #[test]
    fn no_scaffolding_is_a_fixed_point() {
        let next = evolve_capability(&scalar(0.35), 0.0, true, 0.3).unwrap();
        assert_eq!(next.kappa(), 0.35);
        let next = evolve_capability(&scalar(0.35), 1.0, false, 0.3).unwrap();
        assert_eq!(next.kappa(), 0.35);
    }

    #[test]
    fn repeated_success_approaches_one() {
        let mut p = scalar(0.1);
        let mut last = p.kappa();
        for _ in 0..500 {
            p = evolve_capability(&p, 0.8, true, 0.05).unwrap();
            assert!(p.kappa() >= last);
            last = p.kappa();
        }
        assert!(last > 0.999);
    }

    #[test]
    fn decomposed_profile_grows_execution() {
        let p = CapabilityProfile::from_parts(ClinicianId(1), DomainId(0), 0, 0.5, 0.8).unwrap();
        let next = evolve_capability(&p, 1.0, true, 0.5).unwrap();
        assert!((next.exec() - 0.75).abs() < 1e-12);
        assert!((next.kappa() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn eta_outside_open_interval_rejected() {
        assert!(evolve_capability(&scalar(0.5), 1.0, true, 0.0).is_err());
        assert!(evolve_capability(&scalar(0.5), 1.0, true, 1.0).is_err());
    }
}
