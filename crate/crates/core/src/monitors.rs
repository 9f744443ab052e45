//! Convergence metrics and failure-mode monitors over interaction streams.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{OverrideType, TypePosterior};
use crate::error::{LabError, Result};
use crate::kernel::{ActionId, Catalog, ClinicianId, DecisionKind, DomainId, InteractionRecord};
use crate::stats::{binary_entropy, ols_slope};

fn d_edges() -> Vec<f64> {
    vec![0.4, 0.7]
}
fn d_window() -> u32 {
    10
}
fn d_entropy() -> f64 {
    0.4
}
fn d_ceiling() -> f64 {
    0.9
}
fn d_floor() -> f64 {
    0.05
}
fn d_probe() -> f64 {
    0.01
}
fn d_min_outcomes() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    /// Capability band edges; `[0.4, 0.7]` gives low, mid and high bands.
    #[serde(default = "d_edges")]
    pub band_edges: Vec<f64>,
    /// Width of a reporting window in simulated steps.
    #[serde(default = "d_window")]
    pub window_steps: u32,
    /// Acceptance entropy (bits) below which a clinician may be flagged.
    #[serde(default = "d_entropy")]
    pub entropy_threshold: f64,
    /// Accept rate above which low entropy indicates automation bias.
    #[serde(default = "d_ceiling")]
    pub accept_ceiling: f64,
    /// Surfacing rate below which a first-line action counts as suppressed.
    #[serde(default = "d_floor")]
    pub suppression_floor: f64,
    /// Share of eligible states on which a suppressed action is force-surfaced.
    #[serde(default = "d_probe")]
    pub probe_rate: f64,
    /// Posterior mass of observed outcomes a type needs for a concordance.
    #[serde(default = "d_min_outcomes")]
    pub min_outcomes_per_type: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            band_edges: d_edges(),
            window_steps: d_window(),
            entropy_threshold: d_entropy(),
            accept_ceiling: d_ceiling(),
            suppression_floor: d_floor(),
            probe_rate: d_probe(),
            min_outcomes_per_type: d_min_outcomes(),
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        check_edges(&self.band_edges)?;
        if self.window_steps == 0 {
            return Err(LabError::Config("monitors.window_steps must be positive".into()));
        }
        for (name, v) in [
            ("monitors.entropy_threshold", self.entropy_threshold),
            ("monitors.accept_ceiling", self.accept_ceiling),
            ("monitors.suppression_floor", self.suppression_floor),
            ("monitors.probe_rate", self.probe_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(LabError::Config(format!("{name} = {v} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    let inside = edges.iter().all(|e| (0.0..=1.0).contains(e));
    let increasing = edges.windows(2).all(|w| w[0] < w[1]);
    if inside && increasing {
        Ok(())
    } else {
        Err(LabError::Config(format!(
            "band edges {edges:?} must be strictly increasing within [0, 1]"
        )))
    }
}

/// Band index of a capability value: band `i` is `[edges[i-1], edges[i])`.
pub fn band_of(kappa: f64, edges: &[f64]) -> usize {
    edges.iter().take_while(|&&e| kappa >= e).count()
}

pub fn band_name(band: usize, n_bands: usize) -> String {
    match (band, n_bands) {
        (0, _) => "low".into(),
        (b, n) if b + 1 == n => "high".into(),
        (1, 3) => "mid".into(),
        (b, _) => format!("band{b}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub band: usize,
    pub domain: DomainId,
    pub window: u32,
    pub interactions: u64,
    pub overrides: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub domain: DomainId,
    pub window: u32,
    pub high_rate: Option<f64>,
    pub low_rate: Option<f64>,
    /// High-band minus low-band override rate; absent when either is empty.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedRates {
    pub band_edges: Vec<f64>,
    pub window_steps: u32,
    /// Non-empty strata only.
    pub strata: Vec<Stratum>,
    pub gaps: Vec<GapRow>,
}

impl StratifiedRates {
    pub fn rate(&self, band: usize, domain: DomainId, window: u32) -> Option<f64> {
        self.strata
            .iter()
            .find(|s| s.band == band && s.domain == domain && s.window == window)
            .map(|s| s.rate)
    }

    pub fn gap(&self, domain: DomainId, window: u32) -> Option<f64> {
        self.gaps
            .iter()
            .find(|g| g.domain == domain && g.window == window)
            .and_then(|g| g.gap)
    }

    pub fn windows(&self) -> Vec<u32> {
        let mut w: Vec<u32> = self.strata.iter().map(|s| s.window).collect();
        w.sort_unstable();
        w.dedup();
        w
    }
}

/// Override rate per (capability band, domain, time window).
pub fn stratified_override_rates(
    records: &[InteractionRecord],
    kappa: impl Fn(ClinicianId, DomainId) -> f64,
    band_edges: &[f64],
    window_steps: u32,
) -> Result<StratifiedRates> {
    check_edges(band_edges)?;
    if window_steps == 0 {
        return Err(LabError::Config("window must span at least one step".into()));
    }
    let mut cells: BTreeMap<(DomainId, u32, usize), (u64, u64)> = BTreeMap::new();
    for r in records {
        let band = band_of(kappa(r.clinician, r.domain()), band_edges);
        let window = r.state.time_index / window_steps;
        let e = cells.entry((r.domain(), window, band)).or_insert((0, 0));
        e.0 += 1;
        e.1 += u64::from(r.is_override());
    }
    let strata: Vec<Stratum> = cells
        .iter()
        .map(|(&(domain, window, band), &(n, o))| Stratum {
            band,
            domain,
            window,
            interactions: n,
            overrides: o,
            rate: o as f64 / n as f64,
        })
        .collect();
    let top = band_edges.len();
    let mut keys: Vec<(DomainId, u32)> = cells.keys().map(|&(d, w, _)| (d, w)).collect();
    keys.dedup();
    let rate_of = |d, w, b| cells.get(&(d, w, b)).map(|&(n, o)| o as f64 / n as f64);
    let gaps = keys
        .into_iter()
        .map(|(domain, window)| {
            let high_rate = rate_of(domain, window, top);
            let low_rate = rate_of(domain, window, 0);
            GapRow {
                domain,
                window,
                high_rate,
                low_rate,
                gap: high_rate.zip(low_rate).map(|(h, l)| h - l),
            }
        })
        .collect();
    Ok(StratifiedRates {
        band_edges: band_edges.to_vec(),
        window_steps,
        strata,
        gaps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeConcordance {
    pub override_type: OverrideType,
    /// Posterior mass of overrides with both arms observed.
    pub mass: f64,
    /// Posterior-weighted share of overrides whose executed action had the
    /// better outcome; ties count one half. Absent below the minimum mass.
    pub concordance: Option<f64>,
}

/// How often overrides of each type led to a better outcome than the
/// recommendation would have. Counterfactual arms come from the simulator.
pub fn concordance_by_type(
    records: &[InteractionRecord],
    counterfactual: &[Option<f64>],
    posteriors: &[Option<TypePosterior>],
    min_mass: f64,
) -> Result<Vec<TypeConcordance>> {
    if counterfactual.len() != records.len() || posteriors.len() != records.len() {
        return Err(LabError::DimensionMismatch {
            what: "concordance inputs",
            expected: records.len(),
            got: counterfactual.len().min(posteriors.len()),
        });
    }
    let mut mass = [0.0; 5];
    let mut wins = [0.0; 5];
    for ((r, cf), post) in records.iter().zip(counterfactual).zip(posteriors) {
        let (Some(q), Some(cf), Some(post)) = (r.observed_quality(), cf, post) else {
            continue;
        };
        if !r.is_override() {
            continue;
        }
        let score = if q > *cf {
            1.0
        } else if q == *cf {
            0.5
        } else {
            0.0
        };
        for t in OverrideType::ALL {
            let p = post.prob(t);
            mass[t.index()] += p;
            wins[t.index()] += p * score;
        }
    }
    Ok(OverrideType::ALL
        .iter()
        .map(|&t| {
            let m = mass[t.index()];
            TypeConcordance {
                override_type: t,
                mass: m,
                concordance: (m >= min_mass && m > 0.0).then(|| wins[t.index()] / m),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub clinician: ClinicianId,
    pub interactions: u64,
    pub accept_rate: f64,
    pub entropy_bits: f64,
    /// Low entropy together with an accept rate above the ceiling.
    pub flagged: bool,
}

/// Binary entropy of each clinician's accept rate over records with
/// `time_index` in `window` (all records when `None`).
pub fn acceptance_entropy(
    records: &[InteractionRecord],
    window: Option<(u32, u32)>,
    threshold: f64,
    ceiling: f64,
) -> Vec<EntropyRow> {
    let mut counts: BTreeMap<ClinicianId, (u64, u64)> = BTreeMap::new();
    for r in records {
        if let Some((lo, hi)) = window {
            if r.state.time_index < lo || r.state.time_index >= hi {
                continue;
            }
        }
        let e = counts.entry(r.clinician).or_insert((0, 0));
        e.0 += u64::from(r.decision.kind() == DecisionKind::Accept);
        e.1 += 1;
    }
    counts
        .into_iter()
        .map(|(clinician, (a, n))| {
            let accept_rate = a as f64 / n as f64;
            let entropy_bits = binary_entropy(accept_rate);
            EntropyRow {
                clinician,
                interactions: n,
                accept_rate,
                entropy_bits,
                flagged: entropy_bits < threshold && accept_rate > ceiling,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressedAction {
    pub action: ActionId,
    pub first_flagged_round: usize,
    /// Surfacing rate in the round that first triggered the flag.
    pub rate_at_flag: f64,
    pub latest_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSlots {
    pub action: ActionId,
    /// Indices of next-round eligible states on which the action is surfaced.
    pub slots: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressionReport {
    pub floor: f64,
    /// `rates[round][action]`: share of the round's recommendations.
    pub rates: Vec<Vec<f64>>,
    /// First-line actions below the floor, per round.
    pub flagged: Vec<Vec<ActionId>>,
    pub suppressed: Vec<SuppressedAction>,
    pub probe_rate: f64,
    pub probe_schedule: Vec<ProbeSlots>,
}

/// Finds first-line actions the recommender has (nearly) stopped surfacing
/// and schedules deterministic probes that force-surface them next round.
pub fn suppression_audit(
    rounds: &[Vec<ActionId>],
    first_line: &[bool],
    floor: f64,
    probe_rate: f64,
    eligible_next_round: usize,
    seed: u64,
) -> Result<SuppressionReport> {
    if rounds.len() < 2 {
        return Err(LabError::Dataset(format!(
            "suppression audit needs at least two recommendation rounds, got {}",
            rounds.len()
        )));
    }
    let n_actions = first_line.len();
    let mut rates = Vec::with_capacity(rounds.len());
    let mut flagged = Vec::with_capacity(rounds.len());
    let mut suppressed: Vec<SuppressedAction> = Vec::new();
    for (round, recs) in rounds.iter().enumerate() {
        let mut counts = vec![0u64; n_actions];
        for a in recs {
            if a.index() >= n_actions {
                return Err(LabError::Dataset(format!("recommended action {a} not in catalog")));
            }
            counts[a.index()] += 1;
        }
        let total = recs.len().max(1) as f64;
        let r: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
        let below: Vec<ActionId> = (0..n_actions)
            .filter(|&a| first_line[a] && r[a] < floor)
            .map(ActionId)
            .collect();
        for &a in &below {
            if !suppressed.iter().any(|s| s.action == a) {
                suppressed.push(SuppressedAction {
                    action: a,
                    first_flagged_round: round,
                    rate_at_flag: r[a.index()],
                    latest_rate: r[a.index()],
                });
            }
        }
        for s in &mut suppressed {
            s.latest_rate = r[s.action.index()];
        }
        rates.push(r);
        flagged.push(below);
    }
    let probe_schedule = suppressed
        .iter()
        .map(|s| ProbeSlots {
            action: s.action,
            slots: probe_slots(seed, s.action, eligible_next_round, probe_rate),
        })
        .collect();
    Ok(SuppressionReport {
        floor,
        rates,
        flagged,
        suppressed,
        probe_rate,
        probe_schedule,
    })
}

/// Each eligible slot is chosen independently with probability `rate`; at
/// least one slot is always chosen when any exist.
pub fn probe_slots(seed: u64, action: ActionId, eligible: usize, rate: f64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5052_4f42_0000_0000 | action.0 as u64);
    let mut slots: Vec<usize> = (0..eligible).filter(|_| rng.random::<f64>() < rate).collect();
    if slots.is_empty() && eligible > 0 {
        slots.push(rng.random_range(0..eligible));
    }
    slots
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityTrend {
    /// (window, mean complexity of recommended actions).
    pub windows: Vec<(u32, f64)>,
    /// Least-squares slope per window; negative means drift towards simpler
    /// recommendations.
    pub slope: Option<f64>,
}

pub fn complexity_trend(records: &[InteractionRecord], catalog: &Catalog, window_steps: u32) -> ComplexityTrend {
    let mut sums: BTreeMap<u32, (f64, u64)> = BTreeMap::new();
    for r in records {
        let e = sums.entry(r.state.time_index / window_steps.max(1)).or_insert((0.0, 0));
        e.0 += catalog.action(r.recommendation).complexity;
        e.1 += 1;
    }
    let windows: Vec<(u32, f64)> = sums.into_iter().map(|(w, (s, n))| (w, s / n as f64)).collect();
    let x: Vec<f64> = windows.iter().map(|w| f64::from(w.0)).collect();
    let y: Vec<f64> = windows.iter().map(|w| w.1).collect();
    ComplexityTrend {
        slope: ols_slope(&x, &y),
        windows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityRow {
    pub subgroup: String,
    /// Records whose follow-up window has elapsed.
    pub due: u64,
    pub observed: u64,
    pub rate: Option<f64>,
}

/// Outcome capture rate per subgroup label.
pub fn observability(records: &[InteractionRecord], subgroup: impl Fn(&InteractionRecord) -> String) -> Vec<ObservabilityRow> {
    let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for r in records {
        let e = counts.entry(subgroup(r)).or_insert((0, 0));
        if let Some(o) = r.outcome() {
            e.0 += 1;
            e.1 += u64::from(o.observed);
        }
    }
    counts
        .into_iter()
        .map(|(subgroup, (due, observed))| ObservabilityRow {
            subgroup,
            due,
            observed,
            rate: (due > 0).then(|| observed as f64 / due as f64),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub automation_flags: Vec<EntropyRow>,
    pub suppression: Option<SuppressionReport>,
    pub complexity_trend: ComplexityTrend,
    pub observability: Vec<ObservabilityRow>,
    /// Where counterfactual outcomes for concordance come from.
    pub counterfactual_source: String,
}
