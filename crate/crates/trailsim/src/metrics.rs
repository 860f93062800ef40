//! Post-run accounting: the per-sensor energy ledger for always-on versus
//! duty-cycle operation, accuracy metrics against ground truth, and
//! leave-one-out attribute importance.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::attrs::Attribute;
use crate::graph::{ParkGraph, SensorId};
use crate::identity::IdentityRegistry;
use crate::population::UserAgent;
use crate::protocol::{Mode, WakeSchedule};
use crate::sensing::Observation;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot score a run with no ground-truth users")]
    ZeroTruth,
}

/// Units of energy spent per sensor: one unit per wake window of
/// `window_ticks` ticks.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    pub mode: Mode,
    pub units: BTreeMap<SensorId, u64>,
}

impl EnergyLedger {
    pub fn total(&self) -> u64 {
        self.units.values().sum()
    }

    pub fn mean_units(&self) -> f64 {
        if self.units.is_empty() {
            return 0.0;
        }
        self.total() as f64 / self.units.len() as f64
    }
}

fn slot(tick: i64, window_ticks: i64) -> i64 {
    tick.div_euclid(window_ticks)
}

/// Windows charged for staying awake from the first global observation to
/// the horizon. Zero when the run produced no observations at all.
fn full_span_units(first_obs: Option<i64>, horizon: i64, window_ticks: i64) -> u64 {
    match first_obs {
        Some(t0) if horizon > t0 => {
            (slot(horizon - 1, window_ticks) - slot(t0, window_ticks) + 1) as u64
        }
        _ => 0,
    }
}

/// Charge each sensor for its awake windows.
///
/// Always-on mode charges every sensor the full span. In duty-cycle mode,
/// always-on-flagged sensors are charged the full span and the rest are
/// charged one unit per length-W window intersecting their wake intervals.
pub fn meter(
    schedule: &WakeSchedule,
    graph: &ParkGraph,
    first_obs: Option<i64>,
    horizon: i64,
    window_ticks: i64,
) -> EnergyLedger {
    let full = full_span_units(first_obs, horizon, window_ticks);
    let mut units = BTreeMap::new();
    for sensor in graph.sensors() {
        let u = if schedule.mode() == Mode::AlwaysOn || sensor.always_on {
            full
        } else {
            match schedule.intervals(sensor.id) {
                Some(set) => {
                    let mut count: u64 = 0;
                    let mut last_counted = i64::MIN;
                    for (start, end) in set.iter() {
                        let (s0, s1) = (slot(start.max(0), window_ticks), slot(end.min(horizon - 1), window_ticks));
                        let lo = s0.max(last_counted + 1);
                        if s1 >= lo {
                            count += (s1 - lo + 1) as u64;
                            last_counted = s1;
                        }
                    }
                    count
                }
                None => 0,
            }
        };
        units.insert(sensor.id, u);
    }
    EnergyLedger { mode: schedule.mode(), units }
}

/// Percentage of energy saved by duty cycling, per sensor and in aggregate.
#[derive(Debug, Clone)]
pub struct SavingReport {
    /// 100 * (1 - duty/on) per sensor; `None` when the always-on units are
    /// zero (undefined, excluded from the mean).
    pub per_sensor: BTreeMap<SensorId, Option<f64>>,
    /// Mean of the defined per-sensor savings.
    pub mean_per_sensor: Option<f64>,
    /// 100 * (1 - total duty / total on): the saving of the average sensor.
    pub aggregate: Option<f64>,
}

pub fn saving_percent(duty: &EnergyLedger, on: &EnergyLedger) -> SavingReport {
    let mut per_sensor = BTreeMap::new();
    for (sensor, &on_units) in &on.units {
        let duty_units = *duty.units.get(sensor).unwrap_or(&0);
        let value = if on_units == 0 {
            None
        } else {
            Some(100.0 * (1.0 - duty_units as f64 / on_units as f64))
        };
        per_sensor.insert(*sensor, value);
    }
    let defined: Vec<f64> = per_sensor.values().flatten().copied().collect();
    let mean_per_sensor = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    let aggregate = if on.total() == 0 {
        None
    } else {
        Some(100.0 * (1.0 - duty.total() as f64 / on.total() as f64))
    };
    SavingReport { per_sensor, mean_per_sensor, aggregate }
}

/// Accuracy of one run against ground truth.
///
/// Observation classes partition exactly:
/// `falsely_new + wrongly_merged + correctly_resolved ==
///  non_first_total + first_resolved_elsewhere`.
/// Under normal windowed matching `first_resolved_elsewhere` is zero and the
/// right-hand side is simply the non-first observation count.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub unique_count: usize,
    pub true_count: usize,
    /// max(0, 1 - |unique - true| / true)
    pub count_accuracy: f64,
    /// Observations that opened a new identity although their true user was
    /// already observed.
    pub falsely_new: u64,
    /// Observations attached to an identity belonging to a different true
    /// user.
    pub wrongly_merged: u64,
    /// Observations correctly attached to their own user's identity.
    pub correctly_resolved: u64,
    /// Observations whose true user had been observed before.
    pub non_first_total: u64,
    /// First sightings of a true user that were (wrongly) merged into an
    /// existing identity instead of opening one.
    pub first_resolved_elsewhere: u64,
    /// Share of true users whose reconstructed sensor sequence equals their
    /// route exactly.
    pub trail_exact_fraction: f64,
}

/// Score a finished run. Pure in its inputs: recomputation yields identical
/// values.
pub fn score(
    registry: &IdentityRegistry,
    observations: &[Observation],
    agents: &[UserAgent],
) -> Result<AccuracyReport, MetricsError> {
    if agents.is_empty() {
        return Err(MetricsError::ZeroTruth);
    }
    let true_count = agents.len();
    let unique_count = registry.unique_count();
    let count_accuracy =
        (1.0 - (unique_count as f64 - true_count as f64).abs() / true_count as f64).max(0.0);

    // Identity -> true user of its opening observation.
    let obs_truth: BTreeMap<u64, u64> = observations.iter().map(|o| (o.obs_id, o.truth)).collect();
    let identity_truth = |user: u64| obs_truth[&registry.first_obs(user)];

    let mut seen_truth: BTreeSet<u64> = BTreeSet::new();
    let mut falsely_new = 0u64;
    let mut wrongly_merged = 0u64;
    let mut correctly_resolved = 0u64;
    let mut non_first_total = 0u64;
    let mut first_resolved_elsewhere = 0u64;
    let mut first_assignment: BTreeMap<u64, u64> = BTreeMap::new();

    for obs in observations {
        let user = registry.user_of(obs.obs_id).expect("every observation is ingested");
        let opened_new = registry.first_obs(user) == obs.obs_id;
        let is_first = seen_truth.insert(obs.truth);
        if is_first {
            first_assignment.insert(obs.truth, user);
            if !opened_new {
                first_resolved_elsewhere += 1;
                wrongly_merged += 1;
            }
            continue;
        }
        non_first_total += 1;
        if opened_new {
            falsely_new += 1;
        } else if identity_truth(user) == obs.truth {
            correctly_resolved += 1;
        } else {
            wrongly_merged += 1;
        }
    }

    let mut exact = 0usize;
    for agent in agents {
        let Some(&user) = first_assignment.get(&agent.true_id) else {
            continue; // never observed; cannot be exact
        };
        let reconstructed: Vec<SensorId> =
            registry.trail(user).iter().map(|(s, _)| *s).collect();
        if reconstructed == agent.route {
            exact += 1;
        }
    }

    Ok(AccuracyReport {
        unique_count,
        true_count,
        count_accuracy,
        falsely_new,
        wrongly_merged,
        correctly_resolved,
        non_first_total,
        first_resolved_elsewhere,
        trail_exact_fraction: exact as f64 / true_count as f64,
    })
}

impl AccuracyReport {
    /// The exact bookkeeping identity over observation classes.
    pub fn partition_holds(&self) -> bool {
        self.falsely_new + self.wrongly_merged + self.correctly_resolved
            == self.non_first_total + self.first_resolved_elsewhere
    }
}

/// One row of the attribute-importance ranking.
#[derive(Debug, Clone)]
pub struct ImportanceRow {
    pub attribute: Attribute,
    /// Mean count-accuracy drop when this attribute is excluded from the
    /// comparison set.
    pub mean_drop: f64,
    pub rank: usize,
}

/// Leave-one-out ablation: for each comparison attribute, rerun the scenario
/// with that attribute excluded and record how much mean count accuracy
/// drops. Deterministic given the seed range.
pub fn feature_importance(
    config: &crate::scenario::ScenarioConfig,
    replications: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<Vec<ImportanceRow>, crate::engine::EngineError> {
    let catalog = config.comparison_catalog();
    let baseline = crate::engine::replicate(config, replications, base_seed, jobs)
        .mean_count_accuracy;
    let mut rows: Vec<(Attribute, f64)> = Vec::new();
    for attr in &catalog {
        let mut ablated = config.clone();
        let allowed: BTreeSet<Attribute> =
            catalog.iter().copied().filter(|a| a != attr).collect();
        ablated.protocol.allowed_attributes = Some(allowed);
        let mean = crate::engine::replicate(&ablated, replications, base_seed, jobs)
            .mean_count_accuracy;
        rows.push((*attr, baseline - mean));
    }
    rows.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, (attribute, mean_drop))| ImportanceRow { attribute, mean_drop, rank: i + 1 })
        .collect())
}
