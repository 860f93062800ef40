//! Observation production: when a user is inside an awake sensor's range, the
//! sensor opens an observation row, tracks it while sighted, and finalizes it
//! with a departure tick when the user leaves range.
//!
//! One observation per (sensor, user, range-visit). A sensor that is asleep
//! at the moment a user enters range misses that entire visit; waking up
//! mid-visit does not create a late row.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::attrs::{Attribute, AttributeVector, CatValue, Perception};
use crate::graph::{edge_distance, Point, SensorId, SensorSpec};
use crate::population::classify_activity;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("flip probability for {attr} must be in [0,1], got {p}")]
    BadFlipProbability { attr: String, p: f64 },
    #[error("speed error sigma must be in [0, 0.5], got {0}")]
    BadSigma(f64),
}

/// Perception noise: independent categorical flips plus multiplicative speed
/// error. Stands in for the imperfect attribute extraction of real sensors.
#[derive(Debug, Clone, Deserialize)]
pub struct NoiseModel {
    /// Flip probability applied to each categorical attribute independently.
    /// A flipped attribute resamples uniformly among its other values.
    pub p_err: f64,
    /// Observed speed is true speed times a factor uniform in [1-sigma, 1+sigma].
    pub sigma: f64,
    /// Per-attribute overrides of `p_err`.
    #[serde(default)]
    pub p_err_overrides: BTreeMap<Attribute, f64>,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel { p_err: 0.0, sigma: 0.0, p_err_overrides: BTreeMap::new() }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(0.0..=1.0).contains(&self.p_err) {
            return Err(NoiseError::BadFlipProbability { attr: "*".into(), p: self.p_err });
        }
        for (attr, p) in &self.p_err_overrides {
            if !(0.0..=1.0).contains(p) {
                return Err(NoiseError::BadFlipProbability { attr: attr.name().into(), p: *p });
            }
        }
        if !(0.0..=0.5).contains(&self.sigma) {
            return Err(NoiseError::BadSigma(self.sigma));
        }
        Ok(())
    }

    pub fn flip_probability(&self, attr: Attribute) -> f64 {
        *self.p_err_overrides.get(&attr).unwrap_or(&self.p_err)
    }
}

/// Apply perception noise to a true attribute vector, restricted to the
/// sensor's capabilities. Activity is never flipped directly; it is re-derived
/// from the perturbed speed, so activity errors only occur near band edges.
pub fn perturb<R: Rng>(
    attrs: &AttributeVector,
    capabilities: &BTreeSet<Attribute>,
    domain_sizes: &BTreeMap<Attribute, usize>,
    noise: &NoiseModel,
    rng: &mut R,
) -> Perception {
    let speed = if noise.sigma > 0.0 {
        attrs.speed * rng.random_range(1.0 - noise.sigma..1.0 + noise.sigma)
    } else {
        attrs.speed
    };
    let mut out = Perception::new(speed);
    for attr in Attribute::ALL {
        if !capabilities.contains(&attr) {
            continue;
        }
        if attr == Attribute::Activity {
            out.set(attr, classify_activity(speed).expect("speed stays positive"));
            continue;
        }
        let mut value = attrs.get(attr);
        let p = noise.flip_probability(attr);
        if p > 0.0 && rng.random::<f64>() < p {
            let n = domain_sizes[&attr];
            if n > 1 {
                let mut pick = rng.random_range(0..n - 1) as u8;
                if pick >= value.0 {
                    pick += 1;
                }
                value = CatValue(pick);
            }
        }
        out.set(attr, value);
    }
    out
}

/// One sensed row: a user entered a sensor's range at tick `a` and was last
/// sighted at `depart`.
#[derive(Debug, Clone)]
pub struct Observation {
    pub obs_id: u64,
    pub sensor: SensorId,
    pub a: i64,
    pub depart: i64,
    pub perceived: Perception,
    /// Ground truth for scoring only; matching never reads this.
    pub truth: u64,
}

#[derive(Debug, Default)]
pub struct TickSensing {
    pub opened: Vec<Observation>,
    /// (obs_id, depart) for visits that ended this tick.
    pub closed: Vec<(u64, i64)>,
}

#[derive(Debug, Clone, Copy)]
struct OpenVisit {
    obs_id: u64,
    last_seen: i64,
}

/// Per-run sensing state: which (sensor, user) pairs are currently in range
/// and which have an open observation.
#[derive(Debug, Default)]
pub struct SensingState {
    next_obs_id: u64,
    in_range: BTreeSet<(SensorId, u64)>,
    open: BTreeMap<(SensorId, u64), OpenVisit>,
}

impl SensingState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process one sensor for one tick. `active` lists the live agents in
    /// ascending truth-id order with their current coordinates and true
    /// attributes; agents absent from the list (exited or unspawned) count
    /// as out of range.
    #[allow(clippy::too_many_arguments)]
    pub fn step<R: Rng>(
        &mut self,
        sensor: &SensorSpec,
        awake: bool,
        active: &[(u64, Point, &AttributeVector)],
        tick: i64,
        noise: &NoiseModel,
        domain_sizes: &BTreeMap<Attribute, usize>,
        rng: &mut R,
        out: &mut TickSensing,
    ) {
        let mut now_in_range: BTreeSet<u64> = BTreeSet::new();
        for (truth, pos, attrs) in active {
            let in_range = edge_distance(*pos, sensor.position) < sensor.range_m;
            if !in_range {
                continue;
            }
            now_in_range.insert(*truth);
            let key = (sensor.id, *truth);
            let was_in_range = self.in_range.contains(&key);
            if let Some(visit) = self.open.get_mut(&key) {
                if awake {
                    visit.last_seen = tick;
                }
            } else if !was_in_range && awake {
                let obs_id = self.next_obs_id;
                self.next_obs_id += 1;
                let perceived = perturb(attrs, &sensor.capabilities, domain_sizes, noise, rng);
                self.open.insert(key, OpenVisit { obs_id, last_seen: tick });
                out.opened.push(Observation {
                    obs_id,
                    sensor: sensor.id,
                    a: tick,
                    depart: tick,
                    perceived,
                    truth: *truth,
                });
            }
        }

        // Close visits whose user left range (or left the park entirely).
        let stale: Vec<(SensorId, u64)> = self
            .open
            .keys()
            .filter(|(sid, truth)| *sid == sensor.id && !now_in_range.contains(truth))
            .copied()
            .collect();
        for key in stale {
            let visit = self.open.remove(&key).unwrap();
            out.closed.push((visit.obs_id, visit.last_seen));
        }
        self.in_range.retain(|(sid, truth)| *sid != sensor.id || now_in_range.contains(truth));
        for truth in now_in_range {
            self.in_range.insert((sensor.id, truth));
        }
    }

    /// Finalize every still-open visit at end of run.
    pub fn drain_open(&mut self, out: &mut TickSensing) {
        for (_, visit) in std::mem::take(&mut self.open) {
            out.closed.push((visit.obs_id, visit.last_seen));
        }
        out.closed.sort_unstable();
        self.in_range.clear();
    }
}
