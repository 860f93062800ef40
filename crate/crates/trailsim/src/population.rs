//! Ground-truth user agents: sampled attributes, activity-consistent speeds,
//! and routes through the park between entry/exit sensors.

use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::attrs::{
    Attribute, AttributeCatalog, AttributeVector, CatValue, ACTIVITY_BIKE, ACTIVITY_JOG,
    ACTIVITY_WALK,
};
use crate::graph::{ParkGraph, Point, SensorId};

/// Speed bands in m/s per activity. Activity is recoverable from speed:
/// the sampling bands never straddle a classification threshold.
pub const WALK_SPEED_RANGE: (f64, f64) = (0.8, 1.8);
pub const JOG_SPEED_RANGE: (f64, f64) = (1.9, 4.0);
pub const BIKE_SPEED_RANGE: (f64, f64) = (4.1, 8.0);

/// Classification thresholds: walk up to 1.8 m/s, jog up to 4.0 m/s, bike above.
pub const WALK_MAX_SPEED: f64 = 1.8;
pub const JOG_MAX_SPEED: f64 = 4.0;

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("activity mix must sum to 1, got {0}")]
    InvalidMix(f64),
    #[error("graph has no entry->exit paths to route users over")]
    EmptyGraph,
    #[error(
        "cannot sample {requested} users with distinct attribute tuples; \
         only {available} combinations exist"
    )]
    DistinctExhausted { requested: usize, available: usize },
}

/// Activity derived from speed.
pub fn classify_activity(speed: f64) -> Result<CatValue, PopulationError> {
    if speed <= 0.0 {
        return Err(PopulationError::NonPositiveSpeed(speed));
    }
    Ok(if speed <= WALK_MAX_SPEED {
        ACTIVITY_WALK
    } else if speed <= JOG_MAX_SPEED {
        ACTIVITY_JOG
    } else {
        ACTIVITY_BIKE
    })
}

fn speed_band(activity: CatValue) -> (f64, f64) {
    match activity {
        ACTIVITY_WALK => WALK_SPEED_RANGE,
        ACTIVITY_JOG => JOG_SPEED_RANGE,
        _ => BIKE_SPEED_RANGE,
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct PopulationConfig {
    pub size: usize,
    /// Fractions of walkers, joggers, bikers; must sum to 1.
    pub activity_mix: [f64; 3],
    pub spawn_window_ticks: i64,
    /// When set, resample until every user's attribute tuple (projected onto
    /// the attributes all sensors share) is unique. Used by zero-noise
    /// recovery checks.
    #[serde(default)]
    pub distinct_attributes: bool,
}

/// Where an agent currently is: which route edge and how far along it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentPosition {
    pub edge: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone)]
pub struct UserAgent {
    /// Ground truth only; firewalled from all matching decisions.
    pub true_id: u64,
    pub attributes: AttributeVector,
    /// Node path from an entry sensor to a different exit sensor.
    pub route: Vec<SensorId>,
    /// Edge lengths along the route, `route.len() - 1` entries.
    pub edge_lengths: Vec<f64>,
    pub spawn_tick: i64,
    pub position: AgentPosition,
    pub exited: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    Moving,
    /// The final exit point has been passed; position is clamped to it.
    Exited,
}

impl UserAgent {
    pub fn route_length(&self) -> f64 {
        self.edge_lengths.iter().sum()
    }

    /// Planar coordinates for the current position.
    pub fn coordinates(&self, graph: &ParkGraph) -> Point {
        let i = self.position.edge;
        let a = graph.sensor(self.route[i]).expect("route validated").position;
        let b = graph.sensor(self.route[i + 1]).expect("route validated").position;
        let f = self.position.fraction;
        Point::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f)
    }
}

/// Move an agent forward by `dt` seconds at its constant speed, rolling over
/// route edges. Returns `Exited` once the end of the final edge is passed;
/// the position is then clamped to the exit sensor.
pub fn advance_user(agent: &mut UserAgent, dt: f64) -> Advance {
    let mut travel = agent.attributes.speed * dt;
    loop {
        let edge_len = agent.edge_lengths[agent.position.edge];
        let remaining = (1.0 - agent.position.fraction) * edge_len;
        if travel < remaining {
            agent.position.fraction += travel / edge_len;
            return Advance::Moving;
        }
        travel -= remaining;
        if agent.position.edge + 1 == agent.edge_lengths.len() {
            agent.position.fraction = 1.0;
            agent.exited = true;
            return Advance::Exited;
        }
        agent.position.edge += 1;
        agent.position.fraction = 0.0;
    }
}

/// Counts per activity using largest-remainder rounding, so a 40/30/30 mix
/// over 100 users is exactly 40/30/30.
fn activity_counts(size: usize, mix: &[f64; 3]) -> Result<[usize; 3], PopulationError> {
    let total: f64 = mix.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(PopulationError::InvalidMix(total));
    }
    let quotas: Vec<f64> = mix.iter().map(|m| m * size as f64).collect();
    let mut counts = [0usize; 3];
    let mut assigned = 0;
    for (i, q) in quotas.iter().enumerate() {
        counts[i] = q.floor() as usize;
        assigned += counts[i];
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in order.into_iter().cycle() {
        if assigned == size {
            break;
        }
        counts[i] += 1;
        assigned += 1;
    }
    Ok(counts)
}

fn sample_weighted<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

/// Sample the full ground-truth population for one run.
///
/// Attribute and spawn draws come from `rng`, route choices from
/// `route_rng`, so changing routing config never perturbs appearance
/// sampling. Deterministic given the two streams.
pub fn sample_population<R: Rng>(
    config: &PopulationConfig,
    catalog: &AttributeCatalog,
    graph: &ParkGraph,
    rng: &mut R,
    route_rng: &mut R,
) -> Result<Vec<UserAgent>, PopulationError> {
    let paths = graph.entry_exit_paths();
    if paths.is_empty() {
        return Err(PopulationError::EmptyGraph);
    }
    let counts = activity_counts(config.size, &config.activity_mix)?;

    // Distinctness is judged on the attributes every sensor perceives;
    // a tuple collision invisible to all sensors cannot confuse matching.
    let shared: Vec<Attribute> = graph.shared_capabilities().into_iter().collect();
    if config.distinct_attributes && catalog.combinations(&shared) < config.size {
        return Err(PopulationError::DistinctExhausted {
            requested: config.size,
            available: catalog.combinations(&shared),
        });
    }

    let mut activities: Vec<CatValue> = Vec::with_capacity(config.size);
    for (i, &count) in counts.iter().enumerate() {
        activities.extend(std::iter::repeat_n(CatValue(i as u8), count));
    }

    let mut seen_tuples: std::collections::BTreeSet<Vec<CatValue>> =
        std::collections::BTreeSet::new();
    let mut agents = Vec::with_capacity(config.size);
    for (idx, &activity) in activities.iter().enumerate() {
        let attributes = loop {
            let (lo, hi) = speed_band(activity);
            let speed = rng.random_range(lo..hi);
            debug_assert_eq!(classify_activity(speed).unwrap(), activity);
            let mut values = [CatValue(0); 6];
            for attr in Attribute::ALL {
                if attr == Attribute::Activity {
                    continue;
                }
                let domain = catalog.domain(attr);
                values[Attribute::ALL.iter().position(|a| *a == attr).unwrap()] =
                    CatValue(sample_weighted(&domain.weights, rng) as u8);
            }
            let mut v = AttributeVector::new(values, speed);
            v.set(Attribute::Activity, activity);
            if config.distinct_attributes {
                let tuple: Vec<CatValue> = shared.iter().map(|a| v.get(*a)).collect();
                if !seen_tuples.insert(tuple) {
                    continue;
                }
            }
            break v;
        };
        let spawn_tick = rng.random_range(0..config.spawn_window_ticks.max(1));
        let route = paths[route_rng.random_range(0..paths.len())].clone();
        let edge_lengths: Vec<f64> = route
            .windows(2)
            .map(|p| graph.edge_between(p[0], p[1]).expect("path edges exist"))
            .collect();
        agents.push(UserAgent {
            true_id: idx as u64,
            attributes,
            route,
            edge_lengths,
            spawn_tick,
            position: AgentPosition { edge: 0, fraction: 0.0 },
            exited: false,
        });
    }
    Ok(agents)
}
