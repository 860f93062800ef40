//! Randomized micro-worlds: tiny parks with a handful of agents, built so
//! the minimal identity partition is unambiguous. Used to cross-check the
//! online matcher against the exhaustive oracle.
//!
//! Construction rules keep the ground truth recoverable: zero noise, full
//! sensing capabilities everywhere, and agents that share an attribute tuple
//! are separated in time by more than any arrival window can span.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attrs::{Attribute, AttributeCatalog, AttributeVector, CatValue};
use crate::graph::{ParkGraph, Point, SensorId, SensorSpec, TrailEdge};
use crate::population::{
    classify_activity, AgentPosition, PopulationConfig, UserAgent, BIKE_SPEED_RANGE,
    JOG_SPEED_RANGE, WALK_SPEED_RANGE,
};
use crate::protocol::{Mode, SelectionDirection, WindowPolicy};
use crate::scenario::{ProtocolConfig, ScenarioConfig};
use crate::sensing::NoiseModel;

#[derive(Debug)]
pub struct MicroWorld {
    pub config: ScenarioConfig,
    pub agents: Vec<UserAgent>,
    pub expected_observations: usize,
}

fn full_caps() -> std::collections::BTreeSet<Attribute> {
    Attribute::ALL.iter().copied().collect()
}

fn line_graph(n: u32, spacing: f64, rho: f64) -> ParkGraph {
    let sensors = (0..n)
        .map(|i| SensorSpec {
            id: SensorId(i),
            position: Point::new(i as f64 * spacing, 0.0),
            range_m: rho,
            capabilities: full_caps(),
            always_on: i == 0 || i == n - 1,
        })
        .collect();
    let edges = (0..n - 1)
        .map(|i| TrailEdge {
            a: SensorId(i),
            b: SensorId(i + 1),
            distance_m: spacing,
            exit: i == 0 || i == n - 2,
        })
        .collect();
    ParkGraph::build(sensors, edges).unwrap()
}

/// Hub sensor 0 with three always-on leaves.
fn star_graph(spacing: f64, rho: f64) -> ParkGraph {
    let positions = [
        Point::new(0.0, 0.0),
        Point::new(spacing, 0.0),
        Point::new(-spacing, 0.0),
        Point::new(0.0, spacing),
    ];
    let sensors = positions
        .iter()
        .enumerate()
        .map(|(i, p)| SensorSpec {
            id: SensorId(i as u32),
            position: *p,
            range_m: rho,
            capabilities: full_caps(),
            always_on: i > 0,
        })
        .collect();
    let edges = (1..4)
        .map(|i| TrailEdge { a: SensorId(0), b: SensorId(i), distance_m: spacing, exit: true })
        .collect();
    ParkGraph::build(sensors, edges).unwrap()
}

fn sample_speed(rng: &mut ChaCha8Rng) -> f64 {
    let band = match rng.random_range(0..3u8) {
        0 => WALK_SPEED_RANGE,
        1 => JOG_SPEED_RANGE,
        _ => BIKE_SPEED_RANGE,
    };
    rng.random_range(band.0..band.1)
}

/// Build a randomized micro-world with at most 4 sensors, 5 agents and 12
/// observations. Deterministic in `seed`.
pub fn build_micro_world(seed: u64) -> MicroWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);

    let spacing = rng.random_range(200.0..400.0);
    let rho = 10.0;
    let graph = if rng.random_range(0..4u8) == 0 {
        star_graph(spacing, rho)
    } else {
        line_graph(rng.random_range(2..5u32), spacing, rho)
    };
    let paths = graph.entry_exit_paths();

    // A small pool of base tuples forces occasional collisions; agents
    // drawing the same pool entry are pushed apart in time below.
    let pool_size = 3usize;

    let n_agents = rng.random_range(1..=5usize);
    let mut agents: Vec<UserAgent> = Vec::new();
    let mut obs_budget = 12usize;
    let mut next_free_tick = vec![0i64; pool_size];
    for idx in 0..n_agents {
        let route = paths[rng.random_range(0..paths.len())].clone();
        if route.len() > obs_budget {
            break;
        }
        obs_budget -= route.len();

        let speed = sample_speed(&mut rng);
        let pool_idx = rng.random_range(0..pool_size);
        let mut values = [CatValue(0); 6];
        values[0] = CatValue(pool_idx as u8); // top_color identifies the pool entry
        let mut attributes = AttributeVector::new(values, speed);
        attributes.set(Attribute::Activity, classify_activity(speed).unwrap());
        attributes.set(Attribute::Gender, CatValue(rng.random_range(0..2u8)));

        let edge_lengths: Vec<f64> = route
            .windows(2)
            .map(|p| graph.edge_between(p[0], p[1]).unwrap())
            .collect();
        let route_ticks = (edge_lengths.iter().sum::<f64>() / speed).ceil() as i64;
        // widest possible window for the slowest walker on the longest edge
        let w_max = (0.25 * (spacing / WALK_SPEED_RANGE.0)).ceil() as i64 + 2;
        let spawn_tick = next_free_tick[pool_idx] + rng.random_range(0..50i64);
        next_free_tick[pool_idx] = spawn_tick + route_ticks + 4 * w_max + 20;

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

    let horizon = agents
        .iter()
        .map(|a| a.spawn_tick + (a.route_length() / 0.8).ceil() as i64)
        .max()
        .unwrap_or(100)
        + 500;

    let expected_observations = agents.iter().map(|a| a.route.len()).sum();
    let config = ScenarioConfig {
        name: format!("micro-{seed}"),
        tick_seconds: 1.0,
        horizon_ticks: horizon,
        mode: Mode::AlwaysOn,
        graph,
        population: PopulationConfig {
            size: 0,
            activity_mix: [0.4, 0.3, 0.3],
            spawn_window_ticks: 1,
            distinct_attributes: false,
        },
        noise: NoiseModel::none(),
        protocol: ProtocolConfig {
            k: 6,
            direction: SelectionDirection::Lowest,
            window: WindowPolicy { min_half_width: 2, travel_fraction: 0.25 },
            history_len: 50,
            history_min: 10,
            speed_tolerance: 0.10,
            allowed_attributes: None,
            eta_gating: true,
        },
        energy_window_ticks: 10,
        catalog: AttributeCatalog::default(),
    };

    MicroWorld { config, agents, expected_observations }
}
