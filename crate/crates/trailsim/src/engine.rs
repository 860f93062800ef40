//! The deterministic tick loop. Each tick runs six phases in fixed order:
//! agent movement, message delivery, wake/expiry bookkeeping, sensing,
//! handoff emission with wake scheduling, and registry ingestion.
//!
//! All per-tick sets are processed in canonical id order and all randomness
//! comes from named ChaCha streams derived from the run seed, so equal
//! (config, seed) pairs produce bit-identical results on every platform.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::attrs::{Attribute, Perception};
use crate::graph::{Point, SensorId};
use crate::identity::{match_observation, IdentityError, IdentityRegistry, MatchPolicy, PendingPool};
use crate::metrics::{meter, score, AccuracyReport, EnergyLedger, MetricsError};
use crate::population::{advance_user, sample_population, Advance, PopulationError, UserAgent};
use crate::protocol::{
    make_handoffs, select_attributes, HandoffMessage, Mode, ProtocolError, WakeSchedule,
};
use crate::scenario::ScenarioConfig;
use crate::sensing::{Observation, SensingState, TickSensing};

const STREAM_POPULATION: u64 = 0;
const STREAM_ROUTING: u64 = 1;
const STREAM_NOISE: u64 = 2;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{remaining} agent(s) still in the park at the horizon; extend horizon_ticks")]
    HorizonTooShort { remaining: usize },
}

/// A handoff plus where it ended up.
#[derive(Debug, Clone)]
pub struct MessageRecord {
    pub msg: HandoffMessage,
    pub emitted_tick: i64,
}

/// Every emitted message is exactly one of fulfilled, expired, or clamped at
/// the horizon; the three always sum to `emitted`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageLedger {
    pub emitted: u64,
    pub fulfilled: u64,
    pub expired: u64,
    pub clamped: u64,
}

#[derive(Debug)]
pub struct RunResult {
    pub seed: u64,
    pub mode: Mode,
    pub observations: Vec<Observation>,
    pub registry: IdentityRegistry,
    pub energy: EnergyLedger,
    pub accuracy: Option<AccuracyReport>,
    pub messages: Vec<MessageRecord>,
    pub ledger: MessageLedger,
    pub first_obs_tick: Option<i64>,
    /// Ground-truth agents, for scoring and optional truth emission.
    pub agents: Vec<UserAgent>,
}

/// Execute one seeded run of a scenario.
pub fn run(config: &ScenarioConfig, seed: u64) -> Result<RunResult, EngineError> {
    let mut pop_rng = ChaCha8Rng::seed_from_u64(seed);
    pop_rng.set_stream(STREAM_POPULATION);
    let mut route_rng = ChaCha8Rng::seed_from_u64(seed);
    route_rng.set_stream(STREAM_ROUTING);
    let agents = sample_population(
        &config.population,
        &config.catalog,
        &config.graph,
        &mut pop_rng,
        &mut route_rng,
    )?;
    run_with_population(config, agents, seed)
}

/// Execute the tick loop over an explicit ground-truth population. Used by
/// `run` and by verification harnesses that need hand-built worlds.
pub fn run_with_population(
    config: &ScenarioConfig,
    mut agents: Vec<UserAgent>,
    seed: u64,
) -> Result<RunResult, EngineError> {
    let graph = &config.graph;
    let horizon = config.horizon_ticks;
    let dt = config.tick_seconds;
    debug_assert!(
        agents.windows(2).all(|w| w[0].true_id < w[1].true_id),
        "agents must arrive sorted by true id"
    );

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(STREAM_NOISE);

    let mut exited_at: Vec<Option<i64>> = vec![None; agents.len()];

    let match_policy = MatchPolicy {
        eta_gating: config.protocol.eta_gating,
        speed_check: config.protocol.eta_gating,
        speed_tolerance: config.protocol.speed_tolerance,
    };
    let domain_sizes = config.domain_sizes();
    let per_sensor_candidates: BTreeMap<SensorId, Vec<Attribute>> = graph
        .sensors()
        .map(|s| (s.id, config.comparison_attributes(s)))
        .collect();

    let mut schedule = WakeSchedule::new(config.mode, horizon);
    let mut sensing = SensingState::new();
    let mut pool = PendingPool::default();
    let mut registry = IdentityRegistry::new();
    let mut observations: Vec<Observation> = Vec::new();
    let mut histories: BTreeMap<SensorId, VecDeque<Perception>> =
        graph.sensors().map(|s| (s.id, VecDeque::new())).collect();
    let mut mailbox: BTreeMap<i64, Vec<HandoffMessage>> = BTreeMap::new();
    let mut messages: Vec<MessageRecord> = Vec::new();

    for tick in 0..horizon {
        // 1. movement: agents hold their spawn position on their spawn tick
        // and advance one step per tick afterwards. An agent that passes its
        // exit stays clamped there for this tick's sensing, then disappears.
        for (i, agent) in agents.iter_mut().enumerate() {
            if agent.spawn_tick >= tick || exited_at[i].is_some() {
                continue;
            }
            if advance_user(agent, dt) == Advance::Exited {
                exited_at[i] = Some(tick);
            }
        }

        // 2. delivery: messages emitted at t become visible at t+1.
        if let Some(batch) = mailbox.remove(&tick) {
            for msg in batch {
                pool.deliver(msg);
            }
        }

        // 3. wake/expiry bookkeeping: predictions whose window has passed
        // expire (the user left the park or was missed).
        if match_policy.eta_gating {
            pool.expire_before(tick);
        }

        // 4. sensing.
        let active: Vec<(u64, Point, &crate::attrs::AttributeVector)> = agents
            .iter()
            .enumerate()
            .filter(|(i, a)| {
                a.spawn_tick <= tick && exited_at[*i].is_none_or(|t| t == tick)
            })
            .map(|(_, a)| (a.true_id, a.coordinates(graph), &a.attributes))
            .collect();
        let mut events = TickSensing::default();
        for sensor in graph.sensors() {
            let awake = schedule.is_awake(sensor.id, sensor.always_on, tick);
            sensing.step(
                sensor,
                awake,
                &active,
                tick,
                &config.noise,
                &domain_sizes,
                &mut noise_rng,
                &mut events,
            );
        }
        for obs in &events.opened {
            debug_assert_eq!(obs.obs_id as usize, observations.len());
            let history = histories.get_mut(&obs.sensor).unwrap();
            history.push_back(obs.perceived.clone());
            if history.len() > config.protocol.history_len {
                history.pop_front();
            }
            observations.push(obs.clone());
        }

        // 5. handoff emission + wake scheduling for visits that just ended.
        for &(obs_id, depart) in &events.closed {
            observations[obs_id as usize].depart = depart;
            let obs = &observations[obs_id as usize];
            let history = &histories[&obs.sensor];
            let selection = select_attributes(
                history.iter().cloned().collect::<Vec<_>>().as_slice(),
                &per_sensor_candidates[&obs.sensor],
                config.protocol.k,
                config.protocol.direction,
                config.protocol.history_min,
            );
            for msg in
                make_handoffs(obs, graph, &selection, config.protocol.window, dt)?
            {
                schedule.schedule_wake(&msg);
                messages.push(MessageRecord { msg: msg.clone(), emitted_tick: tick });
                mailbox.entry(tick + 1).or_default().push(msg);
            }
        }

        // 6. registry ingestion for observations opened this tick.
        for obs in &events.opened {
            let decision = match_observation(obs, &mut pool, &match_policy);
            registry.ingest(obs, &decision)?;
        }
    }

    // Visits still open at the horizon keep their last sighting as depart;
    // no handoffs are emitted past the end of the run.
    let mut tail = TickSensing::default();
    sensing.drain_open(&mut tail);
    for (obs_id, depart) in tail.closed {
        observations[obs_id as usize].depart = depart;
    }

    let remaining = exited_at.iter().filter(|t| t.is_none()).count();
    if remaining > 0 {
        return Err(EngineError::HorizonTooShort { remaining });
    }

    let ledger = MessageLedger {
        emitted: messages.len() as u64,
        fulfilled: pool.fulfilled,
        expired: pool.expired,
        clamped: pool.remaining() + mailbox.values().map(|v| v.len() as u64).sum::<u64>(),
    };

    let first_obs_tick = observations.first().map(|o| o.a);
    let energy = meter(&schedule, graph, first_obs_tick, horizon, config.energy_window_ticks);
    let accuracy = if agents.is_empty() {
        None
    } else {
        Some(score(&registry, &observations, &agents)?)
    };

    Ok(RunResult {
        seed,
        mode: config.mode,
        observations,
        registry,
        energy,
        accuracy,
        messages,
        ledger,
        first_obs_tick,
        agents,
    })
}

/// Compact per-run record kept when replicating.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub seed: u64,
    pub mode: Mode,
    pub unique_count: usize,
    pub true_count: usize,
    pub count_accuracy: f64,
    pub falsely_new: u64,
    pub wrongly_merged: u64,
    pub trail_exact_fraction: f64,
    pub energy_units: BTreeMap<SensorId, u64>,
}

impl From<&RunResult> for RunSummary {
    fn from(r: &RunResult) -> Self {
        let acc = r.accuracy.as_ref();
        RunSummary {
            seed: r.seed,
            mode: r.mode,
            unique_count: r.registry.unique_count(),
            true_count: r.agents.len(),
            count_accuracy: acc.map_or(0.0, |a| a.count_accuracy),
            falsely_new: acc.map_or(0, |a| a.falsely_new),
            wrongly_merged: acc.map_or(0, |a| a.wrongly_merged),
            trail_exact_fraction: acc.map_or(0.0, |a| a.trail_exact_fraction),
            energy_units: r.energy.units.clone(),
        }
    }
}

#[derive(Debug)]
pub struct ReplicateStats {
    /// Summaries in ascending seed order, regardless of worker count.
    pub summaries: Vec<RunSummary>,
    /// Per-seed failures, collected rather than aborting the batch.
    pub failures: Vec<(u64, String)>,
    pub mean_count_accuracy: f64,
    pub std_count_accuracy: f64,
    pub mean_trail_exact: f64,
    /// Mean energy units per sensor across replications.
    pub mean_energy: BTreeMap<SensorId, f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Run seeds `base_seed .. base_seed + n` and aggregate. Replications execute
/// on a pool of `jobs` workers; results are merged in seed order so the
/// output is independent of scheduling.
pub fn replicate(config: &ScenarioConfig, n: usize, base_seed: u64, jobs: usize) -> ReplicateStats {
    let seeds: Vec<u64> = (0..n as u64).map(|i| base_seed + i).collect();
    let results: Vec<(u64, Result<RunSummary, String>)> = if jobs <= 1 {
        seeds
            .iter()
            .map(|&s| (s, run(config, s).map(|r| RunSummary::from(&r)).map_err(|e| e.to_string())))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("worker pool");
        pool.install(|| {
            seeds
                .par_iter()
                .map(|&s| {
                    (s, run(config, s).map(|r| RunSummary::from(&r)).map_err(|e| e.to_string()))
                })
                .collect()
        })
    };

    let mut sorted = results;
    sorted.sort_by_key(|(s, _)| *s);
    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in sorted {
        match r {
            Ok(summary) => summaries.push(summary),
            Err(e) => failures.push((seed, e)),
        }
    }

    let accuracies: Vec<f64> = summaries.iter().map(|s| s.count_accuracy).collect();
    let (mean_count_accuracy, std_count_accuracy) = mean_std(&accuracies);
    let trail: Vec<f64> = summaries.iter().map(|s| s.trail_exact_fraction).collect();
    let (mean_trail_exact, _) = mean_std(&trail);

    let mut mean_energy: BTreeMap<SensorId, f64> = BTreeMap::new();
    if !summaries.is_empty() {
        for s in &summaries {
            for (sensor, units) in &s.energy_units {
                *mean_energy.entry(*sensor).or_insert(0.0) += *units as f64;
            }
        }
        for v in mean_energy.values_mut() {
            *v /= summaries.len() as f64;
        }
    }

    ReplicateStats {
        summaries,
        failures,
        mean_count_accuracy,
        std_count_accuracy,
        mean_trail_exact,
        mean_energy,
    }
}

/// Paired duty-cycle vs always-on comparison over identical seeds.
#[derive(Debug)]
pub struct EnergyComparison {
    pub per_sensor: Vec<SensorEnergyRow>,
    pub mean_units_duty: f64,
    pub mean_units_on: f64,
    /// 100 * (1 - mean duty units / mean always-on units).
    pub saving_percent: Option<f64>,
    /// Aggregate saving per seed, for spread reporting.
    pub per_seed_saving: Vec<(u64, f64)>,
    pub saving_std: f64,
}

#[derive(Debug, Clone)]
pub struct SensorEnergyRow {
    pub sensor: SensorId,
    pub mean_units_duty: f64,
    pub mean_units_on: f64,
    pub saving_percent: Option<f64>,
}

pub fn compare_energy(
    config: &ScenarioConfig,
    n: usize,
    base_seed: u64,
    jobs: usize,
) -> EnergyComparison {
    let mut duty_cfg = config.clone();
    duty_cfg.mode = Mode::DutyCycle;
    let mut on_cfg = config.clone();
    on_cfg.mode = Mode::AlwaysOn;
    let duty = replicate(&duty_cfg, n, base_seed, jobs);
    let on = replicate(&on_cfg, n, base_seed, jobs);

    let mut per_sensor = Vec::new();
    for (sensor, mean_on) in &on.mean_energy {
        let mean_duty = *duty.mean_energy.get(sensor).unwrap_or(&0.0);
        let saving = if *mean_on > 0.0 {
            Some(100.0 * (1.0 - mean_duty / mean_on))
        } else {
            None
        };
        per_sensor.push(SensorEnergyRow {
            sensor: *sensor,
            mean_units_duty: mean_duty,
            mean_units_on: *mean_on,
            saving_percent: saving,
        });
    }

    let mut per_seed_saving = Vec::new();
    for (d, o) in duty.summaries.iter().zip(on.summaries.iter()) {
        debug_assert_eq!(d.seed, o.seed);
        let total_d: u64 = d.energy_units.values().sum();
        let total_o: u64 = o.energy_units.values().sum();
        if total_o > 0 {
            per_seed_saving.push((d.seed, 100.0 * (1.0 - total_d as f64 / total_o as f64)));
        }
    }
    let (_, saving_std) =
        mean_std(&per_seed_saving.iter().map(|(_, s)| *s).collect::<Vec<_>>());

    let mean_units_duty = if duty.mean_energy.is_empty() {
        0.0
    } else {
        duty.mean_energy.values().sum::<f64>() / duty.mean_energy.len() as f64
    };
    let mean_units_on = if on.mean_energy.is_empty() {
        0.0
    } else {
        on.mean_energy.values().sum::<f64>() / on.mean_energy.len() as f64
    };
    let saving_percent = if mean_units_on > 0.0 {
        Some(100.0 * (1.0 - mean_units_duty / mean_units_on))
    } else {
        None
    };

    EnergyComparison {
        per_sensor,
        mean_units_duty,
        mean_units_on,
        saving_percent,
        per_seed_saving,
        saving_std,
    }
}

/// Mean/std count accuracy per attribute set, sorted by accuracy descending.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub set_name: String,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

pub fn sweep_attribute_sets(
    config: &ScenarioConfig,
    sets: &[crate::scenario::AttributeSetSpec],
    n: usize,
    base_seed: u64,
    jobs: usize,
) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = sets
        .iter()
        .map(|set| {
            let mut cfg = config.clone();
            set.apply(&mut cfg);
            let stats = replicate(&cfg, n, base_seed, jobs);
            SweepRow {
                set_name: set.name.clone(),
                mean_accuracy: stats.mean_count_accuracy,
                std_accuracy: stats.std_count_accuracy,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.mean_accuracy
            .partial_cmp(&a.mean_accuracy)
            .unwrap()
            .then(a.set_name.cmp(&b.set_name))
    });
    rows
}
