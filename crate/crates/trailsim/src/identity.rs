//! Central identity resolution: each observation either continues a known
//! unique user (when a pending handoff predicted it) or opens a new one.
//! Trails are reconstructed here, one ordered sensor sequence per user.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::attrs::Attribute;
use crate::graph::{ParkGraph, SensorId};
use crate::protocol::{HandoffMessage, WindowPolicy};
use crate::sensing::Observation;

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("handoff references origin observation {0} which was never ingested")]
    UnknownOrigin(u64),
    #[error("brute-force oracle limited to {limit} observations, got {got}")]
    TooLarge { limit: usize, got: usize },
}

/// How observations are compared against pending handoffs.
#[derive(Debug, Clone, Copy)]
pub struct MatchPolicy {
    /// Require the observation tick to fall inside the message window and
    /// expire messages whose window has passed. Disabled by the
    /// attribute-only ("no-timestamp") configuration, which also drops the
    /// speed comparison since observed speed is a timing-derived quantity.
    pub eta_gating: bool,
    pub speed_check: bool,
    /// Relative speed tolerance: |obs - msg| <= tol * msg.
    pub speed_tolerance: f64,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        MatchPolicy { eta_gating: true, speed_check: true, speed_tolerance: 0.10 }
    }
}

/// A handoff waiting at its target sensor. Consumed at most once.
#[derive(Debug, Clone)]
pub struct Pending {
    pub msg: HandoffMessage,
    pub consumed: bool,
}

/// Pending handoffs per target sensor.
#[derive(Debug, Default)]
pub struct PendingPool {
    by_target: BTreeMap<SensorId, Vec<Pending>>,
    pub fulfilled: u64,
    pub expired: u64,
}

impl PendingPool {
    pub fn deliver(&mut self, msg: HandoffMessage) {
        self.by_target
            .entry(msg.target)
            .or_default()
            .push(Pending { msg, consumed: false });
    }

    /// Drop unconsumed messages whose window ended before `tick`.
    /// Only meaningful under ETA gating; without it messages never expire.
    pub fn expire_before(&mut self, tick: i64) {
        for pendings in self.by_target.values_mut() {
            pendings.retain(|p| {
                if p.consumed {
                    return false;
                }
                if p.msg.window.1 < tick {
                    self.expired += 1;
                    return false;
                }
                true
            });
        }
    }

    /// Unconsumed messages still waiting (counted as horizon-clamped when the
    /// run ends).
    pub fn remaining(&self) -> u64 {
        self.by_target
            .values()
            .map(|v| v.iter().filter(|p| !p.consumed).count() as u64)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub enum MatchDecision {
    NewUser,
    SameUser { message: HandoffMessage },
}

fn attributes_match(obs: &Observation, msg: &HandoffMessage) -> bool {
    // An observer that cannot perceive a selected attribute cannot disagree
    // on it; comparison runs over the attributes both sides carry.
    msg.selected.iter().all(|(attr, value)| match obs.perceived.get(*attr) {
        Some(v) => v == *value,
        None => true,
    })
}

/// Resolve one observation against the pending handoffs at its sensor.
///
/// Candidates must be unconsumed, attribute-equal, inside their arrival
/// window (under ETA gating) and within the speed tolerance. The winner is
/// the candidate with the smallest |obs.a - eta|, ties broken by lowest
/// origin observation id; it is marked consumed so no handoff ever merges
/// two arrivals. Without ETA gating there is no usable notion of arrival
/// distance, so the tie-break rule alone decides: the oldest matching
/// message wins.
pub fn match_observation(
    obs: &Observation,
    pool: &mut PendingPool,
    policy: &MatchPolicy,
) -> MatchDecision {
    let Some(pendings) = pool.by_target.get_mut(&obs.sensor) else {
        return MatchDecision::NewUser;
    };
    let mut best: Option<(i64, u64, usize)> = None;
    for (idx, p) in pendings.iter().enumerate() {
        if p.consumed {
            continue;
        }
        if policy.eta_gating && !(p.msg.window.0 <= obs.a && obs.a <= p.msg.window.1) {
            continue;
        }
        if !attributes_match(obs, &p.msg) {
            continue;
        }
        if policy.speed_check
            && (obs.perceived.speed - p.msg.speed).abs()
                > policy.speed_tolerance * p.msg.speed
        {
            continue;
        }
        let eta_distance = if policy.eta_gating { (obs.a - p.msg.eta).abs() } else { 0 };
        let key = (eta_distance, p.msg.origin_obs);
        if best.is_none_or(|(d, o, _)| key < (d, o)) {
            best = Some((key.0, key.1, idx));
        }
    }
    match best {
        Some((_, _, idx)) => {
            pendings[idx].consumed = true;
            let message = pendings.remove(idx).msg;
            pool.fulfilled += 1;
            MatchDecision::SameUser { message }
        }
        None => MatchDecision::NewUser,
    }
}

/// Map user id -> reconstructed trail, plus the observation assignment.
#[derive(Debug, Default, Clone)]
pub struct IdentityRegistry {
    trails: Vec<Vec<(SensorId, i64)>>,
    first_obs: Vec<u64>,
    assignment: BTreeMap<u64, u64>,
}

impl IdentityRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record the decision for one observation. New users get a fresh id;
    /// matched observations extend the identity of the message's origin.
    pub fn ingest(
        &mut self,
        obs: &Observation,
        decision: &MatchDecision,
    ) -> Result<u64, IdentityError> {
        let user = match decision {
            MatchDecision::NewUser => {
                let user = self.trails.len() as u64;
                self.trails.push(Vec::new());
                self.first_obs.push(obs.obs_id);
                user
            }
            MatchDecision::SameUser { message } => *self
                .assignment
                .get(&message.origin_obs)
                .ok_or(IdentityError::UnknownOrigin(message.origin_obs))?,
        };
        self.trails[user as usize].push((obs.sensor, obs.a));
        self.assignment.insert(obs.obs_id, user);
        Ok(user)
    }

    pub fn unique_count(&self) -> usize {
        self.trails.len()
    }

    pub fn trail(&self, user: u64) -> &[(SensorId, i64)] {
        &self.trails[user as usize]
    }

    pub fn trails(&self) -> impl Iterator<Item = (u64, &[(SensorId, i64)])> {
        self.trails.iter().enumerate().map(|(i, t)| (i as u64, t.as_slice()))
    }

    pub fn first_obs(&self, user: u64) -> u64 {
        self.first_obs[user as usize]
    }

    pub fn assignment(&self) -> &BTreeMap<u64, u64> {
        &self.assignment
    }

    pub fn user_of(&self, obs_id: u64) -> Option<u64> {
        self.assignment.get(&obs_id).copied()
    }

    /// Chain labels in observation-id order, numbered by first appearance.
    /// Two registries describe the same partition iff these vectors match.
    pub fn canonical_partition(&self) -> Vec<usize> {
        let mut labels: BTreeMap<u64, usize> = BTreeMap::new();
        let mut out = Vec::with_capacity(self.assignment.len());
        for user in self.assignment.values() {
            let next = labels.len();
            out.push(*labels.entry(*user).or_insert(next));
        }
        out
    }
}

pub const ORACLE_LIMIT: usize = 12;

/// Parameters the oracle needs to rebuild window and speed checks on its own.
#[derive(Debug, Clone, Copy)]
pub struct OracleParams {
    pub tick_seconds: f64,
    pub window: WindowPolicy,
    pub speed_tolerance: f64,
}

fn oracle_compatible(
    prev: &Observation,
    next: &Observation,
    graph: &ParkGraph,
    params: &OracleParams,
) -> bool {
    let Some(d) = graph.edge_between(prev.sensor, next.sensor) else {
        return false;
    };
    for attr in Attribute::ALL {
        if let (Some(a), Some(b)) = (prev.perceived.get(attr), next.perceived.get(attr)) {
            if a != b {
                return false;
            }
        }
    }
    let speed = prev.perceived.speed;
    if (next.perceived.speed - speed).abs() > params.speed_tolerance * speed {
        return false;
    }
    let travel = (d / (speed * params.tick_seconds)).round() as i64;
    let eta = prev.depart + travel;
    let w = params
        .window
        .min_half_width
        .max((params.window.travel_fraction * travel as f64).ceil() as i64);
    (next.a - eta).abs() <= w
}

/// Exhaustive minimal partition of observations into travel-consistent
/// chains: consecutive chain elements must sit on adjacent sensors, agree on
/// every attribute both perceive, match in speed, and arrive inside the
/// recomputed window.
///
/// Independent of the online matcher; used to verify it on small instances.
/// Returns chain labels in observation-id order (first-use numbering), from
/// the partition with the fewest chains, lexicographically smallest on ties.
pub fn brute_force_oracle(
    observations: &[Observation],
    graph: &ParkGraph,
    params: &OracleParams,
) -> Result<Vec<usize>, IdentityError> {
    if observations.len() > ORACLE_LIMIT {
        return Err(IdentityError::TooLarge { limit: ORACLE_LIMIT, got: observations.len() });
    }
    let mut obs: Vec<&Observation> = observations.iter().collect();
    obs.sort_by_key(|o| (o.a, o.obs_id));
    let n = obs.len();
    if n == 0 {
        return Ok(Vec::new());
    }

    // Iterative deepening on chain count; DFS tries chains in label order so
    // the first complete assignment is the lexicographically smallest one.
    fn dfs(
        i: usize,
        obs: &[&Observation],
        chain_tails: &mut Vec<usize>,
        labels: &mut Vec<usize>,
        budget: usize,
        graph: &ParkGraph,
        params: &OracleParams,
    ) -> bool {
        if i == obs.len() {
            return true;
        }
        for c in 0..chain_tails.len() {
            let tail = chain_tails[c];
            if oracle_compatible(obs[tail], obs[i], graph, params) {
                let prev = chain_tails[c];
                chain_tails[c] = i;
                labels[i] = c;
                if dfs(i + 1, obs, chain_tails, labels, budget, graph, params) {
                    return true;
                }
                chain_tails[c] = prev;
            }
        }
        if chain_tails.len() < budget {
            chain_tails.push(i);
            labels[i] = chain_tails.len() - 1;
            if dfs(i + 1, obs, chain_tails, labels, budget, graph, params) {
                return true;
            }
            chain_tails.pop();
        }
        false
    }

    let mut labels = vec![0usize; n];
    for budget in 1..=n {
        let mut chain_tails: Vec<usize> = Vec::new();
        if dfs(0, &obs, &mut chain_tails, &mut labels, budget, graph, params) {
            // report labels in obs-id order
            let mut by_id: Vec<(u64, usize)> =
                obs.iter().zip(&labels).map(|(o, l)| (o.obs_id, *l)).collect();
            by_id.sort_unstable();
            let mut renumber: BTreeMap<usize, usize> = BTreeMap::new();
            let mut out = Vec::with_capacity(n);
            for (_, l) in by_id {
                let next = renumber.len();
                out.push(*renumber.entry(l).or_insert(next));
            }
            return Ok(out);
        }
    }
    unreachable!("a partition into singletons always exists");
}
