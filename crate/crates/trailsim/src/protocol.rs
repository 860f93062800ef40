//! Inter-sensor coordination: entropy-ranked attribute selection, arrival
//! time estimation from edge distance and observed speed, handoff fan-out to
//! graph neighbors, and duty-cycle wake scheduling.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::attrs::{entropy_of, Attribute, CatValue, Perception};
use crate::graph::{GraphError, ParkGraph, SensorId};
use crate::sensing::Observation;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("cannot compute entropy of an empty multiset")]
    EmptyInput,
    #[error("speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Shannon entropy in bits over the empirical value frequencies.
pub fn attribute_entropy<T: Ord>(values: &[T]) -> Result<f64, ProtocolError> {
    entropy_of(values).ok_or(ProtocolError::EmptyInput)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionDirection {
    /// Send the lowest-entropy attributes (the default rule).
    Lowest,
    /// Send the highest-entropy attributes instead.
    Highest,
}

/// Rank candidate attributes by entropy over a sensor's recent observation
/// history and return the first `k`.
///
/// With fewer than `history_min` observations the ranking falls back to the
/// fixed catalog order. Ties always break by catalog order.
pub fn select_attributes(
    history: &[Perception],
    candidates: &[Attribute],
    k: usize,
    direction: SelectionDirection,
    history_min: usize,
) -> Vec<Attribute> {
    let k = k.min(candidates.len());
    if history.len() < history_min {
        return candidates[..k].to_vec();
    }
    let mut ranked: Vec<(f64, usize, Attribute)> = candidates
        .iter()
        .map(|attr| {
            let values: Vec<CatValue> =
                history.iter().filter_map(|p| p.get(*attr)).collect();
            let bits = entropy_of(&values).unwrap_or(0.0);
            let pos = Attribute::ALL.iter().position(|a| a == attr).unwrap();
            (bits, pos, *attr)
        })
        .collect();
    ranked.sort_by(|a, b| {
        let ord = a.0.partial_cmp(&b.0).unwrap();
        match direction {
            SelectionDirection::Lowest => ord.then(a.1.cmp(&b.1)),
            SelectionDirection::Highest => ord.reverse().then(a.1.cmp(&b.1)),
        }
    });
    ranked.into_iter().take(k).map(|(_, _, a)| a).collect()
}

/// Predicted arrival tick at a neighbor `d` meters away, leaving at
/// `depart_tick` with the given speed.
pub fn estimate_arrival(
    d: f64,
    speed: f64,
    depart_tick: i64,
    tick_seconds: f64,
) -> Result<i64, ProtocolError> {
    if speed <= 0.0 {
        return Err(ProtocolError::NonPositiveSpeed(speed));
    }
    Ok(depart_tick + travel_ticks(d, speed, tick_seconds))
}

fn travel_ticks(d: f64, speed: f64, tick_seconds: f64) -> i64 {
    (d / (speed * tick_seconds)).round() as i64
}

/// Half-width of the arrival window around an estimated arrival.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct WindowPolicy {
    /// Floor on the half-width in ticks; absorbs rounding error.
    pub min_half_width: i64,
    /// Fraction of the travel time added as tolerance.
    pub travel_fraction: f64,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy { min_half_width: 2, travel_fraction: 0.2 }
    }
}

impl WindowPolicy {
    pub fn half_width(&self, travel: i64) -> i64 {
        self.min_half_width.max((self.travel_fraction * travel as f64).ceil() as i64)
    }
}

/// Attributes plus an arrival window, sent from an observing sensor to one
/// neighbor. Speed rides along even when not among the selected comparison
/// attributes; the next hop needs it to chain its own estimate.
#[derive(Debug, Clone)]
pub struct HandoffMessage {
    pub origin: SensorId,
    pub origin_obs: u64,
    pub target: SensorId,
    pub selected: Vec<(Attribute, CatValue)>,
    pub speed: f64,
    pub eta: i64,
    /// Inclusive tick interval [eta - w, eta + w].
    pub window: (i64, i64),
}

/// Build one handoff per neighbor of the observing sensor.
pub fn make_handoffs(
    obs: &Observation,
    graph: &ParkGraph,
    selection: &[Attribute],
    policy: WindowPolicy,
    tick_seconds: f64,
) -> Result<Vec<HandoffMessage>, ProtocolError> {
    let speed = obs.perceived.speed;
    if speed <= 0.0 {
        return Err(ProtocolError::NonPositiveSpeed(speed));
    }
    let selected: Vec<(Attribute, CatValue)> = selection
        .iter()
        .filter_map(|a| obs.perceived.get(*a).map(|v| (*a, v)))
        .collect();
    let mut out = Vec::new();
    for (target, d) in graph.neighbors(obs.sensor)? {
        let travel = travel_ticks(*d, speed, tick_seconds);
        let eta = obs.depart + travel;
        let w = policy.half_width(travel);
        out.push(HandoffMessage {
            origin: obs.sensor,
            origin_obs: obs.obs_id,
            target: *target,
            selected: selected.clone(),
            speed,
            eta,
            window: (eta - w, eta + w),
        });
    }
    Ok(out)
}

/// Merged set of inclusive tick intervals.
#[derive(Debug, Clone, Default)]
pub struct IntervalSet {
    intervals: Vec<(i64, i64)>,
}

impl IntervalSet {
    pub fn add(&mut self, start: i64, end: i64) {
        if end < start {
            return;
        }
        self.intervals.push((start, end));
        self.intervals.sort_unstable();
        let mut merged: Vec<(i64, i64)> = Vec::with_capacity(self.intervals.len());
        for &(s, e) in &self.intervals {
            match merged.last_mut() {
                Some((_, le)) if s <= *le + 1 => *le = (*le).max(e),
                _ => merged.push((s, e)),
            }
        }
        self.intervals = merged;
    }

    pub fn contains(&self, t: i64) -> bool {
        self.intervals
            .binary_search_by(|&(s, e)| {
                if t < s {
                    std::cmp::Ordering::Greater
                } else if t > e {
                    std::cmp::Ordering::Less
                } else {
                    std::cmp::Ordering::Equal
                }
            })
            .is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.intervals.iter().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    AlwaysOn,
    DutyCycle,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::AlwaysOn => "always-on",
            Mode::DutyCycle => "duty-cycle",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "always-on" => Some(Mode::AlwaysOn),
            "duty-cycle" => Some(Mode::DutyCycle),
            _ => None,
        }
    }
}

/// Per-sensor wake intervals for a duty-cycled run. Always-on sensors and
/// always-on mode are implicitly awake everywhere.
#[derive(Debug, Clone)]
pub struct WakeSchedule {
    mode: Mode,
    horizon: i64,
    intervals: BTreeMap<SensorId, IntervalSet>,
}

impl WakeSchedule {
    pub fn new(mode: Mode, horizon: i64) -> Self {
        WakeSchedule { mode, horizon, intervals: BTreeMap::new() }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Grant the message's target sensor a wake window. No-op in always-on
    /// mode; windows are clamped to the simulation horizon.
    pub fn schedule_wake(&mut self, msg: &HandoffMessage) {
        if self.mode == Mode::AlwaysOn {
            return;
        }
        let start = msg.window.0.max(0);
        let end = msg.window.1.min(self.horizon);
        self.intervals.entry(msg.target).or_default().add(start, end);
    }

    pub fn is_awake(&self, sensor: SensorId, always_on: bool, tick: i64) -> bool {
        if self.mode == Mode::AlwaysOn || always_on {
            return true;
        }
        self.intervals.get(&sensor).is_some_and(|iv| iv.contains(tick))
    }

    pub fn intervals(&self, sensor: SensorId) -> Option<&IntervalSet> {
        self.intervals.get(&sensor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrs::{AttributeVector, Perception, ACTIVITY_WALK};
    use crate::graph::{ParkGraph, Point, SensorSpec, TrailEdge};
    use std::collections::BTreeSet;

    #[test]
    fn entropy_of_constant_multiset_is_zero() {
        assert_eq!(attribute_entropy(&["red", "red", "red"]).unwrap(), 0.0);
    }

    #[test]
    fn entropy_of_uniform_binary_is_one_bit() {
        assert_eq!(attribute_entropy(&["red", "blue"]).unwrap(), 1.0);
    }

    #[test]
    fn entropy_of_quarter_split() {
        let e = attribute_entropy(&["red", "blue", "blue", "blue"]).unwrap();
        assert!((e - 0.811278).abs() < 1e-6, "got {e}");
    }

    #[test]
    fn entropy_rejects_empty_input() {
        assert!(matches!(
            attribute_entropy::<u8>(&[]),
            Err(ProtocolError::EmptyInput)
        ));
    }

    fn history_with(top_constant: bool) -> Vec<Perception> {
        (0..20)
            .map(|i| {
                let mut p = Perception::new(1.0);
                p.set(Attribute::TopColor, CatValue(if top_constant { 0 } else { i % 4 }));
                p.set(Attribute::Gender, CatValue(i % 2));
                p
            })
            .collect()
    }

    #[test]
    fn lowest_entropy_attribute_wins_by_default() {
        let hist = history_with(true);
        let picked = select_attributes(
            &hist,
            &[Attribute::TopColor, Attribute::Gender],
            1,
            SelectionDirection::Lowest,
            10,
        );
        assert_eq!(picked, vec![Attribute::TopColor]);
    }

    #[test]
    fn highest_direction_flips_the_ranking() {
        let hist = history_with(true);
        let picked = select_attributes(
            &hist,
            &[Attribute::TopColor, Attribute::Gender],
            1,
            SelectionDirection::Highest,
            10,
        );
        assert_eq!(picked, vec![Attribute::Gender]);
    }

    #[test]
    fn oversized_k_returns_all_candidates_in_rank_order() {
        let hist = history_with(true);
        let picked = select_attributes(
            &hist,
            &[Attribute::TopColor, Attribute::Gender],
            10,
            SelectionDirection::Lowest,
            10,
        );
        assert_eq!(picked, vec![Attribute::TopColor, Attribute::Gender]);
    }

    #[test]
    fn short_history_falls_back_to_catalog_order() {
        let hist = history_with(true)[..5].to_vec();
        let picked = select_attributes(
            &hist,
            &[Attribute::TopColor, Attribute::Gender],
            1,
            SelectionDirection::Highest,
            10,
        );
        // fallback ignores direction and uses catalog order
        assert_eq!(picked, vec![Attribute::TopColor]);
    }

    #[test]
    fn estimate_arrival_examples() {
        assert_eq!(estimate_arrival(100.0, 2.0, 0, 1.0).unwrap(), 50);
        assert_eq!(estimate_arrival(0.0, 2.0, 7, 1.0).unwrap(), 7);
        assert!(matches!(
            estimate_arrival(100.0, 0.0, 0, 1.0),
            Err(ProtocolError::NonPositiveSpeed(_))
        ));
    }

    #[test]
    fn window_half_width_policy() {
        let policy = WindowPolicy::default();
        assert_eq!(policy.half_width(50), 10);
        assert_eq!(policy.half_width(1), 2);
        assert_eq!(policy.half_width(0), 2);
    }

    fn two_sensor_graph() -> ParkGraph {
        let caps: BTreeSet<Attribute> = Attribute::ALL.iter().copied().collect();
        ParkGraph::build(
            vec![
                SensorSpec {
                    id: SensorId(0),
                    position: Point::new(0.0, 0.0),
                    range_m: 10.0,
                    capabilities: caps.clone(),
                    always_on: true,
                },
                SensorSpec {
                    id: SensorId(1),
                    position: Point::new(100.0, 0.0),
                    range_m: 10.0,
                    capabilities: caps,
                    always_on: true,
                },
            ],
            vec![TrailEdge { a: SensorId(0), b: SensorId(1), distance_m: 100.0, exit: true }],
        )
        .unwrap()
    }

    #[test]
    fn fanout_matches_degree() {
        let graph = two_sensor_graph();
        let mut perceived = Perception::new(2.0);
        perceived.set(Attribute::TopColor, CatValue(1));
        perceived.set(Attribute::Activity, ACTIVITY_WALK);
        let obs = Observation {
            obs_id: 0,
            sensor: SensorId(0),
            a: 0,
            depart: 4,
            perceived,
            truth: 0,
        };
        let msgs = make_handoffs(
            &obs,
            &graph,
            &[Attribute::TopColor],
            WindowPolicy::default(),
            1.0,
        )
        .unwrap();
        assert_eq!(msgs.len(), 1);
        let m = &msgs[0];
        assert_eq!(m.target, SensorId(1));
        assert_eq!(m.eta, 4 + 50);
        assert_eq!(m.window, (44, 64));
        assert_eq!(m.selected, vec![(Attribute::TopColor, CatValue(1))]);
        assert_eq!(m.speed, 2.0);
        let _ = AttributeVector::new([CatValue(0); 6], 1.0);
    }

    #[test]
    fn interval_set_merges_overlaps() {
        let mut set = IntervalSet::default();
        set.add(48, 52);
        assert_eq!(set.iter().collect::<Vec<_>>(), vec![(48, 52)]);
        set.add(50, 60);
        assert_eq!(set.iter().collect::<Vec<_>>(), vec![(48, 60)]);
        set.add(10, 20);
        assert_eq!(set.iter().collect::<Vec<_>>(), vec![(10, 20), (48, 60)]);
        assert!(set.contains(15));
        assert!(set.contains(48));
        assert!(!set.contains(30));
    }

    #[test]
    fn always_on_mode_ignores_wake_requests() {
        let msg = HandoffMessage {
            origin: SensorId(0),
            origin_obs: 0,
            target: SensorId(1),
            selected: vec![],
            speed: 1.0,
            eta: 50,
            window: (48, 52),
        };
        let mut duty = WakeSchedule::new(Mode::DutyCycle, 1000);
        duty.schedule_wake(&msg);
        assert!(duty.is_awake(SensorId(1), false, 50));
        assert!(!duty.is_awake(SensorId(1), false, 100));

        let mut on = WakeSchedule::new(Mode::AlwaysOn, 1000);
        on.schedule_wake(&msg);
        assert!(on.intervals(SensorId(1)).is_none());
        assert!(on.is_awake(SensorId(1), false, 999));
    }
}
