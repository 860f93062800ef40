//! The park as a sensor graph: sensors are nodes placed in planar meter
//! coordinates, trail segments are distance-weighted edges.
//!
//! A `ParkGraph` is immutable after construction and can be shared freely
//! across concurrent replication runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attrs::Attribute;

/// Distance tolerance when checking that an edge length matches the Euclidean
/// distance of its endpoints.
pub const EDGE_DISTANCE_TOLERANCE_M: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SensorId(pub u32);

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Planar position in meters (x east, y north). Scenario authors pre-project
/// their coordinates; no lat/long handling happens here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Euclidean distance between two points. Total on finite inputs, symmetric,
/// zero exactly when the points coincide.
pub fn edge_distance(a: Point, b: Point) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

#[derive(Debug, Clone)]
pub struct SensorSpec {
    pub id: SensorId,
    pub position: Point,
    /// Sensing range rho in meters; a user is observable while strictly
    /// closer than this.
    pub range_m: f64,
    /// Categorical attributes this sensor can perceive. Speed is universal
    /// and not listed here.
    pub capabilities: BTreeSet<Attribute>,
    /// Entry/exit sensors stay awake for the whole run, in every mode.
    pub always_on: bool,
}

/// One straight trail segment between two sensors.
#[derive(Debug, Clone)]
pub struct TrailEdge {
    pub a: SensorId,
    pub b: SensorId,
    pub distance_m: f64,
    /// Marks segments through which users leave the park.
    pub exit: bool,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("duplicate sensor id {0}")]
    DuplicateSensorId(SensorId),
    #[error("unknown sensor {0}")]
    UnknownSensor(SensorId),
    #[error("edge {a}-{b} is degenerate (identical endpoints)")]
    DegenerateEdge { a: SensorId, b: SensorId },
    #[error("duplicate edge between {a} and {b}")]
    DuplicateEdge { a: SensorId, b: SensorId },
    #[error(
        "edge {a}-{b} distance {stated} m does not match endpoint distance {actual} m"
    )]
    EdgeDistanceMismatch { a: SensorId, b: SensorId, stated: f64, actual: f64 },
    #[error("edge {a}-{b} has non-positive distance {d}")]
    NonPositiveDistance { a: SensorId, b: SensorId, d: f64 },
    #[error("sensor {0} has non-positive range")]
    NonPositiveRange(SensorId),
    #[error("sensor {0} has no capabilities")]
    EmptyCapabilities(SensorId),
    #[error("graph is disconnected; sensors {0:?} are unreachable from {1}")]
    DisconnectedGraph(Vec<SensorId>, SensorId),
    #[error("no sensor is flagged always_on; every park needs entry/exit coverage")]
    NoEntryExitSensor,
    #[error("graph has no sensors")]
    Empty,
}

#[derive(Debug, Clone)]
pub struct ParkGraph {
    sensors: BTreeMap<SensorId, SensorSpec>,
    edges: Vec<TrailEdge>,
    adjacency: BTreeMap<SensorId, Vec<(SensorId, f64)>>,
}

impl ParkGraph {
    /// Validate and assemble a graph. All structural invariants are enforced
    /// here so the rest of the pipeline can assume a well-formed park.
    pub fn build(sensors: Vec<SensorSpec>, edges: Vec<TrailEdge>) -> Result<Self, GraphError> {
        if sensors.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut map: BTreeMap<SensorId, SensorSpec> = BTreeMap::new();
        for s in sensors {
            if s.range_m <= 0.0 {
                return Err(GraphError::NonPositiveRange(s.id));
            }
            if s.capabilities.is_empty() {
                return Err(GraphError::EmptyCapabilities(s.id));
            }
            if map.insert(s.id, s.clone()).is_some() {
                return Err(GraphError::DuplicateSensorId(s.id));
            }
        }
        if !map.values().any(|s| s.always_on) {
            return Err(GraphError::NoEntryExitSensor);
        }

        let mut adjacency: BTreeMap<SensorId, Vec<(SensorId, f64)>> =
            map.keys().map(|id| (*id, Vec::new())).collect();
        let mut seen: BTreeSet<(SensorId, SensorId)> = BTreeSet::new();
        for e in &edges {
            if e.a == e.b {
                return Err(GraphError::DegenerateEdge { a: e.a, b: e.b });
            }
            let pa = map.get(&e.a).ok_or(GraphError::UnknownSensor(e.a))?.position;
            let pb = map.get(&e.b).ok_or(GraphError::UnknownSensor(e.b))?.position;
            if e.distance_m <= 0.0 {
                return Err(GraphError::NonPositiveDistance { a: e.a, b: e.b, d: e.distance_m });
            }
            let actual = edge_distance(pa, pb);
            if (actual - e.distance_m).abs() > EDGE_DISTANCE_TOLERANCE_M {
                return Err(GraphError::EdgeDistanceMismatch {
                    a: e.a,
                    b: e.b,
                    stated: e.distance_m,
                    actual,
                });
            }
            let key = if e.a < e.b { (e.a, e.b) } else { (e.b, e.a) };
            if !seen.insert(key) {
                return Err(GraphError::DuplicateEdge { a: key.0, b: key.1 });
            }
            adjacency.get_mut(&e.a).unwrap().push((e.b, e.distance_m));
            adjacency.get_mut(&e.b).unwrap().push((e.a, e.distance_m));
        }
        for nbrs in adjacency.values_mut() {
            nbrs.sort_by_key(|(id, _)| *id);
        }

        let graph = ParkGraph { sensors: map, edges, adjacency };
        graph.check_connected()?;
        Ok(graph)
    }

    fn check_connected(&self) -> Result<(), GraphError> {
        let start = *self.sensors.keys().next().unwrap();
        let mut visited: BTreeSet<SensorId> = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(id) = stack.pop() {
            if !visited.insert(id) {
                continue;
            }
            for (n, _) in &self.adjacency[&id] {
                if !visited.contains(n) {
                    stack.push(*n);
                }
            }
        }
        let missing: Vec<SensorId> =
            self.sensors.keys().filter(|id| !visited.contains(id)).copied().collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(GraphError::DisconnectedGraph(missing, start))
        }
    }

    pub fn sensor(&self, id: SensorId) -> Result<&SensorSpec, GraphError> {
        self.sensors.get(&id).ok_or(GraphError::UnknownSensor(id))
    }

    pub fn sensors(&self) -> impl Iterator<Item = &SensorSpec> {
        self.sensors.values()
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    pub fn edges(&self) -> &[TrailEdge] {
        &self.edges
    }

    /// Sensors sharing an edge with `id`, with edge distances, ordered by id.
    pub fn neighbors(&self, id: SensorId) -> Result<&[(SensorId, f64)], GraphError> {
        self.adjacency
            .get(&id)
            .map(|v| v.as_slice())
            .ok_or(GraphError::UnknownSensor(id))
    }

    pub fn edge_between(&self, a: SensorId, b: SensorId) -> Option<f64> {
        self.adjacency
            .get(&a)?
            .iter()
            .find(|(id, _)| *id == b)
            .map(|(_, d)| *d)
    }

    /// Entry/exit sensors (the always-on ones), ordered by id.
    pub fn gates(&self) -> Vec<SensorId> {
        self.sensors.values().filter(|s| s.always_on).map(|s| s.id).collect()
    }

    /// Categorical attributes every sensor in the park can perceive.
    pub fn shared_capabilities(&self) -> BTreeSet<Attribute> {
        let mut iter = self.sensors.values();
        let mut shared = iter.next().map(|s| s.capabilities.clone()).unwrap_or_default();
        for s in iter {
            shared = shared.intersection(&s.capabilities).copied().collect();
        }
        shared
    }

    /// All simple paths from one entry/exit sensor to a different one,
    /// in a deterministic order. Paths are directed: entering at A and
    /// leaving at B is distinct from the reverse.
    pub fn entry_exit_paths(&self) -> Vec<Vec<SensorId>> {
        let gates = self.gates();
        let mut paths = Vec::new();
        for &entry in &gates {
            for &exit in &gates {
                if entry == exit {
                    continue;
                }
                let mut current = vec![entry];
                let mut visited: BTreeSet<SensorId> = BTreeSet::new();
                visited.insert(entry);
                self.collect_paths(entry, exit, &mut current, &mut visited, &mut paths);
            }
        }
        paths
    }

    fn collect_paths(
        &self,
        at: SensorId,
        target: SensorId,
        current: &mut Vec<SensorId>,
        visited: &mut BTreeSet<SensorId>,
        out: &mut Vec<Vec<SensorId>>,
    ) {
        if at == target {
            out.push(current.clone());
            return;
        }
        for (next, _) in &self.adjacency[&at] {
            if visited.insert(*next) {
                current.push(*next);
                self.collect_paths(*next, target, current, visited, out);
                current.pop();
                visited.remove(next);
            }
        }
    }

    /// Total length in meters of a node path. Errors if consecutive nodes
    /// are not adjacent.
    pub fn path_length(&self, path: &[SensorId]) -> Result<f64, GraphError> {
        let mut total = 0.0;
        for pair in path.windows(2) {
            total += self
                .edge_between(pair[0], pair[1])
                .ok_or(GraphError::UnknownSensor(pair[1]))?;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrs::Attribute;

    fn caps() -> BTreeSet<Attribute> {
        Attribute::ALL.iter().copied().collect()
    }

    fn sensor(id: u32, x: f64, y: f64, always_on: bool) -> SensorSpec {
        SensorSpec {
            id: SensorId(id),
            position: Point::new(x, y),
            range_m: 10.0,
            capabilities: caps(),
            always_on,
        }
    }

    fn edge(a: u32, b: u32, d: f64) -> TrailEdge {
        TrailEdge { a: SensorId(a), b: SensorId(b), distance_m: d, exit: false }
    }

    #[test]
    fn minimal_two_sensor_graph_builds() {
        let g = ParkGraph::build(
            vec![sensor(0, 0.0, 0.0, true), sensor(1, 100.0, 0.0, true)],
            vec![edge(0, 1, 100.0)],
        )
        .unwrap();
        assert_eq!(g.sensor_count(), 2);
        assert_eq!(g.neighbors(SensorId(0)).unwrap(), &[(SensorId(1), 100.0)]);
    }

    #[test]
    fn two_sensors_without_edges_is_disconnected() {
        let err = ParkGraph::build(
            vec![sensor(0, 0.0, 0.0, true), sensor(1, 100.0, 0.0, false)],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::DisconnectedGraph(..)));
    }

    #[test]
    fn duplicate_sensor_id_is_rejected() {
        let err = ParkGraph::build(
            vec![sensor(0, 0.0, 0.0, true), sensor(0, 100.0, 0.0, false)],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::DuplicateSensorId(SensorId(0))));
    }

    #[test]
    fn missing_entry_exit_sensor_is_rejected() {
        let err = ParkGraph::build(
            vec![sensor(0, 0.0, 0.0, false), sensor(1, 100.0, 0.0, false)],
            vec![edge(0, 1, 100.0)],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::NoEntryExitSensor));
    }

    #[test]
    fn edge_distance_must_match_geometry() {
        let err = ParkGraph::build(
            vec![sensor(0, 0.0, 0.0, true), sensor(1, 100.0, 0.0, false)],
            vec![edge(0, 1, 120.0)],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::EdgeDistanceMismatch { .. }));
    }

    #[test]
    fn duplicate_edges_are_rejected_regardless_of_orientation() {
        let err = ParkGraph::build(
            vec![sensor(0, 0.0, 0.0, true), sensor(1, 100.0, 0.0, false)],
            vec![edge(0, 1, 100.0), edge(1, 0, 100.0)],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::DuplicateEdge { .. }));
    }

    #[test]
    fn edge_distance_basics() {
        assert_eq!(edge_distance(Point::new(0.0, 0.0), Point::new(0.0, 0.0)), 0.0);
        assert_eq!(edge_distance(Point::new(0.0, 0.0), Point::new(3.0, 4.0)), 5.0);
        let d = edge_distance(Point::new(0.0, 0.0), Point::new(1.0, 1.0));
        assert!((d - std::f64::consts::SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn neighbors_of_a_three_sensor_line() {
        let g = ParkGraph::build(
            vec![
                sensor(0, 0.0, 0.0, true),
                sensor(1, 100.0, 0.0, false),
                sensor(2, 200.0, 0.0, true),
            ],
            vec![edge(0, 1, 100.0), edge(1, 2, 100.0)],
        )
        .unwrap();
        assert_eq!(g.neighbors(SensorId(1)).unwrap().len(), 2);
        assert_eq!(g.neighbors(SensorId(0)).unwrap().len(), 1);
        assert!(matches!(g.neighbors(SensorId(9)), Err(GraphError::UnknownSensor(_))));
    }

    #[test]
    fn entry_exit_paths_on_a_line_run_end_to_end() {
        let g = ParkGraph::build(
            vec![
                sensor(0, 0.0, 0.0, true),
                sensor(1, 100.0, 0.0, false),
                sensor(2, 200.0, 0.0, true),
            ],
            vec![edge(0, 1, 100.0), edge(1, 2, 100.0)],
        )
        .unwrap();
        let paths = g.entry_exit_paths();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0], vec![SensorId(0), SensorId(1), SensorId(2)]);
        assert_eq!(paths[1], vec![SensorId(2), SensorId(1), SensorId(0)]);
        assert_eq!(g.path_length(&paths[0]).unwrap(), 200.0);
    }
}
