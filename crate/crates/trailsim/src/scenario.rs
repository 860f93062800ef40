//! Scenario files: one TOML document describes the park graph, the
//! population, the noise level, and the protocol parameters of a run.
//!
//! The file format is versioned; the committed `scenarios/linear.toml` and
//! `scenarios/nonlinear.toml` are the reference examples.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::attrs::{Attribute, AttributeCatalog};
use crate::graph::{GraphError, ParkGraph, Point, SensorId, SensorSpec, TrailEdge};
use crate::population::{PopulationConfig, WALK_SPEED_RANGE};
use crate::protocol::{Mode, SelectionDirection, WindowPolicy};
use crate::sensing::{NoiseError, NoiseModel};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read scenario file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario file {path} is not valid TOML: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported scenario format version {0}; this build reads version 1")]
    Version(u32),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("unknown attribute name {0:?}")]
    UnknownAttribute(String),
    #[error("palette for {attr} needs at least 2 values, got {got}")]
    PaletteTooSmall { attr: String, got: usize },
    #[error("weights for {attr} must match its {expected} values and be non-negative")]
    BadWeights { attr: String, expected: usize },
    #[error("{field} must be positive")]
    NonPositive { field: &'static str },
    #[error("selection size k must be at least 1")]
    ZeroK,
    #[error(
        "horizon {horizon} ticks is too short: spawn window {spawn} plus the slowest \
         traversal of the longest route ({traversal} ticks) does not fit"
    )]
    HorizonTooShort { horizon: i64, spawn: i64, traversal: i64 },
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    /// How many attributes each handoff carries for comparison.
    pub k: usize,
    pub direction: SelectionDirection,
    pub window: WindowPolicy,
    /// Entropy is computed over this many most recent observations.
    pub history_len: usize,
    /// Below this many observations, selection falls back to catalog order.
    pub history_min: usize,
    pub speed_tolerance: f64,
    /// Restricts which attributes participate in selection and matching.
    /// `None` means every attribute a sensor can perceive.
    pub allowed_attributes: Option<BTreeSet<Attribute>>,
    /// Timestamp features: arrival-window gating, message expiry, and the
    /// speed comparison. Disabled by the attribute-only configuration.
    pub eta_gating: bool,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub tick_seconds: f64,
    pub horizon_ticks: i64,
    pub mode: Mode,
    pub graph: ParkGraph,
    pub population: PopulationConfig,
    pub noise: NoiseModel,
    pub protocol: ProtocolConfig,
    /// One energy unit is charged per wake window of this many ticks.
    pub energy_window_ticks: i64,
    pub catalog: AttributeCatalog,
}

// ---------------------------------------------------------------------------
// Raw file layout
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: u32,
    name: String,
    #[serde(default = "default_tick_seconds")]
    tick_seconds: f64,
    horizon_ticks: Option<i64>,
    #[serde(default = "default_mode")]
    mode: Mode,
    graph: GraphFile,
    population: PopulationFile,
    #[serde(default)]
    noise: Option<NoiseModel>,
    #[serde(default)]
    protocol: ProtocolFile,
    #[serde(default)]
    energy: EnergyFile,
}

fn default_tick_seconds() -> f64 {
    1.0
}

fn default_mode() -> Mode {
    Mode::DutyCycle
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    sensors: Vec<SensorFile>,
    edges: Vec<EdgeFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorFile {
    id: u32,
    x: f64,
    y: f64,
    range: f64,
    #[serde(default)]
    always_on: bool,
    capabilities: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeFile {
    a: u32,
    b: u32,
    d: f64,
    #[serde(default)]
    exit: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PopulationFile {
    size: usize,
    activity_mix: ActivityMix,
    spawn_window_ticks: i64,
    #[serde(default)]
    distinct_attributes: bool,
    #[serde(default)]
    palettes: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    weights: BTreeMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActivityMix {
    walk: f64,
    jog: f64,
    bike: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ProtocolFile {
    k: Option<usize>,
    direction: Option<SelectionDirection>,
    window_min_ticks: Option<i64>,
    window_travel_fraction: Option<f64>,
    history_length: Option<usize>,
    history_min: Option<usize>,
    speed_tolerance: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnergyFile {
    window_ticks: i64,
}

impl Default for EnergyFile {
    fn default() -> Self {
        EnergyFile { window_ticks: 10 }
    }
}

// ---------------------------------------------------------------------------
// Loading and validation
// ---------------------------------------------------------------------------

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn from_toml(text: &str, path: &str) -> Result<Self, ConfigError> {
        let raw: ScenarioFile = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            message: e.to_string(),
        })?;
        if raw.version != SCENARIO_FORMAT_VERSION {
            return Err(ConfigError::Version(raw.version));
        }
        if raw.tick_seconds <= 0.0 {
            return Err(ConfigError::NonPositive { field: "tick_seconds" });
        }

        let catalog = build_catalog(&raw.population)?;

        let mut sensors = Vec::new();
        for s in &raw.graph.sensors {
            let capabilities = match &s.capabilities {
                Some(names) => {
                    let mut set = BTreeSet::new();
                    for n in names {
                        set.insert(
                            Attribute::parse(n)
                                .ok_or_else(|| ConfigError::UnknownAttribute(n.clone()))?,
                        );
                    }
                    set
                }
                None => Attribute::ALL.iter().copied().collect(),
            };
            sensors.push(SensorSpec {
                id: SensorId(s.id),
                position: Point::new(s.x, s.y),
                range_m: s.range,
                capabilities,
                always_on: s.always_on,
            });
        }
        let edges = raw
            .graph
            .edges
            .iter()
            .map(|e| TrailEdge {
                a: SensorId(e.a),
                b: SensorId(e.b),
                distance_m: e.d,
                exit: e.exit,
            })
            .collect();
        let graph = ParkGraph::build(sensors, edges)?;

        let noise = raw.noise.unwrap_or_else(NoiseModel::none);
        noise.validate()?;

        let population = PopulationConfig {
            size: raw.population.size,
            activity_mix: [
                raw.population.activity_mix.walk,
                raw.population.activity_mix.jog,
                raw.population.activity_mix.bike,
            ],
            spawn_window_ticks: raw.population.spawn_window_ticks,
            distinct_attributes: raw.population.distinct_attributes,
        };
        if population.spawn_window_ticks <= 0 {
            return Err(ConfigError::NonPositive { field: "spawn_window_ticks" });
        }

        let p = raw.protocol;
        let protocol = ProtocolConfig {
            k: p.k.unwrap_or(5),
            direction: p.direction.unwrap_or(SelectionDirection::Lowest),
            window: WindowPolicy {
                min_half_width: p.window_min_ticks.unwrap_or(2),
                travel_fraction: p.window_travel_fraction.unwrap_or(0.2),
            },
            history_len: p.history_length.unwrap_or(50),
            history_min: p.history_min.unwrap_or(10),
            speed_tolerance: p.speed_tolerance.unwrap_or(0.10),
            allowed_attributes: None,
            eta_gating: true,
        };
        if protocol.k == 0 {
            return Err(ConfigError::ZeroK);
        }
        if raw.energy.window_ticks <= 0 {
            return Err(ConfigError::NonPositive { field: "energy.window_ticks" });
        }

        // The horizon must fit the spawn window plus the slowest traversal of
        // the longest route. Default: spawn window + 3x that traversal.
        let longest = graph
            .entry_exit_paths()
            .iter()
            .map(|p| graph.path_length(p).expect("paths come from the graph"))
            .fold(0.0f64, f64::max);
        let traversal = (longest / (WALK_SPEED_RANGE.0 * raw.tick_seconds)).ceil() as i64;
        let horizon_ticks = raw
            .horizon_ticks
            .unwrap_or(population.spawn_window_ticks + 3 * traversal);
        if horizon_ticks < population.spawn_window_ticks + traversal {
            return Err(ConfigError::HorizonTooShort {
                horizon: horizon_ticks,
                spawn: population.spawn_window_ticks,
                traversal,
            });
        }

        Ok(ScenarioConfig {
            name: raw.name,
            tick_seconds: raw.tick_seconds,
            horizon_ticks,
            mode: raw.mode,
            graph,
            population,
            noise,
            protocol,
            energy_window_ticks: raw.energy.window_ticks,
            catalog,
        })
    }

    /// Attributes that participate in selection and matching at a sensor:
    /// its capabilities filtered by the allowed set, in catalog order.
    pub fn comparison_attributes(&self, sensor: &SensorSpec) -> Vec<Attribute> {
        Attribute::ALL
            .iter()
            .filter(|a| sensor.capabilities.contains(a))
            .filter(|a| {
                self.protocol
                    .allowed_attributes
                    .as_ref()
                    .is_none_or(|allowed| allowed.contains(a))
            })
            .copied()
            .collect()
    }

    /// Union of comparison attributes over all sensors, in catalog order.
    pub fn comparison_catalog(&self) -> Vec<Attribute> {
        Attribute::ALL
            .iter()
            .filter(|a| self.graph.sensors().any(|s| s.capabilities.contains(a)))
            .filter(|a| {
                self.protocol
                    .allowed_attributes
                    .as_ref()
                    .is_none_or(|allowed| allowed.contains(a))
            })
            .copied()
            .collect()
    }

    pub fn domain_sizes(&self) -> BTreeMap<Attribute, usize> {
        Attribute::ALL
            .iter()
            .map(|a| (*a, self.catalog.domain(*a).len()))
            .collect()
    }
}

fn build_catalog(pop: &PopulationFile) -> Result<AttributeCatalog, ConfigError> {
    let mut catalog = AttributeCatalog::default();
    for (name, values) in &pop.palettes {
        let attr =
            Attribute::parse(name).ok_or_else(|| ConfigError::UnknownAttribute(name.clone()))?;
        if attr == Attribute::Activity || attr == Attribute::AgeGroup || attr == Attribute::Gender
        {
            // fixed value sets; only their weights are configurable
            return Err(ConfigError::UnknownAttribute(format!(
                "{name} (its values are fixed; set weights instead)"
            )));
        }
        if values.len() < 2 {
            return Err(ConfigError::PaletteTooSmall { attr: name.clone(), got: values.len() });
        }
        let n = values.len();
        let domain = catalog.domain_mut(attr);
        domain.values = values.clone();
        domain.weights = vec![1.0 / n as f64; n];
    }
    for (name, weights) in &pop.weights {
        let attr =
            Attribute::parse(name).ok_or_else(|| ConfigError::UnknownAttribute(name.clone()))?;
        let domain = catalog.domain_mut(attr);
        let expected = domain.values.len();
        let total: f64 = weights.iter().sum();
        if weights.len() != expected || weights.iter().any(|w| *w < 0.0) || total <= 0.0 {
            return Err(ConfigError::BadWeights { attr: name.clone(), expected });
        }
        domain.weights = weights.iter().map(|w| w / total).collect();
    }
    Ok(catalog)
}

// ---------------------------------------------------------------------------
// Attribute-set overrides (CLI --attributes)
// ---------------------------------------------------------------------------

/// A named or explicit comparison attribute set, possibly with timestamp
/// matching disabled.
#[derive(Debug, Clone)]
pub struct AttributeSetSpec {
    pub name: String,
    pub attributes: Option<Vec<Attribute>>,
    pub eta_gating: bool,
}

impl AttributeSetSpec {
    /// Accepts a named set (`full`, `with-eta`, `no-eta`, `no-timestamp`,
    /// `linear-five`) or an explicit comma-separated attribute list.
    pub fn parse(spec: &str) -> Result<Self, ConfigError> {
        match spec {
            "full" | "with-eta" => Ok(AttributeSetSpec {
                name: spec.to_string(),
                attributes: None,
                eta_gating: true,
            }),
            "no-eta" | "no-timestamp" => Ok(AttributeSetSpec {
                name: spec.to_string(),
                attributes: None,
                eta_gating: false,
            }),
            "linear-five" => Ok(AttributeSetSpec {
                name: spec.to_string(),
                attributes: Some(vec![
                    Attribute::TopColor,
                    Attribute::Activity,
                    Attribute::AgeGroup,
                    Attribute::Gender,
                    Attribute::BottomColor,
                ]),
                eta_gating: true,
            }),
            list => {
                let mut attrs = Vec::new();
                for part in list.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    attrs.push(
                        Attribute::parse(part)
                            .ok_or_else(|| ConfigError::UnknownAttribute(part.to_string()))?,
                    );
                }
                if attrs.is_empty() {
                    return Err(ConfigError::UnknownAttribute(list.to_string()));
                }
                Ok(AttributeSetSpec {
                    name: list.to_string(),
                    attributes: Some(attrs),
                    eta_gating: true,
                })
            }
        }
    }

    pub fn apply(&self, config: &mut ScenarioConfig) {
        config.protocol.allowed_attributes =
            self.attributes.as_ref().map(|v| v.iter().copied().collect());
        config.protocol.eta_gating = self.eta_gating;
    }
}
