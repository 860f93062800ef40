//! Deterministic multi-agent simulator for counting the unique users of a
//! trail instrumented with attribute-sensing cameras.
//!
//! A park is a sensor graph. Simulated walkers, joggers and bikers cross it
//! on entry-to-exit routes; sensors perceive their attributes (noisily),
//! pick the most useful ones by entropy, and hand them to graph neighbors
//! together with an estimated arrival window. A central registry resolves
//! each observation into "same user" or "new unique user" and rebuilds
//! per-user trails. Everything is scored against built-in ground truth, and
//! an energy ledger compares duty-cycled sensors against an always-on
//! baseline.

pub mod attrs;
pub mod engine;
pub mod graph;
pub mod identity;
pub mod metrics;
pub mod micro;
pub mod population;
pub mod protocol;
pub mod report;
pub mod scenario;
pub mod sensing;

pub use attrs::{Attribute, AttributeCatalog, AttributeVector, CatValue, Perception};
pub use engine::{compare_energy, replicate, run, EngineError, RunResult};
pub use graph::{edge_distance, ParkGraph, Point, SensorId, SensorSpec, TrailEdge};
pub use identity::{brute_force_oracle, IdentityRegistry, MatchPolicy};
pub use metrics::{meter, saving_percent, score, AccuracyReport, EnergyLedger};
pub use population::{advance_user, classify_activity, sample_population, UserAgent};
pub use protocol::{
    attribute_entropy, estimate_arrival, make_handoffs, select_attributes, HandoffMessage, Mode,
    WakeSchedule,
};
pub use scenario::{AttributeSetSpec, ConfigError, ScenarioConfig};
pub use sensing::{perturb, NoiseModel, Observation};
