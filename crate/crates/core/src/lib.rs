//! Deterministic discrete-event microsimulation of a port-entry traffic
//! corridor: seeded replication, probabilistic vs. agent-based lane routing,
//! occupancy and trip-time metrics, and partial-detection trip-time
//! validation.
//!
//! The crate is organized around a single source -> sink corridor chain of
//! road segments and multi-lane service stations:
//!
//! - [`scenario`]: corridor model, config schema, validation.
//! - [`arrivals`]: exact per-bin arrival generation and flow analysis.
//! - [`routing`]: roulette-wheel and agent lane-selection policies.
//! - [`engine`]: the event core — admission/stacking, spillback, service,
//!   seeded replication.
//! - [`metrics`]: lane occupancy, trip-time summaries, seed spread, the
//!   policy-comparison grid.
//! - [`detect`]: partial wireless detection, dedup, cross-site matching,
//!   trip-time distribution comparison.
//! - [`fixtures`]: the bundled corridor scenarios and demand tooling.
//! - [`stats`]: shared summary-statistics and KS-test helpers.

pub mod arrivals;
pub mod detect;
pub mod engine;
pub mod fixtures;
pub mod metrics;
pub mod routing;
pub mod scenario;
pub mod stats;

pub use engine::{replicate, run, ReplicationSet, RunResult};
pub use routing::PolicyKind;
pub use scenario::{load_scenario, load_scenario_path, NetworkTopology, ScenarioConfig};
