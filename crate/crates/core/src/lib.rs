//! Crowd-evacuation simulation with a mutual-information crush detector.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`] loads, validates and spawns evacuation scenarios.
//! * [`engine`] advances the crowd with a social-force model and tracks
//!   compressive contact forces.
//! * [`analysis`] computes the position/heading mutual-information order
//!   parameter, per-second series and crush alarms.
//! * [`stats`] correlates force against mutual information.
//! * [`pipeline`] ties the above into a single run.
//! * [`fixtures`] holds independent oracles used by the test-suite.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod navigation;
pub mod params;
pub mod pipeline;
pub mod scenario;
pub mod spatial;
pub mod stats;

pub use analysis::{
    crowd_order_parameter, detect_crush, mutual_information, windowed_series, AlarmInterval,
    DetectorConfig, JointHistogram, MetricsRecord, MetricsSeries, MiConfig,
};
pub use engine::{average_contact_force, AgentState, SimFrame, Simulation};
pub use error::{Error, Result, Violation};
pub use geometry::{Rect, Segment, Vec2};
pub use params::SfmParams;
pub use scenario::{
    apply_events, load_scenario, spawn_population, validate_scenario, DoorStates, Scenario,
};
pub use stats::{correlate_series, p_value_two_tailed, pearson_r, CorrelationReport};
pub use pipeline::{compare_runs, run, run_multi, EvacTime, RunComparison, RunResult};
