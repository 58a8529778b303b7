//! Scenario configuration, presets, run orchestration and output.

pub mod checks;
pub mod config;
pub mod diagnostics;
pub mod run;
pub mod scenario;
pub mod snapshot;

pub use config::{parse_config, Preset, ScenarioConfig};
pub use diagnostics::{interface_rotation, RotationReport};
pub use run::{run, RunSummary};
pub use scenario::{build, preset, taylor_couette_ramp, Scenario};
pub use snapshot::FieldSnapshot;
