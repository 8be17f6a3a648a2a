//! Experiment runner: configuration, the round loop and result files.

mod config;
mod output;
mod run;

pub use config::{ExperimentConfig, MarketConfig, OutputConfig, ResourceConfig, SensingMode, TargetMode, TaskConfig, SCHEMA_VERSION};
pub use output::{load_outputs, sweep, write_outputs, write_sweep_summary, LoadedRun, Summary, SWEEP_HEADERS, TIMELINE_HEADERS};
pub use run::{run, ClientRow, RoundRow, RunRecord, TrajectoryRow, ROUND_HEADERS, TRAJECTORY_HEADERS};
