//! Deterministic tick-based simulation of a stream job under one
//! adaptation strategy: topology and workload generation, replayable load
//! tapes, migration latency and per-period metrics.

mod config;
mod generate;
mod run;
mod tape;

pub use config::{
    OptimizerKind, OptimizerSpec, Pattern, Placement, ScalingSpec, ScenarioConfig, VariesStep,
};
pub use generate::{generate_scenario, Scenario};
pub use run::{
    apply_plan, run_scenario, run_with, MetricsSample, MetricsSeries, MigrationLatencyModel,
    METRICS_COLUMNS,
};
pub use tape::{step_workload, TapeEvent, Target, WorkloadTape};
