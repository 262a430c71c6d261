//! Integrated dynamic reconfiguration for parallel stream processing:
//! key-group load balancing with scale-in, operator collocation, baseline
//! heuristics and a deterministic simulator to compare them.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases at the crate
//! root fix the scalar to `f64`.

// `!(x > 0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod albic;
pub mod baselines;
pub mod domain;
pub mod error;
pub mod framework;
pub mod milp;
pub mod partition;
pub mod scalar;
pub mod sim;
pub mod stats;

pub use domain::{KeyGroupId, Migration, NodeId, OperatorId};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use sim::ScenarioConfig;

pub type ClusterState = domain::ClusterState<f64>;
pub type KeyGroupStat = domain::KeyGroupStat<f64>;
pub type NodeDescriptor = domain::NodeDescriptor<f64>;
pub type TrafficMatrix = domain::TrafficMatrix<f64>;
pub type AllocationPlan = domain::AllocationPlan<f64>;
pub type PlanObjective = domain::PlanObjective<f64>;
pub type CostModel = domain::CostModel<f64>;
pub type StatisticsWindow = stats::StatisticsWindow<f64>;
pub type MilpConfig = milp::MilpConfig<f64>;
pub type MilpModel = milp::MilpModel<f64>;
pub type MilpSolution = milp::MilpSolution<f64>;
pub type AlbicConfig = albic::AlbicConfig<f64>;
pub type Optimizer = framework::Optimizer<f64>;
pub type ScalingPolicy = framework::ScalingPolicy<f64>;
pub type RoundReport = framework::RoundReport<f64>;
pub type PotcState = baselines::PotcState<f64>;
pub type Scenario = sim::Scenario<f64>;
pub type WorkloadTape = sim::WorkloadTape<f64>;
pub type MetricsSeries = sim::MetricsSeries<f64>;
pub type MetricsSample = sim::MetricsSample<f64>;
