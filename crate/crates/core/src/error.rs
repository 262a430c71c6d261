use thiserror::Error;

use crate::domain::{KeyGroupId, NodeId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("unknown key group {0}")]
    UnknownKeyGroup(KeyGroupId),

    #[error("every node is marked for removal; at least one node must stay active")]
    NoActiveNodes,

    #[error("load index baseline has not been initialized")]
    BaselineUnset,

    #[error("statistics window tracks no resources")]
    EmptyWindow,

    #[error("key group {group} is pinned to both {first} and {second}")]
    ConflictingPins {
        group: KeyGroupId,
        first: NodeId,
        second: NodeId,
    },

    #[error("no feasible allocation found (best bound: {best_bound:?})")]
    Infeasible { best_bound: Option<f64> },

    #[error(
        "instance too large for exhaustive search: {nodes}^{units} assignments exceeds {limit}"
    )]
    InstanceTooLarge {
        nodes: usize,
        units: usize,
        limit: u64,
    },

    #[error("cannot split {vertices} vertices into {parts} non-empty parts")]
    InvalidPartitionCount { parts: usize, vertices: usize },

    #[error("invalid cluster state: {0}")]
    InvalidCluster(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid allocation plan: {0}")]
    InvalidPlan(String),

    #[error("workload tape line {line}: {message}")]
    TapeFormat { line: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
