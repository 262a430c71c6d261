//! JSON documents: cluster snapshots, allocation plans, partitioning input
//! and output, and the run summary. Also the atomic file writer every
//! command uses.

use std::fs;
use std::path::{Path, PathBuf};

use reconfig::domain::CostModel;
use reconfig::{
    AllocationPlan, ClusterState, KeyGroupId, KeyGroupStat, NodeDescriptor, NodeId, OperatorId,
    TrafficMatrix,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{CliError, Problem, Result, SCHEMA_VERSION};

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotNode {
    pub id: u32,
    #[serde(default = "one")]
    pub capacity_weight: f64,
    /// Marked for removal.
    #[serde(default)]
    pub kill: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotGroup {
    pub id: u32,
    pub operator: u32,
    /// Percentage points of one node.
    pub load: f64,
    /// Bytes.
    #[serde(default)]
    pub state_size: f64,
    /// Derived from `state_size` at one unit per KB when absent.
    #[serde(default)]
    pub migr_cost: Option<f64>,
    pub node: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotFlow {
    pub src: u32,
    pub dst: u32,
    pub rate: f64,
}

/// A cluster with its key-group statistics and, optionally, the traffic
/// between key groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub schema_version: u32,
    pub nodes: Vec<SnapshotNode>,
    pub key_groups: Vec<SnapshotGroup>,
    #[serde(default)]
    pub operator_edges: Vec<(u32, u32)>,
    #[serde(default)]
    pub traffic: Vec<SnapshotFlow>,
}

impl Snapshot {
    pub fn capture(cluster: &ClusterState, traffic: &TrafficMatrix) -> Self {
        Snapshot {
            schema_version: SCHEMA_VERSION,
            nodes: cluster
                .nodes()
                .map(|n| SnapshotNode {
                    id: n.id.0,
                    capacity_weight: n.capacity_weight,
                    kill: n.kill,
                })
                .collect(),
            key_groups: cluster
                .stats()
                .values()
                .map(|s| SnapshotGroup {
                    id: s.id.0,
                    operator: s.operator.0,
                    load: s.load,
                    state_size: s.state_size,
                    migr_cost: Some(s.migr_cost),
                    node: cluster.node_of(s.id).map_or(0, |n| n.0),
                })
                .collect(),
            operator_edges: traffic
                .declared_operator_edges()
                .iter()
                .map(|(a, b)| (a.0, b.0))
                .collect(),
            traffic: traffic
                .iter()
                .map(|(s, d, r)| SnapshotFlow {
                    src: s.0,
                    dst: d.0,
                    rate: r,
                })
                .collect(),
        }
    }

    pub fn to_state(&self) -> Result<(ClusterState, TrafficMatrix)> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Invalid(vec![Problem::new(
                "schema_version",
                format!(
                    "unsupported version {}; expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            )]));
        }
        let cm = CostModel::default();
        let nodes = self.nodes.iter().map(|n| {
            let d = NodeDescriptor::new(NodeId(n.id)).with_weight(n.capacity_weight);
            if n.kill {
                d.killed()
            } else {
                d
            }
        });
        let groups = self.key_groups.iter().map(|g| {
            let mut stat = KeyGroupStat::new(
                KeyGroupId(g.id),
                OperatorId(g.operator),
                g.load,
                g.state_size,
                &cm,
            );
            if let Some(c) = g.migr_cost {
                stat.migr_cost = c;
            }
            (stat, NodeId(g.node))
        });
        let cluster = ClusterState::new(nodes, groups)?;
        let mut traffic = TrafficMatrix::new();
        for &(a, b) in &self.operator_edges {
            traffic.add_operator_edge(OperatorId(a), OperatorId(b));
        }
        for f in &self.traffic {
            traffic.set_rate(KeyGroupId(f.src), KeyGroupId(f.dst), f.rate);
        }
        Ok((cluster, traffic))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveDoc {
    pub d: f64,
    pub d_u: f64,
    pub d_l: f64,
    pub total_migr_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MigrationDoc {
    pub group: u32,
    pub from: u32,
    pub to: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentDoc {
    pub group: u32,
    pub node: u32,
}

/// Output of `solve`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanDoc {
    pub schema_version: u32,
    pub optimizer: String,
    /// Objective value of the weighted MILP objective, when the optimizer
    /// computes one.
    pub objective_value: Option<f64>,
    /// Whether optimality was proven; absent for heuristics.
    pub optimal: Option<bool>,
    pub objective: ObjectiveDoc,
    pub migrations: Vec<MigrationDoc>,
    pub assignment: Vec<AssignmentDoc>,
}

impl PlanDoc {
    pub fn new(
        optimizer: &str,
        plan: &AllocationPlan,
        objective_value: Option<f64>,
        optimal: Option<bool>,
    ) -> Self {
        let o = &plan.objective;
        PlanDoc {
            schema_version: SCHEMA_VERSION,
            optimizer: optimizer.to_string(),
            objective_value,
            optimal,
            objective: ObjectiveDoc {
                d: o.d,
                d_u: o.d_u,
                d_l: o.d_l,
                total_migr_cost: o.total_migr_cost,
            },
            migrations: plan
                .migrations
                .iter()
                .map(|m| MigrationDoc {
                    group: m.group.0,
                    from: m.from.0,
                    to: m.to.0,
                })
                .collect(),
            assignment: plan
                .assignment
                .iter()
                .map(|(g, n)| AssignmentDoc {
                    group: g.0,
                    node: n.0,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphVertex {
    pub id: u32,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEdge {
    pub a: u32,
    pub b: u32,
    pub weight: f64,
}

/// Input of `partition`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    pub schema_version: u32,
    pub vertices: Vec<GraphVertex>,
    #[serde(default)]
    pub edges: Vec<GraphEdge>,
}

/// Output of `partition`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionDoc {
    pub schema_version: u32,
    pub parts: Vec<Vec<u32>>,
    pub part_weights: Vec<f64>,
    pub cut_weight: f64,
}

/// One line of the run summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub optimizer: String,
    pub seed: u64,
    pub metrics_file: String,
    pub rounds: usize,
    pub final_load_distance: Option<f64>,
    pub mean_load_distance: Option<f64>,
    pub final_load_index: Option<f64>,
    pub final_collocation_factor: Option<f64>,
    pub total_migrations: usize,
    pub total_migration_latency_s: f64,
    pub budget_respected: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub schema_version: u32,
    pub runs: Vec<RunSummary>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

/// Writes through a temporary sibling and renames it into place, so readers
/// never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp: PathBuf = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}
