//! Domain types shared by every optimizer: identifiers, per-key-group
//! statistics, cluster snapshots, traffic matrices and allocation plans.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(
            Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl From<u32> for $name {
            fn from(v: u32) -> Self {
                $name(v)
            }
        }
    };
}

id_type!(
    /// Smallest unit of partitioned operator state; the atom of allocation.
    KeyGroupId,
    "g"
);
id_type!(NodeId, "n");
id_type!(OperatorId, "o");

/// Migration cost model: `mc = alpha * state_size`, with `alpha` expressed
/// per kilobyte of state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostModel<S> {
    pub alpha_per_kb: S,
}

impl<S: Scalar> Default for CostModel<S> {
    fn default() -> Self {
        CostModel {
            alpha_per_kb: S::one(),
        }
    }
}

impl<S: Scalar> CostModel<S> {
    pub fn cost(&self, state_size_bytes: S) -> S {
        self.alpha_per_kb * state_size_bytes / S::lit(1024.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyGroupStat<S> {
    pub id: KeyGroupId,
    pub operator: OperatorId,
    /// Bottleneck-resource load over the last statistics period, in
    /// percentage points of one node.
    pub load: S,
    /// Serialized state size in bytes.
    pub state_size: S,
    pub migr_cost: S,
}

impl<S: Scalar> KeyGroupStat<S> {
    pub fn new(
        id: KeyGroupId,
        operator: OperatorId,
        load: S,
        state_size: S,
        cost_model: &CostModel<S>,
    ) -> Self {
        KeyGroupStat {
            id,
            operator,
            load,
            state_size,
            migr_cost: cost_model.cost(state_size),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeDescriptor<S> {
    pub id: NodeId,
    pub capacity_weight: S,
    /// Marked for removal by the scaling policy (member of B).
    pub kill: bool,
}

impl<S: Scalar> NodeDescriptor<S> {
    pub fn new(id: NodeId) -> Self {
        NodeDescriptor {
            id,
            capacity_weight: S::one(),
            kill: false,
        }
    }

    pub fn with_weight(mut self, weight: S) -> Self {
        self.capacity_weight = weight;
        self
    }

    pub fn killed(mut self) -> Self {
        self.kill = true;
        self
    }
}

/// Snapshot of the nodes, their key groups and the per-group statistics.
///
/// Every key group is allocated to exactly one existing node. Nodes marked
/// for removal may still hold key groups until they are drained.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterState<S> {
    nodes: BTreeMap<NodeId, NodeDescriptor<S>>,
    allocation: BTreeMap<KeyGroupId, NodeId>,
    stats: BTreeMap<KeyGroupId, KeyGroupStat<S>>,
}

impl<S: Scalar> ClusterState<S> {
    pub fn new(
        nodes: impl IntoIterator<Item = NodeDescriptor<S>>,
        groups: impl IntoIterator<Item = (KeyGroupStat<S>, NodeId)>,
    ) -> Result<Self> {
        let mut node_map = BTreeMap::new();
        for n in nodes {
            if !(n.capacity_weight > S::zero()) {
                return Err(Error::InvalidCluster(format!(
                    "node {} has non-positive capacity weight",
                    n.id
                )));
            }
            if node_map.insert(n.id, n).is_some() {
                return Err(Error::InvalidCluster("duplicate node id".into()));
            }
        }
        let mut allocation = BTreeMap::new();
        let mut stats = BTreeMap::new();
        for (stat, node) in groups {
            if !node_map.contains_key(&node) {
                return Err(Error::UnknownNode(node));
            }
            if stat.load < S::zero() || stat.state_size < S::zero() || stat.migr_cost < S::zero() {
                return Err(Error::InvalidCluster(format!(
                    "key group {} has negative statistics",
                    stat.id
                )));
            }
            let id = stat.id;
            if stats.insert(id, stat).is_some() {
                return Err(Error::InvalidCluster(format!("duplicate key group {id}")));
            }
            allocation.insert(id, node);
        }
        Ok(ClusterState {
            nodes: node_map,
            allocation,
            stats,
        })
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeDescriptor<S>> + '_ {
        self.nodes.values()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeDescriptor<S>> {
        self.nodes.get(&id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes not marked for removal (the set A).
    pub fn active_nodes(&self) -> impl Iterator<Item = &NodeDescriptor<S>> + '_ {
        self.nodes.values().filter(|n| !n.kill)
    }

    /// Nodes marked for removal (the set B).
    pub fn killed_nodes(&self) -> impl Iterator<Item = &NodeDescriptor<S>> + '_ {
        self.nodes.values().filter(|n| n.kill)
    }

    pub fn allocation(&self) -> &BTreeMap<KeyGroupId, NodeId> {
        &self.allocation
    }

    pub fn stats(&self) -> &BTreeMap<KeyGroupId, KeyGroupStat<S>> {
        &self.stats
    }

    pub fn stat(&self, group: KeyGroupId) -> Option<&KeyGroupStat<S>> {
        self.stats.get(&group)
    }

    pub fn group_count(&self) -> usize {
        self.stats.len()
    }

    pub fn node_of(&self, group: KeyGroupId) -> Option<NodeId> {
        self.allocation.get(&group).copied()
    }

    pub fn groups_on(&self, node: NodeId) -> Vec<KeyGroupId> {
        self.allocation
            .iter()
            .filter(|(_, n)| **n == node)
            .map(|(g, _)| *g)
            .collect()
    }

    /// Capacity-weighted load of `node`.
    pub fn node_load(&self, node: NodeId) -> Result<S> {
        let desc = self.nodes.get(&node).ok_or(Error::UnknownNode(node))?;
        let raw = self
            .allocation
            .iter()
            .filter(|(_, n)| **n == node)
            .fold(S::zero(), |acc, (g, _)| acc + self.stats[g].load);
        Ok(raw * desc.capacity_weight)
    }

    /// Unweighted sum of key-group loads per node, in one pass.
    pub fn raw_node_loads(&self) -> BTreeMap<NodeId, S> {
        let mut loads: BTreeMap<NodeId, S> = self.nodes.keys().map(|n| (*n, S::zero())).collect();
        for (g, n) in &self.allocation {
            *loads
                .get_mut(n)
                .expect("allocation references existing node") = loads[n] + self.stats[g].load;
        }
        loads
    }

    /// Capacity-weighted load per node.
    pub fn node_loads(&self) -> BTreeMap<NodeId, S> {
        let mut loads = self.raw_node_loads();
        for (id, l) in loads.iter_mut() {
            *l = *l * self.nodes[id].capacity_weight;
        }
        loads
    }

    pub fn total_group_load(&self) -> S {
        self.stats.values().fold(S::zero(), |acc, s| acc + s.load)
    }

    /// Key groups per operator, in id order.
    pub fn operators(&self) -> BTreeMap<OperatorId, Vec<KeyGroupId>> {
        let mut ops: BTreeMap<OperatorId, Vec<KeyGroupId>> = BTreeMap::new();
        for s in self.stats.values() {
            ops.entry(s.operator).or_default().push(s.id);
        }
        ops
    }

    pub fn set_group_load(&mut self, group: KeyGroupId, load: S) -> Result<()> {
        let stat = self
            .stats
            .get_mut(&group)
            .ok_or(Error::UnknownKeyGroup(group))?;
        stat.load = load.max(S::zero());
        Ok(())
    }

    pub fn add_node(&mut self, node: NodeDescriptor<S>) -> Result<()> {
        if self.nodes.contains_key(&node.id) {
            return Err(Error::InvalidCluster(format!(
                "node {} already exists",
                node.id
            )));
        }
        self.nodes.insert(node.id, node);
        Ok(())
    }

    /// Removes a node that holds no key groups.
    pub fn remove_node(&mut self, node: NodeId) -> Result<()> {
        if !self.nodes.contains_key(&node) {
            return Err(Error::UnknownNode(node));
        }
        if self.allocation.values().any(|n| *n == node) {
            return Err(Error::InvalidCluster(format!(
                "node {node} still holds key groups"
            )));
        }
        self.nodes.remove(&node);
        Ok(())
    }

    pub fn set_kill(&mut self, node: NodeId, kill: bool) -> Result<()> {
        self.nodes
            .get_mut(&node)
            .ok_or(Error::UnknownNode(node))?
            .kill = kill;
        Ok(())
    }

    /// Smallest id not used by any node, for provisioning new nodes.
    pub fn next_node_id(&self) -> NodeId {
        NodeId(self.nodes.keys().next_back().map_or(0, |n| n.0 + 1))
    }

    /// Moves one key group. Used by simulators and baselines; optimizers
    /// produce plans instead.
    pub fn reassign(&mut self, group: KeyGroupId, node: NodeId) -> Result<()> {
        if !self.nodes.contains_key(&node) {
            return Err(Error::UnknownNode(node));
        }
        let slot = self
            .allocation
            .get_mut(&group)
            .ok_or(Error::UnknownKeyGroup(group))?;
        *slot = node;
        Ok(())
    }

    /// Copy of this snapshot with a different key-group allocation.
    pub fn with_assignment(&self, assignment: &BTreeMap<KeyGroupId, NodeId>) -> Result<Self> {
        if assignment.len() != self.stats.len() {
            return Err(Error::InvalidPlan(format!(
                "assignment covers {} of {} key groups",
                assignment.len(),
                self.stats.len()
            )));
        }
        for (g, n) in assignment {
            if !self.stats.contains_key(g) {
                return Err(Error::UnknownKeyGroup(*g));
            }
            if !self.nodes.contains_key(n) {
                return Err(Error::UnknownNode(*n));
            }
        }
        Ok(ClusterState {
            nodes: self.nodes.clone(),
            allocation: assignment.clone(),
            stats: self.stats.clone(),
        })
    }

    pub fn apply_plan(&self, plan: &AllocationPlan<S>) -> Result<Self> {
        self.with_assignment(&plan.assignment)
    }

    /// Replaces this snapshot's node set and allocation with `other`'s while
    /// keeping this snapshot's statistics.
    pub fn adopt_layout(&mut self, other: &ClusterState<S>) -> Result<()> {
        let next = ClusterState {
            nodes: other.nodes.clone(),
            allocation: self.allocation.clone(),
            stats: self.stats.clone(),
        }
        .with_assignment(&other.allocation)?;
        *self = next;
        Ok(())
    }

    pub fn map_stats(&self, mut f: impl FnMut(&KeyGroupStat<S>) -> S) -> Self {
        let mut next = self.clone();
        for stat in next.stats.values_mut() {
            stat.load = f(stat).max(S::zero());
        }
        next
    }
}

/// Rates between key groups over one statistics period, plus the operator
/// graph they flow along.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficMatrix<S> {
    rates: BTreeMap<(KeyGroupId, KeyGroupId), S>,
    operator_edges: BTreeSet<(OperatorId, OperatorId)>,
}

impl<S: Scalar> Default for TrafficMatrix<S> {
    fn default() -> Self {
        TrafficMatrix {
            rates: BTreeMap::new(),
            operator_edges: BTreeSet::new(),
        }
    }
}

impl<S: Scalar> TrafficMatrix<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares `downstream` as a consumer of `upstream`. When no edge is
    /// declared, the operator graph is inferred from nonzero rates.
    pub fn add_operator_edge(&mut self, upstream: OperatorId, downstream: OperatorId) {
        self.operator_edges.insert((upstream, downstream));
    }

    pub fn set_rate(&mut self, src: KeyGroupId, dst: KeyGroupId, rate: S) {
        if rate > S::zero() {
            self.rates.insert((src, dst), rate);
        } else {
            self.rates.remove(&(src, dst));
        }
    }

    pub fn rate(&self, src: KeyGroupId, dst: KeyGroupId) -> S {
        self.rates.get(&(src, dst)).copied().unwrap_or_else(S::zero)
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (KeyGroupId, KeyGroupId, S)> + '_ {
        self.rates.iter().map(|((s, d), r)| (*s, *d, *r))
    }

    /// Outbound flows of one key group.
    pub fn flows_from(&self, src: KeyGroupId) -> impl Iterator<Item = (KeyGroupId, S)> + '_ {
        self.rates
            .range((src, KeyGroupId(0))..=(src, KeyGroupId(u32::MAX)))
            .map(|((_, d), r)| (*d, *r))
    }

    /// Total output rate of `src`.
    pub fn out(&self, src: KeyGroupId) -> S {
        self.flows_from(src).fold(S::zero(), |acc, (_, r)| acc + r)
    }

    /// Only the explicitly declared operator edges.
    pub fn declared_operator_edges(&self) -> &BTreeSet<(OperatorId, OperatorId)> {
        &self.operator_edges
    }

    /// Operator edges, either declared or inferred from the rates.
    pub fn operator_edges(&self, cluster: &ClusterState<S>) -> BTreeSet<(OperatorId, OperatorId)> {
        if !self.operator_edges.is_empty() {
            return self.operator_edges.clone();
        }
        self.rates
            .keys()
            .filter_map(|(s, d)| Some((cluster.stat(*s)?.operator, cluster.stat(*d)?.operator)))
            .collect()
    }

    /// Number of key groups downstream of each operator.
    pub fn downstream_group_counts(
        &self,
        cluster: &ClusterState<S>,
    ) -> BTreeMap<OperatorId, usize> {
        let sizes: BTreeMap<OperatorId, usize> = cluster
            .operators()
            .into_iter()
            .map(|(op, gs)| (op, gs.len()))
            .collect();
        let mut counts = BTreeMap::new();
        for (up, down) in self.operator_edges(cluster) {
            *counts.entry(up).or_insert(0) += sizes.get(&down).copied().unwrap_or(0);
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Migration {
    pub group: KeyGroupId,
    pub from: NodeId,
    pub to: NodeId,
}

/// Deviation variables of an allocation relative to the cluster mean plus
/// the migration cost it incurs.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PlanObjective<S> {
    pub d: S,
    pub d_u: S,
    pub d_l: S,
    pub total_migr_cost: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationPlan<S> {
    pub assignment: BTreeMap<KeyGroupId, NodeId>,
    pub migrations: Vec<Migration>,
    pub objective: PlanObjective<S>,
}

impl<S: Scalar> AllocationPlan<S> {
    /// Derives migrations and objective values for `assignment` against the
    /// current allocation of `cluster`.
    pub fn from_assignment(
        cluster: &ClusterState<S>,
        assignment: BTreeMap<KeyGroupId, NodeId>,
    ) -> Result<Self> {
        let projected = cluster.with_assignment(&assignment)?;
        let mut migrations = Vec::new();
        let mut cost = S::zero();
        for (g, to) in &assignment {
            let from = cluster.allocation[g];
            if from != *to {
                migrations.push(Migration {
                    group: *g,
                    from,
                    to: *to,
                });
                cost = cost + cluster.stats[g].migr_cost;
            }
        }
        let mean = stats::mean_load(cluster)?;
        let (d, d_u, d_l) = stats::deviation_variables(&projected, mean);
        Ok(AllocationPlan {
            assignment,
            migrations,
            objective: PlanObjective {
                d,
                d_u,
                d_l,
                total_migr_cost: cost,
            },
        })
    }

    /// Plan that keeps every key group where it is.
    pub fn identity(cluster: &ClusterState<S>) -> Result<Self> {
        Self::from_assignment(cluster, cluster.allocation().clone())
    }

    pub fn migration_count(&self) -> usize {
        self.migrations.len()
    }
}
