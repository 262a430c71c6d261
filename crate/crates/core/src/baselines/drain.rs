use crate::domain::{AllocationPlan, ClusterState, KeyGroupId, NodeId};
use crate::error::{Error, Result};
use crate::milp::{self, Budget, MilpConfig};
use crate::scalar::Scalar;
use std::cmp::Ordering;

/// Result of moving key groups off the nodes marked for removal.
#[derive(Clone, Debug, PartialEq)]
pub struct DrainStep<S> {
    pub plan: AllocationPlan<S>,
    /// Budget left after the drain.
    pub remaining: Budget<S>,
    /// Key groups still waiting on nodes marked for removal.
    pub pending: usize,
}

/// Moves key groups off the nodes marked for removal, spreading them
/// evenly by count over the remaining nodes (lightest first), until the
/// budget runs out. Load balance is not considered.
pub fn drain_evenly<S: Scalar>(
    cluster: &ClusterState<S>,
    budget: Budget<S>,
) -> Result<DrainStep<S>> {
    let mut active: Vec<(NodeId, S)> = cluster.node_loads().into_iter().collect();
    active.retain(|(n, _)| cluster.node(*n).is_some_and(|d| !d.kill));
    if active.is_empty() {
        return Err(Error::NoActiveNodes);
    }
    active.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let mut received = vec![0usize; active.len()];

    let mut assignment = cluster.allocation().clone();
    let mut used_count = 0usize;
    let mut used_cost = S::zero();
    let mut pending = 0usize;
    let to_drain: Vec<KeyGroupId> = cluster
        .killed_nodes()
        .flat_map(|n| cluster.groups_on(n.id))
        .collect();
    for g in to_drain {
        let cost = cluster.stats()[&g].migr_cost;
        let fits = match budget {
            Budget::Unbounded => true,
            Budget::Migrations(m) => used_count < m,
            Budget::MigrCost(c) => !c.definitely_lt(used_cost + cost),
        };
        if !fits {
            pending += 1;
            continue;
        }
        let slot = (0..active.len()).min_by_key(|&i| (received[i], i)).unwrap();
        received[slot] += 1;
        assignment.insert(g, active[slot].0);
        used_count += 1;
        used_cost = used_cost + cost;
    }
    let remaining = match budget {
        Budget::Unbounded => Budget::Unbounded,
        Budget::Migrations(m) => Budget::Migrations(m - used_count),
        Budget::MigrCost(c) => Budget::MigrCost((c - used_cost).max(S::zero())),
    };
    Ok(DrainStep {
        plan: AllocationPlan::from_assignment(cluster, assignment)?,
        remaining,
        pending,
    })
}

/// Non-integrated scale-in: spend the round's budget on draining the nodes
/// marked for removal first ([`drain_evenly`]). Only once nothing is left
/// on them does the leftover budget go to load balancing, which uses the
/// MILP over the remaining nodes.
pub fn drain_then_balance<S: Scalar>(
    cluster: &ClusterState<S>,
    config: &MilpConfig<S>,
) -> Result<AllocationPlan<S>> {
    let step = drain_evenly(cluster, config.budget)?;
    if step.pending > 0 {
        return Ok(step.plan);
    }
    let projected = cluster.apply_plan(&step.plan)?;
    let balance_cfg = MilpConfig {
        budget: step.remaining,
        ..config.clone()
    };
    match milp::optimize(&projected, &balance_cfg, &[]) {
        Ok(sol) => AllocationPlan::from_assignment(cluster, sol.plan.assignment),
        // balancing is best effort here; the drain already happened
        Err(Error::Infeasible { .. }) => Ok(step.plan),
        Err(e) => Err(e),
    }
}
