use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::domain::{AllocationPlan, ClusterState, KeyGroupId, NodeId};
use crate::error::Result;
use crate::scalar::Scalar;

/// Population variance of the active-node loads.
fn variance<S: Scalar>(loads: &BTreeMap<NodeId, S>) -> S {
    let n = S::from_count(loads.len().max(1));
    let mean = loads.values().fold(S::zero(), |a, l| a + *l) / n;
    loads
        .values()
        .fold(S::zero(), |a, l| a + (*l - mean) * (*l - mean))
        / n
}

/// Flux-style rebalancing: sort active nodes by load, pair the most loaded
/// with the least loaded, the second with the second last and so on, and
/// move from each high node the biggest key group whose move strictly
/// decreases the load variance without leaving the receiver heavier than
/// the sender. Sweeps repeat until no pair improves or `max_migrations`
/// key groups have moved.
///
/// Nodes marked for removal are neither sources nor targets; draining them
/// is left to [`super::drain_then_balance`].
pub fn flux_rebalance<S: Scalar>(
    cluster: &ClusterState<S>,
    max_migrations: usize,
) -> Result<AllocationPlan<S>> {
    let mut assignment = cluster.allocation().clone();
    let weights: BTreeMap<NodeId, S> = cluster
        .active_nodes()
        .map(|n| (n.id, n.capacity_weight))
        .collect();
    let mut raw: BTreeMap<NodeId, S> = weights.keys().map(|n| (*n, S::zero())).collect();
    let mut groups_on: BTreeMap<NodeId, Vec<KeyGroupId>> = BTreeMap::new();
    for (g, n) in cluster.allocation() {
        if let Some(r) = raw.get_mut(n) {
            *r = *r + cluster.stats()[g].load;
            groups_on.entry(*n).or_default().push(*g);
        }
    }
    let load_of = |raw: &BTreeMap<NodeId, S>| -> BTreeMap<NodeId, S> {
        raw.iter().map(|(n, r)| (*n, *r * weights[n])).collect()
    };

    let mut moved: std::collections::BTreeSet<KeyGroupId> = Default::default();
    while moved.len() < max_migrations {
        let loads = load_of(&raw);
        let mut order: Vec<NodeId> = loads.keys().copied().collect();
        order.sort_by(|a, b| {
            loads[b]
                .partial_cmp(&loads[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(b))
        });
        let mut any = false;
        let (mut lo, mut hi) = (0usize, order.len().saturating_sub(1));
        while lo < hi && moved.len() < max_migrations {
            let (src, dst) = (order[lo], order[hi]);
            let current = load_of(&raw);
            let base = variance(&current);
            let mut candidates = groups_on.get(&src).cloned().unwrap_or_default();
            candidates.sort_by(|a, b| {
                let (la, lb) = (cluster.stats()[a].load, cluster.stats()[b].load);
                lb.partial_cmp(&la)
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(b))
            });
            for g in candidates {
                let x = cluster.stats()[&g].load;
                if x <= S::zero() {
                    continue;
                }
                let src_after = (raw[&src] - x) * weights[&src];
                let dst_after = (raw[&dst] + x) * weights[&dst];
                if src_after.definitely_lt(dst_after) {
                    // merely swaps the imbalance
                    continue;
                }
                let mut trial = current.clone();
                trial.insert(src, src_after);
                trial.insert(dst, dst_after);
                if variance(&trial).definitely_lt(base) {
                    *raw.get_mut(&src).unwrap() = raw[&src] - x;
                    *raw.get_mut(&dst).unwrap() = raw[&dst] + x;
                    groups_on.get_mut(&src).unwrap().retain(|h| *h != g);
                    groups_on.entry(dst).or_default().push(g);
                    assignment.insert(g, dst);
                    if cluster.node_of(g) == Some(dst) {
                        moved.remove(&g);
                    } else {
                        moved.insert(g);
                    }
                    any = true;
                    break;
                }
            }
            lo += 1;
            hi -= 1;
        }
        if !any {
            break;
        }
    }
    AllocationPlan::from_assignment(cluster, assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CostModel, KeyGroupStat, NodeDescriptor, OperatorId};

    fn cluster(nodes: &[&[f64]]) -> ClusterState<f64> {
        let cm = CostModel::default();
        let mut groups = Vec::new();
        let mut id = 0;
        for (n, loads) in nodes.iter().enumerate() {
            for &l in *loads {
                groups.push((
                    KeyGroupStat::new(KeyGroupId(id), OperatorId(0), l, 1024.0, &cm),
                    NodeId(n as u32),
                ));
                id += 1;
            }
        }
        ClusterState::new(
            (0..nodes.len() as u32)
                .map(|n| NodeDescriptor::new(NodeId(n)))
                .collect::<Vec<_>>(),
            groups,
        )
        .unwrap()
    }

    #[test]
    fn moves_the_smaller_group_when_the_bigger_overshoots() {
        let c = cluster(&[&[20.0, 60.0], &[]]);
        let plan = flux_rebalance(&c, 5).unwrap();
        assert_eq!(plan.migration_count(), 1);
        assert_eq!(plan.migrations[0].group, KeyGroupId(0));
        let after = c.with_assignment(&plan.assignment).unwrap();
        assert_eq!(after.node_load(NodeId(0)).unwrap(), 60.0);
        assert_eq!(after.node_load(NodeId(1)).unwrap(), 20.0);
    }

    #[test]
    fn balanced_cluster_stays() {
        let c = cluster(&[&[10.0, 20.0], &[15.0, 15.0]]);
        assert_eq!(flux_rebalance(&c, 10).unwrap().migration_count(), 0);
    }

    #[test]
    fn zero_budget_is_identity() {
        let c = cluster(&[&[10.0, 20.0, 30.0], &[]]);
        let plan = flux_rebalance(&c, 0).unwrap();
        assert_eq!(&plan.assignment, c.allocation());
    }

    #[test]
    fn pairs_outer_nodes_first() {
        let c = cluster(&[&[30.0, 20.0, 10.0], &[25.0, 20.0], &[10.0], &[5.0]]);
        let plan = flux_rebalance(&c, 1).unwrap();
        assert_eq!(plan.migrations[0].from, NodeId(0));
        assert_eq!(plan.migrations[0].to, NodeId(3));
        assert_eq!(plan.migrations[0].group, KeyGroupId(1));
    }
}
