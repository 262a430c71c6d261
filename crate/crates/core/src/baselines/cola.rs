use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::domain::{AllocationPlan, ClusterState, KeyGroupId, NodeId, TrafficMatrix};
use crate::error::{Error, Result};
use crate::partition::{balanced_partition, WeightedGraph};
use crate::scalar::{total, Scalar};
use crate::stats;

/// Outcome of a from-scratch COLA-style allocation.
#[derive(Clone, Debug, PartialEq)]
pub struct ColaOutcome<S> {
    pub plan: AllocationPlan<S>,
    pub partitions: Vec<BTreeSet<KeyGroupId>>,
    pub splits: usize,
    pub load_distance: S,
}

/// Greedy placement: heaviest partition first, each onto the active node
/// whose weighted load stays lowest. Returns the assignment and the load
/// distance it yields.
fn place<S: Scalar>(
    cluster: &ClusterState<S>,
    parts: &[(BTreeSet<KeyGroupId>, S)],
) -> Result<(BTreeMap<KeyGroupId, NodeId>, S)> {
    let active: Vec<(NodeId, S)> = cluster
        .active_nodes()
        .map(|n| (n.id, n.capacity_weight))
        .collect();
    if active.is_empty() {
        return Err(Error::NoActiveNodes);
    }
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by(|&a, &b| {
        parts[b]
            .1
            .partial_cmp(&parts[a].1)
            .unwrap_or(Ordering::Equal)
            .then(parts[a].0.first().cmp(&parts[b].0.first()))
    });
    let mut raw = vec![S::zero(); active.len()];
    let mut assignment = BTreeMap::new();
    for p in order {
        let (set, load) = &parts[p];
        let mut best = 0;
        for i in 1..active.len() {
            let cand = (raw[i] + *load) * active[i].1;
            let cur = (raw[best] + *load) * active[best].1;
            if cand.definitely_lt(cur) {
                best = i;
            }
        }
        raw[best] = raw[best] + *load;
        for g in set {
            assignment.insert(*g, active[best].0);
        }
    }
    let mut view: Vec<(S, bool)> = active
        .iter()
        .zip(&raw)
        .map(|((_, w), r)| (*r * *w, false))
        .collect();
    view.extend(cluster.killed_nodes().map(|_| (S::zero(), true)));
    let ld = stats::load_distance_of(&view)?;
    Ok((assignment, ld))
}

/// Balance slack for COLA's bisections. Bisection only has to make
/// partitions smaller; a tight tolerance would cut tightly coupled pairs
/// whenever a partition holds an odd number of them.
pub const COLA_BISECTION_TOL: f64 = 0.5;

/// Reconstruction of COLA's allocation: ignore the current placement, start
/// from one partition holding every key group and keep splitting the
/// heaviest partition in two (minimizing the traffic cut) until a greedy
/// placement of the partitions reaches `max_ld`, or every partition is a
/// single key group.
pub fn cola_allocate<S: Scalar>(
    cluster: &ClusterState<S>,
    traffic: &TrafficMatrix<S>,
    max_ld: S,
    seed: u64,
) -> Result<ColaOutcome<S>> {
    cola_allocate_with(cluster, traffic, max_ld, S::lit(COLA_BISECTION_TOL), seed)
}

pub fn cola_allocate_with<S: Scalar>(
    cluster: &ClusterState<S>,
    traffic: &TrafficMatrix<S>,
    max_ld: S,
    imbalance_tol: S,
    seed: u64,
) -> Result<ColaOutcome<S>> {
    let load = |g: &KeyGroupId| cluster.stats()[g].load;
    let mut neighbours: BTreeMap<KeyGroupId, Vec<(KeyGroupId, S)>> = BTreeMap::new();
    for (a, b, r) in traffic.iter() {
        if a != b && r > S::zero() && cluster.stat(a).is_some() && cluster.stat(b).is_some() {
            neighbours.entry(a).or_default().push((b, r));
        }
    }

    let all: BTreeSet<KeyGroupId> = cluster.stats().keys().copied().collect();
    let sum = total(all.iter().map(load));
    let mut parts = vec![(all, sum)];
    let mut splits = 0;
    loop {
        let (assignment, ld) = place(cluster, &parts)?;
        let heaviest = parts
            .iter()
            .enumerate()
            .filter(|(_, (set, _))| set.len() > 1)
            .max_by(|(ia, a), (ib, b)| {
                a.1.partial_cmp(&b.1)
                    .unwrap_or(Ordering::Equal)
                    .then(ib.cmp(ia))
            })
            .map(|(i, _)| i);
        let done = !max_ld.definitely_lt(ld) || heaviest.is_none();
        if done {
            let plan = AllocationPlan::from_assignment(cluster, assignment)?;
            return Ok(ColaOutcome {
                plan,
                partitions: parts.into_iter().map(|(s, _)| s).collect(),
                splits,
                load_distance: ld,
            });
        }
        let (set, _) = parts.swap_remove(heaviest.unwrap());
        let mut graph = WeightedGraph::new();
        for g in &set {
            graph.add_vertex(*g, load(g));
        }
        for g in &set {
            for (h, r) in neighbours.get(g).into_iter().flatten() {
                if set.contains(h) {
                    graph.add_edge(*g, *h, *r)?;
                }
            }
        }
        let halves =
            balanced_partition(&graph, 2, imbalance_tol, seed.wrapping_add(splits as u64))?;
        for half in halves {
            let l = total(half.iter().map(load));
            parts.push((half, l));
        }
        // keep the partition list order independent of swap_remove
        parts.sort_by(|a, b| a.0.first().cmp(&b.0.first()));
        splits += 1;
    }
}
