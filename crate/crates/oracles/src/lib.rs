//! Reference oracles and instance generators for the acceptance suite:
//! small random clusters, drain-heavy clusters, and exhaustive balanced
//! min-cut search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reconfig::domain::CostModel;
use reconfig::milp::Budget;
use reconfig::partition::{part_capacity, WeightedGraph};
use reconfig::{ClusterState, KeyGroupId, KeyGroupStat, NodeDescriptor, NodeId, OperatorId};

/// Builds a cluster from `(kill, capacity weight)` nodes and
/// `(load, state KB, node index)` key groups; operators cycle through three.
pub fn cluster_from(
    nodes: &[(bool, f64)],
    groups: impl IntoIterator<Item = (f64, f64, usize)>,
) -> ClusterState {
    let cm = CostModel::default();
    let ns = nodes.iter().enumerate().map(|(i, &(kill, w))| {
        let n = NodeDescriptor::new(NodeId(i as u32)).with_weight(w);
        if kill {
            n.killed()
        } else {
            n
        }
    });
    let gs = groups
        .into_iter()
        .enumerate()
        .map(|(g, (load, state, node))| {
            (
                KeyGroupStat::new(
                    KeyGroupId(g as u32),
                    OperatorId(g as u32 % 3),
                    load,
                    state,
                    &cm,
                ),
                NodeId(node as u32),
            )
        });
    ClusterState::new(ns, gs).unwrap()
}

/// Up to `max_nodes` nodes (some possibly marked for removal, at least one
/// active) and up to `max_groups` key groups, with a random budget.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_nodes: usize,
    max_groups: usize,
    force_b: bool,
) -> (ClusterState, Budget<f64>) {
    let n = rng.gen_range(2..=max_nodes);
    let mut nodes: Vec<(bool, f64)> = (0..n)
        .map(|_| {
            (
                rng.gen_bool(0.25),
                *[0.5, 1.0, 1.0, 2.0].get(rng.gen_range(0..4)).unwrap(),
            )
        })
        .collect();
    nodes[0].0 = false;
    if force_b && !nodes.iter().any(|n| n.0) {
        nodes[n - 1].0 = true;
    }
    let g = rng.gen_range(1..=max_groups);
    let groups: Vec<(f64, f64, usize)> = (0..g)
        .map(|_| {
            let load = (rng.gen_range(1.0..40.0_f64) * 2.0).round() / 2.0;
            (load, rng.gen_range(512.0..4096.0), rng.gen_range(0..n))
        })
        .collect();
    let budget = match rng.gen_range(0..3) {
        0 => Budget::Unbounded,
        1 => Budget::Migrations(rng.gen_range(0..=4)),
        _ => Budget::MigrCost(rng.gen_range(0.0..6.0)),
    };
    (cluster_from(&nodes, groups), budget)
}

/// Removal-set instance with 20 to 30 key groups of similar state size on
/// B. Each group costs a small fraction of a quarter of B's total, so
/// rounding a round's moves to whole key groups loses less than one round.
pub fn drain_instance(seed: u64) -> ClusterState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rng.gen_range(2..=4);
    let b = rng.gen_range(1..=2);
    let mut nodes = vec![(false, 1.0); a];
    nodes.extend(vec![(true, 1.0); b]);
    let mut groups = Vec::new();
    for node in 0..a {
        for _ in 0..rng.gen_range(1..=4) {
            groups.push((rng.gen_range(1.0..25.0), rng.gen_range(800.0..1200.0), node));
        }
    }
    for i in 0..rng.gen_range(20..=30) {
        groups.push((
            rng.gen_range(1.0..25.0),
            rng.gen_range(800.0..1200.0),
            a + i % b,
        ));
    }
    cluster_from(&nodes, groups)
}

/// Minimum cut over every balanced assignment into non-empty parts.
pub fn exhaustive_min_cut(g: &WeightedGraph<f64>, parts: usize, tol: f64) -> Option<f64> {
    let weights: Vec<f64> = g.vertices().values().copied().collect();
    let n = weights.len();
    let cap = part_capacity(g.total_weight(), parts, tol);
    let edges: Vec<(usize, usize, f64)> = g
        .edges()
        .iter()
        .map(|(&(a, b), &w)| (a.0 as usize, b.0 as usize, w))
        .collect();
    let mut best: Option<f64> = None;
    let mut assign = vec![0usize; n];
    for code in 0..parts.pow(n as u32) {
        let mut c = code;
        for slot in assign.iter_mut() {
            *slot = c % parts;
            c /= parts;
        }
        let mut next = 0;
        let mut canonical = true;
        for &p in &assign {
            if p > next {
                canonical = false;
                break;
            }
            if p == next {
                next += 1;
            }
        }
        if !canonical || next != parts {
            continue;
        }
        let mut load = vec![0.0; parts];
        for (v, &p) in assign.iter().enumerate() {
            load[p] += weights[v];
        }
        if load.iter().any(|&l| l > cap + 1e-9) {
            continue;
        }
        let cut: f64 = edges
            .iter()
            .filter(|(a, b, _)| assign[*a] != assign[*b])
            .map(|e| e.2)
            .sum();
        if best.is_none_or(|b| cut < b) {
            best = Some(cut);
        }
    }
    best
}
