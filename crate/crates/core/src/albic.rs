//! Autonomic load balancing with integrated collocation.
//!
//! Each invocation scores key-group pairs by traffic, keeps already
//! collocated pairs together as indivisible partitions, asks the MILP to
//! collocate one more high-traffic pair, and falls back to smaller
//! partitions (and finally the plain MILP) when the load distance gets too
//! large.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{AllocationPlan, ClusterState, KeyGroupId, NodeId, TrafficMatrix};
use crate::error::{Error, Result};
use crate::milp::{self, Budget, MilpConfig};
use crate::partition::{balanced_partition, WeightedGraph};
use crate::scalar::Scalar;
use crate::stats;

pub use crate::milp::CollocationConstraint;

#[derive(Clone, Debug, PartialEq)]
pub struct AlbicConfig<S> {
    pub max_ld: S,
    pub max_pl: S,
    pub step_pl: S,
    pub score_factor: S,
    pub imbalance_tol: S,
    pub milp: MilpConfig<S>,
    pub seed: u64,
}

impl<S: Scalar> Default for AlbicConfig<S> {
    fn default() -> Self {
        AlbicConfig {
            max_ld: S::lit(10.0),
            max_pl: S::lit(25.0),
            step_pl: S::lit(5.0),
            score_factor: S::lit(1.5),
            imbalance_tol: S::lit(0.1),
            milp: MilpConfig::default(),
            seed: 0,
        }
    }
}

impl<S: Scalar> AlbicConfig<S> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_ld > S::zero()
            && self.max_pl >= S::zero()
            && self.step_pl > S::zero()
            && self.score_factor > S::zero();
        if !ok {
            return Err(Error::InvalidConfig(
                "albic needs max_ld > 0, max_pl >= 0, step_pl > 0 and score_factor > 0".into(),
            ));
        }
        self.milp.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairScore<S> {
    pub src: KeyGroupId,
    pub dst: KeyGroupId,
    pub rate: S,
    pub collocated: bool,
}

/// Key groups that migrate together.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationPartition<S> {
    pub members: BTreeSet<KeyGroupId>,
    pub total_load: S,
    pub total_migr_cost: S,
}

impl<S: Scalar> CollocationPartition<S> {
    fn of(cluster: &ClusterState<S>, members: BTreeSet<KeyGroupId>) -> Self {
        let (mut load, mut cost) = (S::zero(), S::zero());
        for g in &members {
            if let Some(s) = cluster.stat(*g) {
                load = load + s.load;
                cost = cost + s.migr_cost;
            }
        }
        CollocationPartition {
            members,
            total_load: load,
            total_migr_cost: cost,
        }
    }
}

/// Splits qualifying pairs into already collocated ones and candidates.
pub fn score_pairs<S: Scalar>(
    traffic: &TrafficMatrix<S>,
    cluster: &ClusterState<S>,
    score_factor: S,
) -> (Vec<PairScore<S>>, Vec<PairScore<S>>) {
    let mut col = Vec::new();
    let mut to_be = Vec::new();
    for f in stats::qualifying_flows(cluster, traffic, score_factor) {
        let collocated = cluster.node_of(f.src) == cluster.node_of(f.dst);
        let p = PairScore {
            src: f.src,
            dst: f.dst,
            rate: f.rate,
            collocated,
        };
        if collocated {
            col.push(p);
        } else {
            to_be.push(p);
        }
    }
    (col, to_be)
}

/// Per-round migration capacity and the size measure it applies to.
fn migration_capacity<S: Scalar>(
    budget: Budget<S>,
    members: &[KeyGroupId],
    cluster: &ClusterState<S>,
) -> (S, S) {
    match budget {
        Budget::MigrCost(c) => {
            let pmc = members
                .iter()
                .filter_map(|g| cluster.stat(*g))
                .fold(S::zero(), |a, s| a + s.migr_cost);
            (pmc, c)
        }
        Budget::Migrations(n) => (S::from_count(members.len()), S::from_count(n)),
        Budget::Unbounded => (S::zero(), S::infinity()),
    }
}

fn ceil_ratio<S: Scalar>(num: S, den: S, cap: usize) -> usize {
    if !(den > S::zero()) {
        return cap;
    }
    let r = (num / den).ceil();
    r.to_usize().unwrap_or(cap).clamp(1, cap.max(1))
}

/// Merges collocated pairs into connected sets and splits every set that
/// exceeds the per-round migration budget or `max_pl`. Returns only parts
/// with at least two members; singletons are free key groups.
pub fn maintain_partitions<S: Scalar>(
    col_grps: &[PairScore<S>],
    cluster: &ClusterState<S>,
    config: &AlbicConfig<S>,
) -> Vec<CollocationPartition<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);

    // connected components over the pair graph
    let mut parent: BTreeMap<KeyGroupId, KeyGroupId> = BTreeMap::new();
    fn find(parent: &mut BTreeMap<KeyGroupId, KeyGroupId>, g: KeyGroupId) -> KeyGroupId {
        let p = *parent.entry(g).or_insert(g);
        if p == g {
            return g;
        }
        let r = find(parent, p);
        parent.insert(g, r);
        r
    }
    for p in col_grps {
        let (a, b) = (find(&mut parent, p.src), find(&mut parent, p.dst));
        if a != b {
            parent.insert(a.max(b), a.min(b));
        }
    }
    let keys: Vec<KeyGroupId> = parent.keys().copied().collect();
    let mut sets: BTreeMap<KeyGroupId, Vec<KeyGroupId>> = BTreeMap::new();
    for g in keys {
        let r = find(&mut parent, g);
        sets.entry(r).or_default().push(g);
    }

    let mut edges: BTreeMap<(KeyGroupId, KeyGroupId), S> = BTreeMap::new();
    for p in col_grps {
        let key = (p.src.min(p.dst), p.src.max(p.dst));
        let e = edges.entry(key).or_insert(S::zero());
        *e = *e + p.rate;
    }

    let mut out = Vec::new();
    let mut pending: Vec<Vec<KeyGroupId>> = sets.into_values().collect();
    while let Some(set) = pending.pop() {
        if set.len() < 2 {
            continue;
        }
        let part = CollocationPartition::of(cluster, set.iter().copied().collect());
        let (pmc, max_mc) = migration_capacity(config.milp.budget, &set, cluster);
        let p1 = ceil_ratio(pmc, max_mc, set.len());
        let p2 = ceil_ratio(part.total_load, config.max_pl, set.len());
        let parts = p1.max(p2);
        if parts <= 1 {
            out.push(part);
            continue;
        }
        let cost_ratio = if max_mc > S::zero() {
            pmc / max_mc
        } else {
            S::infinity()
        };
        let load_ratio = if config.max_pl > S::zero() {
            part.total_load / config.max_pl
        } else {
            S::infinity()
        };
        let by_cost = match cost_ratio.partial_cmp(&load_ratio) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Less) => false,
            _ => rng.gen_bool(0.5),
        };
        let mut graph = WeightedGraph::new();
        for g in &set {
            let s = cluster.stat(*g);
            let w = match (by_cost, config.milp.budget, s) {
                (true, Budget::Migrations(_), _) => S::one(),
                (true, _, Some(s)) => s.migr_cost,
                (false, _, Some(s)) => s.load,
                (_, _, None) => S::zero(),
            };
            graph.add_vertex(*g, w);
        }
        for (&(a, b), &w) in &edges {
            if graph.vertices().contains_key(&a) && graph.vertices().contains_key(&b) {
                graph
                    .add_edge(a, b, w)
                    .expect("endpoints were added as vertices");
            }
        }
        let seed = rng.gen();
        let Ok(split) = balanced_partition(&graph, parts, config.imbalance_tol, seed) else {
            continue;
        };
        for piece in split {
            let members: Vec<KeyGroupId> = piece.into_iter().collect();
            let p = CollocationPartition::of(cluster, members.iter().copied().collect());
            let (pmc, max_mc) = migration_capacity(config.milp.budget, &members, cluster);
            let violates = max_mc.definitely_lt(pmc) || config.max_pl.definitely_lt(p.total_load);
            if members.len() < 2 {
                continue;
            }
            if violates {
                pending.push(members);
            } else {
                out.push(p);
            }
        }
    }
    out.sort_by(|a, b| a.members.iter().next().cmp(&b.members.iter().next()));
    out
}

/// Picks the highest-traffic candidate pair (random among ties) and pins it
/// next to its partner. Returns `None` when no candidate can be placed on an
/// active node.
pub fn improve_collocation<S: Scalar>(
    to_be_col_grps: &[PairScore<S>],
    partitions: &[CollocationPartition<S>],
    cluster: &ClusterState<S>,
    seed: u64,
) -> Option<CollocationConstraint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<&PairScore<S>> = to_be_col_grps.iter().collect();
    candidates.shuffle(&mut rng);
    // stable sort keeps the shuffled order among equal rates
    candidates.sort_by(|a, b| b.rate.partial_cmp(&a.rate).unwrap_or(Ordering::Equal));

    let part_of: BTreeMap<KeyGroupId, usize> = partitions
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.members.iter().map(move |g| (*g, i)))
        .collect();
    let loads = cluster.node_loads();
    let active = |n: NodeId| cluster.node(n).is_some_and(|d| !d.kill);
    let lighter = |a: NodeId, b: NodeId| -> Option<NodeId> {
        match (active(a), active(b)) {
            (true, true) => Some(if loads[&b] < loads[&a] { b } else { a }),
            (true, false) => Some(a),
            (false, true) => Some(b),
            (false, false) => None,
        }
    };

    for pair in candidates {
        let (gi, gj) = (pair.src, pair.dst);
        let (Some(n1), Some(n2)) = (cluster.node_of(gi), cluster.node_of(gj)) else {
            continue;
        };
        let (pi, pj) = (part_of.get(&gi), part_of.get(&gj));
        let (target, mut groups) = match (pi, pj) {
            (None, None) => (lighter(n1, n2), vec![gi, gj]),
            (Some(_), None) => (active(n1).then_some(n1), vec![gi, gj]),
            (None, Some(_)) => (active(n2).then_some(n2), vec![gi, gj]),
            (Some(&a), Some(&b)) => {
                let mut g: Vec<KeyGroupId> = partitions[a].members.iter().copied().collect();
                g.extend(partitions[b].members.iter().copied());
                (lighter(n1, n2), g)
            }
        };
        if let Some(target) = target {
            groups.sort();
            groups.dedup();
            return Some(CollocationConstraint::pinned(groups, target));
        }
    }
    None
}

/// Result of one ALBIC invocation with the diagnostics the caller may want
/// to log.
#[derive(Clone, Debug)]
pub struct AlbicOutcome<S> {
    pub plan: AllocationPlan<S>,
    pub partitions: Vec<CollocationPartition<S>>,
    pub constraint: Option<CollocationConstraint>,
    /// `max_pl` of the accepted attempt; zero or less means plain MILP.
    pub max_pl_used: S,
    pub recursions: usize,
    /// The step-3 constraint made the model infeasible and was dropped.
    pub constraint_dropped: bool,
    pub load_distance: S,
}

fn plan_distance<S: Scalar>(cluster: &ClusterState<S>, plan: &AllocationPlan<S>) -> Result<S> {
    stats::load_distance(&cluster.with_assignment(&plan.assignment)?)
}

fn solve_with<S: Scalar>(
    cluster: &ClusterState<S>,
    config: &MilpConfig<S>,
    partitions: &[CollocationPartition<S>],
    pin: Option<&CollocationConstraint>,
) -> Result<AllocationPlan<S>> {
    let mut extra: Vec<CollocationConstraint> = partitions
        .iter()
        .map(|p| CollocationConstraint::together(p.members.iter().copied().collect()))
        .collect();
    extra.extend(pin.cloned());
    Ok(milp::optimize(cluster, config, &extra)?.plan)
}

pub fn albic<S: Scalar>(
    cluster: &ClusterState<S>,
    traffic: &TrafficMatrix<S>,
    config: &AlbicConfig<S>,
) -> Result<AlbicOutcome<S>> {
    config.validate()?;
    let (col, to_be) = score_pairs(traffic, cluster, config.score_factor);
    let mut max_pl = config.max_pl;
    let mut recursions = 0;
    loop {
        if max_pl <= S::zero() {
            let plan = milp::optimize(cluster, &config.milp, &[])?.plan;
            let load_distance = plan_distance(cluster, &plan)?;
            return Ok(AlbicOutcome {
                plan,
                partitions: Vec::new(),
                constraint: None,
                max_pl_used: max_pl,
                recursions,
                constraint_dropped: false,
                load_distance,
            });
        }
        let round_cfg = AlbicConfig {
            max_pl,
            ..config.clone()
        };
        let partitions = maintain_partitions(&col, cluster, &round_cfg);
        let pin = improve_collocation(&to_be, &partitions, cluster, config.seed);
        let mut dropped = false;
        let attempt = match solve_with(cluster, &config.milp, &partitions, pin.as_ref()) {
            Ok(plan) => Ok(plan),
            Err(Error::Infeasible { .. } | Error::ConflictingPins { .. }) if pin.is_some() => {
                dropped = true;
                solve_with(cluster, &config.milp, &partitions, None)
            }
            Err(e) => Err(e),
        };
        match attempt {
            Ok(plan) => {
                let load_distance = plan_distance(cluster, &plan)?;
                if !config.max_ld.definitely_lt(load_distance) {
                    return Ok(AlbicOutcome {
                        plan,
                        partitions,
                        constraint: if dropped { None } else { pin },
                        max_pl_used: max_pl,
                        recursions,
                        constraint_dropped: dropped,
                        load_distance,
                    });
                }
            }
            Err(Error::Infeasible { .. }) => {}
            Err(e) => return Err(e),
        }
        max_pl = max_pl - config.step_pl;
        recursions += 1;
    }
}
