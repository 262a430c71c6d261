//! The periodic adaptation loop: drop drained nodes, plan, decide on
//! scaling against the planned loads, re-plan if the node set changed and
//! apply.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::albic::{self, AlbicConfig};
use crate::baselines::{
    cola_allocate, drain_evenly, drain_then_balance, flux_rebalance, PotcState,
};
use crate::domain::{AllocationPlan, ClusterState, NodeDescriptor, NodeId, TrafficMatrix};
use crate::error::{Error, Result};
use crate::milp::{self, Budget, MilpConfig};
use crate::scalar::Scalar;
use crate::stats;

/// Threshold-based horizontal scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingPolicy<S> {
    pub enabled: bool,
    pub target_utilization: S,
    pub scale_out_threshold: S,
    pub scale_in_threshold: S,
    pub min_nodes: usize,
    /// Load distance the remaining nodes must reach for a scale-in to go
    /// ahead.
    pub max_ld: S,
}

impl<S: Scalar> Default for ScalingPolicy<S> {
    fn default() -> Self {
        ScalingPolicy {
            enabled: true,
            target_utilization: S::lit(70.0),
            scale_out_threshold: S::lit(85.0),
            scale_in_threshold: S::lit(40.0),
            min_nodes: 1,
            max_ld: S::lit(10.0),
        }
    }
}

impl<S: Scalar> ScalingPolicy<S> {
    pub fn disabled() -> Self {
        ScalingPolicy {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale_in_threshold < self.target_utilization
            && self.target_utilization < self.scale_out_threshold)
        {
            return Err(Error::InvalidConfig(
                "scaling thresholds must satisfy scale_in < target < scale_out".into(),
            ));
        }
        if self.min_nodes == 0 || !(self.max_ld > S::zero()) {
            return Err(Error::InvalidConfig(
                "min_nodes and max_ld must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum ScalingAction {
    #[default]
    None,
    ScaleOut(usize),
    ScaleIn(Vec<NodeId>),
}

/// Decides on scaling from the loads the cluster would have after
/// `projected`, not from the current loads. Scale-in only goes ahead when
/// the MILP, with the candidate nodes marked and no migration budget, can
/// balance the rest within `policy.max_ld`.
pub fn scaling_decision<S: Scalar>(
    projected: &AllocationPlan<S>,
    cluster: &ClusterState<S>,
    policy: &ScalingPolicy<S>,
    probe: &MilpConfig<S>,
) -> Result<ScalingAction> {
    if !policy.enabled {
        return Ok(ScalingAction::None);
    }
    let after = cluster.with_assignment(&projected.assignment)?;
    let active = after.active_nodes().count();
    if active == 0 {
        return Err(Error::NoActiveNodes);
    }
    let total = after.node_loads().values().fold(S::zero(), |a, l| a + *l);
    let mean = total / S::from_count(active);
    let needed = (total / policy.target_utilization)
        .ceil()
        .to_usize()
        .unwrap_or(active);

    if policy.scale_out_threshold.definitely_lt(mean) {
        return Ok(ScalingAction::ScaleOut(
            needed.saturating_sub(active).max(1),
        ));
    }
    if !mean.definitely_lt(policy.scale_in_threshold) {
        return Ok(ScalingAction::None);
    }
    let keep = needed.max(policy.min_nodes);
    if keep >= active {
        return Ok(ScalingAction::None);
    }
    let loads = after.node_loads();
    let mut lightest: Vec<NodeId> = after.active_nodes().map(|n| n.id).collect();
    lightest.sort_by(|a, b| {
        loads[a]
            .partial_cmp(&loads[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    });
    let probe = MilpConfig {
        budget: Budget::Unbounded,
        ..probe.clone()
    };
    let mut tries = vec![active - keep];
    if active - keep > 1 {
        tries.push(1);
    }
    for remove in tries {
        let victims: Vec<NodeId> = lightest[..remove].to_vec();
        let mut trial = after.clone();
        for v in &victims {
            trial.set_kill(*v, true)?;
        }
        let ok = match milp::optimize(&trial, &probe, &[]) {
            Ok(sol) => {
                let ld = stats::load_distance(&trial.with_assignment(&sol.plan.assignment)?)?;
                !policy.max_ld.definitely_lt(ld)
            }
            Err(Error::Infeasible { .. }) => false,
            Err(e) => return Err(e),
        };
        if ok {
            return Ok(ScalingAction::ScaleIn(victims));
        }
    }
    Ok(ScalingAction::None)
}

/// Which planner an adaptation round uses, with its configuration and any
/// state it carries between rounds.
#[derive(Clone, Debug)]
pub enum Optimizer<S> {
    Milp(MilpConfig<S>),
    Albic(AlbicConfig<S>),
    Flux {
        max_migrations: usize,
    },
    Potc(PotcState<S>),
    Cola {
        max_ld: S,
        seed: u64,
    },
    /// Non-integrated scale-in: drain first, balance afterwards.
    DrainThenBalance(MilpConfig<S>),
}

/// What a planner produced for one round.
#[derive(Clone, Debug)]
pub struct PlanOutcome<S> {
    pub plan: AllocationPlan<S>,
    pub optimal: Option<bool>,
    /// Extra per-node load from merging split state (PoTC only).
    pub merge_load: BTreeMap<NodeId, S>,
    /// False when reassignment only reroutes tuples and no state moves.
    pub moves_state: bool,
}

impl<S: Scalar> Optimizer<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Milp(_) => "milp",
            Optimizer::Albic(_) => "albic",
            Optimizer::Flux { .. } => "flux",
            Optimizer::Potc(_) => "potc",
            Optimizer::Cola { .. } => "cola",
            Optimizer::DrainThenBalance(_) => "drain",
        }
    }

    /// Per-round migration budget this planner promises to respect.
    pub fn budget(&self) -> Budget<S> {
        match self {
            Optimizer::Milp(c) | Optimizer::DrainThenBalance(c) => c.budget,
            Optimizer::Albic(c) => c.milp.budget,
            Optimizer::Flux { max_migrations } => Budget::Migrations(*max_migrations),
            Optimizer::Potc(_) | Optimizer::Cola { .. } => Budget::Unbounded,
        }
    }

    fn probe_config(&self) -> MilpConfig<S> {
        match self {
            Optimizer::Milp(c) | Optimizer::DrainThenBalance(c) => c.clone(),
            Optimizer::Albic(c) => c.milp.clone(),
            _ => MilpConfig::default(),
        }
    }

    pub fn plan(
        &mut self,
        cluster: &ClusterState<S>,
        traffic: &TrafficMatrix<S>,
        round: u64,
    ) -> Result<PlanOutcome<S>> {
        let simple = |plan| PlanOutcome {
            plan,
            optimal: None,
            merge_load: BTreeMap::new(),
            moves_state: true,
        };
        match self {
            Optimizer::Milp(cfg) => {
                let cfg = cfg.clone().with_seed(cfg.seed.wrapping_add(round));
                let sol = milp::optimize(cluster, &cfg, &[])?;
                Ok(PlanOutcome {
                    optimal: Some(sol.optimal),
                    ..simple(sol.plan)
                })
            }
            Optimizer::Albic(cfg) => {
                let mut cfg = cfg.clone();
                cfg.seed = cfg.seed.wrapping_add(round);
                cfg.milp.seed = cfg.milp.seed.wrapping_add(round);
                Ok(simple(albic::albic(cluster, traffic, &cfg)?.plan))
            }
            Optimizer::Flux { max_migrations } => {
                // Flux knows nothing about scale-in, so nodes marked for
                // removal are emptied first with the same budget.
                let step = drain_evenly(cluster, Budget::Migrations(*max_migrations))?;
                let left = match step.remaining {
                    Budget::Migrations(m) if step.pending == 0 => m,
                    _ => return Ok(simple(step.plan)),
                };
                let drained = cluster.apply_plan(&step.plan)?;
                let balanced = flux_rebalance(&drained, left)?;
                Ok(simple(AllocationPlan::from_assignment(
                    cluster,
                    balanced.assignment,
                )?))
            }
            Optimizer::Potc(state) => {
                state.clear();
                let mut loads: BTreeMap<NodeId, S> =
                    cluster.active_nodes().map(|n| (n.id, S::zero())).collect();
                if loads.is_empty() {
                    return Err(Error::NoActiveNodes);
                }
                let mut order: Vec<_> = cluster.stats().values().collect();
                order.sort_by(|a, b| {
                    b.load
                        .partial_cmp(&a.load)
                        .unwrap_or(Ordering::Equal)
                        .then(a.id.cmp(&b.id))
                });
                let mut assignment = BTreeMap::new();
                for stat in order {
                    let node = state
                        .route(u64::from(stat.id.0), stat.load, &loads)
                        .ok_or(Error::NoActiveNodes)?;
                    let w = cluster.node(node).map_or(S::one(), |n| n.capacity_weight);
                    *loads.get_mut(&node).unwrap() = loads[&node] + stat.load * w;
                    assignment.insert(stat.id, node);
                }
                Ok(PlanOutcome {
                    plan: AllocationPlan::from_assignment(cluster, assignment)?,
                    optimal: None,
                    merge_load: state.merge_load(cluster),
                    moves_state: false,
                })
            }
            Optimizer::Cola { max_ld, seed } => Ok(simple(
                cola_allocate(cluster, traffic, *max_ld, *seed)?.plan,
            )),
            Optimizer::DrainThenBalance(cfg) => Ok(simple(drain_then_balance(cluster, cfg)?)),
        }
    }
}

/// Everything one adaptation round did.
#[derive(Clone, Debug)]
pub struct RoundReport<S> {
    pub round: u64,
    pub optimizer: &'static str,
    pub removed_nodes: Vec<NodeId>,
    pub scaling: ScalingAction,
    pub replanned: bool,
    pub plan: Option<AllocationPlan<S>>,
    /// State migrations applied; zero for planners that only reroute.
    pub migrations: usize,
    pub migration_cost: S,
    pub budget: Budget<S>,
    pub optimal: Option<bool>,
    pub merge_load: BTreeMap<NodeId, S>,
    pub solve_time: Duration,
    pub load_distance: Option<S>,
    pub active_nodes: usize,
    pub error: Option<String>,
}

impl<S: Scalar> RoundReport<S> {
    pub fn budget_respected(&self) -> bool {
        match self.budget {
            Budget::Unbounded => true,
            Budget::Migrations(m) => self.migrations <= m,
            Budget::MigrCost(c) => !c.definitely_lt(self.migration_cost),
        }
    }
}

/// One pass of the adaptation loop. On planner failure the returned
/// cluster is the input minus already-drained nodes, and the error is in
/// the report.
pub fn adaptation_round<S: Scalar>(
    cluster: &ClusterState<S>,
    traffic: &TrafficMatrix<S>,
    optimizer: &mut Optimizer<S>,
    policy: &ScalingPolicy<S>,
    round: u64,
) -> (ClusterState<S>, RoundReport<S>) {
    let started = Instant::now();
    let mut current = cluster.clone();
    let mut report = RoundReport {
        round,
        optimizer: optimizer.name(),
        removed_nodes: Vec::new(),
        scaling: ScalingAction::None,
        replanned: false,
        plan: None,
        migrations: 0,
        migration_cost: S::zero(),
        budget: optimizer.budget(),
        optimal: None,
        merge_load: BTreeMap::new(),
        solve_time: Duration::ZERO,
        load_distance: None,
        active_nodes: current.active_nodes().count(),
        error: None,
    };

    let empty: Vec<NodeId> = current
        .killed_nodes()
        .map(|n| n.id)
        .filter(|n| current.groups_on(*n).is_empty())
        .collect();
    for n in &empty {
        // cannot fail: the node exists and holds nothing
        let _ = current.remove_node(*n);
    }
    report.removed_nodes = empty;

    let result = (|| -> Result<(ClusterState<S>, PlanOutcome<S>)> {
        let tentative = optimizer.plan(&current, traffic, round)?;
        let action =
            scaling_decision(&tentative.plan, &current, policy, &optimizer.probe_config())?;
        report.scaling = action.clone();
        let outcome = match action {
            ScalingAction::None => tentative,
            ScalingAction::ScaleOut(n) => {
                for _ in 0..n {
                    let id = current.next_node_id();
                    current.add_node(NodeDescriptor::new(id))?;
                }
                report.replanned = true;
                optimizer.plan(&current, traffic, round)?
            }
            ScalingAction::ScaleIn(victims) => {
                for v in victims {
                    current.set_kill(v, true)?;
                }
                report.replanned = true;
                optimizer.plan(&current, traffic, round)?
            }
        };
        let next = current.apply_plan(&outcome.plan)?;
        Ok((next, outcome))
    })();
    report.solve_time = started.elapsed();

    match result {
        Ok((next, outcome)) => {
            if outcome.moves_state {
                report.migrations = outcome.plan.migration_count();
                report.migration_cost = outcome.plan.objective.total_migr_cost;
            }
            report.optimal = outcome.optimal;
            report.merge_load = outcome.merge_load;
            report.load_distance = stats::load_distance(&next).ok();
            report.active_nodes = next.active_nodes().count();
            report.plan = Some(outcome.plan);
            (next, report)
        }
        Err(e) => {
            report.error = Some(e.to_string());
            let mut unchanged = cluster.clone();
            for n in &report.removed_nodes {
                let _ = unchanged.remove_node(*n);
            }
            report.active_nodes = unchanged.active_nodes().count();
            (unchanged, report)
        }
    }
}
