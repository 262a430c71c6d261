//! Key-group allocation as a mixed-integer program and a self-contained
//! solver for it.
//!
//! The solver runs exhaustive enumeration when the instance is small enough,
//! otherwise a budget-aware local search produces an incumbent that a
//! depth-first branch and bound (LP relaxation plus a combinatorial bound)
//! tries to prove optimal within the node and time limits.

mod bnb;
mod brute;
mod model;
mod search;
pub(crate) mod simplex;

use std::time::{Duration, Instant};

use crate::domain::{AllocationPlan, ClusterState, KeyGroupId, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use brute::{brute_force_solve, BRUTE_FORCE_LIMIT};
pub use model::{
    ConstraintKind, Evaluation, LinearConstraint, MilpModel, ModelGroup, ModelNode,
    ResourceConstraint, Sense, Unit, Var,
};

/// Per-round migration budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Budget<S> {
    /// Bound on the summed migration cost of moved key groups.
    MigrCost(S),
    /// Bound on the number of moved key groups.
    Migrations(usize),
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MilpConfig<S> {
    pub w1: S,
    pub w2: S,
    /// Weight of the load left on nodes marked for removal. Without it the
    /// objective is indifferent to draining when the A-nodes cannot take a
    /// key group without raising `d`. Half of `w1` by default: a move that
    /// lowers `d` by the moved load still beats a drain move, while a drain
    /// that raises `d` by less than half the group's load goes ahead.
    pub w_drain: S,
    pub budget: Budget<S>,
    pub time_limit: Duration,
    pub seed: u64,
    /// Largest `nodes^units` product solved by plain enumeration.
    pub exhaustive_limit: u64,
    /// Branch and bound is only attempted up to this many units.
    pub bnb_unit_limit: usize,
    pub node_limit: u64,
    /// Largest number of assignment columns in an LP relaxation.
    pub lp_column_limit: usize,
    pub forbid_inbound_to_killed: bool,
}

impl<S: Scalar> Default for MilpConfig<S> {
    fn default() -> Self {
        MilpConfig {
            w1: S::lit(1000.0),
            w2: S::one(),
            w_drain: S::lit(500.0),
            budget: Budget::Unbounded,
            time_limit: Duration::from_secs(5),
            seed: 0,
            exhaustive_limit: BRUTE_FORCE_LIMIT,
            bnb_unit_limit: 16,
            node_limit: 20_000,
            lp_column_limit: 400,
            forbid_inbound_to_killed: true,
        }
    }
}

impl<S: Scalar> MilpConfig<S> {
    pub fn with_budget(mut self, budget: Budget<S>) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.w2 >= S::zero())
            || !(self.w1 >= S::lit(100.0) * self.w2)
            || !(self.w1 > S::zero())
        {
            return bad("w1 must be positive and at least 100 * w2, with w2 >= 0");
        }
        if !(self.w_drain >= S::zero()) {
            return bad("w_drain must be non-negative");
        }
        if let Budget::MigrCost(c) = self.budget {
            if !(c >= S::zero()) {
                return bad("max_migr_cost must be non-negative");
            }
        }
        Ok(())
    }
}

/// Keeps a set of key groups together, optionally pinned to one node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollocationConstraint {
    pub groups: Vec<KeyGroupId>,
    pub target: Option<NodeId>,
}

impl CollocationConstraint {
    pub fn pinned(groups: Vec<KeyGroupId>, target: NodeId) -> Self {
        CollocationConstraint {
            groups,
            target: Some(target),
        }
    }

    pub fn together(groups: Vec<KeyGroupId>) -> Self {
        CollocationConstraint {
            groups,
            target: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MilpSolution<S> {
    pub plan: AllocationPlan<S>,
    pub objective_value: S,
    pub optimal: bool,
    pub solve_time: Duration,
}

impl<S: Scalar> MilpSolution<S> {
    /// `d_u + d_l`, the secondary criterion.
    pub fn spread_slack(&self) -> S {
        self.plan.objective.d_u + self.plan.objective.d_l
    }
}

pub fn build_model<S: Scalar>(
    cluster: &ClusterState<S>,
    config: &MilpConfig<S>,
    extra: &[CollocationConstraint],
) -> Result<MilpModel<S>> {
    MilpModel::build(cluster, config, extra)
}

/// Exhaustive enumeration size `nodes^units`, saturating.
pub(crate) fn search_space<S: Scalar>(model: &MilpModel<S>) -> u64 {
    model
        .units
        .iter()
        .fold(1u64, |acc, u| acc.saturating_mul(u.allowed.len() as u64))
}

/// Candidate ordering: lower objective first, then lexicographically
/// smaller unit assignment.
pub(crate) fn better<S: Scalar>(
    a: (&Evaluation<S>, &[usize]),
    b: (&Evaluation<S>, &[usize]),
) -> bool {
    if a.0.objective.definitely_lt(b.0.objective) {
        return true;
    }
    if b.0.objective.definitely_lt(a.0.objective) {
        return false;
    }
    a.1 < b.1
}

pub fn solve<S: Scalar>(model: &MilpModel<S>) -> Result<MilpSolution<S>> {
    let start = Instant::now();
    let deadline = start + model.config.time_limit;

    if search_space(model) <= model.config.exhaustive_limit.min(BRUTE_FORCE_LIMIT) {
        let mut sol = brute_force_solve(model)?;
        sol.solve_time = start.elapsed();
        return Ok(sol);
    }

    let mut incumbent = model
        .start_assignment()
        .map(|s| search::improve(model, s, deadline));
    if let Some((assign, _)) = &incumbent {
        if !model.evaluate(assign).feasible {
            incumbent = None;
        }
    }

    let mut optimal = false;
    let mut best_bound = None;
    if model.unit_count() <= model.config.bnb_unit_limit {
        let out = bnb::branch_and_bound(model, incumbent.clone(), deadline);
        optimal = out.proven;
        best_bound = out.bound;
        if out.best.is_some() {
            incumbent = out.best;
        }
    }

    match incumbent {
        Some((assign, eval)) => Ok(MilpSolution {
            plan: model.plan(&assign)?,
            objective_value: eval.objective,
            optimal,
            solve_time: start.elapsed(),
        }),
        None => Err(Error::Infeasible {
            best_bound: best_bound.map(|b: S| b.as_f64()),
        }),
    }
}

/// Builds and solves in one call.
pub fn optimize<S: Scalar>(
    cluster: &ClusterState<S>,
    config: &MilpConfig<S>,
    extra: &[CollocationConstraint],
) -> Result<MilpSolution<S>> {
    solve(&build_model(cluster, config, extra)?)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::domain::{CostModel, KeyGroupStat, NodeDescriptor, OperatorId};

    pub(crate) fn cluster(nodes: &[(u32, bool)], groups: &[(u32, f64, u32)]) -> ClusterState<f64> {
        let cm = CostModel::<f64>::default();
        ClusterState::new(
            nodes
                .iter()
                .map(|&(id, kill)| {
                    let n = NodeDescriptor::new(NodeId(id));
                    if kill {
                        n.killed()
                    } else {
                        n
                    }
                })
                .collect::<Vec<_>>(),
            groups
                .iter()
                .map(|&(g, load, node)| {
                    (
                        KeyGroupStat::new(KeyGroupId(g), OperatorId(0), load, 1024.0, &cm),
                        NodeId(node),
                    )
                })
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn counts_rows_per_kind() {
        let c = cluster(
            &[(1, false), (2, false)],
            &[(1, 10.0, 1), (2, 20.0, 1), (3, 5.0, 2)],
        );
        let m = build_model(&c, &MilpConfig::default(), &[]).unwrap();
        assert_eq!(m.binary_count(), 6);
        let rows = m.constraints();
        let count = |f: fn(&ConstraintKind) -> bool| rows.iter().filter(|r| f(&r.kind)).count();
        assert_eq!(count(|k| matches!(k, ConstraintKind::Assignment(_))), 3);
        assert_eq!(count(|k| matches!(k, ConstraintKind::MaxLoad(_))), 2);
        assert_eq!(count(|k| matches!(k, ConstraintKind::MinLoad(_))), 2);
        assert_eq!(count(|k| matches!(k, ConstraintKind::DeviationBound)), 1);
    }

    #[test]
    fn killed_node_has_no_min_load_row() {
        let c = cluster(&[(1, false), (2, true)], &[(1, 10.0, 1), (2, 20.0, 2)]);
        let m = build_model(&c, &MilpConfig::default(), &[]).unwrap();
        let mins: Vec<_> = m
            .constraints()
            .into_iter()
            .filter_map(|r| match r.kind {
                ConstraintKind::MinLoad(n) => Some(n),
                _ => None,
            })
            .collect();
        assert_eq!(mins, vec![NodeId(1)]);
    }

    #[test]
    fn zero_cost_budget_keeps_placement() {
        let c = cluster(
            &[(1, false), (2, false)],
            &[(1, 30.0, 1), (2, 30.0, 1), (3, 40.0, 1)],
        );
        let cfg = MilpConfig::default().with_budget(Budget::MigrCost(0.0));
        let sol = optimize(&c, &cfg, &[]).unwrap();
        assert_eq!(sol.plan.migration_count(), 0);
        assert_eq!(&sol.plan.assignment, c.allocation());
    }

    #[test]
    fn rejects_weights_too_close() {
        let cfg = MilpConfig::<f64> {
            w1: 50.0,
            ..MilpConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn conflicting_pins_are_rejected() {
        let c = cluster(&[(1, false), (2, false)], &[(1, 10.0, 1), (2, 20.0, 2)]);
        let cons = [
            CollocationConstraint::pinned(vec![KeyGroupId(1)], NodeId(1)),
            CollocationConstraint::pinned(vec![KeyGroupId(1), KeyGroupId(2)], NodeId(2)),
        ];
        let err = build_model(&c, &MilpConfig::default(), &cons).unwrap_err();
        assert!(matches!(err, Error::ConflictingPins { .. }));
    }

    #[test]
    fn pins_propagate_through_shared_members() {
        let c = cluster(
            &[(1, false), (2, false)],
            &[(1, 10.0, 1), (2, 20.0, 2), (3, 5.0, 2)],
        );
        let cons = [
            CollocationConstraint::pinned(vec![KeyGroupId(1), KeyGroupId(2)], NodeId(2)),
            CollocationConstraint::together(vec![KeyGroupId(2), KeyGroupId(3)]),
        ];
        let m = build_model(&c, &MilpConfig::default(), &cons).unwrap();
        assert_eq!(m.unit_count(), 1);
        let sol = solve(&m).unwrap();
        assert!(sol.plan.assignment.values().all(|n| *n == NodeId(2)));
    }

    #[test]
    fn lp_dump_has_one_line_per_row() {
        let c = cluster(&[(1, false), (2, true)], &[(1, 10.0, 1), (2, 20.0, 2)]);
        let cfg = MilpConfig::default().with_budget(Budget::Migrations(1));
        let m = build_model(&c, &cfg, &[]).unwrap();
        let lp = m.to_lp_string();
        assert!(lp.contains("budget: "));
        assert!(lp.contains(" max_load_2: "));
        assert!(!lp.contains("min_load_2"));
        // group 1 may not move into the killed node
        assert!(lp.contains(" x_2_1 = 0"));
        let rows = lp
            .lines()
            .filter(|l| l.contains(": ") && !l.starts_with(" obj"))
            .count();
        assert_eq!(rows, m.constraints().len());
    }
}
