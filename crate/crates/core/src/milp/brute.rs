use std::time::Instant;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::model::MilpModel;
use super::{search_space, MilpSolution};

/// Largest `nodes^units` product accepted by [`brute_force_solve`].
pub const BRUTE_FORCE_LIMIT: u64 = 10_000_000;

struct Enumerator<'m, S> {
    model: &'m MilpModel<S>,
    assign: Vec<usize>,
    raw: Vec<S>,
    best: Option<(Vec<usize>, S)>,
}

impl<S: Scalar> Enumerator<'_, S> {
    fn visit(&mut self, u: usize, cost: S) {
        let model = self.model;
        if u == model.units.len() {
            let eval = model.evaluate_loads(&self.raw, cost, true);
            if !eval.feasible {
                return;
            }
            let take = match &self.best {
                // visiting order is lexicographic, so ties keep the first
                Some((_, obj)) => eval.objective.definitely_lt(*obj),
                None => true,
            };
            if take {
                self.best = Some((self.assign.clone(), eval.objective));
            }
            return;
        }
        let unit = &model.units[u];
        for &i in &unit.allowed {
            let c = cost + unit.cost_at(i);
            if model.budget.is_some_and(|b| b.definitely_lt(c)) {
                continue;
            }
            self.assign[u] = i;
            self.raw[i] = self.raw[i] + unit.load;
            self.visit(u + 1, c);
            self.raw[i] = self.raw[i] - unit.load;
        }
    }
}

/// Provably optimal solution by full enumeration. Among equally good
/// assignments the lexicographically smallest (by key group, then node id)
/// wins.
pub fn brute_force_solve<S: Scalar>(model: &MilpModel<S>) -> Result<MilpSolution<S>> {
    let start = Instant::now();
    if search_space(model) > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            nodes: model.node_count(),
            units: model.unit_count(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut e = Enumerator {
        model,
        assign: vec![0; model.unit_count()],
        raw: vec![S::zero(); model.node_count()],
        best: None,
    };
    e.visit(0, S::zero());
    let Some((assign, _)) = e.best else {
        return Err(Error::Infeasible { best_bound: None });
    };
    // re-score canonically; incremental sums may differ in the last bits
    let eval = model.evaluate(&assign);
    Ok(MilpSolution {
        plan: model.plan(&assign)?,
        objective_value: eval.objective,
        optimal: true,
        solve_time: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::cluster;
    use super::super::{build_model, Budget, MilpConfig};
    use super::*;
    use crate::domain::{KeyGroupId, NodeId};

    #[test]
    fn splits_thirty_thirty_forty() {
        let c = cluster(
            &[(1, false), (2, false)],
            &[(1, 30.0, 1), (2, 30.0, 1), (3, 40.0, 1)],
        );
        let m = build_model(&c, &MilpConfig::default(), &[]).unwrap();
        let sol = brute_force_solve(&m).unwrap();
        assert_eq!(sol.plan.objective.d, 10.0);
        assert!(sol.optimal);
        // moving {40} costs one migration less than {30,30} but the objective
        // is indifferent; the lexicographic rule keeps g1 and g2 on n1
        assert_eq!(sol.plan.assignment[&KeyGroupId(3)], NodeId(2));
    }

    #[test]
    fn single_node_is_identity() {
        let c = cluster(&[(1, false)], &[(1, 30.0, 1), (2, 7.0, 1)]);
        let m = build_model(&c, &MilpConfig::default(), &[]).unwrap();
        let sol = brute_force_solve(&m).unwrap();
        assert_eq!(sol.plan.migration_count(), 0);
        assert_eq!(sol.plan.objective.d, 0.0);
    }

    #[test]
    fn drains_killed_node() {
        let c = cluster(
            &[(1, false), (2, false), (3, true)],
            &[(1, 20.0, 1), (2, 20.0, 2), (3, 10.0, 3)],
        );
        let m = build_model(&c, &MilpConfig::default(), &[]).unwrap();
        let sol = brute_force_solve(&m).unwrap();
        assert_ne!(sol.plan.assignment[&KeyGroupId(3)], NodeId(3));
    }

    #[test]
    fn oversize_instance_is_rejected() {
        let groups: Vec<_> = (0..24).map(|g| (g, 1.0, 0)).collect();
        let c = cluster(&[(0, false), (1, false), (2, false)], &groups);
        let cfg = MilpConfig::default().with_budget(Budget::Unbounded);
        let m = build_model(&c, &cfg, &[]).unwrap();
        assert!(matches!(
            brute_force_solve(&m),
            Err(Error::InstanceTooLarge { .. })
        ));
    }
}
