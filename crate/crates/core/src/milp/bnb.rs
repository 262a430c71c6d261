use std::cmp::Ordering;
use std::time::Instant;

use crate::scalar::Scalar;

use super::better;
use super::model::{Evaluation, MilpModel, Sense};
use super::simplex::{self, LinearProgram, LpOutcome};

pub(crate) struct BnbOutcome<S> {
    pub best: Option<(Vec<usize>, Evaluation<S>)>,
    /// The search space was exhausted, so `best` is optimal (or the model is
    /// infeasible when `best` is `None`).
    pub proven: bool,
    /// Lower bound on the objective at the root.
    pub bound: Option<S>,
}

const FREE: usize = usize::MAX;

struct Search<'m, S> {
    model: &'m MilpModel<S>,
    /// Units in branching order: heaviest first.
    order: Vec<usize>,
    /// `reach[t][i]`: load of units `order[t..]` that may be placed on `i`.
    reach: Vec<Vec<S>>,
    assign: Vec<usize>,
    raw: Vec<S>,
    best: Option<(Vec<usize>, Evaluation<S>)>,
    visited: u64,
    aborted: bool,
    deadline: Instant,
    inv_weight_all: S,
    inv_weight_active: S,
    total: S,
}

impl<'m, S: Scalar> Search<'m, S> {
    fn new(model: &'m MilpModel<S>, deadline: Instant) -> Self {
        let mut order: Vec<usize> = (0..model.units.len()).collect();
        order.sort_by(|&a, &b| {
            model.units[b]
                .load
                .partial_cmp(&model.units[a].load)
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let n = model.nodes.len();
        let mut reach = vec![vec![S::zero(); n]; order.len() + 1];
        let mut total = S::zero();
        for t in (0..order.len()).rev() {
            let unit = &model.units[order[t]];
            reach[t] = reach[t + 1].clone();
            for &i in &unit.allowed {
                reach[t][i] = reach[t][i] + unit.load;
            }
            total = total + unit.load;
        }
        let inv = |f: &dyn Fn(&super::ModelNode<S>) -> bool| {
            model
                .nodes
                .iter()
                .filter(|n| f(n))
                .fold(S::zero(), |acc, n| acc + S::one() / n.weight)
        };
        Search {
            model,
            order,
            reach,
            total,
            assign: vec![FREE; model.units.len()],
            raw: vec![S::zero(); n],
            best: None,
            visited: 0,
            aborted: false,
            deadline,
            inv_weight_all: inv(&|_| true),
            inv_weight_active: inv(&|n| !n.kill),
        }
    }

    fn incumbent_value(&self) -> Option<S> {
        self.best.as_ref().map(|(_, e)| e.objective)
    }

    /// Combinatorial lower bound with units `order[..t]` fixed. `None` when
    /// no completion can satisfy `d <= mean`.
    fn quick_bound(&self, t: usize) -> Option<S> {
        let m = self.model;
        let mut max_fixed = S::neg_infinity();
        let mut min_reach = S::infinity();
        let mut drain = S::zero();
        for (i, node) in m.nodes.iter().enumerate() {
            let l = self.raw[i] * node.weight;
            max_fixed = max_fixed.max(l);
            if node.kill {
                drain = drain + l;
            } else {
                min_reach = min_reach.min((self.raw[i] + self.reach[t][i]) * node.weight);
            }
        }
        let mut max_lb = max_fixed.max(self.total / self.inv_weight_all);
        if t < self.order.len() {
            // the heaviest free unit has to land somewhere
            let unit = &m.units[self.order[t]];
            let landing = unit
                .allowed
                .iter()
                .map(|&i| (self.raw[i] + unit.load) * m.nodes[i].weight)
                .fold(S::infinity(), |a, b| a.min(b));
            max_lb = max_lb.max(landing);
        }
        let min_ub = min_reach.min(self.total / self.inv_weight_active);
        let d_lb = (max_lb - m.mean).max(m.mean - min_ub).max(S::zero());
        if m.mean.definitely_lt(d_lb) {
            return None;
        }
        let c = &m.config;
        let spread = (max_lb - min_ub).max(S::zero());
        Some((c.w1 - c.w2 - c.w2) * d_lb + c.w2 * spread + c.w_drain * drain)
    }

    /// LP relaxation bound over the free units. `Err(())` means the
    /// relaxation is infeasible.
    fn lp_bound(&self, t: usize, cost: S) -> Result<Option<S>, ()> {
        let m = self.model;
        let free = &self.order[t..];
        let remaining = m.budget.map(|b| b - cost);
        let mut cols: Vec<(usize, usize)> = Vec::new();
        for &u in free {
            for &i in &m.units[u].allowed {
                if remaining.is_none_or(|r| !r.definitely_lt(m.units[u].cost_at(i))) {
                    cols.push((u, i));
                }
            }
        }
        if cols.len() > m.config.lp_column_limit {
            return Ok(None);
        }
        let (d, du, dl) = (cols.len(), cols.len() + 1, cols.len() + 2);
        let mut lp = LinearProgram::new(cols.len() + 3);
        let c = &m.config;
        lp.objective[d] = c.w1;
        lp.objective[du] = -c.w2;
        lp.objective[dl] = -c.w2;
        for (j, &(u, i)) in cols.iter().enumerate() {
            if m.nodes[i].kill {
                lp.objective[j] = c.w_drain * m.units[u].load * m.nodes[i].weight;
            }
        }
        let mut per_unit: Vec<Vec<(usize, S)>> = vec![Vec::new(); m.units.len()];
        let mut per_node: Vec<Vec<(usize, S)>> = vec![Vec::new(); m.nodes.len()];
        let mut budget_row = Vec::new();
        for (j, &(u, i)) in cols.iter().enumerate() {
            per_unit[u].push((j, S::one()));
            per_node[i].push((j, m.units[u].load * m.nodes[i].weight));
            let cu = m.units[u].cost_at(i);
            if cu > S::zero() {
                budget_row.push((j, cu));
            }
        }
        for &u in free {
            if per_unit[u].is_empty() {
                return Err(());
            }
            lp.push(std::mem::take(&mut per_unit[u]), Sense::Eq, S::one());
        }
        if let Some(r) = remaining {
            if !budget_row.is_empty() {
                lp.push(budget_row, Sense::Le, r.max(S::zero()));
            }
        }
        let mut drain = S::zero();
        for (i, node) in m.nodes.iter().enumerate() {
            let fixed = self.raw[i] * node.weight;
            let mut terms = per_node[i].clone();
            terms.push((d, -S::one()));
            terms.push((du, S::one()));
            lp.push(terms, Sense::Le, m.mean - fixed);
            if node.kill {
                drain = drain + fixed;
            } else {
                let mut terms = std::mem::take(&mut per_node[i]);
                terms.push((d, S::one()));
                terms.push((dl, -S::one()));
                lp.push(terms, Sense::Ge, m.mean - fixed);
            }
        }
        lp.push(vec![(d, S::one())], Sense::Le, m.mean);
        match simplex::solve(&lp) {
            LpOutcome::Optimal { value, .. } => Ok(Some(value + c.w_drain * drain)),
            LpOutcome::Infeasible => Err(()),
            LpOutcome::Unbounded | LpOutcome::Stalled => Ok(None),
        }
    }

    /// `Some(bound)` if the subtree may hold something at least as good as
    /// the incumbent.
    fn bound(&self, t: usize, cost: S) -> Option<S> {
        let quick = self.quick_bound(t)?;
        let dominated = |b: S| {
            self.incumbent_value()
                .is_some_and(|inc| inc.definitely_lt(b))
        };
        if dominated(quick) {
            return None;
        }
        if self.order.len() - t < 2 {
            return Some(quick);
        }
        match self.lp_bound(t, cost) {
            Err(()) => None,
            Ok(Some(lp)) => {
                let b = quick.max(lp - lp.abs().max(S::one()) * S::lit(1e-7));
                (!dominated(b)).then_some(b)
            }
            Ok(None) => Some(quick),
        }
    }

    fn visit(&mut self, t: usize, cost: S) {
        if self.aborted {
            return;
        }
        self.visited += 1;
        if self.visited > self.model.config.node_limit
            || (self.visited.is_multiple_of(256) && Instant::now() >= self.deadline)
        {
            self.aborted = true;
            return;
        }
        let m = self.model;
        if t == self.order.len() {
            let eval = m.evaluate(&self.assign);
            if !eval.feasible {
                return;
            }
            let take = match &self.best {
                Some((a, e)) => better((&eval, &self.assign), (e, a)),
                None => true,
            };
            if take {
                self.best = Some((self.assign.clone(), eval));
            }
            return;
        }
        if self.bound(t, cost).is_none() {
            return;
        }
        let u = self.order[t];
        let unit = &m.units[u];
        let mut children: Vec<(usize, S)> = unit
            .allowed
            .iter()
            .filter_map(|&i| {
                let c = cost + unit.cost_at(i);
                let fits = m.budget.is_none_or(|b| !b.definitely_lt(c));
                fits.then(|| (i, (self.raw[i] + unit.load) * m.nodes[i].weight))
            })
            .collect();
        children.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap_or(Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        for (i, _) in children {
            self.assign[u] = i;
            self.raw[i] = self.raw[i] + unit.load;
            self.visit(t + 1, cost + unit.cost_at(i));
            self.raw[i] = self.raw[i] - unit.load;
            self.assign[u] = FREE;
            if self.aborted {
                return;
            }
        }
    }
}

pub(crate) fn branch_and_bound<S: Scalar>(
    model: &MilpModel<S>,
    incumbent: Option<(Vec<usize>, Evaluation<S>)>,
    deadline: Instant,
) -> BnbOutcome<S> {
    let mut search = Search::new(model, deadline);
    let root = search
        .quick_bound(0)
        .map(|q| match search.lp_bound(0, S::zero()) {
            Ok(Some(lp)) => q.max(lp),
            _ => q,
        });
    search.best = incumbent;
    search.visit(0, S::zero());
    BnbOutcome {
        best: search.best,
        proven: !search.aborted,
        bound: root,
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::super::tests::cluster;
    use super::super::{brute_force_solve, build_model, Budget, MilpConfig};
    use super::*;

    #[test]
    fn agrees_with_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let nodes: Vec<(u32, bool)> =
                (0..3).map(|i| (i, i == 2 && rng.gen_bool(0.5))).collect();
            let groups: Vec<(u32, f64, u32)> = (0..7)
                .map(|g| (g, rng.gen_range(1.0..30.0), rng.gen_range(0..3)))
                .collect();
            let c = cluster(&nodes, &groups);
            let cfg = MilpConfig::default().with_budget(Budget::Migrations(rng.gen_range(0..5)));
            let m = build_model(&c, &cfg, &[]).unwrap();
            let out = branch_and_bound(&m, None, Instant::now() + Duration::from_secs(10));
            assert!(out.proven);
            let Ok(oracle) = brute_force_solve(&m) else {
                // d <= mean cannot hold within the budget
                assert!(out.best.is_none());
                continue;
            };
            let (assign, eval) = out.best.unwrap();
            assert_eq!(m.plan(&assign).unwrap().assignment, oracle.plan.assignment);
            assert_eq!(eval.objective, oracle.objective_value);
            assert!(out.bound.unwrap() <= eval.objective + 1e-6);
        }
    }
}
