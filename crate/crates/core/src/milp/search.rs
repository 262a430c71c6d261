//! Budget-aware steepest-descent over relocations and swaps of units.
//!
//! Candidates are ranked by (violation of the `d <= mean` bound, objective, squared
//! deviation from the mean). The last term only breaks plateaus and is never
//! allowed to spend budget.

use std::cmp::Ordering;
use std::time::Instant;

use crate::scalar::Scalar;

use super::model::{Evaluation, MilpModel};

#[derive(Clone, Copy, Debug)]
struct Score<S> {
    violation: S,
    objective: S,
    spread: S,
}

impl<S: Scalar> Score<S> {
    /// Strictly better, beyond tolerance, on the first differing component.
    fn beats(&self, other: &Self, plateau_ok: bool) -> bool {
        if self.violation.definitely_lt(other.violation) {
            return true;
        }
        if other.violation.definitely_lt(self.violation) {
            return false;
        }
        if self.objective.definitely_lt(other.objective) {
            return true;
        }
        if other.objective.definitely_lt(self.objective) {
            return false;
        }
        plateau_ok && self.spread.definitely_lt(other.spread)
    }
}

#[derive(Clone, Copy, Debug)]
enum Move {
    Relocate { unit: usize, to: usize },
    Swap { a: usize, b: usize },
}

struct State<'m, S> {
    model: &'m MilpModel<S>,
    assign: Vec<usize>,
    raw: Vec<S>,
    cost: S,
    /// Node indices by weighted load, descending.
    desc: Vec<usize>,
    /// Active node indices by weighted load, ascending.
    asc_active: Vec<usize>,
    on_node: Vec<Vec<usize>>,
    score: Score<S>,
}

impl<'m, S: Scalar> State<'m, S> {
    fn new(model: &'m MilpModel<S>, assign: Vec<usize>) -> Self {
        let mut raw = vec![S::zero(); model.nodes.len()];
        let mut cost = S::zero();
        for (u, &i) in assign.iter().enumerate() {
            raw[i] = raw[i] + model.units[u].load;
            cost = cost + model.units[u].cost_at(i);
        }
        let mut s = State {
            model,
            assign,
            raw,
            cost,
            desc: Vec::new(),
            asc_active: Vec::new(),
            on_node: Vec::new(),
            score: Score {
                violation: S::zero(),
                objective: S::zero(),
                spread: S::zero(),
            },
        };
        s.refresh();
        s
    }

    fn weighted(&self, i: usize) -> S {
        self.raw[i] * self.model.nodes[i].weight
    }

    fn refresh(&mut self) {
        let n = self.model.nodes.len();
        let w: Vec<S> = (0..n).map(|i| self.weighted(i)).collect();
        self.desc = (0..n).collect();
        self.desc.sort_by(|&a, &b| {
            w[b].partial_cmp(&w[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        self.asc_active = (0..n).filter(|&i| !self.model.nodes[i].kill).collect();
        self.asc_active.sort_by(|&a, &b| {
            w[a].partial_cmp(&w[b])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        self.on_node = vec![Vec::new(); n];
        for (u, &i) in self.assign.iter().enumerate() {
            self.on_node[i].push(u);
        }
        let spread = (0..n).fold(S::zero(), |acc, i| acc + self.node_spread(i, w[i]));
        self.score = self.score_with(&[], spread);
    }

    fn node_spread(&self, i: usize, load: S) -> S {
        let dev = if self.model.nodes[i].kill {
            load
        } else {
            load - self.model.mean
        };
        dev * dev
    }

    /// Score after replacing the weighted loads of the nodes in `changes`.
    fn score_with(&self, changes: &[(usize, S)], spread: S) -> Score<S> {
        let m = self.model;
        let changed = |i: usize| changes.iter().any(|(c, _)| *c == i);
        let mut max_l = self
            .desc
            .iter()
            .find(|&&i| !changed(i))
            .map_or(S::neg_infinity(), |&i| self.weighted(i));
        let mut min_a = self
            .asc_active
            .iter()
            .find(|&&i| !changed(i))
            .map_or(S::infinity(), |&i| self.weighted(i));
        let mut drain = m
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kill)
            .fold(S::zero(), |acc, (i, _)| acc + self.weighted(i));
        for &(i, l) in changes {
            max_l = max_l.max(l);
            if m.nodes[i].kill {
                drain = drain - self.weighted(i) + l;
            } else {
                min_a = min_a.min(l);
            }
        }
        let upper = max_l - m.mean;
        let lower = m.mean - min_a;
        let d = upper.max(lower).max(S::zero());
        let c = &m.config;
        let objective = c.w1 * d - c.w2 * ((d - upper) + (d - lower)) + c.w_drain * drain;
        Score {
            violation: (d - m.mean).max(S::zero()),
            objective,
            spread,
        }
    }

    fn within_budget(&self, cost_delta: S) -> bool {
        match self.model.budget {
            Some(b) => !b.definitely_lt(self.cost + cost_delta),
            None => true,
        }
    }

    /// Evaluates a move, returning its score and cost delta when admissible.
    fn try_move(&self, mv: Move) -> Option<(Score<S>, S)> {
        let m = self.model;
        let (changes, cost_delta) = match mv {
            Move::Relocate { unit, to } => {
                let from = self.assign[unit];
                let u = &m.units[unit];
                let dc = u.cost_at(to) - u.cost_at(from);
                let lf = (self.raw[from] - u.load) * m.nodes[from].weight;
                let lt = (self.raw[to] + u.load) * m.nodes[to].weight;
                ([(from, lf), (to, lt)], dc)
            }
            Move::Swap { a, b } => {
                let (na, nb) = (self.assign[a], self.assign[b]);
                let (ua, ub) = (&m.units[a], &m.units[b]);
                let dc = ua.cost_at(nb) + ub.cost_at(na) - ua.cost_at(na) - ub.cost_at(nb);
                let la = (self.raw[na] - ua.load + ub.load) * m.nodes[na].weight;
                let lb = (self.raw[nb] - ub.load + ua.load) * m.nodes[nb].weight;
                ([(na, la), (nb, lb)], dc)
            }
        };
        if !self.within_budget(cost_delta) {
            return None;
        }
        let spread = self.score.spread
            + changes.iter().fold(S::zero(), |acc, &(i, l)| {
                acc + self.node_spread(i, l) - self.node_spread(i, self.weighted(i))
            });
        Some((self.score_with(&changes, spread), cost_delta))
    }

    fn apply(&mut self, mv: Move) {
        let m = self.model;
        match mv {
            Move::Relocate { unit, to } => {
                let from = self.assign[unit];
                let u = &m.units[unit];
                self.cost = self.cost + u.cost_at(to) - u.cost_at(from);
                self.raw[from] = self.raw[from] - u.load;
                self.raw[to] = self.raw[to] + u.load;
                self.assign[unit] = to;
            }
            Move::Swap { a, b } => {
                let (na, nb) = (self.assign[a], self.assign[b]);
                self.apply(Move::Relocate { unit: a, to: nb });
                self.apply(Move::Relocate { unit: b, to: na });
                return;
            }
        }
        self.refresh();
    }

    fn allowed(&self, unit: usize, node: usize) -> bool {
        self.model.units[unit].allowed.binary_search(&node).is_ok()
    }

    fn critical_nodes(&self) -> (Vec<usize>, Vec<usize>) {
        let top = self.weighted(self.desc[0]);
        let mut high: Vec<usize> = self
            .desc
            .iter()
            .copied()
            .take_while(|&i| self.weighted(i).approx_eq(top))
            .collect();
        for (i, n) in self.model.nodes.iter().enumerate() {
            if n.kill && self.raw[i] > S::zero() && !high.contains(&i) {
                high.push(i);
            }
        }
        let low = match self.asc_active.first() {
            Some(&first) => {
                let bottom = self.weighted(first);
                self.asc_active
                    .iter()
                    .copied()
                    .take_while(|&i| self.weighted(i).approx_eq(bottom))
                    .collect()
            }
            None => Vec::new(),
        };
        (high, low)
    }

    /// Best admissible move improving on `reference`.
    fn best_move(&self, reference: &Score<S>) -> Option<(Move, Score<S>)> {
        let m = self.model;
        let mut best: Option<(Move, Score<S>)> = None;
        let consider = |mv: Move, best: &mut Option<(Move, Score<S>)>| {
            if let Some((score, dc)) = self.try_move(mv) {
                let plateau_ok = dc <= S::zero();
                let target = best.as_ref().map_or(reference, |(_, s)| s);
                if score.beats(target, plateau_ok) {
                    *best = Some((mv, score));
                }
            }
        };
        let (high, low) = self.critical_nodes();
        for &a in &high {
            for &u in &self.on_node[a] {
                for &to in &m.units[u].allowed {
                    if to != a {
                        consider(Move::Relocate { unit: u, to }, &mut best);
                    }
                }
                for (v, &nv) in self.assign.iter().enumerate() {
                    if nv != a
                        && m.units[v].load < m.units[u].load
                        && self.allowed(u, nv)
                        && self.allowed(v, a)
                    {
                        consider(Move::Swap { a: u, b: v }, &mut best);
                    }
                }
            }
        }
        for &b in &low {
            for (u, &nu) in self.assign.iter().enumerate() {
                if nu != b && self.allowed(u, b) {
                    consider(Move::Relocate { unit: u, to: b }, &mut best);
                }
            }
            for &u in &self.on_node[b] {
                for (v, &nv) in self.assign.iter().enumerate() {
                    if nv != b
                        && m.units[v].load > m.units[u].load
                        && self.allowed(u, nv)
                        && self.allowed(v, b)
                    {
                        consider(Move::Swap { a: u, b: v }, &mut best);
                    }
                }
            }
        }
        best
    }

    /// Undoes one earlier migration to free budget, then looks for a move
    /// that makes the pair an improvement.
    fn best_compound(&self) -> Option<(Move, Move)> {
        let m = self.model;
        let mut best: Option<(Move, Move, Score<S>)> = None;
        for u in 0..self.assign.len() {
            let here = self.assign[u];
            let unit = &m.units[u];
            if unit.cost_at(here) <= S::zero() {
                continue;
            }
            let Some(&home) = unit.allowed.iter().find(|&&i| unit.cost_at(i) <= S::zero()) else {
                continue;
            };
            let back = Move::Relocate { unit: u, to: home };
            let mut trial = State {
                model: m,
                assign: self.assign.clone(),
                raw: self.raw.clone(),
                cost: self.cost,
                desc: Vec::new(),
                asc_active: Vec::new(),
                on_node: Vec::new(),
                score: self.score,
            };
            trial.apply(back);
            let reference = best.as_ref().map_or(self.score, |(_, _, s)| *s);
            if let Some((mv, score)) = trial.best_move(&reference) {
                if !matches!(mv, Move::Relocate { unit, .. } if unit == u) {
                    best = Some((back, mv, score));
                }
            }
        }
        best.map(|(a, b, _)| (a, b))
    }
}

/// Improves `start` until no admissible move helps or `deadline` passes.
pub(crate) fn improve<S: Scalar>(
    model: &MilpModel<S>,
    start: Vec<usize>,
    deadline: Instant,
) -> (Vec<usize>, Evaluation<S>) {
    let mut state = State::new(model, start);
    let max_iters = 20 * model.units.len() + 100;
    for _ in 0..max_iters {
        if Instant::now() >= deadline {
            break;
        }
        if let Some((mv, _)) = state.best_move(&state.score) {
            state.apply(mv);
            continue;
        }
        match state.best_compound() {
            Some((back, mv)) => {
                state.apply(back);
                state.apply(mv);
            }
            None => break,
        }
    }
    let eval = model.evaluate(&state.assign);
    (state.assign, eval)
}
