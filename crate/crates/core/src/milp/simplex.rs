//! Dense two-phase primal simplex for small LP relaxations.
//!
//! Variables are non-negative. Dantzig pricing is used until the iteration
//! count suggests cycling, after which Bland's rule guarantees termination.

use crate::scalar::Scalar;

use super::model::Sense;

#[derive(Clone, Debug)]
pub(crate) struct Row<S> {
    pub terms: Vec<(usize, S)>,
    pub sense: Sense,
    pub rhs: S,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct LinearProgram<S> {
    pub columns: usize,
    /// Minimized.
    pub objective: Vec<S>,
    pub rows: Vec<Row<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum LpOutcome<S> {
    Optimal {
        value: S,
        x: Vec<S>,
    },
    Infeasible,
    Unbounded,
    /// Iteration limit hit; no claim either way.
    Stalled,
}

impl<S: Scalar> LinearProgram<S> {
    pub fn new(columns: usize) -> Self {
        LinearProgram {
            columns,
            objective: vec![S::zero(); columns],
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, terms: Vec<(usize, S)>, sense: Sense, rhs: S) {
        self.rows.push(Row { terms, sense, rhs });
    }
}

struct Tableau<S> {
    /// `m` rows of `width + 1` entries, the last being the rhs.
    a: Vec<Vec<S>>,
    basis: Vec<usize>,
    width: usize,
    eps: S,
}

impl<S: Scalar> Tableau<S> {
    fn pivot(&mut self, r: usize, c: usize, cost: &mut [S]) {
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v = *v / p;
        }
        let pivot_row = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != S::zero() {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v = *v - f * *pv;
                }
                row[c] = S::zero();
            }
        }
        let f = cost[c];
        if f != S::zero() {
            for (v, pv) in cost.iter_mut().zip(&pivot_row) {
                *v = *v - f * *pv;
            }
            cost[c] = S::zero();
        }
        self.basis[r] = c;
    }

    /// Minimizes the reduced-cost row `cost` (last entry holds `-z`) over the
    /// columns allowed by `usable`.
    fn optimize(&mut self, cost: &mut [S], usable: &dyn Fn(usize) -> bool) -> Option<bool> {
        let m = self.a.len();
        let limit = 50 * (m + self.width) + 1000;
        let bland_after = 10 * (m + self.width);
        for iter in 0..limit {
            let bland = iter >= bland_after;
            let mut enter = None;
            let mut best = -self.eps;
            for j in (0..self.width).filter(|&j| usable(j)) {
                if cost[j] < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = cost[j];
                }
            }
            let Some(c) = enter else {
                return Some(true);
            };
            let mut leave: Option<(usize, S)> = None;
            for r in 0..m {
                let coef = self.a[r][c];
                if coef > self.eps {
                    let ratio = self.a[r][self.width] / coef;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - self.eps
                                || (ratio <= lratio + self.eps && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Some(false);
            };
            self.pivot(r, c, cost);
        }
        None
    }
}

pub(crate) fn solve<S: Scalar>(lp: &LinearProgram<S>) -> LpOutcome<S> {
    let n = lp.columns;
    let m = lp.rows.len();
    let eps = S::lit(1e-9).max(S::tolerance());

    // column layout: structural | slack/surplus | artificial
    let mut slack_cols = 0;
    let mut art_cols = 0;
    for row in &lp.rows {
        let flip = row.rhs < S::zero();
        match (row.sense, flip) {
            (Sense::Le, false) | (Sense::Ge, true) => slack_cols += 1,
            (Sense::Ge, false) | (Sense::Le, true) => {
                slack_cols += 1;
                art_cols += 1
            }
            (Sense::Eq, _) => art_cols += 1,
        }
    }
    let width = n + slack_cols + art_cols;
    let art_start = n + slack_cols;
    let mut a = vec![vec![S::zero(); width + 1]; m];
    let mut basis = vec![0; m];
    let (mut next_slack, mut next_art) = (n, art_start);
    for (r, row) in lp.rows.iter().enumerate() {
        let sign = if row.rhs < S::zero() {
            -S::one()
        } else {
            S::one()
        };
        for &(j, v) in &row.terms {
            a[r][j] = a[r][j] + sign * v;
        }
        a[r][width] = sign * row.rhs;
        let sense = match (row.sense, sign < S::zero()) {
            (Sense::Le, true) => Sense::Ge,
            (Sense::Ge, true) => Sense::Le,
            (s, _) => s,
        };
        match sense {
            Sense::Le => {
                a[r][next_slack] = S::one();
                basis[r] = next_slack;
                next_slack += 1;
            }
            Sense::Ge => {
                a[r][next_slack] = -S::one();
                next_slack += 1;
                a[r][next_art] = S::one();
                basis[r] = next_art;
                next_art += 1;
            }
            Sense::Eq => {
                a[r][next_art] = S::one();
                basis[r] = next_art;
                next_art += 1;
            }
        }
    }
    let mut t = Tableau {
        a,
        basis,
        width,
        eps,
    };

    if art_cols > 0 {
        // phase 1: minimize the sum of artificials
        let mut cost = vec![S::zero(); width + 1];
        for c in cost.iter_mut().take(width).skip(art_start) {
            *c = S::one();
        }
        for r in 0..m {
            if t.basis[r] >= art_start {
                for (c, v) in cost.iter_mut().zip(&t.a[r]) {
                    *c = *c - *v;
                }
            }
        }
        if t.optimize(&mut cost, &|_| true).is_none() {
            return LpOutcome::Stalled;
        }
        let infeas = -cost[width];
        let scale = S::one() + lp.rows.iter().fold(S::zero(), |acc, r| acc + r.rhs.abs());
        if infeas > eps * scale * S::lit(1e3) {
            return LpOutcome::Infeasible;
        }
        // drive remaining artificials out of the basis where possible
        for r in 0..m {
            if t.basis[r] >= art_start {
                if let Some(c) = (0..art_start).find(|&j| t.a[r][j].abs() > eps) {
                    let mut dummy = vec![S::zero(); width + 1];
                    t.pivot(r, c, &mut dummy);
                }
            }
        }
    }

    // phase 2
    let mut cost = vec![S::zero(); width + 1];
    cost[..n].copy_from_slice(&lp.objective);
    for r in 0..m {
        let b = t.basis[r];
        let cb = cost[b];
        if cb != S::zero() {
            for (c, v) in cost.iter_mut().zip(&t.a[r]) {
                *c = *c - cb * *v;
            }
        }
    }
    match t.optimize(&mut cost, &|j| j < art_start) {
        None => LpOutcome::Stalled,
        Some(false) => LpOutcome::Unbounded,
        Some(true) => {
            let mut x = vec![S::zero(); n];
            for r in 0..m {
                if t.basis[r] < n {
                    x[t.basis[r]] = t.a[r][width];
                }
            }
            let value = lp
                .objective
                .iter()
                .zip(&x)
                .fold(S::zero(), |acc, (c, v)| acc + *c * *v);
            LpOutcome::Optimal { value, x }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(o: LpOutcome<f64>) -> f64 {
        match o {
            LpOutcome::Optimal { value, .. } => value,
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let mut lp = LinearProgram::<f64>::new(2);
        lp.objective = vec![-3.0, -5.0];
        lp.push(vec![(0, 1.0)], Sense::Le, 4.0);
        lp.push(vec![(1, 2.0)], Sense::Le, 12.0);
        lp.push(vec![(0, 3.0), (1, 2.0)], Sense::Le, 18.0);
        match solve(&lp) {
            LpOutcome::Optimal { value, x } => {
                assert!((value + 36.0).abs() < 1e-9);
                assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y st x + y = 10, x >= 3, y >= 2 -> 12 at (8, 2)
        let mut lp = LinearProgram::<f64>::new(2);
        lp.objective = vec![1.0, 2.0];
        lp.push(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 10.0);
        lp.push(vec![(0, 1.0)], Sense::Ge, 3.0);
        lp.push(vec![(1, 1.0)], Sense::Ge, 2.0);
        assert!((value(solve(&lp)) - 12.0).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // min x st -x <= -5 -> 5
        let mut lp = LinearProgram::<f64>::new(1);
        lp.objective = vec![1.0];
        lp.push(vec![(0, -1.0)], Sense::Le, -5.0);
        assert!((value(solve(&lp)) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::<f64>::new(1);
        lp.objective = vec![1.0];
        lp.push(vec![(0, 1.0)], Sense::Le, 1.0);
        lp.push(vec![(0, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve(&lp), LpOutcome::Infeasible);

        let mut lp = LinearProgram::<f64>::new(2);
        lp.objective = vec![-1.0, 0.0];
        lp.push(vec![(0, 1.0), (1, -1.0)], Sense::Le, 1.0);
        assert_eq!(solve(&lp), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // classic cycling example under Dantzig's rule without safeguards
        let mut lp = LinearProgram::<f64>::new(4);
        lp.objective = vec![-0.75, 150.0, -0.02, 6.0];
        lp.push(
            vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)],
            Sense::Le,
            0.0,
        );
        lp.push(
            vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)],
            Sense::Le,
            0.0,
        );
        lp.push(vec![(2, 1.0)], Sense::Le, 1.0);
        assert!((value(solve(&lp)) + 0.05).abs() < 1e-9);
    }

    #[test]
    fn works_in_single_precision() {
        let mut lp = LinearProgram::<f32>::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.push(vec![(0, 1.0), (1, 2.0)], Sense::Ge, 4.0);
        lp.push(vec![(0, 3.0), (1, 1.0)], Sense::Ge, 6.0);
        match solve(&lp) {
            LpOutcome::Optimal { value, .. } => assert!((value - 2.8).abs() < 1e-4),
            other => panic!("{other:?}"),
        }
    }
}
