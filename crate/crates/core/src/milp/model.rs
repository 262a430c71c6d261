use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::domain::{AllocationPlan, ClusterState, KeyGroupId, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats;

use super::{Budget, CollocationConstraint, MilpConfig};

#[derive(Clone, Debug)]
pub struct ModelNode<S> {
    pub id: NodeId,
    pub weight: S,
    pub kill: bool,
}

#[derive(Clone, Debug)]
pub struct ModelGroup<S> {
    pub id: KeyGroupId,
    pub load: S,
    /// Cost in budget units (migration cost, or 1 when counting migrations).
    pub cost: S,
    /// Index of the node currently holding the group (`q`).
    pub home: usize,
}

/// Key groups that must be placed on the same node.
#[derive(Clone, Debug)]
pub struct Unit<S> {
    /// Indices into the model's groups, ascending.
    pub members: Vec<usize>,
    pub load: S,
    pub total_cost: S,
    /// Node indices the unit may be placed on, ascending.
    pub allowed: Vec<usize>,
    home_costs: Vec<(usize, S)>,
}

impl<S: Scalar> Unit<S> {
    /// Budget consumed by placing the unit on node `node`.
    #[inline]
    pub fn cost_at(&self, node: usize) -> S {
        let stay = self
            .home_costs
            .iter()
            .find(|(n, _)| *n == node)
            .map_or(S::zero(), |(_, c)| *c);
        self.total_cost - stay
    }
}

/// The balancing MILP for one cluster snapshot.
///
/// Binary `x[i][k]` places key group k on node i; `q` is the current
/// placement. Continuous `d, d_u, d_l >= 0`:
///
/// ```text
/// min  w1*d - w2*(d_u + d_l) + w_drain * sum_{i in B} load_i
///  s.t. sum_i x[i][k] = 1                                   for every k
///       sum_{i,k} (1 - q[i][k]) * x[i][k] * mc_k <= budget
///       load_i <= mean + d - d_u                            for every i
///       load_i >= mean - d + d_l                            for i in A
///       d <= mean
/// ```
///
/// with `load_i = weight_i * sum_k gLoad_k * x[i][k]`. Collocation
/// constraints add equalities between members of a unit and fix pinned
/// units; nodes in B accept no inbound migrations.
#[derive(Clone, Debug)]
pub struct MilpModel<S> {
    pub(crate) cluster: ClusterState<S>,
    pub(crate) config: MilpConfig<S>,
    pub(crate) nodes: Vec<ModelNode<S>>,
    pub(crate) groups: Vec<ModelGroup<S>>,
    pub(crate) units: Vec<Unit<S>>,
    /// Unit index of every group.
    pub(crate) unit_of: Vec<usize>,
    pub(crate) pins: BTreeMap<usize, usize>,
    pub(crate) mean: S,
    pub(crate) budget: Option<S>,
}

/// Objective and deviation variables of one complete assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<S> {
    pub d: S,
    pub d_u: S,
    pub d_l: S,
    /// Weighted load left on nodes marked for removal.
    pub drain: S,
    pub cost: S,
    pub objective: S,
    pub feasible: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Var {
    X(NodeId, KeyGroupId),
    D,
    Du,
    Dl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    /// (1)
    Assignment(KeyGroupId),
    /// (2)
    Budget,
    /// (3)
    MaxLoad(NodeId),
    /// (4)
    MinLoad(NodeId),
    /// (5)
    DeviationBound,
    /// Collocation: `x[i][member] = x[i][anchor]`.
    Together {
        node: NodeId,
        anchor: KeyGroupId,
        member: KeyGroupId,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint<S> {
    pub kind: ConstraintKind,
    pub terms: Vec<(Var, S)>,
    pub sense: Sense,
    pub rhs: S,
}

/// Hook for per-resource capacity rows on non-bottleneck resources. The
/// model only balances the bottleneck resource; implementors may append
/// rows to the debugging dump.
pub trait ResourceConstraint<S> {
    fn rows(&self, model: &MilpModel<S>) -> Vec<LinearConstraint<S>>;
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as representative
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

impl<S: Scalar> MilpModel<S> {
    pub fn build(
        cluster: &ClusterState<S>,
        config: &MilpConfig<S>,
        extra: &[CollocationConstraint],
    ) -> Result<Self> {
        config.validate()?;
        let mean = stats::mean_load(cluster)?;

        let nodes: Vec<ModelNode<S>> = cluster
            .nodes()
            .map(|n| ModelNode {
                id: n.id,
                weight: n.capacity_weight,
                kill: n.kill,
            })
            .collect();
        let node_index: BTreeMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();

        let groups: Vec<ModelGroup<S>> = cluster
            .stats()
            .values()
            .map(|s| ModelGroup {
                id: s.id,
                load: s.load,
                cost: match config.budget {
                    Budget::Migrations(_) => S::one(),
                    _ => s.migr_cost,
                },
                home: node_index[&cluster.allocation()[&s.id]],
            })
            .collect();
        let group_index: BTreeMap<KeyGroupId, usize> =
            groups.iter().enumerate().map(|(i, g)| (g.id, i)).collect();

        // merge overlapping constraints into units, collect pins per group
        let mut uf = UnionFind::new(groups.len());
        let mut group_pins: BTreeMap<usize, NodeId> = BTreeMap::new();
        for c in extra {
            let mut members = Vec::with_capacity(c.groups.len());
            for g in &c.groups {
                members.push(*group_index.get(g).ok_or(Error::UnknownKeyGroup(*g))?);
            }
            if let Some(target) = c.target {
                if !node_index.contains_key(&target) {
                    return Err(Error::UnknownNode(target));
                }
                for &m in &members {
                    if let Some(prev) = group_pins.insert(m, target) {
                        if prev != target {
                            return Err(Error::ConflictingPins {
                                group: groups[m].id,
                                first: prev,
                                second: target,
                            });
                        }
                    }
                }
            }
            for w in members.windows(2) {
                uf.union(w[0], w[1]);
            }
        }

        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for g in 0..groups.len() {
            by_root.entry(uf.find(g)).or_default().push(g);
        }
        let mut units = Vec::with_capacity(by_root.len());
        let mut unit_of = vec![0; groups.len()];
        let mut pins = BTreeMap::new();
        // roots are the smallest member, so BTreeMap order is min-member order
        for (_, members) in by_root {
            let u = units.len();
            let mut pin: Option<NodeId> = None;
            for &m in &members {
                unit_of[m] = u;
                if let Some(p) = group_pins.get(&m) {
                    match pin {
                        Some(prev) if prev != *p => {
                            return Err(Error::ConflictingPins {
                                group: groups[m].id,
                                first: prev,
                                second: *p,
                            })
                        }
                        _ => pin = Some(*p),
                    }
                }
            }
            let load = members.iter().fold(S::zero(), |a, &m| a + groups[m].load);
            let total_cost = members.iter().fold(S::zero(), |a, &m| a + groups[m].cost);
            let mut home_costs: Vec<(usize, S)> = Vec::new();
            for &m in &members {
                let h = groups[m].home;
                match home_costs.iter_mut().find(|(n, _)| *n == h) {
                    Some((_, c)) => *c = *c + groups[m].cost,
                    None => home_costs.push((h, groups[m].cost)),
                }
            }
            let allowed: Vec<usize> = (0..nodes.len())
                .filter(|&i| match pin {
                    Some(p) => nodes[i].id == p,
                    None => true,
                })
                .filter(|&i| {
                    // no inbound migrations into nodes marked for removal
                    !config.forbid_inbound_to_killed
                        || !nodes[i].kill
                        || members.iter().all(|&m| groups[m].home == i)
                })
                .collect();
            if let Some(p) = pin {
                pins.insert(u, node_index[&p]);
            }
            units.push(Unit {
                members,
                load,
                total_cost,
                allowed,
                home_costs,
            });
        }

        let budget = match config.budget {
            Budget::MigrCost(c) => Some(c),
            Budget::Migrations(n) => Some(S::from_count(n)),
            Budget::Unbounded => None,
        };

        Ok(MilpModel {
            cluster: cluster.clone(),
            config: config.clone(),
            nodes,
            groups,
            units,
            unit_of,
            pins,
            mean,
            budget,
        })
    }

    pub fn mean(&self) -> S {
        self.mean
    }

    pub fn config(&self) -> &MilpConfig<S> {
        &self.config
    }

    pub fn cluster(&self) -> &ClusterState<S> {
        &self.cluster
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    pub fn binary_count(&self) -> usize {
        self.nodes.len() * self.groups.len()
    }

    pub fn budget(&self) -> Option<S> {
        self.budget
    }

    /// Current placement expressed per unit: each unit goes to the allowed
    /// node that is cheapest to reach (ties to the lowest index).
    pub(crate) fn start_assignment(&self) -> Option<Vec<usize>> {
        self.units
            .iter()
            .map(|u| {
                u.allowed
                    .iter()
                    .copied()
                    .fold(None, |best: Option<(usize, S)>, i| {
                        let c = u.cost_at(i);
                        match best {
                            Some((_, bc)) if bc <= c => best,
                            _ => Some((i, c)),
                        }
                    })
                    .map(|(i, _)| i)
            })
            .collect()
    }

    /// Evaluates a complete unit assignment. Node loads are summed in key
    /// group id order so equal assignments give bit-identical results.
    pub fn evaluate(&self, assign: &[usize]) -> Evaluation<S> {
        let mut raw = vec![S::zero(); self.nodes.len()];
        let mut cost = S::zero();
        let mut allowed = true;
        for (g, group) in self.groups.iter().enumerate() {
            let node = assign[self.unit_of[g]];
            raw[node] = raw[node] + group.load;
            if node != group.home {
                cost = cost + group.cost;
            }
        }
        for (u, unit) in self.units.iter().enumerate() {
            if unit.allowed.binary_search(&assign[u]).is_err() {
                allowed = false;
            }
        }
        self.evaluate_loads(&raw, cost, allowed)
    }

    pub(crate) fn evaluate_loads(&self, raw: &[S], cost: S, allowed: bool) -> Evaluation<S> {
        let mut max_all = S::neg_infinity();
        let mut min_active = S::infinity();
        let mut drain = S::zero();
        for (node, r) in self.nodes.iter().zip(raw) {
            let l = *r * node.weight;
            max_all = max_all.max(l);
            if node.kill {
                drain = drain + l;
            } else {
                min_active = min_active.min(l);
            }
        }
        let upper = max_all - self.mean;
        let lower = self.mean - min_active;
        let d = upper.max(lower).max(S::zero());
        let d_u = d - upper;
        let d_l = d - lower;
        let c = &self.config;
        let objective = c.w1 * d - c.w2 * (d_u + d_l) + c.w_drain * drain;
        let within_budget = self.budget.is_none_or(|b| !b.definitely_lt(cost));
        let feasible = allowed && within_budget && !self.mean.definitely_lt(d);
        Evaluation {
            d,
            d_u,
            d_l,
            drain,
            cost,
            objective,
            feasible,
        }
    }

    /// Key-group level assignment for a unit assignment.
    pub(crate) fn group_assignment(&self, assign: &[usize]) -> BTreeMap<KeyGroupId, NodeId> {
        self.groups
            .iter()
            .enumerate()
            .map(|(g, group)| (group.id, self.nodes[assign[self.unit_of[g]]].id))
            .collect()
    }

    pub(crate) fn plan(&self, assign: &[usize]) -> Result<AllocationPlan<S>> {
        AllocationPlan::from_assignment(&self.cluster, self.group_assignment(assign))
    }

    /// The full constraint list at key-group granularity. Pins and the
    /// removal-node restriction are variable fixings, see [`Self::fixings`].
    pub fn constraints(&self) -> Vec<LinearConstraint<S>> {
        let mut rows = Vec::new();
        for g in &self.groups {
            rows.push(LinearConstraint {
                kind: ConstraintKind::Assignment(g.id),
                terms: self
                    .nodes
                    .iter()
                    .map(|n| (Var::X(n.id, g.id), S::one()))
                    .collect(),
                sense: Sense::Eq,
                rhs: S::one(),
            });
        }
        if let Some(b) = self.budget {
            let mut terms = Vec::new();
            for g in &self.groups {
                for (i, n) in self.nodes.iter().enumerate() {
                    if i != g.home {
                        terms.push((Var::X(n.id, g.id), g.cost));
                    }
                }
            }
            rows.push(LinearConstraint {
                kind: ConstraintKind::Budget,
                terms,
                sense: Sense::Le,
                rhs: b,
            });
        }
        for n in &self.nodes {
            let mut terms: Vec<(Var, S)> = self
                .groups
                .iter()
                .map(|g| (Var::X(n.id, g.id), g.load * n.weight))
                .collect();
            terms.push((Var::D, -S::one()));
            terms.push((Var::Du, S::one()));
            rows.push(LinearConstraint {
                kind: ConstraintKind::MaxLoad(n.id),
                terms,
                sense: Sense::Le,
                rhs: self.mean,
            });
        }
        for n in self.nodes.iter().filter(|n| !n.kill) {
            let mut terms: Vec<(Var, S)> = self
                .groups
                .iter()
                .map(|g| (Var::X(n.id, g.id), g.load * n.weight))
                .collect();
            terms.push((Var::D, S::one()));
            terms.push((Var::Dl, -S::one()));
            rows.push(LinearConstraint {
                kind: ConstraintKind::MinLoad(n.id),
                terms,
                sense: Sense::Ge,
                rhs: self.mean,
            });
        }
        rows.push(LinearConstraint {
            kind: ConstraintKind::DeviationBound,
            terms: vec![(Var::D, S::one())],
            sense: Sense::Le,
            rhs: self.mean,
        });
        for unit in self.units.iter().filter(|u| u.members.len() > 1) {
            let anchor = self.groups[unit.members[0]].id;
            for &m in &unit.members[1..] {
                let member = self.groups[m].id;
                for n in &self.nodes {
                    rows.push(LinearConstraint {
                        kind: ConstraintKind::Together {
                            node: n.id,
                            anchor,
                            member,
                        },
                        terms: vec![
                            (Var::X(n.id, member), S::one()),
                            (Var::X(n.id, anchor), -S::one()),
                        ],
                        sense: Sense::Eq,
                        rhs: S::zero(),
                    });
                }
            }
        }
        rows
    }

    /// Variables fixed by pins (`= 1`) or by the rule that nodes marked for
    /// removal accept no inbound key groups (`= 0`).
    pub fn fixings(&self) -> Vec<(Var, S)> {
        let mut out = BTreeSet::new();
        for (u, unit) in self.units.iter().enumerate() {
            for &m in &unit.members {
                let g = self.groups[m].id;
                for (i, n) in self.nodes.iter().enumerate() {
                    if unit.allowed.binary_search(&i).is_err() {
                        out.insert((Var::X(n.id, g), false));
                    } else if self.pins.get(&u) == Some(&i) {
                        out.insert((Var::X(n.id, g), true));
                    }
                }
            }
        }
        out.into_iter()
            .map(|(v, one)| (v, if one { S::one() } else { S::zero() }))
            .collect()
    }

    /// Renders the model in CPLEX LP text format, one constraint per line.
    pub fn to_lp_string(&self) -> String {
        self.to_lp_string_with(&[])
    }

    pub fn to_lp_string_with(&self, extensions: &[&dyn ResourceConstraint<S>]) -> String {
        fn var_name(v: &Var) -> String {
            match v {
                Var::X(n, g) => format!("x_{}_{}", n.0, g.0),
                Var::D => "d".into(),
                Var::Du => "d_u".into(),
                Var::Dl => "d_l".into(),
            }
        }
        fn expr<S: Scalar>(terms: &[(Var, S)]) -> String {
            let mut s = String::new();
            for (i, (v, c)) in terms.iter().enumerate() {
                let (sign, mag) = if *c < S::zero() {
                    ("-", -*c)
                } else {
                    ("+", *c)
                };
                if i == 0 {
                    if sign == "-" {
                        s.push_str("- ");
                    }
                } else {
                    let _ = write!(s, " {sign} ");
                }
                let _ = write!(s, "{mag} {}", var_name(v));
            }
            s
        }

        let c = &self.config;
        let mut obj = vec![(Var::D, c.w1), (Var::Du, -c.w2), (Var::Dl, -c.w2)];
        if c.w_drain > S::zero() {
            for n in self.nodes.iter().filter(|n| n.kill) {
                for g in &self.groups {
                    obj.push((Var::X(n.id, g.id), c.w_drain * g.load * n.weight));
                }
            }
        }

        let mut out = String::new();
        out.push_str("\\ key-group allocation model\n");
        let _ = writeln!(out, "\\ mean = {}", self.mean);
        out.push_str("Minimize\n");
        let _ = writeln!(out, " obj: {}", expr(&obj));
        out.push_str("Subject To\n");
        let mut rows = self.constraints();
        for ext in extensions {
            rows.extend(ext.rows(self));
        }
        for (i, r) in rows.iter().enumerate() {
            let name = match r.kind {
                ConstraintKind::Assignment(g) => format!("assign_{}", g.0),
                ConstraintKind::Budget => "budget".into(),
                ConstraintKind::MaxLoad(n) => format!("max_load_{}", n.0),
                ConstraintKind::MinLoad(n) => format!("min_load_{}", n.0),
                ConstraintKind::DeviationBound => "dev_bound".into(),
                ConstraintKind::Together { node, member, .. } => {
                    format!("together_{}_{}_{i}", node.0, member.0)
                }
            };
            let sense = match r.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {name}: {} {sense} {}", expr(&r.terms), r.rhs);
        }
        out.push_str("Bounds\n");
        for (v, val) in self.fixings() {
            let _ = writeln!(out, " {} = {val}", var_name(&v));
        }
        out.push_str(" d >= 0\n d_u >= 0\n d_l >= 0\n");
        out.push_str("Binaries\n");
        for n in &self.nodes {
            for g in &self.groups {
                let _ = writeln!(out, " {}", var_name(&Var::X(n.id, g.id)));
            }
        }
        out.push_str("End\n");
        out
    }
}
