//! Balanced k-way graph partitioning with small edge cuts.
//!
//! Each restart grows parts greedily from a seed vertex (the first restart
//! seeds at the heaviest edge), repairs any balance violation, then refines
//! with Fiduccia–Mattheyses passes (single-vertex moves with rollback to the
//! best prefix) and Kernighan–Lin pair swaps. The best restart wins.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::KeyGroupId;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Undirected graph over key groups with vertex and edge weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedGraph<S> {
    vertices: BTreeMap<KeyGroupId, S>,
    /// Keyed by `(min, max)` endpoint.
    edges: BTreeMap<(KeyGroupId, KeyGroupId), S>,
}

impl<S: Scalar> WeightedGraph<S> {
    pub fn new() -> Self {
        WeightedGraph {
            vertices: BTreeMap::new(),
            edges: BTreeMap::new(),
        }
    }

    pub fn add_vertex(&mut self, id: KeyGroupId, weight: S) {
        self.vertices.insert(id, weight.max(S::zero()));
    }

    /// Adds `weight` to the undirected edge `{a, b}`.
    pub fn add_edge(&mut self, a: KeyGroupId, b: KeyGroupId, weight: S) -> Result<()> {
        if a == b {
            return Err(Error::InvalidConfig(format!("self-loop on {a}")));
        }
        for v in [a, b] {
            if !self.vertices.contains_key(&v) {
                return Err(Error::UnknownKeyGroup(v));
            }
        }
        if weight > S::zero() {
            let e = self.edges.entry((a.min(b), a.max(b))).or_insert(S::zero());
            *e = *e + weight;
        }
        Ok(())
    }

    pub fn vertices(&self) -> &BTreeMap<KeyGroupId, S> {
        &self.vertices
    }

    pub fn edges(&self) -> &BTreeMap<(KeyGroupId, KeyGroupId), S> {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn total_weight(&self) -> S {
        self.vertices.values().fold(S::zero(), |a, w| a + *w)
    }

    /// Total weight of edges whose endpoints lie in different parts.
    /// Vertices missing from every part count as their own part.
    pub fn cut_weight(&self, parts: &[BTreeSet<KeyGroupId>]) -> S {
        let mut part_of = BTreeMap::new();
        for (p, set) in parts.iter().enumerate() {
            for v in set {
                part_of.insert(*v, p);
            }
        }
        self.edges
            .iter()
            .filter(|((a, b), _)| !part_of.contains_key(a) || part_of.get(a) != part_of.get(b))
            .fold(S::zero(), |acc, (_, w)| acc + *w)
    }
}

/// Balance limit for one part: `(1 + tol) * total / parts`.
pub fn part_capacity<S: Scalar>(total: S, parts: usize, imbalance_tol: S) -> S {
    (S::one() + imbalance_tol) * total / S::from_count(parts)
}

struct Work<S> {
    weight: Vec<S>,
    adj: Vec<Vec<(usize, S)>>,
    k: usize,
    cap: S,
}

#[derive(Clone)]
struct Layout<S> {
    part: Vec<usize>,
    load: Vec<S>,
    count: Vec<usize>,
    /// `conn[v][p]`: edge weight from `v` into part `p`.
    conn: Vec<Vec<S>>,
}

impl<S: Scalar> Work<S> {
    fn layout(&self, part: Vec<usize>) -> Layout<S> {
        let n = self.weight.len();
        let mut load = vec![S::zero(); self.k];
        let mut count = vec![0; self.k];
        let mut conn = vec![vec![S::zero(); self.k]; n];
        for v in 0..n {
            load[part[v]] = load[part[v]] + self.weight[v];
            count[part[v]] += 1;
            for &(u, w) in &self.adj[v] {
                conn[v][part[u]] = conn[v][part[u]] + w;
            }
        }
        Layout {
            part,
            load,
            count,
            conn,
        }
    }

    fn shift(&self, l: &mut Layout<S>, v: usize, to: usize) {
        let from = l.part[v];
        l.load[from] = l.load[from] - self.weight[v];
        l.load[to] = l.load[to] + self.weight[v];
        l.count[from] -= 1;
        l.count[to] += 1;
        l.part[v] = to;
        for &(u, w) in &self.adj[v] {
            l.conn[u][from] = l.conn[u][from] - w;
            l.conn[u][to] = l.conn[u][to] + w;
        }
    }

    fn overweight(&self, l: &Layout<S>) -> S {
        l.load
            .iter()
            .fold(S::zero(), |acc, &x| acc + (x - self.cap).max(S::zero()))
    }

    fn cut(&self, l: &Layout<S>) -> S {
        let mut c = S::zero();
        for v in 0..self.weight.len() {
            for &(u, w) in &self.adj[v] {
                if u > v && l.part[u] != l.part[v] {
                    c = c + w;
                }
            }
        }
        c
    }

    fn fits(&self, l: &Layout<S>, to: usize, extra: S) -> bool {
        !self.cap.definitely_lt(l.load[to] + extra)
    }

    /// Grows parts one after another from seed vertices.
    fn grow(&self, rng: &mut ChaCha8Rng, heaviest_seed: bool) -> Vec<usize> {
        let n = self.weight.len();
        let unset = usize::MAX;
        let mut part = vec![unset; n];
        let total = self.weight.iter().fold(S::zero(), |a, w| a + *w);
        let mut remaining = n;
        for p in 0..self.k - 1 {
            let target = total / S::from_count(self.k);
            let free: Vec<usize> = (0..n).filter(|&v| part[v] == unset).collect();
            let seed = if heaviest_seed {
                let mut best: Vec<usize> = Vec::new();
                let mut best_w = S::neg_infinity();
                for &v in &free {
                    for &(u, w) in &self.adj[v] {
                        if part[u] != unset {
                            continue;
                        }
                        if w.definitely_lt(best_w) {
                            continue;
                        }
                        if best_w.definitely_lt(w) {
                            best.clear();
                            best_w = w;
                        }
                        best.push(v);
                    }
                }
                best.choose(rng).copied().unwrap_or(free[0])
            } else {
                free[rng.gen_range(0..free.len())]
            };
            part[seed] = p;
            remaining -= 1;
            let mut load = self.weight[seed];
            let mut gain = vec![S::zero(); n];
            for &(u, w) in &self.adj[seed] {
                gain[u] = gain[u] + w;
            }
            let parts_left = self.k - 1 - p;
            while load.definitely_lt(target) && remaining > parts_left {
                // most connected free vertex that does not overshoot the cap
                let mut pick: Option<usize> = None;
                for v in 0..n {
                    if part[v] != unset || !(load + self.weight[v] <= self.cap) {
                        continue;
                    }
                    pick = match pick {
                        Some(b) if !gain[b].definitely_lt(gain[v]) => Some(b),
                        _ => Some(v),
                    };
                }
                let Some(v) = pick else { break };
                part[v] = p;
                remaining -= 1;
                load = load + self.weight[v];
                for &(u, w) in &self.adj[v] {
                    gain[u] = gain[u] + w;
                }
            }
        }
        for p in part.iter_mut() {
            if *p == unset {
                *p = self.k - 1;
            }
        }
        part
    }

    /// Moves vertices out of overweight parts, cheapest cut increase first.
    fn repair(&self, l: &mut Layout<S>) {
        let n = self.weight.len();
        for _ in 0..n * self.k {
            if self.overweight(l) <= S::zero() {
                return;
            }
            let mut best: Option<(usize, usize, S)> = None;
            for v in 0..n {
                let from = l.part[v];
                if l.count[from] <= 1 || !self.cap.definitely_lt(l.load[from]) {
                    continue;
                }
                for to in 0..self.k {
                    if to == from || !(l.load[to] + self.weight[v]).definitely_lt(l.load[from]) {
                        continue;
                    }
                    if !self.fits(l, to, self.weight[v]) && self.weight[v] > S::zero() {
                        continue;
                    }
                    let loss = l.conn[v][from] - l.conn[v][to];
                    if best.is_none_or(|(_, _, b)| loss.definitely_lt(b)) {
                        best = Some((v, to, loss));
                    }
                }
            }
            match best {
                Some((v, to, _)) => self.shift(l, v, to),
                None => return,
            }
        }
    }

    /// One FM pass; returns whether the cut improved. Moves may overshoot the
    /// cap by up to one vertex weight so a pass can walk through briefly
    /// unbalanced states, but only prefixes no more overweight than the start
    /// are kept.
    fn fm_pass(&self, l: &mut Layout<S>) -> bool {
        let n = self.weight.len();
        let slack = self.weight.iter().fold(S::zero(), |a, &w| a.max(w));
        let start_over = self.overweight(l);
        let mut locked = vec![false; n];
        let mut trail: Vec<(usize, usize)> = Vec::new();
        let mut running = S::zero();
        let mut best_gain = S::zero();
        let mut best_len = 0;
        for _ in 0..n {
            let mut pick: Option<(usize, usize, S)> = None;
            for v in 0..n {
                if locked[v] {
                    continue;
                }
                let from = l.part[v];
                if l.count[from] <= 1 {
                    continue;
                }
                for to in 0..self.k {
                    if to == from || (self.cap + slack).definitely_lt(l.load[to] + self.weight[v]) {
                        continue;
                    }
                    let g = l.conn[v][to] - l.conn[v][from];
                    if pick.is_none_or(|(_, _, b)| b.definitely_lt(g)) {
                        pick = Some((v, to, g));
                    }
                }
            }
            let Some((v, to, g)) = pick else { break };
            trail.push((v, l.part[v]));
            self.shift(l, v, to);
            locked[v] = true;
            running = running + g;
            if best_gain.definitely_lt(running) && !start_over.definitely_lt(self.overweight(l)) {
                best_gain = running;
                best_len = trail.len();
            }
        }
        for &(v, from) in trail[best_len..].iter().rev() {
            self.shift(l, v, from);
        }
        best_len > 0
    }

    /// Best improving swap of two vertices in different parts.
    fn swap_once(&self, l: &mut Layout<S>) -> bool {
        let n = self.weight.len();
        let boundary: Vec<usize> = (0..n)
            .filter(|&v| self.adj[v].iter().any(|&(u, _)| l.part[u] != l.part[v]))
            .collect();
        let mut best: Option<(usize, usize, S)> = None;
        for (i, &a) in boundary.iter().enumerate() {
            for &b in &boundary[i + 1..] {
                let (pa, pb) = (l.part[a], l.part[b]);
                if pa == pb {
                    continue;
                }
                let dw = self.weight[b] - self.weight[a];
                if !self.fits(l, pa, dw) || !self.fits(l, pb, -dw) {
                    continue;
                }
                let wab = self.adj[a]
                    .iter()
                    .find(|&&(u, _)| u == b)
                    .map_or(S::zero(), |&(_, w)| w);
                let g = l.conn[a][pb] - l.conn[a][pa] + l.conn[b][pa] - l.conn[b][pb] - wab - wab;
                if S::zero().definitely_lt(g) && best.is_none_or(|(_, _, bg)| bg.definitely_lt(g)) {
                    best = Some((a, b, g));
                }
            }
        }
        match best {
            Some((a, b, _)) => {
                let (pa, pb) = (l.part[a], l.part[b]);
                self.shift(l, a, pb);
                self.shift(l, b, pa);
                true
            }
            None => false,
        }
    }

    fn refine(&self, l: &mut Layout<S>) {
        for _ in 0..64 {
            let moved = self.fm_pass(l);
            let swapped = self.boundary_small(l) && self.swap_once(l);
            if !moved && !swapped {
                break;
            }
        }
    }

    /// Pair swaps are quadratic in the boundary size; skip them on large
    /// boundaries where single moves have enough room.
    fn boundary_small(&self, l: &Layout<S>) -> bool {
        let n = self.weight.len();
        (0..n)
            .filter(|&v| self.adj[v].iter().any(|&(u, _)| l.part[u] != l.part[v]))
            .count()
            <= 400
    }
}

/// Splits `graph` into exactly `parts` non-empty vertex sets, keeping every
/// part's weight within `(1 + imbalance_tol) * total / parts` where any
/// arrangement allows it, and heuristically minimizing the edge cut.
pub fn balanced_partition<S: Scalar>(
    graph: &WeightedGraph<S>,
    parts: usize,
    imbalance_tol: S,
    seed: u64,
) -> Result<Vec<BTreeSet<KeyGroupId>>> {
    let n = graph.vertex_count();
    if parts == 0 || parts > n {
        return Err(Error::InvalidPartitionCount { parts, vertices: n });
    }
    let ids: Vec<KeyGroupId> = graph.vertices.keys().copied().collect();
    if parts == 1 {
        return Ok(vec![ids.into_iter().collect()]);
    }
    if parts == n {
        return Ok(ids.into_iter().map(|v| BTreeSet::from([v])).collect());
    }
    let index: BTreeMap<KeyGroupId, usize> = ids.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let mut adj = vec![Vec::new(); n];
    for (&(a, b), &w) in &graph.edges {
        let (ia, ib) = (index[&a], index[&b]);
        adj[ia].push((ib, w));
        adj[ib].push((ia, w));
    }
    let work = Work {
        weight: graph.vertices.values().copied().collect(),
        adj,
        k: parts,
        cap: part_capacity(graph.total_weight(), parts, imbalance_tol),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // restarts are nearly free on small graphs, where one bad grow seed
    // traps single-vertex moves behind a tight balance cap
    let restarts = if n <= 16 {
        64
    } else if n <= 64 {
        12
    } else if n <= 256 {
        4
    } else {
        2
    };
    let better = |over: S, cut: S, best: &Option<(S, S, Layout<S>)>| match best {
        None => true,
        Some((bo, bc, _)) => {
            over.definitely_lt(*bo) || (!bo.definitely_lt(over) && cut.definitely_lt(*bc))
        }
    };
    let mut best: Option<(S, S, Layout<S>)> = None;
    for r in 0..restarts {
        let mut layout = work.layout(work.grow(&mut rng, r == 0));
        work.repair(&mut layout);
        work.refine(&mut layout);
        work.repair(&mut layout);
        let (over, cut) = (work.overweight(&layout), work.cut(&layout));
        if better(over, cut, &best) {
            best = Some((over, cut, layout));
        }
    }
    // iterated local search on small graphs: kick a few vertices of the best
    // layout into random parts and refine again
    let kicks = if n <= 24 { 4 * n } else { 0 };
    for _ in 0..kicks {
        let mut layout = best.as_ref().expect("at least one restart").2.clone();
        for _ in 0..rng.gen_range(2..=3) {
            let v = rng.gen_range(0..n);
            let to = rng.gen_range(0..parts);
            if to != layout.part[v] && layout.count[layout.part[v]] > 1 {
                work.shift(&mut layout, v, to);
            }
        }
        work.repair(&mut layout);
        work.refine(&mut layout);
        work.repair(&mut layout);
        let (over, cut) = (work.overweight(&layout), work.cut(&layout));
        if better(over, cut, &best) {
            best = Some((over, cut, layout));
        }
    }
    let part = best.expect("at least one restart").2.part;
    let mut out = vec![BTreeSet::new(); parts];
    for (v, p) in part.into_iter().enumerate() {
        out[p].insert(ids[v]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(ids: &[u32], edges: &[(u32, u32, f64)]) -> WeightedGraph<f64> {
        let mut graph = WeightedGraph::new();
        for &v in ids {
            graph.add_vertex(KeyGroupId(v), 1.0);
        }
        for &(a, b, w) in edges {
            graph.add_edge(KeyGroupId(a), KeyGroupId(b), w).unwrap();
        }
        graph
    }

    fn set(ids: &[u32]) -> BTreeSet<KeyGroupId> {
        ids.iter().map(|&i| KeyGroupId(i)).collect()
    }

    #[test]
    fn two_heavy_pairs_split_on_light_edge() {
        let graph = g(&[1, 2, 3, 4], &[(1, 2, 10.0), (3, 4, 10.0), (2, 3, 1.0)]);
        let mut parts = balanced_partition(&graph, 2, 0.1, 3).unwrap();
        parts.sort();
        assert_eq!(parts, vec![set(&[1, 2]), set(&[3, 4])]);
        assert_eq!(graph.cut_weight(&parts), 1.0);
    }

    #[test]
    fn trivial_part_counts() {
        let graph = g(&[1, 2, 3], &[(1, 2, 2.0), (2, 3, 5.0)]);
        let one = balanced_partition(&graph, 1, 0.1, 0).unwrap();
        assert_eq!(one, vec![set(&[1, 2, 3])]);
        assert_eq!(graph.cut_weight(&one), 0.0);
        let all = balanced_partition(&graph, 3, 0.1, 0).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(graph.cut_weight(&all), 7.0);
    }

    #[test]
    fn too_many_parts_is_an_error() {
        let graph = g(&[1, 2], &[]);
        assert!(matches!(
            balanced_partition(&graph, 3, 0.1, 0),
            Err(Error::InvalidPartitionCount {
                parts: 3,
                vertices: 2
            })
        ));
    }

    #[test]
    fn rejects_self_loops_and_unknown_vertices() {
        let mut graph = g(&[1], &[]);
        assert!(graph.add_edge(KeyGroupId(1), KeyGroupId(1), 1.0).is_err());
        assert!(graph.add_edge(KeyGroupId(1), KeyGroupId(9), 1.0).is_err());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ids: Vec<u32> = (0..40).collect();
        let edges: Vec<(u32, u32, f64)> = (0..80)
            .map(|_| {
                (
                    rng.gen_range(0..20),
                    rng.gen_range(20..40),
                    rng.gen_range(1.0..9.0),
                )
            })
            .collect();
        let graph = g(&ids, &edges);
        let a = balanced_partition(&graph, 4, 0.1, 11).unwrap();
        let b = balanced_partition(&graph, 4, 0.1, 11).unwrap();
        assert_eq!(a, b);
        let cap = part_capacity(40.0, 4, 0.1);
        assert!(a.iter().all(|p| !p.is_empty() && p.len() as f64 <= cap));
    }
}
