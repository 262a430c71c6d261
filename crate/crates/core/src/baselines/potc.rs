use std::collections::BTreeMap;

use crate::domain::{ClusterState, NodeId};
use crate::scalar::{total, Scalar};

/// Power-of-two-choices routing state.
///
/// Each key has two candidate instances picked by two seeded hash
/// functions; a tuple goes to the less loaded of the two. Keys routed to
/// both candidates accumulate split state that has to be merged onto the
/// key's first candidate, which costs `merge_cost_factor` per unit of
/// state held by the second one.
#[derive(Clone, Debug, PartialEq)]
pub struct PotcState<S> {
    pub h1_seed: u64,
    pub h2_seed: u64,
    pub merge_interval_ticks: u32,
    pub merge_cost_factor: S,
    /// Per key: first-choice instance and the volume routed to each instance.
    routed: BTreeMap<u64, (NodeId, BTreeMap<NodeId, S>)>,
}

/// splitmix64 finalizer; stable across platforms and releases, unlike the
/// std hasher.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl<S: Scalar> PotcState<S> {
    pub fn new(seed: u64, merge_interval_ticks: u32, merge_cost_factor: S) -> Self {
        PotcState {
            h1_seed: mix(seed),
            h2_seed: mix(seed ^ 0x5bd1_e995),
            merge_interval_ticks: merge_interval_ticks.max(1),
            merge_cost_factor,
            routed: BTreeMap::new(),
        }
    }

    /// The two candidate instances of `key` among `instances` (sorted).
    pub fn candidates(&self, key: u64, instances: &[NodeId]) -> Option<(NodeId, NodeId)> {
        if instances.is_empty() {
            return None;
        }
        let n = instances.len() as u64;
        let pick = |seed: u64| instances[(mix(key ^ seed) % n) as usize];
        Some((pick(self.h1_seed), pick(self.h2_seed)))
    }

    /// Routes one unit of `volume` for `key` to the less loaded of its two
    /// candidates among the keys of `downstream_loads`; ties go to the first
    /// candidate. Returns `None` only when there are no instances.
    pub fn route(
        &mut self,
        key: u64,
        volume: S,
        downstream_loads: &BTreeMap<NodeId, S>,
    ) -> Option<NodeId> {
        let instances: Vec<NodeId> = downstream_loads.keys().copied().collect();
        let (a, b) = self.candidates(key, &instances)?;
        let target = if downstream_loads[&b].definitely_lt(downstream_loads[&a]) {
            b
        } else {
            a
        };
        let entry = self
            .routed
            .entry(key)
            .or_insert_with(|| (a, BTreeMap::new()));
        let slot = entry.1.entry(target).or_insert(S::zero());
        *slot = *slot + volume;
        Some(target)
    }

    /// Instances currently holding state for `key`.
    pub fn instances_of(&self, key: u64) -> Vec<NodeId> {
        self.routed
            .get(&key)
            .map(|(_, v)| v.keys().copied().collect())
            .unwrap_or_default()
    }

    /// Total state volume held away from each key's first candidate.
    pub fn split_volume(&self) -> S {
        total(
            self.routed
                .values()
                .flat_map(|(home, v)| v.iter().filter(move |(n, _)| *n != home).map(|(_, s)| *s)),
        )
    }

    /// Load added to each node of `cluster` by merging split state onto the
    /// keys' first candidates. Linear in the split volume and deliberately
    /// unbalanced: whoever is the first candidate pays.
    pub fn merge_load(&self, cluster: &ClusterState<S>) -> BTreeMap<NodeId, S> {
        let mut out: BTreeMap<NodeId, S> = cluster.nodes().map(|n| (n.id, S::zero())).collect();
        for (home, volumes) in self.routed.values() {
            let split = volumes
                .iter()
                .filter(|(n, _)| *n != home)
                .fold(S::zero(), |a, (_, s)| a + *s);
            if split > S::zero() {
                if let Some(slot) = out.get_mut(home) {
                    *slot = *slot + self.merge_cost_factor * split;
                }
            }
        }
        out
    }

    /// Whether `tick` is a merge tick.
    pub fn is_merge_tick(&self, tick: u64) -> bool {
        tick.is_multiple_of(u64::from(self.merge_interval_ticks))
    }

    /// Forgets all routing history after a merge.
    pub fn clear(&mut self) {
        self.routed.clear();
    }
}
