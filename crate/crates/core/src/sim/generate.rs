use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::cola_allocate;
use crate::domain::{
    ClusterState, CostModel, KeyGroupId, KeyGroupStat, NodeDescriptor, NodeId, OperatorId,
    TrafficMatrix,
};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::stats::{self, QualifyingFlow};

use super::config::{Pattern, Placement, ScenarioConfig};
use super::tape::{TapeEvent, Target, WorkloadTape};

/// A generated scenario. The cluster's key-group loads are compute loads;
/// communication surcharges are added on top by [`Scenario::effective`].
#[derive(Clone, Debug)]
pub struct Scenario<S> {
    pub cluster: ClusterState<S>,
    pub traffic: TrafficMatrix<S>,
    pub tape: WorkloadTape<S>,
    /// Serialization (and, equally, deserialization) load per unit of rate
    /// on a remote high-traffic flow.
    pub comm_factor: S,
    pub qualifying: Vec<QualifyingFlow<S>>,
}

impl<S: Scalar> Scenario<S> {
    /// `compute` with communication surcharges for its current placement.
    pub fn effective(&self, compute: &ClusterState<S>) -> ClusterState<S> {
        if self.comm_factor <= S::zero() {
            return compute.clone();
        }
        let mut extra: BTreeMap<KeyGroupId, S> = BTreeMap::new();
        for f in &self.qualifying {
            if compute.node_of(f.src) != compute.node_of(f.dst) {
                let s = self.comm_factor * f.rate;
                for g in [f.src, f.dst] {
                    let e = extra.entry(g).or_insert(S::zero());
                    *e = *e + s;
                }
            }
        }
        compute.map_stats(|st| st.load + extra.get(&st.id).copied().unwrap_or(S::zero()))
    }
}

fn group_id(cfg: &ScenarioConfig, op: usize, j: usize) -> KeyGroupId {
    KeyGroupId((op * cfg.key_groups_per_operator + j) as u32)
}

/// Picks `round(share * n)` of `pool` (at least one when share > 0).
fn pick<T: Copy>(pool: &[T], share: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    if share <= 0.0 || pool.is_empty() {
        return Vec::new();
    }
    let m = ((share * pool.len() as f64).round() as usize).clamp(1, pool.len());
    let mut v = pool.to_vec();
    v.shuffle(rng);
    v.truncate(m);
    v
}

fn traffic_for<S: Scalar>(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> TrafficMatrix<S> {
    let k = cfg.key_groups_per_operator;
    let rate = S::lit(cfg.rate_per_group);
    let mut t = TrafficMatrix::new();
    for op in 0..cfg.operators.saturating_sub(1) {
        let (up, down) = (op, op + 1);
        t.add_operator_edge(OperatorId(up as u32), OperatorId(down as u32));
        let spread = |t: &mut TrafficMatrix<S>, j: usize| {
            for d in 0..k {
                t.set_rate(
                    group_id(cfg, up, j),
                    group_id(cfg, down, d),
                    rate / S::from_count(k),
                );
            }
        };
        match cfg.pattern {
            Pattern::FullPartitioning => (0..k).for_each(|j| spread(&mut t, j)),
            Pattern::OneToOne => {
                let all: Vec<usize> = (0..k).collect();
                let dominant = pick(&all, cfg.collocatable_percent / 100.0, rng);
                for j in 0..k {
                    if dominant.contains(&j) {
                        t.set_rate(group_id(cfg, up, j), group_id(cfg, down, j), rate);
                    } else {
                        spread(&mut t, j);
                    }
                }
            }
            Pattern::PartialPartitioning { degree } => {
                for j in 0..k {
                    for s in 0..degree {
                        t.set_rate(
                            group_id(cfg, up, j),
                            group_id(cfg, down, (j + s) % k),
                            rate / S::from_count(degree),
                        );
                    }
                }
            }
            Pattern::PartialMerge { degree } => {
                for j in 0..k {
                    t.set_rate(
                        group_id(cfg, up, j),
                        group_id(cfg, down, (j / degree) % k),
                        rate,
                    );
                }
            }
        }
    }
    t
}

/// Builds the initial cluster, the traffic matrix and the workload tape.
/// Everything is drawn from one generator seeded with `config.seed`.
pub fn generate_scenario<S: Scalar>(config: &ScenarioConfig) -> Result<Scenario<S>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.nodes;
    let total_groups = config.group_count();
    let mean_group = config.mean_node_load * n as f64 / total_groups as f64;
    let cost_model = CostModel {
        alpha_per_kb: S::lit(1.0 / 1024.0),
    };

    let mut groups = Vec::with_capacity(total_groups);
    for op in 0..config.operators {
        for j in 0..config.key_groups_per_operator {
            let load = mean_group * (1.0 + rng.gen_range(-0.05..=0.05));
            let mb = config.state_size_mb * rng.gen_range(0.5..=1.5);
            groups.push(KeyGroupStat::new(
                group_id(config, op, j),
                OperatorId(op as u32),
                S::lit(load),
                S::lit(mb * 1024.0 * 1024.0),
                &cost_model,
            ));
        }
    }

    let placement: Vec<NodeId> = match config.placement {
        Placement::WorstCase => (0..total_groups)
            .map(|i| {
                let (op, j) = (
                    i / config.key_groups_per_operator,
                    i % config.key_groups_per_operator,
                );
                NodeId(((j + op) % n) as u32)
            })
            .collect(),
        Placement::Random | Placement::Cola => {
            let mut order: Vec<usize> = (0..total_groups).collect();
            order.shuffle(&mut rng);
            let mut p = vec![NodeId(0); total_groups];
            for (slot, i) in order.into_iter().enumerate() {
                p[i] = NodeId((slot % n) as u32);
            }
            p
        }
    };
    let nodes: Vec<NodeDescriptor<S>> = (0..n)
        .map(|i| {
            let d = NodeDescriptor::new(NodeId(i as u32));
            if i >= n - config.killed_nodes {
                d.killed()
            } else {
                d
            }
        })
        .collect();
    let mut cluster =
        ClusterState::new(nodes, groups.into_iter().zip(placement).collect::<Vec<_>>())?;
    let active: Vec<NodeId> = cluster.active_nodes().map(|d| d.id).collect();

    // initial load skew: half of the chosen nodes gain, half lose, each on a
    // random half of their key groups
    for step in config.varies_schedule.iter().filter(|s| s.tick == 0) {
        let chosen = pick(&active, config.jitter_node_share, &mut rng);
        for (i, node) in chosen.iter().enumerate() {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let mut on = cluster.groups_on(*node);
            on.shuffle(&mut rng);
            on.truncate(on.len().div_ceil(2));
            if on.is_empty() {
                continue;
            }
            let share = S::lit(sign * 0.5 * step.varies) / S::from_count(on.len());
            for g in on {
                let load = (cluster.stats()[&g].load + share).max(S::zero());
                cluster.set_group_load(g, load)?;
            }
        }
    }

    for node in active.iter().take(config.overloaded_nodes) {
        let on = cluster.groups_on(*node);
        let current = on
            .iter()
            .fold(S::zero(), |a, g| a + cluster.stats()[g].load);
        if on.is_empty() || current <= S::zero() {
            continue;
        }
        let factor = S::lit(config.overload_load) / current;
        for g in on {
            let load = cluster.stats()[&g].load * factor;
            cluster.set_group_load(g, load)?;
        }
    }

    let traffic = traffic_for::<S>(config, &mut rng);

    let mut events = Vec::new();
    for step in config.varies_schedule.iter().filter(|s| s.tick > 0) {
        let chosen = pick(&active, config.jitter_node_share, &mut rng);
        for (i, node) in chosen.iter().enumerate() {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            events.push(TapeEvent {
                tick: step.tick,
                target: Target::Node(*node),
                delta: S::lit(sign * 0.5 * step.varies),
            });
        }
    }
    if config.jitter_percent > 0.0 {
        let rounds = config.total_ticks / config.spl_ticks;
        let j = config.jitter_percent / 100.0;
        for r in 1..rounds {
            let tick = r * config.spl_ticks + 1;
            for node in pick(&active, config.jitter_node_share, &mut rng) {
                let delta = config.mean_node_load * rng.gen_range(-j..=j);
                events.push(TapeEvent {
                    tick,
                    target: Target::Node(node),
                    delta: S::lit(delta),
                });
            }
        }
    }
    let tape = WorkloadTape::new(events);

    if config.placement == Placement::Cola {
        let max_ld = S::lit(config.optimizer.max_ld);
        let plan = cola_allocate(&cluster, &traffic, max_ld, config.seed)?.plan;
        cluster = cluster.apply_plan(&plan)?;
    }

    let comm_factor = if config.communication_load && config.operators > 1 {
        let ops = config.operators as f64;
        S::lit(mean_group * ops / (2.0 * (ops - 1.0) * config.rate_per_group))
    } else {
        S::zero()
    };
    let qualifying = stats::qualifying_flows(&cluster, &traffic, S::lit(config.score_factor));
    Ok(Scenario {
        cluster,
        traffic,
        tape,
        comm_factor,
        qualifying,
    })
}
