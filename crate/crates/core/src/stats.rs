//! Metrics over cluster snapshots.
//!
//! `mean` is the ceiling of the total load (all nodes, including those
//! marked for removal) divided by the number of active nodes. Load distance
//! is measured on active nodes only.

use std::collections::BTreeMap;

use crate::domain::{ClusterState, KeyGroupId, TrafficMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Statistics gathered over one period.
#[derive(Clone, Debug, PartialEq)]
pub struct StatisticsWindow<S> {
    pub spl_ticks: u32,
    pub resource_totals: BTreeMap<String, S>,
    pub baseline_avg_load: Option<S>,
}

impl<S: Scalar> StatisticsWindow<S> {
    pub fn new(spl_ticks: u32) -> Self {
        StatisticsWindow {
            spl_ticks: spl_ticks.max(1),
            resource_totals: BTreeMap::new(),
            baseline_avg_load: None,
        }
    }

    pub fn record(&mut self, resource: &str, usage: S) {
        let e = self
            .resource_totals
            .entry(resource.to_owned())
            .or_insert_with(S::zero);
        *e = *e + usage;
    }

    /// Fixes the load-index baseline. Later calls are ignored.
    pub fn init_baseline(&mut self, avg_load: S) {
        if self.baseline_avg_load.is_none() {
            self.baseline_avg_load = Some(avg_load);
        }
    }
}

/// `(load, killed)` per node; the common input of every balance metric.
pub fn load_view<S: Scalar>(cluster: &ClusterState<S>) -> Vec<(S, bool)> {
    let loads = cluster.node_loads();
    cluster.nodes().map(|n| (loads[&n.id], n.kill)).collect()
}

pub fn mean_of<S: Scalar>(view: &[(S, bool)]) -> Result<S> {
    let active = view.iter().filter(|(_, k)| !k).count();
    if active == 0 {
        return Err(Error::NoActiveNodes);
    }
    let sum = view.iter().fold(S::zero(), |acc, (l, _)| acc + *l);
    Ok((sum / S::from_count(active)).ceil())
}

pub fn load_distance_of<S: Scalar>(view: &[(S, bool)]) -> Result<S> {
    let mean = mean_of(view)?;
    Ok(view
        .iter()
        .filter(|(_, k)| !k)
        .map(|(l, _)| (*l - mean).abs())
        .fold(S::zero(), S::max))
}

pub fn mean_load<S: Scalar>(cluster: &ClusterState<S>) -> Result<S> {
    mean_of(&load_view(cluster))
}

pub fn load_distance<S: Scalar>(cluster: &ClusterState<S>) -> Result<S> {
    load_distance_of(&load_view(cluster))
}

/// Optimal `(d, d_u, d_l)` of the balancing model for a fixed allocation,
/// given the model's `mean`.
///
/// `d` is the largest deviation: upper deviations over all nodes, lower
/// deviations over active nodes only. `d - d_u` and `d - d_l` are the actual
/// maximum upper and lower deviations.
pub fn deviation_variables<S: Scalar>(cluster: &ClusterState<S>, mean: S) -> (S, S, S) {
    deviation_variables_of(&load_view(cluster), mean)
}

pub fn deviation_variables_of<S: Scalar>(view: &[(S, bool)], mean: S) -> (S, S, S) {
    let max_all = view.iter().map(|(l, _)| *l).fold(S::neg_infinity(), S::max);
    let min_active = view
        .iter()
        .filter(|(_, k)| !k)
        .map(|(l, _)| *l)
        .fold(S::infinity(), S::min);
    if !max_all.is_finite() || !min_active.is_finite() {
        return (S::zero(), S::zero(), S::zero());
    }
    let upper = max_all - mean;
    let lower = mean - min_active;
    let d = upper.max(lower).max(S::zero());
    (d, d - upper, d - lower)
}

/// Average node load across the whole cluster.
pub fn average_system_load<S: Scalar>(cluster: &ClusterState<S>) -> S {
    let view = load_view(cluster);
    if view.is_empty() {
        return S::zero();
    }
    view.iter().fold(S::zero(), |acc, (l, _)| acc + *l) / S::from_count(view.len())
}

pub fn load_index<S: Scalar>(cluster: &ClusterState<S>, window: &StatisticsWindow<S>) -> Result<S> {
    load_index_from(average_system_load(cluster), window)
}

pub fn load_index_from<S: Scalar>(current_avg: S, window: &StatisticsWindow<S>) -> Result<S> {
    let base = window.baseline_avg_load.ok_or(Error::BaselineUnset)?;
    if !(base > S::zero()) {
        return Err(Error::BaselineUnset);
    }
    Ok(S::lit(100.0) * current_avg / base)
}

/// A key-group pair whose rate exceeds `avg(src) * sF`, where `avg(src)` is
/// the source's total output over the number of key groups downstream of
/// its operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualifyingFlow<S> {
    pub src: KeyGroupId,
    pub dst: KeyGroupId,
    pub rate: S,
}

pub fn qualifying_flows<S: Scalar>(
    cluster: &ClusterState<S>,
    traffic: &TrafficMatrix<S>,
    score_factor: S,
) -> Vec<QualifyingFlow<S>> {
    let downstream = traffic.downstream_group_counts(cluster);
    let mut out = Vec::new();
    let mut current: Option<(KeyGroupId, S)> = None;
    for (src, dst, rate) in traffic.iter() {
        let Some(stat) = cluster.stat(src) else {
            continue;
        };
        if cluster.stat(dst).is_none() {
            continue;
        }
        let threshold = match current {
            Some((g, t)) if g == src => t,
            _ => {
                let count = downstream.get(&stat.operator).copied().unwrap_or(0);
                let t = if count == 0 {
                    S::infinity()
                } else {
                    traffic.out(src) / S::from_count(count) * score_factor
                };
                current = Some((src, t));
                t
            }
        };
        if rate > threshold {
            out.push(QualifyingFlow { src, dst, rate });
        }
    }
    out
}

/// Traffic-weighted percentage of qualifying flows whose endpoints share a
/// node. 100 when nothing qualifies.
pub fn collocation_factor<S: Scalar>(
    cluster: &ClusterState<S>,
    traffic: &TrafficMatrix<S>,
    score_factor: S,
) -> S {
    let flows = qualifying_flows(cluster, traffic, score_factor);
    let mut local = S::zero();
    let mut all = S::zero();
    for f in &flows {
        all = all + f.rate;
        if cluster.node_of(f.src) == cluster.node_of(f.dst) {
            local = local + f.rate;
        }
    }
    if all > S::zero() {
        S::lit(100.0) * local / all
    } else {
        S::lit(100.0)
    }
}

/// Resource with the greatest total usage; ties go to the
/// lexicographically smallest name.
pub fn bottleneck_resource<S: Scalar>(window: &StatisticsWindow<S>) -> Result<&str> {
    let mut best: Option<(&str, S)> = None;
    for (name, usage) in &window.resource_totals {
        match best {
            Some((_, u)) if *usage <= u => {}
            _ => best = Some((name.as_str(), *usage)),
        }
    }
    best.map(|(n, _)| n).ok_or(Error::EmptyWindow)
}
