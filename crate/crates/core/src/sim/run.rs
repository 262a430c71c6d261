use std::collections::BTreeMap;
use std::io::Write;

use crate::domain::{AllocationPlan, ClusterState, NodeId};
use crate::error::{Error, Result};
use crate::framework::{adaptation_round, Optimizer, RoundReport, ScalingAction};
use crate::scalar::Scalar;
use crate::stats::{self, StatisticsWindow};

use super::config::ScenarioConfig;
use super::generate::{generate_scenario, Scenario};
use super::tape::step_workload;

/// Direct state migration: a migrating key group is paused for a time
/// proportional to its migration cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MigrationLatencyModel<S> {
    pub seconds_per_cost_unit: S,
    pub paused_while_migrating: bool,
}

impl<S: Scalar> MigrationLatencyModel<S> {
    pub fn new(seconds_per_cost_unit: S) -> Result<Self> {
        if !(seconds_per_cost_unit > S::zero()) {
            return Err(Error::InvalidConfig(
                "seconds_per_cost_unit must be positive".into(),
            ));
        }
        Ok(MigrationLatencyModel {
            seconds_per_cost_unit,
            paused_while_migrating: true,
        })
    }
}

/// Applies `plan` and returns the summed pause time of all migrated key
/// groups.
pub fn apply_plan<S: Scalar>(
    cluster: &ClusterState<S>,
    plan: &AllocationPlan<S>,
    model: &MigrationLatencyModel<S>,
) -> Result<(ClusterState<S>, S)> {
    let next = cluster.apply_plan(plan)?;
    let latency = plan
        .migrations
        .iter()
        .map(|m| cluster.stat(m.group).map_or(S::zero(), |s| s.migr_cost))
        .fold(S::zero(), |a, c| a + c * model.seconds_per_cost_unit);
    Ok((next, latency))
}

/// One row of the metrics table, taken right after a round's migrations.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSample<S> {
    pub tick: u64,
    pub optimizer: String,
    pub load_distance: S,
    pub load_index: S,
    pub collocation_factor: S,
    pub migrations: usize,
    pub migration_latency_s: S,
    pub active_nodes: usize,
    pub migration_cost: S,
    pub budget_respected: bool,
    /// Key groups still on nodes marked for removal.
    pub groups_on_removed: usize,
    pub scaling: ScalingAction,
    pub solve_time_s: f64,
}

/// Column set of the metrics table.
pub const METRICS_COLUMNS: [&str; 8] = [
    "tick",
    "optimizer",
    "load_distance",
    "load_index",
    "collocation_factor",
    "migrations",
    "migration_latency_s",
    "active_nodes",
];

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSeries<S> {
    pub optimizer: String,
    pub samples: Vec<MetricsSample<S>>,
    /// Set when a round failed; the series stops there.
    pub error: Option<String>,
}

impl<S: Scalar> MetricsSeries<S> {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(METRICS_COLUMNS)?;
        for s in &self.samples {
            w.write_record([
                s.tick.to_string(),
                s.optimizer.clone(),
                format!("{:.6}", s.load_distance.as_f64()),
                format!("{:.6}", s.load_index.as_f64()),
                format!("{:.6}", s.collocation_factor.as_f64()),
                s.migrations.to_string(),
                format!("{:.6}", s.migration_latency_s.as_f64()),
                s.active_nodes.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn total_migrations(&self) -> usize {
        self.samples.iter().map(|s| s.migrations).sum()
    }

    pub fn last(&self) -> Option<&MetricsSample<S>> {
        self.samples.last()
    }
}

/// Node loads plus any per-node surcharge, as a load view.
fn view_with<S: Scalar>(cluster: &ClusterState<S>, extra: &BTreeMap<NodeId, S>) -> Vec<(S, bool)> {
    let loads = cluster.node_loads();
    cluster
        .nodes()
        .map(|n| {
            let l = loads.get(&n.id).copied().unwrap_or(S::zero())
                + extra.get(&n.id).copied().unwrap_or(S::zero());
            (l, n.kill)
        })
        .collect()
}

fn average<S: Scalar>(view: &[(S, bool)]) -> S {
    if view.is_empty() {
        return S::zero();
    }
    view.iter().fold(S::zero(), |a, (l, _)| a + *l) / S::from_count(view.len())
}

/// Generates the scenario and runs the configured optimizer on it.
pub fn run_scenario<S: Scalar>(config: &ScenarioConfig) -> Result<MetricsSeries<S>> {
    let scenario = generate_scenario::<S>(config)?;
    let optimizer = config.optimizer.build::<S>(config.seed, config.spl_ticks);
    Ok(run_with(config, &scenario, optimizer).0)
}

/// Runs `optimizer` over an already generated scenario, so several
/// optimizers can replay the same tape. Also returns the round reports.
pub fn run_with<S: Scalar>(
    config: &ScenarioConfig,
    scenario: &Scenario<S>,
    mut optimizer: Optimizer<S>,
) -> (MetricsSeries<S>, Vec<RoundReport<S>>) {
    let policy = config.scaling.policy::<S>(config.optimizer.max_ld);
    let latency = MigrationLatencyModel {
        seconds_per_cost_unit: S::lit(config.seconds_per_cost_unit),
        paused_while_migrating: true,
    };
    let sf = S::lit(config.score_factor);
    let mut compute = scenario.cluster.clone();
    let mut window =
        StatisticsWindow::<S>::new(u32::try_from(config.spl_ticks).unwrap_or(u32::MAX));
    let mut series = MetricsSeries {
        optimizer: optimizer.name().to_string(),
        samples: Vec::new(),
        error: None,
    };
    let mut reports = Vec::new();
    let mut round = 0u64;
    for tick in 1..=config.total_ticks {
        compute = step_workload(&scenario.tape, tick, &compute);
        if tick % config.spl_ticks != 0 {
            continue;
        }
        let effective = scenario.effective(&compute);
        if window.baseline_avg_load.is_none() {
            // the first period is initialization; its end is the baseline
            window.init_baseline(average(&view_with(&effective, &BTreeMap::new())));
        }
        let (next, report) = adaptation_round(
            &effective,
            &scenario.traffic,
            &mut optimizer,
            &policy,
            round,
        );
        round += 1;
        if let Some(e) = &report.error {
            series.error = Some(format!("round {} at tick {tick}: {e}", report.round));
            reports.push(report);
            break;
        }
        let pause = match (&report.plan, report.migrations) {
            (Some(plan), m) if m > 0 => match apply_plan(&effective, plan, &latency) {
                Ok((_, l)) => l,
                Err(e) => {
                    series.error = Some(e.to_string());
                    break;
                }
            },
            _ => S::zero(),
        };
        if let Err(e) = compute.adopt_layout(&next) {
            series.error = Some(e.to_string());
            break;
        }
        let after = scenario.effective(&compute);
        let view = view_with(&after, &report.merge_load);
        let load_distance = stats::load_distance_of(&view).unwrap_or(S::zero());
        let load_index = stats::load_index_from(average(&view), &window).unwrap_or(S::lit(100.0));
        series.samples.push(MetricsSample {
            tick,
            optimizer: series.optimizer.clone(),
            load_distance,
            load_index,
            collocation_factor: stats::collocation_factor(&after, &scenario.traffic, sf),
            migrations: report.migrations,
            migration_latency_s: pause,
            active_nodes: report.active_nodes,
            migration_cost: report.migration_cost,
            budget_respected: report.budget_respected(),
            groups_on_removed: after
                .killed_nodes()
                .map(|n| after.groups_on(n.id).len())
                .sum(),
            scaling: report.scaling.clone(),
            solve_time_s: report.solve_time.as_secs_f64(),
        });
        reports.push(report);
    }
    (series, reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{KeyGroupId, Migration};
    use crate::milp::tests::cluster;
    use crate::sim::config::{OptimizerKind, OptimizerSpec, Pattern, Placement};

    #[test]
    fn latency_is_linear_in_migrated_cost() {
        let c = cluster(&[(0, false), (1, false)], &[(0, 10.0, 0), (1, 10.0, 0)]);
        let model = MigrationLatencyModel::new(0.5).unwrap();
        let (_, none) = apply_plan(&c, &AllocationPlan::identity(&c).unwrap(), &model).unwrap();
        assert_eq!(none, 0.0);
        let mut a = c.allocation().clone();
        a.insert(KeyGroupId(1), NodeId(1));
        let plan = AllocationPlan::from_assignment(&c, a).unwrap();
        assert_eq!(
            plan.migrations,
            vec![Migration {
                group: KeyGroupId(1),
                from: NodeId(0),
                to: NodeId(1)
            }]
        );
        // the test helper gives every group 1 KB of state at 1 cost unit/KB
        let (next, l) = apply_plan(&c, &plan, &model).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(next.node_of(KeyGroupId(1)), Some(NodeId(1)));
        assert!(MigrationLatencyModel::new(0.0).is_err());
    }

    fn small(kind: OptimizerKind) -> ScenarioConfig {
        let mut c = ScenarioConfig::new(4, 2, 8, 60);
        c.optimizer = OptimizerSpec::of(kind).with_max_migrations(4);
        c.seed = 3;
        c
    }

    #[test]
    fn one_sample_per_period() {
        let s = run_scenario::<f64>(&small(OptimizerKind::Milp)).unwrap();
        assert!(s.error.is_none());
        assert_eq!(s.samples.len(), 6);
        assert_eq!(s.samples[0].tick, 10);
    }

    #[test]
    fn identical_configs_give_identical_metrics() {
        for kind in OptimizerKind::ALL {
            let cfg = small(kind);
            let mut a = Vec::new();
            let mut b = Vec::new();
            run_scenario::<f64>(&cfg)
                .unwrap()
                .write_csv(&mut a)
                .unwrap();
            run_scenario::<f64>(&cfg)
                .unwrap()
                .write_csv(&mut b)
                .unwrap();
            assert_eq!(a, b, "{kind:?}");
        }
    }

    #[test]
    fn static_workload_settles() {
        let mut cfg = small(OptimizerKind::Milp);
        cfg.jitter_percent = 0.0;
        cfg.varies_schedule = vec![crate::sim::config::VariesStep {
            tick: 0,
            varies: 20.0,
        }];
        let s = run_scenario::<f64>(&cfg).unwrap();
        for w in s.samples.windows(2) {
            assert!(w[1].load_distance <= w[0].load_distance + 1e-9);
        }
        assert_eq!(s.samples.last().unwrap().migrations, 0);
    }

    #[test]
    fn collocating_removes_the_surcharge() {
        let mut cfg = small(OptimizerKind::Albic);
        cfg.pattern = Pattern::OneToOne;
        cfg.collocatable_percent = 100.0;
        cfg.communication_load = true;
        cfg.placement = Placement::WorstCase;
        cfg.jitter_percent = 0.0;
        cfg.total_ticks = 200;
        let s = run_scenario::<f64>(&cfg).unwrap();
        let first = &s.samples[0];
        let last = s.samples.last().unwrap();
        assert!(last.collocation_factor > first.collocation_factor);
        assert!(last.load_index < first.load_index);
    }
}
