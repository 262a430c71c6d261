use serde::{Deserialize, Serialize};

use crate::albic::AlbicConfig;
use crate::baselines::PotcState;
use crate::error::{Error, Result};
use crate::framework::{Optimizer, ScalingPolicy};
use crate::milp::{Budget, MilpConfig};
use crate::scalar::Scalar;

/// Shape of the data flow between consecutive operators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum Pattern {
    /// `degree` upstream key groups feed one downstream key group.
    PartialMerge {
        #[serde(default = "two")]
        degree: usize,
    },
    /// Every upstream key group feeds `degree` downstream key groups.
    PartialPartitioning {
        #[serde(default = "two")]
        degree: usize,
    },
    /// Key group `j` feeds downstream key group `j` (for the collocatable
    /// share); the rest spread evenly.
    OneToOne,
    /// Every upstream key group feeds every downstream key group evenly.
    FullPartitioning,
}

fn two() -> usize {
    2
}

/// Initial key-group placement. All variants give every node the same
/// number of key groups where the counts allow it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Placement {
    /// Seeded shuffle dealt round-robin.
    #[default]
    Random,
    /// Key group `j` of operator `o` on node `(j + o) mod nodes`, so no
    /// one-to-one partners share a node.
    WorstCase,
    /// From-scratch COLA allocation of the initial loads.
    Cola,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum OptimizerKind {
    Milp,
    Albic,
    Flux,
    Potc,
    Cola,
    Drain,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 6] = [
        OptimizerKind::Milp,
        OptimizerKind::Albic,
        OptimizerKind::Flux,
        OptimizerKind::Potc,
        OptimizerKind::Cola,
        OptimizerKind::Drain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Milp => "milp",
            OptimizerKind::Albic => "albic",
            OptimizerKind::Flux => "flux",
            OptimizerKind::Potc => "potc",
            OptimizerKind::Cola => "cola",
            OptimizerKind::Drain => "drain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub max_migrations: Option<usize>,
    pub max_migr_cost: Option<f64>,
    pub max_ld: f64,
    pub time_limit_s: f64,
    pub w1: f64,
    pub w2: f64,
    pub max_pl: f64,
    pub step_pl: f64,
    pub score_factor: f64,
    pub merge_cost_factor: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Milp,
            max_migrations: None,
            max_migr_cost: None,
            max_ld: 10.0,
            time_limit_s: 5.0,
            w1: 1000.0,
            w2: 1.0,
            max_pl: 25.0,
            step_pl: 5.0,
            score_factor: 1.5,
            merge_cost_factor: 0.1,
        }
    }
}

impl OptimizerSpec {
    pub fn of(kind: OptimizerKind) -> Self {
        OptimizerSpec {
            kind,
            ..Default::default()
        }
    }

    pub fn with_max_migrations(mut self, m: usize) -> Self {
        self.max_migrations = Some(m);
        self.max_migr_cost = None;
        self
    }

    pub fn budget<S: Scalar>(&self) -> Budget<S> {
        match (self.max_migrations, self.max_migr_cost) {
            (Some(m), _) => Budget::Migrations(m),
            (None, Some(c)) => Budget::MigrCost(S::lit(c)),
            (None, None) => Budget::Unbounded,
        }
    }

    /// Offending keys with what is wrong with them.
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut bad = |k: &str, m: &str| out.push((k.to_string(), m.to_string()));
        if self.max_migrations.is_some() && self.max_migr_cost.is_some() {
            bad(
                "max_migr_cost",
                "only one of max_migrations and max_migr_cost may be set",
            );
        }
        if self.max_migr_cost.is_some_and(|c| !(c >= 0.0)) {
            bad("max_migr_cost", "must be non-negative");
        }
        if !(self.max_ld > 0.0) {
            bad("max_ld", "must be positive");
        }
        if !(self.time_limit_s > 0.0) {
            bad("time_limit_s", "must be positive");
        }
        if !(self.w2 >= 0.0 && self.w1 >= 100.0 * self.w2 && self.w1 > 0.0) {
            bad("w1", "must be positive and at least 100 * w2");
        }
        if !(self.max_pl >= 0.0) {
            bad("max_pl", "must be non-negative");
        }
        if !(self.step_pl > 0.0) {
            bad("step_pl", "must be positive");
        }
        if !(self.score_factor > 0.0) {
            bad("score_factor", "must be positive");
        }
        if !(self.merge_cost_factor >= 0.0) {
            bad("merge_cost_factor", "must be non-negative");
        }
        out
    }

    pub fn milp_config<S: Scalar>(&self, seed: u64) -> MilpConfig<S> {
        MilpConfig {
            w1: S::lit(self.w1),
            w2: S::lit(self.w2),
            w_drain: S::lit(self.w1 / 2.0),
            budget: self.budget(),
            time_limit: std::time::Duration::from_secs_f64(self.time_limit_s),
            seed,
            ..MilpConfig::default()
        }
    }

    pub fn build<S: Scalar>(&self, seed: u64, spl_ticks: u64) -> Optimizer<S> {
        let milp = self.milp_config(seed);
        match self.kind {
            OptimizerKind::Milp => Optimizer::Milp(milp),
            OptimizerKind::Drain => Optimizer::DrainThenBalance(milp),
            OptimizerKind::Albic => Optimizer::Albic(AlbicConfig {
                max_ld: S::lit(self.max_ld),
                max_pl: S::lit(self.max_pl),
                step_pl: S::lit(self.step_pl),
                score_factor: S::lit(self.score_factor),
                milp,
                seed,
                ..AlbicConfig::default()
            }),
            OptimizerKind::Flux => Optimizer::Flux {
                max_migrations: self.max_migrations.unwrap_or(usize::MAX),
            },
            OptimizerKind::Potc => Optimizer::Potc(PotcState::new(
                seed,
                u32::try_from(spl_ticks).unwrap_or(u32::MAX),
                S::lit(self.merge_cost_factor),
            )),
            OptimizerKind::Cola => Optimizer::Cola {
                max_ld: S::lit(self.max_ld),
                seed,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSpec {
    pub enabled: bool,
    pub target_utilization: f64,
    pub scale_out_threshold: f64,
    pub scale_in_threshold: f64,
    pub min_nodes: usize,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        ScalingSpec {
            enabled: false,
            target_utilization: 70.0,
            scale_out_threshold: 85.0,
            scale_in_threshold: 40.0,
            min_nodes: 1,
        }
    }
}

impl ScalingSpec {
    pub fn policy<S: Scalar>(&self, max_ld: f64) -> ScalingPolicy<S> {
        ScalingPolicy {
            enabled: self.enabled,
            target_utilization: S::lit(self.target_utilization),
            scale_out_threshold: S::lit(self.scale_out_threshold),
            scale_in_threshold: S::lit(self.scale_in_threshold),
            min_nodes: self.min_nodes,
            max_ld: S::lit(max_ld),
        }
    }
}

/// Load change applied to a fifth of the nodes from `tick` on: half of
/// them gain `0.5 * varies`, the other half lose it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariesStep {
    pub tick: u64,
    pub varies: f64,
}

fn default_mean_node_load() -> f64 {
    50.0
}
fn default_jitter() -> f64 {
    2.0
}
fn default_share() -> f64 {
    0.2
}
fn default_rate() -> f64 {
    100.0
}
fn default_state_mb() -> f64 {
    1.0
}
fn default_latency() -> f64 {
    2.5
}
fn default_spl() -> u64 {
    10
}
fn default_pattern() -> Pattern {
    Pattern::FullPartitioning
}
fn default_overload() -> f64 {
    100.0
}
fn default_sf() -> f64 {
    1.5
}

/// Everything needed to generate and run one scenario. Loads are in
/// percentage points of one node's capacity; migration cost is in
/// megabytes of state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub nodes: usize,
    pub key_groups_per_operator: usize,
    pub operators: usize,
    #[serde(default = "default_pattern")]
    pub pattern: Pattern,
    #[serde(default)]
    pub collocatable_percent: f64,
    #[serde(default = "default_mean_node_load")]
    pub mean_node_load: f64,
    #[serde(default)]
    pub varies_schedule: Vec<VariesStep>,
    /// Per-SPL load jitter on a share of the nodes, in percent of the mean
    /// node load.
    #[serde(default = "default_jitter")]
    pub jitter_percent: f64,
    #[serde(default = "default_share")]
    pub jitter_node_share: f64,
    #[serde(default = "default_rate")]
    pub rate_per_group: f64,
    #[serde(default = "default_state_mb")]
    pub state_size_mb: f64,
    #[serde(default = "default_latency")]
    pub seconds_per_cost_unit: f64,
    /// Adds serialization load for remote high-traffic flows.
    #[serde(default)]
    pub communication_load: bool,
    #[serde(default = "default_sf")]
    pub score_factor: f64,
    #[serde(default)]
    pub placement: Placement,
    /// The highest-numbered nodes start marked for removal.
    #[serde(default)]
    pub killed_nodes: usize,
    /// The lowest-numbered nodes start at `overload_load`.
    #[serde(default)]
    pub overloaded_nodes: usize,
    #[serde(default = "default_overload")]
    pub overload_load: f64,
    #[serde(default = "default_spl")]
    pub spl_ticks: u64,
    pub total_ticks: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub scaling: ScalingSpec,
}

impl ScenarioConfig {
    /// A config with the given sizes and defaults everywhere else.
    pub fn new(
        nodes: usize,
        operators: usize,
        key_groups_per_operator: usize,
        total_ticks: u64,
    ) -> Self {
        ScenarioConfig {
            nodes,
            key_groups_per_operator,
            operators,
            pattern: default_pattern(),
            collocatable_percent: 0.0,
            mean_node_load: default_mean_node_load(),
            varies_schedule: Vec::new(),
            jitter_percent: default_jitter(),
            jitter_node_share: default_share(),
            rate_per_group: default_rate(),
            state_size_mb: default_state_mb(),
            seconds_per_cost_unit: default_latency(),
            communication_load: false,
            score_factor: default_sf(),
            placement: Placement::Random,
            killed_nodes: 0,
            overloaded_nodes: 0,
            overload_load: default_overload(),
            spl_ticks: default_spl(),
            total_ticks,
            seed: 0,
            optimizer: OptimizerSpec::default(),
            scaling: ScalingSpec::default(),
        }
    }

    pub fn group_count(&self) -> usize {
        self.operators * self.key_groups_per_operator
    }

    /// Offending keys with what is wrong with them; empty when valid.
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut bad = |k: &str, m: &str| out.push((k.to_string(), m.to_string()));
        if self.nodes == 0 {
            bad("nodes", "must be at least 1");
        }
        if self.operators == 0 {
            bad("operators", "must be at least 1");
        }
        if self.key_groups_per_operator == 0 {
            bad("key_groups_per_operator", "must be at least 1");
        }
        match self.pattern {
            Pattern::PartialMerge { degree } | Pattern::PartialPartitioning { degree }
                if degree == 0 || degree > self.key_groups_per_operator =>
            {
                bad(
                    "pattern.degree",
                    "must be between 1 and key_groups_per_operator",
                )
            }
            _ => {}
        }
        if !(0.0..=100.0).contains(&self.collocatable_percent) {
            bad("collocatable_percent", "must be within 0..=100");
        }
        if !(self.mean_node_load > 0.0) {
            bad("mean_node_load", "must be positive");
        }
        if !(self.jitter_percent >= 0.0) {
            bad("jitter_percent", "must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.jitter_node_share) {
            bad("jitter_node_share", "must be within 0..=1");
        }
        if !(self.rate_per_group > 0.0) {
            bad("rate_per_group", "must be positive");
        }
        if !(self.state_size_mb > 0.0) {
            bad("state_size_mb", "must be positive");
        }
        if !(self.seconds_per_cost_unit > 0.0) {
            bad("seconds_per_cost_unit", "must be positive");
        }
        if !(self.score_factor > 0.0) {
            bad("score_factor", "must be positive");
        }
        if self.killed_nodes >= self.nodes.max(1) {
            bad("killed_nodes", "must leave at least one node");
        }
        if self.overloaded_nodes + self.killed_nodes > self.nodes {
            bad(
                "overloaded_nodes",
                "overloaded and killed nodes must not overlap",
            );
        }
        if self.spl_ticks == 0 {
            bad("spl_ticks", "must be at least 1");
        }
        if self.total_ticks < self.spl_ticks {
            bad("total_ticks", "must cover at least one SPL");
        }
        let s = &self.scaling;
        if !(s.scale_in_threshold < s.target_utilization
            && s.target_utilization < s.scale_out_threshold)
        {
            bad(
                "scaling",
                "thresholds must satisfy scale_in < target < scale_out",
            );
        }
        if s.min_nodes == 0 {
            bad("scaling.min_nodes", "must be at least 1");
        }
        for (k, m) in self.optimizer.problems() {
            out.push((format!("optimizer.{k}"), m));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                p.iter()
                    .map(|(k, m)| format!("{k}: {m}"))
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }
}
