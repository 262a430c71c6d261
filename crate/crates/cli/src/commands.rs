use std::path::{Path, PathBuf};

use rayon::prelude::*;
use reconfig::milp::{self, brute_force_solve, build_model};
use reconfig::partition::{balanced_partition, WeightedGraph};
use reconfig::sim::{generate_scenario, run_with, OptimizerKind, OptimizerSpec};
use reconfig::{KeyGroupId, MetricsSeries};

use crate::files::{
    read_json, to_json, write_atomic, GraphDoc, PartitionDoc, PlanDoc, RunSummary, Snapshot,
    SummaryDoc,
};
use crate::manifest::{self, NamedScenario, Overrides, RunManifest};
use crate::{CliError, Problem, Result, SCHEMA_VERSION};

/// Comparison set used by `compare` when neither the manifest nor the
/// command line names one.
pub const DEFAULT_COMPARISON: [OptimizerKind; 3] = [
    OptimizerKind::Milp,
    OptimizerKind::Flux,
    OptimizerKind::Potc,
];

pub const SUMMARY_FILE: &str = "summary.json";

/// Loads `path` and checks every resolved scenario. Returns the manifest
/// when nothing is wrong.
pub fn validate(path: &Path, flags: &Overrides) -> Result<RunManifest> {
    let man = manifest::load(path)?;
    let problems = man.problems(flags);
    if problems.is_empty() {
        Ok(man)
    } else {
        Err(CliError::Invalid(problems))
    }
}

fn out_dir(man: &RunManifest, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| man.out.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// Runs every scenario with its configured optimizer.
pub fn run(path: &Path, flags: &Overrides, out: Option<&Path>) -> Result<SummaryDoc> {
    let man = validate(path, flags)?;
    let jobs = man
        .resolved(flags)
        .into_iter()
        .map(|s| {
            let kind = s.config.optimizer.kind;
            (s, vec![kind])
        })
        .collect();
    execute(jobs, &out_dir(&man, out))
}

/// Replays each scenario's tape with every optimizer of the comparison set.
pub fn compare(
    path: &Path,
    flags: &Overrides,
    out: Option<&Path>,
    set: Option<&[OptimizerKind]>,
) -> Result<SummaryDoc> {
    let man = validate(path, flags)?;
    let set: Vec<OptimizerKind> = match set {
        Some(s) if !s.is_empty() => s.to_vec(),
        _ if !man.compare.is_empty() => man.compare.clone(),
        _ => DEFAULT_COMPARISON.to_vec(),
    };
    let jobs = man
        .resolved(flags)
        .into_iter()
        .map(|s| (s, set.clone()))
        .collect();
    execute(jobs, &out_dir(&man, out))
}

fn metrics_file(scenario: &str, kind: OptimizerKind) -> String {
    format!("{scenario}-{}.csv", kind.name())
}

fn execute(jobs: Vec<(NamedScenario, Vec<OptimizerKind>)>, out: &Path) -> Result<SummaryDoc> {
    let per_scenario: Vec<Result<Vec<RunSummary>>> = jobs
        .par_iter()
        .map(|(s, kinds)| {
            // one tape per scenario, shared by every optimizer run on it
            let scenario = generate_scenario::<f64>(&s.config)?;
            kinds
                .par_iter()
                .map(|&kind| {
                    let mut cfg = s.config.clone();
                    cfg.optimizer.kind = kind;
                    let optimizer = cfg.optimizer.build::<f64>(cfg.seed, cfg.spl_ticks);
                    let (series, _) = run_with(&cfg, &scenario, optimizer);
                    let file = metrics_file(&s.name, kind);
                    let mut csv = Vec::new();
                    series.write_csv(&mut csv)?;
                    write_atomic(&out.join(&file), &csv)?;
                    Ok(summarize(&s.name, cfg.seed, file, &series))
                })
                .collect()
        })
        .collect();
    let mut runs = Vec::new();
    for r in per_scenario {
        runs.extend(r?);
    }
    let doc = SummaryDoc {
        schema_version: SCHEMA_VERSION,
        runs,
    };
    write_atomic(&out.join(SUMMARY_FILE), to_json(&doc).as_bytes())?;
    let failed = doc.runs.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(CliError::RunsFailed {
            failed,
            total: doc.runs.len(),
        });
    }
    Ok(doc)
}

fn summarize(
    scenario: &str,
    seed: u64,
    metrics_file: String,
    series: &MetricsSeries,
) -> RunSummary {
    let s = &series.samples;
    let last = series.last();
    RunSummary {
        scenario: scenario.to_string(),
        optimizer: series.optimizer.clone(),
        seed,
        metrics_file,
        rounds: s.len(),
        final_load_distance: last.map(|m| m.load_distance),
        mean_load_distance: (!s.is_empty())
            .then(|| s.iter().map(|m| m.load_distance).sum::<f64>() / s.len() as f64),
        final_load_index: last.map(|m| m.load_index),
        final_collocation_factor: last.map(|m| m.collocation_factor),
        total_migrations: series.total_migrations(),
        total_migration_latency_s: s.iter().map(|m| m.migration_latency_s).sum(),
        budget_respected: s.iter().all(|m| m.budget_respected),
        error: series.error.clone(),
    }
}

/// Optimizers accepted by `solve`: every simulator optimizer plus `brute`,
/// plain enumeration of the MILP that refuses oversize instances.
pub const SOLVE_OPTIMIZERS: [&str; 7] = ["milp", "brute", "albic", "flux", "potc", "cola", "drain"];

/// One-shot optimizer invocation on a snapshot. Uses the seed, budget and
/// `max_ld` from `params`.
pub fn solve(snapshot: &Path, optimizer: &str, params: &Overrides) -> Result<PlanDoc> {
    let brute = optimizer == "brute";
    let kind = if brute {
        OptimizerKind::Milp
    } else {
        OptimizerKind::parse(optimizer).ok_or_else(|| {
            CliError::Invalid(vec![Problem::new(
                "optimizer",
                format!(
                    "unknown optimizer `{optimizer}`; expected one of {}",
                    SOLVE_OPTIMIZERS.join(", ")
                ),
            )])
        })?
    };
    let mut spec = OptimizerSpec::of(kind);
    spec.max_migrations = params.max_migrations;
    spec.max_migr_cost = params.max_migr_cost;
    if let Some(l) = params.max_ld {
        spec.max_ld = l;
    }
    let problems: Vec<Problem> = spec
        .problems()
        .into_iter()
        .map(|(k, m)| Problem::new(k, m))
        .collect();
    if !problems.is_empty() {
        return Err(CliError::Invalid(problems));
    }
    let seed = params.seed.unwrap_or(0);
    let (cluster, traffic) = read_json::<Snapshot>(snapshot)?.to_state()?;
    let cfg = spec.milp_config::<f64>(seed);
    if brute {
        let sol = brute_force_solve(&build_model(&cluster, &cfg, &[])?)?;
        return Ok(PlanDoc::new(
            "brute",
            &sol.plan,
            Some(sol.objective_value),
            Some(sol.optimal),
        ));
    }
    if kind == OptimizerKind::Milp {
        let sol = milp::optimize(&cluster, &cfg, &[])?;
        return Ok(PlanDoc::new(
            "milp",
            &sol.plan,
            Some(sol.objective_value),
            Some(sol.optimal),
        ));
    }
    let mut opt = spec.build::<f64>(seed, 10);
    let outcome = opt.plan(&cluster, &traffic, 0)?;
    Ok(PlanDoc::new(
        kind.name(),
        &outcome.plan,
        None,
        outcome.optimal,
    ))
}

/// Splits the graph in `graph` into `parts` balanced vertex sets.
pub fn partition(
    graph: &Path,
    parts: usize,
    imbalance_tol: f64,
    seed: u64,
) -> Result<PartitionDoc> {
    let doc: GraphDoc = read_json(graph)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(CliError::Invalid(vec![Problem::new(
            "schema_version",
            format!(
                "unsupported version {}; expected {SCHEMA_VERSION}",
                doc.schema_version
            ),
        )]));
    }
    if imbalance_tol.is_nan() || imbalance_tol < 0.0 {
        return Err(CliError::Invalid(vec![Problem::new(
            "tolerance",
            "must be non-negative",
        )]));
    }
    let mut g = WeightedGraph::<f64>::new();
    for v in &doc.vertices {
        g.add_vertex(KeyGroupId(v.id), v.weight);
    }
    for e in &doc.edges {
        g.add_edge(KeyGroupId(e.a), KeyGroupId(e.b), e.weight)?;
    }
    let mut sets = balanced_partition(&g, parts, imbalance_tol, seed)?;
    // canonical order: by smallest member
    sets.sort_by_key(|p| p.first().copied());
    Ok(PartitionDoc {
        schema_version: SCHEMA_VERSION,
        part_weights: sets
            .iter()
            .map(|p| p.iter().map(|v| g.vertices()[v]).sum())
            .collect(),
        cut_weight: g.cut_weight(&sets),
        parts: sets
            .iter()
            .map(|p| p.iter().map(|v| v.0).collect())
            .collect(),
    })
}
