//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a failure status when any criterion fails. Runs without the libtest
//! harness so the criteria report in a fixed order.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use reconfig::framework::adaptation_round;
use reconfig::milp::{brute_force_solve, build_model, solve, Budget};
use reconfig::partition::{balanced_partition, part_capacity, WeightedGraph};
use reconfig::sim::{
    generate_scenario, run_with, OptimizerKind, OptimizerSpec, Pattern, Placement, ScenarioConfig,
    VariesStep,
};
use reconfig::{
    ClusterState, Error, KeyGroupId, MetricsSeries, MilpConfig, Optimizer, RoundReport,
    ScalingPolicy, TrafficMatrix,
};
use reconfig_oracles::{drain_instance, exhaustive_min_cut, random_instance};

static BUDGET_ROUNDS: AtomicUsize = AtomicUsize::new(0);
static BUDGET_VIOLATIONS: AtomicUsize = AtomicUsize::new(0);

fn record_series(s: &MetricsSeries) {
    for m in &s.samples {
        BUDGET_ROUNDS.fetch_add(1, Ordering::Relaxed);
        if !m.budget_respected {
            BUDGET_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
        }
    }
}

fn record_report(r: &RoundReport) {
    BUDGET_ROUNDS.fetch_add(1, Ordering::Relaxed);
    if !r.budget_respected() {
        BUDGET_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

/// Runs `kind` over the tape generated from `cfg`, with the given budget.
fn run(cfg: &ScenarioConfig, scenario: &reconfig::Scenario, spec: OptimizerSpec) -> MetricsSeries {
    let mut cfg = cfg.clone();
    cfg.optimizer = spec;
    let (series, _) = run_with(&cfg, scenario, cfg.optimizer.build(cfg.seed, cfg.spl_ticks));
    record_series(&series);
    series
}

fn criterion_1() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut compared, mut infeasible, mut mismatches, mut unproven) = (0, 0, 0, 0);
    for _ in 0..200 {
        let (cluster, budget) = random_instance(&mut rng, 4, 10, false);
        // enumeration is switched off so the relaxation-based search is what
        // gets compared against the oracle
        let cfg = MilpConfig {
            exhaustive_limit: 0,
            ..MilpConfig::default().with_budget(budget)
        };
        let model = build_model(&cluster, &cfg, &[]).unwrap();
        match (solve(&model), brute_force_solve(&model)) {
            (Ok(ours), Ok(oracle)) => {
                compared += 1;
                if !ours.optimal {
                    unproven += 1;
                }
                let same_d = ours.plan.objective.d == oracle.plan.objective.d;
                let same_slack = (ours.spread_slack() - oracle.spread_slack()).abs() <= 1e-9;
                let same_obj = (ours.objective_value - oracle.objective_value).abs()
                    <= 1e-9 * oracle.objective_value.abs().max(1.0);
                if !(same_d && same_slack && same_obj) {
                    mismatches += 1;
                }
            }
            (Err(Error::Infeasible { .. }), Err(Error::Infeasible { .. })) => infeasible += 1,
            _ => mismatches += 1,
        }
    }
    let secs = started.elapsed().as_secs_f64();
    Verdict {
        pass: mismatches == 0 && secs < 60.0,
        detail: format!(
            "{compared} solved and {infeasible} jointly infeasible of 200; {mismatches} mismatches; \
             {unproven} not proven optimal; {secs:.1} s"
        ),
    }
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut solved, mut violations, mut moves) = (0, 0, 0);
    for _ in 0..500 {
        let (cluster, budget) = random_instance(&mut rng, 6, 14, true);
        let cfg = MilpConfig::default().with_budget(budget);
        if let Ok(sol) = solve(&build_model(&cluster, &cfg, &[]).unwrap()) {
            solved += 1;
            moves += sol.plan.migrations.len();
            violations += sol
                .plan
                .migrations
                .iter()
                .filter(|m| cluster.node(m.to).unwrap().kill)
                .count();
        }
    }
    Verdict {
        pass: violations == 0 && solved > 0,
        detail: format!("500 instances with a nonempty removal set, {solved} feasible, {moves} migrations, {violations} into removed nodes"),
    }
}

fn on_removed(c: &ClusterState) -> usize {
    c.killed_nodes().map(|n| c.groups_on(n.id).len()).sum()
}

fn criterion_3() -> Verdict {
    let outcomes: Vec<(bool, Option<usize>)> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let c = drain_instance(3000 + i);
            let t = TrafficMatrix::new();
            let policy = ScalingPolicy::disabled();
            let mut opt = Optimizer::Milp(MilpConfig::default());
            let (next, report) = adaptation_round(&c, &t, &mut opt, &policy, 0);
            record_report(&report);
            let unbounded_ok = report.error.is_none() && on_removed(&next) == 0;

            let cost: f64 = c
                .killed_nodes()
                .flat_map(|n| c.groups_on(n.id))
                .map(|g| c.stat(g).unwrap().migr_cost)
                .sum();
            let mut opt =
                Optimizer::Milp(MilpConfig::default().with_budget(Budget::MigrCost(0.25 * cost)));
            let mut cur = c;
            let mut rounds = None;
            for r in 0..5 {
                let (next, report) = adaptation_round(&cur, &t, &mut opt, &policy, r);
                record_report(&report);
                cur = next;
                if on_removed(&cur) == 0 {
                    rounds = Some(r as usize + 1);
                    break;
                }
            }
            (unbounded_ok, rounds)
        })
        .collect();
    let unbounded = outcomes.iter().filter(|o| o.0).count();
    let bounded = outcomes.iter().filter(|o| o.1.is_some()).count();
    let worst = outcomes.iter().filter_map(|o| o.1).max().unwrap_or(0);
    Verdict {
        pass: unbounded == 100 && bounded == 100,
        detail: format!(
            "unbounded budget emptied B in one round on {unbounded}/100; quarter budget emptied B within 5 rounds on {bounded}/100 (slowest {worst})"
        ),
    }
}

fn criterion_4() -> Verdict {
    let started = Instant::now();
    let cells: Vec<(usize, f64, u64)> = [10, 20, 30, 40]
        .into_iter()
        .flat_map(|mm| {
            [10.0, 20.0, 30.0, 40.0]
                .into_iter()
                .flat_map(move |v| (0..20).map(move |s| (mm, v, s)))
        })
        .collect();
    let results: Vec<(bool, f64)> = cells
        .par_iter()
        .map(|&(mm, varies, seed)| {
            let mut cfg = ScenarioConfig::new(20, 10, 40, 10);
            cfg.seed = seed;
            cfg.jitter_percent = 0.0;
            cfg.varies_schedule = vec![VariesStep { tick: 0, varies }];
            let sc = generate_scenario::<f64>(&cfg).unwrap();
            let milp = run(
                &cfg,
                &sc,
                OptimizerSpec::of(OptimizerKind::Milp).with_max_migrations(mm),
            );
            let flux = run(
                &cfg,
                &sc,
                OptimizerSpec::of(OptimizerKind::Flux).with_max_migrations(mm),
            );
            let (m, f) = (&milp.samples[0], &flux.samples[0]);
            (
                milp.error.is_none() && m.load_distance <= f.load_distance + 1e-9,
                m.solve_time_s,
            )
        })
        .collect();
    let wins = results.iter().filter(|r| r.0).count();
    let slowest = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let share = wins as f64 / results.len() as f64;
    let secs = started.elapsed().as_secs_f64();
    Verdict {
        pass: share >= 0.95 && slowest <= 5.0 && secs <= 600.0,
        detail: format!(
            "MILP load distance <= Flux in {wins}/{} cells ({:.1}%); slowest MILP round {slowest:.2} s; {secs:.1} s total",
            results.len(),
            share * 100.0
        ),
    }
}

fn first_round(
    series: &MetricsSeries,
    f: impl Fn(&reconfig::MetricsSample) -> bool,
) -> Option<usize> {
    series.samples.iter().position(f).map(|i| i + 1)
}

fn criterion_5() -> Verdict {
    let per_seed: Vec<(
        u64,
        Option<usize>,
        Option<usize>,
        Option<usize>,
        Option<usize>,
    )> = (0..3u64)
        .into_par_iter()
        .map(|seed| {
            let mut cfg = ScenarioConfig::new(60, 10, 120, 300);
            cfg.seed = seed;
            cfg.jitter_percent = 0.0;
            cfg.killed_nodes = 10;
            cfg.overloaded_nodes = 1;
            let sc = generate_scenario::<f64>(&cfg).unwrap();
            let milp = run(
                &cfg,
                &sc,
                OptimizerSpec::of(OptimizerKind::Milp).with_max_migrations(20),
            );
            let drain = run(
                &cfg,
                &sc,
                OptimizerSpec::of(OptimizerKind::Drain).with_max_migrations(20),
            );
            let ld = |s: &MetricsSeries| first_round(s, |m| m.load_distance <= 10.0);
            let empty = |s: &MetricsSeries| first_round(s, |m| m.groups_on_removed == 0);
            (seed, ld(&milp), ld(&drain), empty(&milp), empty(&drain))
        })
        .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, ml, dl, me, de) in per_seed {
        let faster = match (ml, dl) {
            (Some(m), Some(d)) => m < d,
            (Some(_), None) => true,
            _ => false,
        };
        let close = matches!((me, de), (Some(m), Some(d)) if m.abs_diff(d) <= 2);
        pass &= faster && close;
        let show = |r: Option<usize>| r.map_or("never".to_string(), |r| r.to_string());
        parts.push(format!(
            "seed {seed}: LD<=10 at round {} vs {}, B empty at {} vs {}",
            show(ml),
            show(dl),
            show(me),
            show(de)
        ));
    }
    Verdict {
        pass,
        detail: format!("integrated vs drain-then-balance; {}", parts.join("; ")),
    }
}

fn criterion_6() -> Verdict {
    let per_seed: Vec<String> = (0..3u64)
        .into_par_iter()
        .map(|seed| {
            let mut cfg = ScenarioConfig::new(6, 2, 24, 300);
            cfg.seed = seed;
            cfg.pattern = Pattern::OneToOne;
            cfg.collocatable_percent = 100.0;
            cfg.communication_load = true;
            cfg.placement = Placement::WorstCase;
            cfg.mean_node_load = 30.0;
            let sc = generate_scenario::<f64>(&cfg).unwrap();
            let albic = run(&cfg, &sc, OptimizerSpec::of(OptimizerKind::Albic).with_max_migrations(10));
            let cola = run(&cfg, &sc, OptimizerSpec::of(OptimizerKind::Cola).with_max_migrations(10));
            let reached = first_round(&albic, |m| m.collocation_factor >= 95.0);
            let max_moves = albic.samples.iter().map(|m| m.migrations).max().unwrap_or(0);
            let li = albic.last().map_or(f64::NAN, |m| m.load_index);
            let mean = |s: &MetricsSeries| {
                s.samples.iter().map(|m| m.migrations as f64).sum::<f64>() / s.samples.len().max(1) as f64
            };
            let (am, cm) = (mean(&albic), mean(&cola));
            let cola_best = cola.samples.iter().map(|m| m.collocation_factor).fold(0.0, f64::max);
            let cola_first = cola.samples.first().map_or(0.0, |m| m.collocation_factor);
            let checks = [
                ("cf>=95 by round 30", reached.is_some_and(|r| r <= 30)),
                ("<=10 moves/round", max_moves <= 10),
                ("load index 55+-10", (45.0..=65.0).contains(&li)),
                ("COLA optimal at once", cola_first >= cola_best - 1e-9),
                ("COLA moves >= 10x", cm >= 10.0 * am),
                ("no errors", albic.error.is_none() && cola.error.is_none()),
            ];
            let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
            format!(
                "{}seed {seed}: ALBIC cf>=95 at round {}, max {max_moves} moves/round, final load index {li:.1}, \
                 {am:.1} moves/round; COLA cf {cola_first:.1} at round 1, {cm:.1} moves/round ({:.1}x){}",
                if failed.is_empty() { "+" } else { "-" },
                reached.map_or("never".to_string(), |r| r.to_string()),
                cm / am.max(f64::MIN_POSITIVE),
                if failed.is_empty() { String::new() } else { format!(" [failed: {}]", failed.join(", ")) }
            )
        })
        .collect();
    Verdict {
        pass: per_seed.iter().all(|s| s.starts_with('+')),
        detail: per_seed
            .iter()
            .map(|s| &s[1..])
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn criterion_7() -> Verdict {
    let cells: Vec<(f64, u64)> = (0..=10)
        .flat_map(|c| (0..10).map(move |s| (c as f64 * 10.0, s)))
        .collect();
    let results: Vec<(f64, bool, bool)> = cells
        .par_iter()
        .map(|&(cp, seed)| {
            let mut cfg = ScenarioConfig::new(40, 20, 40, 50);
            cfg.seed = seed;
            cfg.pattern = Pattern::OneToOne;
            cfg.collocatable_percent = cp;
            cfg.communication_load = true;
            cfg.placement = Placement::Cola;
            cfg.mean_node_load = 30.0;
            let sc = generate_scenario::<f64>(&cfg).unwrap();
            let albic = run(
                &cfg,
                &sc,
                OptimizerSpec::of(OptimizerKind::Albic).with_max_migrations(10),
            );
            let cola = run(
                &cfg,
                &sc,
                OptimizerSpec::of(OptimizerKind::Cola).with_max_migrations(10),
            );
            // averages over every adaptation round of the run
            let avg = |s: &MetricsSeries, f: fn(&reconfig::MetricsSample) -> f64| {
                s.samples.iter().map(f).sum::<f64>() / s.samples.len().max(1) as f64
            };
            let ok = albic.error.is_none() && cola.error.is_none();
            let ld =
                ok && avg(&albic, |m| m.load_distance) <= avg(&cola, |m| m.load_distance) + 1e-9;
            let cf = ok
                && avg(&albic, |m| m.collocation_factor)
                    >= avg(&cola, |m| m.collocation_factor) - 2.0;
            (cp, ld, cf)
        })
        .collect();
    let both = results.iter().filter(|r| r.1 && r.2).count();
    let share = both as f64 / results.len() as f64;
    let losses: BTreeSet<String> = results
        .iter()
        .filter(|r| !(r.1 && r.2))
        .map(|r| format!("{}", r.0))
        .collect();
    Verdict {
        pass: share >= 0.9,
        detail: format!(
            "ALBIC load distance <= COLA and collocation >= COLA - 2 (run averages) in {both}/{} cells ({:.1}%); \
             LD losses {}, CF losses {}; collocatable percent of losing cells: {}",
            results.len(),
            share * 100.0,
            results.iter().filter(|r| !r.1).count(),
            results.iter().filter(|r| !r.2).count(),
            if losses.is_empty() { "none".to_string() } else { losses.into_iter().collect::<Vec<_>>().join(", ") }
        ),
    }
}

fn criterion_8() -> Verdict {
    let rounds = BUDGET_ROUNDS.load(Ordering::Relaxed);
    let violations = BUDGET_VIOLATIONS.load(Ordering::Relaxed);
    Verdict {
        pass: rounds > 0 && violations == 0,
        detail: format!("{rounds} adaptation rounds checked across criteria 3 to 7 and 10, {violations} over budget"),
    }
}

fn criterion_9() -> Verdict {
    let results: Vec<Option<(f64, f64, bool)>> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(9000 + i);
            let n = rng.gen_range(4..=12u32);
            let parts = rng.gen_range(2..=3usize);
            let tol = [0.05, 0.1, 0.2][rng.gen_range(0..3)];
            let mut g = WeightedGraph::new();
            for v in 0..n {
                g.add_vertex(KeyGroupId(v), rng.gen_range(1.0..5.0));
            }
            for a in 0..n {
                for b in a + 1..n {
                    if rng.gen_bool(0.35) {
                        g.add_edge(KeyGroupId(a), KeyGroupId(b), rng.gen_range(1.0..20.0))
                            .unwrap();
                    }
                }
            }
            let opt = exhaustive_min_cut(&g, parts, tol)?;
            let ours = balanced_partition(&g, parts, tol, i).unwrap();
            let cap = part_capacity(g.total_weight(), parts, tol);
            let balanced = ours
                .iter()
                .all(|p| p.iter().map(|v| g.vertices()[v]).sum::<f64>() <= cap + 1e-9);
            Some((g.cut_weight(&ours), opt, balanced))
        })
        .collect();
    let compared: Vec<&(f64, f64, bool)> = results.iter().flatten().collect();
    let within = compared
        .iter()
        .filter(|(c, o, b)| *b && *c <= 1.25 * o + 1e-9)
        .count();
    let worst = compared
        .iter()
        .filter(|r| r.1 > 0.0)
        .map(|(c, o, _)| c / o)
        .fold(1.0, f64::max);
    Verdict {
        pass: within == compared.len() && !compared.is_empty(),
        detail: format!(
            "{within}/{} graphs within 1.25x of the exhaustive optimum and balanced ({} of 100 had no balanced split); worst ratio {worst:.3}",
            compared.len(),
            100 - compared.len()
        ),
    }
}

fn criterion_10() -> Verdict {
    let mut cfg = ScenarioConfig::new(8, 4, 16, 120);
    cfg.seed = 42;
    cfg.pattern = Pattern::OneToOne;
    cfg.collocatable_percent = 50.0;
    cfg.communication_load = true;
    cfg.killed_nodes = 1;
    cfg.overloaded_nodes = 1;
    cfg.jitter_percent = 5.0;
    cfg.varies_schedule = vec![
        VariesStep {
            tick: 0,
            varies: 20.0,
        },
        VariesStep {
            tick: 60,
            varies: 10.0,
        },
    ];
    cfg.scaling.enabled = true;
    let csv = |kind: OptimizerKind| {
        let sc = generate_scenario::<f64>(&cfg).unwrap();
        let series = run(&cfg, &sc, OptimizerSpec::of(kind).with_max_migrations(6));
        let mut out = Vec::new();
        series.write_csv(&mut out).unwrap();
        out
    };
    let identical: Vec<(OptimizerKind, bool)> = OptimizerKind::ALL
        .par_iter()
        .map(|&k| (k, csv(k) == csv(k)))
        .collect();
    let differing: Vec<&str> = identical
        .iter()
        .filter(|r| !r.1)
        .map(|r| r.0.name())
        .collect();
    Verdict {
        pass: differing.is_empty(),
        detail: format!(
            "two runs per optimizer ({}) on one seeded scenario; byte-identical metrics for {}/{}",
            OptimizerKind::ALL
                .iter()
                .map(|k| k.name())
                .collect::<Vec<_>>()
                .join(", "),
            identical.len() - differing.len(),
            identical.len()
        ),
    }
}

type Criterion = (u32, &'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "oracle optimality", criterion_1),
        (2, "no migration into nodes being removed", criterion_2),
        (3, "removal set drains", criterion_3),
        (4, "MILP vs Flux load distance", criterion_4),
        (5, "integrated vs sequential scale-in", criterion_5),
        (6, "ALBIC collocation convergence", criterion_6),
        (7, "ALBIC vs COLA quality", criterion_7),
        (9, "partitioner quality", criterion_9),
        (10, "determinism", criterion_10),
    ];
    // `cargo test -p reconfig-oracles --test acceptance -- 4 7` runs a subset
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let started = Instant::now();
    let mut verdicts: Vec<(u32, &str, Verdict, Duration)> = Vec::new();
    for (n, name, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let v = f();
        verdicts.push((n, name, v, t.elapsed()));
    }
    // the budget tally covers everything run above
    if only.is_empty() || only.contains(&8) {
        let t = Instant::now();
        verdicts.push((8, "migration budget respected", criterion_8(), t.elapsed()));
    }
    verdicts.sort_by_key(|v| v.0);

    let mut failed = 0;
    for (n, name, v, took) in &verdicts {
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {}: {name}: {} [{:.1} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1} s",
        verdicts.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
