use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reconfig::domain::{ClusterState, CostModel, KeyGroupStat, NodeDescriptor};
use reconfig::milp::{brute_force_solve, build_model, solve, Budget, MilpConfig};
use reconfig::{Error, KeyGroupId, NodeId, OperatorId};

fn random_instance(rng: &mut ChaCha8Rng) -> (ClusterState<f64>, MilpConfig<f64>) {
    let nodes = rng.gen_range(1..=4u32);
    let groups = rng.gen_range(1..=10u32);
    let descriptors: Vec<_> = (0..nodes)
        .map(|i| {
            let n = NodeDescriptor::new(NodeId(i));
            if i > 0 && rng.gen_bool(0.3) {
                n.killed()
            } else {
                n
            }
        })
        .collect();
    let cm = CostModel::default();
    let stats: Vec<_> = (0..groups)
        .map(|g| {
            let stat = KeyGroupStat::new(
                KeyGroupId(g),
                OperatorId(0),
                rng.gen_range(0.0..40.0),
                rng.gen_range(512.0..8192.0),
                &cm,
            );
            (stat, NodeId(rng.gen_range(0..nodes)))
        })
        .collect();
    let cluster = ClusterState::new(descriptors, stats).unwrap();
    let budget = match rng.gen_range(0..3) {
        0 => Budget::Unbounded,
        1 => Budget::Migrations(rng.gen_range(0..=4)),
        _ => Budget::MigrCost(rng.gen_range(0.0..16.0)),
    };
    let cfg = MilpConfig {
        budget,
        // force branch and bound instead of the built-in enumeration
        exhaustive_limit: 0,
        ..MilpConfig::default()
    };
    (cluster, cfg)
}

#[test]
fn branch_and_bound_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let started = Instant::now();
    let mut compared = 0;
    for _ in 0..200 {
        let (cluster, cfg) = random_instance(&mut rng);
        let model = build_model(&cluster, &cfg, &[]).unwrap();
        match (solve(&model), brute_force_solve(&model)) {
            (Ok(ours), Ok(oracle)) => {
                assert!(ours.optimal);
                assert_eq!(ours.plan.objective.d, oracle.plan.objective.d);
                assert!((ours.spread_slack() - oracle.spread_slack()).abs() <= 1e-9);
                assert!(oracle.objective_value <= ours.objective_value + 1e-9);
                compared += 1;
            }
            (Err(Error::Infeasible { .. }), Err(Error::Infeasible { .. })) => {}
            (a, b) => panic!("solver disagreement: {a:?} vs {b:?}"),
        }
    }
    assert!(compared > 150);
    assert!(started.elapsed().as_secs() < 60);
}

#[test]
fn budget_is_never_exceeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let (cluster, cfg) = random_instance(&mut rng);
        let Ok(sol) = solve(&build_model(&cluster, &cfg, &[]).unwrap()) else {
            continue;
        };
        match cfg.budget {
            Budget::Migrations(n) => assert!(sol.plan.migration_count() <= n),
            Budget::MigrCost(c) => assert!(sol.plan.objective.total_migr_cost <= c + 1e-9),
            Budget::Unbounded => {}
        }
    }
}

#[test]
fn no_migration_targets_a_removed_node() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let (cluster, mut cfg) = random_instance(&mut rng);
        cfg.exhaustive_limit = MilpConfig::<f64>::default().exhaustive_limit;
        let Ok(sol) = solve(&build_model(&cluster, &cfg, &[]).unwrap()) else {
            continue;
        };
        for m in &sol.plan.migrations {
            assert!(!cluster.node(m.to).unwrap().kill);
        }
    }
}
