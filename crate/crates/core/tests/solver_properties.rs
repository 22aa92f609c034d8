mod common;

use common::*;
use pbsca::benchmarks::{random_support, solve_rs, solve_sa, solve_ua, BenchmarkConfig};
use pbsca::solver::{finalize_schedule, solve_with, EngineOptions, PowerRegularizer};
use pbsca::{generate_channels, pbsca_solve, Error, SolverConfig, SystemConfig};

fn exhaustive_system() -> SystemConfig {
    SystemConfig {
        num_antennas: 4,
        num_rf_chains: 2,
        num_users: 3,
        num_scheduled: 1,
        cell_radius_m: 60.0,
        ..SystemConfig::desk()
    }
}

#[test]
fn inner_iterations_never_decrease_the_objective() {
    let sys = SystemConfig::desk();
    let cfg = SolverConfig::default();
    for seed in 100..103 {
        let ch = generate_channels(&sys, seed).unwrap();
        let res = pbsca_solve(&ch, &sys, &cfg).unwrap();
        for row in &res.trace.rows {
            for w in row.block_objectives.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "seed {seed} outer {} inner {}", row.outer, row.inner);
            }
        }
    }
}

#[test]
fn solves_are_deterministic() {
    let sys = SystemConfig::desk();
    let ch = generate_channels(&sys, 42).unwrap();
    let cfg = SolverConfig::default();
    let a = pbsca_solve(&ch, &sys, &cfg).unwrap();
    let b = pbsca_solve(&ch, &sys, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn schedules_are_feasible_for_every_scheme() {
    let sys = SystemConfig::desk();
    let cfg = SolverConfig::default();
    let bench = BenchmarkConfig::default();
    for seed in 0..3 {
        let ch = generate_channels(&sys, seed).unwrap();
        for res in [
            pbsca_solve(&ch, &sys, &cfg).unwrap(),
            solve_sa(&ch, &sys, &cfg, &bench).unwrap(),
            solve_ua(&ch, &sys, &cfg).unwrap(),
            solve_rs(&ch, &sys, &cfg, seed).unwrap(),
        ] {
            res.check_feasible(&sys).unwrap();
            assert_eq!(res.scheduled_users.len(), sys.num_scheduled);
            let rate: f64 = res.user_rates.iter().sum();
            assert!((rate - res.sum_rate).abs() < 1e-12);
        }
    }
}

#[test]
fn vacuous_cardinality_schedules_everyone() {
    let sys = SystemConfig {
        num_users: 4,
        num_scheduled: 4,
        ..SystemConfig::desk()
    };
    let ch = generate_channels(&sys, 3).unwrap();
    let cfg = SolverConfig::default();
    let res = pbsca_solve(&ch, &sys, &cfg).unwrap();
    assert_eq!(res.scheduled_users, vec![0, 1, 2, 3]);
    assert!(res.converged);
    assert_eq!(res.trace.outer.len(), 1);
    assert_eq!(res.trace.outer[0].penalty_value, 0.0);
    let rs = solve_rs(&ch, &sys, &cfg, 3).unwrap();
    assert_eq!(rs.scheduled_users, res.scheduled_users);
}

#[test]
fn beats_best_single_user_schedule() {
    let sys = exhaustive_system();
    let cfg = SolverConfig::default();
    for seed in 0..8 {
        let ch = generate_channels(&sys, seed).unwrap();
        let res = pbsca_solve(&ch, &sys, &cfg).unwrap();
        let best = (0..sys.num_users)
            .map(|k| {
                let mask: Vec<bool> = (0..sys.num_users).map(|j| j == k).collect();
                let opts = EngineOptions {
                    regularizer: PowerRegularizer::FixedSupport(mask),
                    adapt_bits: true,
                };
                solve_with(&ch, &sys, &cfg, &opts).unwrap().sum_rate
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(res.sum_rate >= 0.95 * best, "seed {seed}: {} vs {best}", res.sum_rate);
    }
}

#[test]
fn penalty_shrinks_across_outer_iterations() {
    let sys = SystemConfig::desk();
    let cfg = SolverConfig::default();
    let mut monotone = 0;
    let runs = 20;
    for seed in 0..runs {
        let ch = generate_channels(&sys, 500 + seed).unwrap();
        let res = pbsca_solve(&ch, &sys, &cfg).unwrap();
        let pen: Vec<f64> = res.trace.outer.iter().map(|o| o.penalty_value).collect();
        if pen.windows(2).all(|w| w[1] <= w[0] + 1e-12) {
            monotone += 1;
        }
    }
    assert!(monotone * 10 >= runs * 9, "{monotone} of {runs}");
}

#[test]
fn finalize_respects_existing_sparse_support() {
    let sys = SystemConfig::desk();
    let cfg = SolverConfig::default();
    let (ch, mut vars) = instance(&sys, 8);
    vars.d = vec![sys.d_avg; sys.num_rf_chains];
    for k in [0, 2, 4, 6, 7, 8, 9] {
        vars.p[k] = 0.0;
    }
    vars.p[1] = 0.0; // now only 3 and 5 are active: padding needed
    let res = finalize_schedule(&vars, &ch, &sys, &cfg).unwrap();
    assert!(res.padded);
    assert_eq!(res.scheduled_users, vec![0, 1, 3, 5]);
    assert_eq!(res.p[0], cfg.power_floor);
    res.check_feasible(&sys).unwrap();

    let (ch, mut vars) = instance(&sys, 8);
    vars.d = vec![sys.d_avg; sys.num_rf_chains];
    let keep = [1, 3, 5, 9];
    for k in 0..sys.num_users {
        if !keep.contains(&k) {
            vars.p[k] = 0.0;
        }
    }
    let res = finalize_schedule(&vars, &ch, &sys, &cfg).unwrap();
    assert!(!res.padded);
    assert_eq!(res.scheduled_users, keep.to_vec());
    for &k in &keep {
        assert_eq!(res.p[k], vars.p[k]);
    }
}

#[test]
fn finalize_drops_the_weakest_and_breaks_ties_by_index() {
    let sys = SystemConfig::desk();
    let cfg = SolverConfig::default();
    let (ch, mut vars) = instance(&sys, 2);
    vars.d = vec![sys.d_avg; sys.num_rf_chains];
    vars.p = vec![0.0, 5.0, 0.0, 4.0, 1.0, 0.0, 3.0, 0.0, 2.0, 0.0];
    let res = finalize_schedule(&vars, &ch, &sys, &cfg).unwrap();
    assert_eq!(res.scheduled_users, vec![1, 3, 6, 8]);

    // users 2, 5 and 7 tie for the last slot
    vars.p = vec![0.0, 5.0, 2.0, 4.0, 0.0, 2.0, 3.0, 2.0, 0.0, 0.0];
    let res = finalize_schedule(&vars, &ch, &sys, &cfg).unwrap();
    assert_eq!(res.scheduled_users, vec![1, 2, 3, 6]);
    // relabelling the tied users moves the winner with the lowest index
    vars.p = vec![0.0, 5.0, 0.0, 4.0, 0.0, 2.0, 3.0, 2.0, 0.0, 2.0];
    let res = finalize_schedule(&vars, &ch, &sys, &cfg).unwrap();
    assert_eq!(res.scheduled_users, vec![1, 3, 5, 6]);
}

#[test]
fn finalize_rounds_bits_within_budget() {
    let sys = SystemConfig::desk();
    let cfg = SolverConfig::default();
    let (ch, mut vars) = instance(&sys, 6);
    vars.d = vec![3.4, 2.6, 3.5, 1.2, 4.9, 2.8, 3.3, 2.3];
    let res = finalize_schedule(&vars, &ch, &sys, &cfg).unwrap();
    assert!(res.d_integer.iter().sum::<u32>() as f64 <= sys.bit_budget());
    for (x, r) in vars.d.iter().zip(&res.d_integer) {
        assert!(*r as f64 == x.floor() || *r as f64 == x.ceil());
    }
}

#[test]
fn uniform_allocation_keeps_bits_fixed() {
    let sys = SystemConfig::desk();
    let cfg = SolverConfig::default();
    let ch = generate_channels(&sys, 4).unwrap();
    let res = solve_ua(&ch, &sys, &cfg).unwrap();
    assert!(res.d_integer.iter().all(|&d| d == 3));
    assert_eq!(res.d_integer.iter().sum::<u32>(), 24);
    let frac = SystemConfig { d_avg: 2.5, ..sys };
    assert!(matches!(solve_ua(&ch, &frac, &cfg), Err(Error::InvalidInput(_))));
}

#[test]
fn degenerate_budget_makes_uniform_allocation_exact() {
    let sys = SystemConfig {
        d_min: 3,
        d_max: 3,
        d_avg: 3.0,
        ..SystemConfig::desk()
    };
    let cfg = SolverConfig::default();
    for seed in 0..3 {
        let ch = generate_channels(&sys, seed).unwrap();
        let a = pbsca_solve(&ch, &sys, &cfg).unwrap();
        let b = solve_ua(&ch, &sys, &cfg).unwrap();
        assert!((a.sum_rate - b.sum_rate).abs() < 1e-8);
        assert_eq!(a.scheduled_users, b.scheduled_users);
    }
}

#[test]
fn random_schedule_uses_its_drawn_support() {
    let sys = SystemConfig::desk();
    let cfg = SolverConfig::default();
    let ch = generate_channels(&sys, 12).unwrap();
    for seed in 0..3 {
        let res = solve_rs(&ch, &sys, &cfg, seed).unwrap();
        let mask = random_support(sys.num_users, sys.num_scheduled, seed);
        let expect: Vec<usize> = (0..sys.num_users).filter(|&k| mask[k]).collect();
        assert_eq!(res.scheduled_users, expect);
        assert!(res.converged);
    }
}

#[test]
fn random_scheduling_loses_on_average_at_tiny_scale() {
    let sys = SystemConfig {
        num_antennas: 8,
        num_rf_chains: 4,
        num_users: 6,
        num_scheduled: 2,
        ..SystemConfig::desk()
    };
    let cfg = SolverConfig::default();
    let (mut ours, mut rs) = (0.0, 0.0);
    for seed in 0..20 {
        let ch = generate_channels(&sys, seed).unwrap();
        ours += pbsca_solve(&ch, &sys, &cfg).unwrap().sum_rate;
        rs += solve_rs(&ch, &sys, &cfg, seed).unwrap().sum_rate;
    }
    assert!(ours > rs, "{ours} vs {rs}");
}

#[test]
fn smoothed_baseline_returns_exactly_n_users() {
    let sys = SystemConfig::desk();
    let cfg = SolverConfig::default();
    let ch = generate_channels(&sys, 21).unwrap();
    let res = solve_sa(&ch, &sys, &cfg, &BenchmarkConfig::default()).unwrap();
    assert_eq!(res.scheduled_users.len(), sys.num_scheduled);
    assert_eq!(res.p.iter().filter(|&&p| p > 0.0).count(), sys.num_scheduled);
}

#[test]
fn mismatched_channels_are_rejected() {
    let sys = SystemConfig::desk();
    let other = SystemConfig {
        num_users: 6,
        ..SystemConfig::desk()
    };
    let ch = generate_channels(&other, 1).unwrap();
    assert!(matches!(
        pbsca_solve(&ch, &sys, &SolverConfig::default()),
        Err(Error::InvalidInput(_))
    ));
}
