use seebf_core::metrics;
use seebf_core::model::{auxiliary_rng, generate_channels, BeamformerSet, SystemConfig};
use seebf_core::optimizer::{
    initialize_feasible_ee, initialize_feasible_see, path_follow, solve_problem, InitPoint, Objective, RunOptions,
    Termination, ASCENT_SLACK, FEAS_TOL,
};
use seebf_core::Error;

fn small() -> SystemConfig {
    SystemConfig::with_dims(2, 4, 2, 3, 1).with_qos_bits(0.5)
}

fn assert_monotone_and_feasible(kind: Objective, cfg: &SystemConfig, seed: u64) {
    let ch = generate_channels(cfg, seed);
    let out = solve_problem(kind, &ch, cfg, &mut auxiliary_rng(seed, 0), &RunOptions::default()).unwrap();
    assert!(matches!(out.termination, Termination::Converged | Termination::MaxIters), "{kind:?} seed {seed}: {out:?}");
    let mut prev = f64::NEG_INFINITY;
    for it in &out.trace {
        let exact = kind.exact(&ch, &it.v, cfg).unwrap();
        assert!((exact - it.objective).abs() <= 1e-12 * exact.abs().max(1.0));
        assert!(exact >= prev - ASCENT_SLACK * exact.abs().max(1.0), "{kind:?} seed {seed}: {prev} -> {exact}");
        prev = exact;
        assert!(it.power_slack.iter().all(|&s| s >= -FEAS_TOL));
        assert!(it.qos_slack.iter().all(|&s| s >= -FEAS_TOL), "{:?}", it.qos_slack);
    }
    assert!((out.objective - prev).abs() <= 1e-12 * prev.abs().max(1.0) || out.trace.is_empty());
}

#[test]
fn see_loop_ascends_and_stays_feasible() {
    for seed in 0..5 {
        assert_monotone_and_feasible(Objective::SecrecyEnergyEfficiency, &small(), seed);
    }
}

#[test]
fn ee_loop_respects_the_wiretap_cap() {
    let cfg = small();
    for seed in 0..3 {
        assert_monotone_and_feasible(Objective::EnergyEfficiency, &cfg, seed);
        let ch = generate_channels(&cfg, seed);
        let out = solve_problem(Objective::EnergyEfficiency, &ch, &cfg, &mut auxiliary_rng(seed, 0), &RunOptions::default()).unwrap();
        for j in 0..cfg.users {
            let fe = metrics::eavesdropper_throughput(&ch, &out.v, &cfg, j).unwrap();
            assert!(fe <= cfg.eps_secrecy + FEAS_TOL, "wiretap rate {fe}");
        }
    }
}

#[test]
fn sum_secrecy_loop_ascends() {
    for seed in 0..3 {
        assert_monotone_and_feasible(Objective::SumSecrecy, &small(), seed);
    }
}

#[test]
fn see_beats_its_starting_point() {
    let cfg = small();
    let ch = generate_channels(&cfg, 8);
    let init = initialize_feasible_see(&ch, &cfg, &mut auxiliary_rng(8, 0)).unwrap();
    let start = metrics::see_objective(&ch, &init.v, &cfg).unwrap();
    let out = path_follow(Objective::SecrecyEnergyEfficiency, &ch, &cfg, &init, &RunOptions::default()).unwrap();
    assert!(out.objective >= start);
    assert!(out.iterations() >= 1);
}

#[test]
fn zero_qos_still_requires_non_negative_secrecy() {
    let cfg = small().with_qos_bits(0.0);
    for seed in 0..3 {
        let ch = generate_channels(&cfg, seed);
        let init = initialize_feasible_see(&ch, &cfg, &mut auxiliary_rng(seed, 0)).unwrap();
        for j in 0..cfg.users {
            assert!(metrics::secrecy_throughput(&ch, &init.v, &cfg, j).unwrap() >= 0.0);
        }
        let out = path_follow(Objective::SecrecyEnergyEfficiency, &ch, &cfg, &init, &RunOptions::default()).unwrap();
        assert_eq!(out.termination, Termination::Converged);
        assert!(out.objective >= 0.0);
    }
}

#[test]
fn unreachable_qos_reports_init_failure() {
    let cfg = small().with_qos_bits(1e3);
    let ch = generate_channels(&cfg, 1);
    match initialize_feasible_see(&ch, &cfg, &mut auxiliary_rng(1, 0)) {
        Err(Error::InitFailed { best_ratio, .. }) => assert!(best_ratio < 1.0),
        other => panic!("expected InitFailed, got {other:?}"),
    }
    let out = solve_problem(Objective::SecrecyEnergyEfficiency, &ch, &cfg, &mut auxiliary_rng(1, 0), &RunOptions::default()).unwrap();
    assert_eq!(out.termination, Termination::InitFailed);
    assert!(out.objective.is_nan());
    assert!(out.trace.is_empty());
}

#[test]
fn ee_initialization_meets_both_margins() {
    let cfg = small();
    let ch = generate_channels(&cfg, 4);
    let init = initialize_feasible_ee(&ch, &cfg, &mut auxiliary_rng(4, 0)).unwrap();
    for j in 0..cfg.users {
        assert!(metrics::user_throughput(&ch, &init.v, &cfg, j).unwrap() >= cfg.qos_nats[j] - FEAS_TOL);
        assert!(metrics::eavesdropper_throughput(&ch, &init.v, &cfg, j).unwrap() <= cfg.eps_secrecy + FEAS_TOL);
    }
}

#[test]
fn restart_from_a_converged_point_stops_quickly() {
    let cfg = small();
    let ch = generate_channels(&cfg, 6);
    let first = solve_problem(Objective::SecrecyEnergyEfficiency, &ch, &cfg, &mut auxiliary_rng(6, 0), &RunOptions::default()).unwrap();
    assert_eq!(first.termination, Termination::Converged);
    let init = InitPoint { t: metrics::total_power(&first.v, &cfg), v: first.v.clone(), iterations: 0, score: f64::NAN };
    let again = path_follow(Objective::SecrecyEnergyEfficiency, &ch, &cfg, &init, &RunOptions::default()).unwrap();
    assert_eq!(again.termination, Termination::Converged);
    assert!(again.iterations() <= 2, "{} iterations", again.iterations());
    assert!(again.objective >= first.objective - ASCENT_SLACK);
}

#[test]
fn infeasible_start_is_rejected() {
    let cfg = small();
    let ch = generate_channels(&cfg, 0);
    let init = InitPoint { v: BeamformerSet::zeros(&cfg), t: cfg.circuit_power, iterations: 0, score: 0.0 };
    let err = path_follow(Objective::SecrecyEnergyEfficiency, &ch, &cfg, &init, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidValue { ref key, .. } if key == "init"), "{err}");
}

#[test]
fn runs_are_reproducible() {
    let cfg = small();
    let ch = generate_channels(&cfg, 12);
    let a = solve_problem(Objective::SecrecyEnergyEfficiency, &ch, &cfg, &mut auxiliary_rng(12, 0), &RunOptions::default()).unwrap();
    let b = solve_problem(Objective::SecrecyEnergyEfficiency, &ch, &cfg, &mut auxiliary_rng(12, 0), &RunOptions::default()).unwrap();
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.v, b.v);
}
