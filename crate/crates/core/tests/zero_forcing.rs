mod common;

use common::{design_gains, efficiency_root, water_fill_sorted};
use proptest::prelude::*;
use seebf_core::baseline_zf::{
    check_zf_feasibility, design_zf_subspaces, nulling_residuals, solve_zf, water_fill, water_fill_kkt_residual,
    NullingMode, DINKELBACH_TOL,
};
use seebf_core::metrics;
use seebf_core::model::{generate_channels, SystemConfig};
use seebf_core::optimizer::Termination;
use seebf_core::Error;

fn reference(streams: usize) -> SystemConfig {
    SystemConfig { streams, ..SystemConfig::reference_defaults() }
}

#[test]
fn counting_test_matches_reference_setups() {
    let ok = check_zf_feasibility(&reference(3));
    assert!(ok.feasible && ok.eve_nulling && ok.interference_nulling && ok.reasons.is_empty());

    let bad = check_zf_feasibility(&reference(4));
    assert!(!bad.feasible);
    assert!(!bad.eve_nulling, "12 < 9 + 4");
    assert!(!bad.reasons.is_empty());

    assert!(check_zf_feasibility(&reference(0)).feasible);
}

#[test]
fn single_pair_only_nulls_the_eavesdropper() {
    for (n, n_e, d1) in [(4, 2, 2), (4, 3, 1), (5, 2, 3), (3, 2, 2)] {
        let cfg = SystemConfig::with_dims(1, n, 2, n_e, d1.min(2));
        let ch = generate_channels(&cfg, 7);
        let want = n >= n_e + cfg.streams;
        assert_eq!(check_zf_feasibility(&cfg).eve_nulling, want);
        match design_zf_subspaces(&ch, &cfg) {
            Ok(design) => {
                assert!(want);
                assert_eq!(design.dims(), vec![n - n_e]);
            }
            Err(Error::ZfInfeasible(msg)) => {
                assert!(!want, "{msg}");
                assert!(msg.contains(&format!("dimension {}", n - n_e)), "{msg}");
            }
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn full_nulling_gives_exact_efficiency() {
    // N = 8 ≥ N_e + (D − 1) N_r + d_1 = 7: every cross link is nulled.
    let cfg = SystemConfig::with_dims(2, 8, 2, 3, 2);
    for seed in 0..5 {
        let ch = generate_channels(&cfg, seed);
        let run = solve_zf(&ch, &cfg).unwrap();
        assert_eq!(run.design.mode, NullingMode::Full);
        assert_eq!(run.outcome.termination, Termination::Converged);
        let v = &run.outcome.v;
        let res = nulling_residuals(&ch, &run.design, v);
        assert!(res.eve_basis <= 1e-10 && res.interference <= 1e-10, "{res:?}");
        for j in 0..cfg.users {
            assert!(metrics::eavesdropper_throughput(&ch, v, &cfg, j).unwrap() <= 1e-12);
            let psi = metrics::user_interference(&ch, v, j);
            assert!(psi.norm() <= 1e-12 * v.v.iter().map(|m| m.norm_squared()).sum::<f64>().max(1.0));
            assert!(v.power(j) <= cfg.p_max * (1.0 + 1e-12));
        }
        // With nothing leaking, the exact efficiency is the Dinkelbach ratio.
        let see = metrics::see_objective(&ch, v, &cfg).unwrap();
        assert!((see - run.lambda).abs() <= 1e-8 * see, "{see} vs {}", run.lambda);
    }
}

#[test]
fn projected_nulling_at_reference_dims_with_one_stream() {
    let cfg = reference(1);
    for seed in 0..3 {
        let ch = generate_channels(&cfg, seed);
        let run = solve_zf(&ch, &cfg).unwrap();
        assert_eq!(run.design.mode, NullingMode::ReceiveProjected);
        let v = &run.outcome.v;
        let res = nulling_residuals(&ch, &run.design, v);
        let scale = v.v.iter().map(|m| m.norm()).fold(0.0, f64::max);
        assert!(res.eve_basis <= 1e-10, "{res:?}");
        assert!(res.eve <= 1e-10 * scale.max(1.0) && res.interference <= 1e-8, "{res:?}");
        for j in 0..cfg.users {
            assert!(metrics::eavesdropper_throughput(&ch, v, &cfg, j).unwrap() <= 1e-12);
        }
        // A full receiver does at least as well as the projected one.
        let see = metrics::see_objective(&ch, v, &cfg).unwrap();
        assert!(see >= run.lambda * (1.0 - 1e-9), "{see} < {}", run.lambda);
    }
}

#[test]
fn three_streams_at_reference_dims_is_reported_infeasible() {
    // The counting test passes but the stacked constraints leave no room.
    assert!(check_zf_feasibility(&reference(3)).feasible);
    let cfg = reference(3);
    for seed in 0..3 {
        let ch = generate_channels(&cfg, seed);
        match solve_zf(&ch, &cfg) {
            Err(Error::ZfInfeasible(msg)) => assert!(msg.contains("need 3"), "{msg}"),
            other => panic!("expected an infeasible design, got {other:?}"),
        }
    }
    let cfg = reference(4);
    let ch = generate_channels(&cfg, 0);
    assert!(matches!(solve_zf(&ch, &cfg), Err(Error::ZfInfeasible(_))));
}

#[test]
fn water_filling_hand_example() {
    // G = diag(2, 1), σ = 1: gains 4 and 1, price 0.1, loose cap.
    // 1 / (1/g + p) = 0.1 gives p = 10 − 1/g.
    let wf = water_fill(&[4.0, 1.0], 0.1, 1e6).unwrap();
    assert!((wf.loads[0] - 9.75).abs() <= 1e-12);
    assert!((wf.loads[1] - 9.0).abs() <= 1e-12);
    assert_eq!(wf.mu, 0.0);
    assert!(water_fill_kkt_residual(&[4.0, 1.0], 0.1, &wf) <= 1e-12);
}

#[test]
fn water_filling_with_binding_cap() {
    // Cap 2 with gains 4, 1: level L solves (L − 1/4) + (L − 1) = 2.
    let wf = water_fill(&[4.0, 1.0], 0.1, 2.0).unwrap();
    assert!((wf.level - 1.625).abs() <= 1e-12);
    assert!((wf.loads[0] - 1.375).abs() <= 1e-9 && (wf.loads[1] - 0.625).abs() <= 1e-9);
    assert!((wf.mu - (1.0 / 1.625 - 0.1)).abs() <= 1e-9);
    // Cap 0.5: only the strong mode is active.
    let wf = water_fill(&[4.0, 1.0], 0.0, 0.5).unwrap();
    assert!((wf.loads[0] - 0.5).abs() <= 1e-12 && wf.loads[1] == 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn water_filling_agrees_with_sorted_oracle(
        gains in prop::collection::vec(0.0f64..50.0, 1..6),
        price in 0.0f64..2.0,
        cap in 0.01f64..100.0,
    ) {
        let wf = water_fill(&gains, price, cap).unwrap();
        let want = water_fill_sorted(&gains, price, cap);
        for (a, b) in wf.loads.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-8 * cap.max(1.0), "{:?} vs {:?}", wf.loads, want);
        }
        prop_assert!(wf.power() <= cap * (1.0 + 1e-12));
        prop_assert!(water_fill_kkt_residual(&gains, price, &wf) <= 1e-8);
    }
}

#[test]
fn dinkelbach_reaches_the_oracle_fixed_point() {
    for (cfg, seeds) in [(SystemConfig::with_dims(2, 8, 2, 3, 2), 0..4), (reference(1), 0..2)] {
        for seed in seeds {
            let ch = generate_channels(&cfg, seed);
            let run = solve_zf(&ch, &cfg).unwrap();
            let last = run.steps.last().unwrap();
            assert!(last.residual.abs() <= DINKELBACH_TOL);
            assert!(run.steps.iter().all(|s| s.kkt <= 1e-8));
            for w in run.steps.windows(2) {
                assert!(w[1].lambda > w[0].lambda, "λ must increase strictly: {:?}", run.steps);
            }
            // The returned efficiency is the ratio at the final inner solution.
            assert!((last.rate / last.power - run.lambda).abs() <= DINKELBACH_TOL / last.power);
            let oracle = efficiency_root(&design_gains(&run.design, &cfg), &cfg);
            assert!((run.lambda - oracle).abs() <= 1e-8 * oracle, "{} vs {oracle}", run.lambda);
        }
    }
}
