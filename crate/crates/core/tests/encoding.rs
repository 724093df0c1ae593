use seebf_core::conic::BlockRole;
use seebf_core::metrics;
use seebf_core::model::{auxiliary_rng, generate_channels, random_cn_matrix, BeamformerSet, SystemConfig};
use seebf_core::optimizer::{encode_step, matched_filter_seed, Objective};
use seebf_core::surrogate::{build_fractional_minorant, build_secrecy_minorant};

fn perturbed(anchor: &BeamformerSet, cfg: &SystemConfig, seed: u64, size: f64) -> BeamformerSet {
    let mut rng = auxiliary_rng(seed, 40);
    let v = BeamformerSet {
        v: anchor.v.iter().map(|a| a + random_cn_matrix(&mut rng, cfg.tx_antennas, cfg.streams).scale(size)).collect(),
    };
    // Keep each block inside the budget.
    BeamformerSet {
        v: v.v.iter().map(|m| if m.norm_squared() > cfg.p_max { m.scale((cfg.p_max / m.norm_squared()).sqrt()) } else { m.clone() }).collect(),
    }
}

#[test]
fn reference_dimensions_give_217_variables_and_7_groups() {
    let cfg = SystemConfig::reference_defaults();
    let ch = generate_channels(&cfg, 0);
    let v = matched_filter_seed(&ch, &cfg, &mut auxiliary_rng(0, 0));
    let enc = encode_step(Objective::SecrecyEnergyEfficiency, &ch, &v, metrics::total_power(&v, &cfg), &cfg).unwrap();
    assert_eq!(enc.program.core_vars(), 217);
    assert_eq!(enc.program.core_quadratic_groups(), 7);
    let power = enc.program.blocks.iter().filter(|b| matches!(b.role, BlockRole::Power(_))).count();
    let qos = enc.program.blocks.iter().filter(|b| matches!(b.role, BlockRole::Qos(_))).count();
    let epi = enc.program.blocks.iter().filter(|b| b.role == BlockRole::PowerEpigraph).count();
    assert_eq!((power, qos, epi), (3, 3, 1));
}

#[test]
fn counts_follow_the_dimension_formula() {
    for (d, n, nr, ne, d1) in [(1, 2, 1, 1, 1), (2, 4, 2, 3, 1), (2, 5, 3, 2, 2), (4, 3, 2, 2, 2)] {
        let cfg = SystemConfig::with_dims(d, n, nr, ne, d1);
        let ch = generate_channels(&cfg, 1);
        let v = matched_filter_seed(&ch, &cfg, &mut auxiliary_rng(1, 0));
        let enc = encode_step(Objective::SecrecyEnergyEfficiency, &ch, &v, metrics::total_power(&v, &cfg), &cfg).unwrap();
        assert_eq!(enc.program.core_vars(), 2 * d * n * d1 + 1);
        assert_eq!(enc.program.core_quadratic_groups(), 2 * d + 1);
    }
}

/// The encoded objective at a completed point equals the sum of the
/// fractional minorants evaluated directly, and the completed point violates
/// no cone whenever the surrogate constraints hold.
#[test]
fn completed_points_reproduce_the_surrogate_program() {
    let cfg = SystemConfig::with_dims(2, 4, 2, 3, 1).with_qos_bits(0.1);
    let mut checked = 0;
    for seed in 0..10u64 {
        let ch = generate_channels(&cfg, seed);
        let anchor = matched_filter_seed(&ch, &cfg, &mut auxiliary_rng(seed, 0));
        let t_bar = metrics::total_power(&anchor, &cfg);
        let enc = encode_step(Objective::SecrecyEnergyEfficiency, &ch, &anchor, t_bar, &cfg).unwrap();
        let surr: Vec<_> = (0..cfg.users).map(|j| build_secrecy_minorant(&ch, &anchor, &cfg, j).unwrap()).collect();
        let fracs: Vec<_> = surr.iter().enumerate().map(|(j, s)| build_fractional_minorant(&s.secrecy, t_bar, j).unwrap()).collect();

        for k in 0..5u64 {
            let v = perturbed(&anchor, &cfg, seed * 10 + k, 0.05 * (k + 1) as f64);
            let t = metrics::total_power(&v, &cfg) * (1.0 + 0.1 * k as f64);
            if fracs.iter().any(|f| f.base.linear_part(&v) < 0.0) {
                continue;
            }
            let direct: f64 = fracs.iter().map(|f| f.value(&v, t)).sum();
            let encoded = enc.objective_at(&v, Some(t));
            assert!((encoded - direct).abs() <= 1e-8 * direct.abs().max(1.0), "seed {seed}: {encoded} vs {direct}");

            let qos_ok = surr.iter().zip(&cfg.qos_nats).all(|(s, r)| s.secrecy.value(&v) >= *r);
            let viol = enc.program.max_violation(&enc.complete(&v, Some(t)));
            if qos_ok {
                assert!(viol <= 1e-8, "seed {seed}: violation {viol}");
            } else {
                assert!(viol > 0.0);
            }
            checked += 1;
        }
    }
    assert!(checked >= 40, "only {checked} points checked");
}

#[test]
fn anchor_is_feasible_and_tight_for_every_objective() {
    let cfg = SystemConfig::with_dims(2, 4, 2, 3, 1).with_qos_bits(0.1);
    for seed in 0..5u64 {
        let ch = generate_channels(&cfg, seed);
        let v = matched_filter_seed(&ch, &cfg, &mut auxiliary_rng(seed, 0));
        let t = metrics::total_power(&v, &cfg);
        let see = metrics::see_objective(&ch, &v, &cfg).unwrap();
        let ee = metrics::ee_objective(&ch, &v, &cfg).unwrap();
        let ss = metrics::sum_secrecy(&ch, &v, &cfg).unwrap();
        let mut loose = cfg.clone();
        loose.eps_secrecy = f64::INFINITY;
        loose.qos_nats = vec![0.0; 2];
        for (kind, exact, c) in [
            (Objective::SecrecyEnergyEfficiency, see, &cfg),
            (Objective::EnergyEfficiency, ee, &loose),
            (Objective::SumSecrecy, ss, &cfg),
        ] {
            let enc = encode_step(kind, &ch, &v, t, c).unwrap();
            let value = enc.objective_at(&v, Some(t));
            assert!((value - exact).abs() <= 1e-8 * exact.abs().max(1.0), "{kind:?}: {value} vs {exact}");
        }
    }
}

#[test]
fn sum_secrecy_objective_is_sum_of_minorants() {
    let cfg = SystemConfig::with_dims(3, 4, 2, 3, 1).with_qos_bits(0.0);
    let ch = generate_channels(&cfg, 3);
    let anchor = matched_filter_seed(&ch, &cfg, &mut auxiliary_rng(3, 0));
    let enc = encode_step(Objective::SumSecrecy, &ch, &anchor, 1.0, &cfg).unwrap();
    for k in 0..10u64 {
        let v = perturbed(&anchor, &cfg, 100 + k, 0.3);
        let want: f64 = (0..3).map(|j| build_secrecy_minorant(&ch, &anchor, &cfg, j).unwrap().secrecy.value(&v)).sum();
        let got = enc.objective_at(&v, None);
        assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    }
}
