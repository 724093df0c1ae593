use seebf_core::linalg::{c, gram, identity, logdet_pd, CMat, C64};
use seebf_core::metrics::*;
use seebf_core::model::{auxiliary_rng, generate_channels, random_cn_matrix, BeamformerSet, ChannelSet, SystemConfig};

fn random_beams(cfg: &SystemConfig, seed: u64) -> BeamformerSet {
    let mut rng = auxiliary_rng(seed, 7);
    BeamformerSet {
        v: (0..cfg.users).map(|_| random_cn_matrix(&mut rng, cfg.tx_antennas, cfg.streams)).collect(),
    }
}

fn det2(m: &CMat) -> C64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

fn inv2(m: &CMat) -> CMat {
    let d = det2(m);
    CMat::from_row_slice(2, 2, &[m[(1, 1)] / d, -m[(0, 1)] / d, -m[(1, 0)] / d, m[(0, 0)] / d])
}

#[test]
fn zero_beamformers_give_zero_rates() {
    let cfg = SystemConfig::with_dims(2, 3, 2, 2, 1);
    let ch = generate_channels(&cfg, 1);
    let v = BeamformerSet::zeros(&cfg);
    for j in 0..2 {
        assert_eq!(user_throughput(&ch, &v, &cfg, j).unwrap(), 0.0);
        assert_eq!(eavesdropper_throughput(&ch, &v, &cfg, j).unwrap(), 0.0);
    }
}

#[test]
fn scalar_link_gives_ln_two() {
    let cfg = SystemConfig::with_dims(1, 1, 1, 1, 1);
    let one = CMat::from_element(1, 1, c(1.0, 0.0));
    let ch = ChannelSet { user: vec![vec![one.clone()]], eve: vec![one.clone()], seed: 0 };
    let v = BeamformerSet { v: vec![one] };
    let f = user_throughput(&ch, &v, &cfg, 0).unwrap();
    assert!((f - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn user_rate_matches_naive_two_by_two_determinant() {
    let cfg = SystemConfig::with_dims(2, 3, 2, 2, 1);
    let ch = generate_channels(&cfg, 7);
    let v = random_beams(&cfg, 7);
    for j in 0..2 {
        let l = &ch.user[j][j] * &v.v[j];
        let other = 1 - j;
        let i = &ch.user[other][j] * &v.v[other];
        let mut s = &i * i.adjoint();
        s[(0, 0)] += c(cfg.noise_var(j), 0.0);
        s[(1, 1)] += c(cfg.noise_var(j), 0.0);
        let m = CMat::identity(2, 2) + (&l * l.adjoint()) * inv2(&s);
        let want = det2(&m).re.ln();
        let got = user_throughput(&ch, &v, &cfg, j).unwrap();
        assert!((got - want).abs() <= 1e-10 * want.abs(), "{got} vs {want}");
    }
}

#[test]
fn single_user_wiretap_has_no_interference() {
    let cfg = SystemConfig::with_dims(1, 3, 2, 2, 2);
    let ch = generate_channels(&cfg, 3);
    let v = random_beams(&cfg, 3);
    let e = &ch.eve[0] * &v.v[0];
    let direct = logdet_pd(&(identity(2) + gram(&e).unscale(cfg.eve_noise_var())), "t").unwrap();
    let got = eavesdropper_throughput(&ch, &v, &cfg, 0).unwrap();
    assert!((got - direct).abs() < 1e-12);
}

#[test]
fn wiretap_rate_forms_agree() {
    for seed in 0..100 {
        let cfg = SystemConfig::with_dims(3, 4, 2, 3, 2);
        let ch = generate_channels(&cfg, seed);
        let v = random_beams(&cfg, seed);
        for j in 0..3 {
            let a = eavesdropper_throughput(&ch, &v, &cfg, j).unwrap();
            let b = eavesdropper_throughput_split(&ch, &v, &cfg, j).unwrap();
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-12), "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn power_and_see_arithmetic() {
    let mut cfg = SystemConfig::with_dims(2, 2, 1, 1, 1);
    cfg.circuit_power = 5.0;
    let ch = generate_channels(&cfg, 0);
    let zero = BeamformerSet::zeros(&cfg);
    assert_eq!(total_power(&zero, &cfg), 5.0);
    assert_eq!(see_objective(&ch, &zero, &cfg).unwrap(), 0.0);

    cfg.circuit_power = 1.0;
    let v = BeamformerSet {
        v: vec![
            CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 1.0)]),
            CMat::from_column_slice(2, 1, &[c(1.0, 1.0), c(1.0, 0.0)]),
        ],
    };
    assert!((total_power(&v, &cfg) - 6.0).abs() < 1e-15);
}

#[test]
fn see_is_sum_secrecy_over_power() {
    let cfg = SystemConfig::with_dims(3, 4, 2, 3, 1);
    let ch = generate_channels(&cfg, 11);
    let v = random_beams(&cfg, 11);
    let mut num = 0.0;
    for j in 0..3 {
        num += user_throughput(&ch, &v, &cfg, j).unwrap() - eavesdropper_throughput_split(&ch, &v, &cfg, j).unwrap();
    }
    let p = cfg.zeta * v.v.iter().map(|m| m.norm_squared()).sum::<f64>() + cfg.circuit_power;
    let want = num / p;
    let got = see_objective(&ch, &v, &cfg).unwrap();
    assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
}

#[test]
fn feasibility_report() {
    let cfg = SystemConfig::with_dims(2, 3, 2, 2, 1);
    let ch = generate_channels(&cfg, 2);
    let rep = check_feasible(&ch, &BeamformerSet::zeros(&cfg), &cfg, 1e-9).unwrap();
    assert!(rep.power_ok_all());
    assert!(rep.qos_ok.iter().all(|ok| !ok));

    let v = random_beams(&cfg, 2);
    let scaled = BeamformerSet {
        v: v.v.iter().map(|m| m.scale((cfg.p_max / m.norm_squared()).sqrt())).collect(),
    };
    let rep = check_feasible(&ch, &scaled, &cfg, 0.0).unwrap();
    // Exact boundary up to the rounding of the rescale.
    assert!(rep.power_slack.iter().all(|s| s.abs() < 1e-12));
}

#[test]
fn dimension_mismatch_is_reported() {
    let cfg = SystemConfig::with_dims(2, 3, 2, 2, 1);
    let ch = generate_channels(&cfg, 2);
    let v = BeamformerSet { v: vec![CMat::zeros(3, 1)] };
    assert!(matches!(user_throughput(&ch, &v, &cfg, 0), Err(seebf_core::Error::DimensionMismatch(_))));
}

#[test]
fn adding_interference_never_increases_rate() {
    for seed in 0..30 {
        let cfg = SystemConfig::with_dims(3, 4, 2, 3, 1);
        let ch = generate_channels(&cfg, seed);
        let v = random_beams(&cfg, seed);
        let mut quiet = v.clone();
        quiet.v[2] = CMat::zeros(4, 1);
        for j in 0..2 {
            let loud = user_throughput(&ch, &v, &cfg, j).unwrap();
            let calm = user_throughput(&ch, &quiet, &cfg, j).unwrap();
            assert!(loud <= calm + 1e-12);
        }
    }
}

#[test]
fn rate_invariant_under_unitary_rotation() {
    let cfg = SystemConfig::with_dims(2, 4, 3, 3, 2);
    let ch = generate_channels(&cfg, 5);
    let v = random_beams(&cfg, 5);
    let (cs, sn) = (0.6f64, 0.8f64);
    let u = CMat::from_row_slice(2, 2, &[c(cs, 0.0), c(0.0, sn), c(0.0, sn), c(cs, 0.0)]);
    let mut rotated = v.clone();
    rotated.v[0] = &v.v[0] * &u;
    for j in 0..2 {
        let a = user_throughput(&ch, &v, &cfg, j).unwrap();
        let b = user_throughput(&ch, &rotated, &cfg, j).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs());
    }
}
