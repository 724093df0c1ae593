//! Reference implementations shared by the integration tests. They are
//! deliberately naive and do not call into the library's solvers.
#![allow(dead_code)]

use seebf_core::baseline_zf::ZfDesign;
use seebf_core::model::SystemConfig;

/// Closed-form water-filling by sorting the gains: maximizes
/// `Σ ln(1 + g p) − price Σ p` over `p ≥ 0, Σ p ≤ cap`.
pub fn water_fill_sorted(gains: &[f64], price: f64, cap: f64) -> Vec<f64> {
    if price > 0.0 {
        let free: Vec<f64> = gains.iter().map(|&g| if g > 0.0 { (1.0 / price - 1.0 / g).max(0.0) } else { 0.0 }).collect();
        if free.iter().sum::<f64>() <= cap {
            return free;
        }
    }
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    let mut loads = vec![0.0; gains.len()];
    let mut inv_sum = 0.0;
    for k in 0..order.len() {
        inv_sum += 1.0 / gains[order[k]];
        let level = (cap + inv_sum) / (k + 1) as f64;
        let next_floor = order.get(k + 1).map(|&i| 1.0 / gains[i]).unwrap_or(f64::INFINITY);
        if level <= next_floor {
            for &i in &order[..=k] {
                loads[i] = level - 1.0 / gains[i];
            }
            return loads;
        }
    }
    loads
}

/// Per-user mode gains `s_i² / σ²` of the effective channels, largest `d_1`.
pub fn design_gains(design: &ZfDesign, cfg: &SystemConfig) -> Vec<Vec<f64>> {
    design
        .effective
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let mut s: Vec<f64> = g.clone().svd(false, false).singular_values.iter().map(|v| v * v).collect();
            s.sort_by(|a, b| b.total_cmp(a));
            s.truncate(cfg.streams);
            s.iter().map(|v| v / cfg.noise_var(j)).collect()
        })
        .collect()
}

/// `max_p Σ rate − λ (ζ Σ p + P_c)` with per-user caps, via the sorted oracle.
pub fn parametric_value(gains: &[Vec<f64>], lambda: f64, cfg: &SystemConfig) -> f64 {
    let mut rate = 0.0;
    let mut power = cfg.circuit_power;
    for g in gains {
        let p = water_fill_sorted(g, lambda * cfg.zeta, cfg.p_max);
        rate += g.iter().zip(&p).map(|(g, p)| (1.0 + g * p).ln()).sum::<f64>();
        power += cfg.zeta * p.iter().sum::<f64>();
    }
    rate - lambda * power
}

/// Root of the decreasing parametric value by bracketing and bisection.
pub fn efficiency_root(gains: &[Vec<f64>], cfg: &SystemConfig) -> f64 {
    let mut hi = 1.0;
    while parametric_value(gains, hi, cfg) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if parametric_value(gains, mid, cfg) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
