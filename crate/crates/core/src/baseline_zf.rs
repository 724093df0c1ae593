//! Zero-forcing baseline: transmit beamformers confined to the null space of
//! the eavesdropper and of the other users' receivers, with powers chosen by
//! Dinkelbach's algorithm over closed-form water-filling.
//!
//! When the antennas do not allow full nulling of every cross link, each user
//! `j` listens through a fixed `d_1`-dimensional receive filter `U_j` (the
//! strongest modes of its own eavesdropper-nulled channel) and the other
//! transmitters only null that projected subspace. Rates of the baseline are
//! then those seen after the receive filter, which is what the design makes
//! interference free.

use std::time::Instant;

use serde::Serialize;

use crate::conic::SolveStatus;
use crate::error::{Error, Result};
use crate::linalg::{fro_norm_sq, gram, null_space, psd_eigen, CMat};
use crate::metrics;
use crate::model::{BeamformerSet, ChannelSet, SystemConfig};
use crate::optimizer::{IterateTrace, Objective, RunOutcome, SolverSummary, Termination};

/// Rank tolerance relative to the largest singular value.
pub const RANK_TOL: f64 = 1e-10;
/// Stopping threshold on the Dinkelbach residual `|F(λ)|`.
pub const DINKELBACH_TOL: f64 = 1e-8;
pub const MAX_DINKELBACH_ITERS: usize = 100;
const MAX_BISECTION_STEPS: usize = 200;

/// Outcome of the antenna-count test for zero forcing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZfFeasibility {
    pub feasible: bool,
    /// `N ≥ N_e + d_1`.
    pub eve_nulling: bool,
    /// `D (N + N_r − N_e − 2 d_1) ≥ (D − 1) d_1`.
    pub interference_nulling: bool,
    pub reasons: Vec<String>,
}

/// Evaluates both counting conditions. Works for `d_1 = 0`, which is
/// trivially feasible.
pub fn check_zf_feasibility(cfg: &SystemConfig) -> ZfFeasibility {
    let d = cfg.users as i64;
    let n = cfg.tx_antennas as i64;
    let n_r = cfg.rx_antennas as i64;
    let n_e = cfg.eve_antennas as i64;
    let d1 = cfg.streams as i64;

    let eve_nulling = n >= n_e + d1;
    let lhs = d * (n + n_r - n_e - 2 * d1);
    let rhs = (d - 1) * d1;
    let interference_nulling = lhs >= rhs;
    let mut reasons = Vec::new();
    if !eve_nulling {
        reasons.push(format!("N = {n} < N_e + d_1 = {}", n_e + d1));
    }
    if !interference_nulling {
        reasons.push(format!("D(N + N_r - N_e - 2 d_1) = {lhs} < (D - 1) d_1 = {rhs}"));
    }
    ZfFeasibility { feasible: eve_nulling && interference_nulling, eve_nulling, interference_nulling, reasons }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NullingMode {
    /// Every cross link `H_{j,l} V_j` is nulled outright.
    Full,
    /// Only the projections `U_lᴴ H_{j,l} V_j` are nulled.
    ReceiveProjected,
}

/// Per-transmitter subspaces: `V_j = T_j W_j`.
#[derive(Debug, Clone)]
pub struct ZfDesign {
    pub mode: NullingMode,
    /// Orthonormal `N × k_j` bases.
    pub basis: Vec<CMat>,
    /// Receive filters `U_j` (`N_r × d_1`, orthonormal); identity-like `N_r × N_r`
    /// in full mode.
    pub receive: Vec<CMat>,
    /// Effective channels `U_jᴴ H_{j,j} T_j`.
    pub effective: Vec<CMat>,
    /// Inner precoders `W_j` (`k_j × d_1`), zero until powers are assigned.
    pub inner: Vec<CMat>,
}

impl ZfDesign {
    pub fn dims(&self) -> Vec<usize> {
        self.basis.iter().map(|t| t.ncols()).collect()
    }

    pub fn beamformers(&self) -> BeamformerSet {
        BeamformerSet { v: self.basis.iter().zip(&self.inner).map(|(t, w)| t * w).collect() }
    }
}

/// Largest nulling residuals of a beamformer set under a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NullingResiduals {
    /// `max_j ‖H_{j,e} T_j‖_F`.
    pub eve_basis: f64,
    /// `max_j ‖H_{j,e} V_j‖_F`.
    pub eve: f64,
    /// `max_{j≠l} ‖U_lᴴ H_{j,l} V_j‖_F`.
    pub interference: f64,
}

pub fn nulling_residuals(ch: &ChannelSet, design: &ZfDesign, v: &BeamformerSet) -> NullingResiduals {
    let d = design.basis.len();
    let mut out = NullingResiduals { eve_basis: 0.0, eve: 0.0, interference: 0.0 };
    for j in 0..d {
        out.eve_basis = out.eve_basis.max(fro_norm_sq(&(&ch.eve[j] * &design.basis[j])).sqrt());
        out.eve = out.eve.max(fro_norm_sq(&(&ch.eve[j] * &v.v[j])).sqrt());
        for l in (0..d).filter(|&l| l != j) {
            let leak = design.receive[l].adjoint() * &ch.user[j][l] * &v.v[j];
            out.interference = out.interference.max(fro_norm_sq(&leak).sqrt());
        }
    }
    out
}

fn infeasible(j: usize, achieved: usize, needed: usize, rows: usize) -> Error {
    Error::ZfInfeasible(format!(
        "transmitter {j}: null space of the {rows} stacked constraint rows has dimension {achieved}, need {needed}"
    ))
}

/// Leading `count` left singular vectors of `a`.
fn dominant_left(a: &CMat, count: usize) -> Result<CMat> {
    let (vals, vecs) = psd_eigen(&gram(a), "receive-filter Gram matrix")?;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&x, &y| vals[y].total_cmp(&vals[x]));
    let mut u = CMat::zeros(a.nrows(), count);
    for (k, &i) in order.iter().take(count).enumerate() {
        u.set_column(k, &vecs.column(i));
    }
    Ok(u)
}

fn stack(blocks: &[CMat], cols: usize) -> CMat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(b);
        at += b.nrows();
    }
    out
}

/// Builds the nulling subspaces for one channel draw.
pub fn design_zf_subspaces(ch: &ChannelSet, cfg: &SystemConfig) -> Result<ZfDesign> {
    cfg.validate()?;
    ch.check_dims(cfg)?;
    let d = cfg.users;
    let n = cfg.tx_antennas;
    let d1 = cfg.streams;

    let full_rows = cfg.eve_antennas + (d - 1) * cfg.rx_antennas;
    let mode = if n >= full_rows + d1 { NullingMode::Full } else { NullingMode::ReceiveProjected };

    let receive: Vec<CMat> = match mode {
        NullingMode::Full => (0..d).map(|_| crate::linalg::identity(cfg.rx_antennas)).collect(),
        NullingMode::ReceiveProjected => {
            let mut filters = Vec::with_capacity(d);
            for j in 0..d {
                let (t_eve, rank) = null_space(&ch.eve[j], RANK_TOL);
                if n - rank < d1 {
                    return Err(infeasible(j, n - rank, d1, cfg.eve_antennas));
                }
                filters.push(dominant_left(&(&ch.user[j][j] * &t_eve), d1)?);
            }
            filters
        }
    };

    let mut basis = Vec::with_capacity(d);
    let mut effective = Vec::with_capacity(d);
    for j in 0..d {
        let mut rows = vec![ch.eve[j].clone()];
        for l in (0..d).filter(|&l| l != j) {
            rows.push(receive[l].adjoint() * &ch.user[j][l]);
        }
        let a = stack(&rows, n);
        let (t, rank) = null_space(&a, RANK_TOL);
        let k = n - rank;
        if k < d1 {
            return Err(infeasible(j, k, d1, a.nrows()));
        }
        effective.push(receive[j].adjoint() * &ch.user[j][j] * &t);
        basis.push(t);
    }
    let inner = basis.iter().map(|t| CMat::zeros(t.ncols(), d1)).collect();
    Ok(ZfDesign { mode, basis, receive, effective, inner })
}

/// Solution of one water-filling problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterFill {
    /// Power per mode, in the order of the input gains.
    pub loads: Vec<f64>,
    /// Water level `1 / (λζ + μ)`.
    pub level: f64,
    /// Multiplier of the trace cap.
    pub mu: f64,
    pub bisection_steps: usize,
}

impl WaterFill {
    pub fn rate(&self, gains: &[f64]) -> f64 {
        gains.iter().zip(&self.loads).map(|(g, p)| (g * p).ln_1p()).sum()
    }

    pub fn power(&self) -> f64 {
        self.loads.iter().sum()
    }
}

fn loads_at(gains: &[f64], level: f64) -> Vec<f64> {
    gains.iter().map(|&g| if g > 0.0 { (level - 1.0 / g).max(0.0) } else { 0.0 }).collect()
}

/// Maximizes `Σ ln(1 + g_i p_i) − price·Σ p_i` subject to `Σ p_i ≤ cap`,
/// `p ≥ 0`, where `price = λζ ≥ 0`.
pub fn water_fill(gains: &[f64], price: f64, cap: f64) -> Result<WaterFill> {
    if gains.iter().any(|g| !g.is_finite() || *g < 0.0) || !price.is_finite() || price < 0.0 || !(cap > 0.0) {
        return Err(Error::InvalidValue {
            key: "water_fill".into(),
            reason: format!("need finite gains ≥ 0, price ≥ 0 and cap > 0 (price {price}, cap {cap})"),
        });
    }
    let g_max = gains.iter().fold(0.0f64, |m, &g| m.max(g));
    if g_max == 0.0 {
        return Ok(WaterFill { loads: vec![0.0; gains.len()], level: 0.0, mu: 0.0, bisection_steps: 0 });
    }
    if price > 0.0 {
        let free = loads_at(gains, 1.0 / price);
        if free.iter().sum::<f64>() <= cap {
            return Ok(WaterFill { loads: free, level: 1.0 / price, mu: 0.0, bisection_steps: 0 });
        }
    }

    // The cap binds: find the level with Σ p = cap.
    let mut lo = 1.0 / g_max;
    let mut hi = cap + gains.iter().filter(|&&g| g > 0.0).map(|g| 1.0 / g).fold(0.0f64, f64::max);
    let mut steps = 0;
    while steps < MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if loads_at(gains, mid).iter().sum::<f64>() > cap {
            hi = mid;
        } else {
            lo = mid;
        }
        steps += 1;
    }
    let level = lo;
    let mut loads = loads_at(gains, level);
    let total: f64 = loads.iter().sum();
    if !((total - cap).abs() <= 1e-9 * cap.max(1.0)) {
        return Err(Error::NumericalFailure(format!(
            "water-filling bisection ended with total power {total:e} against cap {cap:e}"
        )));
    }
    // Spread the last rounding error over the active modes so the cap holds exactly.
    let active = loads.iter().filter(|&&p| p > 0.0).count() as f64;
    for p in loads.iter_mut().filter(|p| **p > 0.0) {
        *p = (*p + (cap - total) / active).max(0.0);
    }
    let mu = (1.0 / level - price).max(0.0);
    Ok(WaterFill { loads, level, mu, bisection_steps: steps })
}

/// Largest KKT residual of a water-filling solution: on active modes the
/// marginal rate `1 / (1/g + p)` must equal `price + μ`; inactive modes must
/// have `g ≤ price + μ`.
pub fn water_fill_kkt_residual(gains: &[f64], price: f64, wf: &WaterFill) -> f64 {
    let target = price + wf.mu;
    gains
        .iter()
        .zip(&wf.loads)
        .map(|(&g, &p)| {
            if p > 0.0 {
                (1.0 / (1.0 / g + p) - target).abs()
            } else {
                (g - target).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Eigen-gains (descending, scaled by the noise) and modes of `Gᴴ G / σ²`.
fn modes(g: &CMat, noise_var: f64, count: usize) -> Result<(Vec<f64>, CMat)> {
    let (vals, vecs) = psd_eigen(&(g.adjoint() * g), "effective-channel Gram matrix")?;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&x, &y| vals[y].total_cmp(&vals[x]));
    let count = count.min(order.len());
    let gains = order.iter().take(count).map(|&i| vals[i] / noise_var).collect();
    let mut e = CMat::zeros(g.ncols(), count);
    for (k, &i) in order.iter().take(count).enumerate() {
        e.set_column(k, &vecs.column(i));
    }
    Ok((gains, e))
}

/// One Dinkelbach iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DinkelbachStep {
    pub lambda: f64,
    /// `R(λ) − λ P(λ)` at the inner maximizer.
    pub residual: f64,
    /// Sum rate in nats at the inner maximizer.
    pub rate: f64,
    pub power: f64,
    /// Largest water-filling KKT residual over the users.
    pub kkt: f64,
}

#[derive(Debug, Clone)]
pub struct ZfRun {
    pub outcome: RunOutcome,
    pub design: ZfDesign,
    pub steps: Vec<DinkelbachStep>,
    /// Converged efficiency `λ*` in nats per Joule (rate after the receive filters).
    pub lambda: f64,
}

/// Dinkelbach's algorithm on `R(V) / P_tot(V)` within the design subspaces.
pub fn dinkelbach_optimize(ch: &ChannelSet, design: ZfDesign, cfg: &SystemConfig) -> Result<ZfRun> {
    cfg.validate()?;
    ch.check_dims(cfg)?;
    let mut design = design;
    let d = cfg.users;
    let mut spectra = Vec::with_capacity(d);
    for j in 0..d {
        spectra.push(modes(&design.effective[j], cfg.noise_var(j), cfg.streams)?);
    }

    let mut lambda = 0.0;
    let mut steps = Vec::new();
    let mut trace = Vec::new();
    let mut termination = Termination::MaxIters;
    for kappa in 1..=MAX_DINKELBACH_ITERS {
        let clock = Instant::now();
        let mut rate = 0.0;
        let mut radiated = 0.0;
        let mut kkt = 0.0f64;
        let mut bisection = 0;
        for (j, (gains, e)) in spectra.iter().enumerate() {
            let price = lambda * cfg.zeta;
            let wf = water_fill(gains, price, cfg.p_max)?;
            kkt = kkt.max(water_fill_kkt_residual(gains, price, &wf));
            bisection += wf.bisection_steps;
            rate += wf.rate(gains);
            radiated += wf.power();
            let mut w = CMat::zeros(e.nrows(), cfg.streams);
            for (k, &p) in wf.loads.iter().enumerate() {
                w.set_column(k, &e.column(k).scale(p.sqrt()));
            }
            design.inner[j] = w;
        }
        let power = cfg.zeta * radiated + cfg.circuit_power;
        let residual = rate - lambda * power;
        steps.push(DinkelbachStep { lambda, residual, rate, power, kkt });

        let v = design.beamformers();
        trace.push(IterateTrace {
            kappa,
            t: power,
            objective: metrics::see_objective(ch, &v, cfg)?,
            surrogate_value: residual,
            power_slack: (0..d).map(|j| cfg.p_max - v.power(j)).collect(),
            qos_slack: (0..d)
                .map(|j| Ok(metrics::secrecy_throughput(ch, &v, cfg, j)? - cfg.qos_nats[j]))
                .collect::<Result<_>>()?,
            solver: SolverSummary {
                status: SolveStatus::Optimal,
                iterations: bisection,
                primal_residual: 0.0,
                dual_residual: kkt,
                rel_gap: 0.0,
            },
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            v,
        });
        if residual.abs() <= DINKELBACH_TOL {
            termination = Termination::Converged;
            break;
        }
        lambda = rate / power;
    }

    let v = design.beamformers();
    let objective = metrics::see_objective(ch, &v, cfg)?;
    let t = cfg.zeta * v.total_power() + cfg.circuit_power;
    let message = match design.mode {
        NullingMode::Full => None,
        NullingMode::ReceiveProjected => Some("rates evaluated after the receive projection".to_string()),
    };
    let outcome = RunOutcome {
        objective_kind: Objective::SecrecyEnergyEfficiency,
        v,
        t,
        objective,
        termination,
        trace,
        init_iterations: 0,
        message,
    };
    Ok(ZfRun { outcome, design, steps, lambda })
}

/// Design followed by Dinkelbach; an infeasible design is reported as an error.
pub fn solve_zf(ch: &ChannelSet, cfg: &SystemConfig) -> Result<ZfRun> {
    let design = design_zf_subspaces(ch, cfg)?;
    dinkelbach_optimize(ch, design, cfg)
}
