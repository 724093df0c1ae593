//! Self-checks of the invariants behind the method, runnable on any
//! configuration from the command line.

use rand::Rng;
use serde::Serialize;

use crate::baseline_zf::{check_zf_feasibility, nulling_residuals, solve_zf, DINKELBACH_TOL};
use crate::error::Result;
use crate::linalg::{re_inner, CMat};
use crate::metrics;
use crate::model::{auxiliary_rng, generate_channels, random_cn_matrix, BeamformerSet, ChannelSet, SystemConfig};
use crate::optimizer::{encode_step, matched_filter_seed, solve_problem, Objective, RunOptions, Termination, ASCENT_SLACK, FEAS_TOL};
use crate::surrogate::{build_secrecy_minorant, logdet_gram, logdet_bounds};

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn report(name: &'static str, passed: bool, detail: String) -> CheckReport {
    CheckReport { name, passed, detail }
}

/// Lower and upper log-det bounds on random triples.
pub fn check_sandwich(samples: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = auxiliary_rng(seed, 100);
    let mut worst_order = f64::INFINITY;
    let mut worst_tight = 0.0f64;
    for _ in 0..samples {
        let (m, n) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let sigma2 = rng.random_range(0.05..5.0);
        let xbar = random_cn_matrix(&mut rng, m, n).scale(rng.random_range(0.1..3.0));
        let x = random_cn_matrix(&mut rng, m, n).scale(rng.random_range(0.1..3.0));
        let (lo, hi) = logdet_bounds(&xbar, sigma2)?;
        let f = logdet_gram(&x, sigma2)?;
        worst_order = worst_order.min(f - lo.eval(&x)).min(hi.eval(&x) - f);
        let f_bar = logdet_gram(&xbar, sigma2)?;
        worst_tight = worst_tight.max((lo.eval(&xbar) - f_bar).abs()).max((hi.eval(&xbar) - f_bar).abs());
    }
    let passed = worst_order >= -1e-9 && worst_tight <= 1e-10;
    Ok(report("sandwich", passed, format!("min slack {worst_order:.3e}, max anchor gap {worst_tight:.3e}")))
}

fn direction(cfg: &SystemConfig, rng: &mut rand_chacha::ChaCha20Rng) -> BeamformerSet {
    BeamformerSet { v: (0..cfg.users).map(|_| random_cn_matrix(rng, cfg.tx_antennas, cfg.streams)).collect() }
}

fn axpy(v: &BeamformerSet, d: &BeamformerSet, h: f64) -> BeamformerSet {
    BeamformerSet { v: v.v.iter().zip(&d.v).map(|(a, b)| a + b.scale(h)).collect() }
}

fn directional(g: &BeamformerSet, d: &BeamformerSet) -> f64 {
    g.v.iter().zip(&d.v).map(|(a, b): (&CMat, &CMat)| re_inner(a, b)).sum()
}

/// Value and directional-derivative agreement of the secrecy minorant with
/// the exact secrecy rate at the matched-filter anchor.
pub fn check_tangency(ch: &ChannelSet, cfg: &SystemConfig) -> Result<CheckReport> {
    let mut rng = auxiliary_rng(ch.seed, 101);
    let v = matched_filter_seed(ch, cfg, &mut rng);
    let d = direction(cfg, &mut rng);
    let h = 1e-6;
    let mut value_err = 0.0f64;
    let mut grad_err = 0.0f64;
    for j in 0..cfg.users {
        let s = build_secrecy_minorant(ch, &v, cfg, j)?;
        let exact = metrics::secrecy_throughput(ch, &v, cfg, j)?;
        value_err = value_err.max((s.secrecy.value(&v) - exact).abs());
        let fd = (metrics::secrecy_throughput(ch, &axpy(&v, &d, h), cfg, j)?
            - metrics::secrecy_throughput(ch, &axpy(&v, &d, -h), cfg, j)?)
            / (2.0 * h);
        let an = directional(&s.secrecy.gradient(&v), &d);
        grad_err = grad_err.max((fd - an).abs() / fd.abs().max(1e-3));
    }
    let passed = value_err <= 1e-8 && grad_err <= 1e-4;
    Ok(report("tangency", passed, format!("value error {value_err:.3e}, relative slope error {grad_err:.3e}")))
}

/// Core variable and constraint-group counts of the secrecy-efficiency subproblem.
pub fn check_encoding(ch: &ChannelSet, cfg: &SystemConfig) -> Result<CheckReport> {
    let mut rng = auxiliary_rng(ch.seed, 102);
    let v = matched_filter_seed(ch, cfg, &mut rng);
    let t = metrics::total_power(&v, cfg);
    let enc = encode_step(Objective::SecrecyEnergyEfficiency, ch, &v, t, cfg)?;
    let vars = enc.program.core_vars();
    let groups = enc.program.core_quadratic_groups();
    let want_vars = 2 * cfg.users * cfg.tx_antennas * cfg.streams + 1;
    let want_groups = 2 * cfg.users + 1;
    let passed = vars == want_vars && groups == want_groups;
    Ok(report(
        "encoding",
        passed,
        format!("{vars} core variables (expected {want_vars}), {groups} quadratic groups (expected {want_groups})"),
    ))
}

/// Monotone exact objective and feasible iterates on one draw.
pub fn check_ascent(ch: &ChannelSet, cfg: &SystemConfig) -> Result<CheckReport> {
    let mut rng = auxiliary_rng(ch.seed, 0);
    let out = solve_problem(Objective::SecrecyEnergyEfficiency, ch, cfg, &mut rng, &RunOptions::default())?;
    if out.termination == Termination::InitFailed {
        return Ok(report("ascent", false, out.message.unwrap_or_default()));
    }
    let mut prev = f64::NEG_INFINITY;
    let mut worst_drop = 0.0f64;
    let mut worst_slack = f64::INFINITY;
    for it in &out.trace {
        if prev.is_finite() {
            worst_drop = worst_drop.max(prev - it.objective);
        }
        prev = it.objective;
        let rep = metrics::check_feasible(ch, &it.v, cfg, FEAS_TOL)?;
        worst_slack = worst_slack.min(rep.min_slack());
    }
    let passed = worst_drop <= ASCENT_SLACK * prev.abs().max(1.0)
        && worst_slack >= -FEAS_TOL
        && out.termination != Termination::Failed;
    Ok(report(
        "ascent",
        passed,
        format!(
            "{} iterations ({:?}), largest decrease {worst_drop:.3e}, smallest slack {worst_slack:.3e}",
            out.iterations(),
            out.termination
        ),
    ))
}

/// Counting test, and on feasible instances the nulling residuals and the
/// Dinkelbach fixed point.
pub fn check_zero_forcing(ch: &ChannelSet, cfg: &SystemConfig) -> Result<CheckReport> {
    let count = check_zf_feasibility(cfg);
    let run = match solve_zf(ch, cfg) {
        Ok(run) => run,
        Err(e) => {
            let detail = format!("counting test {}; design: {e}", if count.feasible { "passes" } else { "fails" });
            return Ok(report("zero_forcing", true, detail));
        }
    };
    let res = nulling_residuals(ch, &run.design, &run.outcome.v);
    let last = run.steps.last().expect("at least one Dinkelbach step");
    let kkt = run.steps.iter().map(|s| s.kkt).fold(0.0, f64::max);
    let passed = res.eve_basis <= 1e-10 && res.interference <= 1e-8 && last.residual.abs() <= DINKELBACH_TOL && kkt <= 1e-8;
    Ok(report(
        "zero_forcing",
        passed,
        format!(
            "nulling {:.1e}/{:.1e}, |F| {:.1e} after {} steps, KKT {kkt:.1e}",
            res.eve_basis,
            res.interference,
            last.residual.abs(),
            run.steps.len()
        ),
    ))
}

/// Runs every check on the first `draws` seeds of a configuration.
pub fn run_all(cfg: &SystemConfig, seeds: &[u64], draws: usize) -> Result<Vec<CheckReport>> {
    cfg.validate()?;
    let mut out = vec![check_sandwich(1000, seeds.first().copied().unwrap_or(0))?];
    for &seed in seeds.iter().take(draws.max(1)) {
        let ch = generate_channels(cfg, seed);
        out.push(check_tangency(&ch, cfg)?);
        out.push(check_encoding(&ch, cfg)?);
        out.push(check_ascent(&ch, cfg)?);
        out.push(check_zero_forcing(&ch, cfg)?);
    }
    Ok(out)
}
