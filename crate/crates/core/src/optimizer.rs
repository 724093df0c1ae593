//! Path-following loops: secrecy energy efficiency, energy efficiency under a
//! wiretap cap, and sum secrecy throughput, plus their feasibility phases.
//!
//! Each loop rebuilds the surrogates at the current iterate, solves the convex
//! subproblem and moves to its solution. Because the surrogates are tight
//! minorants and the previous iterate is feasible for the subproblem, the
//! exact objective never decreases.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::{debug, trace, warn};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::conic::{
    encode_ee_feasibility, encode_ee_subproblem, encode_see_feasibility, encode_see_subproblem,
    encode_sum_secrecy_subproblem, EncodedProgram, SolveResult, SolveStatus, SolverOptions,
};
use crate::error::{Error, Result};
use crate::linalg::{null_space, orthonormalize};
use crate::metrics;
use crate::model::{random_cn_matrix, BeamformerSet, ChannelSet, SystemConfig};
use crate::surrogate::{build_fractional_minorant, build_secrecy_minorant, SecrecySurrogate};

/// Iteration cap of the feasibility phase.
pub const MAX_INIT_ITERS: usize = 50;
/// Seeds tried before the feasibility phase gives up.
pub const INIT_ATTEMPTS: usize = 5;
/// Tolerated decrease of the exact objective between iterates.
pub const ASCENT_SLACK: f64 = 1e-8;
/// Largest cone violation tolerated in an inexact subproblem solution.
const INEXACT_VIOLATION: f64 = 1e-7;
/// Smallest secrecy target of the feasibility phase, nats.
pub const QOS_FLOOR: f64 = 1e-3;
/// Tolerance of the feasibility audit.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Objective {
    /// `Σ f_{j,s} / P_tot`.
    SecrecyEnergyEfficiency,
    /// `Σ f_j / P_tot` with `f_{j,e} ≤ ε`.
    EnergyEfficiency,
    /// `Σ f_{j,s}`.
    SumSecrecy,
}

impl Objective {
    pub fn exact(self, ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig) -> Result<f64> {
        match self {
            Objective::SecrecyEnergyEfficiency => metrics::see_objective(ch, v, cfg),
            Objective::EnergyEfficiency => metrics::ee_objective(ch, v, cfg),
            Objective::SumSecrecy => metrics::sum_secrecy(ch, v, cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    Converged,
    MaxIters,
    InitFailed,
    /// A subproblem failed or the ascent check tripped; see the message.
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rel_gap: f64,
}

impl From<&SolveResult> for SolverSummary {
    fn from(r: &SolveResult) -> Self {
        Self {
            status: r.status,
            iterations: r.iterations,
            primal_residual: r.primal_residual,
            dual_residual: r.dual_residual,
            rel_gap: r.rel_gap,
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, Serialize)]
pub struct IterateTrace {
    pub kappa: usize,
    #[serde(skip)]
    pub v: BeamformerSet,
    pub t: f64,
    /// Exact objective at `(V^(κ), t^(κ))`.
    pub objective: f64,
    /// Optimal value of the subproblem that produced this iterate.
    pub surrogate_value: f64,
    /// `P_max − ‖V_j‖²`.
    pub power_slack: Vec<f64>,
    /// QoS slacks of the problem being solved (secrecy rate, or rate and wiretap cap).
    pub qos_slack: Vec<f64>,
    pub solver: SolverSummary,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct InitPoint {
    pub v: BeamformerSet,
    pub t: f64,
    pub iterations: usize,
    /// Worst QoS margin reached (`≥ 1` ratio for the secrecy phase, `≥ 0` margin for the EE phase).
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub objective_kind: Objective,
    pub v: BeamformerSet,
    pub t: f64,
    /// Exact final objective (nats based).
    pub objective: f64,
    pub termination: Termination,
    pub trace: Vec<IterateTrace>,
    pub init_iterations: usize,
    pub message: Option<String>,
}

impl RunOutcome {
    /// Number of outer iterations performed.
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    fn init_failed(kind: Objective, cfg: &SystemConfig, err: &Error) -> Self {
        let iters = match err {
            Error::InitFailed { iterations, .. } => *iterations,
            _ => 0,
        };
        Self {
            objective_kind: kind,
            v: BeamformerSet::zeros(cfg),
            t: cfg.circuit_power,
            objective: f64::NAN,
            termination: Termination::InitFailed,
            trace: Vec::new(),
            init_iterations: iters,
            message: Some(err.to_string()),
        }
    }
}

/// Writes the trace as JSON lines, one record per iteration.
pub fn export_trace(trace: &[IterateTrace], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rec in trace {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// `ζ Σ ‖V_j‖² + P_c`.
pub fn power_epigraph(v: &BeamformerSet, cfg: &SystemConfig) -> f64 {
    metrics::total_power(v, cfg)
}

/// Matched-filter seed `V_j = H_jjᴴ R` with `‖V_j‖² = 0.9 P_max`.
pub fn matched_filter_seed(ch: &ChannelSet, cfg: &SystemConfig, rng: &mut ChaCha20Rng) -> BeamformerSet {
    let v = (0..cfg.users)
        .map(|j| {
            let r = orthonormalize(&random_cn_matrix(rng, cfg.rx_antennas, cfg.streams));
            let vj = ch.user[j][j].adjoint() * r;
            let p = crate::linalg::fro_norm_sq(&vj);
            vj.scale((0.9 * cfg.p_max / p).sqrt())
        })
        .collect();
    BeamformerSet { v }
}

/// Matched filter restricted to the null space of the eavesdropper channel,
/// so the wiretap rate starts at zero. Falls back to the plain matched filter
/// for users whose eavesdropper link leaves no null space.
pub fn nulled_matched_filter_seed(ch: &ChannelSet, cfg: &SystemConfig, rng: &mut ChaCha20Rng) -> BeamformerSet {
    let plain = matched_filter_seed(ch, cfg, rng);
    let v = (0..cfg.users)
        .map(|j| {
            let (t, _) = null_space(&ch.eve[j], 1e-10);
            if t.ncols() == 0 {
                return plain.v[j].clone();
            }
            let vj = &t * (t.adjoint() * &plain.v[j]);
            let p = crate::linalg::fro_norm_sq(&vj);
            if p <= f64::MIN_POSITIVE {
                return plain.v[j].clone();
            }
            vj.scale((0.9 * cfg.p_max / p).sqrt())
        })
        .collect();
    BeamformerSet { v }
}

/// Scales down any `V_j` that exceeds the budget through solver round-off.
fn clip_power(mut v: BeamformerSet, cfg: &SystemConfig) -> BeamformerSet {
    for m in &mut v.v {
        let p = crate::linalg::fro_norm_sq(m);
        if p > cfg.p_max {
            *m = m.scale((cfg.p_max / p).sqrt());
        }
    }
    v
}

fn surrogates(ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig) -> Result<Vec<SecrecySurrogate>> {
    (0..cfg.users).map(|j| build_secrecy_minorant(ch, v, cfg, j)).collect()
}

/// `min_j f_{j,s}/r_j` over users with `r_j > 0` (`∞` if none).
fn secrecy_score(ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig) -> Result<f64> {
    let mut score = f64::INFINITY;
    for j in 0..cfg.users {
        if cfg.qos_nats[j] > 0.0 {
            score = score.min(metrics::secrecy_throughput(ch, v, cfg, j)? / cfg.qos_nats[j]);
        }
    }
    Ok(score)
}

/// `min_j min(f_j − r_j, ε − f_{j,e})`.
fn ee_score(ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig) -> Result<f64> {
    let mut score = f64::INFINITY;
    for j in 0..cfg.users {
        score = score.min(metrics::user_throughput(ch, v, cfg, j)? - cfg.qos_nats[j]);
        if cfg.eps_secrecy.is_finite() {
            score = score.min(cfg.eps_secrecy - metrics::eavesdropper_throughput(ch, v, cfg, j)?);
        }
    }
    Ok(score)
}

struct Phase<'a> {
    score: fn(&ChannelSet, &BeamformerSet, &SystemConfig) -> Result<f64>,
    encode: fn(&[SecrecySurrogate], &SystemConfig) -> Result<EncodedProgram>,
    target: f64,
    opts: &'a SolverOptions,
}

fn feasibility_phase(ch: &ChannelSet, cfg: &SystemConfig, rng: &mut ChaCha20Rng, phase: Phase) -> Result<InitPoint> {
    cfg.validate()?;
    ch.check_dims(cfg)?;
    let mut best = f64::NEG_INFINITY;
    let mut total_iters = 0;
    for attempt in 0..INIT_ATTEMPTS {
        // Odd attempts start from the eavesdropper-nulled variant.
        let mut v = if attempt % 2 == 1 { nulled_matched_filter_seed(ch, cfg, rng) } else { matched_filter_seed(ch, cfg, rng) };
        let mut score = (phase.score)(ch, &v, cfg)?;
        best = best.max(score);
        let mut stalled = 0;
        for k in 0..=MAX_INIT_ITERS {
            if score >= phase.target {
                let t = power_epigraph(&v, cfg);
                return Ok(InitPoint { v, t, iterations: total_iters, score });
            }
            if k == MAX_INIT_ITERS || stalled >= 5 {
                break;
            }
            let step = surrogates(ch, &v, cfg).and_then(|s| (phase.encode)(&s, cfg));
            let enc = match step {
                Ok(enc) => enc,
                Err(e) => {
                    debug!("init attempt {attempt}: surrogate construction failed: {e}");
                    break;
                }
            };
            let res = enc.solve(phase.opts);
            total_iters += 1;
            if !usable(&enc, &res) {
                debug!("init attempt {attempt}: subproblem status {:?}", res.status);
                break;
            }
            let next = clip_power(enc.beamformers(&res.x), cfg);
            let next_score = (phase.score)(ch, &next, cfg)?;
            stalled = if next_score <= score + 1e-7 * score.abs().max(1.0) { stalled + 1 } else { 0 };
            trace!("init attempt {attempt} step {k}: score {next_score:.6}");
            v = next;
            score = next_score;
            best = best.max(score);
        }
    }
    Err(Error::InitFailed { best_ratio: best, iterations: total_iters })
}

/// Feasible starting point for the secrecy problems: iterates
/// `max τ s.t. Θ_{j,s}(V) ≥ τ r_j` until `min_j f_{j,s}/r_j ≥ 1`.
///
/// Thresholds below [`QOS_FLOOR`] are raised to it for the phase, so a zero
/// threshold still forces a non-negative secrecy rate.
pub fn initialize_feasible_see(ch: &ChannelSet, cfg: &SystemConfig, rng: &mut ChaCha20Rng) -> Result<InitPoint> {
    let opts = SolverOptions::default();
    let mut cfg = cfg.clone();
    for r in &mut cfg.qos_nats {
        *r = r.max(QOS_FLOOR);
    }
    let cfg = &cfg;
    feasibility_phase(ch, cfg, rng, Phase { score: secrecy_score, encode: encode_see_feasibility, target: 1.0, opts: &opts })
}

/// Feasible starting point for the energy-efficiency problem: iterates
/// `max τ s.t. Θ_j(V) − r_j ≥ τ, ε − Θ_{j,e}(V) ≥ τ` until both margins are non-negative.
pub fn initialize_feasible_ee(ch: &ChannelSet, cfg: &SystemConfig, rng: &mut ChaCha20Rng) -> Result<InitPoint> {
    let opts = SolverOptions::default();
    feasibility_phase(ch, cfg, rng, Phase { score: ee_score, encode: encode_ee_feasibility, target: 0.0, opts: &opts })
}

fn qos_slacks(kind: Objective, ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for j in 0..cfg.users {
        match kind {
            Objective::EnergyEfficiency => {
                out.push(metrics::user_throughput(ch, v, cfg, j)? - cfg.qos_nats[j]);
                if cfg.eps_secrecy.is_finite() {
                    out.push(cfg.eps_secrecy - metrics::eavesdropper_throughput(ch, v, cfg, j)?);
                }
            }
            _ => out.push(metrics::secrecy_throughput(ch, v, cfg, j)? - cfg.qos_nats[j]),
        }
    }
    Ok(out)
}

/// Builds the subproblem of `kind` anchored at `(V̄, t̄)`.
pub fn encode_step(kind: Objective, ch: &ChannelSet, v: &BeamformerSet, t: f64, cfg: &SystemConfig) -> Result<EncodedProgram> {
    let surr = surrogates(ch, v, cfg)?;
    match kind {
        Objective::SecrecyEnergyEfficiency => {
            let fracs = surr
                .iter()
                .enumerate()
                .map(|(j, s)| build_fractional_minorant(&s.secrecy, t, j))
                .collect::<Result<Vec<_>>>()?;
            encode_see_subproblem(&surr, &fracs, cfg)
        }
        Objective::EnergyEfficiency => {
            let fracs = surr
                .iter()
                .enumerate()
                .map(|(j, s)| build_fractional_minorant(&s.rate, t, j))
                .collect::<Result<Vec<_>>>()?;
            encode_ee_subproblem(&surr, &fracs, cfg)
        }
        Objective::SumSecrecy => encode_sum_secrecy_subproblem(&surr, cfg),
    }
}

/// Options of the outer loop.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub solver: SolverOptions,
    /// Directory for subproblem dumps when the ascent check trips.
    pub dump_dir: Option<std::path::PathBuf>,
}

/// Whether a subproblem solution can serve as the next iterate. Inexact
/// solutions are accepted when they are feasible, since the outer loop only
/// needs a feasible point and audits ascent on the exact objective itself.
fn usable(enc: &EncodedProgram, res: &SolveResult) -> bool {
    match res.status {
        SolveStatus::Optimal => true,
        SolveStatus::MaxIters | SolveStatus::NumericalFailure => {
            res.x.iter().all(|v| v.is_finite()) && enc.program.max_violation(&res.x) <= INEXACT_VIOLATION
        }
        SolveStatus::Infeasible | SolveStatus::Unbounded => false,
    }
}

/// Generic path-following loop from a feasible `init`.
pub fn path_follow(
    kind: Objective,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    init: &InitPoint,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    cfg.validate()?;
    ch.check_dims(cfg)?;
    init.v.check_dims(cfg)?;
    let entry = qos_slacks(kind, ch, &init.v, cfg)?;
    let power_ok = (0..cfg.users).all(|j| init.v.power(j) <= cfg.p_max + FEAS_TOL);
    if !power_ok || entry.iter().any(|&s| s < -FEAS_TOL) {
        return Err(Error::InvalidValue {
            key: "init".into(),
            reason: format!("starting point is infeasible (QoS slacks {entry:?})"),
        });
    }

    let mut v = init.v.clone();
    let mut t = power_epigraph(&v, cfg);
    let mut obj = kind.exact(ch, &v, cfg)?;
    let mut trace = Vec::new();
    let done = |v, t, objective, termination, trace, message| {
        Ok(RunOutcome { objective_kind: kind, v, t, objective, termination, trace, init_iterations: init.iterations, message })
    };

    for kappa in 1..=cfg.max_outer_iters {
        let clock = Instant::now();
        let enc = match encode_step(kind, ch, &v, t, cfg) {
            Ok(enc) => enc,
            Err(e) => return done(v, t, obj, Termination::Failed, trace, Some(format!("iteration {kappa}: {e}"))),
        };
        let res = enc.solve(&opts.solver);
        if !usable(&enc, &res) {
            let msg = format!("iteration {kappa}: subproblem status {:?}", res.status);
            return done(v, t, obj, Termination::Failed, trace, Some(msg));
        }
        let next_v = clip_power(enc.beamformers(&res.x), cfg);
        let next_t = power_epigraph(&next_v, cfg);
        let next_obj = kind.exact(ch, &next_v, cfg)?;

        if next_obj < obj - ASCENT_SLACK * obj.abs().max(1.0) {
            // The surrogate is tight at the anchor, so a returned point that does
            // not beat the anchor on the surrogate means the solver hit its
            // precision floor rather than a broken minorant.
            let anchor_sur = enc.objective_at(&v, Some(t));
            let next_sur = enc.objective_at(&next_v, Some(next_t));
            if next_sur < anchor_sur + ASCENT_SLACK * anchor_sur.abs().max(1.0) {
                let msg = format!("iteration {kappa}: subproblem gave no improvement over the anchor; stopped at solver precision");
                debug!("{msg}");
                return done(v, t, obj, Termination::Converged, trace, Some(msg));
            }
            let mut msg = format!("iteration {kappa}: objective decreased from {obj:.12e} to {next_obj:.12e}");
            if let Some(dir) = &opts.dump_dir {
                let path = dir.join(format!("ascent-violation-seed{}-k{kappa}.json", ch.seed));
                match enc.program.dump(&path) {
                    Ok(()) => msg.push_str(&format!("; subproblem written to {}", path.display())),
                    Err(e) => warn!("could not dump subproblem: {e}"),
                }
            }
            warn!("{msg}");
            return done(v, t, obj, Termination::Failed, trace, Some(msg));
        }

        trace.push(IterateTrace {
            kappa,
            v: next_v.clone(),
            t: next_t,
            objective: next_obj,
            surrogate_value: res.objective,
            power_slack: (0..cfg.users).map(|j| cfg.p_max - next_v.power(j)).collect(),
            qos_slack: qos_slacks(kind, ch, &next_v, cfg)?,
            solver: SolverSummary::from(&res),
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        let change = ((next_obj - obj) / obj.abs().max(f64::MIN_POSITIVE)).abs();
        v = next_v;
        t = next_t;
        obj = next_obj;
        if change <= cfg.eps_stop {
            return done(v, t, obj, Termination::Converged, trace, None);
        }
    }
    done(v, t, obj, Termination::MaxIters, trace, None)
}

/// Secrecy-energy-efficiency maximization from a feasible point.
pub fn run_see(ch: &ChannelSet, cfg: &SystemConfig, init: &InitPoint) -> Result<RunOutcome> {
    path_follow(Objective::SecrecyEnergyEfficiency, ch, cfg, init, &RunOptions::default())
}

/// Energy-efficiency maximization with the wiretap cap `ε`.
pub fn run_ee(ch: &ChannelSet, cfg: &SystemConfig, init: &InitPoint) -> Result<RunOutcome> {
    path_follow(Objective::EnergyEfficiency, ch, cfg, init, &RunOptions::default())
}

/// Sum-secrecy-throughput maximization.
pub fn run_sum_secrecy(ch: &ChannelSet, cfg: &SystemConfig, init: &InitPoint) -> Result<RunOutcome> {
    path_follow(Objective::SumSecrecy, ch, cfg, init, &RunOptions::default())
}

/// Feasibility phase followed by the loop; an initialization failure is
/// reported as an outcome rather than an error.
pub fn solve_problem(kind: Objective, ch: &ChannelSet, cfg: &SystemConfig, rng: &mut ChaCha20Rng, opts: &RunOptions) -> Result<RunOutcome> {
    let init = match kind {
        Objective::EnergyEfficiency => initialize_feasible_ee(ch, cfg, rng),
        _ => initialize_feasible_see(ch, cfg, rng),
    };
    match init {
        Ok(init) => path_follow(kind, ch, cfg, &init, opts),
        Err(e @ Error::InitFailed { .. }) => Ok(RunOutcome::init_failed(kind, cfg, &e)),
        Err(e) => Err(e),
    }
}
