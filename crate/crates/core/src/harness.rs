//! Monte-Carlo sweeps over the power budget and channel draws, and the CSV
//! files they produce.
//!
//! Every seed draws one channel set that is shared by all methods and budgets,
//! so the methods are compared on identical channels.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::baseline_zf::solve_zf;
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{auxiliary_rng, config_hash, db_to_linear, generate_channels, nats_to_bits, ChannelSet, SystemConfig};
use crate::optimizer::{path_follow, power_epigraph, solve_problem, InitPoint, Objective, RunOptions, RunOutcome, Termination};

/// Identifier of the pseudo-random generator, written to the aggregate file.
pub const RNG_ID: &str = "chacha20-rand_chacha-0.9";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Method {
    See,
    Ee,
    SumSecrecy,
    ZfDinkelbach,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::See, Method::Ee, Method::SumSecrecy, Method::ZfDinkelbach];

    pub fn name(self) -> &'static str {
        match self {
            Method::See => "see",
            Method::Ee => "ee",
            Method::SumSecrecy => "sum_secrecy",
            Method::ZfDinkelbach => "zf_dinkelbach",
        }
    }

    fn stream(self) -> u64 {
        self as u64
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::InvalidValue {
            key: "methods".into(),
            reason: format!("unknown method `{s}` (expected see, ee, sum_secrecy or zf_dinkelbach)"),
        })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Base system; `p_max` and `circuit_power` are overridden per cell.
    pub cfg: SystemConfig,
    pub p_max_db: Vec<f64>,
    pub p_c_db: Vec<f64>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Start each budget from the previous budget's solution of the same seed
    /// and method (budgets visited in increasing order).
    pub warm_start: bool,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
    /// Record wall-clock times. Off by default so reruns are byte-identical.
    pub timing: bool,
}

impl SweepSpec {
    pub fn new(cfg: SystemConfig, p_max_db: Vec<f64>, seeds: Vec<u64>, methods: Vec<Method>) -> Self {
        let p_c_db = vec![10.0 * cfg.circuit_power.log10()];
        Self { cfg, p_max_db, p_c_db, seeds, methods, warm_start: false, jobs: 0, timing: false }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::InvalidValue { key: key.into(), reason: reason.into() });
        if self.p_max_db.is_empty() {
            return bad("P_max_dB_list", "grid must not be empty");
        }
        if self.p_c_db.is_empty() {
            return bad("P_c_dB", "list must not be empty");
        }
        if self.seeds.is_empty() {
            return bad("seeds", "need at least one seed");
        }
        if self.methods.is_empty() {
            return bad("methods", "need at least one method");
        }
        if self.p_max_db.iter().chain(&self.p_c_db).any(|x| !x.is_finite()) {
            return bad("P_max_dB_list", "dB values must be finite");
        }
        self.cfg.validate()
    }

    /// Canonical description used for the configuration hash.
    fn fingerprint(&self) -> serde_json::Value {
        serde_json::json!({
            "system": self.cfg,
            "p_max_db": self.p_max_db,
            "p_c_db": self.p_c_db,
            "seeds": self.seeds,
            "methods": self.methods,
            "warm_start": self.warm_start,
        })
    }

    pub fn config_hash(&self) -> String {
        config_hash(&self.fingerprint())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellStatus {
    Converged,
    MaxIters,
    InitFailed,
    Failed,
    /// The zero-forcing design does not exist for this draw.
    Infeasible,
    /// An unexpected error; the message holds it.
    Error,
}

impl CellStatus {
    pub fn name(self) -> &'static str {
        match self {
            CellStatus::Converged => "converged",
            CellStatus::MaxIters => "max_iters",
            CellStatus::InitFailed => "init_failed",
            CellStatus::Failed => "failed",
            CellStatus::Infeasible => "infeasible",
            CellStatus::Error => "error",
        }
    }

    fn from_termination(t: Termination) -> Self {
        match t {
            Termination::Converged => CellStatus::Converged,
            Termination::MaxIters => CellStatus::MaxIters,
            Termination::InitFailed => CellStatus::InitFailed,
            Termination::Failed => CellStatus::Failed,
        }
    }
}

/// One (method, circuit power, budget, seed) cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub method: Method,
    pub p_c_db: f64,
    pub p_max_db: f64,
    pub seed: u64,
    pub channel_hash: String,
    /// Exact secrecy energy efficiency of the final design, nats/J. NaN when
    /// the method produced no design.
    pub see: f64,
    /// Final value of the method's own objective.
    pub objective: f64,
    pub secrecy_rates: Vec<f64>,
    pub total_power: f64,
    pub iterations: usize,
    pub wall_ms: f64,
    pub status: CellStatus,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub method: Method,
    pub p_c_db: f64,
    pub p_max_db: f64,
    /// Mean SEE over cells with a design, bits/J.
    pub mean_bits: f64,
    pub stderr_bits: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub config_hash: String,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<AggregateRow>,
    /// Channel hash per seed.
    pub channels: Vec<(u64, String)>,
}

impl SweepResult {
    pub fn aggregate(&self, method: Method, p_c_db: f64, p_max_db: f64) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.method == method && a.p_c_db == p_c_db && a.p_max_db == p_max_db)
    }
}

struct Job {
    method: Method,
    p_c_db: f64,
    seed: u64,
    /// Indices into the sorted budget grid handled by this job.
    budgets: Vec<usize>,
}

fn objective_of(method: Method) -> Option<Objective> {
    match method {
        Method::See => Some(Objective::SecrecyEnergyEfficiency),
        Method::Ee => Some(Objective::EnergyEfficiency),
        Method::SumSecrecy => Some(Objective::SumSecrecy),
        Method::ZfDinkelbach => None,
    }
}

fn cell_from_outcome(out: &RunOutcome, ch: &ChannelSet, cfg: &SystemConfig, status: CellStatus) -> (f64, Vec<f64>, f64) {
    if status == CellStatus::InitFailed || status == CellStatus::Infeasible {
        return (f64::NAN, Vec::new(), f64::NAN);
    }
    match metrics::evaluate(ch, &out.v, cfg) {
        Ok(r) => (r.see, r.secrecy_rate, r.total_power),
        Err(_) => (f64::NAN, Vec::new(), f64::NAN),
    }
}

fn run_job(job: &Job, spec: &SweepSpec, grid: &[f64], opts: &RunOptions) -> Vec<CellResult> {
    let mut cfg = spec.cfg.clone();
    cfg.circuit_power = db_to_linear(job.p_c_db);
    let ch = generate_channels(&cfg, job.seed);
    let channel_hash = ch.hash();
    let mut previous: Option<RunOutcome> = None;
    let mut cells = Vec::with_capacity(job.budgets.len());

    for &b in &job.budgets {
        let p_max_db = grid[b];
        cfg.p_max = db_to_linear(p_max_db);
        let clock = spec.timing.then(Instant::now);
        let mut rng = auxiliary_rng(job.seed, job.method.stream() * 1024 + b as u64);

        let result: Result<RunOutcome> = match objective_of(job.method) {
            None => solve_zf(&ch, &cfg).map(|r| r.outcome),
            Some(kind) => {
                let warm = previous.as_ref().filter(|p| p.termination != Termination::InitFailed && p.objective.is_finite());
                let warm_run = warm.and_then(|p| {
                    let init = InitPoint { v: p.v.clone(), t: power_epigraph(&p.v, &cfg), iterations: 0, score: f64::NAN };
                    path_follow(kind, &ch, &cfg, &init, opts).ok()
                });
                match warm_run {
                    Some(out) => Ok(out),
                    None => solve_problem(kind, &ch, &cfg, &mut rng, opts),
                }
            }
        };
        let wall_ms = clock.map_or(0.0, |c| c.elapsed().as_secs_f64() * 1e3);

        let cell = match result {
            Ok(out) => {
                let status = CellStatus::from_termination(out.termination);
                let (see, secrecy_rates, total_power) = cell_from_outcome(&out, &ch, &cfg, status);
                let cell = CellResult {
                    method: job.method,
                    p_c_db: job.p_c_db,
                    p_max_db,
                    seed: job.seed,
                    channel_hash: channel_hash.clone(),
                    see,
                    objective: out.objective,
                    secrecy_rates,
                    total_power,
                    iterations: out.iterations(),
                    wall_ms,
                    status,
                    message: out.message.clone(),
                };
                if spec.warm_start {
                    previous = Some(out);
                }
                cell
            }
            Err(e) => {
                let status = if matches!(e, Error::ZfInfeasible(_)) { CellStatus::Infeasible } else { CellStatus::Error };
                previous = None;
                CellResult {
                    method: job.method,
                    p_c_db: job.p_c_db,
                    p_max_db,
                    seed: job.seed,
                    channel_hash: channel_hash.clone(),
                    see: f64::NAN,
                    objective: f64::NAN,
                    secrecy_rates: Vec::new(),
                    total_power: f64::NAN,
                    iterations: 0,
                    wall_ms,
                    status,
                    message: Some(e.to_string()),
                }
            }
        };
        cells.push(cell);
    }
    cells
}

/// Mean and standard error (sample deviation over `√n`).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn aggregate(cells: &[CellResult]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Method, u64, u64), (f64, f64, Vec<f64>)> = BTreeMap::new();
    for c in cells {
        let key = (c.method, c.p_c_db.to_bits(), c.p_max_db.to_bits());
        let entry = groups.entry(key).or_insert((c.p_c_db, c.p_max_db, Vec::new()));
        if c.see.is_finite() {
            entry.2.push(to_bits_per_joule(c.see));
        }
    }
    let mut rows: Vec<AggregateRow> = groups
        .into_iter()
        .map(|((method, _, _), (p_c_db, p_max_db, vals))| {
            let (mean_bits, stderr_bits) = mean_stderr(&vals);
            AggregateRow { method, p_c_db, p_max_db, mean_bits, stderr_bits, count: vals.len() }
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.method, a.p_c_db, a.p_max_db).partial_cmp(&(b.method, b.p_c_db, b.p_max_db)).expect("finite grid")
    });
    rows
}

fn sorted_grid(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Runs every cell of the sweep. Per-cell failures are recorded, never raised.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let grid = sorted_grid(&spec.p_max_db);
    let p_cs = sorted_grid(&spec.p_c_db);
    let mut methods = spec.methods.clone();
    methods.sort();
    methods.dedup();
    let mut seeds = spec.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();

    let mut jobs = Vec::new();
    for &method in &methods {
        for &p_c_db in &p_cs {
            for &seed in &seeds {
                if spec.warm_start && objective_of(method).is_some() {
                    jobs.push(Job { method, p_c_db, seed, budgets: (0..grid.len()).collect() });
                } else {
                    jobs.extend((0..grid.len()).map(|b| Job { method, p_c_db, seed, budgets: vec![b] }));
                }
            }
        }
    }

    let opts = RunOptions::default();
    let work = || jobs.par_iter().flat_map_iter(|job| run_job(job, spec, &grid, &opts)).collect::<Vec<_>>();
    let mut cells = if spec.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.jobs)
            .build()
            .map_err(|e| Error::InvalidValue { key: "jobs".into(), reason: e.to_string() })?;
        pool.install(work)
    } else {
        work()
    };
    cells.sort_by(|a, b| {
        (a.method, a.p_c_db, a.p_max_db, a.seed)
            .partial_cmp(&(b.method, b.p_c_db, b.p_max_db, b.seed))
            .expect("finite grid")
    });

    let mut cfg = spec.cfg.clone();
    cfg.circuit_power = db_to_linear(p_cs[0]);
    let channels = seeds.iter().map(|&s| (s, generate_channels(&cfg, s).hash())).collect();
    let aggregates = aggregate(&cells);
    Ok(SweepResult { config_hash: spec.config_hash(), cells, aggregates, channels })
}

pub fn to_bits_per_joule(nats: f64) -> f64 {
    nats_to_bits(nats)
}

/// Paths written by [`emit_results`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub rows: Vec<PathBuf>,
    pub aggregates: Vec<PathBuf>,
    pub channels: PathBuf,
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x}")
    }
}

fn pc_suffix(p_c_db: f64, several: bool) -> String {
    if several {
        format!("_pc{}dB", fmt_num(p_c_db))
    } else {
        String::new()
    }
}

/// Writes `rows.csv`, `aggregate.csv` and `channels.csv` into `dir`. With
/// several circuit powers, the first two get a `_pc<value>dB` suffix per setting.
pub fn emit_results(res: &SweepResult, dir: impl AsRef<Path>) -> Result<EmittedFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut p_cs: Vec<f64> = res.cells.iter().map(|c| c.p_c_db).chain(res.aggregates.iter().map(|a| a.p_c_db)).collect();
    p_cs = sorted_grid(&p_cs);
    let several = p_cs.len() > 1;
    if p_cs.is_empty() {
        // Header-only files for an empty result.
        p_cs.push(f64::NAN);
    }

    let mut rows_paths = Vec::new();
    let mut agg_paths = Vec::new();
    for &p_c in &p_cs {
        let matches = |x: f64| p_c.is_nan() || x == p_c;
        let rows_path = dir.join(format!("rows{}.csv", pc_suffix(p_c, several)));
        let mut w = csv::Writer::from_path(&rows_path)?;
        w.write_record(["method", "P_max_dB", "seed", "objective_bits_per_joule", "iterations", "status", "wall_ms"])?;
        for c in res.cells.iter().filter(|c| matches(c.p_c_db)) {
            w.write_record([
                c.method.name().to_string(),
                fmt_num(c.p_max_db),
                c.seed.to_string(),
                fmt_num(to_bits_per_joule(c.see)),
                c.iterations.to_string(),
                c.status.name().to_string(),
                fmt_num(c.wall_ms),
            ])?;
        }
        w.flush()?;
        rows_paths.push(rows_path);

        let agg_path = dir.join(format!("aggregate{}.csv", pc_suffix(p_c, several)));
        let mut w = csv::Writer::from_path(&agg_path)?;
        w.write_record(["method", "P_max_dB", "mean_bits_per_joule", "stderr_bits_per_joule", "n", "config_hash", "rng"])?;
        for a in res.aggregates.iter().filter(|a| matches(a.p_c_db)) {
            w.write_record([
                a.method.name().to_string(),
                fmt_num(a.p_max_db),
                fmt_num(a.mean_bits),
                fmt_num(a.stderr_bits),
                a.count.to_string(),
                res.config_hash.clone(),
                RNG_ID.to_string(),
            ])?;
        }
        w.flush()?;
        agg_paths.push(agg_path);
    }

    let channels = dir.join("channels.csv");
    let mut w = csv::Writer::from_path(&channels)?;
    w.write_record(["seed", "channel_hash"])?;
    for (seed, hash) in &res.channels {
        w.write_record([seed.to_string(), hash.clone()])?;
    }
    w.flush()?;
    Ok(EmittedFiles { rows: rows_paths, aggregates: agg_paths, channels })
}
