use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use seebf_core::checks;
use seebf_core::harness::{emit_results, run_sweep, Method, SweepSpec};
use seebf_core::model::{auxiliary_rng, db_to_linear, generate_channels, load_config_file, ExperimentConfig, SystemConfig};
use seebf_core::optimizer::{export_trace, solve_problem, Objective, RunOptions};
use seebf_core::{baseline_zf, Error, Result};

#[derive(Parser)]
#[command(name = "seebf", version, about = "Secrecy energy-efficient MIMO beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo sweep over power budgets and channel draws.
    Sweep(SweepArgs),
    /// Run the invariant checks on a configuration.
    Check(CheckArgs),
    /// Single run with the full per-iteration trace.
    Trace(TraceArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// JSON configuration; the reference setup is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Comma-separated subset of see, ee, sum_secrecy, zf_dinkelbach.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Power budgets in dB, overriding the configuration.
    #[arg(long = "pmax-db", value_delimiter = ',', allow_negative_numbers = true)]
    pmax_db: Option<Vec<f64>>,
    /// Circuit powers in dB, overriding the configuration.
    #[arg(long = "pc-db", value_delimiter = ',', allow_negative_numbers = true)]
    pc_db: Option<Vec<f64>>,
    /// A count N (seeds 0..N) or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Start each budget from the previous budget's solution.
    #[arg(long)]
    warm_start: bool,
    /// Record wall-clock times (rows are then no longer reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Number of channel draws to check.
    #[arg(long, default_value_t = 1)]
    draws: usize,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, default_value = "see")]
    method: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Power budget in dB; defaults to the first entry of the configuration.
    #[arg(long = "pmax-db", allow_negative_numbers = true)]
    pmax_db: Option<f64>,
    #[arg(long, default_value = "trace.jsonl")]
    out: PathBuf,
}

fn load(arg: &ConfigArg) -> Result<ExperimentConfig> {
    match &arg.config {
        Some(path) => load_config_file(path),
        None => {
            let system = SystemConfig::reference_defaults();
            Ok(ExperimentConfig {
                system,
                p_max_db: (0..=6).map(|k| 5.0 * k as f64).collect(),
                p_c_db: vec![7.0],
                seeds: (0..20).collect(),
            })
        }
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidValue { key: "seeds".into(), reason: format!("expected a count or a list, got `{s}`") };
    if s.contains(',') {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
    } else {
        let n: u64 = s.trim().parse().map_err(|_| bad())?;
        Ok((0..n).collect())
    }
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let exp = load(&args.config)?;
    let methods = match args.methods {
        Some(list) => list.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?,
        None => Method::ALL.to_vec(),
    };
    let seeds = match &args.seeds {
        Some(s) => parse_seeds(s)?,
        None => exp.seeds.clone(),
    };
    let mut spec = SweepSpec::new(exp.system, args.pmax_db.unwrap_or(exp.p_max_db), seeds, methods);
    spec.p_c_db = args.pc_db.unwrap_or(exp.p_c_db);
    spec.jobs = args.jobs;
    spec.warm_start = args.warm_start;
    spec.timing = args.timing;
    let res = run_sweep(&spec)?;
    let files = emit_results(&res, &args.out)?;
    for a in &res.aggregates {
        println!(
            "{:<14} P_c {:>5} dB  P_max {:>5} dB  SEE {:.6} ± {:.6} bits/J  (n = {})",
            a.method.name(),
            a.p_c_db,
            a.p_max_db,
            a.mean_bits,
            a.stderr_bits,
            a.count
        );
    }
    for p in files.rows.iter().chain(&files.aggregates).chain(std::iter::once(&files.channels)) {
        info!("wrote {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn check(args: CheckArgs) -> Result<ExitCode> {
    let exp = load(&args.config)?;
    let reports = checks::run_all(&exp.system, &exp.seeds, args.draws)?;
    let mut ok = true;
    for r in &reports {
        println!("{} {:<13} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        ok &= r.passed;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn trace(args: TraceArgs) -> Result<ExitCode> {
    let exp = load(&args.config)?;
    let mut cfg = exp.system;
    if let Some(db) = args.pmax_db {
        cfg.p_max = db_to_linear(db);
    }
    let ch = generate_channels(&cfg, args.seed);
    let method: Method = args.method.parse()?;
    let outcome = match method {
        Method::ZfDinkelbach => baseline_zf::solve_zf(&ch, &cfg)?.outcome,
        _ => {
            let kind = match method {
                Method::See => Objective::SecrecyEnergyEfficiency,
                Method::Ee => Objective::EnergyEfficiency,
                _ => Objective::SumSecrecy,
            };
            let mut rng = auxiliary_rng(args.seed, 0);
            solve_problem(kind, &ch, &cfg, &mut rng, &RunOptions::default())?
        }
    };
    export_trace(&outcome.trace, &args.out)?;
    println!(
        "{} seed {}: {:?} after {} iterations, objective {:.9}{}",
        method.name(),
        args.seed,
        outcome.termination,
        outcome.iterations(),
        outcome.objective,
        outcome.message.map(|m| format!(" ({m})")).unwrap_or_default()
    );
    println!("trace written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Check(a) => check(a),
        Command::Trace(a) => trace(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
