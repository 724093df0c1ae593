//! C interface to the beamforming library.
//!
//! Objects are opaque handles created and released through this API. Every
//! fallible call returns a [`SeebfStatus`]; on failure the message is kept
//! per thread and can be fetched with [`seebf_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use seebf_core::baseline_zf::{check_zf_feasibility, solve_zf};
use seebf_core::model::{auxiliary_rng, db_to_linear, generate_channels, load_config, nats_to_bits, ChannelSet, SystemConfig};
use seebf_core::optimizer::{solve_problem, Objective, RunOptions, RunOutcome, Termination};
use seebf_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeebfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Dimension = 4,
    Numerical = 5,
    /// The zero-forcing design does not exist for this channel draw.
    ZfInfeasible = 6,
    Io = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeebfMethod {
    See = 0,
    Ee = 1,
    SumSecrecy = 2,
    ZfDinkelbach = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeebfTermination {
    Converged = 0,
    MaxIters = 1,
    InitFailed = 2,
    Failed = 3,
}

/// System parameters.
pub struct SeebfConfig {
    inner: SystemConfig,
}

/// One channel draw.
pub struct SeebfChannels {
    inner: ChannelSet,
}

/// Result of one optimization run.
pub struct SeebfRun {
    inner: RunOutcome,
    see_bits: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SeebfStatus {
    match err {
        Error::MissingKey(_) | Error::InvalidValue { .. } | Error::Json(_) => SeebfStatus::Config,
        Error::DimensionMismatch(_) => SeebfStatus::Dimension,
        Error::ZfInfeasible(_) => SeebfStatus::ZfInfeasible,
        Error::Io(_) | Error::Csv(_) => SeebfStatus::Io,
        _ => SeebfStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (SeebfStatus, String)>) -> SeebfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SeebfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside seebf".into());
            SeebfStatus::Panic
        }
    }
}

fn fail(e: Error) -> (SeebfStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SeebfStatus, String) {
    (SeebfStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SeebfStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (SeebfStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn seebf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn seebf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The three-pair reference setup (`P_max = 10 dB`, `P_c = 7 dB`).
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn seebf_config_default(out: *mut *mut SeebfConfig) -> SeebfStatus {
    guard(|| {
        let out = borrow_mut(out, "out")?;
        *out = Box::into_raw(Box::new(SeebfConfig { inner: SystemConfig::reference_defaults() }));
        Ok(())
    })
}

/// Parses a JSON configuration document; the first power budget and circuit
/// power of the document are used.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn seebf_config_from_json(json: *const c_char, out: *mut *mut SeebfConfig) -> SeebfStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let out = borrow_mut(out, "out")?;
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| (SeebfStatus::InvalidArgument, "configuration is not valid UTF-8".to_string()))?;
        let exp = load_config(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(SeebfConfig { inner: exp.system }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library (or be NULL).
#[no_mangle]
pub unsafe extern "C" fn seebf_config_free(cfg: *mut SeebfConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seebf_config_set_p_max_db(cfg: *mut SeebfConfig, db: f64) -> SeebfStatus {
    guard(|| {
        let cfg = borrow_mut(cfg, "cfg")?;
        if !db.is_finite() {
            return Err((SeebfStatus::InvalidArgument, format!("power budget must be finite, got {db}")));
        }
        cfg.inner.p_max = db_to_linear(db);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seebf_config_set_circuit_power_db(cfg: *mut SeebfConfig, db: f64) -> SeebfStatus {
    guard(|| {
        let cfg = borrow_mut(cfg, "cfg")?;
        if !db.is_finite() {
            return Err((SeebfStatus::InvalidArgument, format!("circuit power must be finite, got {db}")));
        }
        cfg.inner.circuit_power = db_to_linear(db);
        Ok(())
    })
}

/// Whether the antenna counts pass the zero-forcing counting test.
///
/// # Safety
/// `cfg` must be a live handle and `feasible` writable.
#[no_mangle]
pub unsafe extern "C" fn seebf_zf_counting_test(cfg: *const SeebfConfig, feasible: *mut bool) -> SeebfStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        let feasible = borrow_mut(feasible, "feasible")?;
        *feasible = check_zf_feasibility(&cfg.inner).feasible;
        Ok(())
    })
}

/// Draws the Rayleigh channels of one seed.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn seebf_channels_generate(cfg: *const SeebfConfig, seed: u64, out: *mut *mut SeebfChannels) -> SeebfStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        let out = borrow_mut(out, "out")?;
        cfg.inner.validate().map_err(fail)?;
        *out = Box::into_raw(Box::new(SeebfChannels { inner: generate_channels(&cfg.inner, seed) }));
        Ok(())
    })
}

/// # Safety
/// `ch` must come from this library (or be NULL).
#[no_mangle]
pub unsafe extern "C" fn seebf_channels_free(ch: *mut SeebfChannels) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

/// Runs one method on one channel draw. An initialization failure is a
/// successful call whose run reports `SEEBF_TERMINATION_INIT_FAILED`.
///
/// # Safety
/// `cfg` and `ch` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn seebf_solve(
    cfg: *const SeebfConfig,
    ch: *const SeebfChannels,
    method: SeebfMethod,
    out: *mut *mut SeebfRun,
) -> SeebfStatus {
    guard(|| {
        let cfg = &borrow(cfg, "cfg")?.inner;
        let ch = &borrow(ch, "ch")?.inner;
        let out = borrow_mut(out, "out")?;
        let outcome = match method {
            SeebfMethod::ZfDinkelbach => solve_zf(ch, cfg).map(|r| r.outcome),
            other => {
                let kind = match other {
                    SeebfMethod::See => Objective::SecrecyEnergyEfficiency,
                    SeebfMethod::Ee => Objective::EnergyEfficiency,
                    _ => Objective::SumSecrecy,
                };
                let mut rng = auxiliary_rng(ch.seed, 0);
                solve_problem(kind, ch, cfg, &mut rng, &RunOptions::default())
            }
        }
        .map_err(fail)?;
        let see_bits = if outcome.termination == Termination::InitFailed {
            f64::NAN
        } else {
            seebf_core::metrics::see_objective(ch, &outcome.v, cfg).map(nats_to_bits).map_err(fail)?
        };
        *out = Box::into_raw(Box::new(SeebfRun { inner: outcome, see_bits }));
        Ok(())
    })
}

/// # Safety
/// `run` must come from this library (or be NULL).
#[no_mangle]
pub unsafe extern "C" fn seebf_run_free(run: *mut SeebfRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Secrecy energy efficiency of the final design in bits per Joule (NaN when
/// no design was produced).
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seebf_run_see_bits(run: *const SeebfRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.see_bits)
}

/// Final value of the method's own objective, nats based.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seebf_run_objective(run: *const SeebfRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.inner.objective)
}

/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seebf_run_iterations(run: *const SeebfRun) -> usize {
    run.as_ref().map_or(0, |r| r.inner.iterations())
}

/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn seebf_run_termination(run: *const SeebfRun, out: *mut SeebfTermination) -> SeebfStatus {
    guard(|| {
        let run = borrow(run, "run")?;
        let out = borrow_mut(out, "out")?;
        *out = match run.inner.termination {
            Termination::Converged => SeebfTermination::Converged,
            Termination::MaxIters => SeebfTermination::MaxIters,
            Termination::InitFailed => SeebfTermination::InitFailed,
            Termination::Failed => SeebfTermination::Failed,
        };
        Ok(())
    })
}

/// Copies beamformer `user` (`N × d_1`, column-major) into `re` and `im`,
/// each holding `len = N·d_1` doubles.
///
/// # Safety
/// `run` must be a live handle; `re` and `im` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn seebf_run_beamformer(run: *const SeebfRun, user: usize, re: *mut f64, im: *mut f64, len: usize) -> SeebfStatus {
    guard(|| {
        let run = borrow(run, "run")?;
        if re.is_null() || im.is_null() {
            return Err(null("output buffer"));
        }
        let v = run.inner.v.v.get(user).ok_or_else(|| {
            (SeebfStatus::InvalidArgument, format!("user {user} out of range (have {})", run.inner.v.v.len()))
        })?;
        if len != v.len() {
            return Err((SeebfStatus::Dimension, format!("buffer holds {len} entries, beamformer has {}", v.len())));
        }
        let re = std::slice::from_raw_parts_mut(re, len);
        let im = std::slice::from_raw_parts_mut(im, len);
        for (k, z) in v.iter().enumerate() {
            re[k] = z.re;
            im[k] = z.im;
        }
        Ok(())
    })
}
