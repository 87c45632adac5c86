//! C ABI over `alex-core`.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns an
//! [`AlexStatus`]; on failure, [`alex_last_error`] describes the problem for
//! the calling thread. Panics are caught and reported as
//! [`AlexStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use alex_core::config::RunConfig;
use alex_core::domain::CommunityDataset;
use alex_core::mdp::Scenario;
use alex_core::metrics::compute_metrics;
use alex_core::report::write_run_dir;
use alex_core::simulate::{run_scenario, ScenarioRun};
use alex_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlexStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidDataset = 5,
    Config = 6,
    Incompatible = 7,
    Solver = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlexScenario {
    NoDerms = 0,
    IndividualDerms = 1,
    Alex = 2,
}

impl From<AlexScenario> for Scenario {
    fn from(s: AlexScenario) -> Self {
        match s {
            AlexScenario::NoDerms => Scenario::NoDerms,
            AlexScenario::IndividualDerms => Scenario::IndividualDerms,
            AlexScenario::Alex => Scenario::Alex,
        }
    }
}

/// Community net-load metrics. Load factors are NaN when undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AlexMetrics {
    pub avg_daily_import: f64,
    pub avg_daily_export: f64,
    pub avg_daily_peak: f64,
    pub avg_daily_valley: f64,
    pub max_peak: f64,
    pub min_valley: f64,
    pub ramping_per_step: f64,
    pub ramping_daily_sum: f64,
    pub daily_load_factor_complement: f64,
    pub monthly_load_factor_complement: f64,
}

/// A parsed run configuration.
pub struct AlexConfig(RunConfig);

/// A loaded, validated community dataset.
pub struct AlexDataset(CommunityDataset);

/// A solved and replayed scenario.
pub struct AlexRun {
    scenario: Scenario,
    run: ScenarioRun,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

fn status_of(e: &Error) -> AlexStatus {
    match e {
        Error::InvalidArgument(_)
        | Error::SocOutOfRange { .. }
        | Error::NegativeQuantity { .. }
        | Error::EmptySeries
        | Error::AllWindowsSkipped => AlexStatus::InvalidArgument,
        Error::Io { .. } | Error::MissingFile(_) => AlexStatus::Io,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => AlexStatus::Parse,
        Error::InvalidDataset(_) | Error::UnmappedField { .. } | Error::LengthMismatch { .. } => {
            AlexStatus::InvalidDataset
        }
        Error::Config(_) => AlexStatus::Config,
        Error::Incompatible(_) | Error::StateSpaceMismatch(_) => AlexStatus::Incompatible,
        Error::NonFiniteReward { .. } | Error::InfeasiblePolicy { .. } | Error::MissingBackground => AlexStatus::Solver,
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (AlexStatus, String)>) -> AlexStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AlexStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {message}"));
            AlexStatus::Panic
        }
    }
}

fn core<T>(r: alex_core::Result<T>) -> Result<T, (AlexStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

unsafe fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, (AlexStatus, String)> {
    p.as_ref()
        .ok_or_else(|| (AlexStatus::NullArgument, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (AlexStatus, String)> {
    p.as_mut()
        .ok_or_else(|| (AlexStatus::NullArgument, format!("{what} is null")))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, (AlexStatus, String)> {
    if p.is_null() {
        return Err((AlexStatus::NullArgument, "path is null".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| (AlexStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn alex_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn alex_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a TOML config file. Relative dataset paths resolve against the
/// file's directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn alex_config_load(path: *const c_char, out: *mut *mut AlexConfig) -> AlexStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let config = core(RunConfig::load(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(AlexConfig(config)));
        Ok(())
    })
}

/// Overrides the config's seed.
///
/// # Safety
/// `config` must come from [`alex_config_load`].
#[no_mangle]
pub unsafe extern "C" fn alex_config_set_seed(config: *mut AlexConfig, seed: u64) -> AlexStatus {
    guard(|| {
        out_ptr(config, "config")?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`alex_config_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn alex_config_free(config: *mut AlexConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Loads (or generates) the dataset a config names.
///
/// # Safety
/// `config` must come from [`alex_config_load`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn alex_dataset_load(config: *const AlexConfig, out: *mut *mut AlexDataset) -> AlexStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let ds = core(non_null(config, "config")?.0.load_dataset())?;
        *out = Box::into_raw(Box::new(AlexDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from [`alex_dataset_load`]; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn alex_dataset_shape(
    dataset: *const AlexDataset,
    buildings: *mut usize,
    steps: *mut usize,
) -> AlexStatus {
    guard(|| {
        let ds = &non_null(dataset, "dataset")?.0;
        *out_ptr(buildings, "buildings")? = ds.buildings.len();
        *out_ptr(steps, "steps")? = ds.step_count();
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from [`alex_dataset_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn alex_dataset_free(dataset: *mut AlexDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Solves the scenario's policies and replays them through the market.
///
/// # Safety
/// Handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn alex_run_scenario(
    config: *const AlexConfig,
    dataset: *const AlexDataset,
    scenario: AlexScenario,
    out: *mut *mut AlexRun,
) -> AlexStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let config = &non_null(config, "config")?.0;
        let ds = &non_null(dataset, "dataset")?.0;
        let scenario = Scenario::from(scenario);
        let run = core(run_scenario(ds, scenario, &config.equilibrium_config()))?;
        *out = Box::into_raw(Box::new(AlexRun { scenario, run }));
        Ok(())
    })
}

/// Reports whether the best-response search met its threshold and how many
/// rounds it used.
///
/// # Safety
/// `run` must be live; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn alex_run_convergence(
    run: *const AlexRun,
    converged: *mut bool,
    rounds: *mut usize,
) -> AlexStatus {
    guard(|| {
        let r = &non_null(run, "run")?.run;
        *out_ptr(converged, "converged")? = r.converged();
        *out_ptr(rounds, "rounds")? = r.convergence.round_count();
        Ok(())
    })
}

/// Copies the community net load into `buffer`. `written` always receives
/// the series length; a short buffer yields `BufferTooSmall` and no copy.
///
/// # Safety
/// `buffer` must hold `capacity` doubles (it may be null when `capacity` is 0).
#[no_mangle]
pub unsafe extern "C" fn alex_run_net_load(
    run: *const AlexRun,
    buffer: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> AlexStatus {
    guard(|| {
        let series = non_null(run, "run")?.run.trace.community_net_load();
        *out_ptr(written, "written")? = series.len();
        if capacity < series.len() {
            return Err((
                AlexStatus::BufferTooSmall,
                format!("need {} values, buffer holds {capacity}", series.len()),
            ));
        }
        if buffer.is_null() {
            return Err((AlexStatus::NullArgument, "buffer is null".into()));
        }
        ptr::copy_nonoverlapping(series.as_ptr(), buffer, series.len());
        Ok(())
    })
}

/// # Safety
/// `run` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn alex_run_metrics(run: *const AlexRun, out: *mut AlexMetrics) -> AlexStatus {
    guard(|| {
        let trace = &non_null(run, "run")?.run.trace;
        let m = core(compute_metrics(&trace.community_net_load(), &trace.calendar))?;
        let lf = |l: Option<alex_core::metrics::LoadFactor>| l.map_or(f64::NAN, |l| l.complement);
        *out_ptr(out, "out")? = AlexMetrics {
            avg_daily_import: m.avg_daily_import,
            avg_daily_export: m.avg_daily_export,
            avg_daily_peak: m.avg_daily_peak,
            avg_daily_valley: m.avg_daily_valley,
            max_peak: m.max_peak,
            min_valley: m.min_valley,
            ramping_per_step: m.ramping.per_step,
            ramping_daily_sum: m.ramping.daily_sum,
            daily_load_factor_complement: lf(m.daily_load_factor),
            monthly_load_factor_complement: lf(m.monthly_load_factor),
        };
        Ok(())
    })
}

/// Writes the full run directory (manifest, trace, policies, metrics,
/// figure series) to `dir`.
///
/// # Safety
/// Handles must be live and be the ones the run was made from.
#[no_mangle]
pub unsafe extern "C" fn alex_run_write(
    run: *const AlexRun,
    config: *const AlexConfig,
    dataset: *const AlexDataset,
    dir: *const c_char,
) -> AlexStatus {
    guard(|| {
        let run = non_null(run, "run")?;
        let config = &non_null(config, "config")?.0;
        let ds = &non_null(dataset, "dataset")?.0;
        core(write_run_dir(path_arg(dir)?, config, ds, run.scenario, &run.run))?;
        Ok(())
    })
}

/// # Safety
/// `run` must come from [`alex_run_scenario`] or be null.
#[no_mangle]
pub unsafe extern "C" fn alex_run_free(run: *mut AlexRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
