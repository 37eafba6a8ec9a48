//! C ABI over the `prefopt` library.
//!
//! Objects cross the boundary as opaque pointers created and released by this
//! library. Every fallible call returns a [`PrefoptStatus`]; on failure the
//! message is available from [`prefopt_last_error_message`] on the same
//! thread. Strings returned through out-parameters are owned by the caller
//! and must be released with [`prefopt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use prefopt::analysis::{run_campaign, CampaignConfig};
use prefopt::harness::{self, ExperimentConfig, RunRecord};
use prefopt::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefoptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidArgument = 4,
    Runtime = 5,
    Io = 6,
    NotFound = 7,
    Panic = 8,
}

/// Opaque experiment configuration.
pub struct PrefoptConfig {
    inner: ExperimentConfig,
}

/// Opaque result of a completed experiment.
pub struct PrefoptRunRecord {
    inner: RunRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> PrefoptStatus {
    match e {
        Error::Config { .. } => PrefoptStatus::Config,
        Error::InvalidArgument(_) | Error::Shape(_) => PrefoptStatus::InvalidArgument,
        Error::Io(_) => PrefoptStatus::Io,
        _ => PrefoptStatus::Runtime,
    }
}

fn fail(status: PrefoptStatus, msg: impl Into<String>) -> PrefoptStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), PrefoptStatus>) -> PrefoptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PrefoptStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(PrefoptStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: prefopt::Result<T>) -> Result<T, PrefoptStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, PrefoptStatus> {
    if p.is_null() {
        return Err(fail(PrefoptStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PrefoptStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, PrefoptStatus> {
    p.as_ref().ok_or_else(|| fail(PrefoptStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), PrefoptStatus> {
    if out.is_null() {
        return Err(fail(PrefoptStatus::NullPointer, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), PrefoptStatus> {
    let c = CString::new(s).map_err(|_| fail(PrefoptStatus::Runtime, "string contains a nul byte"))?;
    write_out(out, c.into_raw())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn prefopt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn prefopt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn prefopt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration for `env` (`linear_matched`, `linear_flipped`, `neural`).
///
/// # Safety
/// `env` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prefopt_config_default(env: *const c_char, out: *mut *mut PrefoptConfig) -> PrefoptStatus {
    guard(|| {
        let name = str_arg(env, "env")?;
        let text = format!("env = {name}");
        let inner = lift(ExperimentConfig::parse(&text, &[]))?;
        write_out(out, Box::into_raw(Box::new(PrefoptConfig { inner })))
    })
}

/// Parses a config document.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prefopt_config_from_str(text: *const c_char, out: *mut *mut PrefoptConfig) -> PrefoptStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let inner = lift(ExperimentConfig::parse(text, &[]))?;
        write_out(out, Box::into_raw(Box::new(PrefoptConfig { inner })))
    })
}

/// Applies one `key = value` override. On failure the config is unchanged.
///
/// # Safety
/// `cfg` must be a live config; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn prefopt_config_set(
    cfg: *mut PrefoptConfig,
    key: *const c_char,
    value: *const c_char,
) -> PrefoptStatus {
    guard(|| {
        let cfg = cfg
            .as_mut()
            .ok_or_else(|| fail(PrefoptStatus::NullPointer, "config is null"))?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        let next = lift(ExperimentConfig::parse(
            &cfg.inner.to_config_text(),
            &[format!("{key}={value}")],
        ))?;
        cfg.inner = next;
        Ok(())
    })
}

/// Renders the config as a replayable document.
///
/// # Safety
/// `cfg` must be a live config; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prefopt_config_to_string(cfg: *const PrefoptConfig, out: *mut *mut c_char) -> PrefoptStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "config")?;
        write_string(out, cfg.inner.to_config_text())
    })
}

/// # Safety
/// `cfg` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn prefopt_config_free(cfg: *mut PrefoptConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs every configured seed on `jobs` threads (0 = all cores).
///
/// # Safety
/// `cfg` must be a live config; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prefopt_run_experiment(
    cfg: *const PrefoptConfig,
    jobs: u32,
    out: *mut *mut PrefoptRunRecord,
) -> PrefoptStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "config")?;
        let inner = lift(harness::run_experiment(&cfg.inner, jobs as usize))?;
        write_out(out, Box::into_raw(Box::new(PrefoptRunRecord { inner })))
    })
}

/// Number of method entries (one per RMB-PO+ prompt-set size).
///
/// # Safety
/// `rec` must be a live record or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn prefopt_record_method_count(rec: *const PrefoptRunRecord) -> usize {
    rec.as_ref().map_or(0, |r| r.inner.summaries.len())
}

/// Label of method entry `index`, e.g. `rmb_po` or `rmb_po_plus(m=100)`.
///
/// # Safety
/// `rec` must be a live record; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prefopt_record_method_label(
    rec: *const PrefoptRunRecord,
    index: usize,
    out: *mut *mut c_char,
) -> PrefoptStatus {
    guard(|| {
        let rec = ref_arg(rec, "record")?;
        let s = rec
            .inner
            .summaries
            .get(index)
            .ok_or_else(|| fail(PrefoptStatus::NotFound, format!("no method entry {index}")))?;
        write_string(out, s.label.clone())
    })
}

/// Trimmed-mean optimality gap of `label`, or the raw mean below three seeds.
///
/// # Safety
/// `rec` must be a live record; `label` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn prefopt_record_trimmed_gap(
    rec: *const PrefoptRunRecord,
    label: *const c_char,
    out: *mut f64,
) -> PrefoptStatus {
    guard(|| {
        let rec = ref_arg(rec, "record")?;
        let label = str_arg(label, "label")?;
        let gap = rec
            .inner
            .headline_gap(label)
            .ok_or_else(|| fail(PrefoptStatus::NotFound, format!("no method `{label}` in record")))?;
        write_out(out, gap)
    })
}

/// summary.json contents.
///
/// # Safety
/// `rec` must be a live record; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prefopt_record_summary_json(rec: *const PrefoptRunRecord, out: *mut *mut c_char) -> PrefoptStatus {
    guard(|| {
        let rec = ref_arg(rec, "record")?;
        let text = serde_json::to_string_pretty(&harness::summary_json(&rec.inner))
            .map_err(|e| fail(PrefoptStatus::Runtime, e.to_string()))?;
        write_string(out, text)
    })
}

/// results.csv contents.
///
/// # Safety
/// `rec` must be a live record; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prefopt_record_results_csv(rec: *const PrefoptRunRecord, out: *mut *mut c_char) -> PrefoptStatus {
    guard(|| {
        let rec = ref_arg(rec, "record")?;
        write_string(out, harness::results_csv(&rec.inner))
    })
}

/// Writes all artifacts (CSV, JSON, config snapshot, figures) under `dir`.
///
/// # Safety
/// `rec` must be a live record; `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn prefopt_record_write(rec: *const PrefoptRunRecord, dir: *const c_char) -> PrefoptStatus {
    guard(|| {
        let rec = ref_arg(rec, "record")?;
        let dir = str_arg(dir, "dir")?;
        lift(harness::write_artifacts(&rec.inner, Path::new(dir)))
    })
}

/// # Safety
/// `rec` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn prefopt_record_free(rec: *mut PrefoptRunRecord) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// Randomized check of the RMB-PO regret bound; writes the violation count.
///
/// # Safety
/// `violations` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prefopt_prop1_campaign(
    size: usize,
    max_states: usize,
    max_actions: usize,
    seed: u64,
    violations: *mut usize,
) -> PrefoptStatus {
    guard(|| {
        let cfg = CampaignConfig {
            size,
            max_states,
            max_actions,
            seed,
            ..Default::default()
        };
        let report = lift(run_campaign(&cfg))?;
        write_out(violations, report.violations.len())
    })
}

/// Mean after dropping one minimum and one maximum; needs `len >= 3`.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prefopt_trimmed_mean(values: *const f64, len: usize, out: *mut f64) -> PrefoptStatus {
    guard(|| {
        if values.is_null() {
            return Err(fail(PrefoptStatus::NullPointer, "values is null"));
        }
        let v = std::slice::from_raw_parts(values, len);
        write_out(out, lift(harness::trimmed_mean(v))?)
    })
}

/// Name of a built-in environment by index (0..3), or null past the end.
#[no_mangle]
pub extern "C" fn prefopt_env_name(index: usize) -> *const c_char {
    const NAMES: [&str; 3] = ["linear_matched\0", "linear_flipped\0", "neural\0"];
    NAMES.get(index).map_or(ptr::null(), |s| s.as_ptr().cast())
}
