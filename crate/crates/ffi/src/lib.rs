//! C interface to the signaling game lab.
//!
//! Every fallible function returns a [`SiglabStatus`]; on failure the
//! message is available from [`siglab_last_error`] on the same thread.
//! Handles are opaque, created by `*_new`/`*_parse`/`*_load` functions and
//! released with the matching `*_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{CStr, CString, c_char};
use std::panic::{AssertUnwindSafe, catch_unwind};
use std::path::Path;
use std::ptr;

use siglab::experiment::checkpoint;
use siglab::{Error, ExperimentConfig, MetricRecord, Trainer};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiglabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Parse = 4,
    Io = 5,
    Checkpoint = 6,
    Dimension = 7,
    Logic = 8,
    Render = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Parsed experiment configuration.
pub struct SiglabConfig {
    inner: ExperimentConfig,
}

/// One training run together with the configuration it was built from.
pub struct SiglabTrainer {
    trainer: Trainer,
    config: ExperimentConfig,
}

/// Number of values written by `siglab_trainer_evaluate`.
pub const SIGLAB_METRIC_COUNT: usize = 10;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> SiglabStatus {
    match err {
        Error::Config(_) => SiglabStatus::Config,
        Error::Parse { .. } => SiglabStatus::Parse,
        Error::Io { .. } => SiglabStatus::Io,
        Error::Checkpoint(_) => SiglabStatus::Checkpoint,
        Error::Dimension { .. } => SiglabStatus::Dimension,
        Error::Logic(_) => SiglabStatus::Logic,
        Error::Render(_) => SiglabStatus::Render,
    }
}

struct Failure(SiglabStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SiglabStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            SiglabStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            SiglabStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SiglabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller passes a NUL-terminated string that outlives the call.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(SiglabStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut *mut T, what: &str) -> Result<&'a mut *mut T, Failure> {
    // SAFETY: caller passes either null or a valid, writable pointer slot.
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call into this library.
#[unsafe(no_mangle)]
pub extern "C" fn siglab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a `key = value` configuration text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn siglab_config_parse(text: *const c_char, out: *mut *mut SiglabConfig) -> SiglabStatus {
    guard(|| {
        let slot = unsafe { out_arg(out, "out") }?;
        *slot = ptr::null_mut();
        let text = unsafe { str_arg(text, "text") }?;
        let inner: ExperimentConfig = text.parse()?;
        *slot = Box::into_raw(Box::new(SiglabConfig { inner }));
        Ok(())
    })
}

/// Reads and parses a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn siglab_config_from_file(path: *const c_char, out: *mut *mut SiglabConfig) -> SiglabStatus {
    guard(|| {
        let slot = unsafe { out_arg(out, "out") }?;
        *slot = ptr::null_mut();
        let path = unsafe { str_arg(path, "path") }?;
        let inner = ExperimentConfig::from_file(Path::new(path))?;
        *slot = Box::into_raw(Box::new(SiglabConfig { inner }));
        Ok(())
    })
}

/// Total parameter count of the configured sender and receiver.
///
/// # Safety
/// `config` must be null or a live handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn siglab_config_param_count(config: *const SiglabConfig) -> usize {
    unsafe { config.as_ref() }.map_or(0, |c| c.inner.agent_spec().param_count())
}

/// # Safety
/// `config` must be null or a handle not freed before.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn siglab_config_free(config: *mut SiglabConfig) {
    if !config.is_null() {
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Fresh run with parameters initialized from `seed`. `threads` caps
/// evaluation parallelism; 0 uses the global pool.
///
/// # Safety
/// `config` must be a live handle and `out` a writable pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn siglab_trainer_new(
    config: *const SiglabConfig,
    seed: u64,
    threads: usize,
    out: *mut *mut SiglabTrainer,
) -> SiglabStatus {
    guard(|| {
        let slot = unsafe { out_arg(out, "out") }?;
        *slot = ptr::null_mut();
        let config = unsafe { config.as_ref() }.ok_or_else(|| null("config"))?;
        let mut trainer = Trainer::new(config.inner.run_setup()?, seed)?;
        if threads > 0 {
            trainer = trainer.with_threads(threads)?;
        }
        *slot = Box::into_raw(Box::new(SiglabTrainer {
            trainer,
            config: config.inner.clone(),
        }));
        Ok(())
    })
}

/// Resumes a run from a checkpoint and its sidecar file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn siglab_trainer_load(path: *const c_char, out: *mut *mut SiglabTrainer) -> SiglabStatus {
    guard(|| {
        let slot = unsafe { out_arg(out, "out") }?;
        *slot = ptr::null_mut();
        let path = unsafe { str_arg(path, "path") }?;
        let (trainer, config) = checkpoint::resume(Path::new(path))?;
        *slot = Box::into_raw(Box::new(SiglabTrainer { trainer, config }));
        Ok(())
    })
}

/// # Safety
/// `trainer` must be null or a handle not freed before.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn siglab_trainer_free(trainer: *mut SiglabTrainer) {
    if !trainer.is_null() {
        drop(unsafe { Box::from_raw(trainer) });
    }
}

/// Runs `iterations` optimizer steps.
///
/// # Safety
/// `trainer` must be a live handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn siglab_trainer_step(trainer: *mut SiglabTrainer, iterations: u64) -> SiglabStatus {
    guard(|| {
        let t = unsafe { trainer.as_mut() }.ok_or_else(|| null("trainer"))?;
        for _ in 0..iterations {
            t.trainer.step()?;
        }
        Ok(())
    })
}

/// Completed optimizer steps, or 0 for a null handle.
///
/// # Safety
/// `trainer` must be null or a live handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn siglab_trainer_iteration(trainer: *const SiglabTrainer) -> u64 {
    unsafe { trainer.as_ref() }.map_or(0, |t| t.trainer.iteration())
}

/// Plays the metrics batch at the current parameters and writes the
/// `SIGLAB_METRIC_COUNT` values in the order of `siglab_metric_name`.
///
/// # Safety
/// `trainer` must be a live handle and `out` must point to `len` doubles.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn siglab_trainer_evaluate(
    trainer: *const SiglabTrainer,
    out: *mut f64,
    len: usize,
) -> SiglabStatus {
    guard(|| {
        let t = unsafe { trainer.as_ref() }.ok_or_else(|| null("trainer"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len < SIGLAB_METRIC_COUNT {
            return Err(Failure(
                SiglabStatus::BufferTooSmall,
                format!("need room for {SIGLAB_METRIC_COUNT} values, got {len}"),
            ));
        }
        let (_, record) = t.trainer.evaluate()?;
        // SAFETY: `out` holds at least `len` >= SIGLAB_METRIC_COUNT doubles.
        let dst = unsafe { std::slice::from_raw_parts_mut(out, SIGLAB_METRIC_COUNT) };
        dst.copy_from_slice(&record.values());
        Ok(())
    })
}

/// Copies the current parameters into `out`, which must hold
/// `siglab_config_param_count` doubles.
///
/// # Safety
/// `trainer` must be a live handle and `out` must point to `len` doubles.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn siglab_trainer_params(
    trainer: *const SiglabTrainer,
    out: *mut f64,
    len: usize,
) -> SiglabStatus {
    guard(|| {
        let t = unsafe { trainer.as_ref() }.ok_or_else(|| null("trainer"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let theta = &t.trainer.theta().values;
        if len < theta.len() {
            return Err(Failure(
                SiglabStatus::BufferTooSmall,
                format!("need room for {} values, got {len}", theta.len()),
            ));
        }
        // SAFETY: `out` holds at least `len` >= theta.len() doubles.
        unsafe { std::slice::from_raw_parts_mut(out, theta.len()) }.copy_from_slice(theta);
        Ok(())
    })
}

/// Writes a checkpoint and its sidecar to `path`.
///
/// # Safety
/// `trainer` must be a live handle and `path` a NUL-terminated string.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn siglab_trainer_save(trainer: *const SiglabTrainer, path: *const c_char) -> SiglabStatus {
    guard(|| {
        let t = unsafe { trainer.as_ref() }.ok_or_else(|| null("trainer"))?;
        let path = unsafe { str_arg(path, "path") }?;
        checkpoint::save_trainer(Path::new(path), &t.trainer, &t.config)?;
        Ok(())
    })
}

/// Name of metric `index` (0-based, below `SIGLAB_METRIC_COUNT`), or null.
/// The string is static.
#[unsafe(no_mangle)]
pub extern "C" fn siglab_metric_name(index: usize) -> *const c_char {
    const NAMES: [&CStr; SIGLAB_METRIC_COUNT] = [
        c"accuracy",
        c"fitness",
        c"voc_sum",
        c"voc_mean",
        c"signal_entropy",
        c"target_certainty",
        c"signal_certainty",
        c"max_contextless_accuracy",
        c"sender_context_gain",
        c"receiver_context_gain",
    ];
    debug_assert!(NAMES.iter().zip(MetricRecord::FIELDS).all(|(c, f)| c.to_str() == Ok(f)));
    NAMES.get(index).map_or(ptr::null(), |c| c.as_ptr())
}
