//! C interface to the freqsamp toolkit.
//!
//! Systems are opaque `FsqSystem` handles built from a JSON system snapshot.
//! Every call returns an `FsqStatus`; on failure the message is available
//! from `fsq_last_error` on the same thread. Panics are caught at the
//! boundary and reported as `FSQ_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use freqsamp::antialias::choose_gamma;
use freqsamp::apps::antialiased_grid;
use freqsamp::apps::metrics::echo_density;
use freqsamp::grid::RealSignal;
use freqsamp::shell::{InputLayer, OutputLayer, Shell};
use freqsamp::system::{System, SystemSnapshot};
use freqsamp::Error;

#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsqStatus {
    FSQ_OK = 0,
    FSQ_NULL_POINTER = 1,
    FSQ_INVALID_ARGUMENT = 2,
    FSQ_CONFIG = 3,
    FSQ_NUMERICAL = 4,
    FSQ_SHAPE = 5,
    FSQ_IO = 6,
    FSQ_PANIC = 7,
}

use FsqStatus::*;

/// Opaque system handle.
pub struct FsqSystem {
    shell: Shell,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(FsqStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape { .. } => FSQ_SHAPE,
            Error::Io(_) | Error::Wav(_) => FSQ_IO,
            Error::Domain(_) => FSQ_INVALID_ARGUMENT,
            _ if e.is_config() => FSQ_CONFIG,
            _ => FSQ_NUMERICAL,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(FSQ_INVALID_ARGUMENT, msg.into())
}

fn null(name: &str) -> Failure {
    Failure(FSQ_NULL_POINTER, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FsqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FSQ_OK,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FSQ_PANIC
        }
    }
}

unsafe fn system_ref<'a>(sys: *const FsqSystem) -> Result<&'a FsqSystem, Failure> {
    sys.as_ref().ok_or_else(|| null("system"))
}

unsafe fn out_slice<'a>(out: *mut f64, capacity: usize, needed: usize) -> Result<&'a mut [f64], Failure> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if capacity < needed {
        return Err(invalid(format!("output buffer holds {capacity} values, {needed} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(out, needed))
}

fn channel(input_channel: i64) -> Option<usize> {
    usize::try_from(input_channel).ok()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fsq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fsq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a system from a JSON snapshot on a grid of `num_bins` points at
/// `sample_rate`, enveloped for `antialias_db` (0 disables).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fsq_system_from_json(
    json: *const c_char,
    num_bins: usize,
    sample_rate: f64,
    antialias_db: f64,
    out: *mut *mut FsqSystem,
) -> FsqStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| invalid(format!("json is not UTF-8: {e}")))?;
        let snap: SystemSnapshot = serde_json::from_str(text).map_err(Error::from)?;
        let grid = antialiased_grid(num_bins, sample_rate, antialias_db)?;
        let system = System::from_snapshot(&snap, &grid)?;
        let shell = Shell::new(system, InputLayer::Identity, OutputLayer::Identity)?;
        *out = Box::into_raw(Box::new(FsqSystem { shell }));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `sys` must come from `fsq_system_from_json` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fsq_system_free(sys: *mut FsqSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Input count, output count and grid size of a system.
///
/// # Safety
/// `sys` must be a live handle; output pointers may be null to skip them.
#[no_mangle]
pub unsafe extern "C" fn fsq_system_info(
    sys: *const FsqSystem,
    num_inputs: *mut usize,
    num_outputs: *mut usize,
    num_bins: *mut usize,
) -> FsqStatus {
    guard(|| {
        let s = &system_ref(sys)?.shell;
        if let Some(p) = num_inputs.as_mut() {
            *p = s.n_in();
        }
        if let Some(p) = num_outputs.as_mut() {
            *p = s.n_out();
        }
        if let Some(p) = num_bins.as_mut() {
            *p = s.grid().num_bins();
        }
        Ok(())
    })
}

/// Impulse response of `output_channel` for an impulse on `input_channel`
/// (negative: all inputs at once). Writes `2(num_bins − 1)` samples.
///
/// # Safety
/// `sys` must be a live handle and `out` hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn fsq_system_impulse_response(
    sys: *const FsqSystem,
    input_channel: i64,
    output_channel: usize,
    out: *mut f64,
    capacity: usize,
) -> FsqStatus {
    guard(|| {
        let s = &system_ref(sys)?.shell;
        if output_channel >= s.n_out() {
            return Err(invalid(format!("output channel {output_channel} of {}", s.n_out())));
        }
        let ir = s.get_time_response(channel(input_channel))?.swap_remove(output_channel);
        out_slice(out, capacity, ir.len())?.copy_from_slice(&ir.samples);
        Ok(())
    })
}

/// Magnitude response over the `num_bins` grid points.
///
/// # Safety
/// `sys` must be a live handle and `out` hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn fsq_system_magnitude_response(
    sys: *const FsqSystem,
    input_channel: i64,
    output_channel: usize,
    out: *mut f64,
    capacity: usize,
) -> FsqStatus {
    guard(|| {
        let s = &system_ref(sys)?.shell;
        if output_channel >= s.n_out() {
            return Err(invalid(format!("output channel {output_channel} of {}", s.n_out())));
        }
        let col = s.get_freq_response(channel(input_channel))?.column(output_channel)?;
        for (o, z) in out_slice(out, capacity, col.len())?.iter_mut().zip(col) {
            *o = z.norm();
        }
        Ok(())
    })
}

/// Envelope factor γ that suppresses aliasing by `target_db` at the wrap
/// point of an `num_bins`-point grid.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fsq_choose_gamma(num_bins: usize, target_db: f64, out: *mut f64) -> FsqStatus {
    guard(|| {
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        *o = choose_gamma(num_bins, target_db)?;
        Ok(())
    })
}

/// Echo density profile of `len` samples. Writes one value per hop of
/// `window / 2` samples and stores the count in `count`.
///
/// # Safety
/// `ir` must hold `len` doubles, `eta` hold `capacity` doubles and `count`
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fsq_echo_density(
    ir: *const f64,
    len: usize,
    sample_rate: f64,
    window: usize,
    eta: *mut f64,
    capacity: usize,
    count: *mut usize,
) -> FsqStatus {
    guard(|| {
        if ir.is_null() {
            return Err(null("ir"));
        }
        let n = count.as_mut().ok_or_else(|| null("count"))?;
        let samples = std::slice::from_raw_parts(ir, len).to_vec();
        let profile = echo_density(&RealSignal::new(samples, sample_rate)?, window)?;
        out_slice(eta, capacity, profile.eta.len())?.copy_from_slice(&profile.eta);
        *n = profile.eta.len();
        Ok(())
    })
}
