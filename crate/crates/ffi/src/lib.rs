//! C ABI over the sparsespec estimators.
//!
//! Objects are opaque handles created by `ss_*_new`/`ss_*_read`/`ss_estimate`
//! and released with the matching `ss_*_free`. Every fallible call returns an
//! [`SsStatus`]; the message of the last failure on the calling thread is
//! available through [`ss_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use num_complex::Complex64;
use sparsespec::bench::Method;
use sparsespec::dictionary::build_grid;
use sparsespec::lasso::{self, SolverOptions, DEFAULT_PAD};
use sparsespec::model::{ComponentSet, SampledSignal, SamplingPoint, SamplingScheme, DEFAULT_FREQ_RANGE};
use sparsespec::sema::{self, SemaOptions};
use sparsespec::{fourier, io, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed or inconsistent input data.
    Data = 3,
    Io = 4,
    /// The estimator could not produce a result (too few peaks, singular fit).
    Estimation = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsMethod {
    Fourier = 0,
    Lasso = 1,
    Sema = 2,
}

/// One damped 2D component.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SsComponent {
    pub omega1: f64,
    pub omega2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub amp_re: f64,
    pub amp_im: f64,
}

/// Opaque sampled signal.
pub struct SsSignal(SampledSignal);

/// Opaque list of estimated components.
pub struct SsComponents(Vec<SsComponent>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> SsStatus {
    match e {
        Error::InvalidArgument(_) => SsStatus::InvalidArgument,
        Error::Format { .. } | Error::Empty(_) => SsStatus::Data,
        Error::Io { .. } => SsStatus::Io,
        _ => SsStatus::Estimation,
    }
}

fn guard(f: impl FnOnce() -> Result<(), SsStatus>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            SsStatus::Panic
        }
    }
}

fn fail(e: Error) -> SsStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> SsStatus {
    set_error(format!("{what} is null"));
    SsStatus::NullPointer
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len` bytes) and returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ss_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static version string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a signal from `n` samples at grid indices `(i1[k], i2[k])` and times
/// `(t1[k], t2[k])` inside an `n1 x n2` grid with spacings `dt1, dt2`.
///
/// # Safety
/// Each array must be valid for `n` reads; `out` must be valid for a write.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ss_signal_new(
    n: usize,
    i1: *const usize,
    i2: *const usize,
    t1: *const f64,
    t2: *const f64,
    re: *const f64,
    im: *const f64,
    n1: usize,
    n2: usize,
    dt1: f64,
    dt2: f64,
    out: *mut *mut SsSignal,
) -> SsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if n == 0 {
            return Err(fail(Error::Empty("samples")));
        }
        for (p, name) in [(i1.cast::<u8>(), "i1"), (i2.cast(), "i2"), (t1.cast(), "t1"), (t2.cast(), "t2"), (re.cast(), "re"), (im.cast(), "im")] {
            if p.is_null() {
                return Err(null(name));
            }
        }
        let (i1, i2) = (std::slice::from_raw_parts(i1, n), std::slice::from_raw_parts(i2, n));
        let (t1, t2) = (std::slice::from_raw_parts(t1, n), std::slice::from_raw_parts(t2, n));
        let (re, im) = (std::slice::from_raw_parts(re, n), std::slice::from_raw_parts(im, n));
        let points = (0..n)
            .map(|k| SamplingPoint { i1: i1[k], i2: i2[k], t1: t1[k], t2: t2[k] })
            .collect();
        let values = (0..n).map(|k| Complex64::new(re[k], im[k])).collect();
        let signal = SamplingScheme::new(points, (n1, n2), (dt1, dt2))
            .and_then(|s| SampledSignal::new(s, values))
            .map_err(fail)?;
        *out = Box::into_raw(Box::new(SsSignal(signal)));
        Ok(())
    })
}

/// Reads a samples CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ss_signal_read(path: *const c_char, out: *mut *mut SsSignal) -> SsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(Error::InvalidArgument("path is not UTF-8".into())))?;
        let signal = io::read_samples(&PathBuf::from(path)).map_err(fail)?;
        *out = Box::into_raw(Box::new(SsSignal(signal)));
        Ok(())
    })
}

/// Number of samples in `signal`, or 0 for a null handle.
///
/// # Safety
/// `signal` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_signal_len(signal: *const SsSignal) -> usize {
    signal.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `signal` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn ss_signal_free(signal: *mut SsSignal) {
    if !signal.is_null() {
        drop(Box::from_raw(signal));
    }
}

/// Estimates `k` components. `lambda` and the `p1 x p2` frequency dictionary
/// are used by the sparse methods only.
///
/// # Safety
/// `signal` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ss_estimate(
    signal: *const SsSignal,
    method: SsMethod,
    k: usize,
    lambda: f64,
    p1: usize,
    p2: usize,
    out: *mut *mut SsComponents,
) -> SsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let signal = &signal.as_ref().ok_or_else(|| null("signal"))?.0;
        let method = match method {
            SsMethod::Fourier => Method::Fourier,
            SsMethod::Lasso => Method::Lasso,
            SsMethod::Sema => Method::Sema,
        };
        let comps = estimate(signal, method, k, lambda, (p1, p2)).map_err(fail)?;
        let list = comps
            .iter()
            .map(|c| SsComponent {
                omega1: c.omega1,
                omega2: c.omega2,
                beta1: c.beta1,
                beta2: c.beta2,
                amp_re: c.amplitude.re,
                amp_im: c.amplitude.im,
            })
            .collect();
        *out = Box::into_raw(Box::new(SsComponents(list)));
        Ok(())
    })
}

fn estimate(signal: &SampledSignal, method: Method, k: usize, lambda: f64, dict: (usize, usize)) -> sparsespec::Result<ComponentSet> {
    if method == Method::Fourier {
        return fourier::estimate(signal, k, DEFAULT_PAD);
    }
    let grid = build_grid(dict.0, dict.1, DEFAULT_FREQ_RANGE, None)?;
    if method == Method::Lasso {
        let opts = SolverOptions { lambda, ..SolverOptions::default() };
        return Ok(lasso::estimate(signal, &grid, k, &opts, DEFAULT_PAD)?.components);
    }
    let opts = SemaOptions { lambda, ..SemaOptions::default() };
    Ok(sema::estimate(signal, &grid, k, &opts)?.0)
}

/// Number of components, or 0 for a null handle.
///
/// # Safety
/// `comps` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_components_len(comps: *const SsComponents) -> usize {
    comps.as_ref().map_or(0, |c| c.0.len())
}

/// Copies component `index` into `out`.
///
/// # Safety
/// `comps` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ss_components_get(comps: *const SsComponents, index: usize, out: *mut SsComponent) -> SsStatus {
    guard(|| {
        let comps = comps.as_ref().ok_or_else(|| null("comps"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = comps.0.get(index).ok_or_else(|| {
            fail(Error::InvalidArgument(format!("index {index} out of range (len {})", comps.0.len())))
        })?;
        *out = *c;
        Ok(())
    })
}

/// # Safety
/// `comps` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn ss_components_free(comps: *mut SsComponents) {
    if !comps.is_null() {
        drop(Box::from_raw(comps));
    }
}
