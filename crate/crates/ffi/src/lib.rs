//! C interface to hlspec.
//!
//! Every function returns an `HlsStatus`; on failure the message is kept per
//! thread and read with `hls_last_error`. Frequencies cross the boundary in
//! Hz and times in seconds. Datasets are opaque handles released with
//! `hls_dataset_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use hlspec::estimation::{
    fisher_comparison, fit_lineshape, lineshape, FitData, FixedParams, LineshapeParams,
};
use hlspec::io::{read_dataset, write_dataset};
use hlspec::scan::{run_scan, ScanConfig, SpectrumDataset};
use hlspec::units::{hz, to_hz};
use hlspec::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Dataset = 4,
    Numerical = 5,
    Io = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Opaque dataset handle.
pub struct HlsDataset(SpectrumDataset);

/// Lineshape fit with the pulse time held fixed.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HlsFit {
    pub a: f64,
    pub omega_line_hz: f64,
    pub tau_s: f64,
    pub alpha: f64,
    pub delta0_hz: f64,
    /// Standard error of `alpha`; NaN when unavailable.
    pub alpha_err: f64,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> HlsStatus {
    match e {
        Error::Config(_) => HlsStatus::Config,
        Error::Dataset(_) => HlsStatus::Dataset,
        Error::Io(_) => HlsStatus::Io,
        Error::Integration { .. }
        | Error::Truncation { .. }
        | Error::NonConvergence(_)
        | Error::DegenerateData(_)
        | Error::NotHermitian { .. }
        | Error::ParityLeakage { .. } => HlsStatus::Numerical,
        _ => HlsStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (HlsStatus, String)>) -> HlsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HlsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HlsStatus::Panic
        }
    }
}

fn lib(e: Error) -> (HlsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (HlsStatus, String) {
    (HlsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (HlsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (HlsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn dataset<'a>(ds: *const HlsDataset) -> Result<&'a SpectrumDataset, (HlsStatus, String)> {
    ds.as_ref().map(|d| &d.0).ok_or_else(|| null("dataset"))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), (HlsStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread. Valid until the next call
/// that fails on the same thread.
#[no_mangle]
pub extern "C" fn hls_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn hls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Runs a scan described by one `[[scan]]` table in TOML.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hls_scan_run(
    config_toml: *const c_char,
    out: *mut *mut HlsDataset,
) -> HlsStatus {
    guard(|| {
        let text = text(config_toml, "config")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg: ScanConfig =
            toml::from_str(text).map_err(|e| (HlsStatus::Config, e.to_string()))?;
        cfg.validate().map_err(lib)?;
        let ds = run_scan(&cfg).map_err(lib)?;
        out.write(Box::into_raw(Box::new(HlsDataset(ds))));
        Ok(())
    })
}

/// Reads a dataset file and its metadata sidecar.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hls_dataset_read(
    path: *const c_char,
    out: *mut *mut HlsDataset,
) -> HlsStatus {
    guard(|| {
        let path = text(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = read_dataset(Path::new(path)).map_err(lib)?;
        out.write(Box::into_raw(Box::new(HlsDataset(ds))));
        Ok(())
    })
}

/// Writes a dataset file and its metadata sidecar.
///
/// # Safety
/// `ds` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hls_dataset_write(
    ds: *const HlsDataset,
    path: *const c_char,
) -> HlsStatus {
    guard(|| write_dataset(dataset(ds)?, Path::new(text(path, "path")?)).map_err(lib))
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hls_dataset_free(ds: *mut HlsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of points, axes and outcomes.
///
/// # Safety
/// `ds` must be a live handle; each output pointer must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn hls_dataset_shape(
    ds: *const HlsDataset,
    points: *mut usize,
    axes: *mut usize,
    outcomes: *mut usize,
) -> HlsStatus {
    guard(|| {
        let d = dataset(ds)?;
        for (p, v) in [
            (points, d.points.len()),
            (axes, d.axes.len()),
            (outcomes, d.outcomes.len()),
        ] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// Coordinate of `point` along `axis`, in Hz for frequencies and seconds
/// for pulse times.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hls_dataset_coord(
    ds: *const HlsDataset,
    point: usize,
    axis: usize,
    out: *mut f64,
) -> HlsStatus {
    guard(|| {
        let d = dataset(ds)?;
        let v = d
            .points
            .get(point)
            .and_then(|p| p.coords.get(axis))
            .ok_or((
                HlsStatus::OutOfRange,
                format!("no coordinate ({point}, {axis})"),
            ))?;
        put(out, *v, "out")
    })
}

/// Observed frequency of `outcome` (index into the outcome list) at `point`.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hls_dataset_frequency(
    ds: *const HlsDataset,
    point: usize,
    outcome: usize,
    out: *mut f64,
) -> HlsStatus {
    guard(|| {
        let d = dataset(ds)?;
        let v = d
            .points
            .get(point)
            .and_then(|p| p.data.frequencies().get(outcome).copied())
            .ok_or((
                HlsStatus::OutOfRange,
                format!("no outcome ({point}, {outcome})"),
            ))?;
        put(out, v, "out")
    })
}

/// Fits the lineshape to the `target` outcome with the pulse time fixed at
/// `tau_s`, starting from narrowing factor `alpha_start`.
///
/// # Safety
/// `ds` must be a live handle, `target` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hls_fit_lineshape(
    ds: *const HlsDataset,
    target: *const c_char,
    tau_s: f64,
    alpha_start: f64,
    out: *mut HlsFit,
) -> HlsStatus {
    guard(|| {
        let d = dataset(ds)?;
        let target = text(target, "target")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(tau_s > 0.0 && alpha_start > 0.0) {
            return Err((
                HlsStatus::InvalidArgument,
                "tau and alpha_start must be > 0".into(),
            ));
        }
        let data = FitData::from_dataset(d, target).map_err(lib)?;
        let init = data.initial_guess(tau_s, alpha_start);
        let r = fit_lineshape(d, target, &init, FixedParams::default()).map_err(lib)?;
        out.write(HlsFit {
            a: r.params.a,
            omega_line_hz: to_hz(r.params.omega_line),
            tau_s: r.params.tau,
            alpha: r.params.alpha,
            delta0_hz: to_hz(r.params.delta0),
            alpha_err: r.std_errors.map_or(f64::NAN, |e| e.alpha),
            converged: r.converged,
        });
        Ok(())
    })
}

/// Evaluates the lineshape at detuning `delta_hz`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hls_lineshape(
    a: f64,
    omega_line_hz: f64,
    tau_s: f64,
    alpha: f64,
    delta0_hz: f64,
    delta_hz: f64,
    out: *mut f64,
) -> HlsStatus {
    guard(|| {
        let p =
            LineshapeParams::new(a, hz(omega_line_hz), tau_s, alpha, hz(delta0_hz)).map_err(lib)?;
        put(out, lineshape(&p, hz(delta_hz)), "out")
    })
}

/// Best-point uncertainty ratios of the correlated pair against two
/// independent ions and against one ion, for coupling `omega_hz`.
///
/// # Safety
/// Both output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn hls_fisher_ratios(
    omega_hz: f64,
    to_pair: *mut f64,
    to_single: *mut f64,
) -> HlsStatus {
    guard(|| {
        if to_pair.is_null() || to_single.is_null() {
            return Err(null("output"));
        }
        let r = fisher_comparison(hz(omega_hz)).map_err(lib)?;
        to_pair.write(r.ratio_correlated_to_pair);
        to_single.write(r.ratio_correlated_to_single);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(hls_last_error()) }
            .to_string_lossy()
            .into_owned()
    }

    #[test]
    fn status_codes_are_stable() {
        assert_eq!(HlsStatus::Ok as i32, 0);
        assert_eq!(HlsStatus::Panic as i32, 8);
    }

    #[test]
    fn null_arguments_are_reported() {
        let mut out = ptr::null_mut();
        assert_eq!(
            unsafe { hls_scan_run(ptr::null(), &mut out) },
            HlsStatus::NullPointer
        );
        assert!(last_error().contains("config"));
        let mut v = 0.0;
        assert_eq!(
            unsafe { hls_dataset_coord(ptr::null(), 0, 0, &mut v) },
            HlsStatus::NullPointer
        );
        assert_eq!(
            unsafe { hls_lineshape(1.0, 255.0, 1e-3, 2.0, 0.0, 0.0, ptr::null_mut()) },
            HlsStatus::NullPointer
        );
        unsafe { hls_dataset_free(ptr::null_mut()) };
    }

    #[test]
    fn invalid_parameters_are_reported() {
        let mut v = 0.0;
        assert_eq!(
            unsafe { hls_lineshape(2.0, 255.0, 1e-3, 2.0, 0.0, 0.0, &mut v) },
            HlsStatus::InvalidArgument
        );
        assert!(
            last_error().contains("invalid parameter"),
            "{}",
            last_error()
        );
    }

    #[test]
    fn lineshape_peaks_at_centre() {
        let mut v = 0.0;
        let tau = LineshapeParams::pi_pulse(hz(255.0), 2.0).tau;
        assert_eq!(
            unsafe { hls_lineshape(1.0, 255.0, tau, 2.0, 10.0, 10.0, &mut v) },
            HlsStatus::Ok
        );
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn version_is_set() {
        let v = unsafe { CStr::from_ptr(hls_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
