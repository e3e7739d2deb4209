//! C ABI over the `heightscope` library.
//!
//! Every fallible function returns `HS_OK` or an `HS_ERR_*` code; the
//! message of a failure is available from [`hs_last_error_message`] on the
//! same thread. Handles are opaque and must be released with their `_free`
//! function. Complex buffers are interleaved `{re, im}` pairs and matrices
//! are column-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use heightscope::dictionary::Dictionary;
use heightscope::geometry::{AntennaLayout, Preset, TargetSpec};
use heightscope::harness::{self, Method, ResultRow, SweepOptions};
use heightscope::solver::{bomp, GroupSparseProblem, StopRule};
use heightscope::steering::{multipath_steering, ReflectionCoefficient};
use heightscope::{Complex64, Error};

pub const HS_OK: i32 = 0;
/// A required pointer argument was null.
pub const HS_ERR_NULL: i32 = 1;
pub const HS_ERR_INVALID_ARGUMENT: i32 = 2;
/// Unreadable or invalid scenario config, or an unknown preset.
pub const HS_ERR_CONFIG: i32 = 3;
pub const HS_ERR_RUNTIME: i32 = 4;
/// The output buffer is too small; the required length was still written.
pub const HS_ERR_BUFFER_TOO_SMALL: i32 = 5;
pub const HS_ERR_PANIC: i32 = 6;

pub const HS_METHOD_GS: i32 = 0;
pub const HS_METHOD_SBYS: i32 = 1;
pub const HS_METHOD_MUSIC: i32 = 2;
pub const HS_METHOD_BURG: i32 = 3;

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HsComplex {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for HsComplex {
    fn from(c: Complex64) -> Self {
        Self { re: c.re, im: c.im }
    }
}

impl From<HsComplex> for Complex64 {
    fn from(c: HsComplex) -> Self {
        Complex64::new(c.re, c.im)
    }
}

/// One line of a sweep's result table. `wall_time_s` is NaN unless the
/// sweep was timed.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HsResultRow {
    pub snr_db: f64,
    /// One of the `HS_METHOD_*` codes.
    pub method: i32,
    pub pd: f64,
    pub far: f64,
    pub de: f64,
    pub trials: u64,
    pub wall_time_s: f64,
}

/// Antenna layout handle.
pub struct HsLayout {
    inner: AntennaLayout,
}

/// Completed sweep handle.
pub struct HsSweep {
    rows: Vec<ResultRow>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::UnknownPreset(_) => HS_ERR_CONFIG,
            Error::Domain(_) | Error::Dimension(_) | Error::InvalidLayout(_) => HS_ERR_INVALID_ARGUMENT,
            _ => HS_ERR_RUNTIME,
        };
        Failure(code, e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(HS_ERR_INVALID_ARGUMENT, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(HS_ERR_NULL, format!("`{what}` is null"))
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HS_OK
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HS_ERR_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(&format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length excluding NUL.
/// Pass a null `buf` to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hs_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a single-aperture layout from a preset name such as `bumper_6x8`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_layout_preset(name: *const c_char, out: *mut *mut HsLayout) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let preset: Preset = str_arg(name, "name")?.parse()?;
        *out = Box::into_raw(Box::new(HsLayout { inner: preset.layout() }));
        Ok(())
    })
}

/// Releases a layout. Null is ignored.
///
/// # Safety
/// `layout` must come from [`hs_layout_preset`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_layout_free(layout: *mut HsLayout) {
    if !layout.is_null() {
        drop(Box::from_raw(layout));
    }
}

/// # Safety
/// `layout` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_layout_aperture_count(layout: *const HsLayout, out: *mut usize) -> i32 {
    guard(|| {
        let layout = layout.as_ref().ok_or_else(|| null("layout"))?;
        *out_arg(out, "out")? = layout.inner.apertures().len();
        Ok(())
    })
}

/// Virtual channels (`Tx × Rx`) of one aperture.
///
/// # Safety
/// `layout` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_layout_virtual_channels(layout: *const HsLayout, aperture: usize, out: *mut usize) -> i32 {
    guard(|| {
        let layout = layout.as_ref().ok_or_else(|| null("layout"))?;
        let a = layout.inner.apertures().get(aperture).ok_or_else(|| invalid("aperture index out of range"))?;
        *out_arg(out, "out")? = a.virtual_channels();
        Ok(())
    })
}

/// Four-path multipath steering vector of one aperture for a target at
/// `azimuth` (rad), `height` (m) and slant `range` (m) from the layout's
/// reference point. Entries are Tx-major. `written` receives the channel
/// count even when `out_len` is too small.
///
/// # Safety
/// `layout` must be a live handle, `out` must hold `out_len` elements and
/// `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_multipath_steering(
    layout: *const HsLayout,
    aperture: usize,
    azimuth: f64,
    height: f64,
    range: f64,
    rho: HsComplex,
    wavelength: f64,
    out: *mut HsComplex,
    out_len: usize,
    written: *mut usize,
) -> i32 {
    guard(|| {
        let layout = layout.as_ref().ok_or_else(|| null("layout"))?;
        let written = out_arg(written, "written")?;
        let a = layout.inner.apertures().get(aperture).ok_or_else(|| invalid("aperture index out of range"))?;
        let rho = ReflectionCoefficient::new(rho.into())?;
        let target = TargetSpec::new(azimuth, height, range);
        let v = multipath_steering(&a.tx, &a.rx, &target, &layout.inner.reference_point(), rho, wavelength)?;
        *written = v.entries.len();
        if out_len < v.entries.len() {
            return Err(Failure(HS_ERR_BUFFER_TOO_SMALL, format!("need {} entries, got {out_len}", v.entries.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        for (i, c) in v.entries.iter().enumerate() {
            *out.add(i) = (*c).into();
        }
        Ok(())
    })
}

/// Block OMP on a dense `rows × cols` column-major dictionary with group
/// `labels` (1-based, covering `1..=G`). Stops after `max_groups` selections
/// (0: no limit) or once the residual falls to `residual_fraction` of `‖y‖`
/// (≤ 0: disabled). Writes `cols` coefficients and up to `selected_cap`
/// selected labels; `selected_len` receives the selection count.
///
/// # Safety
/// Buffers must hold the stated number of elements; `coefficients`,
/// `selected` and `selected_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_bomp(
    matrix: *const HsComplex,
    rows: usize,
    cols: usize,
    labels: *const u32,
    y: *const HsComplex,
    max_groups: usize,
    residual_fraction: f64,
    coefficients: *mut HsComplex,
    selected: *mut u32,
    selected_cap: usize,
    selected_len: *mut usize,
) -> i32 {
    guard(|| {
        let n = rows.checked_mul(cols).ok_or_else(|| invalid("dictionary size overflows"))?;
        let m = slice_arg(matrix, n, "matrix")?;
        let labels = slice_arg(labels, cols, "labels")?.to_vec();
        let y: Vec<Complex64> = slice_arg(y, rows, "y")?.iter().map(|&c| c.into()).collect();
        let selected_len = out_arg(selected_len, "selected_len")?;
        if coefficients.is_null() && cols > 0 {
            return Err(null("coefficients"));
        }
        let matrix = heightscope::DMatrix::from_iterator(rows, cols, m.iter().map(|&c| Complex64::from(c)));
        let dict = Dictionary::dense(matrix, labels)?;
        let stop = StopRule {
            max_groups: (max_groups > 0).then_some(max_groups),
            residual_fraction: (residual_fraction > 0.0).then_some(residual_fraction),
        };
        let rec = bomp(&GroupSparseProblem::new(&y, &dict, stop))?;
        for (i, c) in rec.coefficients.iter().enumerate() {
            *coefficients.add(i) = (*c).into();
        }
        *selected_len = rec.selected_groups.len();
        if selected_cap < rec.selected_groups.len() {
            return Err(Failure(HS_ERR_BUFFER_TOO_SMALL, format!("need {} labels, got {selected_cap}", rec.selected_groups.len())));
        }
        if selected.is_null() && !rec.selected_groups.is_empty() {
            return Err(null("selected"));
        }
        for (i, g) in rec.selected_groups.iter().enumerate() {
            *selected.add(i) = *g;
        }
        Ok(())
    })
}

/// Runs a sweep described by TOML text (the CLI's scenario format).
/// `jobs` = 0 uses every core; results do not depend on it.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_sweep_run(config_toml: *const c_char, jobs: usize, out: *mut *mut HsSweep) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = harness::parse_config_str(str_arg(config_toml, "config_toml")?)?;
        let report = harness::run_sweep(&cfg, &SweepOptions { jobs, ..Default::default() }, &mut |_| Ok(()))?;
        *out = Box::into_raw(Box::new(HsSweep { rows: report.rows }));
        Ok(())
    })
}

/// Releases a sweep. Null is ignored.
///
/// # Safety
/// `sweep` must come from [`hs_sweep_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_sweep_free(sweep: *mut HsSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

/// Number of result rows, or 0 for a null handle.
///
/// # Safety
/// `sweep` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_sweep_row_count(sweep: *const HsSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.rows.len())
}

fn method_code(m: Method) -> i32 {
    match m {
        Method::Gs => HS_METHOD_GS,
        Method::Sbys => HS_METHOD_SBYS,
        Method::Music => HS_METHOD_MUSIC,
        Method::Burg => HS_METHOD_BURG,
    }
}

/// # Safety
/// `sweep` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_sweep_row(sweep: *const HsSweep, index: usize, out: *mut HsResultRow) -> i32 {
    guard(|| {
        let sweep = sweep.as_ref().ok_or_else(|| null("sweep"))?;
        let r = sweep.rows.get(index).ok_or_else(|| invalid("row index out of range"))?;
        *out_arg(out, "out")? = HsResultRow {
            snr_db: r.snr_db,
            method: method_code(r.method),
            pd: r.pd,
            far: r.far,
            de: r.de,
            trials: r.trials as u64,
            wall_time_s: r.wall_time_s.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// The result table as CSV text, identical to the CLI's `results.csv`.
/// Release it with [`hs_string_free`].
///
/// # Safety
/// `sweep` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_sweep_csv(sweep: *const HsSweep, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let sweep = sweep.as_ref().ok_or_else(|| null("sweep"))?;
        let s = CString::new(harness::csv_string(&sweep.rows)).map_err(|_| Failure(HS_ERR_RUNTIME, "CSV contains NUL".into()))?;
        *out = s.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
