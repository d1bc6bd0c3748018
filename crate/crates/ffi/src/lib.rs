//! C ABI over the stereofuse library.
//!
//! Maps cross the boundary as opaque `SfFloatMap` handles. Every fallible
//! call returns an `SfStatus`; on failure `sf_last_error` describes the cause.
//! Strings returned by the library must be released with `sf_string_free`,
//! handles with `sf_map_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use stereofuse::io::{read_float_map, write_float_map, RunReport};
use stereofuse::metrics::depth_metrics;
use stereofuse::pipeline::{disparity_metrics, run_on_inputs, run_pipeline, Config, Inputs};
use stereofuse::scaling::solve_scale_shift;
use stereofuse::{Error, ErrorClass, FloatMap, Mask};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    InvalidArgument = 1,
    Config = 2,
    Io = 3,
    Compute = 4,
    Panic = 5,
}

/// Opaque 2-D float map with a validity mask.
pub struct SfFloatMap {
    inner: FloatMap,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(SfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.class() {
            ErrorClass::Config => SfStatus::Config,
            ErrorClass::Io => SfStatus::Io,
            ErrorClass::Compute => SfStatus::Compute,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(SfStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SfStatus::Panic
        }
    }
}

unsafe fn map_ref<'a>(p: *const SfFloatMap, what: &str) -> Result<&'a FloatMap, Failure> {
    p.as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn opt_map<'a>(p: *const SfFloatMap) -> Option<&'a FloatMap> {
    p.as_ref().map(|m| &m.inner)
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| invalid(&format!("{what} is not valid UTF-8")))
}

unsafe fn string_list(items: *const *const c_char, len: usize) -> Result<Vec<String>, Failure> {
    if len == 0 {
        return Ok(Vec::new());
    }
    if items.is_null() {
        return Err(invalid("override list is null"));
    }
    std::slice::from_raw_parts(items, len)
        .iter()
        .map(|p| path_arg(*p, "override"))
        .collect()
}

unsafe fn put_handle(out: *mut *mut SfFloatMap, map: FloatMap) {
    *out = Box::into_raw(Box::new(SfFloatMap { inner: map }));
}

unsafe fn put_report(out: *mut *mut c_char, report: &RunReport) -> Result<(), Failure> {
    let json = report.to_json_string()?;
    *out = CString::new(json)
        .map_err(|_| Failure(SfStatus::Compute, "report contains a NUL byte".into()))?
        .into_raw();
    Ok(())
}

fn occlusion_from(map: &FloatMap) -> Mask {
    Mask::from_fn(map.width(), map.height(), |x, y| map.is_valid(x, y) && map.get(x, y) > 0.5)
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn sf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a `width` x `height` map from row-major `data` (`width * height`
/// values). Non-finite values become invalid pixels. A null `data` yields zeros.
///
/// # Safety
/// `data` must be null or point to `width * height` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_map_new(width: u32, height: u32, data: *const f64, out: *mut *mut SfFloatMap) -> SfStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let (w, h) = (width as usize, height as usize);
        if w == 0 || h == 0 {
            return Err(invalid("map dimensions must be positive"));
        }
        let values = if data.is_null() {
            vec![0.0; w * h]
        } else {
            std::slice::from_raw_parts(data, w * h).to_vec()
        };
        put_handle(out, FloatMap::from_vec(w, h, values)?);
        Ok(())
    })
}

/// Reads a PFM file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_map_read_pfm(path: *const c_char, out: *mut *mut SfFloatMap) -> SfStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        put_handle(out, read_float_map(path)?);
        Ok(())
    })
}

/// Writes a map as PFM (invalid pixels as NaN).
///
/// # Safety
/// `map` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sf_map_write_pfm(map: *const SfFloatMap, path: *const c_char) -> SfStatus {
    guard(|| {
        let m = map_ref(map, "map")?;
        write_float_map(m, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `map` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sf_map_free(map: *mut SfFloatMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Width and height of a map.
///
/// # Safety
/// `map` must be a live handle; `width` and `height` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_map_dims(map: *const SfFloatMap, width: *mut u32, height: *mut u32) -> SfStatus {
    guard(|| {
        let m = map_ref(map, "map")?;
        if width.is_null() || height.is_null() {
            return Err(invalid("output pointer is null"));
        }
        *width = m.width() as u32;
        *height = m.height() as u32;
        Ok(())
    })
}

/// Copies the map row-major into `out`; invalid pixels are written as NaN.
///
/// # Safety
/// `map` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_map_copy_data(map: *const SfFloatMap, out: *mut f64, len: usize) -> SfStatus {
    guard(|| {
        let m = map_ref(map, "map")?;
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        if len < m.len() {
            return Err(invalid(&format!("buffer holds {len} values, map has {}", m.len())));
        }
        let dst = std::slice::from_raw_parts_mut(out, m.len());
        for (n, d) in dst.iter_mut().enumerate() {
            *d = if m.valid_mask()[n] { m.data()[n] } else { f64::NAN };
        }
        Ok(())
    })
}

/// Runs the pipeline from a config file plus `key=value` overrides. On success
/// `disparity` receives a new handle and `report_json` a new string.
///
/// # Safety
/// `config_path` must be NUL-terminated; `overrides` must hold `n_overrides`
/// NUL-terminated strings; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_run_config(
    config_path: *const c_char,
    overrides: *const *const c_char,
    n_overrides: usize,
    disparity: *mut *mut SfFloatMap,
    report_json: *mut *mut c_char,
) -> SfStatus {
    guard(|| {
        let path = path_arg(config_path, "config_path")?;
        let overrides = string_list(overrides, n_overrides)?;
        if disparity.is_null() || report_json.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let mut cfg = Config::from_file(path)?;
        cfg.apply_overrides(&overrides)?;
        let (d, report) = run_pipeline(&cfg)?;
        put_report(report_json, &report)?;
        put_handle(disparity, d);
        Ok(())
    })
}

/// Runs the pipeline on in-memory maps with default tunables plus `key=value`
/// overrides (path keys are not accepted here). `gt` and `occlusion` may be
/// null; occluded pixels are those with value > 0.5.
///
/// # Safety
/// Map arguments must be live handles or null where allowed; `overrides` must
/// hold `n_overrides` NUL-terminated strings; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_run(
    left: *const SfFloatMap,
    right: *const SfFloatMap,
    mono_left: *const SfFloatMap,
    mono_right: *const SfFloatMap,
    gt: *const SfFloatMap,
    occlusion: *const SfFloatMap,
    overrides: *const *const c_char,
    n_overrides: usize,
    disparity: *mut *mut SfFloatMap,
    report_json: *mut *mut c_char,
) -> SfStatus {
    guard(|| {
        let inputs = Inputs {
            left: map_ref(left, "left")?.clone(),
            right: map_ref(right, "right")?.clone(),
            mono_left: map_ref(mono_left, "mono_left")?.clone(),
            mono_right: map_ref(mono_right, "mono_right")?.clone(),
            gt: opt_map(gt).cloned(),
            occlusion: opt_map(occlusion).map(occlusion_from),
        };
        let overrides = string_list(overrides, n_overrides)?;
        if disparity.is_null() || report_json.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let mut cfg = Config::parse("", "")?;
        cfg.apply_overrides(&overrides)?;
        let out = run_on_inputs(&inputs, &cfg.params)?;
        put_report(report_json, &out.report)?;
        put_handle(disparity, out.disparity);
        Ok(())
    })
}

/// Scores `pred` against `gt`. Disparity mode reports bad-τ for each of the
/// `n_taus` thresholds and the average error over All/Noc/Occ; with `depth`
/// non-zero it reports AbsRel, RMSE and δ<1.05 instead.
///
/// # Safety
/// `pred`, `gt` must be live handles, `occlusion` a handle or null; `taus`
/// must hold `n_taus` doubles; `report_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_evaluate(
    pred: *const SfFloatMap,
    gt: *const SfFloatMap,
    occlusion: *const SfFloatMap,
    taus: *const f64,
    n_taus: usize,
    depth: i32,
    report_json: *mut *mut c_char,
) -> SfStatus {
    guard(|| {
        let pred = map_ref(pred, "pred")?;
        let gt = map_ref(gt, "gt")?;
        if report_json.is_null() {
            return Err(invalid("report_json is null"));
        }
        let taus = if n_taus == 0 {
            &[][..]
        } else if taus.is_null() {
            return Err(invalid("taus is null"));
        } else {
            std::slice::from_raw_parts(taus, n_taus)
        };
        let mut report = RunReport::new();
        if depth != 0 {
            let d = depth_metrics(pred, gt)?;
            report
                .metric("absrel_pct", d.absrel_pct)
                .metric("rmse", d.rmse)
                .metric("delta105_pct", d.delta105_pct);
        } else {
            let occ = opt_map(occlusion).map(occlusion_from);
            report.metrics = disparity_metrics(pred, gt, occ.as_ref(), taus)?;
        }
        put_report(report_json, &report)
    })
}

/// Joint scale/shift aligning the mono maps to the disparities under the
/// given confidences.
///
/// # Safety
/// All map arguments must be live handles; `scale` and `shift` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_solve_scale_shift(
    mono_left: *const SfFloatMap,
    mono_right: *const SfFloatMap,
    disp_left: *const SfFloatMap,
    disp_right: *const SfFloatMap,
    conf_left: *const SfFloatMap,
    conf_right: *const SfFloatMap,
    scale: *mut f64,
    shift: *mut f64,
) -> SfStatus {
    guard(|| {
        if scale.is_null() || shift.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let ss = solve_scale_shift(
            map_ref(mono_left, "mono_left")?,
            map_ref(mono_right, "mono_right")?,
            map_ref(disp_left, "disp_left")?,
            map_ref(disp_right, "disp_right")?,
            map_ref(conf_left, "conf_left")?,
            map_ref(conf_right, "conf_right")?,
        )?;
        *scale = ss.scale;
        *shift = ss.shift;
        Ok(())
    })
}

/// Releases a string returned by the library; null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
