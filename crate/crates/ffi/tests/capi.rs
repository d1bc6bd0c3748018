use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use stereofuse::pipeline::{build_fixture, gen_fixture, FixtureKind, FixtureParams};
use stereofuse::scenes::Rect;
use stereofuse_ffi::*;

fn last_error() -> String {
    let p = sf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_map(w: u32, h: u32, data: &[f64]) -> *mut SfFloatMap {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sf_map_new(w, h, data.as_ptr(), &mut out) }, SfStatus::Ok);
    out
}

fn handle(m: &stereofuse::FloatMap) -> *mut SfFloatMap {
    let data: Vec<f64> = (0..m.len())
        .map(|n| if m.valid_mask()[n] { m.data()[n] } else { f64::NAN })
        .collect();
    new_map(m.width() as u32, m.height() as u32, &data)
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { sf_string_free(p) };
    s
}

fn small_params() -> FixtureParams {
    FixtureParams {
        height: 32,
        width: 64,
        rect: Rect::new(16, 8, 24, 16),
        ..FixtureParams::default()
    }
}

#[test]
fn map_roundtrip_through_handles() {
    let data = [1.0, 2.0, f64::NAN, 4.0, 5.0, 6.0];
    let m = new_map(3, 2, &data);
    let (mut w, mut h) = (0, 0);
    assert_eq!(unsafe { sf_map_dims(m, &mut w, &mut h) }, SfStatus::Ok);
    assert_eq!((w, h), (3, 2));
    let mut back = [0.0; 6];
    assert_eq!(unsafe { sf_map_copy_data(m, back.as_mut_ptr(), back.len()) }, SfStatus::Ok);
    for (a, b) in data.iter().zip(&back) {
        assert!(a == b || (a.is_nan() && b.is_nan()));
    }
    let mut short = [0.0; 2];
    assert_eq!(
        unsafe { sf_map_copy_data(m, short.as_mut_ptr(), short.len()) },
        SfStatus::InvalidArgument
    );

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.pfm").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sf_map_write_pfm(m, path.as_ptr()) }, SfStatus::Ok);
    let mut read = ptr::null_mut();
    assert_eq!(unsafe { sf_map_read_pfm(path.as_ptr(), &mut read) }, SfStatus::Ok);
    let mut again = [0.0; 6];
    unsafe { sf_map_copy_data(read, again.as_mut_ptr(), 6) };
    for (a, b) in data.iter().zip(&again) {
        assert!(a == b || (a.is_nan() && b.is_nan()));
    }
    unsafe {
        sf_map_free(m);
        sf_map_free(read);
        sf_map_free(ptr::null_mut());
    }
}

#[test]
fn null_and_missing_inputs_report_status() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sf_map_new(0, 2, ptr::null(), &mut out) }, SfStatus::InvalidArgument);
    assert!(last_error().contains("positive"));
    assert_eq!(unsafe { sf_map_read_pfm(ptr::null(), &mut out) }, SfStatus::InvalidArgument);
    let missing = CString::new("/nonexistent/x.pfm").unwrap();
    assert_eq!(unsafe { sf_map_read_pfm(missing.as_ptr(), &mut out) }, SfStatus::Io);
    assert!(last_error().contains("x.pfm"));
    let (mut w, mut h) = (0, 0);
    assert_eq!(unsafe { sf_map_dims(ptr::null(), &mut w, &mut h) }, SfStatus::InvalidArgument);
}

#[test]
fn version_is_reported() {
    let v = unsafe { CStr::from_ptr(sf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn evaluate_counts_bad_pixels() {
    let pred = new_map(3, 1, &[1.0, 2.0, 3.0]);
    let gt = new_map(3, 1, &[1.0, 5.0, 3.0]);
    let taus = [2.0];
    let mut json = ptr::null_mut();
    let st = unsafe { sf_evaluate(pred, gt, ptr::null(), taus.as_ptr(), 1, 0, &mut json) };
    assert_eq!(st, SfStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    let bad = v["metrics"]["bad2_all"].as_f64().unwrap();
    assert!((bad - 100.0 / 3.0).abs() < 1e-6);
    assert_eq!(v["metrics"]["avg_px"].as_f64().unwrap(), 1.0);

    let st = unsafe { sf_evaluate(pred, gt, ptr::null(), ptr::null(), 0, 1, &mut json) };
    assert_eq!(st, SfStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    assert!(v["metrics"]["absrel_pct"].as_f64().unwrap() > 0.0);

    let wrong = new_map(2, 1, &[1.0, 2.0]);
    let st = unsafe { sf_evaluate(wrong, gt, ptr::null(), taus.as_ptr(), 1, 0, &mut json) };
    assert_eq!(st, SfStatus::Compute);
    unsafe {
        sf_map_free(pred);
        sf_map_free(gt);
        sf_map_free(wrong);
    }
}

#[test]
fn scale_shift_recovers_affine_relation() {
    let m: Vec<f64> = (0..16).map(|n| (n as f64 * 0.37).sin()).collect();
    let d: Vec<f64> = m.iter().map(|v| 2.0 * v + 3.0).collect();
    let ones = vec![1.0; 16];
    let (ml, dl, cl) = (new_map(4, 4, &m), new_map(4, 4, &d), new_map(4, 4, &ones));
    let (mut s, mut t) = (0.0, 0.0);
    let st = unsafe { sf_solve_scale_shift(ml, ml, dl, dl, cl, cl, &mut s, &mut t) };
    assert_eq!(st, SfStatus::Ok);
    assert!((s - 2.0).abs() < 1e-9 && (t - 3.0).abs() < 1e-9);

    let flat = new_map(4, 4, &ones);
    let st = unsafe { sf_solve_scale_shift(flat, flat, dl, dl, cl, cl, &mut s, &mut t) };
    assert_eq!(st, SfStatus::Compute);
    unsafe {
        sf_map_free(ml);
        sf_map_free(dl);
        sf_map_free(cl);
        sf_map_free(flat);
    }
}

#[test]
fn in_memory_run_matches_library() {
    let (inputs, _) = build_fixture(FixtureKind::RandomDot, &small_params()).unwrap();
    let maps = [
        handle(&inputs.left),
        handle(&inputs.right),
        handle(&inputs.mono_left),
        handle(&inputs.mono_right),
        handle(inputs.gt.as_ref().unwrap()),
    ];
    let overrides = [CString::new("w_mono=0").unwrap()];
    let ptrs: Vec<_> = overrides.iter().map(|s| s.as_ptr()).collect();
    let (mut disp, mut json) = (ptr::null_mut(), ptr::null_mut());
    let st = unsafe {
        sf_run(
            maps[0],
            maps[1],
            maps[2],
            maps[3],
            maps[4],
            ptr::null(),
            ptrs.as_ptr(),
            ptrs.len(),
            &mut disp,
            &mut json,
        )
    };
    assert_eq!(st, SfStatus::Ok, "{}", last_error());
    let report: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    assert_eq!(report["config"]["w_mono"], "0");

    let params = stereofuse::pipeline::Params {
        w_mono: 0.0,
        ..Default::default()
    };
    let expected = stereofuse::pipeline::run_on_inputs(&inputs, &params).unwrap().disparity;
    let mut got = vec![0.0; expected.len()];
    unsafe { sf_map_copy_data(disp, got.as_mut_ptr(), got.len()) };
    assert_eq!(got, expected.data());

    let bad = [CString::new("colour=red").unwrap()];
    let bad_ptrs: Vec<_> = bad.iter().map(|s| s.as_ptr()).collect();
    let mut d2 = ptr::null_mut();
    let st = unsafe {
        sf_run(
            maps[0],
            maps[1],
            maps[2],
            maps[3],
            ptr::null(),
            ptr::null(),
            bad_ptrs.as_ptr(),
            1,
            &mut d2,
            &mut json,
        )
    };
    assert_eq!(st, SfStatus::Config);
    assert!(last_error().contains("colour"));
    unsafe {
        sf_map_free(disp);
        for m in maps {
            sf_map_free(m);
        }
    }
}

#[test]
fn config_run_and_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    gen_fixture(FixtureKind::RandomDot, &small_params(), dir.path()).unwrap();
    let cfg = CString::new(dir.path().join("run.cfg").to_str().unwrap()).unwrap();
    let (mut disp, mut json) = (ptr::null_mut(), ptr::null_mut());
    let st = unsafe { sf_run_config(cfg.as_ptr(), ptr::null(), 0, &mut disp, &mut json) };
    assert_eq!(st, SfStatus::Ok, "{}", last_error());
    let report: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    assert!(report["metrics"]["bad1_noc"].is_number());
    assert!(report["timings"]["stereo_volume"].is_number());
    unsafe { sf_map_free(disp) };

    let missing = CString::new(dir.path().join("nope.cfg").to_str().unwrap()).unwrap();
    let st = unsafe { sf_run_config(missing.as_ptr(), ptr::null(), 0, &mut disp, &mut json) };
    assert_eq!(st, SfStatus::Io);

    std::fs::write(dir.path().join("short.cfg"), "left = left.pfm\n").unwrap();
    let short = CString::new(dir.path().join("short.cfg").to_str().unwrap()).unwrap();
    let st = unsafe { sf_run_config(short.as_ptr(), ptr::null(), 0, &mut disp, &mut json) };
    assert_eq!(st, SfStatus::Config);
    assert!(last_error().contains("right"));
}

#[test]
fn header_is_generated_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/stereofuse.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in [
        "sf_map_new",
        "sf_map_free",
        "sf_run_config",
        "sf_run",
        "sf_evaluate",
        "sf_solve_scale_shift",
        "sf_string_free",
        "sf_last_error",
        "typedef struct SfFloatMap SfFloatMap",
    ] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"stereofuse.h\"\nint main(void) { SfFloatMap *m = 0; return sf_map_new(1, 1, 0, &m) == SF_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
    {
        Ok(status) => assert!(status.success(), "header does not compile"),
        Err(_) => eprintln!("no C compiler found; skipped syntax check"),
    }
}
