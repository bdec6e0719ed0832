use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use delag_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; delag_last_error_length() + 1];
    let n = unsafe { delag_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n >= 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("delag.h")
}

#[test]
fn crosstrack_and_errors() {
    let mut r = 0.0;
    assert_eq!(unsafe { delag_crosstrack_ratio(0.0, &mut r) }, DelagStatus::Ok);
    assert!((r - 1.07).abs() < 0.01);
    assert_eq!(delag_last_error_length(), 0);
    let mut o = 0.0;
    assert_eq!(unsafe { delag_overlap_fraction(45.0, &mut o) }, DelagStatus::Ok);
    assert!((o - 0.5).abs() < 0.01);

    assert_eq!(unsafe { delag_crosstrack_ratio(85.0, &mut r) }, DelagStatus::Domain);
    assert!(last_error().contains("latitude"));
    assert_eq!(unsafe { delag_crosstrack_ratio(0.0, ptr::null_mut()) }, DelagStatus::NullPointer);
    assert!(last_error().contains("null"));

    // Truncation keeps the NUL terminator.
    let mut small = [1 as c_char; 5];
    assert_eq!(unsafe { delag_last_error_message(small.as_mut_ptr(), small.len()) }, 4);
    assert_eq!(small[4], 0);
    assert_eq!(unsafe { delag_last_error_message(ptr::null_mut(), 10) }, -1);

    let v = unsafe { CStr::from_ptr(delag_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn metrics_through_the_interface() {
    let pred = [1.0, 2.0, 3.0, 4.0];
    let truth = [1.0, 2.0, 3.0, 6.0];
    let lo = [0.0, 1.0, 2.0, 3.0];
    let hi = [2.0, 3.0, 4.0, 5.0];
    let mut m = DelagMetrics::default();
    let s = unsafe { delag_metrics(pred.as_ptr(), truth.as_ptr(), lo.as_ptr(), hi.as_ptr(), 4, &mut m) };
    assert_eq!(s, DelagStatus::Ok);
    assert_eq!(m.n, 4);
    assert!((m.mae - 0.5).abs() < 1e-12);
    assert!((m.rmse - 1.0).abs() < 1e-12);
    assert!((m.bias + 0.5).abs() < 1e-12);
    assert!((m.cov95 - 0.75).abs() < 1e-12);
    let s = unsafe { delag_metrics(pred.as_ptr(), truth.as_ptr(), ptr::null(), ptr::null(), 4, &mut m) };
    assert_eq!(s, DelagStatus::Ok);
    assert!(m.cov95.is_nan());
    let s = unsafe { delag_metrics(pred.as_ptr(), truth.as_ptr(), lo.as_ptr(), ptr::null(), 4, &mut m) };
    assert_eq!(s, DelagStatus::InvalidArgument);
}

#[test]
fn dataset_model_and_day_handles() {
    unsafe {
        let mut ds: *mut DelagDataset = ptr::null_mut();
        assert_eq!(delag_dataset_generate(8, 8, 4, &mut ds), DelagStatus::Ok);
        let (mut n, mut h, mut w) = (0, 0, 0);
        assert_eq!(delag_dataset_shape(ds, &mut n, &mut h, &mut w), DelagStatus::Ok);
        assert_eq!((h, w), (8, 8));
        assert!(n > 0);
        let mut days = vec![0u16; n];
        assert_eq!(delag_dataset_days(ds, days.as_mut_ptr(), n), DelagStatus::Ok);
        assert!(days.windows(2).all(|p| p[0] < p[1]));
        assert_eq!(delag_dataset_days(ds, days.as_mut_ptr(), n + 1), DelagStatus::InvalidArgument);

        let cfg = CString::new(r#"{"fit": {"epochs": 300, "snapshot_window": 100, "snapshot_stride": 2}}"#).unwrap();
        let mut model: *mut DelagModel = ptr::null_mut();
        let s = delag_model_train(ds, cfg.as_ptr(), 4, &mut model);
        assert_eq!(s, DelagStatus::Ok, "{}", last_error());

        let bad = CString::new(r#"{"fit": {"epochs": "many"}}"#).unwrap();
        let mut other: *mut DelagModel = ptr::null_mut();
        assert_eq!(delag_model_train(ds, bad.as_ptr(), 4, &mut other), DelagStatus::Config);
        assert!(other.is_null());

        let mut day: *mut DelagDay = ptr::null_mut();
        assert_eq!(delag_reconstruct_day(model, ds, days[0], &mut day), DelagStatus::Ok);
        let len = delag_day_len(day);
        assert_eq!(len, 64);
        let mut mean = vec![0.0; len];
        let mut lower = vec![0.0; len];
        let mut upper = vec![0.0; len];
        let mut seamless = vec![0.0; len];
        let mut observed = vec![0.0; len];
        for (layer, buf) in [
            (DelagLayer::Mean, &mut mean),
            (DelagLayer::Lower, &mut lower),
            (DelagLayer::Upper, &mut upper),
            (DelagLayer::Seamless, &mut seamless),
            (DelagLayer::Observed, &mut observed),
        ] {
            assert_eq!(delag_day_layer(day, layer, buf.as_mut_ptr(), len), DelagStatus::Ok);
        }
        for p in 0..len {
            assert!(lower[p] <= mean[p] && mean[p] <= upper[p]);
            assert!(seamless[p].is_finite());
            if !observed[p].is_nan() {
                assert_eq!(seamless[p], observed[p]);
            }
        }
        assert_eq!(delag_day_layer(day, DelagLayer::Mean, mean.as_mut_ptr(), 3), DelagStatus::InvalidArgument);

        let mut none: *mut DelagDay = ptr::null_mut();
        assert_eq!(delag_reconstruct_day(model, ds, 0, &mut none), DelagStatus::InvalidArgument);
        assert_eq!(delag_reconstruct_day(ptr::null(), ds, 5, &mut none), DelagStatus::NullPointer);
        assert_eq!(delag_day_len(ptr::null()), 0);

        delag_day_free(day);
        delag_model_free(model);
        delag_dataset_free(ds);
        delag_dataset_free(ptr::null_mut());
    }
}

#[test]
fn missing_file_reports_io() {
    let p = CString::new("/nonexistent/stack.lstc").unwrap();
    let mut ds: *mut DelagDataset = ptr::null_mut();
    let s = unsafe { delag_dataset_load(p.as_ptr(), p.as_ptr(), p.as_ptr(), &mut ds) };
    assert_eq!(s, DelagStatus::Io);
    assert!(ds.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn header_declares_the_interface() {
    let text = std::fs::read_to_string(header()).expect("generated header");
    for name in [
        "delag_version",
        "delag_last_error_message",
        "delag_dataset_load",
        "delag_model_train",
        "delag_reconstruct_day",
        "delag_day_layer",
        "delag_metrics",
        "typedef struct DelagDataset DelagDataset",
        "DELAG_STATUS_OK = 0",
        "DELAG_LAYER_SEAMLESS",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"delag.h\"\nint main(void) {\n  double r = 0.0;\n  DelagStatus s = delag_crosstrack_ratio(0.0, &r);\n  DelagDataset *ds = NULL;\n  (void)ds;\n  return s == DELAG_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let include = header().parent().unwrap().to_path_buf();
    for (compiler, extra) in [("cc", vec!["-std=c99"]), ("c++", vec!["-x", "c++"])] {
        let status = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror"])
            .args(&extra)
            .arg("-I")
            .arg(&include)
            .arg(&src)
            .status();
        match status {
            Ok(s) => assert!(s.success(), "{compiler} rejected the header"),
            Err(e) => eprintln!("skipping {compiler}: {e}"),
        }
    }
}
