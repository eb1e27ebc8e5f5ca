use std::ffi::{c_char, CStr, CString};
use std::ptr;

use ubi_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ubi_last_error()) }.to_string_lossy().into_owned()
}

fn cstrings(names: &[&str]) -> (Vec<CString>, Vec<*const c_char>) {
    let owned: Vec<CString> = names.iter().map(|n| CString::new(*n).unwrap()).collect();
    let ptrs = owned.iter().map(|c| c.as_ptr()).collect();
    (owned, ptrs)
}

#[test]
fn scalar_functions() {
    let mut d = 0.0;
    // One degree of longitude on the equator.
    assert_eq!(unsafe { ubi_haversine_km(0.0, 0.0, 0.0, 1.0, &mut d) }, UbiStatus::Ok);
    assert!((d - 6371.0088 * std::f64::consts::PI / 180.0).abs() < 1e-9);
    assert_eq!(unsafe { ubi_haversine_km(f64::NAN, 0.0, 0.0, 1.0, &mut d) }, UbiStatus::InvalidArgument);
    assert_eq!(unsafe { ubi_haversine_km(0.0, 0.0, 0.0, 1.0, ptr::null_mut()) }, UbiStatus::NullPointer);
    assert!(last_error().contains("null"));

    let mut band = 99;
    assert_eq!(unsafe { ubi_classify_accel(UbiAxis::Longitudinal, 0.35, &mut band) }, UbiStatus::Ok);
    assert_eq!(band, 0);
    unsafe { ubi_classify_accel(UbiAxis::Longitudinal, -0.45, &mut band) };
    assert_eq!(band, 5);
    unsafe { ubi_classify_accel(UbiAxis::Lateral, -0.65, &mut band) };
    assert_eq!(band, 8);
    unsafe { ubi_classify_accel(UbiAxis::Lateral, 0.1, &mut band) };
    assert_eq!(band, -1);

    let mut sev = -1;
    for (loss, culprit, want) in [(0.0, true, 0), (4.0, true, 1), (5.0, true, 2), (20.0, true, 2), (21.0, true, 3), (50.0, false, 0)] {
        assert_eq!(unsafe { ubi_classify_severity(loss, 100.0, culprit, &mut sev) }, UbiStatus::Ok);
        assert_eq!(sev, want, "loss {loss}");
    }
    assert_eq!(unsafe { ubi_classify_severity(1.0, 0.0, true, &mut sev) }, UbiStatus::InvalidArgument);

    let (scores, labels) = ([0.1, 0.4, 0.35, 0.8], [0u8, 0, 1, 1]);
    let mut auc = 0.0;
    assert_eq!(unsafe { ubi_roc_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut auc) }, UbiStatus::Ok);
    assert_eq!(auc, 0.75);
    assert_eq!(unsafe { ubi_roc_auc(scores.as_ptr(), [0u8; 4].as_ptr(), 4, &mut auc) }, UbiStatus::InvalidArgument);

    let mut prem = 0.0;
    assert_eq!(unsafe { ubi_premium(0.1, 1000.0, 50.0, 25.0, &mut prem) }, UbiStatus::Ok);
    assert_eq!(prem, 175.0);
    assert_eq!(unsafe { ubi_premium(1.5, 1000.0, 50.0, 25.0, &mut prem) }, UbiStatus::InvalidArgument);
}

#[test]
fn reference_model_round_trip() {
    let target = CString::new("any").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ubi_model_paper_reference(target.as_ptr(), &mut m) }, UbiStatus::Ok);
    assert_eq!(unsafe { ubi_model_n_columns(m) }, 7);

    let (_own, names) = cstrings(&["a1", "a2", "max_mj_sp", "avg_sp", "max_n_sp"]);
    let zeros = [0.0; 5];
    let mut p = 0.0;
    assert_eq!(unsafe { ubi_model_predict(m, names.as_ptr(), zeros.as_ptr(), 5, &mut p) }, UbiStatus::Ok);
    assert!((p - 1.0 / (1.0 + 2.88f64.exp())).abs() < 1e-15);
    assert_eq!(unsafe { ubi_model_predict(m, names.as_ptr(), zeros.as_ptr(), 4, &mut p) }, UbiStatus::MissingFeature);
    assert!(last_error().contains("max_n_sp"));

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ubi_model_to_json(m, &mut json) }, UbiStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { ubi_model_from_json(json, &mut back) }, UbiStatus::Ok);
    let mut name = ptr::null_mut();
    assert_eq!(unsafe { ubi_model_column_name(back, 2, &mut name) }, UbiStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(name) }.to_str().unwrap(), "a1");
    let (mut c, mut se) = (0.0, 0.0);
    unsafe { ubi_model_coefficient(back, 2, &mut c, &mut se) };
    assert_eq!((c, se), (0.010, 0.003));
    assert_eq!(unsafe { ubi_model_coefficient(back, 7, &mut c, ptr::null_mut()) }, UbiStatus::InvalidArgument);
    let (mut ll, mut aic) = (0.0, 0.0);
    unsafe { ubi_model_fit_stats(back, &mut ll, &mut aic) };
    assert_eq!((ll, aic), (-2080.0, 4174.6));

    let bad = CString::new("{").unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { ubi_model_from_json(bad.as_ptr(), &mut none) }, UbiStatus::Parse);
    assert!(none.is_null());
    let unknown = CString::new("severe").unwrap();
    assert_eq!(unsafe { ubi_model_paper_reference(unknown.as_ptr(), &mut none) }, UbiStatus::InvalidArgument);

    unsafe {
        ubi_string_free(name);
        ubi_string_free(json);
        ubi_model_free(back);
        ubi_model_free(m);
        ubi_model_free(ptr::null_mut());
        ubi_string_free(ptr::null_mut());
    }
    assert_eq!(unsafe { ubi_model_n_columns(ptr::null()) }, 0);
}

#[test]
fn fit_through_the_abi() {
    // y = 1 exactly when x > 0.5 would separate; overlap keeps the MLE finite.
    let x: Vec<f64> = (0..200).map(|i| (i % 20) as f64 / 20.0).collect();
    let y: Vec<u8> = (0..200).map(|i| ((i * 7919) % 10 < 3 + (i % 20) / 4) as u8).collect();
    let (_own, names) = cstrings(&["x"]);
    let target = CString::new("any").unwrap();
    let mut m = ptr::null_mut();
    let status = unsafe { ubi_model_fit(names.as_ptr(), 1, x.as_ptr(), y.as_ptr(), 200, target.as_ptr(), -1.0, &mut m) };
    assert_eq!(status, UbiStatus::Ok, "{}", last_error());
    let mut ll = 0.0;
    let mut aic = 0.0;
    unsafe { ubi_model_fit_stats(m, &mut ll, &mut aic) };
    assert!((aic - (4.0 - 2.0 * ll)).abs() < 1e-9);
    unsafe { ubi_model_free(m) };

    let ones = [1u8; 200];
    let status = unsafe { ubi_model_fit(names.as_ptr(), 1, x.as_ptr(), ones.as_ptr(), 200, target.as_ptr(), 0.05, &mut m) };
    assert_eq!(status, UbiStatus::Fit);
    assert!(last_error().starts_with("single-class target"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ubi.h")).unwrap();
    for f in [
        "ubi_last_error", "ubi_version", "ubi_string_free", "ubi_haversine_km", "ubi_classify_accel",
        "ubi_classify_severity", "ubi_roc_auc", "ubi_premium", "ubi_model_paper_reference", "ubi_model_fit",
        "ubi_model_from_json", "ubi_model_to_json", "ubi_model_predict", "ubi_model_n_columns",
        "ubi_model_column_name", "ubi_model_coefficient", "ubi_model_fit_stats", "ubi_model_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct UbiModel UbiModel;"));
    let v = unsafe { CStr::from_ptr(ubi_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
