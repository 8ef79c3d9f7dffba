use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use sspe_vit_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sspe_last_error()) }.to_string_lossy().into_owned()
}

fn model(seed: u64) -> *mut SspeModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { sspe_model_init(seed, &mut m) }, SspeStatus::Ok);
    assert!(!m.is_null());
    m
}

fn image() -> Vec<f64> {
    (0..48 * 48).map(|i| (i % 13) as f64 / 13.0).collect()
}

fn encode(m: *const SspeModel, pixels: &[f64], plan: Option<&[usize]>) -> (SspeStatus, [f64; 2]) {
    let mut logits = [0.0; 2];
    let (p, n) = plan.map_or((ptr::null(), 0), |p| (p.as_ptr(), p.len()));
    let s = unsafe { sspe_model_encode(m, pixels.as_ptr(), pixels.len(), p, n, logits.as_mut_ptr()) };
    (s, logits)
}

#[test]
fn encode_and_round_trip() {
    let m = model(1);
    let (s, logits) = encode(m, &image(), None);
    assert_eq!(s, SspeStatus::Ok);
    assert!(logits.iter().all(|v| v.is_finite()));

    let identity: Vec<usize> = (1..=9).collect();
    assert_eq!(encode(m, &image(), Some(&identity)).1, logits);

    let mut size = 0;
    let s = unsafe { sspe_model_to_bytes(m, ptr::null_mut(), 0, &mut size) };
    assert_eq!(s, SspeStatus::BufferTooSmall);
    let mut bytes = vec![0u8; size];
    assert_eq!(unsafe { sspe_model_to_bytes(m, bytes.as_mut_ptr(), size, &mut size) }, SspeStatus::Ok);

    let mut back = ptr::null_mut();
    assert_eq!(unsafe { sspe_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut back) }, SspeStatus::Ok);
    assert_eq!(encode(back, &image(), None).1, logits);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sspe_model_save(m, path.as_ptr()) }, SspeStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { sspe_model_load(path.as_ptr(), &mut loaded) }, SspeStatus::Ok);
    assert_eq!(encode(loaded, &image(), None).1, logits);

    unsafe {
        sspe_model_free(m);
        sspe_model_free(back);
        sspe_model_free(loaded);
        sspe_model_free(ptr::null_mut());
    }
}

#[test]
fn error_codes() {
    let m = model(2);
    assert_eq!(encode(m, &image()[..10], None).0, SspeStatus::Shape);
    assert!(last_error().contains("2304"));
    assert_eq!(encode(m, &image(), Some(&[1, 1, 3, 4, 5, 6, 7, 8, 9])).0, SspeStatus::InvalidArgument);
    assert_eq!(encode(ptr::null(), &image(), None).0, SspeStatus::NullPointer);

    let garbage = [1u8, 2, 3];
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { sspe_model_from_bytes(garbage.as_ptr(), garbage.len(), &mut out) },
        SspeStatus::Checkpoint
    );
    assert!(out.is_null());
    let missing = CString::new("/nonexistent/model.ckpt").unwrap();
    assert_eq!(unsafe { sspe_model_load(missing.as_ptr(), &mut out) }, SspeStatus::Io);

    assert_eq!(encode(m, &image(), None).0, SspeStatus::Ok);
    assert_eq!(last_error(), "");
    let name = unsafe { CStr::from_ptr(sspe_status_name(SspeStatus::BufferTooSmall)) };
    assert_eq!(name.to_str().unwrap(), "buffer too small");
    unsafe { sspe_model_free(m) };
}

#[test]
fn plans_and_labels() {
    let keys = [4usize, 6];
    let mut plan = [0usize; 9];
    let s = unsafe { sspe_make_plan(9, keys.as_ptr(), 2, 5, plan.as_mut_ptr(), 9) };
    assert_eq!(s, SspeStatus::Ok);
    assert_eq!((plan[3], plan[5]), (4, 6));
    let mut sorted = plan;
    sorted.sort_unstable();
    assert_eq!(sorted, [1, 2, 3, 4, 5, 6, 7, 8, 9]);
    let mut again = [0usize; 9];
    unsafe { sspe_make_plan(9, keys.as_ptr(), 2, 5, again.as_mut_ptr(), 9) };
    assert_eq!(plan, again);
    let short = unsafe { sspe_make_plan(9, keys.as_ptr(), 2, 5, again.as_mut_ptr(), 4) };
    assert_eq!(short, SspeStatus::BufferTooSmall);
    let far = [12usize];
    assert_eq!(
        unsafe { sspe_make_plan(9, far.as_ptr(), 1, 5, again.as_mut_ptr(), 9) },
        SspeStatus::InvalidArgument
    );

    let mut label = 9u8;
    for (grades, want) in [(&[0u8, 0][..], 0u8), (&[0, 1], 1), (&[1, 1], 1)] {
        assert_eq!(unsafe { sspe_exchange_label(grades.as_ptr(), grades.len(), &mut label) }, SspeStatus::Ok);
        assert_eq!(label, want);
    }
    let bad = [0u8, 2];
    assert_eq!(unsafe { sspe_exchange_label(bad.as_ptr(), 2, &mut label) }, SspeStatus::InvalidArgument);
}

#[test]
fn losses() {
    let mut out = [0.0; 2];
    assert_eq!(unsafe { sspe_smooth_labels([1.0, 0.0].as_ptr(), 0.2, out.as_mut_ptr()) }, SspeStatus::Ok);
    assert!((out[0] - 0.9).abs() < 1e-12 && (out[1] - 0.1).abs() < 1e-12);
    assert_eq!(
        unsafe { sspe_smooth_labels([1.0, 0.0].as_ptr(), 1.5, out.as_mut_ptr()) },
        SspeStatus::InvalidArgument
    );

    let mut v = 0.0;
    unsafe { sspe_ce_loss([0.9, 0.1].as_ptr(), [0.0, 1.0].as_ptr(), &mut v) };
    assert!((v - std::f64::consts::LN_10).abs() < 1e-9);
    unsafe { sspe_lsce_loss([0.9, 0.1].as_ptr(), [1.0, 0.0].as_ptr(), 0.2, &mut v) };
    assert!((v - 0.3251).abs() < 1e-4);

    let probs = [0.6, 0.4, 0.8, 0.2];
    let s = unsafe { sspe_hybrid_loss(probs.as_ptr(), [1u8, 0].as_ptr(), [1u8, 0].as_ptr(), 2, 0.2, 0.3, 0.7, false, &mut v) };
    assert_eq!(s, SspeStatus::Ok);
    assert!((v - 0.4189).abs() < 1e-3);
    let s = unsafe { sspe_hybrid_loss(probs.as_ptr(), [1u8, 0].as_ptr(), [1u8, 0].as_ptr(), 2, 0.2, 0.5, 0.7, false, &mut v) };
    assert_eq!(s, SspeStatus::InvalidArgument);
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/sspe_vit.h")).unwrap();
    for name in [
        "typedef struct SspeModel SspeModel",
        "SSPE_STATUS_OK = 0",
        "sspe_model_init",
        "sspe_model_load",
        "sspe_model_free",
        "sspe_model_encode",
        "sspe_make_plan",
        "sspe_hybrid_loss",
        "sspe_last_error",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

/// Compiles and runs the C smoke program against the static library.
#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let lib = profile_dir.join("libsspe_vit_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).trim_end().ends_with("0.4189"));
}
