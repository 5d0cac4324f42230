use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use iptree_ffi::*;

unsafe fn build(model: IptModel, steps: usize, seed: u64) -> *mut IptTree {
    let mut t = ptr::null_mut();
    assert_eq!(ipt_tree_build(model as u32, 0.3, 1.0, 3, 100, steps, seed, &mut t), IptStatus::Ok);
    t
}

unsafe fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    ipt_string_free(p);
    s
}

unsafe fn last_error() -> String {
    CStr::from_ptr(ipt_last_error()).to_string_lossy().into_owned()
}

#[test]
fn json_roundtrip_preserves_the_tree() {
    unsafe {
        let t = build(IptModel::AlphaTheta, 15, 3);
        let mut s = ptr::null_mut();
        assert_eq!(ipt_tree_to_json(t, &mut s), IptStatus::Ok);
        let json = take_string(s);
        let c = CString::new(json.clone()).unwrap();
        let mut u = ptr::null_mut();
        assert_eq!(ipt_tree_from_json(c.as_ptr(), &mut u), IptStatus::Ok);
        let mut s2 = ptr::null_mut();
        assert_eq!(ipt_tree_to_json(u, &mut s2), IptStatus::Ok);
        assert_eq!(take_string(s2), json);
        ipt_tree_free(t);
        ipt_tree_free(u);
    }
}

#[test]
fn new_tree_is_one_pending_atom() {
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(ipt_tree_new(&mut t), IptStatus::Ok);
        let (mut a, mut d, mut p) = (0.0, 0.0, 0.0);
        assert_eq!(ipt_tree_decompose(t, &mut a, &mut d, &mut p), IptStatus::Ok);
        assert_eq!((a, d, p), (0.0, 0.0, 1.0));
        let mut svg = ptr::null_mut();
        assert_eq!(ipt_tree_render_svg(t, &mut svg), IptStatus::Ok);
        assert!(take_string(svg).starts_with("<svg"));
        ipt_tree_free(t);
    }
}

#[test]
fn equivalent_builds_share_a_canonical_form() {
    unsafe {
        let a = build(IptModel::FatCantor, 6, 1);
        let b = build(IptModel::FatCantor, 6, 1);
        let c = build(IptModel::FatCantor, 2, 1);
        let mut eq = false;
        assert_eq!(ipt_ms_equivalent(a, b, &mut eq), IptStatus::Ok);
        assert!(eq);
        assert_eq!(ipt_ms_equivalent(a, c, &mut eq), IptStatus::Ok);
        assert!(!eq);
        let (mut fa, mut fc) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ipt_tree_canonical_form(a, &mut fa), IptStatus::Ok);
        assert_eq!(ipt_tree_canonical_form(c, &mut fc), IptStatus::Ok);
        let (fa, fc) = (take_string(fa), take_string(fc));
        assert_eq!(fa.len(), 64);
        assert_ne!(fa, fc);
        for t in [a, b, c] {
            ipt_tree_free(t);
        }
    }
}

#[test]
fn hierarchy_sampling_and_reconstruction() {
    unsafe {
        let t = build(IptModel::Brownian, 30, 9);
        let mut h = ptr::null_mut();
        assert_eq!(ipt_sample_hierarchy(t, 11, 4, &mut h), IptStatus::Ok);
        let mut n = 0usize;
        assert_eq!(ipt_hierarchy_len(h, &mut n), IptStatus::Ok);
        assert_eq!(n, 11);
        let mut s = ptr::null_mut();
        assert_eq!(ipt_hierarchy_to_json(h, &mut s), IptStatus::Ok);
        let c = CString::new(take_string(s)).unwrap();
        let mut h2 = ptr::null_mut();
        assert_eq!(ipt_hierarchy_from_json(c.as_ptr(), &mut h2), IptStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(ipt_reconstruct(h2, 5, false, &mut r), IptStatus::Ok);
        let mut valid = false;
        assert_eq!(ipt_tree_check(r, &mut valid, ptr::null_mut()), IptStatus::Ok);
        assert!(valid);
        assert_eq!(ipt_reconstruct(h2, 99, false, &mut r), IptStatus::Domain);
        ipt_tree_free(r);
        ipt_tree_free(t);
        ipt_hierarchy_free(h);
        ipt_hierarchy_free(h2);
    }
}

#[test]
fn prokhorov_needs_a_grid_for_density() {
    unsafe {
        let t = build(IptModel::FatCantor, 4, 2);
        let mut d = -1.0;
        assert_eq!(ipt_prokhorov(t, t, 0.0, &mut d), IptStatus::Domain);
        assert_eq!(ipt_prokhorov(t, t, 0.05, &mut d), IptStatus::Ok);
        assert_eq!(d, 0.0);
        ipt_tree_free(t);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(ipt_tree_from_json(ptr::null(), &mut t), IptStatus::NullPointer);
        let bad = CString::new("[1,2").unwrap();
        assert_eq!(ipt_tree_from_json(bad.as_ptr(), &mut t), IptStatus::BadInput);
        assert!(!last_error().is_empty());
        let bytes = [0xffu8, 0xfe, 0];
        assert_eq!(ipt_tree_from_json(bytes.as_ptr().cast(), &mut t), IptStatus::InvalidUtf8);
        assert_eq!(ipt_tree_build(17, 0.5, 0.5, 1, 100, 1, 0, &mut t), IptStatus::Domain);
        assert!(last_error().contains("unknown model"));
        assert_eq!(ipt_tree_build(IptModel::AlphaTheta as u32, 1.5, 0.5, 1, 100, 1, 0, &mut t), IptStatus::Domain);
        assert_eq!(ipt_tree_new(ptr::null_mut()), IptStatus::NullPointer);
        let mut eq = false;
        assert_eq!(ipt_ms_equivalent(ptr::null(), ptr::null(), &mut eq), IptStatus::NullPointer);
        ipt_tree_free(ptr::null_mut());
        ipt_hierarchy_free(ptr::null_mut());
        ipt_string_free(ptr::null_mut());
    }
}

/// Directory holding this test binary, where cargo also writes the
/// library artifacts built for it.
fn deps_dir() -> PathBuf {
    std::env::current_exe().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = deps_dir().join("libiptree_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .expect("C compiler runs");
    assert!(status.success(), "C compile failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
