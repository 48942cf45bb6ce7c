use std::ffi::{CStr, CString};
use std::ptr;

use ldg_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ldg_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn new_field(n: usize) -> *mut LdgField {
    let mut f = ptr::null_mut();
    assert_eq!(
        unsafe { ldg_field_new_disk(n, 1.0, 1, &mut f) },
        LdgStatus::Ok
    );
    assert!(!f.is_null());
    f
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(ldg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn invalid_arguments_set_codes_and_messages() {
    let mut f = ptr::null_mut();
    assert_eq!(
        unsafe { ldg_field_new_disk(8, 1.0, 1, &mut f) },
        LdgStatus::InvalidArgument
    );
    assert!(f.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { ldg_field_new_disk(32, 1.0, 2, &mut f) },
        LdgStatus::InvalidArgument
    );
    assert!(last_error().contains('2'));
    assert_eq!(
        unsafe { ldg_field_new_disk(32, 1.0, 1, ptr::null_mut()) },
        LdgStatus::NullPointer
    );
    let mut e = 0.0;
    assert_eq!(
        unsafe { ldg_field_energy(ptr::null(), 0.1, &mut e) },
        LdgStatus::NullPointer
    );
    unsafe { ldg_field_free(ptr::null_mut()) };
}

#[test]
fn solve_locate_and_copy() {
    let f = new_field(48);
    let mut e0 = 0.0;
    assert_eq!(unsafe { ldg_field_energy(f, 0.25, &mut e0) }, LdgStatus::Ok);
    let mut info = LdgSolveInfo::default();
    assert_eq!(
        unsafe { ldg_solve(f, 0.25, 100_000, 1e-4, &mut info) },
        LdgStatus::Ok
    );
    assert!(info.converged && info.energy < e0);
    let mut e1 = 0.0;
    unsafe { ldg_field_energy(f, 0.25, &mut e1) };
    assert!((e1 - info.energy).abs() < 1e-12 * e1);

    let (mut x, mut y, mut peak) = (0.0, 0.0, 0.0);
    assert_eq!(
        unsafe { ldg_locate_defect(f, &mut x, &mut y, &mut peak) },
        LdgStatus::Ok
    );
    assert!(x.hypot(y) < 0.1 && peak > 0.1);

    let mut len = 0;
    assert_eq!(unsafe { ldg_field_len(f, &mut len) }, LdgStatus::Ok);
    assert_eq!(len, 48 * 48);
    let mut buf = vec![0.0; 6 * len];
    assert_eq!(
        unsafe { ldg_field_copy_values(f, buf.as_mut_ptr(), buf.len() - 1) },
        LdgStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { ldg_field_copy_values(f, buf.as_mut_ptr(), buf.len()) },
        LdgStatus::Ok
    );
    for c in buf.chunks_exact(6) {
        assert!((c[0] + c[3] + c[5] - 1.0).abs() < 1e-12);
    }
    assert_eq!(
        unsafe { ldg_solve(f, -1.0, 10, 1e-4, ptr::null_mut()) },
        LdgStatus::InvalidArgument
    );
    unsafe { ldg_field_free(f) };
}

#[test]
fn snapshot_round_trip() {
    let dir = std::env::temp_dir().join(format!("ldg-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = CString::new(dir.join("s.csv").to_str().unwrap()).unwrap();
    let a = new_field(32);
    unsafe { ldg_solve(a, 0.3, 50, 1e-4, ptr::null_mut()) };
    assert_eq!(unsafe { ldg_field_save(a, path.as_ptr()) }, LdgStatus::Ok);
    let b = new_field(32);
    assert_eq!(unsafe { ldg_field_load(b, path.as_ptr()) }, LdgStatus::Ok);
    let mut len = 0;
    unsafe { ldg_field_len(a, &mut len) };
    let (mut va, mut vb) = (vec![0.0; 6 * len], vec![0.0; 6 * len]);
    unsafe {
        ldg_field_copy_values(a, va.as_mut_ptr(), va.len());
        ldg_field_copy_values(b, vb.as_mut_ptr(), vb.len());
    }
    assert_eq!(va, vb);
    let missing = CString::new(dir.join("none.csv").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { ldg_field_load(b, missing.as_ptr()) },
        LdgStatus::Io
    );
    unsafe {
        ldg_field_free(a);
        ldg_field_free(b);
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn potential_vanishes_on_projections() {
    let p = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut w = 1.0;
    assert_eq!(
        unsafe { ldg_potential_w(p.as_ptr(), &mut w) },
        LdgStatus::Ok
    );
    assert_eq!(w, 0.0);
    let iso = [1.0 / 3.0, 0.0, 0.0, 1.0 / 3.0, 0.0, 1.0 / 3.0];
    unsafe { ldg_potential_w(iso.as_ptr(), &mut w) };
    // (u - u^2) = (2/9) I, half its squared norm
    assert!((w - 0.5 * 3.0 * (2.0f64 / 9.0).powi(2)).abs() < 1e-15);
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ldg.h")).unwrap();
    for sym in [
        "ldg_version",
        "ldg_last_error",
        "ldg_field_new_disk",
        "ldg_field_free",
        "ldg_field_len",
        "ldg_field_copy_values",
        "ldg_field_energy",
        "ldg_solve",
        "ldg_locate_defect",
        "ldg_potential_w",
        "ldg_field_save",
        "ldg_field_load",
        "typedef struct LdgField LdgField",
        "LDG_STATUS_OK",
    ] {
        assert!(h.contains(sym), "{sym}");
    }
}
