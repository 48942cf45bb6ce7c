//! C ABI over `ldg-core`.
//!
//! Fields are opaque handles created by [`ldg_field_new_disk`] and released
//! with [`ldg_field_free`]. Every fallible call returns an [`LdgStatus`];
//! on failure [`ldg_last_error`] describes the most recent error on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use ldg_core::defect::locate_defect;
use ldg_core::field::{
    apply_boundary, initial_field, make_disk_domain, BoundaryData, EnergyFunctional, InitMode,
    TensorField,
};
use ldg_core::minimizer::{solve_from, SolveConfig};
use ldg_core::snapshot::{read_snapshot, write_snapshot};
use ldg_core::tensor::{potential_w, SymTensor3};
use ldg_core::{AnalysisError, FieldError, SolveError};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LdgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    SolveFailed = 4,
    NoDefect = 5,
    MultipleDefects = 6,
    AnalysisFailed = 7,
    Panic = 8,
}

/// Opaque tensor field on a disk.
pub struct LdgField {
    field: TensorField,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LdgSolveInfo {
    pub iterations: usize,
    pub converged: bool,
    pub energy: f64,
    pub potential_mass: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let s = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn fail(status: LdgStatus, msg: impl std::fmt::Display) -> LdgStatus {
    set_error(msg);
    status
}

fn field_status(e: FieldError) -> LdgStatus {
    let status = match e {
        FieldError::Io { .. }
        | FieldError::SnapshotParse { .. }
        | FieldError::SnapshotMismatch(_) => LdgStatus::Io,
        _ => LdgStatus::InvalidArgument,
    };
    fail(status, e)
}

fn guarded(f: impl FnOnce() -> LdgStatus) -> LdgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == LdgStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(LdgStatus::Panic, "internal panic"),
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, LdgStatus> {
    if p.is_null() {
        return Err(fail(LdgStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(LdgStatus::InvalidArgument, "path is not UTF-8"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ldg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ldg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a radially melted field on a disk of `n` cells per side with the
/// standard boundary loop of odd `winding`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ldg_field_new_disk(
    n: usize,
    radius: f64,
    winding: i32,
    out: *mut *mut LdgField,
) -> LdgStatus {
    guarded(|| {
        if out.is_null() {
            return fail(LdgStatus::NullPointer, "out is null");
        }
        let bd = BoundaryData {
            winding,
            ..Default::default()
        };
        let mask = match make_disk_domain(n, radius).and_then(|m| apply_boundary(&m, &bd)) {
            Ok(m) => Arc::new(m),
            Err(e) => return field_status(e),
        };
        match initial_field(&mask, &InitMode::RadialMelt) {
            Ok(field) => {
                *out = Box::into_raw(Box::new(LdgField { field }));
                LdgStatus::Ok
            }
            Err(e) => field_status(e),
        }
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `field` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ldg_field_free(field: *mut LdgField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Number of grid cells, including exterior ones.
///
/// # Safety
/// `field` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ldg_field_len(field: *const LdgField, out: *mut usize) -> LdgStatus {
    guarded(|| match (field.as_ref(), out.is_null()) {
        (Some(f), false) => {
            *out = f.field.values().len();
            LdgStatus::Ok
        }
        _ => fail(LdgStatus::NullPointer, "null argument"),
    })
}

/// Copies six components `xx, xy, xz, yy, yz, zz` per cell into `buf`,
/// which must hold `6 * len` doubles.
///
/// # Safety
/// `field` must be a live handle and `buf` must point to `buf_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ldg_field_copy_values(
    field: *const LdgField,
    buf: *mut f64,
    buf_len: usize,
) -> LdgStatus {
    guarded(|| {
        let Some(f) = field.as_ref() else {
            return fail(LdgStatus::NullPointer, "field is null");
        };
        if buf.is_null() {
            return fail(LdgStatus::NullPointer, "buf is null");
        }
        let values = f.field.values();
        if buf_len < 6 * values.len() {
            return fail(
                LdgStatus::InvalidArgument,
                format!("buffer needs {} doubles", 6 * values.len()),
            );
        }
        let dst = std::slice::from_raw_parts_mut(buf, 6 * values.len());
        for (chunk, v) in dst.chunks_exact_mut(6).zip(values) {
            chunk.copy_from_slice(&v.to_array());
        }
        LdgStatus::Ok
    })
}

/// Total energy at `eps` with the standard potential.
///
/// # Safety
/// `field` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ldg_field_energy(
    field: *const LdgField,
    eps: f64,
    out: *mut f64,
) -> LdgStatus {
    guarded(|| {
        let Some(f) = field.as_ref() else {
            return fail(LdgStatus::NullPointer, "field is null");
        };
        if out.is_null() {
            return fail(LdgStatus::NullPointer, "out is null");
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return fail(LdgStatus::InvalidArgument, "eps must be positive");
        }
        *out = EnergyFunctional::new(eps).value(&f.field);
        LdgStatus::Ok
    })
}

/// Runs the gradient flow at `eps` in place. Non-convergence within
/// `max_iters` is reported through `info`, not the status.
///
/// # Safety
/// `field` must be a live handle; `info` may be null.
#[no_mangle]
pub unsafe extern "C" fn ldg_solve(
    field: *mut LdgField,
    eps: f64,
    max_iters: usize,
    rel_tol: f64,
    info: *mut LdgSolveInfo,
) -> LdgStatus {
    guarded(|| {
        let Some(f) = field.as_mut() else {
            return fail(LdgStatus::NullPointer, "field is null");
        };
        let cfg = SolveConfig {
            eps,
            max_iters,
            rel_tol,
            ..Default::default()
        };
        match solve_from(f.field.clone(), &cfg) {
            Ok(res) => {
                if let Some(i) = info.as_mut() {
                    *i = LdgSolveInfo {
                        iterations: res.iterations,
                        converged: res.converged,
                        energy: res.energy.total(),
                        potential_mass: res.energy.potential_mass,
                    };
                }
                f.field = res.field;
                LdgStatus::Ok
            }
            Err(e @ SolveError::InvalidConfig(_)) => fail(LdgStatus::InvalidArgument, e),
            Err(e) => fail(LdgStatus::SolveFailed, e),
        }
    })
}

/// Position and peak distance-to-projection of the defect core.
///
/// # Safety
/// `field` must be a live handle; `x`, `y`, `peak` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldg_locate_defect(
    field: *const LdgField,
    x: *mut f64,
    y: *mut f64,
    peak: *mut f64,
) -> LdgStatus {
    guarded(|| {
        let Some(f) = field.as_ref() else {
            return fail(LdgStatus::NullPointer, "field is null");
        };
        if x.is_null() || y.is_null() || peak.is_null() {
            return fail(LdgStatus::NullPointer, "null output");
        }
        match locate_defect(&f.field) {
            Ok(core) => {
                *x = core.position[0];
                *y = core.position[1];
                *peak = core.peak;
                LdgStatus::Ok
            }
            Err(e @ AnalysisError::NoDefect(_)) => fail(LdgStatus::NoDefect, e),
            Err(e @ AnalysisError::MultipleDefects { .. }) => fail(LdgStatus::MultipleDefects, e),
            Err(e) => fail(LdgStatus::AnalysisFailed, e),
        }
    })
}

/// Bulk potential of one symmetric tensor given as `xx, xy, xz, yy, yz, zz`.
///
/// # Safety
/// `u` must point to six doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldg_potential_w(u: *const f64, out: *mut f64) -> LdgStatus {
    guarded(|| {
        if u.is_null() || out.is_null() {
            return fail(LdgStatus::NullPointer, "null argument");
        }
        let mut c = [0.0; 6];
        c.copy_from_slice(std::slice::from_raw_parts(u, 6));
        *out = potential_w(&SymTensor3::from_array(c));
        LdgStatus::Ok
    })
}

/// Writes the field as a snapshot CSV.
///
/// # Safety
/// `field` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ldg_field_save(field: *const LdgField, path: *const c_char) -> LdgStatus {
    guarded(|| {
        let Some(f) = field.as_ref() else {
            return fail(LdgStatus::NullPointer, "field is null");
        };
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match write_snapshot(&f.field, path) {
            Ok(()) => LdgStatus::Ok,
            Err(e) => field_status(e),
        }
    })
}

/// Replaces the field values from a snapshot written on the same grid.
///
/// # Safety
/// `field` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ldg_field_load(field: *mut LdgField, path: *const c_char) -> LdgStatus {
    guarded(|| {
        let Some(f) = field.as_mut() else {
            return fail(LdgStatus::NullPointer, "field is null");
        };
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_snapshot(path, f.field.mask_arc()) {
            Ok(new) => {
                f.field = new;
                LdgStatus::Ok
            }
            Err(e) => field_status(e),
        }
    })
}
