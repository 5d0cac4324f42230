//! C interface to the `iptree` crate.
//!
//! Trees and hierarchies live behind opaque handles created by the
//! `ipt_*` constructors and released with the matching `*_free`
//! function. Every fallible call returns an [`IptStatus`]; on failure a
//! message is available from [`ipt_last_error`] on the same thread.
//! Strings returned through `char **` are owned by the caller and must be
//! released with [`ipt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use iptree::equiv::{canonical_form, ip_representative, ms_equivalent, prokhorov_distance};
use iptree::hierarchy::{derive_hierarchy, reconstruct_tree, Hierarchy};
use iptree::iptree::{build_model, Model};
use iptree::measure::decompose;
use iptree::render::render_svg;
use iptree::{Error, IpTree};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IptStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Malformed JSON or an unusable argument.
    BadInput = 3,
    /// The input is well formed but fails validation (not an IP tree,
    /// hierarchy cannot be embedded).
    Invalid = 4,
    /// A numeric parameter is out of range.
    Domain = 5,
    /// An internal panic was caught.
    Panic = 6,
}

/// Values of the `model` argument of [`ipt_tree_build`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IptModel {
    Brownian = 0,
    AlphaTheta = 1,
    FatCantor = 2,
}

/// Opaque tree handle.
pub struct IptTree(IpTree);

/// Opaque hierarchy handle.
pub struct IptHierarchy(Hierarchy);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(IptStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let s = match &e {
            Error::InvalidTree(_) | Error::InvalidHierarchy(_) => IptStatus::Invalid,
            Error::Domain(_) | Error::TooFewAtoms { .. } | Error::NeedsGrid => IptStatus::Domain,
            _ => IptStatus::BadInput,
        };
        Fail(s, e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(IptStatus::BadInput, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IptStatus::Ok,
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            IptStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(IptStatus::NullPointer, format!("{what} is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null("string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|e| Fail(IptStatus::InvalidUtf8, e.to_string()))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|e| Fail(IptStatus::BadInput, e.to_string()))?;
    put(out, c.into_raw())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ipt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ipt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The one-point tree with a unit pending atom at the root.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_tree_new(out: *mut *mut IptTree) -> IptStatus {
    guard(|| put(out, Box::into_raw(Box::new(IptTree(IpTree::new())))))
}

/// Parse and validate a tree from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_tree_from_json(json: *const c_char, out: *mut *mut IptTree) -> IptStatus {
    guard(|| {
        let t: IpTree = serde_json::from_str(read_str(json)?)?;
        put(out, Box::into_raw(Box::new(IptTree(t))))
    })
}

/// # Safety
/// `tree` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_tree_to_json(tree: *const IptTree, out: *mut *mut c_char) -> IptStatus {
    guard(|| {
        let t = get(tree, "tree")?;
        put_string(out, serde_json::to_string(&t.0)?)
    })
}

/// Grow a random tree by `steps` bead crushes. `alpha` and `theta` are
/// read for the two-parameter model, `depth` for the fat Cantor model and
/// `truncation` for both string-of-beads models.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_tree_build(
    model: u32,
    alpha: f64,
    theta: f64,
    depth: u32,
    truncation: usize,
    steps: usize,
    seed: u64,
    out: *mut *mut IptTree,
) -> IptStatus {
    guard(|| {
        let m = match model {
            x if x == IptModel::Brownian as u32 => Model::Brownian { truncation },
            x if x == IptModel::AlphaTheta as u32 => Model::AlphaTheta { alpha, theta, truncation },
            x if x == IptModel::FatCantor as u32 => Model::FatCantor { depth },
            x => return Err(Fail(IptStatus::Domain, format!("unknown model {x}"))),
        };
        let t = build_model(&m, steps, seed)?;
        put(out, Box::into_raw(Box::new(IptTree(t))))
    })
}

/// Run the interval-partition check. Either output may be null.
///
/// # Safety
/// `tree` must be a live handle; non-null outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_tree_check(tree: *const IptTree, valid: *mut bool, max_residual: *mut f64) -> IptStatus {
    guard(|| {
        let c = get(tree, "tree")?.0.is_ip_tree();
        if !valid.is_null() {
            valid.write(c.valid);
        }
        if !max_residual.is_null() {
            max_residual.write(c.max_residual);
        }
        Ok(())
    })
}

/// Masses of the atomic, skeleton-density and pending parts of the weight.
///
/// # Safety
/// `tree` must be a live handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_tree_decompose(
    tree: *const IptTree,
    atomic: *mut f64,
    density: *mut f64,
    pending: *mut f64,
) -> IptStatus {
    guard(|| {
        let (a, d, p) = decompose(&get(tree, "tree")?.0).masses();
        put(atomic, a)?;
        put(density, d)?;
        put(pending, p)
    })
}

/// Hex digest identifying the tree up to mass-structural isomorphism.
///
/// # Safety
/// `tree` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_tree_canonical_form(tree: *const IptTree, out: *mut *mut c_char) -> IptStatus {
    guard(|| put_string(out, canonical_form(&get(tree, "tree")?.0)?.digest))
}

/// # Safety
/// `a` and `b` must be live handles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_ms_equivalent(a: *const IptTree, b: *const IptTree, out: *mut bool) -> IptStatus {
    guard(|| put(out, ms_equivalent(&get(a, "a")?.0, &get(b, "b")?.0)?))
}

/// Prokhorov distance between the weights of two trees. A `grid` of zero
/// or less means no discretization, which fails for weights with density.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_prokhorov(a: *const IptTree, b: *const IptTree, grid: f64, out: *mut f64) -> IptStatus {
    guard(|| {
        let g = (grid > 0.0).then_some(grid);
        put(out, prokhorov_distance(get(a, "a")?.0.weight(), get(b, "b")?.0.weight(), g)?)
    })
}

/// # Safety
/// `tree` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_tree_render_svg(tree: *const IptTree, out: *mut *mut c_char) -> IptStatus {
    guard(|| put_string(out, render_svg(&get(tree, "tree")?.0)?))
}

/// # Safety
/// `tree` must be null or a live handle not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ipt_tree_free(tree: *mut IptTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// Hierarchy of `n` seeded samples from an IP tree, labelled `1..=n`.
///
/// # Safety
/// `tree` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_sample_hierarchy(
    tree: *const IptTree,
    n: usize,
    seed: u64,
    out: *mut *mut IptHierarchy,
) -> IptStatus {
    guard(|| {
        let (h, _) = derive_hierarchy(&get(tree, "tree")?.0, n, seed)?;
        put(out, Box::into_raw(Box::new(IptHierarchy(h))))
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_hierarchy_from_json(json: *const c_char, out: *mut *mut IptHierarchy) -> IptStatus {
    guard(|| {
        let h = Hierarchy::from_json(read_str(json)?)?;
        put(out, Box::into_raw(Box::new(IptHierarchy(h))))
    })
}

/// # Safety
/// `h` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_hierarchy_to_json(h: *const IptHierarchy, out: *mut *mut c_char) -> IptStatus {
    guard(|| put_string(out, get(h, "hierarchy")?.0.to_json()))
}

/// Number of labels.
///
/// # Safety
/// `h` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_hierarchy_len(h: *const IptHierarchy, out: *mut usize) -> IptStatus {
    guard(|| put(out, get(h, "hierarchy")?.0.len()))
}

/// Tree rebuilt from a hierarchy by `k` spinal steps. Hierarchies on
/// `1..=2n+1` are first relabelled to `-n..=n`. Unless `raw` is set the
/// union of sample paths is replaced by its IP representative.
///
/// # Safety
/// `h` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ipt_reconstruct(
    h: *const IptHierarchy,
    k: usize,
    raw: bool,
    out: *mut *mut IptTree,
) -> IptStatus {
    guard(|| {
        let h = &get(h, "hierarchy")?.0;
        let z;
        let h = if h.labels().iter().any(|&l| l <= 0) {
            h
        } else {
            z = h.relabel_to_z()?;
            &z
        };
        let r = reconstruct_tree(h, k)?;
        let t = if raw { r.tree } else { ip_representative(&r.tree)? };
        put(out, Box::into_raw(Box::new(IptTree(t))))
    })
}

/// # Safety
/// `h` must be null or a live handle not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ipt_hierarchy_free(h: *mut IptHierarchy) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}
