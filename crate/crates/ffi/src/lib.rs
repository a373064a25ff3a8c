//! C ABI for the sublim library.
//!
//! Conventions:
//! - Handles (`SublimFamily`, `SublimSolution`) are opaque pointers
//!   created and destroyed by this library; never free them with
//!   `free()`.
//! - Every fallible call returns a [`SublimStatus`]; on failure
//!   [`sublim_last_error_message`] returns a thread-local message that
//!   stays valid until the next failing call on the same thread.
//! - Functions of one real variable are passed as expression strings in
//!   the variable `x` (`"cos(x) + 0.5*sin(2*x)"`).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use sublim::clt::{self, StepFamily, TestFunction};
use sublim::expr::{infer_bounds, parse_expr, Expr};
use sublim::grid::{GridSpec, ValueGrid};
use sublim::measures::{AmbiguitySet, DiscreteMeasure, Event};
use sublim::pde::{self, GParams1D, PdeConfig};
use sublim::Error;

/// Status of a C-API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SublimStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Malformed configuration, expression or type invariant.
    Config = 3,
    /// An argument was outside its admissible range.
    Parameter = 4,
    /// A grid or domain was too small.
    Domain = 5,
    /// A state-space cap was exceeded.
    Size = 6,
    /// A non-finite value appeared during computation.
    Numeric = 7,
    /// An internal failure (a bug); details in the error message.
    Internal = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn fail(status: SublimStatus, message: impl Into<String>) -> SublimStatus {
    set_error(message.into());
    status
}

fn status_of(err: &Error) -> SublimStatus {
    match err {
        Error::Invalid { .. } | Error::Parse { .. } | Error::Config(_) | Error::Json(_) => {
            SublimStatus::Config
        }
        Error::Parameter(_) => SublimStatus::Parameter,
        Error::Domain(_) => SublimStatus::Domain,
        Error::Size(_) => SublimStatus::Size,
        Error::Numeric(_) | Error::Evaluation { .. } => SublimStatus::Numeric,
        Error::Io(_) => SublimStatus::Internal,
    }
}

fn from_error(err: Error) -> SublimStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Runs a closure, converting panics into `Internal` so they never cross
/// the FFI boundary.
fn guarded(f: impl FnOnce() -> SublimStatus) -> SublimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(SublimStatus::Internal, "internal panic"),
    }
}

unsafe fn utf8_arg<'a>(ptr: *const c_char) -> Result<&'a str, SublimStatus> {
    if ptr.is_null() {
        return Err(fail(SublimStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(SublimStatus::InvalidUtf8, "string argument is not UTF-8"))
}

/// Message for the most recent failure on this thread, or null if the
/// last call succeeded. The pointer is invalidated by the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn sublim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sublim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------------------
// families
// ---------------------------------------------------------------------------

/// An ambiguity set under construction: measures are appended one at a
/// time and validated on use.
pub struct SublimFamily {
    dim: usize,
    measures: Vec<DiscreteMeasure>,
}

impl SublimFamily {
    fn ambiguity_set(&self) -> Result<AmbiguitySet, Error> {
        AmbiguitySet::new(self.measures.clone())
    }

    fn step_family(&self) -> Result<StepFamily, Error> {
        StepFamily::new(self.ambiguity_set()?)
    }
}

/// Create an empty family of measures on ℝᵈ. Returns null when `dim` is
/// zero. Free with [`sublim_family_free`].
#[no_mangle]
pub extern "C" fn sublim_family_new(dim: usize) -> *mut SublimFamily {
    if dim == 0 {
        set_error("dimension must be at least 1".into());
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(SublimFamily {
        dim,
        measures: Vec::new(),
    }))
}

/// Append one measure. `atoms` is row-major `n_atoms x dim`; `weights`
/// has `n_atoms` entries that must be nonnegative and sum to 1 within
/// 1e-12.
///
/// # Safety
/// `family` must come from [`sublim_family_new`] and not yet be freed;
/// `atoms` and `weights` must point to arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn sublim_family_add_measure(
    family: *mut SublimFamily,
    atoms: *const f64,
    weights: *const f64,
    n_atoms: usize,
) -> SublimStatus {
    guarded(|| {
        let Some(family) = (unsafe { family.as_mut() }) else {
            return fail(SublimStatus::NullPointer, "null family handle");
        };
        if atoms.is_null() || weights.is_null() {
            return fail(SublimStatus::NullPointer, "null atom or weight array");
        }
        if n_atoms == 0 {
            return fail(SublimStatus::Parameter, "measure needs at least one atom");
        }
        let flat = unsafe { std::slice::from_raw_parts(atoms, n_atoms * family.dim) };
        let weights = unsafe { std::slice::from_raw_parts(weights, n_atoms) };
        let atom_vecs: Vec<Vec<f64>> = flat.chunks(family.dim).map(<[f64]>::to_vec).collect();
        match DiscreteMeasure::new(atom_vecs, weights.to_vec()) {
            Ok(m) => {
                family.measures.push(m);
                SublimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of measures added so far.
///
/// # Safety
/// `family` must be a live handle from [`sublim_family_new`].
#[no_mangle]
pub unsafe extern "C" fn sublim_family_len(family: *const SublimFamily) -> usize {
    unsafe { family.as_ref() }.map_or(0, |f| f.measures.len())
}

/// Destroy a family handle. Null is ignored.
///
/// # Safety
/// `family` must come from [`sublim_family_new`] and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn sublim_family_free(family: *mut SublimFamily) {
    if !family.is_null() {
        drop(unsafe { Box::from_raw(family) });
    }
}

// ---------------------------------------------------------------------------
// measures operations
// ---------------------------------------------------------------------------

fn parse_scalar_expr(text: &str) -> Result<Expr, SublimStatus> {
    parse_expr(text).map_err(from_error)
}

/// Upper expectation `max_theta E_theta[f]` of an expression in `x`
/// over a one-dimensional family, with the least attaining index.
///
/// # Safety
/// `family` must be a live handle; `expr` must be a NUL-terminated
/// string; `out_value` and `out_argmax` must be writable or null (null
/// outputs are skipped).
#[no_mangle]
pub unsafe extern "C" fn sublim_upper_expectation(
    family: *const SublimFamily,
    expr: *const c_char,
    out_value: *mut f64,
    out_argmax: *mut usize,
) -> SublimStatus {
    guarded(|| {
        let Some(family) = (unsafe { family.as_ref() }) else {
            return fail(SublimStatus::NullPointer, "null family handle");
        };
        let text = match unsafe { utf8_arg(expr) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        if family.dim != 1 {
            return fail(
                SublimStatus::Parameter,
                "expression functions need a one-dimensional family",
            );
        }
        let parsed = match parse_scalar_expr(text) {
            Ok(e) => e,
            Err(s) => return s,
        };
        let set = match family.ambiguity_set() {
            Ok(s) => s,
            Err(e) => return from_error(e),
        };
        let rv = sublim::measures::RandomVariable::new(text, move |p: &[f64]| parsed.eval(p[0]));
        match set.upper_expectation(&rv) {
            Ok(r) => {
                if let Some(v) = unsafe { out_value.as_mut() } {
                    *v = r.value;
                }
                if let Some(a) = unsafe { out_argmax.as_mut() } {
                    *a = r.argmax;
                }
                SublimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Capacity of the escape event `{ |x| > radius }`.
///
/// # Safety
/// `family` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sublim_capacity_norm_gt(
    family: *const SublimFamily,
    radius: f64,
    out: *mut f64,
) -> SublimStatus {
    guarded(|| {
        let Some(family) = (unsafe { family.as_ref() }) else {
            return fail(SublimStatus::NullPointer, "null family handle");
        };
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(SublimStatus::NullPointer, "null output pointer");
        };
        match family.ambiguity_set() {
            Ok(set) => {
                *out = set.capacity(&Event::norm_gt(radius));
                SublimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Chebyshev tightness certificate: the smallest radius of the form
/// `k * 0.5` with `radius^l > E[|x|^l] / epsilon`, plus the direct
/// verification `c({|x| > radius}) < epsilon`.
///
/// # Safety
/// `family` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sublim_tightness_radius(
    family: *const SublimFamily,
    epsilon: f64,
    l: f64,
    out_radius: *mut f64,
    out_verified: *mut bool,
) -> SublimStatus {
    guarded(|| {
        let Some(family) = (unsafe { family.as_ref() }) else {
            return fail(SublimStatus::NullPointer, "null family handle");
        };
        let set = match family.ambiguity_set() {
            Ok(s) => s,
            Err(e) => return from_error(e),
        };
        match set.tightness_radius(epsilon, l) {
            Ok(cert) => {
                if let Some(r) = unsafe { out_radius.as_mut() } {
                    *r = cert.radius;
                }
                if let Some(v) = unsafe { out_verified.as_mut() } {
                    *v = cert.verified;
                }
                SublimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

// ---------------------------------------------------------------------------
// clt operations
// ---------------------------------------------------------------------------

/// Exact nested-maximization value of `E[phi(S_n / sqrt(n))]` for a
/// zero-mean one-dimensional family. Accepts unbounded expressions.
///
/// # Safety
/// `family` must be a live handle; `expr` must be NUL-terminated; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn sublim_clt_value_exact(
    family: *const SublimFamily,
    expr: *const c_char,
    n: u32,
    out: *mut f64,
) -> SublimStatus {
    guarded(|| {
        let Some(family) = (unsafe { family.as_ref() }) else {
            return fail(SublimStatus::NullPointer, "null family handle");
        };
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(SublimStatus::NullPointer, "null output pointer");
        };
        let text = match unsafe { utf8_arg(expr) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        let parsed = match parse_scalar_expr(text) {
            Ok(e) => e,
            Err(s) => return s,
        };
        let steps = match family.step_family() {
            Ok(f) => f,
            Err(e) => return from_error(e),
        };
        match clt::value_exact(&steps, |x| parsed.eval(x), n) {
            Ok(v) => {
                *out = v;
                SublimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Grid dynamic-programming value of `E[phi(S_n / sqrt(n))]` with the
/// default grid span and the given spacing. The expression must stay
/// bounded (its sampled bounds are attached automatically).
///
/// # Safety
/// As for [`sublim_clt_value_exact`].
#[no_mangle]
pub unsafe extern "C" fn sublim_clt_value_dp(
    family: *const SublimFamily,
    expr: *const c_char,
    n: u32,
    dx: f64,
    out: *mut f64,
) -> SublimStatus {
    guarded(|| {
        let Some(family) = (unsafe { family.as_ref() }) else {
            return fail(SublimStatus::NullPointer, "null family handle");
        };
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(SublimStatus::NullPointer, "null output pointer");
        };
        let text = match unsafe { utf8_arg(expr) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        let parsed = match parse_scalar_expr(text) {
            Ok(e) => e,
            Err(s) => return s,
        };
        let steps = match family.step_family() {
            Ok(f) => f,
            Err(e) => return from_error(e),
        };
        let radius = clt::default_half_width(&steps);
        let bounds = match infer_bounds(&parsed, radius) {
            Ok(b) => b,
            Err(e) => return from_error(e),
        };
        if bounds.growth_detected {
            return fail(
                SublimStatus::Parameter,
                "expression keeps growing; grid mode needs a bounded function",
            );
        }
        let phi = TestFunction::new(text, bounds.sup, bounds.lipschitz, move |x| parsed.eval(x));
        match clt::value_dp(&steps, &phi, n, &GridSpec::with_dx(dx)) {
            Ok(v) => {
                *out = v;
                SublimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

// ---------------------------------------------------------------------------
// pde operations
// ---------------------------------------------------------------------------

/// A solved time slice of the G-heat equation on its grid.
pub struct SublimSolution {
    grid: ValueGrid,
}

fn build_bounded(text: &str, half_width: f64) -> Result<TestFunction, SublimStatus> {
    let parsed = parse_scalar_expr(text)?;
    let bounds = infer_bounds(&parsed, half_width).map_err(from_error)?;
    if bounds.growth_detected {
        return Err(fail(
            SublimStatus::Parameter,
            "expression keeps growing; the solver needs a bounded function",
        ));
    }
    Ok(TestFunction::new(
        text,
        bounds.sup,
        bounds.lipschitz,
        move |x| parsed.eval(x),
    ))
}

/// Solve the G-heat equation `du/dt = G(D2u)` with variance interval
/// `[sigma_min_sq, sigma_max_sq]` up to `t_final` and return the final
/// slice as a solution handle. Free it with [`sublim_solution_free`].
///
/// # Safety
/// `expr` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sublim_gheat_solve(
    sigma_min_sq: f64,
    sigma_max_sq: f64,
    expr: *const c_char,
    half_width: f64,
    dx: f64,
    t_final: f64,
    out: *mut *mut SublimSolution,
) -> SublimStatus {
    guarded(|| {
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(SublimStatus::NullPointer, "null output pointer");
        };
        let text = match unsafe { utf8_arg(expr) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        let g = match GParams1D::new(sigma_min_sq, sigma_max_sq) {
            Ok(g) => g,
            Err(e) => return from_error(e),
        };
        let cfg = match PdeConfig::new(half_width, dx, t_final) {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        let phi = match build_bounded(text, half_width) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match pde::solve_gheat(&g, &phi, &cfg) {
            Ok(solution) => {
                let grid = solution.last().grid.clone();
                *out = Box::into_raw(Box::new(SublimSolution { grid }));
                SublimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// G-normal expectation of a bounded expression: the G-heat solution at
/// time 1, evaluated at the origin.
///
/// # Safety
/// `expr` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sublim_gnormal_value(
    sigma_min_sq: f64,
    sigma_max_sq: f64,
    expr: *const c_char,
    half_width: f64,
    dx: f64,
    out: *mut f64,
) -> SublimStatus {
    guarded(|| {
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(SublimStatus::NullPointer, "null output pointer");
        };
        let text = match unsafe { utf8_arg(expr) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        let g = match GParams1D::new(sigma_min_sq, sigma_max_sq) {
            Ok(g) => g,
            Err(e) => return from_error(e),
        };
        let cfg = match PdeConfig::new(half_width, dx, 1.0) {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        let phi = match build_bounded(text, half_width) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match pde::gnormal_value(&g, &phi, &cfg) {
            Ok(v) => {
                *out = v;
                SublimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Node count of a solution grid.
///
/// # Safety
/// `solution` must be a live handle from [`sublim_gheat_solve`].
#[no_mangle]
pub unsafe extern "C" fn sublim_solution_len(solution: *const SublimSolution) -> usize {
    unsafe { solution.as_ref() }.map_or(0, |s| s.grid.len())
}

/// Coordinate and value of node `i`.
///
/// # Safety
/// `solution` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sublim_solution_node(
    solution: *const SublimSolution,
    i: usize,
    out_x: *mut f64,
    out_u: *mut f64,
) -> SublimStatus {
    guarded(|| {
        let Some(s) = (unsafe { solution.as_ref() }) else {
            return fail(SublimStatus::NullPointer, "null solution handle");
        };
        if i >= s.grid.len() {
            return fail(
                SublimStatus::Parameter,
                format!("node {i} out of range (len {})", s.grid.len()),
            );
        }
        if let Some(x) = unsafe { out_x.as_mut() } {
            *x = s.grid.node(i);
        }
        if let Some(u) = unsafe { out_u.as_mut() } {
            *u = s.grid.values()[i];
        }
        SublimStatus::Ok
    })
}

/// Clamped linear interpolation of the solution at `x`.
///
/// # Safety
/// `solution` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sublim_solution_eval(
    solution: *const SublimSolution,
    x: f64,
    out: *mut f64,
) -> SublimStatus {
    guarded(|| {
        let Some(s) = (unsafe { solution.as_ref() }) else {
            return fail(SublimStatus::NullPointer, "null solution handle");
        };
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(SublimStatus::NullPointer, "null output pointer");
        };
        *out = s.grid.eval(x);
        SublimStatus::Ok
    })
}

/// Destroy a solution handle. Null is ignored.
///
/// # Safety
/// `solution` must come from [`sublim_gheat_solve`] and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn sublim_solution_free(solution: *mut SublimSolution) {
    if !solution.is_null() {
        drop(unsafe { Box::from_raw(solution) });
    }
}
