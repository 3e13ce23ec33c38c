//! C ABI for `hunt_approx`.
//!
//! Objects cross the boundary as opaque handles created by `ha_*_new` and
//! released by the matching `ha_*_free`. Every fallible call returns an
//! [`HaStatus`]; the message of the last failure on the calling thread is
//! available from [`ha_last_error`]. Matrices are dense and row-major.
//! Panics are caught at the boundary and reported as `HA_STATUS_PANIC`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use hunt_approx::kernels::SubMarkovGenerator;
use hunt_approx::potential::{capacity, reduite};
use hunt_approx::simulator::{mc_laplace, McRun};
use hunt_approx::space::{StateFunction, StateSet, StateSpace};
use hunt_approx::yosida::{approx_resolvent, approx_semigroup, yosida_generator, YosidaApprox};
use hunt_approx::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Singular = 4,
    NotConverged = 5,
    CheckFailed = 6,
    Panic = 7,
}

/// A sub-Markov generator on `n` states.
pub struct HaGenerator {
    inner: SubMarkovGenerator,
}

/// A state space with masses and reference function.
pub struct HaSpace {
    inner: StateSpace,
}

/// A Yosida approximation `L^β` together with its chain step.
pub struct HaYosida {
    inner: YosidaApprox,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HaStatus {
    match e {
        Error::Dimension { .. } => HaStatus::DimensionMismatch,
        Error::Singular { .. } => HaStatus::Singular,
        Error::NonConvergence { .. } | Error::SeriesCap { .. } => HaStatus::NotConverged,
        Error::InvalidSpace(_)
        | Error::InvalidGenerator(_)
        | Error::InvalidModel(_)
        | Error::InvalidArgument(_)
        | Error::BiasBudget { .. } => HaStatus::InvalidArgument,
        _ => HaStatus::CheckFailed,
    }
}

struct Fail(HaStatus);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        set_error(e.to_string());
        Fail(status_of(&e))
    }
}

fn null(what: &str) -> Fail {
    set_error(format!("{what} is null"));
    Fail(HaStatus::NullPointer)
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> HaStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => HaStatus::Ok,
        Ok(Err(Fail(s))) => s,
        Err(_) => {
            set_error("panic inside hunt_approx".into());
            HaStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn check_len(expected: usize, got: usize) -> Result<(), Fail> {
    if expected != got {
        return Err(Error::Dimension { expected, got }.into());
    }
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length, or 0
/// if there is none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ha_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ha_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds a generator from an `n × n` row-major rate matrix.
///
/// # Safety
/// `rates` must point to `n * n` doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ha_generator_new(rates: *const f64, n: usize, out: *mut *mut HaGenerator) -> HaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let r = input(rates, n * n, "rates")?;
        let rows: Vec<Vec<f64>> = r.chunks(n.max(1)).map(<[f64]>::to_vec).collect();
        let inner = SubMarkovGenerator::from_rows(&rows)?;
        *out = Box::into_raw(Box::new(HaGenerator { inner }));
        Ok(())
    })
}

/// Releases a generator; null is ignored.
///
/// # Safety
/// `g` must come from `ha_generator_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ha_generator_free(g: *mut HaGenerator) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of states of `g`, or 0 for null.
///
/// # Safety
/// `g` must be null or a live generator.
#[no_mangle]
pub unsafe extern "C" fn ha_generator_len(g: *const HaGenerator) -> usize {
    g.as_ref().map_or(0, |g| g.inner.len())
}

/// Writes `G_α = (αI − L)^{-1}` into `out` (`n × n`, row-major).
///
/// # Safety
/// `g` must be a live generator and `out` valid for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ha_resolvent(g: *const HaGenerator, alpha: f64, out: *mut f64, out_len: usize) -> HaStatus {
    guard(|| {
        let g = handle(g, "generator")?;
        let n = g.inner.len();
        check_len(n * n, out_len)?;
        let out = output(out, out_len, "out")?;
        let m = g.inner.resolvent_matrix(alpha)?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = m[(i, j)];
            }
        }
        Ok(())
    })
}

/// Builds a state space from masses and reference-function values.
///
/// # Safety
/// `mass` and `phi` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ha_space_new(mass: *const f64, phi: *const f64, n: usize, out: *mut *mut HaSpace) -> HaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mass = input(mass, n, "mass")?.to_vec();
        let phi = input(phi, n, "phi")?.to_vec();
        let inner = StateSpace::new((0..n).map(|i| i.to_string()).collect(), mass, phi)?;
        *out = Box::into_raw(Box::new(HaSpace { inner }));
        Ok(())
    })
}

/// Releases a state space; null is ignored.
///
/// # Safety
/// `s` must come from `ha_space_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ha_space_free(s: *mut HaSpace) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

unsafe fn mask_set(mask: *const u8, n: usize) -> Result<StateSet, Fail> {
    if mask.is_null() {
        return Err(null("mask"));
    }
    Ok(StateSet::from_mask(slice::from_raw_parts(mask, n).iter().map(|&b| b != 0).collect()))
}

/// The réduite of `f` on the set given by `mask` (nonzero bytes are
/// members) at order `alpha`, written to `out`.
///
/// # Safety
/// `f`, `mask` and `out` must each cover `n` entries.
#[no_mangle]
pub unsafe extern "C" fn ha_reduite(
    g: *const HaGenerator,
    f: *const f64,
    mask: *const u8,
    n: usize,
    alpha: f64,
    tol: f64,
    out: *mut f64,
) -> HaStatus {
    guard(|| {
        let g = handle(g, "generator")?;
        check_len(g.inner.len(), n)?;
        let f: StateFunction = input(f, n, "f")?.to_vec().into();
        let set = mask_set(mask, n)?;
        let r = reduite(&f, &set, &g.inner, alpha, tol)?;
        output(out, n, "out")?.copy_from_slice(r.values.values());
        Ok(())
    })
}

/// The strict capacity of the set given by `mask`.
///
/// # Safety
/// `mask` must cover `n` bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ha_capacity(
    g: *const HaGenerator,
    space: *const HaSpace,
    mask: *const u8,
    n: usize,
    out: *mut f64,
) -> HaStatus {
    guard(|| {
        let g = handle(g, "generator")?;
        let sp = handle(space, "space")?;
        check_len(g.inner.len(), n)?;
        check_len(sp.inner.len(), n)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = capacity(&mask_set(mask, n)?, &sp.inner, &g.inner)?.value;
        Ok(())
    })
}

/// Builds the Yosida approximation of `g` at `beta`.
///
/// # Safety
/// `g` must be a live generator and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ha_yosida_new(g: *const HaGenerator, beta: f64, out: *mut *mut HaYosida) -> HaStatus {
    guard(|| {
        let g = handle(g, "generator")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(beta > 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")).into());
        }
        let inner = yosida_generator(&g.inner, beta)?;
        *out = Box::into_raw(Box::new(HaYosida { inner }));
        Ok(())
    })
}

/// Releases a Yosida approximation; null is ignored.
///
/// # Safety
/// `y` must come from `ha_yosida_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ha_yosida_free(y: *mut HaYosida) {
    if !y.is_null() {
        drop(Box::from_raw(y));
    }
}

/// Writes `L^β` into `out` (`n × n`, row-major).
///
/// # Safety
/// `y` must be live and `out` valid for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ha_yosida_generator(y: *const HaYosida, out: *mut f64, out_len: usize) -> HaStatus {
    guard(|| {
        let y = handle(y, "yosida")?;
        let n = y.inner.len();
        check_len(n * n, out_len)?;
        let out = output(out, out_len, "out")?;
        let m = y.inner.generator();
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = m[(i, j)];
            }
        }
        Ok(())
    })
}

/// `P^β_t f` by the Poisson series; the excluded tail mass goes to
/// `truncation` when it is non-null.
///
/// # Safety
/// `f` and `out` must cover `n` doubles; `truncation` may be null.
#[no_mangle]
pub unsafe extern "C" fn ha_semigroup_apply(
    y: *const HaYosida,
    t: f64,
    f: *const f64,
    n: usize,
    tail_tol: f64,
    out: *mut f64,
    truncation: *mut f64,
) -> HaStatus {
    guard(|| {
        let y = handle(y, "yosida")?;
        check_len(y.inner.len(), n)?;
        let f: StateFunction = input(f, n, "f")?.to_vec().into();
        let s = approx_semigroup(&y.inner, t, &f, tail_tol)?;
        output(out, n, "out")?.copy_from_slice(s.values.values());
        if !truncation.is_null() {
            *truncation = s.truncation_bound;
        }
        Ok(())
    })
}

/// Closed-form resolvent `R^β_α` of the Yosida approximation.
///
/// # Safety
/// `g` must be live and `out` valid for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ha_approx_resolvent(
    g: *const HaGenerator,
    alpha: f64,
    beta: f64,
    out: *mut f64,
    out_len: usize,
) -> HaStatus {
    guard(|| {
        let g = handle(g, "generator")?;
        let n = g.inner.len();
        check_len(n * n, out_len)?;
        let out = output(out, out_len, "out")?;
        let m = approx_resolvent(&g.inner, alpha, beta)?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = m[(i, j)];
            }
        }
        Ok(())
    })
}

/// Monte Carlo estimate of `E_x[∫₀^∞ e^{−αt} f(X^β_t) dt]` from `n_paths`
/// paths on `[0, horizon]`.
///
/// # Safety
/// `f` must cover `n` doubles; `mean` and `std_error` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ha_simulate_laplace(
    y: *const HaYosida,
    x: usize,
    alpha: f64,
    f: *const f64,
    n: usize,
    n_paths: usize,
    horizon: f64,
    seed: u64,
    mean: *mut f64,
    std_error: *mut f64,
) -> HaStatus {
    guard(|| {
        let y = handle(y, "yosida")?;
        check_len(y.inner.len(), n)?;
        if mean.is_null() || std_error.is_null() {
            return Err(null("mean or std_error"));
        }
        let f: StateFunction = input(f, n, "f")?.to_vec().into();
        let est = mc_laplace(x, alpha, &f, &y.inner, McRun { n_paths, horizon, seed }, f64::INFINITY)?;
        *mean = est.estimate.mean;
        *std_error = est.estimate.std_error;
        Ok(())
    })
}
