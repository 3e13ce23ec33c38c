use std::ffi::CStr;
use std::ptr;

use hunt_approx_ffi::*;

// Two states: 0 -> 1 at rate 1, both killed at rate 1.
const RATES: [f64; 4] = [-2.0, 1.0, 0.0, -1.0];

fn generator() -> *mut HaGenerator {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { ha_generator_new(RATES.as_ptr(), 2, &mut g) }, HaStatus::Ok);
    g
}

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    unsafe { ha_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(ha_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn resolvent_matches_closed_form() {
    let g = generator();
    assert_eq!(unsafe { ha_generator_len(g) }, 2);
    let mut out = [0.0; 4];
    assert_eq!(unsafe { ha_resolvent(g, 1.0, out.as_mut_ptr(), 4) }, HaStatus::Ok);
    // (I - L)^{-1} for L above: [[1/3, 1/6], [0, 1/2]].
    let want = [1.0 / 3.0, 1.0 / 6.0, 0.0, 0.5];
    for (a, b) in out.iter().zip(want) {
        assert!((a - b).abs() < 1e-14);
    }
    unsafe { ha_generator_free(g) };
}

#[test]
fn wrong_buffer_length_is_reported() {
    let g = generator();
    let mut out = [0.0; 3];
    assert_eq!(unsafe { ha_resolvent(g, 1.0, out.as_mut_ptr(), 3) }, HaStatus::DimensionMismatch);
    assert!(last_error().contains("dimension"));
    unsafe { ha_generator_free(g) };
}

#[test]
fn null_handles_are_rejected() {
    let mut out = [0.0; 4];
    assert_eq!(unsafe { ha_resolvent(ptr::null(), 1.0, out.as_mut_ptr(), 4) }, HaStatus::NullPointer);
    assert!(last_error().contains("null"));
    unsafe {
        ha_generator_free(ptr::null_mut());
        ha_space_free(ptr::null_mut());
        ha_yosida_free(ptr::null_mut());
    }
}

#[test]
fn invalid_generator_is_rejected() {
    let bad = [-1.0, 2.0, 0.0, -1.0];
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { ha_generator_new(bad.as_ptr(), 2, &mut g) }, HaStatus::InvalidArgument);
    assert!(g.is_null());
}

#[test]
fn capacity_and_reduite_of_single_point() {
    let g = generator();
    let mut sp = ptr::null_mut();
    let mass = [1.0, 1.0];
    let phi = [1.0, 1.0];
    assert_eq!(unsafe { ha_space_new(mass.as_ptr(), phi.as_ptr(), 2, &mut sp) }, HaStatus::Ok);
    let mask = [0u8, 1];
    // At order 1, state 0 jumps to 1 at rate 1 against total rate 1 + 2.
    let ones = [1.0, 1.0];
    let mut r = [0.0; 2];
    assert_eq!(unsafe { ha_reduite(g, ones.as_ptr(), mask.as_ptr(), 2, 1.0, 1e-13, r.as_mut_ptr()) }, HaStatus::Ok);
    assert!((r[0] - 1.0 / 3.0).abs() < 1e-12 && (r[1] - 1.0).abs() < 1e-12);
    let mut cap = 0.0;
    assert_eq!(unsafe { ha_capacity(g, sp, mask.as_ptr(), 2, &mut cap) }, HaStatus::Ok);
    assert!(cap > 0.0 && cap <= 2.0);
    unsafe {
        ha_space_free(sp);
        ha_generator_free(g);
    }
}

#[test]
fn yosida_semigroup_and_resolvent() {
    let g = generator();
    let mut y = ptr::null_mut();
    assert_eq!(unsafe { ha_yosida_new(g, 8.0, &mut y) }, HaStatus::Ok);
    let mut lb = [0.0; 4];
    assert_eq!(unsafe { ha_yosida_generator(y, lb.as_mut_ptr(), 4) }, HaStatus::Ok);
    assert!(lb[1] > 0.0 && lb[0] < 0.0);

    let f = [1.0, 1.0];
    let mut pt = [0.0; 2];
    let mut tail = -1.0;
    assert_eq!(unsafe { ha_semigroup_apply(y, 0.0, f.as_ptr(), 2, 1e-12, pt.as_mut_ptr(), &mut tail) }, HaStatus::Ok);
    assert_eq!(pt, [1.0, 1.0]);
    assert!(tail >= 0.0);
    assert_eq!(
        unsafe { ha_semigroup_apply(y, 1.0, f.as_ptr(), 2, 1e-12, pt.as_mut_ptr(), ptr::null_mut()) },
        HaStatus::Ok
    );
    assert!(pt[0] < 1.0 && pt[1] < 1.0);

    let mut r = [0.0; 4];
    assert_eq!(unsafe { ha_approx_resolvent(g, 1.0, 8.0, r.as_mut_ptr(), 4) }, HaStatus::Ok);
    assert!(r[0] + r[1] > 0.0 && r[0] + r[1] < 1.0);
    unsafe {
        ha_yosida_free(y);
        ha_generator_free(g);
    }
}

#[test]
fn laplace_estimate_brackets_exact_value() {
    let g = generator();
    let mut y = ptr::null_mut();
    assert_eq!(unsafe { ha_yosida_new(g, 4.0, &mut y) }, HaStatus::Ok);
    let mut r = [0.0; 4];
    assert_eq!(unsafe { ha_approx_resolvent(g, 1.0, 4.0, r.as_mut_ptr(), 4) }, HaStatus::Ok);
    let exact = r[0] + r[1];
    let f = [1.0, 1.0];
    let (mut mean, mut se) = (0.0, 0.0);
    let status = unsafe { ha_simulate_laplace(y, 0, 1.0, f.as_ptr(), 2, 20000, 40.0, 7, &mut mean, &mut se) };
    assert_eq!(status, HaStatus::Ok);
    assert!((mean - exact).abs() <= 4.0 * se + 1e-12, "{mean} vs {exact} (se {se})");
    unsafe {
        ha_yosida_free(y);
        ha_generator_free(g);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = include_str!("../include/hunt_approx.h");
    for name in [
        "ha_version",
        "ha_last_error",
        "ha_generator_new",
        "ha_generator_free",
        "ha_resolvent",
        "ha_space_new",
        "ha_reduite",
        "ha_capacity",
        "ha_yosida_new",
        "ha_semigroup_apply",
        "ha_approx_resolvent",
        "ha_simulate_laplace",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
