//! Resolvent kernels with a cemetery, strict capacities via réduites,
//! Yosida-approximating semigroups and the Poisson-subordinated chains that
//! realize them, all on finite state spaces.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod kernels;
pub mod numerics;
pub mod potential;
pub mod runner;
pub mod selftest;
pub mod simulator;
pub mod space;
pub mod yosida;

pub use error::{Error, Result};
