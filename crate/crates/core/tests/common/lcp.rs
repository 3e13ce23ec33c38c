//! Complementarity-pattern enumeration oracle for the réduite.
//!
//! The smallest `v` with `v >= g` and `(αI − L)v >= 0` satisfies, at every
//! state, either `v(x) = g(x)` or `((αI − L)v)(x) = 0`. Every one of the
//! `2^n` patterns is solved as a linear system; the feasible solution with
//! the least total mass is the réduite.

use nalgebra::{DMatrix, DVector};

pub fn reduite_by_enumeration(rates: &DMatrix<f64>, alpha: f64, obstacle: &[f64]) -> Vec<f64> {
    let n = obstacle.len();
    assert!(n <= 16, "enumeration oracle is exponential in n");
    let g: Vec<f64> = obstacle.iter().map(|&x| x.max(0.0)).collect();
    let shifted = DMatrix::<f64>::identity(n, n) * alpha - rates;
    let scale = 1.0 + g.iter().cloned().fold(0.0, f64::max);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for pattern in 0u32..(1 << n) {
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for x in 0..n {
            if pattern & (1 << x) != 0 {
                a[(x, x)] = 1.0;
                b[x] = g[x];
            } else {
                a.set_row(x, &shifted.row(x));
            }
        }
        let Some(v) = a.lu().solve(&b) else { continue };
        let cert = &shifted * &v;
        let feasible = (0..n).all(|x| v[x] >= g[x] - 1e-11 * scale && cert[x] >= -1e-9 * scale);
        if !feasible {
            continue;
        }
        let mass: f64 = v.iter().sum();
        if best.as_ref().is_none_or(|(m, _)| mass < *m) {
            best = Some((mass, v.iter().copied().collect()));
        }
    }
    best.expect("some complementarity pattern is always feasible").1
}
