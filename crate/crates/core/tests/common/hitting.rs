//! Exact `E_x[e^{−q τ_U}]` for a bounded generator, from the linear system
//! `(q − A)h = 0` off `U`, `h = 1` on `U`, `h(Δ) = 0`.

use nalgebra::{DMatrix, DVector};

pub fn hitting_laplace_exact(a: &DMatrix<f64>, in_set: &[bool], q: f64) -> Vec<f64> {
    let n = a.nrows();
    let free: Vec<usize> = (0..n).filter(|&x| !in_set[x]).collect();
    let m = free.len();
    let mut sys = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for (i, &x) in free.iter().enumerate() {
        for (j, &y) in free.iter().enumerate() {
            sys[(i, j)] = if x == y { q - a[(x, y)] } else { -a[(x, y)] };
        }
        rhs[i] = (0..n).filter(|&y| in_set[y]).map(|y| a[(x, y)]).sum();
    }
    let sol = if m == 0 { DVector::zeros(0) } else { sys.lu().solve(&rhs).expect("hitting system is nonsingular") };
    let mut h = vec![1.0; n];
    for (i, &x) in free.iter().enumerate() {
        h[x] = sol[i];
    }
    h
}
