//! Example generators.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SubMarkovGenerator;
use crate::error::{Error, Result};

/// Birth-death chain on `0..n`: `births[i]` is the rate `i → i+1`,
/// `deaths[i]` the rate `i+1 → i`, `killing[i]` the rate `i → Δ`.
pub fn model_birth_death(
    n: usize,
    births: &[f64],
    deaths: &[f64],
    killing: &[f64],
) -> Result<SubMarkovGenerator> {
    if n == 0 {
        return Err(Error::InvalidModel("birth-death chain needs at least one state".into()));
    }
    let edges = n - 1;
    if births.len() != edges || deaths.len() != edges || killing.len() != n {
        return Err(Error::InvalidModel(format!(
            "birth-death on {n} states needs {edges} births, {edges} deaths and {n} killing rates"
        )));
    }
    if births.iter().chain(deaths).chain(killing).any(|&r| !(r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidModel("birth-death rates must be finite and nonnegative".into()));
    }
    let mut l = DMatrix::zeros(n, n);
    for i in 0..edges {
        l[(i, i + 1)] = births[i];
        l[(i + 1, i)] = deaths[i];
    }
    for i in 0..n {
        let out: f64 = (0..n).filter(|&j| j != i).map(|j| l[(i, j)]).sum();
        l[(i, i)] = -(out + killing[i]);
    }
    SubMarkovGenerator::new(l)
}

/// `n` states, each killed at `rate` and otherwise frozen.
pub fn model_pure_killing(n: usize, rate: f64) -> Result<SubMarkovGenerator> {
    model_birth_death(n, &vec![0.0; n.saturating_sub(1)], &vec![0.0; n.saturating_sub(1)], &vec![rate; n])
}

/// Pointwise drift and diffusion coefficients on `[0, 1]`.
pub struct DiffusionCoefficients<'a> {
    pub drift: &'a dyn Fn(f64) -> f64,
    pub diffusion: &'a dyn Fn(f64) -> f64,
}

/// Finite-volume discretization of `a(x) u'' + b(x) u'` on `n` cells of
/// width `1/n`, killed at both ends of `[0, 1]`.
///
/// Drift is centered while the cell Péclet number `|b| h / a` stays at or
/// below 2 and upwinded beyond that, which keeps every off-diagonal rate
/// nonnegative. Rates that would leave the interval become killing.
pub fn model_absorbed_diffusion(n: usize, coeffs: &DiffusionCoefficients<'_>) -> Result<SubMarkovGenerator> {
    if n < 2 {
        return Err(Error::InvalidModel(format!("diffusion grid needs n >= 2 cells, got {n}")));
    }
    let h = 1.0 / n as f64;
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        let x = (i as f64 + 0.5) * h;
        let a = (coeffs.diffusion)(x);
        let b = (coeffs.drift)(x);
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidModel(format!("diffusion coefficient a({x}) = {a} must be positive")));
        }
        if !b.is_finite() {
            return Err(Error::InvalidModel(format!("drift b({x}) is not finite")));
        }
        let base = a / (h * h);
        let (right, left) = if b.abs() * h <= 2.0 * a {
            (base + b / (2.0 * h), base - b / (2.0 * h))
        } else {
            (base + b.max(0.0) / h, base + (-b).max(0.0) / h)
        };
        // Boundary rates are not written off-diagonal; they stay in the
        // diagonal as killing.
        if i + 1 < n {
            l[(i, i + 1)] = right;
        }
        if i > 0 {
            l[(i, i - 1)] = left;
        }
        l[(i, i)] = -(right + left);
    }
    SubMarkovGenerator::new(l)
}

/// Space-time chain: `layers` copies of `spatial`, with a one-way
/// transition from layer `k` to layer `k+1` at rate `layers` (unit speed
/// through a unit time window). Leaving the last layer kills the chain.
///
/// State `(k, x)` has index `k * spatial.len() + x`.
pub fn model_space_time_transport(spatial: &SubMarkovGenerator, layers: usize) -> Result<SubMarkovGenerator> {
    if layers < 2 {
        return Err(Error::InvalidModel(format!("space-time model needs >= 2 layers, got {layers}")));
    }
    let n0 = spatial.len();
    let n = n0 * layers;
    let speed = layers as f64;
    let mut l = DMatrix::zeros(n, n);
    for k in 0..layers {
        let off = k * n0;
        l.view_mut((off, off), (n0, n0)).copy_from(spatial.rates());
        for x in 0..n0 {
            l[(off + x, off + x)] -= speed;
            if k + 1 < layers {
                l[(off + x, off + n0 + x)] = speed;
            }
        }
    }
    SubMarkovGenerator::new(l)
}

/// Block-diagonal generator with no rates between the two blocks.
pub fn model_block_diagonal(first: &SubMarkovGenerator, second: &SubMarkovGenerator) -> SubMarkovGenerator {
    first.direct_sum(second)
}

/// Dense random generator: off-diagonal rates uniform on `[0, max_rate)`,
/// each state killed at an independent uniform rate on `[0, max_kill)`.
pub fn model_random(n: usize, max_rate: f64, max_kill: f64, seed: u64) -> Result<SubMarkovGenerator> {
    if n == 0 || !(max_rate >= 0.0) || !(max_kill >= 0.0) {
        return Err(Error::InvalidModel("random model needs n >= 1 and nonnegative rates".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut out = 0.0;
        for j in 0..n {
            if i != j {
                let r = rng.random::<f64>() * max_rate;
                l[(i, j)] = r;
                out += r;
            }
        }
        l[(i, i)] = -(out + rng.random::<f64>() * max_kill);
    }
    SubMarkovGenerator::new(l)
}
