//! Sub-Markov generators and the kernels derived from them: the resolvent
//! family `G_α = (αI − L)^{-1}`, its `m`-adjoint, and the cemetery-extended
//! kernel that moves the killed mass to `Δ`.

mod models;

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{max_abs_entry, sup_norm};
use crate::space::{StateFunction, StateSet, StateSpace};

pub use models::{
    model_absorbed_diffusion, model_birth_death, model_block_diagonal, model_pure_killing,
    model_random, model_space_time_transport, DiffusionCoefficients,
};

/// Entries of a kernel in `[-CLAMP_TOL, 0)` are roundoff and are set to 0
/// before the kernel is used as a sampling distribution.
pub const CLAMP_TOL: f64 = 1e-14;

/// The default resolvent grid `2^-4 ..= 2^10`.
pub fn default_alpha_grid() -> Vec<f64> {
    crate::numerics::dyadic_grid(-4, 10, 1)
}

/// Rate matrix of a killed continuous-time chain on `E`.
///
/// Off-diagonal entries are jump rates, the diagonal is minus the total
/// outflow including killing, so every row sums to at most zero.
#[derive(Debug, Clone)]
pub struct SubMarkovGenerator {
    rates: DMatrix<f64>,
    cache: Arc<RwLock<HashMap<u64, Arc<DMatrix<f64>>>>>,
}

impl PartialEq for SubMarkovGenerator {
    fn eq(&self, other: &Self) -> bool {
        self.rates == other.rates
    }
}

impl SubMarkovGenerator {
    pub fn new(rates: DMatrix<f64>) -> Result<Self> {
        let n = rates.nrows();
        if n == 0 || rates.ncols() != n {
            return Err(Error::InvalidGenerator(format!(
                "rate matrix must be square and non-empty, got {}x{}",
                rates.nrows(),
                rates.ncols()
            )));
        }
        if rates.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGenerator("non-finite rate".into()));
        }
        for x in 0..n {
            let mut scale = rates[(x, x)].abs();
            for y in 0..n {
                if x != y {
                    let r = rates[(x, y)];
                    if r < 0.0 {
                        return Err(Error::InvalidGenerator(format!(
                            "negative rate {r} from {x} to {y}"
                        )));
                    }
                    scale += r;
                }
            }
            let row_sum: f64 = rates.row(x).iter().sum();
            if row_sum > 1e-12 * scale.max(1.0) {
                return Err(Error::InvalidGenerator(format!(
                    "row {x} sums to {row_sum} > 0"
                )));
            }
        }
        Ok(Self { rates, cache: Arc::default() })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidGenerator("ragged rate matrix".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn len(&self) -> usize {
        self.rates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    /// Killing rate of every state (minus the row sum, never negative).
    pub fn killing_rates(&self) -> Vec<f64> {
        self.rates.row_iter().map(|r| (-r.iter().sum::<f64>()).max(0.0)).collect()
    }

    pub fn is_conservative(&self) -> bool {
        self.killing_rates().iter().all(|&k| k <= 1e-12)
    }

    /// `max_x |L(x,x)|`.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.len()).map(|i| self.rates[(i, i)].abs()).fold(0.0, f64::max)
    }

    pub fn apply(&self, f: &StateFunction) -> Result<StateFunction> {
        self.check_dim(f.len())?;
        Ok((&self.rates * f.to_vector()).into())
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::Dimension { expected: self.len(), got: len });
        }
        Ok(())
    }

    /// `(αI − L)^{-1}` by dense LU, cached per `α`.
    pub fn resolvent_matrix(&self, alpha: f64) -> Result<Arc<DMatrix<f64>>> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("resolvent order must be positive, got {alpha}")));
        }
        let key = alpha.to_bits();
        if let Some(m) = self.cache.read().expect("resolvent cache poisoned").get(&key) {
            return Ok(Arc::clone(m));
        }
        let n = self.len();
        let system = DMatrix::<f64>::identity(n, n) * alpha - &self.rates;
        let inverse = system.lu().try_inverse().ok_or(Error::Singular { alpha })?;
        if inverse.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular { alpha });
        }
        let inverse = Arc::new(inverse);
        self.cache
            .write()
            .expect("resolvent cache poisoned")
            .insert(key, Arc::clone(&inverse));
        Ok(inverse)
    }

    /// States reachable from `set` (including the set itself) along
    /// positive rates.
    pub fn reachable_from(&self, set: &StateSet) -> StateSet {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = set.indices().into_iter().collect();
        for &i in &queue {
            seen[i] = true;
        }
        while let Some(x) = queue.pop_front() {
            for (y, seen_y) in seen.iter_mut().enumerate() {
                if x != y && self.rates[(x, y)] > 0.0 && !*seen_y {
                    *seen_y = true;
                    queue.push_back(y);
                }
            }
        }
        StateSet::from_mask(seen)
    }

    /// First rate leaving `set`, if any.
    pub fn escape_edge(&self, set: &StateSet) -> Option<(usize, usize)> {
        let n = self.len();
        for x in set.indices() {
            for y in 0..n {
                if x != y && !set.contains(y) && self.rates[(x, y)] > 0.0 {
                    return Some((x, y));
                }
            }
        }
        None
    }

    /// Kolmogorov criterion: returns positive weights `π` with
    /// `π_x L(x,y) = π_y L(y,x)` for all `x ≠ y`, or the first edge on which
    /// every candidate fails.
    ///
    /// Weights are propagated along a spanning forest; every non-tree edge
    /// then closes a fundamental cycle whose rate products must balance.
    pub fn detailed_balance_weights(&self, rel_tol: f64) -> std::result::Result<Vec<f64>, (usize, usize)> {
        let n = self.len();
        let l = &self.rates;
        for x in 0..n {
            for y in 0..n {
                if x != y && (l[(x, y)] > 0.0) != (l[(y, x)] > 0.0) {
                    return Err((x, y));
                }
            }
        }
        let mut pi = vec![0.0; n];
        for root in 0..n {
            if pi[root] > 0.0 {
                continue;
            }
            pi[root] = 1.0;
            let mut queue = VecDeque::from([root]);
            while let Some(x) = queue.pop_front() {
                for y in 0..n {
                    if x != y && l[(x, y)] > 0.0 && pi[y] == 0.0 {
                        pi[y] = pi[x] * l[(x, y)] / l[(y, x)];
                        queue.push_back(y);
                    }
                }
            }
        }
        for x in 0..n {
            for y in (x + 1)..n {
                let lhs = pi[x] * l[(x, y)];
                let rhs = pi[y] * l[(y, x)];
                if (lhs - rhs).abs() > rel_tol * lhs.abs().max(rhs.abs()) {
                    return Err((x, y));
                }
            }
        }
        Ok(pi)
    }

    /// Block-diagonal direct sum of two generators.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let (a, b) = (self.len(), other.len());
        let mut rates = DMatrix::zeros(a + b, a + b);
        rates.view_mut((0, 0), (a, a)).copy_from(&self.rates);
        rates.view_mut((a, a), (b, b)).copy_from(&other.rates);
        Self { rates, cache: Arc::default() }
    }
}

/// `G_α = (αI − L)^{-1}` for one order `α`.
#[derive(Debug, Clone)]
pub struct ResolventKernel {
    alpha: f64,
    matrix: Arc<DMatrix<f64>>,
}

impl ResolventKernel {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, f: &StateFunction) -> Result<StateFunction> {
        if f.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), got: f.len() });
        }
        Ok((self.matrix.as_ref() * f.to_vector()).into())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.iter().sum()).collect()
    }

    /// Worst `α·rowsum − 1` and most negative entry.
    pub fn sub_markov_residuals(&self) -> (f64, f64) {
        let excess = self
            .row_sums()
            .iter()
            .map(|s| self.alpha * s - 1.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_entry = self.matrix.iter().copied().fold(f64::INFINITY, f64::min);
        (excess, min_entry)
    }

    /// Dense row-major dump with 17 significant digits.
    pub fn dump(&self) -> String {
        dump_matrix(&self.matrix)
    }
}

/// `G_α` for the generator `l`.
pub fn resolvent(l: &SubMarkovGenerator, alpha: f64) -> Result<ResolventKernel> {
    Ok(ResolventKernel { alpha, matrix: l.resolvent_matrix(alpha)? })
}

/// Resolvent kernel on `E ∪ {Δ}`: the defect `1/α − G_α(x, E)` of each row
/// is sent to the cemetery, and the cemetery row keeps all its mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedKernel {
    alpha: f64,
    matrix: DMatrix<f64>,
}

impl ExtendedKernel {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `(n+1)×(n+1)` matrix; the last index is the cemetery.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cemetery(&self) -> usize {
        self.matrix.nrows() - 1
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.iter().sum()).collect()
    }

    pub fn dump(&self) -> String {
        dump_matrix(&self.matrix)
    }
}

/// Builds the cemetery extension of `k`. Roundoff negatives are clamped;
/// a defect below `-tol` is an error.
pub fn extend_cemetery(k: &ResolventKernel, tol: f64) -> Result<ExtendedKernel> {
    let n = k.len();
    let alpha = k.alpha;
    let inv_alpha = 1.0 / alpha;
    let mut matrix = DMatrix::zeros(n + 1, n + 1);
    for x in 0..n {
        let mut row_sum = 0.0;
        for y in 0..n {
            let mut v = k.matrix[(x, y)];
            if v < 0.0 {
                if v < -CLAMP_TOL * inv_alpha.max(1.0) {
                    return Err(Error::InvariantViolated(format!(
                        "negative resolvent entry {v:e} at ({x},{y})"
                    )));
                }
                v = 0.0;
            }
            matrix[(x, y)] = v;
            row_sum += v;
        }
        let defect = inv_alpha - row_sum;
        if defect < -tol * inv_alpha.max(1.0) {
            return Err(Error::NegativeDefect { row: x, alpha, defect });
        }
        let defect = defect.max(0.0);
        matrix[(x, n)] = defect;
        // Re-balance so the row sums to exactly 1/α in floating point when
        // the defect was clamped.
        if defect == 0.0 && row_sum != inv_alpha {
            let scale = inv_alpha / row_sum;
            for y in 0..n {
                matrix[(x, y)] *= scale;
            }
        }
    }
    matrix[(n, n)] = inv_alpha;
    Ok(ExtendedKernel { alpha, matrix })
}

/// `Ĝ_α = M^{-1} G_α^T M` with `M = diag(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointResolvent {
    alpha: f64,
    matrix: DMatrix<f64>,
}

impl AdjointResolvent {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, f: &StateFunction) -> Result<StateFunction> {
        if f.len() != self.matrix.nrows() {
            return Err(Error::Dimension { expected: self.matrix.nrows(), got: f.len() });
        }
        Ok((&self.matrix * f.to_vector()).into())
    }
}

pub fn adjoint(k: &ResolventKernel, sp: &StateSpace) -> Result<AdjointResolvent> {
    let n = k.len();
    if sp.len() != n {
        return Err(Error::Dimension { expected: n, got: sp.len() });
    }
    let m = sp.mass();
    let g = k.matrix();
    let matrix = DMatrix::from_fn(n, n, |x, y| g[(y, x)] * m[y] / m[x]);
    Ok(AdjointResolvent { alpha: k.alpha, matrix })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventIdentityCheck {
    pub residual: f64,
    pub holds: bool,
}

/// Max-entry residual of `G_α − G_β − (β−α) G_α G_β`.
pub fn check_resolvent_identity(
    l: &SubMarkovGenerator,
    alpha: f64,
    beta: f64,
    tol: f64,
) -> Result<ResolventIdentityCheck> {
    let ga = l.resolvent_matrix(alpha)?;
    let gb = l.resolvent_matrix(beta)?;
    let lhs = ga.as_ref() - gb.as_ref();
    let rhs = (ga.as_ref() * gb.as_ref()) * (beta - alpha);
    let residual = max_abs_entry(&(lhs - rhs));
    Ok(ResolventIdentityCheck { residual, holds: residual <= tol })
}

/// `αI − L` applied to `v`.
pub(crate) fn shifted_apply(l: &SubMarkovGenerator, alpha: f64, v: &DVector<f64>) -> DVector<f64> {
    v * alpha - l.rates() * v
}

#[derive(Debug, Clone, PartialEq)]
pub struct YosidaBoundReport {
    /// Largest `β·G_{β+1}u − u` over the grid and all states.
    pub max_violation: f64,
    /// `(α, ‖α G_{α+1} u − u‖_∞)` along the grid.
    pub approach: Vec<(f64, f64)>,
    pub approach_monotone: bool,
    pub holds: bool,
}

/// Checks `β G_{β+1} u ≤ u` on `betas` for a 1-excessive `u`, and that
/// `α G_{α+1} u` approaches `u` monotonically along the same grid.
pub fn check_yosida_resolvent_bound(
    l: &SubMarkovGenerator,
    u: &StateFunction,
    betas: &[f64],
    tol: f64,
) -> Result<YosidaBoundReport> {
    if u.len() != l.len() {
        return Err(Error::Dimension { expected: l.len(), got: u.len() });
    }
    let uv = u.to_vector();
    let cert = shifted_apply(l, 1.0, &uv);
    let residual = uv.iter().chain(cert.iter()).copied().fold(f64::INFINITY, f64::min);
    if residual < -1e-10 {
        return Err(Error::NotExcessive { alpha: 1.0, residual });
    }
    let mut max_violation = f64::NEG_INFINITY;
    let mut approach = Vec::with_capacity(betas.len());
    for &beta in betas {
        let g = l.resolvent_matrix(beta + 1.0)?;
        let image = g.as_ref() * &uv * beta;
        let diff = &image - &uv;
        max_violation = max_violation.max(diff.max());
        approach.push((beta, sup_norm(&diff)));
    }
    let scale = u.sup_norm().max(1.0);
    let approach_monotone = approach
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + 1e-13 * scale);
    Ok(YosidaBoundReport {
        max_violation,
        approach,
        approach_monotone,
        holds: max_violation <= tol * scale && approach_monotone,
    })
}

pub fn dump_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", m.nrows(), m.ncols()).unwrap();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
    out
}

/// Parses the output of [`ResolventKernel::dump`].
pub fn parse_matrix_dump(text: &str) -> Result<DMatrix<f64>> {
    let bad = |msg: String| Error::InvalidArgument(format!("kernel dump: {msg}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(format!("bad header '{header}'"))))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(bad(format!("bad header '{header}'")));
    }
    let mut data = Vec::with_capacity(dims[0] * dims[1]);
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("row {i}: bad number '{t}'"))))
            .collect::<Result<_>>()?;
        if row.len() != dims[1] {
            return Err(bad(format!("row {i} has {} entries", row.len())));
        }
        data.extend(row);
    }
    if data.len() != dims[0] * dims[1] {
        return Err(bad("wrong number of rows".into()));
    }
    Ok(DMatrix::from_row_slice(dims[0], dims[1], &data))
}

#[cfg(test)]
mod tests;
