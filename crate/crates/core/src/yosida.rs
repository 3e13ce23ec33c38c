//! Yosida approximation: the bounded generators `L^β = β(βG_β − I)`, their
//! semigroups, the closed-form approximate resolvent, and convergence
//! studies as `β → ∞`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{extend_cemetery, resolvent, SubMarkovGenerator};
use crate::numerics::{loglog_slope, max_abs_entry, sup_norm};
use crate::space::{StateFunction, StateSpace};

/// Largest number of Poisson terms the series path will sum.
pub const SERIES_TERM_CAP: usize = 200_000;

/// `β·R_β` on `E ∪ {Δ}` with the defect sent to the cemetery; every row is
/// a probability vector. Rows carry cumulative sums for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStep {
    matrix: DMatrix<f64>,
    cumulative: Vec<Vec<f64>>,
}

impl ChainStep {
    fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(matrix.nrows());
        for (row, r) in matrix.row_iter().enumerate() {
            let mut acc = 0.0;
            let c: Vec<f64> = r
                .iter()
                .map(|&p| {
                    acc += p;
                    acc
                })
                .collect();
            if (acc - 1.0).abs() > 1e-12 {
                return Err(Error::KernelCorruption { row, sum: acc });
            }
            cumulative.push(c);
        }
        Ok(Self { matrix, cumulative })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cemetery(&self) -> usize {
        self.matrix.nrows() - 1
    }

    pub(crate) fn cumulative_row(&self, x: usize) -> &[f64] {
        &self.cumulative[x]
    }
}

#[derive(Debug, Clone)]
pub struct YosidaApprox {
    beta: f64,
    generator: DMatrix<f64>,
    step_on_e: DMatrix<f64>,
    chain_step: ChainStep,
}

impl YosidaApprox {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `L^β` on `E`.
    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    /// `β G_β` restricted to `E`.
    pub fn step_on_e(&self) -> &DMatrix<f64> {
        &self.step_on_e
    }

    pub fn chain_step(&self) -> &ChainStep {
        &self.chain_step
    }

    pub fn len(&self) -> usize {
        self.generator.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `L^β` as a sub-Markov generator.
    pub fn as_generator(&self) -> Result<SubMarkovGenerator> {
        SubMarkovGenerator::new(self.generator.clone())
    }

    /// Max entry of `L^β L − L L^β`.
    pub fn commutator_residual(&self, l: &SubMarkovGenerator) -> f64 {
        let a = &self.generator * l.rates();
        let b = l.rates() * &self.generator;
        max_abs_entry(&(a - b))
    }
}

/// `L^β = β(βG_β − I)` and the chain step `βR_β` on `E ∪ {Δ}`.
pub fn yosida_generator(l: &SubMarkovGenerator, beta: f64) -> Result<YosidaApprox> {
    let g = resolvent(l, beta)?;
    let n = l.len();
    let step_on_e = g.matrix() * beta;
    let generator = (&step_on_e - DMatrix::<f64>::identity(n, n)) * beta;
    let ext = extend_cemetery(&g, 1e-12)?;
    let chain_step = ChainStep::new(ext.matrix() * beta)?;
    Ok(YosidaApprox { beta, generator, step_on_e, chain_step })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonWeights {
    pub mean: f64,
    /// `P(N = k)` for `k = 0..=K`.
    pub weights: Vec<f64>,
    /// `P(N > K)`.
    pub tail: f64,
}

/// Poisson(`mean`) weights truncated at the smallest `K` whose tail mass is
/// below `tail_tol`.
///
/// A Chernoff bound `P(N ≥ k) ≤ exp(k − μ − k ln(k/μ))` picks a safe upper
/// index; the exact tail is then summed from there downward.
pub fn poisson_weights(mean: f64, tail_tol: f64) -> Result<PoissonWeights> {
    if !(mean >= 0.0 && mean.is_finite()) || !(tail_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Poisson truncation needs mean >= 0 and tail_tol > 0, got {mean}, {tail_tol}"
        )));
    }
    if mean == 0.0 {
        return Ok(PoissonWeights { mean, weights: vec![1.0], tail: 0.0 });
    }
    let chernoff = |k: f64| -> f64 {
        if k <= mean {
            1.0
        } else {
            (k - mean - k * (k / mean).ln()).exp()
        }
    };
    let guard = tail_tol * 1e-6;
    let mut upper = mean.ceil() as usize + 1;
    while chernoff(upper as f64 + 1.0) > guard {
        upper += 1 + upper / 16;
        if upper > SERIES_TERM_CAP {
            return Err(Error::SeriesCap { cap: SERIES_TERM_CAP, mean });
        }
    }
    let ln_mean = mean.ln();
    let mut log_w = -mean;
    let mut weights = Vec::with_capacity(upper + 1);
    weights.push(log_w.exp());
    for k in 1..=upper {
        log_w += ln_mean - (k as f64).ln();
        weights.push(log_w.exp());
    }
    // tails[k] = P(N > k), accumulated from the small end.
    let mut tail = chernoff(upper as f64 + 1.0);
    let mut cut = upper;
    for k in (0..upper).rev() {
        let next_tail = tail + weights[k + 1];
        if next_tail >= tail_tol {
            cut = k + 1;
            break;
        }
        tail = next_tail;
        cut = k;
    }
    weights.truncate(cut + 1);
    Ok(PoissonWeights { mean, weights, tail })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupEvaluation {
    pub t: f64,
    pub values: StateFunction,
    /// Poisson mass left out of the series.
    pub truncation_bound: f64,
    pub terms: usize,
}

/// `P^β_t f = e^{−βt} Σ_k (βt)^k/k! (βR_β)^k f`, truncated by Poisson tail
/// mass.
pub fn approx_semigroup(ya: &YosidaApprox, t: f64, f: &StateFunction, tail_tol: f64) -> Result<SemigroupEvaluation> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    if f.len() != ya.len() {
        return Err(Error::Dimension { expected: ya.len(), got: f.len() });
    }
    let pw = poisson_weights(ya.beta * t, tail_tol)?;
    let mut power = f.to_vector();
    let mut acc = &power * pw.weights[0];
    for &w in &pw.weights[1..] {
        power = &ya.step_on_e * &power;
        acc += &power * w;
    }
    Ok(SemigroupEvaluation { t, values: acc.into(), truncation_bound: pw.tail, terms: pw.weights.len() })
}

/// `exp(t·A)` by scaling and squaring with Padé approximants.
pub fn exp_generator(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    if t == 0.0 {
        return DMatrix::identity(a.nrows(), a.ncols());
    }
    (a * t).exp()
}

/// Admissible gap between [`approx_semigroup`] and
/// [`approx_semigroup_exp`]: the series truncation plus a rounding
/// allowance of `8(1 + βt)` units of `ε‖f‖_∞`, which both evaluations
/// accumulate linearly in `βt`.
pub fn series_exp_tolerance(ev: &SemigroupEvaluation, beta: f64, f_norm: f64) -> f64 {
    (ev.truncation_bound + 8.0 * (1.0 + beta * ev.t) * f64::EPSILON) * f_norm.max(f64::MIN_POSITIVE)
}

/// `exp(t L^β) f` through the matrix exponential.
pub fn approx_semigroup_exp(ya: &YosidaApprox, t: f64, f: &StateFunction) -> Result<StateFunction> {
    if f.len() != ya.len() {
        return Err(Error::Dimension { expected: ya.len(), got: f.len() });
    }
    Ok((exp_generator(&ya.generator, t) * f.to_vector()).into())
}

/// `R^β_α = (β/(α+β))² G_{αβ/(α+β)} + (α+β)^{-1} I`.
pub fn approx_resolvent(l: &SubMarkovGenerator, alpha: f64, beta: f64) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha and beta must be positive, got {alpha}, {beta}")));
    }
    let n = l.len();
    let s = alpha + beta;
    let g = l.resolvent_matrix(alpha * beta / s)?;
    Ok(g.as_ref() * (beta / s).powi(2) + DMatrix::<f64>::identity(n, n) / s)
}

/// `E^(β)(u, v) = β (u − βG_β u, v)_H`.
pub fn approx_form_eval(
    l: &SubMarkovGenerator,
    sp: &StateSpace,
    beta: f64,
    u: &StateFunction,
    v: &StateFunction,
) -> Result<f64> {
    let g = resolvent(l, beta)?;
    let smoothed = g.apply(u)?;
    let diff = u.zip_with(&smoothed, |a, b| beta * (a - beta * b));
    sp.h_inner(&diff, v)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ConvergenceRow {
    pub beta: f64,
    pub sup_error: f64,
    pub l2_error: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConvergenceTable {
    pub t: f64,
    pub rows: Vec<ConvergenceRow>,
    pub sup_order: Option<f64>,
    pub l2_order: Option<f64>,
}

/// Errors `‖exp(tL^β) f − exp(tL) f‖` in sup and `L²(m)` norms over
/// `betas`, with fitted log-log slopes.
pub fn convergence_table(
    l: &SubMarkovGenerator,
    sp: &StateSpace,
    f: &StateFunction,
    t: f64,
    betas: &[f64],
) -> Result<ConvergenceTable> {
    if betas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("beta list must be increasing".into()));
    }
    if f.len() != l.len() || sp.len() != l.len() {
        return Err(Error::Dimension { expected: l.len(), got: f.len() });
    }
    let fv = f.to_vector();
    let target = exp_generator(l.rates(), t) * &fv;
    let rows: Vec<ConvergenceRow> = betas
        .par_iter()
        .map(|&beta| {
            let ya = yosida_generator(l, beta)?;
            let approx = exp_generator(ya.generator(), t) * &fv;
            let diff: DVector<f64> = approx - &target;
            let d: StateFunction = (&diff).into();
            let l2 = sp.h_inner(&d, &d)?.max(0.0).sqrt();
            Ok(ConvergenceRow { beta, sup_error: sup_norm(&diff), l2_error: l2 })
        })
        .collect::<Result<_>>()?;
    let bs: Vec<f64> = rows.iter().map(|r| r.beta).collect();
    let sup: Vec<f64> = rows.iter().map(|r| r.sup_error).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.l2_error).collect();
    Ok(ConvergenceTable { t, sup_order: loglog_slope(&bs, &sup), l2_order: loglog_slope(&bs, &l2), rows })
}
