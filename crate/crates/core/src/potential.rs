//! Excessive functions, réduites and the strict capacity built from them.
//!
//! On a finite space a nonnegative `v` is `α`-excessive exactly when
//! `(αI − L) v >= 0`; the réduite of `f` on `U` is the smallest such `v`
//! dominating `f` on `U`, which is the value function of an optimal
//! stopping problem and is computed here by monotone value iteration.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{adjoint, resolvent, shifted_apply, SubMarkovGenerator};
use crate::space::{StateFunction, StateSet, StateSpace};

pub const EXCESSIVE_TOL: f64 = 1e-10;
pub const REDUITE_TOL: f64 = 1e-10;
pub const CAPACITY_TOL: f64 = 1e-9;
/// States of `U_n` with `e_n < 1 − N_THRESHOLD` form the patch set `N_n`.
pub const N_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessivityCheck {
    pub holds: bool,
    /// Smallest entry of `v` and of `(αI − L)v`; negative means violation.
    pub residual: f64,
}

/// `v >= -tol` and `(αI − L)v >= -tol` entrywise.
pub fn is_alpha_excessive(
    v: &StateFunction,
    l: &SubMarkovGenerator,
    alpha: f64,
    tol: f64,
) -> Result<ExcessivityCheck> {
    if v.len() != l.len() {
        return Err(Error::Dimension { expected: l.len(), got: v.len() });
    }
    let vv = v.to_vector();
    let cert = shifted_apply(l, alpha, &vv);
    let residual = vv.iter().chain(cert.iter()).copied().fold(f64::INFINITY, f64::min);
    Ok(ExcessivityCheck { holds: residual >= -tol, residual })
}

/// A nonnegative function together with its excessivity certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcessiveFunction {
    order: f64,
    values: StateFunction,
    certificate_residual: f64,
}

impl ExcessiveFunction {
    pub fn certify(values: StateFunction, l: &SubMarkovGenerator, order: f64, tol: f64) -> Result<Self> {
        let check = is_alpha_excessive(&values, l, order, tol)?;
        if !check.holds {
            return Err(Error::NotExcessive { alpha: order, residual: check.residual });
        }
        let vv = values.to_vector();
        let certificate_residual = shifted_apply(l, order, &vv).min();
        Ok(Self { order, values, certificate_residual })
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn values(&self) -> &StateFunction {
        &self.values
    }

    pub fn certificate_residual(&self) -> f64 {
        self.certificate_residual
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduiteOptions {
    /// Certified sup-norm distance to the fixed point at termination.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ReduiteOptions {
    fn default() -> Self {
        Self { tol: REDUITE_TOL, max_sweeps: 20_000_000 }
    }
}

/// The smallest `α`-excessive majorant of `f·1_U`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduite {
    pub base: StateFunction,
    pub set: StateSet,
    pub order: f64,
    pub values: StateFunction,
    pub sweeps: usize,
    /// A-posteriori bound on the distance to the exact réduite.
    pub error_bound: f64,
    /// `max_x |min(v − f·1_U, (αI − L)v)|`: zero exactly at the réduite.
    pub complementarity_residual: f64,
}

/// Sparse rows of the uniformized kernel `P = I + L/λ`.
struct UniformizedKernel {
    rows: Vec<Vec<(usize, f64)>>,
    discount: f64,
}

impl UniformizedKernel {
    fn new(l: &SubMarkovGenerator, alpha: f64) -> Self {
        let n = l.len();
        let max_exit = l.max_exit_rate();
        let lambda = if max_exit > 0.0 { 1.05 * max_exit } else { 1.0 };
        let rates = l.rates();
        let rows = (0..n)
            .map(|x| {
                (0..n)
                    .filter_map(|y| {
                        let p = if x == y { 1.0 + rates[(x, y)] / lambda } else { rates[(x, y)] / lambda };
                        (p != 0.0).then_some((y, p))
                    })
                    .collect()
            })
            .collect();
        Self { rows, discount: lambda / (lambda + alpha) }
    }
}

pub fn reduite(
    f: &StateFunction,
    set: &StateSet,
    l: &SubMarkovGenerator,
    alpha: f64,
    tol: f64,
) -> Result<Reduite> {
    reduite_with(f, set, l, alpha, &ReduiteOptions { tol, ..Default::default() })
}

/// Value iteration `v ← max(f·1_U, λ/(λ+α) · P v)` from `v₀ = max(f·1_U, 0)`.
///
/// Iterates increase monotonically to the fixed point. The loop stops once
/// the last sweep's change `δ` certifies `‖v* − v‖ ≤ δ q/(1−q) ≤ tol/2`,
/// with `q = λ/(λ+α)`.
pub fn reduite_with(
    f: &StateFunction,
    set: &StateSet,
    l: &SubMarkovGenerator,
    alpha: f64,
    opts: &ReduiteOptions,
) -> Result<Reduite> {
    let n = l.len();
    if f.len() != n || set.universe() != n {
        return Err(Error::Dimension { expected: n, got: if f.len() != n { f.len() } else { set.universe() } });
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("réduite order must be positive, got {alpha}")));
    }
    if f.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("réduite base must be bounded".into()));
    }
    let obstacle: Vec<f64> = (0..n)
        .map(|x| if set.contains(x) { f.eval(x).max(0.0) } else { 0.0 })
        .collect();
    let kernel = UniformizedKernel::new(l, alpha);
    let q = kernel.discount;
    let gain = q / (1.0 - q);
    let mut v = obstacle.clone();
    let mut next = vec![0.0; n];
    let mut sweeps = 0;
    let mut last_change = f64::INFINITY;
    if obstacle.iter().any(|&g| g > 0.0) {
        loop {
            if sweeps >= opts.max_sweeps {
                return Err(Error::NonConvergence { iterations: sweeps, last_change });
            }
            let mut change = 0.0_f64;
            for x in 0..n {
                let pv: f64 = kernel.rows[x].iter().map(|&(y, p)| p * v[y]).sum();
                let candidate = obstacle[x].max(q * pv);
                change = change.max(candidate - v[x]);
                next[x] = candidate.max(v[x]);
            }
            std::mem::swap(&mut v, &mut next);
            sweeps += 1;
            last_change = change;
            if change == 0.0 || change * gain <= 0.5 * opts.tol {
                break;
            }
        }
    } else {
        last_change = 0.0;
    }
    let values = StateFunction::from(v);
    let vv = values.to_vector();
    let cert = shifted_apply(l, alpha, &vv);
    let complementarity_residual = (0..n)
        .map(|x| (vv[x] - obstacle[x]).min(cert[x]).abs())
        .fold(0.0, f64::max);
    Ok(Reduite {
        base: f.clone(),
        set: set.clone(),
        order: alpha,
        values,
        sweeps,
        error_bound: last_change * gain,
        complementarity_residual,
    })
}

/// The réduite of the constant 1 on `U` at order 1, which is `e_U`.
pub fn equilibrium(set: &StateSet, l: &SubMarkovGenerator, tol: f64) -> Result<StateFunction> {
    Ok(reduite(&StateFunction::constant(l.len(), 1.0), set, l, 1.0, tol)?.values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumByDefinition {
    /// `(1 ∧ G_1(kφ))_U` for `k = 2^0, …, 2^{k_max}`.
    pub steps: Vec<StateFunction>,
    pub values: StateFunction,
    /// Sup distance to the réduite of 1 on `U`.
    pub agreement_residual: f64,
}

/// `e_U` as the increasing limit of `(1 ∧ G_1(kφ))_U` along `k = 2^j`.
///
/// Fails if the sequence decreases by more than twice the réduite
/// tolerance, or if the last step is further than `agree_tol` from the
/// réduite of 1.
pub fn e_u_by_definition(
    set: &StateSet,
    l: &SubMarkovGenerator,
    sp: &StateSpace,
    k_max: u32,
    agree_tol: f64,
) -> Result<EquilibriumByDefinition> {
    let n = l.len();
    if sp.len() != n {
        return Err(Error::Dimension { expected: n, got: sp.len() });
    }
    let tol = REDUITE_TOL.min(agree_tol / 10.0);
    let g1_phi = resolvent(l, 1.0)?.apply(&sp.phi())?;
    let mut steps: Vec<StateFunction> = Vec::with_capacity(k_max as usize + 1);
    for j in 0..=k_max {
        let k = 2f64.powi(j as i32);
        let obstacle = g1_phi.map(|v| (k * v).min(1.0));
        let r = reduite(&obstacle, set, l, 1.0, tol)?.values;
        if let Some(prev) = steps.last() {
            let drop = prev
                .values()
                .iter()
                .zip(r.values())
                .map(|(a, b)| a - b)
                .fold(0.0, f64::max);
            if drop > 2.0 * tol {
                return Err(Error::IncreasingLimitViolated { step: j as usize, amount: drop });
            }
        }
        steps.push(r);
    }
    let values = steps.last().cloned().expect("at least one step");
    let direct = equilibrium(set, l, tol)?;
    let agreement_residual = values
        .values()
        .iter()
        .zip(direct.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if agreement_residual > agree_tol {
        return Err(Error::Disagreement { residual: agreement_residual });
    }
    Ok(EquilibriumByDefinition { steps, values, agreement_residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    pub set: StateSet,
    pub e_u: StateFunction,
    pub value: f64,
    pub phi_used: StateFunction,
}

/// `∫ e_U φ dm` with `e_U` the réduite of 1 on `U`.
pub fn capacity(set: &StateSet, sp: &StateSpace, l: &SubMarkovGenerator) -> Result<CapacityReport> {
    let e_u = equilibrium(set, l, REDUITE_TOL)?;
    let phi = sp.phi();
    let value = sp.h_inner(&e_u, &phi)?;
    Ok(CapacityReport { set: set.clone(), e_u, value, phi_used: phi })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualBound {
    /// `E_1(u_U, Ĝ_1φ)` per sampled `u`; the first sample is `u ≡ 1`.
    pub samples: Vec<f64>,
    pub max: f64,
}

/// Lower bounds `E_1(u_U, Ĝ_1φ) = ((I − L) u_U, Ĝ_1φ)_H` over sampled
/// 1-excessive `u ≤ 1`: the constant 1 and random convex mixtures of
/// normalized potentials `G_1 g / ‖G_1 g‖_∞` with `g ≥ 0`.
pub fn capacity_dual_lower_bound(
    set: &StateSet,
    sp: &StateSpace,
    l: &SubMarkovGenerator,
    sample_count: usize,
    seed: u64,
) -> Result<DualBound> {
    let n = l.len();
    let g1 = resolvent(l, 1.0)?;
    let co_potential = adjoint(&g1, sp)?.apply(&sp.phi())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(sample_count.max(1));
    for i in 0..sample_count.max(1) {
        let u = if i == 0 {
            StateFunction::constant(n, 1.0)
        } else {
            random_normalized_potential(&g1, n, &mut rng)?
        };
        let w = reduite(&u, set, l, 1.0, REDUITE_TOL)?.values;
        let form_arg: StateFunction = shifted_apply(l, 1.0, &w.to_vector()).into();
        samples.push(sp.h_inner(&form_arg, &co_potential)?);
    }
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DualBound { samples, max })
}

fn random_normalized_potential(
    g1: &crate::kernels::ResolventKernel,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<StateFunction> {
    let parts = rng.random_range(1..=3);
    let weights: Vec<f64> = (0..parts).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    let scale = rng.random_range(0.2..=1.0);
    let mut acc = DVector::zeros(n);
    for w in weights {
        let g: StateFunction = (0..n)
            .map(|_| if rng.random_bool(0.5) { rng.random::<f64>() } else { 0.0 })
            .collect::<Vec<_>>()
            .into();
        let g = if g.max_value() <= 0.0 { StateFunction::constant(n, 1.0) } else { g };
        let p = g1.apply(&g)?;
        acc += p.to_vector() * (scale * w / total / p.max_value());
    }
    Ok(acc.into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovInequality {
    /// `Cap({u > ε})`
    pub lhs: f64,
    /// `ε^{-1} ∫ e_u φ dm`
    pub rhs: f64,
    pub holds: bool,
}

/// Capacity of a superlevel set against the integral of the réduite of `u`.
pub fn capacity_markov_inequality(
    u: &StateFunction,
    epsilon: f64,
    sp: &StateSpace,
    l: &SubMarkovGenerator,
) -> Result<MarkovInequality> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if u.min_value() < 0.0 {
        return Err(Error::InvalidArgument("u must be nonnegative".into()));
    }
    let n = l.len();
    let level = StateSet::superlevel(u, epsilon);
    let lhs = capacity(&level, sp, l)?.value;
    let e_u = reduite(u, &StateSet::full(n), l, 1.0, REDUITE_TOL)?.values;
    let rhs = sp.h_inner(&e_u, &sp.phi())? / epsilon;
    Ok(MarkovInequality { lhs, rhs, holds: lhs <= rhs + CAPACITY_TOL })
}

/// Grids for the `e_n` construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedGrids {
    pub alpha: Vec<f64>,
    pub l: Vec<f64>,
}

impl Default for ModifiedGrids {
    /// `α ∈ {2^0, 2^2, …, 2^60}` and `l ∈ {2^0, …, 2^24}`. The top of the
    /// `α` grid puts the truncation error `‖G_{α+1}(I − L) w‖` far below
    /// [`N_THRESHOLD`] for generators with rates up to ~10^5.
    fn default() -> Self {
        Self {
            alpha: crate::numerics::dyadic_grid(0, 60, 2),
            l: crate::numerics::dyadic_grid(0, 24, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedExcessiveSequence {
    pub sets: Vec<StateSet>,
    pub capacities: Vec<f64>,
    pub e: Vec<StateFunction>,
    /// `N_n = {x ∈ U_n : e_n(x) < 1}`
    pub patch_sets: Vec<StateSet>,
    /// `ê_n = e_n + 1_{N_n}`
    pub e_hat: Vec<StateFunction>,
    /// Largest `α G_{α+1} ê_n − ê_n` over the `α` grid, per `n`.
    pub excessivity_residuals: Vec<f64>,
}

/// Builds `e_n = max_{α, l} α G_{α+1} (1 ∧ G_1(lφ))_{U_n}` over the grids
/// and its patched version `ê_n`.
///
/// `α G_{α+1} w` is evaluated as `w − G_{α+1}(I − L) w`, which stays
/// accurate for very large `α`. Fails if the sets are not decreasing or if
/// an `ê_n` violates `α G_{α+1} ê_n ≤ ê_n + tol` on the grid.
pub fn build_modified_sequence(
    sets: &[StateSet],
    l: &SubMarkovGenerator,
    sp: &StateSpace,
    grids: &ModifiedGrids,
    tol: f64,
) -> Result<ModifiedExcessiveSequence> {
    let n = l.len();
    for (i, pair) in sets.windows(2).enumerate() {
        if !pair[1].is_subset_of(&pair[0]) {
            return Err(Error::SetsNotDecreasing { index: i + 1 });
        }
    }
    if sets.iter().any(|s| s.universe() != n) {
        return Err(Error::Dimension { expected: n, got: sets.iter().map(|s| s.universe()).find(|&u| u != n).unwrap_or(0) });
    }
    let g1_phi = resolvent(l, 1.0)?.apply(&sp.phi())?;
    let resolvents: Vec<(f64, std::sync::Arc<nalgebra::DMatrix<f64>>)> = grids
        .alpha
        .iter()
        .map(|&a| Ok((a, l.resolvent_matrix(a + 1.0)?)))
        .collect::<Result<_>>()?;

    let mut out = ModifiedExcessiveSequence {
        sets: sets.to_vec(),
        capacities: Vec::with_capacity(sets.len()),
        e: Vec::with_capacity(sets.len()),
        patch_sets: Vec::with_capacity(sets.len()),
        e_hat: Vec::with_capacity(sets.len()),
        excessivity_residuals: Vec::with_capacity(sets.len()),
    };
    for set in sets {
        let mut e_n = DVector::<f64>::zeros(n);
        let mut last_obstacle: Option<Vec<f64>> = None;
        for &level in &grids.l {
            let obstacle: Vec<f64> = (0..n)
                .map(|x| if set.contains(x) { (level * g1_phi.eval(x)).min(1.0) } else { 0.0 })
                .collect();
            if last_obstacle.as_ref() == Some(&obstacle) {
                continue;
            }
            let w = reduite(&obstacle.clone().into(), set, l, 1.0, REDUITE_TOL)?.values.to_vector();
            let excess = shifted_apply(l, 1.0, &w);
            for (_, g) in &resolvents {
                let approx = &w - g.as_ref() * &excess;
                e_n.zip_apply(&approx, |a, b| *a = a.max(b));
            }
            last_obstacle = Some(obstacle);
        }
        let patch = StateSet::from_predicate(n, |x| set.contains(x) && e_n[x] < 1.0 - N_THRESHOLD);
        // Deficits below the threshold are roundoff: those states are raised
        // to exactly 1 instead of being patched.
        let e_hat: DVector<f64> = DVector::from_fn(n, |x, _| {
            if patch.contains(x) {
                e_n[x] + 1.0
            } else if set.contains(x) {
                e_n[x].max(1.0)
            } else {
                e_n[x]
            }
        });
        if let Some(x) = (0..n).find(|&x| set.contains(x) && e_hat[x] < 1.0) {
            return Err(Error::InvariantViolated(format!("ê_n({x}) = {} < 1 on U_n", e_hat[x])));
        }
        let residual = resolvents
            .iter()
            .map(|(a, g)| (g.as_ref() * &e_hat * *a - &e_hat).max())
            .fold(f64::NEG_INFINITY, f64::max);
        if residual > tol {
            return Err(Error::InvariantViolated(format!(
                "α G_(α+1) ê_n exceeds ê_n by {residual:e} on set {set}"
            )));
        }
        let cap = sp.h_inner(&equilibrium(set, l, REDUITE_TOL)?, &sp.phi())?;
        out.capacities.push(cap);
        out.e.push(e_n.into());
        out.patch_sets.push(patch);
        out.e_hat.push(e_hat.into());
        out.excessivity_residuals.push(residual);
    }
    Ok(out)
}

#[cfg(test)]
#[path = "../tests/common/lcp.rs"]
mod lcp;

#[cfg(test)]
mod tests;
