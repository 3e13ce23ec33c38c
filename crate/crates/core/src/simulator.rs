//! Monte Carlo for the Yosida processes `X^β_t = Y^β(Π^β_t)`: a chain with
//! step `βR_β` run at the arrival times of a rate-`β` Poisson clock.
//!
//! Every path draws from its own ChaCha stream `(seed, path index)`, and
//! estimators reduce per-path values in index order with compensated
//! summation, so results do not depend on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::SubMarkovGenerator;
use crate::numerics::CompensatedSum;
use crate::space::{StateFunction, StateSet};
use crate::yosida::{approx_semigroup, approx_semigroup_exp, ChainStep, YosidaApprox};

/// Width of every Monte Carlo acceptance band, in standard errors.
pub const SIGMA_BAND: f64 = 4.0;

/// Slack granted to the deterministic 2-excessivity check.
pub const TWO_EXCESSIVE_TOL: f64 = 1e-9;

/// Mixes `parts` into `seed` (splitmix64 finalizer per part), giving
/// independent master seeds for separate cells of one experiment.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(seed, |acc, &p| {
        let mut z = acc ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}

/// The random stream of path `index` under master seed `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub beta: f64,
    pub horizon: f64,
    /// Clock arrivals in `(0, T]`, including those after absorption.
    pub jump_times: Vec<f64>,
    /// State on each inter-arrival interval; `states[0]` is the start.
    pub states: Vec<usize>,
    /// First time the path sits at the cemetery, if it does by `T`.
    pub absorbed_at: Option<f64>,
    cemetery: usize,
}

impl PathSample {
    /// Builds a path from an explicit record, checking its shape.
    pub fn from_record(beta: f64, horizon: f64, cemetery: usize, jump_times: Vec<f64>, states: Vec<usize>) -> Result<Self> {
        if states.len() != jump_times.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} jump times need {} states, got {}",
                jump_times.len(),
                jump_times.len() + 1,
                states.len()
            )));
        }
        let increasing = jump_times.windows(2).all(|w| w[0] < w[1]);
        let inside = jump_times.iter().all(|&t| t > 0.0 && t <= horizon);
        if !increasing || !inside {
            return Err(Error::InvalidArgument("jump times must increase inside (0, T]".into()));
        }
        if states.iter().any(|&s| s > cemetery) {
            return Err(Error::InvalidArgument("path visits a state beyond the cemetery".into()));
        }
        let first = states.iter().position(|&s| s == cemetery);
        if let Some(k) = first {
            if states[k..].iter().any(|&s| s != cemetery) {
                return Err(Error::InvalidArgument("path leaves the cemetery".into()));
            }
        }
        let absorbed_at = first.map(|k| if k == 0 { 0.0 } else { jump_times[k - 1] });
        Ok(Self { beta, horizon, jump_times, states, absorbed_at, cemetery })
    }

    pub fn start(&self) -> usize {
        self.states[0]
    }

    pub fn cemetery(&self) -> usize {
        self.cemetery
    }

    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    /// `X_t`, right-continuous.
    pub fn state_at(&self, t: f64) -> usize {
        self.states[self.jump_times.partition_point(|&s| s <= t)]
    }

    /// `X_{t−}`.
    pub fn left_limit_at(&self, t: f64) -> usize {
        self.states[self.jump_times.partition_point(|&s| s < t)]
    }

    /// `(state, start, end)` for each constant piece, the last ending at `T`.
    pub fn pieces(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.states.iter().enumerate().map(move |(k, &s)| {
            let a = if k == 0 { 0.0 } else { self.jump_times[k - 1] };
            let b = self.jump_times.get(k).copied().unwrap_or(self.horizon);
            (s, a, b)
        })
    }
}

/// One step of the chain from `x` on `E ∪ {Δ}`.
pub fn sample_chain_step<R: Rng + ?Sized>(x: usize, step: &ChainStep, rng: &mut R) -> usize {
    let cemetery = step.cemetery();
    if x >= cemetery {
        return cemetery;
    }
    let u: f64 = rng.random();
    let row = step.cumulative_row(x);
    row.partition_point(|&c| c <= u).min(cemetery)
}

/// A path of `X^β` on `[0, T]` started at `x`.
pub fn sample_path<R: Rng + ?Sized>(x: usize, ya: &YosidaApprox, horizon: f64, rng: &mut R) -> Result<PathSample> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive and finite, got {horizon}")));
    }
    let cemetery = ya.len();
    if x > cemetery {
        return Err(Error::InvalidArgument(format!("start state {x} outside E ∪ {{Δ}}")));
    }
    let clock = Exp::new(ya.beta()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let step = ya.chain_step();
    let mut t = 0.0;
    let mut current = x;
    let mut jump_times = Vec::new();
    let mut states = vec![x];
    let mut absorbed_at = (x == cemetery).then_some(0.0);
    loop {
        t += clock.sample(rng);
        if t > horizon {
            break;
        }
        current = sample_chain_step(current, step, rng);
        if current == cemetery && absorbed_at.is_none() {
            absorbed_at = Some(t);
        }
        jump_times.push(t);
        states.push(current);
    }
    Ok(PathSample { beta: ya.beta(), horizon, jump_times, states, absorbed_at, cemetery })
}

/// `n_paths` independent paths from `x`, path `i` drawn from stream `i`.
pub fn sample_paths(x: usize, ya: &YosidaApprox, horizon: f64, n_paths: usize, seed: u64) -> Result<Vec<PathSample>> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| sample_path(x, ya, horizon, &mut path_rng(seed, i)))
        .collect()
}

/// First `t` in `[0, T]` with `X_t ∈ U`, or `None` if there is none.
pub fn hitting_time(p: &PathSample, set: &StateSet) -> Option<f64> {
    p.pieces().find(|&(s, _, _)| s < p.cemetery && set.contains(s)).map(|(_, a, _)| a)
}

/// Outcome of following a path only until it enters `U` or dies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirstEntry {
    At(f64),
    /// Absorbed first, or `U` is empty.
    Never,
    /// Neither by the horizon.
    Unresolved,
}

/// Runs the path of [`sample_path`] on the same random stream, stopping at
/// the first entry to `U` or to the cemetery.
pub fn first_entry<R: Rng + ?Sized>(
    x: usize,
    ya: &YosidaApprox,
    set: &StateSet,
    horizon: f64,
    rng: &mut R,
) -> Result<FirstEntry> {
    let cemetery = ya.len();
    if x > cemetery {
        return Err(Error::InvalidArgument(format!("start state {x} outside E ∪ {{Δ}}")));
    }
    if set.is_empty() {
        return Ok(FirstEntry::Never);
    }
    let clock = Exp::new(ya.beta()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut t = 0.0;
    let mut current = x;
    loop {
        if current == cemetery {
            return Ok(FirstEntry::Never);
        }
        if set.contains(current) {
            return Ok(FirstEntry::At(t));
        }
        t += clock.sample(rng);
        if t > horizon {
            return Ok(FirstEntry::Unresolved);
        }
        current = sample_chain_step(current, ya.chain_step(), rng);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl MCEstimate {
    /// Mean and standard error of per-path values, summed in index order.
    pub fn from_values(values: &[f64], seed: u64) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need at least two paths, got {n}")));
        }
        let mean = values.iter().copied().collect::<CompensatedSum>().value() / n as f64;
        let ss = values.iter().map(|v| (v - mean).powi(2)).collect::<CompensatedSum>().value();
        let std_error = (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt();
        Ok(Self { mean, std_error, n_paths: n, seed })
    }

    /// `|mean − target| ≤ 4·std_error + slack`.
    pub fn agrees_with(&self, target: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= SIGMA_BAND * self.std_error + slack
    }
}

fn per_path_values<F>(n_paths: usize, seed: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    (0..n_paths as u64).into_par_iter().map(|i| f(&mut path_rng(seed, i))).collect()
}

/// Estimates `E_x[f(X^β_t)]`, with `f(Δ) = 0`.
pub fn mc_marginal(x: usize, f: &StateFunction, ya: &YosidaApprox, t: f64, n_paths: usize, seed: u64) -> Result<MCEstimate> {
    check_len(f, ya)?;
    if t == 0.0 {
        return MCEstimate::from_values(&vec![f.eval(x); n_paths], seed);
    }
    let values = per_path_values(n_paths, seed, |rng| Ok(f.eval(sample_path(x, ya, t, rng)?.state_at(t))))?;
    MCEstimate::from_values(&values, seed)
}

/// Path count, horizon `T` and master seed for one estimator run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McRun {
    pub n_paths: usize,
    pub horizon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceEstimate {
    pub estimate: MCEstimate,
    /// `e^{−αT}‖f‖_∞/α`, the mass beyond the horizon.
    pub bias_bound: f64,
}

/// Estimates `E_x[∫₀^∞ e^{−αt} f(X_t) dt]` with each path integrated exactly
/// over its constant pieces up to `T`.
pub fn mc_laplace(
    x: usize,
    alpha: f64,
    f: &StateFunction,
    ya: &YosidaApprox,
    run: McRun,
    bias_budget: f64,
) -> Result<LaplaceEstimate> {
    let McRun { n_paths, horizon, seed } = run;
    check_len(f, ya)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let bias_bound = (-alpha * horizon).exp() * f.sup_norm() / alpha;
    if bias_bound > bias_budget {
        return Err(Error::BiasBudget { horizon, budget: bias_budget });
    }
    let values = per_path_values(n_paths, seed, |rng| {
        let p = sample_path(x, ya, horizon, rng)?;
        let mut acc = CompensatedSum::new();
        for (s, a, b) in p.pieces() {
            let v = f.eval(s);
            if v != 0.0 {
                acc.add(v * ((-alpha * a).exp() - (-alpha * b).exp()) / alpha);
            }
        }
        Ok(acc.value())
    })?;
    Ok(LaplaceEstimate { estimate: MCEstimate::from_values(&values, seed)?, bias_bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitBoundResult {
    pub x: usize,
    /// Mean of the per-path values, cut-off skeletons counted at their
    /// worst case.
    pub estimate: MCEstimate,
    /// Part of the estimate owed to cut-off skeletons; at most `e^{−2T}`.
    pub tail: f64,
    pub e_hat: f64,
    pub verdict: bool,
}

impl ExitBoundResult {
    pub fn upper_edge(&self) -> f64 {
        self.estimate.mean + SIGMA_BAND * self.estimate.std_error
    }
}

/// Share of the plain step kept in the guided proposal; bounds every
/// likelihood ratio by `1/DEFENSIVE_SHARE`.
const DEFENSIVE_SHARE: f64 = 0.1;

/// Step chain tilted toward a guide `g`: from `y` the proposal is
/// `q(y, z) = (1 − η) P(y, z) g(z) / (Pg)(y) + η P(y, z)` with likelihood
/// ratio `P(y, z)/q(y, z)` stored alongside.
struct GuidedStep {
    cumulative: Vec<Vec<f64>>,
    ratio: Vec<Vec<f64>>,
}

impl GuidedStep {
    fn new(step: &ChainStep, guide: &StateFunction) -> Self {
        let m = step.matrix();
        let cemetery = step.cemetery();
        let g = |z: usize| if z < cemetery { guide.eval(z).max(0.0) } else { 0.0 };
        let mut cumulative = Vec::with_capacity(cemetery);
        let mut ratio = Vec::with_capacity(cemetery);
        for y in 0..cemetery {
            let pg: f64 = (0..=cemetery).map(|z| m[(y, z)] * g(z)).collect::<CompensatedSum>().value();
            let mut acc = CompensatedSum::new();
            let mut cum = Vec::with_capacity(cemetery + 1);
            let mut lr = Vec::with_capacity(cemetery + 1);
            for z in 0..=cemetery {
                let tilt = if pg > 0.0 { (1.0 - DEFENSIVE_SHARE) * g(z) / pg + DEFENSIVE_SHARE } else { 1.0 };
                acc.add(m[(y, z)] * tilt);
                cum.push(acc.value());
                lr.push(1.0 / tilt);
            }
            cumulative.push(cum);
            ratio.push(lr);
        }
        Self { cumulative, ratio }
    }

    /// Next state and its likelihood ratio.
    fn sample<R: Rng + ?Sized>(&self, y: usize, rng: &mut R) -> (usize, f64) {
        let row = &self.cumulative[y];
        let u = rng.random::<f64>() * row[row.len() - 1];
        let z = row.partition_point(|&c| c <= u).min(row.len() - 1);
        (z, self.ratio[y][z])
    }
}

/// Tests `E^β_x[e^{−2τ_U}] ≤ ê(x)` by simulation.
///
/// `τ_U` is the `K`-th clock arrival, `K` the first step of the skeleton
/// in `U`, and `E[e^{−2T_k}] = r^k` with `r = β/(β+2)`, so the clock is
/// integrated out and each path contributes `r^K` times its likelihood
/// ratio. Skeletons are drawn from the step chain tilted toward `ê`
/// itself; the estimator stays unbiased for any guide, and when `ê` is
/// 2-excessive (`r Pê ≤ ê`) the weighted values telescope to at most
/// `ê(x)/ê(Y_K)`, which keeps the variance small even when entering `U`
/// is very unlikely.
///
/// The horizon `T` caps the skeleton at the first `K` with `r^K ≤ e^{−2T}`.
/// A skeleton still alive there counts its weight times `r` as if it
/// entered on the next step; the mean of these terms is reported as `tail`
/// and is at most `e^{−2T}`.
pub fn mc_exit_bound(
    x: usize,
    set: &StateSet,
    e_hat: &StateFunction,
    ya: &YosidaApprox,
    run: McRun,
) -> Result<ExitBoundResult> {
    let McRun { n_paths, horizon, seed } = run;
    check_len(e_hat, ya)?;
    require_beta_at_least_two(ya)?;
    if set.universe() != ya.len() {
        return Err(Error::Dimension { expected: ya.len(), got: set.universe() });
    }
    let cemetery = ya.len();
    if x > cemetery {
        return Err(Error::InvalidArgument(format!("start state {x} outside E ∪ {{Δ}}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let e = e_hat.eval(x);
    if x == cemetery || set.is_empty() || set.contains(x) {
        let v = f64::from(u8::from(x < cemetery && set.contains(x)));
        let estimate = MCEstimate::from_values(&vec![v; n_paths], seed)?;
        return Ok(ExitBoundResult { x, estimate, tail: 0.0, e_hat: e, verdict: v <= e + 1e-9 });
    }
    let beta = ya.beta();
    let r = beta / (beta + 2.0);
    let step_cap = (2.0 * horizon / -r.ln()).ceil() as usize;
    let guided = GuidedStep::new(ya.chain_step(), e_hat);
    let pairs: Vec<(f64, f64)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut weight = 1.0;
            let mut y = x;
            for _ in 0..step_cap {
                let (z, lr) = guided.sample(y, &mut rng);
                weight *= r * lr;
                if z == cemetery {
                    return (0.0, 0.0);
                }
                if set.contains(z) {
                    return (weight, 0.0);
                }
                y = z;
            }
            (weight * r, weight * r)
        })
        .collect();
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let estimate = MCEstimate::from_values(&values, seed)?;
    let tail = pairs.iter().map(|p| p.1).collect::<CompensatedSum>().value() / n_paths as f64;
    let upper = estimate.mean + SIGMA_BAND * estimate.std_error;
    Ok(ExitBoundResult { x, estimate, tail, e_hat: e, verdict: upper <= e + 1e-9 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoExcessiveReport {
    /// Max over the grid and states of `e^{−2t}P^β_t ê − ê`.
    pub max_violation: f64,
    /// `(t, ‖e^{−2t}P^β_t ê − ê‖_∞)` in increasing `t`.
    pub approach: Vec<(f64, f64)>,
    pub approach_monotone: bool,
    pub holds: bool,
}

/// Deterministic check that `ê` is 2-excessive for `P^β`.
pub fn check_two_excessive(e_hat: &StateFunction, ya: &YosidaApprox, t_grid: &[f64]) -> Result<TwoExcessiveReport> {
    check_len(e_hat, ya)?;
    require_beta_at_least_two(ya)?;
    let mut grid = t_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    if grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument("time grid must be nonnegative".into()));
    }
    let scale = 1.0 + e_hat.sup_norm();
    let mut max_violation = f64::NEG_INFINITY;
    let mut approach = Vec::with_capacity(grid.len());
    for &t in &grid {
        let pt = match approx_semigroup(ya, t, e_hat, 1e-15) {
            Ok(s) => s.values,
            Err(Error::SeriesCap { .. }) => approx_semigroup_exp(ya, t, e_hat)?,
            Err(e) => return Err(e),
        };
        let damp = (-2.0 * t).exp();
        let diff = pt.zip_with(e_hat, |p, e| damp * p - e);
        max_violation = max_violation.max(diff.max_value());
        approach.push((t, diff.sup_norm()));
    }
    if grid.is_empty() {
        max_violation = 0.0;
    }
    let approach_monotone = approach.windows(2).all(|w| w[0].1 <= w[1].1 + 1e-12 * scale);
    let holds = max_violation <= TWO_EXCESSIVE_TOL * scale && approach_monotone;
    Ok(TwoExcessiveReport { max_violation, approach, approach_monotone, holds })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub paths_checked: usize,
    pub violations: usize,
    pub holds: bool,
}

/// Checks that paths started in `S ∪ {Δ}` never leave it, after confirming
/// that no rate of `L` leads out of `S`.
pub fn invariance_check(l: &SubMarkovGenerator, paths: &[PathSample], set: &StateSet) -> Result<InvarianceReport> {
    if let Some((from, to)) = l.escape_edge(set) {
        return Err(Error::InvariancePremise { from, to });
    }
    let inside = |s: usize| s >= set.universe() || set.contains(s);
    let started: Vec<&PathSample> = paths.iter().filter(|p| inside(p.start())).collect();
    let violations = started.iter().filter(|p| !p.states.iter().all(|&s| inside(s))).count();
    Ok(InvarianceReport { paths_checked: started.len(), violations, holds: violations == 0 })
}

fn check_len(f: &StateFunction, ya: &YosidaApprox) -> Result<()> {
    if f.len() != ya.len() {
        return Err(Error::Dimension { expected: ya.len(), got: f.len() });
    }
    Ok(())
}

fn require_beta_at_least_two(ya: &YosidaApprox) -> Result<()> {
    if ya.beta() < 2.0 {
        return Err(Error::InvalidArgument(format!("this check needs beta >= 2, got {}", ya.beta())));
    }
    Ok(())
}
