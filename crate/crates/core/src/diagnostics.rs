//! The metric `ρ` built from resolvent images `g_n = G_1 u_n`, and the
//! statistics used to probe weak convergence of `X^β` as `β → ∞`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{resolvent, SubMarkovGenerator};
use crate::numerics::CompensatedSum;
use crate::simulator::{derive_seed, path_rng, sample_path, MCEstimate, PathSample, SIGMA_BAND};
use crate::space::{StateFunction, StateSet, StateSpace};
use crate::yosida::{exp_generator, yosida_generator, YosidaApprox};

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatingFamily {
    u_list: Vec<StateFunction>,
    g_list: Vec<StateFunction>,
    weights: Vec<f64>,
}

impl SeparatingFamily {
    /// `g_n = G_1 u_n` with weights `2^{−n}`, `n = 1, 2, …`. Fails unless the
    /// `g_n` separate every pair of points of `E ∪ {Δ}`.
    pub fn from_functions(l: &SubMarkovGenerator, u_list: Vec<StateFunction>) -> Result<Self> {
        let n = l.len();
        if u_list.is_empty() {
            return Err(Error::InvalidArgument("separating family needs at least one function".into()));
        }
        for u in &u_list {
            if u.len() != n {
                return Err(Error::Dimension { expected: n, got: u.len() });
            }
            if u.values().iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument("family functions must be finite and nonnegative".into()));
            }
        }
        let g1 = resolvent(l, 1.0)?;
        let g_list = u_list.iter().map(|u| g1.apply(u)).collect::<Result<Vec<_>>>()?;
        let weights = (1..=u_list.len()).map(|k| 0.5f64.powi(k as i32)).collect();
        let fam = Self { u_list, g_list, weights };
        if let Some((x, y)) = fam.unseparated_pair() {
            return Err(Error::SeparationFailure { count: fam.len(), x, y });
        }
        Ok(fam)
    }

    pub fn len(&self) -> usize {
        self.u_list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_list.is_empty()
    }

    pub fn u_list(&self) -> &[StateFunction] {
        &self.u_list
    }

    pub fn g_list(&self) -> &[StateFunction] {
        &self.g_list
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of states, excluding the cemetery.
    pub fn states(&self) -> usize {
        self.g_list[0].len()
    }

    /// First pair `x < y` in `E ∪ {Δ}` on which every `g_n` agrees.
    pub fn unseparated_pair(&self) -> Option<(usize, usize)> {
        let points = self.states() + 1;
        (0..points)
            .flat_map(|x| (x + 1..points).map(move |y| (x, y)))
            .find(|&(x, y)| self.g_list.iter().all(|g| g.eval(x) == g.eval(y)))
    }
}

/// The constant `1` followed by indicators of states `0, 1, …`, cut at
/// `count` functions.
pub fn build_separating_family(sp: &StateSpace, l: &SubMarkovGenerator, count: usize) -> Result<SeparatingFamily> {
    let n = l.len();
    if sp.len() != n {
        return Err(Error::Dimension { expected: n, got: sp.len() });
    }
    if count == 0 {
        return Err(Error::InvalidArgument("family count must be at least 1".into()));
    }
    let u_list = std::iter::once(StateFunction::constant(n, 1.0))
        .chain((0..n).map(|k| StateFunction::indicator(n, &StateSet::from_mask((0..n).map(|x| x == k).collect()))))
        .take(count)
        .collect();
    SeparatingFamily::from_functions(l, u_list)
}

/// `ρ(x, y) = Σ_n 2^{−n} (|g_n(x) − g_n(y)| ∧ 1)` on `E ∪ {Δ}`.
pub fn rho_distance(x: usize, y: usize, fam: &SeparatingFamily) -> f64 {
    fam.g_list
        .iter()
        .zip(&fam.weights)
        .map(|(g, w)| w * (g.eval(x) - g.eval(y)).abs().min(1.0))
        .collect::<CompensatedSum>()
        .value()
}

/// `ρ` on all pairs of `E ∪ {Δ}`; the cemetery is the last index.
pub fn rho_matrix(fam: &SeparatingFamily) -> DMatrix<f64> {
    let p = fam.states() + 1;
    DMatrix::from_fn(p, p, |x, y| rho_distance(x, y, fam))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeRow {
    pub beta: f64,
    /// Max over test functions and times of `|E[f(X^β_t)] − e^{tL}f(x)|`.
    pub discrepancy: f64,
    /// Standard error of the estimate attaining the discrepancy.
    pub std_error: f64,
    /// The same maximum with the mean replaced by `e^{tL^β}f(x)`.
    pub exact_discrepancy: f64,
    pub mean_jumps: f64,
    pub max_rho_jump: f64,
    pub rho_modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub x: usize,
    pub t_list: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub rows: Vec<ProbeRow>,
}

impl ConvergenceReport {
    /// Steps where the discrepancy grows by more than the combined band.
    pub fn inversions(&self) -> usize {
        self.rows
            .windows(2)
            .filter(|w| w[1].discrepancy > w[0].discrepancy + SIGMA_BAND * (w[0].std_error + w[1].std_error))
            .count()
    }

    /// Final discrepancy at most a quarter of the first, up to noise.
    pub fn contracts_by_four(&self) -> bool {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.discrepancy <= a.discrepancy / 4.0 + SIGMA_BAND * b.std_error,
            _ => false,
        }
    }
}

/// Simulates `X^β` from `x` for each `β` and compares `E[g_n(X^β_t)]` with
/// `e^{tL} g_n(x)` over the family and `t_list`.
pub fn weak_convergence_probe(
    l: &SubMarkovGenerator,
    x: usize,
    beta_list: &[f64],
    t_list: &[f64],
    fam: &SeparatingFamily,
    n_paths: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    if beta_list.is_empty() || beta_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("beta list must be nonempty and increasing".into()));
    }
    if t_list.is_empty() || t_list.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("probe times must be positive".into()));
    }
    if x >= l.len() || fam.states() != l.len() {
        return Err(Error::InvalidArgument(format!("probe state {x} outside E")));
    }
    let horizon = t_list.iter().copied().fold(0.0, f64::max);
    let target: Vec<Vec<f64>> = t_list
        .iter()
        .map(|&t| {
            let p = exp_generator(l.rates(), t);
            fam.g_list.iter().map(|g| (p.row(x) * g.to_vector())[0]).collect()
        })
        .collect();
    let rows = beta_list
        .iter()
        .enumerate()
        .map(|(k, &beta)| {
            let ya = yosida_generator(l, beta)?;
            let s = derive_seed(seed, &[k as u64]);
            let paths: Vec<PathSample> = (0..n_paths as u64)
                .into_par_iter()
                .map(|i| sample_path(x, &ya, horizon, &mut path_rng(s, i)))
                .collect::<Result<_>>()?;
            let mut discrepancy = 0.0;
            let mut std_error = 0.0;
            let mut exact_discrepancy: f64 = 0.0;
            for (ti, &t) in t_list.iter().enumerate() {
                let pb = exp_generator(ya.generator(), t);
                for (gi, g) in fam.g_list.iter().enumerate() {
                    let values: Vec<f64> = paths.iter().map(|p| g.eval(p.state_at(t))).collect();
                    let est = MCEstimate::from_values(&values, s)?;
                    let d = (est.mean - target[ti][gi]).abs();
                    if d > discrepancy {
                        discrepancy = d;
                        std_error = est.std_error;
                    }
                    let exact = (pb.row(x) * g.to_vector())[0];
                    exact_discrepancy = exact_discrepancy.max((exact - target[ti][gi]).abs());
                }
            }
            let stats = path_regularity_stats(&paths, fam, &ya, horizon / 64.0)?;
            Ok(ProbeRow {
                beta,
                discrepancy,
                std_error,
                exact_discrepancy,
                mean_jumps: stats.jumps.mean,
                max_rho_jump: stats.max_rho_jump,
                rho_modulus: stats.rho_modulus,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport { x, t_list: t_list.to_vec(), n_paths, seed, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRegularityStats {
    pub n_paths: usize,
    /// Jump counts per path.
    pub jumps: MCEstimate,
    pub max_jumps: usize,
    /// Total `ρ`-variation per path.
    pub rho_variation: MCEstimate,
    pub mean_rho_jump: f64,
    pub max_rho_jump: f64,
    /// Counts of `ρ`-jump sizes in ten equal bins over `[0, 1)`.
    pub rho_jump_histogram: [usize; 10],
    pub delta: f64,
    /// Largest `ρ`-oscillation over clusters of jumps spaced at most `δ`
    /// apart, an estimate of the càdlàg modulus `w'(δ)`.
    pub rho_modulus: f64,
    /// `max ρ(x, y)` over pairs with positive one-step probability.
    pub adjacent_bound: f64,
    pub within_bound: bool,
}

/// Jump activity and `ρ`-oscillation of a batch of paths of one `X^β`.
pub fn path_regularity_stats(
    paths: &[PathSample],
    fam: &SeparatingFamily,
    ya: &YosidaApprox,
    delta: f64,
) -> Result<PathRegularityStats> {
    if paths.len() < 2 {
        return Err(Error::InvalidArgument("need at least two paths".into()));
    }
    let (beta, horizon) = (paths[0].beta, paths[0].horizon);
    if paths.iter().any(|p| p.beta != beta || p.horizon != horizon) || beta != ya.beta() {
        return Err(Error::InvalidArgument("paths must share beta and horizon".into()));
    }
    let rho = rho_matrix(fam);
    let step = ya.chain_step().matrix();
    let mut adjacent_bound: f64 = 0.0;
    for x in 0..step.nrows() {
        for y in 0..step.ncols() {
            if step[(x, y)] > 0.0 {
                adjacent_bound = adjacent_bound.max(rho[(x, y)]);
            }
        }
    }
    let mut histogram = [0usize; 10];
    let mut size_sum = CompensatedSum::new();
    let mut size_count = 0usize;
    let mut max_rho_jump: f64 = 0.0;
    let mut rho_modulus: f64 = 0.0;
    let mut variation = Vec::with_capacity(paths.len());
    for p in paths {
        let mut v = CompensatedSum::new();
        for w in p.states.windows(2) {
            let r = rho[(w[0], w[1])];
            v.add(r);
            size_sum.add(r);
            size_count += 1;
            max_rho_jump = max_rho_jump.max(r);
            histogram[((r * 10.0) as usize).min(9)] += 1;
        }
        variation.push(v.value());
        rho_modulus = rho_modulus.max(cluster_oscillation(p, &rho, delta));
    }
    let counts: Vec<f64> = paths.iter().map(|p| p.jump_count() as f64).collect();
    Ok(PathRegularityStats {
        n_paths: paths.len(),
        jumps: MCEstimate::from_values(&counts, 0)?,
        max_jumps: paths.iter().map(PathSample::jump_count).max().unwrap_or(0),
        rho_variation: MCEstimate::from_values(&variation, 0)?,
        mean_rho_jump: if size_count == 0 { 0.0 } else { size_sum.value() / size_count as f64 },
        max_rho_jump,
        rho_jump_histogram: histogram,
        delta,
        rho_modulus,
        adjacent_bound,
        within_bound: max_rho_jump <= adjacent_bound,
    })
}

fn cluster_oscillation(p: &PathSample, rho: &DMatrix<f64>, delta: f64) -> f64 {
    let times = &p.jump_times;
    let mut worst: f64 = 0.0;
    let mut k = 0;
    while k < times.len() {
        let mut end = k;
        while end + 1 < times.len() && times[end + 1] - times[end] <= delta {
            end += 1;
        }
        // Only clusters of two or more jumps force oscillation inside one
        // partition interval.
        if end > k {
            let visited = &p.states[k..=end + 1];
            for (i, &a) in visited.iter().enumerate() {
                for &b in &visited[i + 1..] {
                    worst = worst.max(rho[(a, b)]);
                }
            }
        }
        k = end + 1;
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorBoundRow {
    pub index: usize,
    /// `‖g_n − u_n‖_∞`
    pub bound: f64,
    /// `max_β ‖L^β g_n‖_∞`
    pub sup_over_beta: f64,
    pub holds: bool,
}

/// Checks `‖L^β g_n‖_∞ ≤ ‖g_n − u_n‖_∞` for every member and every `β`,
/// which follows from `L^β g_n = βG_β(g_n − u_n)`.
pub fn generator_bound_check(l: &SubMarkovGenerator, fam: &SeparatingFamily, betas: &[f64]) -> Result<Vec<GeneratorBoundRow>> {
    let gens = betas.par_iter().map(|&b| yosida_generator(l, b)).collect::<Result<Vec<_>>>()?;
    Ok(fam
        .u_list
        .iter()
        .zip(&fam.g_list)
        .enumerate()
        .map(|(index, (u, g))| {
            let bound = g.zip_with(u, |a, b| a - b).sup_norm();
            let gv = g.to_vector();
            let sup_over_beta = gens
                .iter()
                .map(|ya| crate::numerics::sup_norm(&(ya.generator() * &gv)))
                .fold(0.0, f64::max);
            let holds = sup_over_beta <= bound * (1.0 + 1e-9) + 1e-12;
            GeneratorBoundRow { index, bound, sup_over_beta, holds }
        })
        .collect())
}
