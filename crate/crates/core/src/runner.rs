//! The experiment runner behind the `hunt-approx` binary.
//!
//! Each subcommand writes plain CSV, two-column plot data and a
//! `manifest.json` into one output directory. Result files depend only on
//! the config, seed and tolerance scale; wall-clock data and the worker
//! count live in the manifest's `run` section.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{self, ConfigError, Experiment, ToleranceSpec};
use crate::diagnostics::{build_separating_family, generator_bound_check, weak_convergence_probe};
use crate::kernels::{check_resolvent_identity, dump_matrix, extend_cemetery, resolvent};
use crate::numerics::CompensatedSum;
use crate::potential::{
    build_modified_sequence, capacity, capacity_dual_lower_bound, e_u_by_definition, ModifiedExcessiveSequence,
};
use crate::selftest::run_selftest;
use crate::simulator::{
    check_two_excessive, derive_seed, invariance_check, mc_exit_bound, mc_marginal, path_rng, sample_path, McRun,
    MCEstimate, PathSample, SIGMA_BAND,
};
use crate::space::{StateFunction, StateSet};
use crate::yosida::{
    approx_semigroup, approx_semigroup_exp, convergence_table, series_exp_tolerance, yosida_generator,
};

/// Version tag of the path dump format.
pub const PATH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Capacity,
    YosidaConverge,
    Simulate,
    ExitBound,
    Report,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Capacity => "capacity",
            Self::YosidaConverge => "yosida-converge",
            Self::Simulate => "simulate",
            Self::ExitBound => "exit-bound",
            Self::Report => "report",
            Self::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Multiplies every tolerance; for exploratory runs only.
    pub tol_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { config: None, seed: None, out: None, threads: None, tol_scale: 1.0 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] crate::Error),
    #[error("check failed: {0}")]
    Violation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 2 for config errors, 3 for numerical failures and failed checks,
    /// 1 for I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) | Self::Violation(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub out_dir: Option<PathBuf>,
    pub files: Vec<String>,
    /// Human-readable summary lines.
    pub summary: Vec<String>,
}

struct Bundle {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Bundle {
    fn create(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        self.files.push((name.to_string(), sha256(contents.as_bytes())));
        Ok(())
    }
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Runs one subcommand, on a dedicated pool when `threads` is set.
pub fn run(cmd: Command, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    if !(opts.tol_scale > 0.0 && opts.tol_scale.is_finite()) {
        return Err(ConfigError { message: format!("--tol-scale must be positive, got {}", opts.tol_scale) }.into());
    }
    match opts.threads {
        Some(0) => Err(ConfigError { message: "--threads must be at least 1".into() }.into()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| RunError::Violation(format!("cannot build thread pool: {e}")))?
            .install(|| run_here(cmd, opts)),
        None => run_here(cmd, opts),
    }
}

fn run_here(cmd: Command, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let started = unix_ms();
    if cmd == Command::Selftest {
        return selftest(opts, started);
    }
    let path = opts
        .config
        .as_ref()
        .ok_or_else(|| ConfigError { message: format!("{} needs --config", cmd.name()) })?;
    let mut exp = config::load(path)?;
    if let Some(seed) = opts.seed {
        exp.config.seed = seed;
    }
    let tol = exp.config.tolerances.scaled(opts.tol_scale);
    let dir = opts
        .out
        .clone()
        .or_else(|| exp.config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&exp.config.name));
    let mut bundle = Bundle::create(&dir)?;
    let mut summary = Vec::new();
    let violations = match cmd {
        Command::Capacity => run_capacity(&exp, &tol, opts.tol_scale, &mut bundle, &mut summary)?,
        Command::YosidaConverge => run_yosida(&exp, &tol, &mut bundle, &mut summary)?,
        Command::Simulate => run_simulate(&exp, &tol, &mut bundle, &mut summary)?,
        Command::ExitBound => run_exit_bound(&exp, &tol, &mut bundle, &mut summary)?,
        Command::Report => run_report(&exp, &mut bundle, &mut summary)?,
        Command::Selftest => unreachable!("handled above"),
    };
    write_manifest(cmd, Some((&exp, path)), &tol, opts.tol_scale, &mut bundle, started)?;
    finish(bundle, summary, violations)
}

fn finish(bundle: Bundle, summary: Vec<String>, violations: Vec<String>) -> Result<RunOutcome, RunError> {
    if !violations.is_empty() {
        return Err(RunError::Violation(violations.join("; ")));
    }
    Ok(RunOutcome {
        out_dir: Some(bundle.dir),
        files: bundle.files.into_iter().map(|(f, _)| f).collect(),
        summary,
    })
}

fn write_manifest(
    cmd: Command,
    exp: Option<(&Experiment, &Path)>,
    tol: &ToleranceSpec,
    tol_scale: f64,
    bundle: &mut Bundle,
    started: u128,
) -> std::io::Result<()> {
    let outputs: Vec<_> = bundle.files.iter().map(|(f, h)| json!({ "file": f, "sha256": h })).collect();
    let mut manifest = json!({
        "tool": "hunt-approx",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cmd.name(),
        "tol_scale": tol_scale,
        "tolerances": tol,
        "outputs": outputs,
        "run": {
            "started_unix_ms": started as u64,
            "finished_unix_ms": unix_ms() as u64,
            "threads": rayon::current_num_threads(),
        },
    });
    if let Some((exp, path)) = exp {
        let c = &exp.config;
        let extra = json!({
            "experiment": c.name,
            "config": { "path": path.display().to_string(), "sha256": exp.config_hash },
            "model_sha256": sha256(dump_matrix(exp.generator.rates()).as_bytes()),
            "states": exp.generator.len(),
            "seed": c.seed,
            "grids": c.grids,
            "probe": c.probe,
            "monte_carlo": c.monte_carlo,
        });
        if let (Some(m), Some(e)) = (manifest.as_object_mut(), extra.as_object()) {
            m.extend(e.clone());
        }
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(bundle.dir.join("manifest.json"), text)
}

fn selftest(opts: &RunOptions, started: u128) -> Result<RunOutcome, RunError> {
    let cases = run_selftest();
    let mut csv = String::from("case,passed,detail\n");
    let mut summary = Vec::new();
    let mut violations = Vec::new();
    for c in &cases {
        writeln!(csv, "{},{},{}", c.name, c.passed, c.detail.replace([',', '\n'], " ")).unwrap();
        summary.push(format!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name));
        if !c.passed {
            violations.push(format!("selftest case '{}' failed: {}", c.name, c.detail));
        }
    }
    summary.push(format!("{}/{} selftest cases passed", cases.len() - violations.len(), cases.len()));
    let Some(dir) = &opts.out else {
        if violations.is_empty() {
            return Ok(RunOutcome { out_dir: None, files: Vec::new(), summary });
        }
        return Err(RunError::Violation(violations.join("; ")));
    };
    let mut bundle = Bundle::create(dir)?;
    bundle.write("selftest.csv", &csv)?;
    let tol = ToleranceSpec::default().scaled(opts.tol_scale);
    write_manifest(Command::Selftest, None, &tol, opts.tol_scale, &mut bundle, started)?;
    finish(bundle, summary, violations)
}

fn fmt_set(set: &StateSet) -> String {
    set.indices().iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// Modified excessive sequence for the configured `U_n`.
pub fn modified_sequence(exp: &Experiment, tol: &ToleranceSpec) -> crate::Result<ModifiedExcessiveSequence> {
    build_modified_sequence(&exp.sequence, &exp.generator, &exp.space, &exp.config.grids.modified(), tol.excessive)
}

fn run_capacity(
    exp: &Experiment,
    tol: &ToleranceSpec,
    tol_scale: f64,
    bundle: &mut Bundle,
    summary: &mut Vec<String>,
) -> Result<Vec<String>, RunError> {
    let l = &exp.generator;
    let sp = &exp.space;
    let n = l.len();
    let mut violations = Vec::new();

    bundle.write("generator.txt", &dump_matrix(l.rates()))?;
    let g1 = resolvent(l, 1.0)?;
    bundle.write("resolvent_alpha1.txt", &g1.dump())?;
    bundle.write("extended_alpha1.txt", &extend_cemetery(&g1, 1e-12)?.dump())?;

    let alphas = &exp.config.grids.alpha;
    let pairs: Vec<(f64, f64)> =
        alphas.iter().enumerate().flat_map(|(i, &a)| alphas[i..].iter().map(move |&b| (a, b))).collect();
    let checks = pairs
        .par_iter()
        .map(|&(a, b)| check_resolvent_identity(l, a, b, tol.resolvent).map(|c| (a, b, c)))
        .collect::<crate::Result<Vec<_>>>()?;
    let mut csv = String::from("alpha,beta,residual,holds\n");
    let mut worst: f64 = 0.0;
    for (a, b, c) in &checks {
        writeln!(csv, "{a},{b},{},{}", c.residual, c.holds).unwrap();
        worst = worst.max(c.residual);
        if !c.holds {
            violations.push(format!("resolvent identity residual {:e} at ({a}, {b})", c.residual));
        }
    }
    bundle.write("resolvent_identity.csv", &csv)?;
    summary.push(format!("resolvent identity: max residual {worst:e} over {} pairs", checks.len()));

    let mut csv = String::from("alpha,max_alpha_rowsum_minus_one,min_entry,max_extended_row_error\n");
    for &a in alphas {
        let k = resolvent(l, a)?;
        let (excess, min_entry) = k.sub_markov_residuals();
        let ext = extend_cemetery(&k, 1e-12)?;
        let row_err = ext.row_sums().iter().take(n).map(|s| (s - 1.0 / a).abs()).fold(0.0, f64::max);
        writeln!(csv, "{a},{excess},{min_entry},{row_err}").unwrap();
        if excess > 1e-12 * tol_scale || min_entry < 0.0 {
            violations.push(format!("sub-Markov bound fails at alpha = {a}: excess {excess:e}, min entry {min_entry:e}"));
        }
        if row_err > 1e-13 * tol_scale * (1.0 / a).max(1.0) {
            violations.push(format!("extended rows miss 1/alpha by {row_err:e} at alpha = {a}"));
        }
    }
    bundle.write("sub_markov.csv", &csv)?;

    if exp.sequence.is_empty() {
        summary.push("no set sequence configured; capacities skipped".into());
        return Ok(violations);
    }
    let seq = modified_sequence(exp, tol)?;
    let g1_phi = g1.apply(&sp.phi())?;
    let k_max = ((1.0 / g1_phi.min_value()).log2().ceil().max(0.0) as u32 + 1).min(60);
    let seed = exp.config.seed;
    let rows = exp
        .sequence
        .par_iter()
        .enumerate()
        .map(|(i, set)| {
            let cap = capacity(set, sp, l)?.value;
            let def = e_u_by_definition(set, l, sp, k_max, 1e-8)?;
            let cap_def = sp.integrate(&def.values.zip_with(&sp.phi(), |e, p| e * p))?;
            let dual = capacity_dual_lower_bound(set, sp, l, 32, derive_seed(seed, &[i as u64]))?.max;
            Ok((cap, cap_def, dual))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let first = seq.capacities[0];
    let mut csv = String::from(
        "n,size,capacity,capacity_by_definition,dual_bound,ratio_to_first,max_e_hat,max_e_hat_off_set,patch_size,excessivity_residual\n",
    );
    let mut plot = String::from("# n capacity_ratio\n");
    for (i, (set, &(cap, cap_def, dual))) in exp.sequence.iter().zip(&rows).enumerate() {
        let e_hat = &seq.e_hat[i];
        let off = (0..n).filter(|&x| !set.contains(x)).map(|x| e_hat.eval(x)).fold(0.0, f64::max);
        let ratio = if first > 0.0 { seq.capacities[i] / first } else { 0.0 };
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            set.count(),
            cap,
            cap_def,
            dual,
            ratio,
            e_hat.max_value().max(0.0),
            off,
            seq.patch_sets[i].count(),
            seq.excessivity_residuals[i]
        )
        .unwrap();
        writeln!(plot, "{} {}", i + 1, ratio).unwrap();
        if (cap - cap_def).abs() > 1e-8 * tol_scale {
            violations.push(format!("U_{}: capacity routes differ by {:e}", i + 1, (cap - cap_def).abs()));
        }
        if dual > cap + 1e-9 * tol_scale {
            violations.push(format!("U_{}: dual bound {dual} exceeds capacity {cap}", i + 1));
        }
        if let Some(x) = set.indices().into_iter().find(|&x| e_hat.eval(x) < 1.0) {
            violations.push(format!("U_{}: modified function below 1 at state {x}", i + 1));
        }
    }
    bundle.write("capacity.csv", &csv)?;
    bundle.write("capacity.dat", &plot)?;

    let mut csv = String::from("n,state,e,e_hat\n");
    for (i, (e, e_hat)) in seq.e.iter().zip(&seq.e_hat).enumerate() {
        for x in 0..n {
            writeln!(csv, "{},{},{},{}", i + 1, x, e.eval(x), e_hat.eval(x)).unwrap();
        }
    }
    bundle.write("e_hat.csv", &csv)?;
    let mut sets = String::from("n,states\n");
    for (i, set) in exp.sequence.iter().enumerate() {
        writeln!(sets, "{},{}", i + 1, fmt_set(set)).unwrap();
    }
    bundle.write("sets.csv", &sets)?;
    summary.push(format!(
        "capacities: {}",
        seq.capacities.iter().map(|c| format!("{c:.6}")).collect::<Vec<_>>().join(" ")
    ));
    Ok(violations)
}

/// Test function of the convergence studies: the ramp `(x + 1)/n`.
pub fn ramp(n: usize) -> StateFunction {
    (0..n).map(|x| (x + 1) as f64 / n as f64).collect::<Vec<_>>().into()
}

fn run_yosida(
    exp: &Experiment,
    tol: &ToleranceSpec,
    bundle: &mut Bundle,
    summary: &mut Vec<String>,
) -> Result<Vec<String>, RunError> {
    let l = &exp.generator;
    let f = ramp(l.len());
    let betas = &exp.config.grids.beta;
    let mut csv = String::from("t,beta,sup_error,l2_error,sup_order,l2_order,series_gap,series_tail\n");
    let mut violations = Vec::new();
    for &t in &exp.config.grids.t {
        let table = convergence_table(l, &exp.space, &f, t, betas)?;
        let gaps = betas
            .par_iter()
            .map(|&beta| {
                let ya = yosida_generator(l, beta)?;
                let series = approx_semigroup(&ya, t, &f, tol.series_tail)?;
                let expm = approx_semigroup_exp(&ya, t, &f)?;
                let gap = series.values.zip_with(&expm, |a, b| (a - b).abs()).max_value();
                Ok((gap, series.truncation_bound, series_exp_tolerance(&series, beta, f.sup_norm())))
            })
            .collect::<crate::Result<Vec<_>>>()?;
        let order = |o: Option<f64>| o.map_or("nan".to_string(), |v| v.to_string());
        let mut plot = String::from("# log10_beta log10_sup_error\n");
        for (r, &(gap, tail, allowed)) in table.rows.iter().zip(&gaps) {
            writeln!(
                csv,
                "{t},{},{},{},{},{},{gap},{tail}",
                r.beta,
                r.sup_error,
                r.l2_error,
                order(table.sup_order),
                order(table.l2_order)
            )
            .unwrap();
            if r.sup_error > 0.0 {
                writeln!(plot, "{} {}", r.beta.log10(), r.sup_error.log10()).unwrap();
            }
            if gap > allowed {
                violations.push(format!("series and exponential differ by {gap:e} at t = {t}, beta = {}", r.beta));
            }
        }
        bundle.write(&format!("yosida_t{t}.dat"), &plot)?;
        summary.push(format!("t = {t}: fitted sup-norm order {}", order(table.sup_order)));
    }
    bundle.write("yosida_convergence.csv", &csv)?;
    Ok(violations)
}

fn path_record(seed: u64, index: usize, p: &PathSample) -> String {
    json!({ "seed": seed, "path": index, "jump_times": p.jump_times, "states": p.states }).to_string()
}

fn run_simulate(
    exp: &Experiment,
    tol: &ToleranceSpec,
    bundle: &mut Bundle,
    summary: &mut Vec<String>,
) -> Result<Vec<String>, RunError> {
    let l = &exp.generator;
    let n = l.len();
    let mc = &exp.config.monte_carlo;
    let seed = exp.config.seed;
    let ya = yosida_generator(l, mc.simulate_beta)?;
    let (x, horizon) = (mc.start, mc.simulate_time);
    let path_seed = derive_seed(seed, &[0]);
    let paths: Vec<PathSample> = (0..mc.paths as u64)
        .into_par_iter()
        .map(|i| sample_path(x, &ya, horizon, &mut path_rng(path_seed, i)))
        .collect::<crate::Result<_>>()?;

    let mut dump = json!({
        "format": "hunt-approx-paths",
        "version": PATH_FORMAT_VERSION,
        "beta": mc.simulate_beta,
        "horizon": horizon,
        "start": x,
        "cemetery": n,
        "seed": path_seed,
    })
    .to_string();
    dump.push('\n');
    for (i, p) in paths.iter().take(mc.dump_paths).enumerate() {
        dump.push_str(&path_record(path_seed, i, p));
        dump.push('\n');
    }
    bundle.write("paths.jsonl", &dump)?;

    let mut csv = String::from("quantity,estimate,std_error,exact,within_band\n");
    let mut cells = 0usize;
    let mut misses = 0usize;
    // The band uses the larger of the sample and the exact standard error,
    // so a rare event that no path hit is not flagged.
    let n_paths = mc.paths as f64;
    let mut record = |csv: &mut String, name: &str, est: &MCEstimate, exact: f64, exact_var: f64| {
        let se = est.std_error.max((exact_var / n_paths).sqrt());
        let ok = (est.mean - exact).abs() <= SIGMA_BAND * se + 1e-12;
        cells += 1;
        misses += usize::from(!ok);
        writeln!(csv, "{name},{},{},{exact},{ok}", est.mean, est.std_error).unwrap();
    };
    let counts: Vec<f64> = paths.iter().map(|p| p.jump_count() as f64).collect();
    let mean_jumps = mc.simulate_beta * horizon;
    record(&mut csv, "jump_count", &MCEstimate::from_values(&counts, path_seed)?, mean_jumps, mean_jumps);
    let ones = StateFunction::constant(n, 1.0);
    let alive = approx_semigroup(&ya, horizon, &ones, tol.series_tail)?.values.eval(x);
    let absorbed: Vec<f64> = paths.iter().map(|p| f64::from(u8::from(p.absorbed_at.is_some()))).collect();
    record(&mut csv, "absorbed_fraction", &MCEstimate::from_values(&absorbed, path_seed)?, 1.0 - alive, alive * (1.0 - alive));
    for (k, &s) in exp.config.probe.states.iter().enumerate() {
        let f = StateFunction::indicator(n, &StateSet::from_indices(n, &[s])?);
        let exact = approx_semigroup(&ya, horizon, &f, tol.series_tail)?.values.eval(x);
        let est = mc_marginal(x, &f, &ya, horizon, mc.paths, derive_seed(seed, &[1, k as u64]))?;
        record(&mut csv, &format!("marginal_state_{s}"), &est, exact, exact * (1.0 - exact));
    }
    bundle.write("simulate_summary.csv", &csv)?;
    summary.push(format!("{} of {cells} statistical cells outside the {SIGMA_BAND}-sigma band", misses));

    let mut violations = Vec::new();
    if let Some(s) = &exp.invariant {
        let starts = s.indices();
        if starts.is_empty() {
            return Err(ConfigError { message: "sets.invariant must not be empty".into() }.into());
        }
        let inv_seed = derive_seed(seed, &[2]);
        let inv_paths: Vec<PathSample> = (0..mc.paths as u64)
            .into_par_iter()
            .map(|i| {
                let start = starts[i as usize % starts.len()];
                sample_path(start, &ya, horizon, &mut path_rng(inv_seed, i))
            })
            .collect::<crate::Result<_>>()?;
        let r = invariance_check(l, &inv_paths, s)?;
        bundle.write(
            "invariance.csv",
            &format!("paths_checked,violations,holds\n{},{},{}\n", r.paths_checked, r.violations, r.holds),
        )?;
        summary.push(format!("invariance: {} escapes over {} paths", r.violations, r.paths_checked));
        if !r.holds {
            violations.push(format!("{} paths left the invariant set", r.violations));
        }
    }
    Ok(violations)
}

fn run_exit_bound(
    exp: &Experiment,
    tol: &ToleranceSpec,
    bundle: &mut Bundle,
    summary: &mut Vec<String>,
) -> Result<Vec<String>, RunError> {
    if exp.sequence.is_empty() {
        return Err(ConfigError { message: "exit-bound needs sets.sequence".into() }.into());
    }
    let l = &exp.generator;
    let mc = &exp.config.monte_carlo;
    let seq = modified_sequence(exp, tol)?;
    let mut exit_csv = String::from("x,n,beta,estimate,std_error,tail,e_hat,verdict\n");
    let mut exc_csv = String::from("beta,n,max_violation,approach_monotone,holds\n");
    let mut violations = Vec::new();
    let mut probed = 0usize;
    for (bi, &beta) in exp.config.probe.exit_beta.iter().enumerate() {
        let ya = yosida_generator(l, beta)?;
        for (k, (set, e_hat)) in exp.sequence.iter().zip(&seq.e_hat).enumerate() {
            let r = check_two_excessive(e_hat, &ya, &exp.config.grids.excessive_t)?;
            writeln!(exc_csv, "{beta},{},{},{},{}", k + 1, r.max_violation, r.approach_monotone, r.holds).unwrap();
            if !r.holds {
                violations.push(format!("2-excessivity fails for n = {}, beta = {beta}: {:e}", k + 1, r.max_violation));
            }
            for &x in &exp.config.probe.states {
                let cell_seed = derive_seed(exp.config.seed, &[bi as u64, k as u64, x as u64]);
                let run = McRun { n_paths: mc.paths, horizon: mc.horizon, seed: cell_seed };
                let r = mc_exit_bound(x, set, e_hat, &ya, run)?;
                probed += 1;
                writeln!(
                    exit_csv,
                    "{x},{},{beta},{},{},{},{},{}",
                    k + 1,
                    r.estimate.mean,
                    r.estimate.std_error,
                    r.tail,
                    r.e_hat,
                    r.verdict
                )
                .unwrap();
                if !r.verdict {
                    violations.push(format!(
                        "exit bound fails at x = {x}, n = {}, beta = {beta}: {} > {}",
                        k + 1,
                        r.upper_edge(),
                        r.e_hat
                    ));
                }
            }
        }
    }
    bundle.write("exit_bound.csv", &exit_csv)?;
    bundle.write("two_excessive.csv", &exc_csv)?;
    summary.push(format!("exit bound: {} of {probed} probes failed", violations.len()));
    Ok(violations)
}

fn run_report(exp: &Experiment, bundle: &mut Bundle, summary: &mut Vec<String>) -> Result<Vec<String>, RunError> {
    let l = &exp.generator;
    let n = l.len();
    let c = &exp.config;
    let fam = build_separating_family(&exp.space, l, c.probe.family_count.unwrap_or(n + 1))?;
    let report = weak_convergence_probe(
        l,
        c.monte_carlo.start,
        &c.probe.beta,
        &c.probe.t,
        &fam,
        c.monte_carlo.paths,
        derive_seed(c.seed, &[3]),
    )?;
    let mut csv = String::from("beta,discrepancy,std_error,exact_discrepancy,mean_jumps,max_rho_jump,rho_modulus\n");
    let mut plot = String::from("# log10_beta log10_discrepancy\n");
    for r in &report.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.beta, r.discrepancy, r.std_error, r.exact_discrepancy, r.mean_jumps, r.max_rho_jump, r.rho_modulus
        )
        .unwrap();
        if r.discrepancy > 0.0 {
            writeln!(plot, "{} {}", r.beta.log10(), r.discrepancy.log10()).unwrap();
        }
    }
    bundle.write("report.csv", &csv)?;
    bundle.write("report.dat", &plot)?;

    let rows = generator_bound_check(l, &fam, &c.grids.beta)?;
    let mut csv = String::from("index,bound,sup_over_beta,holds\n");
    let mut violations = Vec::new();
    for r in &rows {
        writeln!(csv, "{},{},{},{}", r.index + 1, r.bound, r.sup_over_beta, r.holds).unwrap();
        if !r.holds {
            violations.push(format!("generator bound fails for g_{}", r.index + 1));
        }
    }
    bundle.write("generator_bound.csv", &csv)?;
    let spread: f64 = report.rows.iter().map(|r| r.exact_discrepancy).collect::<CompensatedSum>().value();
    summary.push(format!(
        "probe: discrepancy {:.3e} -> {:.3e} over {} beta values (exact total {spread:.3e}), {} inversions",
        report.rows.first().map_or(0.0, |r| r.discrepancy),
        report.rows.last().map_or(0.0, |r| r.discrepancy),
        report.rows.len(),
        report.inversions()
    ));
    Ok(violations)
}
