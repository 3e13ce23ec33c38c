//! Experiment configuration.
//!
//! Configs are TOML documents; unknown keys anywhere are rejected. The
//! grammar, with defaults, is documented in `configs/README.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::kernels::{
    default_alpha_grid, model_absorbed_diffusion, model_birth_death, model_block_diagonal, model_pure_killing,
    model_random, model_space_time_transport, DiffusionCoefficients, SubMarkovGenerator,
};
use crate::numerics::dyadic_grid;
use crate::potential::ModifiedGrids;
use crate::space::{StateSet, StateSpace};

/// A config that failed to load, parse or validate. The message names the
/// offending field.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct ConfigError {
    pub message: String,
}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        Self { message: message.into() }
    }
}

type ConfigResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Master seed for every random stream; there is no clock-based default.
    pub seed: u64,
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub model: ModelSpec,
    #[serde(default)]
    pub space: SpaceSpec,
    #[serde(default)]
    pub grids: GridSpec,
    #[serde(default)]
    pub sets: SetsSpec,
    #[serde(default)]
    pub probe: ProbeSpec,
    #[serde(default)]
    pub monte_carlo: MonteCarloSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    BirthDeath {
        births: Vec<f64>,
        deaths: Vec<f64>,
        killing: Vec<f64>,
    },
    PureKilling {
        n: usize,
        rate: f64,
    },
    /// `a u'' + b(x) u'` on `[0, 1]` with `b(x) = drift + drift_slope (x − ½)`.
    AbsorbedDiffusion {
        n: usize,
        diffusion: f64,
        #[serde(default)]
        drift: f64,
        #[serde(default)]
        drift_slope: f64,
    },
    SpaceTimeTransport {
        layers: usize,
        spatial: Box<ModelSpec>,
    },
    BlockDiagonal {
        first: Box<ModelSpec>,
        second: Box<ModelSpec>,
    },
    Random {
        n: usize,
        max_rate: f64,
        max_kill: f64,
        seed: u64,
    },
    Matrix {
        rows: Vec<Vec<f64>>,
    },
}

impl ModelSpec {
    pub fn build(&self) -> crate::Result<SubMarkovGenerator> {
        match self {
            Self::BirthDeath { births, deaths, killing } => model_birth_death(killing.len(), births, deaths, killing),
            Self::PureKilling { n, rate } => model_pure_killing(*n, *rate),
            Self::AbsorbedDiffusion { n, diffusion, drift, drift_slope } => {
                let (a, b0, b1) = (*diffusion, *drift, *drift_slope);
                let coeffs = DiffusionCoefficients { drift: &move |x| b0 + b1 * (x - 0.5), diffusion: &move |_| a };
                model_absorbed_diffusion(*n, &coeffs)
            }
            Self::SpaceTimeTransport { layers, spatial } => model_space_time_transport(&spatial.build()?, *layers),
            Self::BlockDiagonal { first, second } => Ok(model_block_diagonal(&first.build()?, &second.build()?)),
            Self::Random { n, max_rate, max_kill, seed } => model_random(*n, *max_rate, *max_kill, *seed),
            Self::Matrix { rows } => SubMarkovGenerator::from_rows(rows),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    /// A space file (`label, mass[, phi]` per line), relative to the config.
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    /// Defaults to `1/n` at every state.
    #[serde(default)]
    pub mass: Option<Vec<f64>>,
    /// Defaults to `1` at every state.
    #[serde(default)]
    pub phi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Resolvent orders for kernel checks.
    #[serde(default = "default_alpha_grid")]
    pub alpha: Vec<f64>,
    /// Yosida parameters for convergence tables.
    #[serde(default = "default_beta_grid")]
    pub beta: Vec<f64>,
    /// Times for convergence tables.
    #[serde(default = "default_t_grid")]
    pub t: Vec<f64>,
    /// Times for the 2-excessivity check.
    #[serde(default = "default_excessive_t_grid")]
    pub excessive_t: Vec<f64>,
    #[serde(default = "default_modified_alpha")]
    pub modified_alpha: Vec<f64>,
    #[serde(default = "default_modified_l")]
    pub modified_l: Vec<f64>,
}

fn default_beta_grid() -> Vec<f64> {
    dyadic_grid(0, 12, 1)
}

fn default_t_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn default_excessive_t_grid() -> Vec<f64> {
    dyadic_grid(-10, 1, 1)
}

fn default_modified_alpha() -> Vec<f64> {
    ModifiedGrids::default().alpha
}

fn default_modified_l() -> Vec<f64> {
    ModifiedGrids::default().l
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            alpha: default_alpha_grid(),
            beta: default_beta_grid(),
            t: default_t_grid(),
            excessive_t: default_excessive_t_grid(),
            modified_alpha: default_modified_alpha(),
            modified_l: default_modified_l(),
        }
    }
}

impl GridSpec {
    pub fn modified(&self) -> ModifiedGrids {
        ModifiedGrids { alpha: self.modified_alpha.clone(), l: self.modified_l.clone() }
    }
}

/// A subset of `E`, either a half-open index range or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SetDef {
    Range { from: usize, to: usize },
    States { states: Vec<usize> },
}

impl SetDef {
    pub fn build(&self, n: usize) -> crate::Result<StateSet> {
        match self {
            Self::Range { from, to } => {
                if from > to || *to > n {
                    return Err(crate::Error::InvalidArgument(format!("range {from}..{to} outside 0..{n}")));
                }
                Ok(StateSet::from_predicate(n, |x| x >= *from && x < *to))
            }
            Self::States { states } => StateSet::from_indices(n, states),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetsSpec {
    /// Decreasing sequence `U_1 ⊇ U_2 ⊇ …`.
    #[serde(default)]
    pub sequence: Vec<SetDef>,
    /// Candidate invariant set `S` for the invariance check.
    #[serde(default)]
    pub invariant: Option<SetDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default = "default_probe_states")]
    pub states: Vec<usize>,
    /// Yosida parameters for the exit-bound and 2-excessivity checks.
    #[serde(default = "default_exit_beta")]
    pub exit_beta: Vec<f64>,
    /// Yosida parameters for the weak-convergence probe.
    #[serde(default = "default_probe_beta")]
    pub beta: Vec<f64>,
    #[serde(default = "default_probe_t")]
    pub t: Vec<f64>,
    /// Size of the separating family; defaults to `n + 1`.
    #[serde(default)]
    pub family_count: Option<usize>,
}

fn default_probe_states() -> Vec<usize> {
    vec![0]
}

fn default_exit_beta() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}

fn default_probe_beta() -> Vec<f64> {
    dyadic_grid(0, 8, 1)
}

fn default_probe_t() -> Vec<f64> {
    vec![0.5, 1.0]
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            states: default_probe_states(),
            exit_beta: default_exit_beta(),
            beta: default_probe_beta(),
            t: default_probe_t(),
            family_count: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    /// Paths per estimate.
    #[serde(default = "default_paths")]
    pub paths: usize,
    /// Horizon `T` of exit-time and Laplace estimators.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// `simulate`: start state, Yosida parameter, horizon and number of
    /// paths written to the dump.
    #[serde(default)]
    pub start: usize,
    #[serde(default = "default_simulate_beta")]
    pub simulate_beta: f64,
    #[serde(default = "default_simulate_time")]
    pub simulate_time: f64,
    #[serde(default = "default_dump_paths")]
    pub dump_paths: usize,
}

fn default_paths() -> usize {
    20_000
}

fn default_horizon() -> f64 {
    12.0
}

fn default_simulate_beta() -> f64 {
    4.0
}

fn default_simulate_time() -> f64 {
    1.0
}

fn default_dump_paths() -> usize {
    100
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        Self {
            paths: default_paths(),
            horizon: default_horizon(),
            start: 0,
            simulate_beta: default_simulate_beta(),
            simulate_time: default_simulate_time(),
            dump_paths: default_dump_paths(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default = "default_reduite_tol")]
    pub reduite: f64,
    #[serde(default = "default_excessive_tol")]
    pub excessive: f64,
    #[serde(default = "default_series_tail")]
    pub series_tail: f64,
    #[serde(default = "default_resolvent_tol")]
    pub resolvent: f64,
    /// Bias budget of horizon-truncated Laplace estimators.
    #[serde(default = "default_bias")]
    pub bias: f64,
}

fn default_reduite_tol() -> f64 {
    1e-10
}

fn default_excessive_tol() -> f64 {
    1e-9
}

fn default_series_tail() -> f64 {
    1e-12
}

fn default_resolvent_tol() -> f64 {
    1e-11
}

fn default_bias() -> f64 {
    1e-8
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self {
            reduite: default_reduite_tol(),
            excessive: default_excessive_tol(),
            series_tail: default_series_tail(),
            resolvent: default_resolvent_tol(),
            bias: default_bias(),
        }
    }
}

impl ToleranceSpec {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            reduite: self.reduite * factor,
            excessive: self.excessive * factor,
            series_tail: self.series_tail * factor,
            resolvent: self.resolvent * factor,
            bias: self.bias * factor,
        }
    }
}

/// A validated config together with the objects it describes.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub generator: SubMarkovGenerator,
    pub space: StateSpace,
    pub sequence: Vec<StateSet>,
    pub invariant: Option<StateSet>,
    /// SHA-256 of the config text as read.
    pub config_hash: String,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> ConfigResult<Self> {
        toml::from_str(text).map_err(|e| ConfigError::new(format!("config parse error: {e}")))
    }
}

/// Reads, parses and validates a config file.
pub fn load(path: &Path) -> ConfigResult<Experiment> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(format!("cannot read config {}: {e}", path.display())))?;
    let config = ExperimentConfig::parse(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    build(config, &text, base)
}

/// Validates a parsed config; `base` resolves relative space files.
pub fn build(config: ExperimentConfig, text: &str, base: &Path) -> ConfigResult<Experiment> {
    use sha2::{Digest, Sha256};
    let generator = config.model.build().map_err(field("model"))?;
    let n = generator.len();
    let space = build_space(&config.space, n, base)?;

    let g = &config.grids;
    for (name, grid) in [
        ("grids.alpha", &g.alpha),
        ("grids.beta", &g.beta),
        ("grids.t", &g.t),
        ("grids.excessive_t", &g.excessive_t),
        ("grids.modified_alpha", &g.modified_alpha),
        ("grids.modified_l", &g.modified_l),
        ("probe.exit_beta", &config.probe.exit_beta),
        ("probe.beta", &config.probe.beta),
        ("probe.t", &config.probe.t),
    ] {
        check_grid(name, grid)?;
    }
    if let Some(b) = config.probe.exit_beta.iter().find(|&&b| b < 2.0) {
        return Err(ConfigError::new(format!("probe.exit_beta: {b} is below 2")));
    }
    for &x in &config.probe.states {
        if x >= n {
            return Err(ConfigError::new(format!("probe.states: state {x} outside 0..{n}")));
        }
    }
    if config.probe.family_count == Some(0) {
        return Err(ConfigError::new("probe.family_count must be at least 1"));
    }

    let sequence = config
        .sets
        .sequence
        .iter()
        .enumerate()
        .map(|(i, s)| s.build(n).map_err(field(&format!("sets.sequence[{i}]"))))
        .collect::<ConfigResult<Vec<_>>>()?;
    for (i, w) in sequence.windows(2).enumerate() {
        if !w[1].is_subset_of(&w[0]) {
            return Err(ConfigError::new(format!("sets.sequence[{}] is not contained in the previous set", i + 1)));
        }
    }
    let invariant = config.sets.invariant.as_ref().map(|s| s.build(n).map_err(field("sets.invariant"))).transpose()?;

    let mc = &config.monte_carlo;
    if mc.paths < 2 {
        return Err(ConfigError::new("monte_carlo.paths must be at least 2"));
    }
    for (name, v) in [("monte_carlo.horizon", mc.horizon), ("monte_carlo.simulate_time", mc.simulate_time)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ConfigError::new(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if !(mc.simulate_beta > 0.0 && mc.simulate_beta.is_finite()) {
        return Err(ConfigError::new("monte_carlo.simulate_beta must be positive"));
    }
    if mc.start >= n {
        return Err(ConfigError::new(format!("monte_carlo.start: state {} outside 0..{n}", mc.start)));
    }
    let t = &config.tolerances;
    for (name, v) in [
        ("tolerances.reduite", t.reduite),
        ("tolerances.excessive", t.excessive),
        ("tolerances.series_tail", t.series_tail),
        ("tolerances.resolvent", t.resolvent),
        ("tolerances.bias", t.bias),
    ] {
        if !(v > 0.0 && v <= 1e-2) {
            return Err(ConfigError::new(format!("{name} = {v} is outside (0, 1e-2]")));
        }
    }
    let config_hash = hex::encode(Sha256::digest(text.as_bytes()));
    Ok(Experiment { config, generator, space, sequence, invariant, config_hash })
}

fn field(name: &str) -> impl Fn(crate::Error) -> ConfigError + '_ {
    move |e| ConfigError::new(format!("{name}: {e}"))
}

fn check_grid(name: &str, grid: &[f64]) -> ConfigResult<()> {
    if grid.is_empty() {
        return Err(ConfigError::new(format!("{name} must not be empty")));
    }
    if let Some(v) = grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(ConfigError::new(format!("{name}: entry {v} must be positive and finite")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ConfigError::new(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

fn build_space(spec: &SpaceSpec, n: usize, base: &Path) -> ConfigResult<StateSpace> {
    let space = if let Some(file) = &spec.file {
        if spec.labels.is_some() || spec.mass.is_some() {
            return Err(ConfigError::new("space: give either file or labels/mass, not both"));
        }
        let path = base.join(file);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ConfigError::new(format!("space.file {}: {e}", path.display())))?;
        StateSpace::parse(&text).map_err(|e| ConfigError::new(format!("space.file {}: {e}", path.display())))?
    } else {
        let labels = spec.labels.clone().unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect());
        let mass = spec.mass.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
        StateSpace::new(labels, mass, vec![1.0; n]).map_err(|e| ConfigError::new(format!("space: {e}")))?
    };
    if space.len() != n {
        return Err(ConfigError::new(format!("space has {} states but the model has {n}", space.len())));
    }
    match &spec.phi {
        Some(phi) => space.with_phi(phi.clone()).map_err(|e| ConfigError::new(format!("space.phi: {e}"))),
        None => Ok(space),
    }
}
