//! Run configuration: one JSON file per experiment, validated before any
//! computation starts. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use netid_core::graph::{GraphClass, GraphClassConstraint, GraphFamily};
use netid_core::lti::InputKind;
use netid_core::mapping::ScalarMapping;
use netid_core::recovery::{RecoveryConfig, SolverOptions};
use netid_core::subspace::OrderPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Simulate(SimulateConfig),
    Identify(IdentifyCommandConfig),
    Recover(RecoverCommandConfig),
    Oneshot(OneshotCommandConfig),
    ReproduceSynthetic(SyntheticConfig),
}

impl RunConfig {
    pub fn command_name(&self) -> &'static str {
        match self {
            RunConfig::Simulate(_) => "simulate",
            RunConfig::Identify(_) => "identify",
            RunConfig::Recover(_) => "recover",
            RunConfig::Oneshot(_) => "oneshot",
            RunConfig::ReproduceSynthetic(_) => "reproduce-synthetic",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            RunConfig::Simulate(c) => c.seed,
            RunConfig::Identify(_) | RunConfig::Recover(_) | RunConfig::Oneshot(_) => 0,
            RunConfig::ReproduceSynthetic(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            RunConfig::Simulate(c) => c.seed = seed,
            RunConfig::ReproduceSynthetic(c) => c.seed = seed,
            _ => {}
        }
    }
}

/// Excitation description; the generator seed is derived from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    PiecewiseConstantBipolar { hold: usize, len: usize },
    Gaussian { len: usize },
    Zero { len: usize },
}

impl InputConfig {
    pub fn len(&self) -> usize {
        match self {
            InputConfig::PiecewiseConstantBipolar { len, .. }
            | InputConfig::Gaussian { len }
            | InputConfig::Zero { len } => *len,
        }
    }

    pub fn kind(&self) -> InputKind {
        match self {
            InputConfig::PiecewiseConstantBipolar { hold, .. } => {
                InputKind::PiecewiseConstantBipolar { hold: *hold }
            }
            InputConfig::Gaussian { .. } => InputKind::Gaussian,
            InputConfig::Zero { .. } => InputKind::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum X0Config {
    Zero,
    Random { scale: f64 },
    Values(Vec<f64>),
}

impl Default for X0Config {
    fn default() -> Self {
        X0Config::Zero
    }
}

/// Where the simulated system comes from: dense CSV files or a synthetic
/// two-graph build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemSpec {
    Files {
        a: PathBuf,
        b: PathBuf,
        c: PathBuf,
        d: PathBuf,
    },
    Synthetic(SyntheticSystemSpec),
}

/// The two-graph state-space build: `A = f1(S1)`, `B = f2(S2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSystemSpec {
    pub n: usize,
    pub state_graph: GraphFamily,
    pub input_graph: GraphFamily,
    #[serde(default = "default_adjacency")]
    pub state_class: GraphClassConstraint,
    #[serde(default = "default_adjacency")]
    pub input_class: GraphClassConstraint,
    pub state_mapping: ScalarMapping,
    #[serde(default = "default_identity_mapping")]
    pub input_mapping: ScalarMapping,
    /// The state matrix is rescaled so its spectral radius stays below
    /// this cap (heat-kernel amplitude is free).
    #[serde(default = "default_radius_cap")]
    pub spectral_radius_cap: f64,
    #[serde(default = "default_true")]
    pub identity_c: bool,
    #[serde(default = "default_true")]
    pub identity_d: bool,
}

fn default_adjacency() -> GraphClassConstraint {
    GraphClassConstraint::new(GraphClass::Adjacency)
}

fn default_identity_mapping() -> ScalarMapping {
    ScalarMapping::identity()
}

fn default_radius_cap() -> f64 {
    0.95
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub system: SystemSpec,
    pub input: InputConfig,
    #[serde(default)]
    pub x0: X0Config,
}

/// Known output matrix: the identity shortcut or a dense CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KnownC {
    Named(String),
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyCommandConfig {
    pub trajectory: PathBuf,
    pub s: usize,
    #[serde(default = "default_order_policy")]
    pub order_policy: OrderPolicy,
    #[serde(default = "default_known_c")]
    pub c: KnownC,
}

fn default_order_policy() -> OrderPolicy {
    OrderPolicy::LargestGap
}

fn default_known_c() -> KnownC {
    KnownC::Named("identity".into())
}

/// Which identified matrix a recovery applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryTarget {
    State,
    Input,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverCommandConfig {
    pub bundle: PathBuf,
    pub target: RecoveryTarget,
    pub recovery: RecoveryConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneshotCommandConfig {
    pub bundle: PathBuf,
    pub class: GraphClassConstraint,
    /// `None` requests the logarithmic sweep.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub assume_t_identity: bool,
}

/// The bundled synthetic experiment: two seeded connected graphs, a heat
/// kernel on the state side, the identity map on the input side, all
/// states measured and direct feedthrough.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_edge_probability")]
    pub edge_probability: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_adjacency")]
    pub state_class: GraphClassConstraint,
    #[serde(default = "default_adjacency")]
    pub input_class: GraphClassConstraint,
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default = "default_order_policy")]
    pub order_policy: OrderPolicy,
    #[serde(default = "default_radius_cap")]
    pub spectral_radius_cap: f64,
}

fn default_n() -> usize {
    15
}
fn default_samples() -> usize {
    300
}
fn default_edge_probability() -> f64 {
    0.3
}
fn default_tau() -> f64 {
    0.35
}
fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "config i/o: {e}"),
            ConfigError::Parse(m) => write!(f, "config parse: {m}"),
            ConfigError::Invalid(m) => write!(f, "config invalid: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    validate(&config)?;
    Ok(config)
}

/// Canonical serialized form (used by the round-trip contract).
pub fn canonicalize(config: &RunConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serialization is infallible")
}

fn validate(config: &RunConfig) -> Result<(), ConfigError> {
    match config {
        RunConfig::Simulate(c) => {
            if c.input.len() == 0 {
                return Err(ConfigError::Invalid("input length must be >= 1".into()));
            }
            if let InputConfig::PiecewiseConstantBipolar { hold, .. } = &c.input {
                if *hold == 0 {
                    return Err(ConfigError::Invalid("bipolar hold must be >= 1".into()));
                }
            }
            if let SystemSpec::Synthetic(s) = &c.system {
                validate_synthetic_system(s)?;
            }
            if let X0Config::Random { scale } = &c.x0 {
                if !scale.is_finite() || *scale <= 0.0 {
                    return Err(ConfigError::Invalid("x0 random scale must be > 0".into()));
                }
            }
        }
        RunConfig::Identify(c) => {
            if c.s < 2 {
                return Err(ConfigError::Invalid("window s must be at least 2".into()));
            }
            if let KnownC::Named(name) = &c.c {
                if name != "identity" {
                    return Err(ConfigError::Invalid(format!(
                        "c must be \"identity\" or {{\"path\": ...}}, got {name:?}"
                    )));
                }
            }
        }
        RunConfig::Recover(c) => {
            if let Some(mu) = mu_of(&c.recovery) {
                if mu < 0.0 {
                    return Err(ConfigError::Invalid("mu must be nonnegative".into()));
                }
            }
            if c.recovery.solver.tol <= 0.0 {
                return Err(ConfigError::Invalid("solver tol must be > 0".into()));
            }
        }
        RunConfig::Oneshot(c) => {
            if let Some(mu) = c.mu {
                if !(mu >= 0.0) {
                    return Err(ConfigError::Invalid("mu must be nonnegative".into()));
                }
            }
            if c.solver.tol <= 0.0 {
                return Err(ConfigError::Invalid("solver tol must be > 0".into()));
            }
        }
        RunConfig::ReproduceSynthetic(c) => {
            if c.n < 2 {
                return Err(ConfigError::Invalid("n must be at least 2".into()));
            }
            if !(0.0 < c.edge_probability && c.edge_probability < 1.0) {
                return Err(ConfigError::Invalid(
                    "edge probability must lie in (0, 1)".into(),
                ));
            }
            if c.samples < 2 * c.s.unwrap_or(c.n + 1) {
                return Err(ConfigError::Invalid(format!(
                    "samples = {} too short for window s = {}",
                    c.samples,
                    c.s.unwrap_or(c.n + 1)
                )));
            }
            if c.tau <= 0.0 || c.alpha <= 0.0 {
                return Err(ConfigError::Invalid("tau and alpha must be > 0".into()));
            }
            if !(0.0 < c.spectral_radius_cap && c.spectral_radius_cap < 1.0) {
                return Err(ConfigError::Invalid(
                    "spectral radius cap must lie in (0, 1)".into(),
                ));
            }
        }
    }
    Ok(())
}

fn mu_of(r: &RecoveryConfig) -> Option<f64> {
    r.mu
}

fn validate_synthetic_system(s: &SyntheticSystemSpec) -> Result<(), ConfigError> {
    if s.n < 2 {
        return Err(ConfigError::Invalid("n must be at least 2".into()));
    }
    if !(0.0 < s.spectral_radius_cap && s.spectral_radius_cap < 1.0) {
        return Err(ConfigError::Invalid(
            "spectral radius cap must lie in (0, 1)".into(),
        ));
    }
    Ok(())
}
