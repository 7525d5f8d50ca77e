//! Experiment configuration: one TOML file per run.
//!
//! Top level: `schema_version`, `kind`, `seed`, and a `[params]` table whose
//! fields depend on the kind. Unknown fields are rejected with the offending
//! path. The full schema is documented in `docs/config.md`.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    schema_version: u32,
    kind: String,
    seed: u64,
    params: toml::Value,
}

/// A parsed configuration: run identity plus kind-specific parameters.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: String,
    pub seed: u64,
    pub params: KindParams,
    /// Verbatim parsed document, echoed into every result record.
    pub echo: toml::Value,
}

#[derive(Clone, Debug)]
pub enum KindParams {
    FlowCheck(FlowCheckParams),
    StepCheck(StepCheckParams),
    LemmaCheck(LemmaCheckParams),
    Chain(ChainParams),
    RandomChain(RandomChainParams),
    LimitLaw(LimitLawParams),
    HullTrack(HullTrackParams),
    Lyapunov(LyapunovParams),
    Metrics(MetricsParams),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FlowCheckParams {
    pub trials: usize,
    pub dims: Vec<usize>,
    #[serde(default = "default_drift_tol")]
    pub energy_tolerance: f64,
    #[serde(default = "default_drift_tol")]
    pub determinant_tolerance: f64,
    /// Angular frequency of the stiff oscillator used for the decay check.
    #[serde(default = "default_slope_frequency")]
    pub slope_frequency: f64,
    #[serde(default = "default_slope_dts")]
    pub slope_dts: Vec<f64>,
    #[serde(default = "default_slope_window")]
    pub slope_window: f64,
}

fn default_drift_tol() -> f64 {
    1e-10
}
fn default_slope_frequency() -> f64 {
    15.0
}
fn default_slope_dts() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}
fn default_slope_window() -> f64 {
    0.2
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum StepCheckMode {
    FixedPoint,
    Quadrature,
    MonteCarlo,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StepCheckParams {
    pub mode: StepCheckMode,
    pub trials: usize,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    /// Monte Carlo sample count (monte-carlo mode).
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    /// Grid size over mean ± 4 sd (quadrature mode).
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_fixed_point_tol")]
    pub fixed_point_tolerance: f64,
    #[serde(default = "default_quadrature_tol")]
    pub quadrature_tolerance: f64,
    #[serde(default = "default_se_factor")]
    pub se_factor: f64,
}

fn default_dims() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_n_samples() -> usize {
    1_000_000
}
fn default_grid_points() -> usize {
    401
}
fn default_fixed_point_tol() -> f64 {
    1e-14
}
fn default_quadrature_tol() -> f64 {
    1e-8
}
fn default_se_factor() -> f64 {
    5.0
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaCheckMode {
    QuadraticForm,
    Determinant,
    Both,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaCheckParams {
    pub mode: LemmaCheckMode,
    pub trials: usize,
    #[serde(default = "default_points_per_trial")]
    pub points_per_trial: usize,
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
    #[serde(default = "default_identity_tol")]
    pub identity_tolerance: f64,
    #[serde(default = "default_zeta_tol")]
    pub zeta_tolerance: f64,
    #[serde(default = "default_det_tol")]
    pub determinant_tolerance: f64,
}

fn default_points_per_trial() -> usize {
    1000
}
fn default_max_dim() -> usize {
    5
}
fn default_identity_tol() -> f64 {
    1e-9
}
fn default_zeta_tol() -> f64 {
    1e-10
}
fn default_det_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChainParams {
    pub dim: usize,
    pub steps: usize,
    pub time: f64,
    #[serde(default = "default_norm_tol")]
    pub norm_tolerance: f64,
    /// Additionally run the univariate fixed-target chain and verify the
    /// exact per-step decrease of the alternative distance.
    #[serde(default)]
    pub univariate_check: bool,
    #[serde(default = "default_ratio_tol")]
    pub ratio_tolerance: f64,
}

fn default_norm_tol() -> f64 {
    1e-10
}
fn default_ratio_tol() -> f64 {
    1e-12
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RandomChainParams {
    /// Components as `[probability, mean, variance]` triples.
    pub mixture: Vec<[f64; 3]>,
    pub alpha: f64,
    pub mu0: f64,
    pub sigma0_sq: f64,
    pub replicas: usize,
    pub checkpoints: Vec<usize>,
    #[serde(default = "default_se_factor")]
    pub se_factor: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum LimitLawMode {
    Moments,
    CfConvergence,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LimitLawParams {
    pub mode: LimitLawMode,
    pub mixture: Vec<[f64; 3]>,
    pub alpha: f64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_se_factor")]
    pub se_factor: f64,
    #[serde(default = "default_derivative_step")]
    pub derivative_step: f64,
    #[serde(default = "default_derivative_tol")]
    pub derivative_tolerance: f64,
    /// Chain length for cf-convergence mode.
    #[serde(default = "default_cf_chain_length")]
    pub chain_length: usize,
    #[serde(default = "default_cf_replicas")]
    pub replicas: usize,
    #[serde(default = "default_cf_points")]
    pub cf_points: Vec<f64>,
    #[serde(default = "default_cf_mu0")]
    pub mu0: f64,
    #[serde(default = "default_cf_sigma0")]
    pub sigma0_sq: f64,
}

fn default_derivative_step() -> f64 {
    1e-4
}
fn default_derivative_tol() -> f64 {
    1e-6
}
fn default_cf_chain_length() -> usize {
    200
}
fn default_cf_replicas() -> usize {
    100_000
}
fn default_cf_points() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0]
}
fn default_cf_mu0() -> f64 {
    4.0
}
fn default_cf_sigma0() -> f64 {
    9.0
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HullTrackParams {
    pub mixtures: usize,
    pub seeds_per_mixture: usize,
    pub steps: usize,
    #[serde(default = "default_hull_tol")]
    pub tolerance: f64,
}

fn default_hull_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovParams {
    pub mixture: Vec<[f64; 3]>,
    pub alpha: f64,
    pub n: usize,
    #[serde(default = "default_exact_tol")]
    pub exact_tolerance: f64,
    #[serde(default = "default_true")]
    pub bivariate_check: bool,
    #[serde(default = "default_bivariate_n")]
    pub bivariate_n: usize,
    #[serde(default = "default_bivariate_tol")]
    pub bivariate_tolerance: f64,
    #[serde(default = "default_ks_replicas")]
    pub ks_replicas: usize,
    #[serde(default = "default_ks_k")]
    pub ks_k: usize,
    #[serde(default = "default_ks_tol")]
    pub ks_tolerance: f64,
}

fn default_exact_tol() -> f64 {
    1e-12
}
fn default_true() -> bool {
    true
}
fn default_bivariate_n() -> usize {
    10_000
}
fn default_bivariate_tol() -> f64 {
    0.01
}
fn default_ks_replicas() -> usize {
    10_000
}
fn default_ks_k() -> usize {
    100
}
fn default_ks_tol() -> f64 {
    0.02
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsParams {
    pub triples: usize,
    #[serde(default = "default_triangle_slack")]
    pub triangle_slack: f64,
    #[serde(default = "default_geodesic_tol")]
    pub geodesic_tolerance: f64,
}

fn default_triangle_slack() -> f64 {
    1e-12
}
fn default_geodesic_tol() -> f64 {
    1e-12
}

/// Loads and validates a configuration file.
pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    parse(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// Parses configuration text; exposed separately for tests.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let echo: toml::Value = text.parse().context("config is not valid TOML")?;
    let file: ConfigFile = toml::from_str(text).context("config has an invalid structure")?;
    if file.schema_version != crate::record::SCHEMA_VERSION {
        bail!(
            "schema_version {} is not supported (expected {})",
            file.schema_version,
            crate::record::SCHEMA_VERSION
        );
    }
    let params_text =
        toml::to_string(&file.params).context("params table cannot be re-serialized")?;
    let params = match file.kind.as_str() {
        "flow-check" => KindParams::FlowCheck(parse_params(&params_text)?),
        "step-check" => KindParams::StepCheck(parse_params(&params_text)?),
        "lemma-check" => KindParams::LemmaCheck(parse_params(&params_text)?),
        "chain" => KindParams::Chain(parse_params(&params_text)?),
        "random-chain" => KindParams::RandomChain(parse_params(&params_text)?),
        "limit-law" => KindParams::LimitLaw(parse_params(&params_text)?),
        "hull-track" => KindParams::HullTrack(parse_params(&params_text)?),
        "lyapunov" => KindParams::Lyapunov(parse_params(&params_text)?),
        "metrics" => KindParams::Metrics(parse_params(&params_text)?),
        other => bail!("unknown experiment kind `{other}`"),
    };
    let config = ExperimentConfig {
        kind: file.kind,
        seed: file.seed,
        params,
        echo,
    };
    validate(&config)?;
    Ok(config)
}

fn parse_params<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    toml::from_str(text).context("invalid [params] table")
}

fn validate_mixture(mixture: &[[f64; 3]], alpha: f64) -> Result<()> {
    if mixture.is_empty() {
        bail!("params.mixture: needs at least one component");
    }
    let total: f64 = mixture.iter().map(|c| c[0]).sum();
    if (total - 1.0).abs() > 1e-12 {
        bail!("params.mixture: probabilities sum to {total}, expected 1");
    }
    for (j, c) in mixture.iter().enumerate() {
        let prob_ok = c[0] > 0.0;
        let variance_ok = c[2] > 0.0;
        if !prob_ok || !c[1].is_finite() || !variance_ok {
            bail!("params.mixture[{j}]: needs probability > 0 and variance > 0");
        }
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("params.alpha: {alpha} outside (0, 1)");
    }
    Ok(())
}

fn validate(config: &ExperimentConfig) -> Result<()> {
    match &config.params {
        KindParams::FlowCheck(p) => {
            if p.trials == 0 || p.dims.is_empty() || p.dims.contains(&0) {
                bail!("params: trials and dims must be positive");
            }
            if p.slope_dts.len() < 2 {
                bail!("params.slope_dts: need at least two step sizes");
            }
        }
        KindParams::StepCheck(p) => {
            if p.trials == 0 || p.dims.is_empty() || p.dims.contains(&0) {
                bail!("params: trials and dims must be positive");
            }
            if p.mode == StepCheckMode::Quadrature && p.dims.iter().any(|&d| d != 1) {
                bail!("params.dims: quadrature mode is univariate only");
            }
        }
        KindParams::LemmaCheck(p) => {
            if p.trials == 0 || p.points_per_trial == 0 || p.max_dim == 0 {
                bail!("params: trials, points_per_trial and max_dim must be positive");
            }
        }
        KindParams::Chain(p) => {
            if p.dim == 0 || p.steps == 0 {
                bail!("params: dim and steps must be positive");
            }
        }
        KindParams::RandomChain(p) => {
            validate_mixture(&p.mixture, p.alpha)?;
            if p.replicas == 0 || p.checkpoints.is_empty() {
                bail!("params: replicas and checkpoints must be nonempty");
            }
        }
        KindParams::LimitLaw(p) => validate_mixture(&p.mixture, p.alpha)?,
        KindParams::HullTrack(p) => {
            if p.mixtures == 0 || p.seeds_per_mixture == 0 || p.steps == 0 {
                bail!("params: mixtures, seeds_per_mixture and steps must be positive");
            }
        }
        KindParams::Lyapunov(p) => {
            validate_mixture(&p.mixture, p.alpha)?;
            if p.n == 0 {
                bail!("params.n: must be positive");
            }
        }
        KindParams::Metrics(p) => {
            if p.triples == 0 {
                bail!("params.triples: must be positive");
            }
        }
    }
    Ok(())
}
