//! Typed experiment configs. Every document carries a `schema` tag naming the
//! file under `schemas/` that describes it, and unknown keys are rejected.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mixflow::distributions::{random_mixture, three_gaussians, MixtureDocument, MixtureSpec};
use mixflow::lais::{demo_target, LaisConfig};
use mixflow::quadrature::{HaltonOptions, Integrand, Method, ReferenceOptions};
use mixflow::transport::TransportConfig;

use crate::error::{CliError, CliResult};

pub const POINTSET_SCHEMA: &str = "mixflow/pointset/v1";
pub const TRANSPORT_SCHEMA: &str = "mixflow/transport/v1";
pub const CONVERGE_SCHEMA: &str = "mixflow/converge/v1";
pub const LAIS_SCHEMA: &str = "mixflow/lais/v1";

/// Reads `path`, checks the schema tag and deserializes strictly.
pub fn load<T: DeserializeOwned>(path: &Path, schema: &str) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    match value.get("schema").and_then(|s| s.as_str()) {
        Some(s) if s == schema => {}
        Some(s) => {
            return Err(CliError::Config(format!(
                "schema `{s}` does not match `{schema}`"
            )))
        }
        None => {
            return Err(CliError::Config(format!(
                "missing `schema` field (expected `{schema}`)"
            )))
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    ThreeGaussians,
    LaisDemo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMixture {
    pub dim: usize,
    pub components: usize,
    pub seed: u64,
}

/// Where a mixture comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum MixtureSource {
    Preset(Preset),
    Random(RandomMixture),
    Inline(MixtureDocument),
}

impl MixtureSource {
    pub fn build(&self) -> CliResult<MixtureSpec> {
        Ok(match self {
            MixtureSource::Preset(Preset::ThreeGaussians) => three_gaussians(),
            MixtureSource::Preset(Preset::LaisDemo) => demo_target(),
            MixtureSource::Random(r) => {
                random_mixture(r.dim, r.components, &mut ChaCha8Rng::seed_from_u64(r.seed))?
            }
            MixtureSource::Inline(doc) => MixtureSpec::from_document(doc.clone())?,
        })
    }

    /// Short label written into result rows.
    pub fn id(&self, spec: &MixtureSpec) -> String {
        match self {
            MixtureSource::Preset(Preset::ThreeGaussians) => "three-gaussians".into(),
            MixtureSource::Preset(Preset::LaisDemo) => "lais-demo".into(),
            MixtureSource::Random(r) => format!("random-d{}-j{}-s{}", r.dim, r.components, r.seed),
            MixtureSource::Inline(_) => format!("inline-{}", &spec.content_hash()[..12]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    Halton,
    SparseGrid,
    Mc,
}

/// Point-set generator parameters. `n` applies to halton and mc, `level` to
/// sparse grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub generator: Generator,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub level: Option<usize>,
    #[serde(default = "default_skip")]
    pub skip: u64,
    #[serde(default = "default_leap")]
    pub leap: u64,
    #[serde(default)]
    pub scramble_seed: Option<u64>,
    /// Map halton points to `N(0, I)`. Defaults to off for `pointset` and to
    /// the mixture's reference for `transport`.
    #[serde(default)]
    pub normal: Option<bool>,
    #[serde(default)]
    pub seed: u64,
}

fn default_skip() -> u64 {
    mixflow::pointsets::DEFAULT_SKIP
}

fn default_leap() -> u64 {
    mixflow::pointsets::DEFAULT_LEAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsetConfig {
    pub schema: String,
    pub points: GeneratorConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum PointsSource {
    File(PathBuf),
    Generate(GeneratorConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportMethod {
    #[default]
    Ode,
    Componentwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportCmdConfig {
    pub schema: String,
    pub mixture: MixtureSource,
    pub points: PointsSource,
    #[serde(default)]
    pub method: TransportMethod,
    #[serde(default)]
    pub transport: TransportConfig,
    /// Also write every accepted integrator step.
    #[serde(default)]
    pub trajectory: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub schema: String,
    pub mixtures: Vec<MixtureSource>,
    pub methods: Vec<Method>,
    pub integrands: Vec<Integrand>,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub halton: HaltonOptions,
    #[serde(default)]
    pub reference: ReferenceOptions,
    /// JSON sidecar for reference values, relative to the output directory.
    #[serde(default)]
    pub reference_cache: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesSweep {
    pub chains: usize,
    pub steps: usize,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepsSweep {
    pub chains: usize,
    pub samples_per_component: usize,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaisCmdConfig {
    pub schema: String,
    pub target: MixtureSource,
    #[serde(default)]
    pub lais: LaisConfig,
    /// Defaults to the target's exact mean.
    #[serde(default)]
    pub true_mean: Option<Vec<f64>>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub m_sweep: Option<SamplesSweep>,
    #[serde(default)]
    pub t_sweep: Option<StepsSweep>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}
