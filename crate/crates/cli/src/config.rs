//! Experiment configuration, read from TOML.
//!
//! ```toml
//! suite = "poisgeo"            # poisgeo | lincode | gaussian_check
//! output_dir = "out"           # relative to this file
//! prior_weights = [0.5, 0.5]
//!
//! [data.simulate]              # or [data.file] / [data.inline]
//! seed = 1
//! n = 10
//! lambda = 1.0
//!
//! [sampler]
//! seed = 7
//! iterations = 100000
//! thin = 50
//! ```

use std::path::{Path, PathBuf};

use mixbma::ensemble::WEIGHT_SUM_TOLERANCE;
use mixbma::lincode::{self, CodeBasis, EvidenceMode, KernelSpec};
use mixbma::poisgeo;
use mixbma::sampler::ChainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Poisgeo,
    Lincode,
    GaussianCheck,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Poisgeo => "poisgeo",
            Suite::Lincode => "lincode",
            Suite::GaussianCheck => "gaussian_check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: Suite,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "equal_weights")]
    pub prior_weights: Vec<f64>,
    pub data: DataSource,
    pub sampler: SamplerSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub lincode: LinCodeSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

fn equal_weights() -> Vec<f64> {
    vec![0.5, 0.5]
}

/// Exactly one data source.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Simulate(SimulateSpec),
    File(FileSpec),
    Inline(InlineSpec),
}

/// Simulation parameters; unset ones take the suite defaults.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub seed: u64,
    pub n: Option<usize>,
    /// Poisson mean (poisgeo) or noise standard deviation (lincode).
    pub lambda: Option<f64>,
    pub theta: Option<Vec<f64>>,
    pub k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSpec {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSpec {
    /// poisgeo counts.
    pub counts: Option<Vec<u64>>,
    /// lincode covariates.
    pub x: Option<Vec<f64>>,
    /// lincode observations.
    pub y: Option<Vec<f64>>,
    /// gaussian_check datum.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    /// Initial random-walk scale; ignored by the lincode κ sampler.
    pub scale: Option<f64>,
    #[serde(default = "yes")]
    pub adapt: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_bins() -> usize {
    30
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self { bins: default_bins() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceSetting {
    Exact,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinCodeSection {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default)]
    pub basis: CodeBasis,
    #[serde(default = "default_evidence")]
    pub evidence: EvidenceSetting,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Points of the equispaced prediction grid over the observed x range.
    #[serde(default = "default_prediction_points")]
    pub prediction_points: usize,
    /// RNG stream (under the sampler seed) for posterior reconstruction.
    #[serde(default = "default_reconstruction_stream")]
    pub reconstruction_stream: u64,
}

fn default_gamma() -> f64 {
    lincode::DEFAULT_GAMMA
}
fn default_jitter() -> f64 {
    lincode::DEFAULT_JITTER
}
fn default_evidence() -> EvidenceSetting {
    EvidenceSetting::Exact
}
fn default_grid_points() -> usize {
    lincode::DEFAULT_GRID_POINTS
}
fn default_prediction_points() -> usize {
    101
}
fn default_reconstruction_stream() -> u64 {
    1
}

impl Default for LinCodeSection {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            jitter: default_jitter(),
            basis: CodeBasis::default(),
            evidence: default_evidence(),
            grid_points: default_grid_points(),
            prediction_points: default_prediction_points(),
            reconstruction_stream: default_reconstruction_stream(),
        }
    }
}

impl LinCodeSection {
    pub fn kernel(&self) -> KernelSpec {
        KernelSpec { gamma: self.gamma, jitter: self.jitter }
    }

    pub fn evidence_mode(&self) -> EvidenceMode {
        match self.evidence {
            EvidenceSetting::Exact => EvidenceMode::Exact,
            EvidenceSetting::Grid => EvidenceMode::Grid { points: self.grid_points },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Monte-Carlo checks pass when `|estimate - exact| < mc_sigma · SE`.
    #[serde(default = "default_mc_sigma")]
    pub mc_sigma: f64,
    /// Relative tolerance for closed form versus quadrature.
    #[serde(default = "default_closed_form_tol")]
    pub closed_form_tol: f64,
    /// poisgeo only: iid replications for the variance-bound check; 0 skips it.
    #[serde(default = "default_variance_replications")]
    pub variance_replications: usize,
    #[serde(default = "default_variance_draws")]
    pub variance_draws: usize,
}

fn default_mc_sigma() -> f64 {
    3.0
}
fn default_closed_form_tol() -> f64 {
    1e-6
}
fn default_variance_replications() -> usize {
    200
}
fn default_variance_draws() -> usize {
    10_000
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            mc_sigma: default_mc_sigma(),
            closed_form_tol: default_closed_form_tol(),
            variance_replications: default_variance_replications(),
            variance_draws: default_variance_draws(),
        }
    }
}

/// A parsed config plus the directory its relative paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, path, base_dir)
    }

    pub fn from_str(text: &str, path: &Path, base_dir: PathBuf) -> Result<Self, CliError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config { path: path.into(), message: e.to_string() })?;
        let loaded = Self { config, path: path.into(), base_dir };
        loaded.validate()?;
        Ok(loaded)
    }

    fn invalid(&self, message: impl Into<String>) -> CliError {
        CliError::Config { path: self.path.clone(), message: message.into() }
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        if c.prior_weights.len() != 2 {
            return Err(self.invalid(format!("prior_weights needs 2 entries, got {}", c.prior_weights.len())));
        }
        if c.prior_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(self.invalid("prior weights must be positive"));
        }
        let sum: f64 = c.prior_weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(self.invalid(format!("prior weights sum to {sum}, not 1")));
        }
        if c.analysis.bins == 0 {
            return Err(self.invalid("analysis.bins must be positive"));
        }
        if !(c.oracle.mc_sigma >= 0.0) || !(c.oracle.closed_form_tol >= 0.0) {
            return Err(self.invalid("oracle tolerances must be non-negative"));
        }
        if c.suite == Suite::Lincode && c.lincode.prediction_points == 0 {
            return Err(self.invalid("lincode.prediction_points must be positive"));
        }
        if let DataSource::Simulate(s) = &c.data {
            match c.suite {
                Suite::GaussianCheck => {
                    return Err(self.invalid("gaussian_check has no simulator; use [data.inline] value = ..."))
                }
                Suite::Poisgeo if s.theta.is_some() || s.k.is_some() => {
                    return Err(self.invalid("poisgeo simulation takes only seed, n and lambda"))
                }
                _ => {}
            }
        }
        let chain = self.chain_config();
        chain.validate().map_err(|e| self.invalid(e.to_string()))?;
        if let Some(scale) = c.sampler.scale {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(self.invalid(format!("sampler.scale must be positive, got {scale}")));
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> [f64; 2] {
        [self.config.prior_weights[0], self.config.prior_weights[1]]
    }

    /// Sampler settings with the suite defaults filled in.
    pub fn chain_config(&self) -> ChainConfig {
        let s = &self.config.sampler;
        let (iterations, thin) = match self.config.suite {
            Suite::Poisgeo => (poisgeo::DEFAULT_ITERATIONS, poisgeo::DEFAULT_THIN),
            Suite::Lincode => (lincode::DEFAULT_ITERATIONS, lincode::DEFAULT_THIN),
            Suite::GaussianCheck => (GAUSSIAN_ITERATIONS, GAUSSIAN_THIN),
        };
        let mut cfg = ChainConfig::new(s.iterations.unwrap_or(iterations), s.seed)
            .with_thin(s.thin.unwrap_or(thin))
            .with_adapt(s.adapt)
            .with_stream(s.stream);
        let default_burn_in = match self.config.suite {
            Suite::GaussianCheck if s.iterations.is_none() => Some(GAUSSIAN_BURN_IN),
            _ => None,
        };
        if let Some(b) = s.burn_in.or(default_burn_in) {
            cfg = cfg.with_burn_in(b);
        }
        cfg
    }

    /// Initial random-walk scale.
    pub fn scale(&self) -> f64 {
        self.config.sampler.scale.unwrap_or(match self.config.suite {
            Suite::GaussianCheck => GAUSSIAN_SCALE,
            _ => poisgeo::DEFAULT_SCALE,
        })
    }

    /// `--output-dir` wins; otherwise `output_dir` relative to the config
    /// file; otherwise `output/` next to it.
    pub fn output_dir(&self, cli_override: Option<&Path>) -> PathBuf {
        match (cli_override, &self.config.output_dir) {
            (Some(dir), _) => dir.to_path_buf(),
            (None, Some(dir)) => self.base_dir.join(dir),
            (None, None) => self.base_dir.join("output"),
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }
}

/// gaussian_check defaults: 10⁵ retained draws.
pub const GAUSSIAN_ITERATIONS: usize = 1_100_000;
pub const GAUSSIAN_THIN: usize = 10;
/// Burn-in for the default Gaussian chain, leaving exactly 10^5 retained draws.
pub const GAUSSIAN_BURN_IN: usize = 100_000;
pub const GAUSSIAN_SCALE: f64 = 2.0;

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<LoadedConfig, CliError> {
        LoadedConfig::from_str(text, Path::new("test.toml"), PathBuf::from("/base"))
    }

    const MINIMAL: &str = r#"
suite = "poisgeo"
[data.simulate]
seed = 1
[sampler]
seed = 2
"#;

    #[test]
    fn defaults_fill_in() {
        let c = load(MINIMAL).unwrap();
        let chain = c.chain_config();
        assert_eq!((chain.iterations, chain.thin, chain.burn_in), (100_000, 50, 10_000));
        assert_eq!(c.weights(), [0.5, 0.5]);
        assert_eq!(c.scale(), 0.5);
        assert_eq!(c.output_dir(None), PathBuf::from("/base/output"));
        assert_eq!(c.output_dir(Some(Path::new("x"))), PathBuf::from("x"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = load(&format!("{MINIMAL}\nbogus = 1\n")).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = load(&MINIMAL.replace("seed = 1", "seed = 1\nmu = 3")).unwrap_err();
        assert!(e.to_string().contains("mu"), "{e}");
    }

    #[test]
    fn seeds_are_mandatory() {
        assert!(load(&MINIMAL.replace("[sampler]\nseed = 2", "[sampler]\niterations = 1000")).is_err());
        assert!(load(&MINIMAL.replace("seed = 1\n", "n = 3\n")).is_err());
    }

    #[test]
    fn exactly_one_data_source() {
        let two = MINIMAL.replace("[sampler]", "[data.file]\npath = \"a.txt\"\n[sampler]");
        assert!(load(&two).is_err());
        let none = "suite = \"poisgeo\"\n[sampler]\nseed = 2\n";
        assert!(load(none).is_err());
    }

    #[test]
    fn weights_validated() {
        assert!(load(&format!("prior_weights = [0.3, 0.6]\n{MINIMAL}")).is_err());
        assert!(load(&format!("prior_weights = [1.0, 0.0]\n{MINIMAL}")).is_err());
        assert!(load(&format!("prior_weights = [0.25, 0.75]\n{MINIMAL}")).is_ok());
    }

    #[test]
    fn gaussian_check_cannot_simulate() {
        assert!(load(&MINIMAL.replace("poisgeo", "gaussian_check")).is_err());
        let inline = "suite = \"gaussian_check\"\n[data.inline]\nvalue = 0.0\n[sampler]\nseed = 1\n";
        let c = load(inline).unwrap();
        assert_eq!(c.chain_config().retained(), 100_000);
    }

    #[test]
    fn too_short_chains_are_config_errors() {
        let e = load(&MINIMAL.replace("seed = 2", "seed = 2\niterations = 100")).unwrap_err();
        assert_eq!(e.exit_code(), crate::error::EXIT_CONFIG);
    }
}
