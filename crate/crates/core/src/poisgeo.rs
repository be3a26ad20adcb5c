//! Poisson versus Geometric counts with a shared mean `λ`.
//!
//! Setting the geometric success probability to `1/(1+λ)` makes `λ` the mean
//! under both models, so one Jeffreys prior `π(λ) ∝ 1/λ` serves both. Chains
//! run on `η = log λ`, where that prior times the Jacobian `λ` is flat.
//!
//! With `S_n = Σ y_i ≥ 1` both marginals have closed forms:
//!
//! ```text
//! m0 = Γ(S_n) / (n^{S_n} Π y_i!)        m1 = Γ(S_n) Γ(n) / Γ(S_n + n)
//! ```

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::ensemble::{CandidateModel, EnsembleError, MixtureEnsemble, ParameterVector, Transform};
use crate::sampler::{chain_rng, run_chain, Chain, ChainConfig, ProposalSpec, SamplerError};

pub const DEFAULT_ITERATIONS: usize = 100_000;
pub const DEFAULT_THIN: usize = 50;
pub const DEFAULT_SCALE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoisGeoError {
    #[error("count data must contain at least one observation")]
    Empty,
    #[error("marginal undefined (improper prior mass at λ→0): all counts are zero")]
    ZeroSum,
    #[error("line {line}: `{text}` is not a non-negative integer count")]
    Parse { line: usize, text: String },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// Observed counts with the sufficient statistics cached.
#[derive(Debug, Clone, PartialEq)]
pub struct CountData {
    y: Vec<u64>,
    sum: u64,
    log_factorial_product: f64,
}

impl CountData {
    pub fn new(y: Vec<u64>) -> Result<Self, PoisGeoError> {
        if y.is_empty() {
            return Err(PoisGeoError::Empty);
        }
        let sum = y.iter().sum();
        let log_factorial_product = y.iter().map(|&v| ln_factorial(v)).sum();
        Ok(Self { y, sum, log_factorial_product })
    }

    /// Parses one decimal count per line; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, PoisGeoError> {
        let mut y = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            y.push(t.parse().map_err(|_| PoisGeoError::Parse { line: i + 1, text: t.into() })?);
        }
        Self::new(y)
    }

    /// One count per line, newline-terminated.
    pub fn to_text(&self) -> String {
        self.y.iter().fold(String::new(), |mut s, v| {
            let _ = writeln!(s, "{v}");
            s
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// `S_n`.
    pub fn sum(&self) -> u64 {
        self.sum
    }

    /// `log Π y_i!`.
    pub fn log_factorial_product(&self) -> f64 {
        self.log_factorial_product
    }

    fn require_positive_sum(&self) -> Result<(), PoisGeoError> {
        if self.sum == 0 {
            Err(PoisGeoError::ZeroSum)
        } else {
            Ok(())
        }
    }
}

/// `-nλ + S_n log λ - log Π y_i!`; `-inf` for `λ ≤ 0`.
pub fn pois_loglik(data: &CountData, lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return f64::NEG_INFINITY;
    }
    -(data.n() as f64) * lambda + data.sum as f64 * lambda.ln() - data.log_factorial_product
}

/// `S_n log λ - (S_n + n) log(1 + λ)`; `-inf` for `λ ≤ 0`.
pub fn geo_loglik(data: &CountData, lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return f64::NEG_INFINITY;
    }
    let s = data.sum as f64;
    s * lambda.ln() - (s + data.n() as f64) * lambda.ln_1p()
}

pub fn log_m0(data: &CountData) -> Result<f64, PoisGeoError> {
    data.require_positive_sum()?;
    let s = data.sum as f64;
    Ok(ln_gamma(s) - s * (data.n() as f64).ln() - data.log_factorial_product)
}

pub fn log_m1(data: &CountData) -> Result<f64, PoisGeoError> {
    data.require_positive_sum()?;
    let (s, n) = (data.sum as f64, data.n() as f64);
    Ok(ln_gamma(s) + ln_gamma(n) - ln_gamma(s + n))
}

/// `log B01 = log m0 - log m1`.
pub fn log_bf01(data: &CountData) -> Result<f64, PoisGeoError> {
    Ok(log_m0(data)? - log_m1(data)?)
}

/// Closed-form `π(M0 | y)` for prior weights `(p0, p1)`.
pub fn posterior_prob_m0(data: &CountData, weights: [f64; 2]) -> Result<f64, PoisGeoError> {
    let a = weights[0].ln() + log_m0(data)?;
    let b = weights[1].ln() + log_m1(data)?;
    Ok(1.0 / (1.0 + (b - a).exp()))
}

/// Per-model starting values `((S_n-1)/n, (S_n-1)/(n+1))`.
///
/// For `S_n < 2` both formulas give zero, outside the support; both fall
/// back to `max(S_n, 1)/n`.
pub fn initializers(data: &CountData) -> (f64, f64) {
    let n = data.n() as f64;
    if data.sum >= 2 {
        let s = data.sum as f64;
        ((s - 1.0) / n, (s - 1.0) / (n + 1.0))
    } else {
        let v = data.sum.max(1) as f64 / n;
        (v, v)
    }
}

/// `η = log λ̂` at the Poisson initializer.
pub fn initial_point(data: &CountData) -> ParameterVector {
    let (lambda, _) = initializers(data);
    ParameterVector::with_transforms(vec![lambda.ln()], vec![Transform::Log])
        .expect("initializer is positive and finite")
}

/// The two-model ensemble on `η = log λ` with model names `m0` (Poisson) and
/// `m1` (Geometric).
pub fn ensemble(weights: [f64; 2]) -> Result<MixtureEnsemble<CountData>, EnsembleError> {
    MixtureEnsemble::new(
        vec![Transform::Log],
        // Jeffreys 1/λ times the Jacobian λ.
        |_: &[f64]| 0.0,
        vec![
            CandidateModel::new("m0", weights[0], |d: &CountData, eta: &[f64]| {
                pois_loglik(d, eta[0].exp())
            }),
            CandidateModel::new("m1", weights[1], |d: &CountData, eta: &[f64]| {
                geo_loglik(d, eta[0].exp())
            }),
        ],
    )
}

pub fn default_proposal() -> ProposalSpec {
    ProposalSpec::RandomWalk { scales: vec![DEFAULT_SCALE] }
}

pub fn default_config(seed: u64) -> ChainConfig {
    ChainConfig::new(DEFAULT_ITERATIONS, seed).with_thin(DEFAULT_THIN)
}

/// Runs the suite's chain from the Poisson initializer.
///
/// Refuses all-zero data: the mixture posterior then behaves like `1/λ` at
/// the origin and does not integrate.
pub fn run(
    data: &CountData,
    ensemble: &MixtureEnsemble<CountData>,
    proposal: &ProposalSpec,
    config: &ChainConfig,
) -> Result<Chain, PoisGeoError> {
    data.require_positive_sum()?;
    Ok(run_chain(ensemble, data, &initial_point(data), proposal, config)?)
}

/// `n` Poisson(`λ`) variates from a `ChaCha20` stream keyed by `seed`.
///
/// Variates come from `rand_distr::Poisson` (inversion for small means,
/// transformed rejection above).
pub fn simulate(n: usize, lambda: f64, seed: u64) -> Result<CountData, PoisGeoError> {
    let mut rng = chain_rng(seed, 0);
    simulate_with(n, lambda, &mut rng)
}

pub fn simulate_with<R: Rng + ?Sized>(
    n: usize,
    lambda: f64,
    rng: &mut R,
) -> Result<CountData, PoisGeoError> {
    let dist = Poisson::new(lambda).map_err(|_| {
        PoisGeoError::Sampler(SamplerError::InvalidConfig(format!("invalid Poisson mean {lambda}")))
    })?;
    CountData::new((0..n).map(|_| dist.sample(rng) as u64).collect())
}
