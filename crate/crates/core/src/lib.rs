//! Bayesian model selection and averaging from one MCMC run.
//!
//! The model-averaged posterior of candidate models `f_k(y|θ)` with prior
//! weights `p_k` and shared prior `π(θ)` is proportional to
//! `Σ_k p_k f_k(y|θ) π(θ)`, the posterior of a single-datum mixture. Sampling
//! that density gives, from one chain:
//!
//! * the model-averaged posterior of `θ` (the draws themselves),
//! * posterior model probabilities, as averages of the per-draw
//!   responsibilities `w_k(θ) = p_k f_k(y|θ) / Σ_j p_j f_j(y|θ)`,
//! * Bayes factors, from ratios of those probabilities,
//! * each model's own posterior, by importance weighting the draws with `w_k`.
//!
//! Marginal likelihoods never appear, so a shared improper prior is fine as
//! long as the mixture posterior integrates.
//!
//! ```
//! use mixbma::analysis::BmaReport;
//! use mixbma::poisgeo::{self, CountData};
//! use mixbma::sampler::{run_chain, ChainConfig, ProposalSpec};
//!
//! let data = CountData::new(vec![0, 2, 1, 1, 0, 3, 1, 0, 2, 1]).unwrap();
//! let ensemble = poisgeo::ensemble([0.5, 0.5]).unwrap();
//! let init = poisgeo::initial_point(&data);
//! let proposal = ProposalSpec::random_walk(vec![0.5]).unwrap();
//! let config = ChainConfig::new(20_000, 1).with_thin(10);
//! let chain = run_chain(&ensemble, &data, &init, &proposal, &config).unwrap();
//! let report = BmaReport::from_chain(&chain, &ensemble, 30).unwrap();
//! let p = report.prob[0];
//! assert!(p > 0.0 && p < 1.0);
//! ```
//!
//! The guide under `book/` walks through the method and both bundled suites.

pub mod analysis;
pub mod ensemble;
pub mod lincode;
pub mod numfmt;
pub mod oracle;
pub mod poisgeo;
pub mod quadrature;
pub mod sampler;

pub use ensemble::{
    logsumexp, CandidateModel, EnsembleError, LogDensityValue, LogLikelihood, MixtureEnsemble,
    ParameterVector, Transform,
};
pub use sampler::{run_chain, Chain, ChainConfig, ProposalSpec, SamplerError};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/mixture-posterior.md")]
    mod mixture_posterior {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/poisson-geometric.md")]
    mod poisson_geometric {}
    #[doc = include_str!("../../../book/src/linear-code.md")]
    mod linear_code {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
}
