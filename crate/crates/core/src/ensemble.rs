//! Candidate models sharing one parameter vector, and the log density of the
//! single-datum mixture posterior `Σ_k p_k f_k(y|θ) π(θ)`.
//!
//! Sampling this density directly yields the model-averaged posterior, so no
//! marginal likelihood is ever computed on the hot path. The shared prior
//! `π(θ)` may be improper; only the mixture posterior needs to integrate.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `Σ_k p_k = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("an ensemble needs at least two candidate models, got {0}")]
    TooFewModels(usize),
    #[error("parameter dimension must be at least 1")]
    ZeroDimension,
    #[error("model `{name}` has invalid prior weight {weight} (must lie in (0, 1])")]
    InvalidWeight { name: String, weight: f64 },
    #[error("prior weights sum to {0}, expected 1")]
    WeightsDoNotSumToOne(f64),
    #[error("duplicate model name `{0}`")]
    DuplicateName(String),
    #[error("parameter has length {got}, ensemble dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter coordinate {index} is not finite ({value})")]
    NonFiniteParameter { index: usize, value: f64 },
    #[error("model `{0}` returned NaN log-likelihood")]
    NanLogLikelihood(String),
    #[error("log prior returned NaN")]
    NanLogPrior,
}

/// Sampling scale of a parameter coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    /// The coordinate stores `η = log(x)` for a positive quantity `x`.
    Log,
}

impl Transform {
    /// Maps a sampled coordinate back to its natural scale.
    pub fn to_natural(self, value: f64) -> f64 {
        match self {
            Transform::Identity => value,
            Transform::Log => value.exp(),
        }
    }

    pub fn from_natural(self, value: f64) -> f64 {
        match self {
            Transform::Identity => value,
            Transform::Log => value.ln(),
        }
    }
}

/// A point in the shared parameter space, on the sampling scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    values: Vec<f64>,
    transforms: Vec<Transform>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EnsembleError> {
        let transforms = vec![Transform::Identity; values.len()];
        Self::with_transforms(values, transforms)
    }

    pub fn with_transforms(
        values: Vec<f64>,
        transforms: Vec<Transform>,
    ) -> Result<Self, EnsembleError> {
        if values.is_empty() {
            return Err(EnsembleError::ZeroDimension);
        }
        if transforms.len() != values.len() {
            return Err(EnsembleError::DimensionMismatch {
                expected: values.len(),
                got: transforms.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(EnsembleError::NonFiniteParameter { index, value });
        }
        Ok(Self { values, transforms })
    }

    /// Builds a vector from natural-scale values, applying each transform.
    pub fn from_natural(
        natural: &[f64],
        transforms: &[Transform],
    ) -> Result<Self, EnsembleError> {
        let values = natural
            .iter()
            .zip(transforms)
            .map(|(&x, t)| t.from_natural(x))
            .collect();
        Self::with_transforms(values, transforms.to_vec())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn natural(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.transforms)
            .map(|(&v, t)| t.to_natural(v))
            .collect()
    }
}

/// Evaluates `log f_k(y | θ)` for one candidate model.
///
/// Values outside the model's support must come back as `-inf`, never as an
/// error and never as NaN.
pub trait LogLikelihood<D: ?Sized>: Send + Sync {
    fn log_likelihood(&self, data: &D, theta: &[f64]) -> f64;
}

impl<D: ?Sized, F> LogLikelihood<D> for F
where
    F: Fn(&D, &[f64]) -> f64 + Send + Sync,
{
    fn log_likelihood(&self, data: &D, theta: &[f64]) -> f64 {
        self(data, theta)
    }
}

pub struct CandidateModel<D: ?Sized> {
    name: String,
    prior_weight: f64,
    log_likelihood: Box<dyn LogLikelihood<D>>,
}

impl<D: ?Sized> CandidateModel<D> {
    pub fn new(
        name: impl Into<String>,
        prior_weight: f64,
        log_likelihood: impl LogLikelihood<D> + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            prior_weight,
            log_likelihood: Box::new(log_likelihood),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn prior_weight(&self) -> f64 {
        self.prior_weight
    }

    pub fn log_likelihood(&self, data: &D, theta: &[f64]) -> f64 {
        self.log_likelihood.log_likelihood(data, theta)
    }
}

impl<D: ?Sized> fmt::Debug for CandidateModel<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CandidateModel")
            .field("name", &self.name)
            .field("prior_weight", &self.prior_weight)
            .finish_non_exhaustive()
    }
}

type LogPrior = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Candidate models plus the shared, possibly improper, log prior.
pub struct MixtureEnsemble<D: ?Sized> {
    models: Vec<CandidateModel<D>>,
    log_prior: LogPrior,
    transforms: Vec<Transform>,
}

impl<D: ?Sized> fmt::Debug for MixtureEnsemble<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MixtureEnsemble")
            .field("models", &self.models)
            .field("transforms", &self.transforms)
            .finish_non_exhaustive()
    }
}

/// Cached result of one mixture evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDensityValue {
    /// `logsumexp_k(log p_k + log f_k) + log π(θ)`.
    pub total: f64,
    /// `logsumexp_k(log p_k + log f_k)`.
    pub log_mixture: f64,
    pub log_prior: f64,
    pub per_model_loglik: Vec<f64>,
}

impl<D: ?Sized> MixtureEnsemble<D> {
    /// `transforms` fixes the dimension and the sampling scale of each
    /// coordinate. Any Jacobian of those transforms belongs in `log_prior`.
    pub fn new(
        transforms: Vec<Transform>,
        log_prior: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        models: Vec<CandidateModel<D>>,
    ) -> Result<Self, EnsembleError> {
        if transforms.is_empty() {
            return Err(EnsembleError::ZeroDimension);
        }
        if models.len() < 2 {
            return Err(EnsembleError::TooFewModels(models.len()));
        }
        let mut seen = HashSet::new();
        for m in &models {
            if !(m.prior_weight > 0.0 && m.prior_weight <= 1.0) {
                return Err(EnsembleError::InvalidWeight {
                    name: m.name.clone(),
                    weight: m.prior_weight,
                });
            }
            if !seen.insert(m.name.as_str()) {
                return Err(EnsembleError::DuplicateName(m.name.clone()));
            }
        }
        let sum: f64 = models.iter().map(|m| m.prior_weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(EnsembleError::WeightsDoNotSumToOne(sum));
        }
        Ok(Self {
            models,
            log_prior: Box::new(log_prior),
            transforms,
        })
    }

    pub fn dimension(&self) -> usize {
        self.transforms.len()
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn models(&self) -> &[CandidateModel<D>] {
        &self.models
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn model_names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.name.clone()).collect()
    }

    pub fn prior_weights(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.prior_weight).collect()
    }

    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        (self.log_prior)(theta)
    }

    fn check_theta(&self, theta: &[f64]) -> Result<(), EnsembleError> {
        if theta.len() != self.dimension() {
            return Err(EnsembleError::DimensionMismatch {
                expected: self.dimension(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    /// Evaluates every model at `theta` and combines them in the log domain.
    pub fn log_mixture_likelihood(
        &self,
        data: &D,
        theta: &[f64],
    ) -> Result<LogDensityValue, EnsembleError> {
        self.check_theta(theta)?;
        let mut per_model_loglik = Vec::with_capacity(self.models.len());
        for m in &self.models {
            let ll = m.log_likelihood(data, theta);
            if ll.is_nan() {
                return Err(EnsembleError::NanLogLikelihood(m.name.clone()));
            }
            per_model_loglik.push(ll);
        }
        let log_prior = self.log_prior(theta);
        if log_prior.is_nan() {
            return Err(EnsembleError::NanLogPrior);
        }
        let log_mixture = weighted_logsumexp(&self.log_prior_weights(), &per_model_loglik);
        let total = if log_prior == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            log_mixture + log_prior
        };
        Ok(LogDensityValue {
            total,
            log_mixture,
            log_prior,
            per_model_loglik,
        })
    }

    pub fn log_unnormalized_posterior(&self, data: &D, theta: &[f64]) -> Result<f64, EnsembleError> {
        Ok(self.log_mixture_likelihood(data, theta)?.total)
    }

    fn log_prior_weights(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.prior_weight.ln()).collect()
    }
}

/// `log Σ exp(x_i)`, shifting by the maximum first.
///
/// Returns `-inf` for an empty slice or when every term is `-inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `log Σ exp(log_w_i + x_i)` for log weights `log_w`.
pub fn weighted_logsumexp(log_w: &[f64], xs: &[f64]) -> f64 {
    debug_assert_eq!(log_w.len(), xs.len());
    let terms: Vec<f64> = log_w.iter().zip(xs).map(|(w, x)| w + x).collect();
    logsumexp(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fixed(values: Vec<f64>, weights: Vec<f64>) -> MixtureEnsemble<()> {
        let models = values
            .into_iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (v, w))| CandidateModel::new(format!("m{i}"), w, move |_: &(), _: &[f64]| v))
            .collect();
        MixtureEnsemble::new(vec![Transform::Identity], |_: &[f64]| 0.0, models).unwrap()
    }

    #[test]
    fn identical_components_give_the_common_value() {
        let c: f64 = 0.3;
        let e = fixed(vec![c.ln(), c.ln()], vec![0.5, 0.5]);
        let v = e.log_mixture_likelihood(&(), &[0.0]).unwrap();
        assert_relative_eq!(v.total - v.log_prior, c.ln(), epsilon = 1e-15);
    }

    #[test]
    fn vanishing_component_is_legal() {
        let e = fixed(vec![2f64.ln(), f64::NEG_INFINITY], vec![0.5, 0.5]);
        let v = e.log_mixture_likelihood(&(), &[0.0]).unwrap();
        assert!(v.log_mixture.abs() < 1e-15);
        assert_eq!(v.per_model_loglik[1], f64::NEG_INFINITY);
    }

    #[test]
    fn deep_underflow_stays_finite() {
        let e = fixed(vec![-1000.0, -1001.0], vec![0.5, 0.5]);
        let v = e.log_mixture_likelihood(&(), &[0.0]).unwrap();
        let expected = -1000.0 + ((1.0 + (-1.0f64).exp()) / 2.0).ln();
        assert_relative_eq!(v.log_mixture, expected, max_relative = 1e-14);
        assert_relative_eq!(v.log_mixture, -1000.3799, epsilon = 1e-4);
    }

    #[test]
    fn nan_likelihood_names_the_model() {
        let e = fixed(vec![0.0, f64::NAN], vec![0.5, 0.5]);
        let err = e.log_mixture_likelihood(&(), &[0.0]).unwrap_err();
        assert_eq!(err, EnsembleError::NanLogLikelihood("m1".into()));
        assert!(err.to_string().contains("m1"));
    }

    #[test]
    fn prior_support_exclusion_gives_neg_infinity() {
        let models = vec![
            CandidateModel::new("a", 0.5, |_: &(), _: &[f64]| 0.0),
            CandidateModel::new("b", 0.5, |_: &(), _: &[f64]| 0.0),
        ];
        let e = MixtureEnsemble::new(
            vec![Transform::Identity],
            |t: &[f64]| if t[0] > 0.0 { 0.0 } else { f64::NEG_INFINITY },
            models,
        )
        .unwrap();
        assert_eq!(e.log_unnormalized_posterior(&(), &[-1.0]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(e.log_unnormalized_posterior(&(), &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn validation_errors() {
        let mk = |w: Vec<f64>, names: Vec<&str>| {
            let models = w
                .into_iter()
                .zip(names)
                .map(|(w, n)| CandidateModel::new(n, w, |_: &(), _: &[f64]| 0.0))
                .collect();
            MixtureEnsemble::new(vec![Transform::Identity], |_: &[f64]| 0.0, models)
        };
        assert!(matches!(mk(vec![1.0], vec!["a"]), Err(EnsembleError::TooFewModels(1))));
        assert!(matches!(
            mk(vec![0.5, 0.4], vec!["a", "b"]),
            Err(EnsembleError::WeightsDoNotSumToOne(_))
        ));
        assert!(matches!(
            mk(vec![1.0, 0.0], vec!["a", "b"]),
            Err(EnsembleError::InvalidWeight { .. })
        ));
        assert!(matches!(
            mk(vec![0.5, 0.5], vec!["a", "a"]),
            Err(EnsembleError::DuplicateName(_))
        ));
        let e = mk(vec![0.5, 0.5], vec!["a", "b"]).unwrap();
        assert!(matches!(
            e.log_mixture_likelihood(&(), &[0.0, 1.0]),
            Err(EnsembleError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn parameter_vector_rejects_non_finite() {
        assert!(ParameterVector::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(ParameterVector::new(vec![]).is_err());
        let p = ParameterVector::from_natural(&[2.0], &[Transform::Log]).unwrap();
        assert_relative_eq!(p.values()[0], 2f64.ln());
        assert_relative_eq!(p.natural()[0], 2.0, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn total_matches_recomputation(
            a in -800.0f64..10.0, b in -800.0f64..10.0, p in 0.01f64..0.99
        ) {
            let e = fixed(vec![a, b], vec![p, 1.0 - p]);
            let v = e.log_mixture_likelihood(&(), &[0.0]).unwrap();
            let m = a.max(b);
            let direct = m + (p * (a - m).exp() + (1.0 - p) * (b - m).exp()).ln();
            prop_assert!((v.total - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }

        #[test]
        fn additive_constant_shifts_total(
            a in -50.0f64..10.0, b in -50.0f64..10.0, c in -500.0f64..500.0
        ) {
            let base = fixed(vec![a, b], vec![0.3, 0.7]).log_mixture_likelihood(&(), &[0.0]).unwrap();
            let shifted = fixed(vec![a + c, b + c], vec![0.3, 0.7]).log_mixture_likelihood(&(), &[0.0]).unwrap();
            prop_assert!((shifted.total - base.total - c).abs() <= 1e-10 * c.abs().max(1.0));
        }

        #[test]
        fn equal_components_are_exact(v in -700.0f64..700.0, p in 0.01f64..0.99) {
            let e = fixed(vec![v, v], vec![p, 1.0 - p]);
            let r = e.log_mixture_likelihood(&(), &[0.0]).unwrap();
            prop_assert!((r.log_mixture - v).abs() <= 1e-12 * v.abs().max(1.0));
        }

        #[test]
        fn raising_one_component_raises_total(
            a in -50.0f64..10.0, b in -50.0f64..10.0, d in 1e-3f64..5.0
        ) {
            let lo = fixed(vec![a, b], vec![0.5, 0.5]).log_mixture_likelihood(&(), &[0.0]).unwrap();
            let hi = fixed(vec![a + d, b], vec![0.5, 0.5]).log_mixture_likelihood(&(), &[0.0]).unwrap();
            prop_assert!(hi.total >= lo.total);
            // Strict once the raised component is resolvable in the sum.
            if a + d > b - 30.0 {
                prop_assert!(hi.total > lo.total);
            }
        }
    }
}
