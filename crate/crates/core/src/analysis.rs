//! From a chain over the mixture posterior to model-averaging outputs.
//!
//! Everything here is a function of the cached per-model log-likelihoods and
//! the draws; nothing is re-evaluated. Confidence intervals treat the
//! (thinned) draws as independent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{logsumexp, MixtureEnsemble};
use crate::sampler::Chain;

/// Two-sided 95% normal quantile used in every confidence interval.
pub const Z95: f64 = 1.96;
/// Weighted summaries with an ESS below this carry a warning.
pub const MIN_SUMMARY_ESS: f64 = 10.0;
/// Minimum draws for a probability estimate.
pub const MIN_DRAWS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("draw {0}: every model has -inf log-likelihood")]
    AllModelsExcluded(usize),
    #[error("draw {row} has {got} log-likelihoods, expected {expected}")]
    RowLength { row: usize, expected: usize, got: usize },
    #[error("need at least {MIN_DRAWS} draws, got {0}")]
    TooFewDraws(usize),
    #[error("model {0} has zero estimated probability")]
    ZeroProbability(usize),
    #[error("model index {index} out of range for {n_models} models")]
    ModelOutOfRange { index: usize, n_models: usize },
    #[error("weights are all zero")]
    ZeroWeights,
    #[error("weights must be finite and non-negative")]
    InvalidWeights,
    #[error("{values} values but {weights} weights")]
    LengthMismatch { values: usize, weights: usize },
    #[error("ESS bound violated for model {model}: ESS {ess} < S·π̂ = {bound}")]
    EssBoundViolated { model: usize, ess: f64, bound: f64 },
    #[error("coordinate {index} out of range for dimension {dimension}")]
    CoordinateOutOfRange { index: usize, dimension: usize },
}

/// Per-draw posterior model weights `w_k(θ_s)`, one row per draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsibilityMatrix {
    rows: Vec<Vec<f64>>,
    n_models: usize,
}

impl ResponsibilityMatrix {
    /// Wraps precomputed rows. Each row must be a probability vector.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, AnalysisError> {
        let n_models = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_models {
                return Err(AnalysisError::RowLength { row: i, expected: n_models, got: r.len() });
            }
            if r.iter().any(|w| !(0.0..=1.0).contains(w)) {
                return Err(AnalysisError::InvalidWeights);
            }
        }
        Ok(Self { rows, n_models })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_draws(&self) -> usize {
        self.rows.len()
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }
}

/// `w_k = exp(log p_k + log f_k - logsumexp_j(log p_j + log f_j))` per row.
pub fn responsibilities_from_loglik(
    loglik: &[Vec<f64>],
    prior_weights: &[f64],
) -> Result<ResponsibilityMatrix, AnalysisError> {
    let log_p: Vec<f64> = prior_weights.iter().map(|p| p.ln()).collect();
    let n = prior_weights.len();
    let mut rows = Vec::with_capacity(loglik.len());
    for (s, ll) in loglik.iter().enumerate() {
        if ll.len() != n {
            return Err(AnalysisError::RowLength { row: s, expected: n, got: ll.len() });
        }
        let terms: Vec<f64> = log_p.iter().zip(ll).map(|(a, b)| a + b).collect();
        let norm = logsumexp(&terms);
        if !norm.is_finite() {
            return Err(AnalysisError::AllModelsExcluded(s));
        }
        rows.push(terms.iter().map(|t| (t - norm).exp()).collect());
    }
    Ok(ResponsibilityMatrix { rows, n_models: n })
}

pub fn responsibilities<D: ?Sized>(
    chain: &Chain,
    ensemble: &MixtureEnsemble<D>,
) -> Result<ResponsibilityMatrix, AnalysisError> {
    responsibilities_from_loglik(chain.per_model_loglik(), &ensemble.prior_weights())
}

/// Column means of the responsibilities with their CLT intervals, plus the
/// column covariance the Bayes-factor intervals need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProbabilities {
    pub prob: Vec<f64>,
    pub prob_ci: Vec<(f64, f64)>,
    /// Population covariance (divisor `S`) of the responsibility columns.
    pub covariance: Vec<Vec<f64>>,
    pub draws: usize,
}

impl ModelProbabilities {
    /// Monte-Carlo standard error of `prob[k]`.
    pub fn standard_error(&self, k: usize) -> f64 {
        (self.covariance[k][k] / self.draws as f64).sqrt()
    }
}

pub fn posterior_model_probabilities(
    w: &ResponsibilityMatrix,
) -> Result<ModelProbabilities, AnalysisError> {
    let s = w.n_draws();
    if s < MIN_DRAWS {
        return Err(AnalysisError::TooFewDraws(s));
    }
    let n = w.n_models();
    let sf = s as f64;
    let mut prob = vec![0.0; n];
    for r in w.rows() {
        for (p, x) in prob.iter_mut().zip(r) {
            *p += x;
        }
    }
    prob.iter_mut().for_each(|p| *p /= sf);
    let mut covariance = vec![vec![0.0; n]; n];
    for r in w.rows() {
        for k in 0..n {
            let dk = r[k] - prob[k];
            for l in k..n {
                covariance[k][l] += dk * (r[l] - prob[l]);
            }
        }
    }
    for k in 0..n {
        for l in k..n {
            covariance[k][l] /= sf;
            covariance[l][k] = covariance[k][l];
        }
    }
    let prob_ci = (0..n)
        .map(|k| {
            let half = Z95 * (covariance[k][k] / sf).sqrt();
            (prob[k] - half, prob[k] + half)
        })
        .collect();
    Ok(ModelProbabilities { prob, prob_ci, covariance, draws: s })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesFactor {
    pub estimate: f64,
    pub ci: (f64, f64),
    pub se: f64,
}

/// `BF_kl = (π̂_k / π̂_l) · (p_l / p_k)` with a delta-method interval on the
/// ratio of the two column means.
pub fn bayes_factor(
    probs: &ModelProbabilities,
    prior_weights: &[f64],
    k: usize,
    l: usize,
) -> Result<BayesFactor, AnalysisError> {
    let n = probs.prob.len();
    for index in [k, l] {
        if index >= n {
            return Err(AnalysisError::ModelOutOfRange { index, n_models: n });
        }
    }
    let (pk, pl) = (probs.prob[k], probs.prob[l]);
    if pl <= 0.0 {
        return Err(AnalysisError::ZeroProbability(l));
    }
    let estimate = pk / pl * prior_weights[l] / prior_weights[k];
    let cov = &probs.covariance;
    let rel_var = if pk > 0.0 {
        cov[k][k] / (pk * pk) + cov[l][l] / (pl * pl) - 2.0 * cov[k][l] / (pk * pl)
    } else {
        0.0
    };
    let se = estimate * (rel_var.max(0.0) / probs.draws as f64).sqrt();
    Ok(BayesFactor { estimate, ci: (estimate - Z95 * se, estimate + Z95 * se), se })
}

/// `(Σ w)² / Σ w²`.
pub fn ess(weights: &[f64]) -> Result<f64, AnalysisError> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(AnalysisError::InvalidWeights);
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(AnalysisError::ZeroWeights);
    }
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    Ok(sum * sum / sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSummary {
    pub mean: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub ess: f64,
    pub histogram: Vec<HistogramBin>,
    pub warning: Option<String>,
}

/// Smallest value whose cumulative normalized weight reaches `q`.
///
/// `order` must sort `values` ascending.
fn weighted_quantile(values: &[f64], weights: &[f64], order: &[usize], total: f64, q: f64) -> f64 {
    let target = q * total;
    let slack = 1e-12 * total;
    let mut cum = 0.0;
    for &i in order {
        cum += weights[i];
        if cum >= target - slack && weights[i] > 0.0 {
            return values[i];
        }
    }
    values[*order.iter().rev().find(|&&i| weights[i] > 0.0).expect("positive weight")]
}

/// Self-normalized importance summary of `values` under `weights`.
///
/// Histogram bins span `[min, max]` of all values, so summaries of the same
/// draws under different weights share bin edges.
pub fn weighted_summary(
    values: &[f64],
    weights: &[f64],
    bins: usize,
) -> Result<WeightedSummary, AnalysisError> {
    if values.len() != weights.len() {
        return Err(AnalysisError::LengthMismatch { values: values.len(), weights: weights.len() });
    }
    let ess = ess(weights)?;
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let q = |p| weighted_quantile(values, weights, &order, total, p);

    let lo = values[order[0]];
    let hi = values[*order.last().expect("non-empty")];
    let bins = bins.max(1);
    let histogram = if hi > lo {
        let width = (hi - lo) / bins as f64;
        let mut h: Vec<HistogramBin> = (0..bins)
            .map(|b| HistogramBin {
                left: lo + width * b as f64,
                right: if b + 1 == bins { hi } else { lo + width * (b + 1) as f64 },
                weight: 0.0,
            })
            .collect();
        for (v, w) in values.iter().zip(weights) {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            h[b].weight += w / total;
        }
        h
    } else {
        vec![HistogramBin { left: lo, right: hi, weight: 1.0 }]
    };

    let warning = (ess < MIN_SUMMARY_ESS)
        .then(|| format!("effective sample size {ess:.2} below {MIN_SUMMARY_ESS}"));
    Ok(WeightedSummary {
        mean,
        q025: q(0.025),
        q50: q(0.5),
        q975: q(0.975),
        ess,
        histogram,
        warning,
    })
}

/// Weighted summary of one chain coordinate on its natural scale.
pub fn weighted_summary_coordinate(
    chain: &Chain,
    weights: &[f64],
    coordinate: usize,
    bins: usize,
) -> Result<WeightedSummary, AnalysisError> {
    let values = chain.natural_coordinate(coordinate).map_err(|_| {
        AnalysisError::CoordinateOutOfRange { index: coordinate, dimension: chain.dimension() }
    })?;
    weighted_summary(&values, weights, bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSummary {
    pub coordinate: usize,
    /// Unweighted: the draws already follow the model-averaged posterior.
    pub bma: WeightedSummary,
    /// `None` for a model whose weights are all zero.
    pub per_model: Vec<Option<WeightedSummary>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmaReport {
    pub model_names: Vec<String>,
    pub prior_weights: Vec<f64>,
    pub draws: usize,
    pub prob: Vec<f64>,
    pub prob_ci: Vec<(f64, f64)>,
    pub prob_se: Vec<f64>,
    /// `bayes_factor[k][l] = BF_kl`; `None` when `π̂_l = 0`.
    pub bayes_factor: Vec<Vec<Option<f64>>>,
    pub bf_ci: Vec<Vec<Option<(f64, f64)>>>,
    pub ess: Vec<f64>,
    /// `S · π̂_k`.
    pub ess_lower_bound: Vec<f64>,
    /// `π̂_k (1 - π̂_k) / S`, the iid variance ceiling of `π̂_k`.
    pub variance_bound: Vec<f64>,
    pub summaries: Vec<CoordinateSummary>,
    pub warnings: Vec<String>,
}

impl BmaReport {
    pub fn from_chain<D: ?Sized>(
        chain: &Chain,
        ensemble: &MixtureEnsemble<D>,
        bins: usize,
    ) -> Result<Self, AnalysisError> {
        let w = responsibilities(chain, ensemble)?;
        Self::from_responsibilities(chain, &w, ensemble.model_names(), ensemble.prior_weights(), bins)
    }

    pub fn from_responsibilities(
        chain: &Chain,
        w: &ResponsibilityMatrix,
        model_names: Vec<String>,
        prior_weights: Vec<f64>,
        bins: usize,
    ) -> Result<Self, AnalysisError> {
        let probs = posterior_model_probabilities(w)?;
        let n = w.n_models();
        let s = w.n_draws() as f64;
        let mut warnings = Vec::new();

        let mut bayes_factor = vec![vec![None; n]; n];
        let mut bf_ci = vec![vec![None; n]; n];
        for k in 0..n {
            for l in 0..n {
                if let Ok(bf) = bayes_factor_entry(&probs, &prior_weights, k, l) {
                    bayes_factor[k][l] = Some(bf.estimate);
                    bf_ci[k][l] = Some(bf.ci);
                }
            }
        }

        let columns: Vec<Vec<f64>> = (0..n).map(|k| w.column(k)).collect();
        let mut ess_values = Vec::with_capacity(n);
        for (k, col) in columns.iter().enumerate() {
            match ess(col) {
                Ok(e) => ess_values.push(e),
                Err(_) => {
                    warnings.push(format!("model {}: all responsibilities are zero", model_names[k]));
                    ess_values.push(0.0);
                }
            }
        }

        let uniform = vec![1.0; w.n_draws()];
        let mut summaries = Vec::with_capacity(chain.dimension());
        for c in 0..chain.dimension() {
            let bma = weighted_summary_coordinate(chain, &uniform, c, bins)?;
            let per_model = columns
                .iter()
                .map(|col| weighted_summary_coordinate(chain, col, c, bins).ok())
                .collect::<Vec<_>>();
            for (k, summary) in per_model.iter().enumerate() {
                if let Some(warning) = summary.as_ref().and_then(|x| x.warning.as_ref()) {
                    let msg = format!("model {} coordinate {c}: {warning}", model_names[k]);
                    if !warnings.contains(&msg) {
                        warnings.push(msg);
                    }
                }
            }
            summaries.push(CoordinateSummary { coordinate: c, bma, per_model });
        }
        warnings.extend(chain.warnings().iter().cloned());

        Ok(BmaReport {
            model_names,
            prior_weights,
            draws: w.n_draws(),
            ess_lower_bound: probs.prob.iter().map(|p| s * p).collect(),
            variance_bound: probs.prob.iter().map(|p| p * (1.0 - p) / s).collect(),
            prob_se: (0..n).map(|k| probs.standard_error(k)).collect(),
            prob: probs.prob,
            prob_ci: probs.prob_ci,
            bayes_factor,
            bf_ci,
            ess: ess_values,
            summaries,
            warnings,
        })
    }
}

fn bayes_factor_entry(
    probs: &ModelProbabilities,
    prior_weights: &[f64],
    k: usize,
    l: usize,
) -> Result<BayesFactor, AnalysisError> {
    if k == l {
        return Ok(BayesFactor { estimate: 1.0, ci: (1.0, 1.0), se: 0.0 });
    }
    bayes_factor(probs, prior_weights, k, l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub model: usize,
    pub ess: f64,
    pub ess_lower_bound: f64,
    /// Reference ceiling for the variance of `π̂_k` under iid sampling.
    pub variance_bound: f64,
}

/// Verifies `ESS_k ≥ S·π̂_k` for every model (it holds pathwise because every
/// responsibility lies in `[0, 1]`), returning the per-model reference values.
pub fn check_bounds(report: &BmaReport) -> Result<Vec<BoundCheck>, AnalysisError> {
    let s = report.draws as f64;
    (0..report.prob.len())
        .map(|k| {
            let (e, bound) = (report.ess[k], report.ess_lower_bound[k]);
            if e < bound - 1e-9 * s {
                return Err(AnalysisError::EssBoundViolated { model: k, ess: e, bound });
            }
            Ok(BoundCheck {
                model: k,
                ess: e,
                ess_lower_bound: bound,
                variance_bound: report.variance_bound[k],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Transform;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn chain_of(values: Vec<f64>, loglik: Vec<Vec<f64>>) -> Chain {
        Chain::from_draws(values.into_iter().map(|v| vec![v]).collect(), loglik, vec![Transform::Identity])
    }

    #[test]
    fn equal_evidence_gives_uniform_rows() {
        let w = responsibilities_from_loglik(&[vec![-3.0, -3.0, -3.0]], &[1.0 / 3.0; 3]).unwrap();
        for x in &w.rows()[0] {
            assert_relative_eq!(*x, 1.0 / 3.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn prior_weights_pass_through() {
        let w = responsibilities_from_loglik(&[vec![-5.0, -5.0]], &[0.9, 0.1]).unwrap();
        assert_relative_eq!(w.rows()[0][0], 0.9, max_relative = 1e-14);
        assert_relative_eq!(w.rows()[0][1], 0.1, max_relative = 1e-14);
    }

    #[test]
    fn likelihood_ratio_three() {
        let w = responsibilities_from_loglik(&[vec![3f64.ln(), 0.0]], &[0.5, 0.5]).unwrap();
        assert_relative_eq!(w.rows()[0][0], 0.75, max_relative = 1e-14);
        assert_relative_eq!(w.rows()[0][1], 0.25, max_relative = 1e-14);
    }

    #[test]
    fn all_excluded_row_is_an_error() {
        let e = responsibilities_from_loglik(
            &[vec![0.0, 0.0], vec![f64::NEG_INFINITY, f64::NEG_INFINITY]],
            &[0.5, 0.5],
        );
        assert_eq!(e.unwrap_err(), AnalysisError::AllModelsExcluded(1));
    }

    #[test]
    fn degenerate_column_has_zero_width_interval() {
        let w = ResponsibilityMatrix::from_rows(vec![vec![1.0, 0.0]; 200]).unwrap();
        let p = posterior_model_probabilities(&w).unwrap();
        assert_eq!(p.prob, vec![1.0, 0.0]);
        assert_eq!(p.prob_ci[0], (1.0, 1.0));
        assert_eq!(p.prob_ci[1], (0.0, 0.0));
    }

    #[test]
    fn alternating_rows_have_bernoulli_interval() {
        let s = 400;
        let rows = (0..s).map(|i| if i % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
        let p = posterior_model_probabilities(&ResponsibilityMatrix::from_rows(rows).unwrap()).unwrap();
        let half = 1.96 * 0.5 / (s as f64).sqrt();
        for k in 0..2 {
            assert_relative_eq!(p.prob[k], 0.5);
            assert_relative_eq!(p.prob_ci[k].1 - p.prob[k], half, max_relative = 1e-12);
        }
    }

    #[test]
    fn too_few_draws() {
        let w = ResponsibilityMatrix::from_rows(vec![vec![0.5, 0.5]; 10]).unwrap();
        assert_eq!(posterior_model_probabilities(&w).unwrap_err(), AnalysisError::TooFewDraws(10));
    }

    fn probs(p: Vec<f64>) -> ModelProbabilities {
        let n = p.len();
        ModelProbabilities {
            prob_ci: p.iter().map(|&x| (x, x)).collect(),
            prob: p,
            covariance: vec![vec![0.0; n]; n],
            draws: 100,
        }
    }

    #[test]
    fn bayes_factor_arithmetic() {
        let bf = bayes_factor(&probs(vec![0.75, 0.25]), &[0.5, 0.5], 0, 1).unwrap();
        assert_relative_eq!(bf.estimate, 3.0, max_relative = 1e-15);
        let bf = bayes_factor(&probs(vec![0.3, 0.7]), &[0.3, 0.7], 0, 1).unwrap();
        assert_relative_eq!(bf.estimate, 1.0, max_relative = 1e-15);
        let bf = bayes_factor(&probs(vec![0.3, 0.7]), &[0.3, 0.7], 1, 0).unwrap();
        assert_relative_eq!(bf.estimate, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn bayes_factor_zero_denominator() {
        let e = bayes_factor(&probs(vec![1.0, 0.0]), &[0.5, 0.5], 0, 1).unwrap_err();
        assert_eq!(e, AnalysisError::ZeroProbability(1));
        assert!(e.to_string().contains("zero estimated probability"));
    }

    #[test]
    fn bayes_factor_delta_method_matches_finite_sample_formula() {
        // Two-model case: w0 + w1 = 1 so v0 = v1 = -c01 = v and
        // Var(BF) = BF² v (1/π0 + 1/π1)² / S.
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|i| {
                let a = 0.2 + 0.6 * ((i * 7919) % 1000) as f64 / 1000.0;
                vec![a, 1.0 - a]
            })
            .collect();
        let p = posterior_model_probabilities(&ResponsibilityMatrix::from_rows(rows).unwrap()).unwrap();
        let bf = bayes_factor(&p, &[0.5, 0.5], 0, 1).unwrap();
        let v = p.covariance[0][0];
        let expected = bf.estimate * (v / 1000.0).sqrt() * (1.0 / p.prob[0] + 1.0 / p.prob[1]);
        assert_relative_eq!(bf.se, expected, max_relative = 1e-10);
    }

    #[test]
    fn ess_cases() {
        assert_relative_eq!(ess(&[0.3; 50]).unwrap(), 50.0, max_relative = 1e-14);
        assert_relative_eq!(ess(&[0.0, 0.0, 0.7, 0.0]).unwrap(), 1.0);
        assert_relative_eq!(ess(&[1.0, 0.5]).unwrap(), 1.8, max_relative = 1e-15);
        assert_eq!(ess(&[0.0, 0.0]).unwrap_err(), AnalysisError::ZeroWeights);
    }

    #[test]
    fn ess_bound_examples() {
        // Column (1, 0.5): ESS 1.8 ≥ 2 · 0.75.
        let col = [1.0, 0.5];
        let e = ess(&col).unwrap();
        let pi_hat = (1.0 + 0.5) / 2.0;
        assert!(e >= 2.0 * pi_hat);
        // A column of ones makes the bound tight.
        assert_eq!(ess(&[1.0; 10]).unwrap(), 10.0);
    }

    #[test]
    fn check_bounds_flags_corrupted_report() {
        let values: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let loglik: Vec<Vec<f64>> = values.iter().map(|v| vec![-0.01 * v, 0.0]).collect();
        let chain = chain_of(values, loglik);
        let w = responsibilities_from_loglik(chain.per_model_loglik(), &[0.5, 0.5]).unwrap();
        let mut report =
            BmaReport::from_responsibilities(&chain, &w, vec!["a".into(), "b".into()], vec![0.5, 0.5], 10)
                .unwrap();
        assert_eq!(check_bounds(&report).unwrap().len(), 2);
        report.ess[0] = 0.5 * report.ess_lower_bound[0];
        assert!(matches!(check_bounds(&report), Err(AnalysisError::EssBoundViolated { model: 0, .. })));
    }

    #[test]
    fn uniform_weights_match_unweighted_summary() {
        let values: Vec<f64> = (0..1000).map(|i| ((i * 37) % 1000) as f64 / 10.0).collect();
        let s = weighted_summary(&values, &[2.5; 1000], 20).unwrap();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / 1000.0;
        assert_relative_eq!(s.mean, mean, max_relative = 1e-12);
        // Left-continuous inverse: index ceil(q S) - 1.
        assert_eq!(s.q025, sorted[24]);
        assert_eq!(s.q50, sorted[499]);
        assert_eq!(s.q975, sorted[974]);
        assert_relative_eq!(s.histogram.iter().map(|b| b.weight).sum::<f64>(), 1.0, max_relative = 1e-12);
        assert!(s.warning.is_none());
    }

    #[test]
    fn concentrated_weights_collapse_quantiles() {
        let values = vec![3.0, 1.0, 4.0, 1.5, 9.0];
        let s = weighted_summary(&values, &[0.0, 0.0, 1.0, 0.0, 0.0], 4).unwrap();
        assert_eq!((s.q025, s.q50, s.q975, s.mean), (4.0, 4.0, 4.0, 4.0));
        assert!(s.warning.is_some());
    }

    #[test]
    fn zero_weights_error() {
        assert!(weighted_summary(&[1.0, 2.0], &[0.0, 0.0], 3).is_err());
    }

    proptest! {
        #[test]
        fn rows_are_stochastic(
            rows in prop::collection::vec(prop::collection::vec(-700.0f64..50.0, 3), 1..50),
            a in 0.05f64..0.9,
        ) {
            let b = (1.0 - a) / 2.0;
            let w = responsibilities_from_loglik(&rows, &[a, b, b]).unwrap();
            for r in w.rows() {
                prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(r.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }

        #[test]
        fn report_identities(
            draws in prop::collection::vec((-5.0f64..5.0, -30.0f64..5.0, -30.0f64..5.0), 100..300),
            shift in -500.0f64..500.0,
        ) {
            let values: Vec<f64> = draws.iter().map(|d| d.0).collect();
            let loglik: Vec<Vec<f64>> = draws.iter().map(|d| vec![d.1, d.2]).collect();
            let shifted: Vec<Vec<f64>> = loglik.iter().map(|r| vec![r[0] + shift, r[1] + shift]).collect();
            let names = vec!["a".to_string(), "b".to_string()];
            let chain = chain_of(values.clone(), loglik.clone());
            let w = responsibilities_from_loglik(&loglik, &[0.4, 0.6]).unwrap();
            let r = BmaReport::from_responsibilities(&chain, &w, names.clone(), vec![0.4, 0.6], 10).unwrap();
            prop_assert!((r.prob.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(check_bounds(&r).is_ok());
            let (b01, b10) = (r.bayes_factor[0][1].unwrap(), r.bayes_factor[1][0].unwrap());
            prop_assert!((b01 * b10 - 1.0).abs() <= 1e-12);

            // Model-averaged mean decomposes over the per-model weighted means.
            let s = &r.summaries[0];
            let pooled = values.iter().sum::<f64>() / values.len() as f64;
            let decomposed: f64 = r.prob.iter().zip(&s.per_model)
                .map(|(p, m)| p * m.as_ref().unwrap().mean).sum();
            let scale = values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64;
            prop_assert!((pooled - decomposed).abs() <= 1e-10 * scale.max(pooled.abs()));

            // A common additive constant on every log-likelihood changes nothing.
            let chain2 = chain_of(values, shifted.clone());
            let w2 = responsibilities_from_loglik(&shifted, &[0.4, 0.6]).unwrap();
            let r2 = BmaReport::from_responsibilities(&chain2, &w2, names, vec![0.4, 0.6], 10).unwrap();
            for k in 0..2 {
                prop_assert!((r.prob[k] - r2.prob[k]).abs() <= 1e-12);
                prop_assert!((r.ess[k] - r2.ess[k]).abs() <= 1e-12 * r.ess[k]);
            }
            prop_assert!((b01 - r2.bayes_factor[0][1].unwrap()).abs() <= 1e-12 * b01);
        }
    }
}
