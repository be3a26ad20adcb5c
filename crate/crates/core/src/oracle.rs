//! Brute-force ground truth for the estimators.
//!
//! Everything here takes a separate route from the code it checks: its own
//! log-gamma, per-observation likelihoods instead of sufficient statistics,
//! numerical quadrature instead of closed forms, and LU factorizations
//! instead of Cholesky whitening.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{CandidateModel, EnsembleError, MixtureEnsemble, Transform};
use crate::lincode::{LinCodeCollapsed, LinCodeError};
use crate::poisgeo::CountData;
use crate::quadrature::{integrate, integrate_log, QuadratureError, QuadratureSpec};

/// Truncation of the `η = log λ` axis.
pub const ETA_BOUND: f64 = 40.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("all counts are zero; the marginal is infinite")]
    ZeroSum,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    LinCode(#[from] LinCodeError),
    #[error("matrix is singular")]
    Singular,
    #[error("the 2-d quadrature oracle supports a single code coefficient, got {0}")]
    UnsupportedDimension(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `log |Γ(x)|` by the Lanczos approximation (g = 7, nine terms).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx).
        let s = (std::f64::consts::PI * x).sin().abs();
        return std::f64::consts::PI.ln() - s.ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + LANCZOS_G + 0.5;
    let series = LANCZOS[1..]
        .iter()
        .enumerate()
        .fold(LANCZOS[0], |acc, (i, c)| acc + c / (x + (i + 1) as f64));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

/// Which of the two count models to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountModel {
    Pois,
    Geo,
}

/// `log f(y | λ = e^η)` summed observation by observation.
pub fn count_loglik(data: &CountData, model: CountModel, eta: f64) -> f64 {
    let lambda = eta.exp();
    data.counts()
        .iter()
        .map(|&y| {
            let y = y as f64;
            match model {
                CountModel::Pois => y * eta - lambda - ln_gamma(y + 1.0),
                CountModel::Geo => y * eta - (y + 1.0) * (1.0 + lambda).ln(),
            }
        })
        .sum()
}

/// `log m(y)` by adaptive quadrature of `f(y|λ)/λ dλ = f(y|e^η) dη` over
/// `η ∈ [-40, 40]`.
pub fn quad_marginal_poisgeo(data: &CountData, model: CountModel) -> Result<QuadMarginal, OracleError> {
    quad_marginal_poisgeo_with(data, model, &QuadratureSpec::default())
}

pub fn quad_marginal_poisgeo_with(
    data: &CountData,
    model: CountModel,
    spec: &QuadratureSpec,
) -> Result<QuadMarginal, OracleError> {
    if data.sum() == 0 {
        return Err(OracleError::ZeroSum);
    }
    let q = integrate_log(|eta| count_loglik(data, model, eta), -ETA_BOUND, ETA_BOUND, spec)?;
    Ok(QuadMarginal { log_m: q.log_value, rel_error: q.rel_error })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadMarginal {
    pub log_m: f64,
    pub rel_error: f64,
}

/// `m0` and `m1` from their closed forms, evaluated with this module's
/// log-gamma.
pub fn closed_log_marginals(data: &CountData) -> Result<(f64, f64), OracleError> {
    if data.sum() == 0 {
        return Err(OracleError::ZeroSum);
    }
    let (s, n) = (data.sum() as f64, data.n() as f64);
    let log_fact: f64 = data.counts().iter().map(|&y| ln_gamma(y as f64 + 1.0)).sum();
    let m0 = ln_gamma(s) - s * n.ln() - log_fact;
    let m1 = ln_gamma(s) + ln_gamma(n) - ln_gamma(s + n);
    Ok((m0, m1))
}

/// Exact `π(M0 | y)` for the count models.
pub fn exact_prob_m0_poisgeo(data: &CountData, weights: [f64; 2]) -> Result<f64, OracleError> {
    let (m0, m1) = closed_log_marginals(data)?;
    Ok(1.0 / (1.0 + (weights[1].ln() + m1 - weights[0].ln() - m0).exp()))
}

/// One iid draw from the count mixture posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactDraw {
    pub lambda: f64,
    /// 0 for the Poisson component, 1 for the Geometric.
    pub component: usize,
}

/// Iid draws from `π0 Ga(S_n, rate n) + π1 BetaPrime(S_n, n)`.
///
/// The Geometric component's posterior `λ^{S_n-1}/(1+λ)^{S_n+n}` is the
/// law of `u/(1-u)` with `u ~ Beta(S_n, n)`: substituting `λ = u/(1-u)`,
/// `dλ = du/(1-u)²` gives `u^{S_n-1}(1-u)^{n-1}`.
pub fn exact_poisgeo_posterior_sampler(
    data: &CountData,
    weights: [f64; 2],
    draws: usize,
    seed: u64,
) -> Result<Vec<ExactDraw>, OracleError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    exact_poisgeo_posterior_draws(data, weights, draws, &mut rng)
}

pub fn exact_poisgeo_posterior_draws<R: Rng + ?Sized>(
    data: &CountData,
    weights: [f64; 2],
    draws: usize,
    rng: &mut R,
) -> Result<Vec<ExactDraw>, OracleError> {
    let pi1 = 1.0 - exact_prob_m0_poisgeo(data, weights)?;
    let (s, n) = (data.sum() as f64, data.n() as f64);
    let gamma = Gamma::new(s, 1.0 / n).map_err(|e| OracleError::InvalidArgument(e.to_string()))?;
    let beta = Beta::new(s, n).map_err(|e| OracleError::InvalidArgument(e.to_string()))?;
    Ok((0..draws)
        .map(|_| {
            let component = usize::from(rng.random::<f64>() < pi1);
            let lambda = if component == 0 {
                gamma.sample(rng)
            } else {
                let u = beta.sample(rng);
                u / (1.0 - u)
            };
            ExactDraw { lambda, component }
        })
        .collect())
}

/// Posterior CDF of `λ` under the count mixture, by quadrature over `η`.
pub fn poisgeo_posterior_cdf(data: &CountData, weights: [f64; 2], lambda: f64) -> Result<f64, OracleError> {
    if !(lambda > 0.0) {
        return Ok(0.0);
    }
    let (m0, m1) = closed_log_marginals(data)?;
    let (a, b) = (weights[0].ln(), weights[1].ln());
    let log_z = crate::ensemble::logsumexp(&[a + m0, b + m1]);
    let density = |eta: f64| {
        (a + count_loglik(data, CountModel::Pois, eta) - log_z).exp()
            + (b + count_loglik(data, CountModel::Geo, eta) - log_z).exp()
    };
    let upper = lambda.ln().min(ETA_BOUND);
    if upper <= -ETA_BOUND {
        return Ok(0.0);
    }
    let q = integrate(density, -ETA_BOUND, upper, &QuadratureSpec::with_tolerances(1e-12, 1e-10))?;
    Ok(q.value.clamp(0.0, 1.0))
}

/// Responsibility of the Poisson model at `λ = e^η`.
pub fn poisgeo_responsibility_m0(data: &CountData, weights: [f64; 2], eta: f64) -> f64 {
    let a = weights[0].ln() + count_loglik(data, CountModel::Pois, eta);
    let b = weights[1].ln() + count_loglik(data, CountModel::Geo, eta);
    1.0 / (1.0 + (b - a).exp())
}

/// Outcome of the iid variance check on `π̂(M0 | y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceCheck {
    pub replications: usize,
    pub draws: usize,
    pub exact_prob: f64,
    /// Sample variance (divisor `R - 1`) of the `R` estimates.
    pub empirical_variance: f64,
    /// `π(1-π)/S`.
    pub bound: f64,
    /// `bound · (1 + 4/√R)`.
    pub bound_with_slack: f64,
    pub passed: bool,
}

/// Draws `replications` iid samples of size `draws`, estimates `π(M0 | y)`
/// from each by averaging responsibilities, and compares the spread of the
/// estimates with `π(1-π)/S`.
pub fn variance_bound_check(
    data: &CountData,
    weights: [f64; 2],
    replications: usize,
    draws: usize,
    seed: u64,
) -> Result<VarianceCheck, OracleError> {
    if replications < 2 || draws == 0 {
        return Err(OracleError::InvalidArgument("need at least 2 replications and 1 draw".into()));
    }
    let exact = exact_prob_m0_poisgeo(data, weights)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let estimates = (0..replications)
        .map(|_| {
            let sample = exact_poisgeo_posterior_draws(data, weights, draws, &mut rng)?;
            Ok(sample.iter().map(|d| poisgeo_responsibility_m0(data, weights, d.lambda.ln())).sum::<f64>()
                / draws as f64)
        })
        .collect::<Result<Vec<f64>, OracleError>>()?;
    let r = replications as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let empirical_variance = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let bound = exact * (1.0 - exact) / draws as f64;
    let bound_with_slack = bound * (1.0 + 4.0 / r.sqrt());
    Ok(VarianceCheck {
        replications,
        draws,
        exact_prob: exact,
        empirical_variance,
        bound,
        bound_with_slack,
        passed: empirical_variance <= bound_with_slack,
    })
}

fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * (x - mean).powi(2) / var
}

/// Exact quantities of the conjugate Gaussian pair
/// `M0: y ~ N(0, 1)` versus `M1: y | μ ~ N(μ, 1)` with `μ ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianCase {
    pub m0: f64,
    pub m1: f64,
    pub prob_m0: f64,
}

/// `m0 = φ(y; 0, 1)`, `m1 = φ(y; 0, 2)` and `π(M0 | y)` at equal weights.
pub fn conjugate_gaussian_case(y: f64) -> GaussianCase {
    conjugate_gaussian_case_weighted(y, [0.5, 0.5])
}

pub fn conjugate_gaussian_case_weighted(y: f64, weights: [f64; 2]) -> GaussianCase {
    let (l0, l1) = (ln_normal_pdf(y, 0.0, 1.0), ln_normal_pdf(y, 0.0, 2.0));
    let prob_m0 = 1.0 / (1.0 + (weights[1].ln() + l1 - weights[0].ln() - l0).exp());
    GaussianCase { m0: l0.exp(), m1: l1.exp(), prob_m0 }
}

/// The Gaussian pair as an ensemble over `μ` with its `N(0, 1)` prior; the
/// datum is the scalar `y`. `M0` ignores `μ`.
pub fn gaussian_ensemble(weights: [f64; 2]) -> Result<MixtureEnsemble<f64>, EnsembleError> {
    MixtureEnsemble::new(
        vec![Transform::Identity],
        |mu: &[f64]| ln_normal_pdf(mu[0], 0.0, 1.0),
        vec![
            CandidateModel::new("m0", weights[0], |y: &f64, _: &[f64]| ln_normal_pdf(*y, 0.0, 1.0)),
            CandidateModel::new("m1", weights[1], |y: &f64, mu: &[f64]| ln_normal_pdf(*y, mu[0], 1.0)),
        ],
    )
}

/// Exact `π(M0 | y)` of the linear-code pair with `m1 = ∫₀¹ [y | k = 1/κ, M1] dκ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaMarginal {
    pub log_m0: f64,
    pub log_m1: f64,
    pub prob_m0: f64,
    pub rel_error: f64,
}

/// Integrates the collapsed evidence over κ on the open interval `(0, 1)`.
///
/// Always uses exact evidence evaluations, whatever mode the caches were
/// built with. The integrand stays bounded as κ → 0.
pub fn quad_kappa_marginal_lincode(caches: &LinCodeCollapsed) -> Result<KappaMarginal, OracleError> {
    quad_kappa_marginal_lincode_with(caches, &QuadratureSpec::default())
}

pub fn quad_kappa_marginal_lincode_with(
    caches: &LinCodeCollapsed,
    spec: &QuadratureSpec,
) -> Result<KappaMarginal, OracleError> {
    let q = integrate_log(
        |kappa| {
            if !(kappa > 0.0 && kappa < 1.0) {
                return f64::NEG_INFINITY;
            }
            caches.m1_given_k(1.0 / kappa).map_or(f64::NAN, |m| m.log_evidence)
        },
        0.0,
        1.0,
        spec,
    )?;
    let log_m0 = caches.m0().log_m0;
    let [p0, p1] = caches.prior_weights();
    let prob_m0 = 1.0 / (1.0 + (p1.ln() + q.log_value - p0.ln() - log_m0).exp());
    Ok(KappaMarginal { log_m0, log_m1: q.log_value, prob_m0, rel_error: q.rel_error })
}

/// `log ∫∫ N(y; gθ, λ²(I + k Corr)) dθ dλ/λ` by nested quadrature over
/// `(θ, η = log λ)`, for a single code coefficient.
///
/// The Gaussian density goes through an LU factorization of `I + k Corr`.
pub fn quad_m1_given_k_2d(
    y: &DVector<f64>,
    g: &DMatrix<f64>,
    corr: &DMatrix<f64>,
    k: f64,
) -> Result<f64, OracleError> {
    if g.ncols() != 1 {
        return Err(OracleError::UnsupportedDimension(g.ncols()));
    }
    let n = y.len();
    let v = DMatrix::identity(n, n) + corr * k;
    let lu = v.lu();
    let log_det = lu.determinant().ln();
    if !log_det.is_finite() {
        return Err(OracleError::Singular);
    }
    let g = g.column(0).into_owned();
    let vinv_y = lu.solve(y).ok_or(OracleError::Singular)?;
    let vinv_g = lu.solve(&g).ok_or(OracleError::Singular)?;
    // (y - gθ)'V⁻¹(y - gθ) = r² + c(θ - θ̂)²; the expanded form a - 2bθ + cθ²
    // cancels badly once divided by a small λ².
    let (b, c) = (g.dot(&vinv_y), g.dot(&vinv_g));
    let theta_hat = b / c;
    let resid = y - &g * theta_hat;
    let r2 = resid.dot(&lu.solve(&resid).ok_or(OracleError::Singular)?).max(f64::MIN_POSITIVE);
    let quad_form = |theta: f64| r2 + c * (theta - theta_hat).powi(2);
    let theta_sd = c.sqrt().recip();
    let eta_hat = 0.5 * (r2 / (n - 1) as f64).ln();
    let nf = n as f64;
    let spec = QuadratureSpec::with_tolerances(1e-14, 1e-9);
    let inner = |eta: f64| {
        let lambda = eta.exp();
        let half = 12.0 * lambda * theta_sd;
        integrate_log(
            |theta| {
                -0.5 * nf * (2.0 * std::f64::consts::PI).ln() - nf * eta - 0.5 * log_det
                    - 0.5 * quad_form(theta) / (lambda * lambda)
            },
            theta_hat - half,
            theta_hat + half,
            &spec,
        )
        .map_or(f64::NAN, |q| q.log_value)
    };
    let outer = integrate_log(inner, eta_hat - 8.0, eta_hat + 15.0, &QuadratureSpec::with_tolerances(1e-14, 1e-8))?;
    Ok(outer.log_value)
}
