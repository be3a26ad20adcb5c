//! Linear code validation: is `y = h(x)θ + ε` enough, or does the code need a
//! Gaussian-process discrepancy `δ(x)`?
//!
//! * `M0`: `y | θ, λ ~ N(g_x θ, λ² I)`
//! * `M1`: `y | θ, λ, δ ~ N(g_x θ + δ, λ² I)`, `δ | λ, k ~ N(0, λ² k Corr)`
//!
//! with `π(θ) ∝ 1`, `π(λ) ∝ 1/λ`, `k = 1/κ` and `κ ~ U(0, 1)`. Here `λ²` is
//! the observation variance and `k` the ratio of discrepancy variance to noise
//! variance.
//!
//! `θ`, `λ` and `δ` integrate out analytically. With `a = (n-p)/2`,
//! `V_k = I + k Corr`, `μ̂₁ = (g'V_k⁻¹g)⁻¹ g'V_k⁻¹y`, `Σ̂₁ = (g'V_k⁻¹g)⁻¹`:
//!
//! ```text
//! [y | k, M1] = ½ Γ(a) π^{-a} (|Σ̂₁| / |V_k|)^{1/2} ‖V_k^{-1/2}(y - g μ̂₁)‖^{-(n-p)}
//! ```
//!
//! and `m0(y)` is the same expression at `k = 0`. Only `κ` is left to sample,
//! by independent Metropolis–Hastings with a uniform proposal; `θ`, `λ` and
//! `δ` are then redrawn from their conditionals.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::analysis::{responsibilities, weighted_summary, AnalysisError};
use crate::ensemble::{logsumexp, CandidateModel, EnsembleError, MixtureEnsemble, ParameterVector, Transform};
use crate::numfmt::sig17;
use crate::sampler::{chain_rng, run_chain, Chain, ChainConfig, ProposalSpec, SamplerError};

pub const DEFAULT_N: usize = 25;
pub const DEFAULT_THETA: f64 = 2.0;
pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_K: f64 = 25.0;
pub const DEFAULT_GAMMA: f64 = 0.2;
pub const DEFAULT_JITTER: f64 = 1e-8;
pub const DEFAULT_ITERATIONS: usize = 10_000;
pub const DEFAULT_THIN: usize = 10;
pub const DEFAULT_GRID_POINTS: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinCodeError {
    #[error("x has {x} entries but y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need n - p ≥ {min} (n = {n}, p = {p})")]
    TooFewObservations { n: usize, p: usize, min: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("correlation length must be positive, got {0}")]
    InvalidGamma(f64),
    #[error("jitter must be non-negative, got {0}")]
    InvalidJitter(f64),
    #[error("k must be non-negative, got {0}")]
    InvalidK(f64),
    #[error("matrix is not positive definite; try a larger jitter (currently {0})")]
    NotPositiveDefinite(f64),
    #[error("degenerate data: zero residual")]
    ZeroResidual,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty reconstruction")]
    NoDraws,
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// Basis functions `h(x)` of the linear code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CodeBasis {
    /// `h(x) = x`.
    #[default]
    Linear,
    /// `h(x) = (1, x)`.
    Affine,
}

impl CodeBasis {
    pub fn p(self) -> usize {
        match self {
            CodeBasis::Linear => 1,
            CodeBasis::Affine => 2,
        }
    }

    pub fn row(self, x: f64) -> Vec<f64> {
        match self {
            CodeBasis::Linear => vec![x],
            CodeBasis::Affine => vec![1.0, x],
        }
    }

    pub fn design(self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(x.len(), self.p(), |i, j| self.row(x[i])[j])
    }
}

/// Observations, covariates and the code's design matrix `g_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinCodeData {
    x: Vec<f64>,
    y: DVector<f64>,
    basis: CodeBasis,
    design: DMatrix<f64>,
}

impl LinCodeData {
    /// Requires a full-rank design and `n - p ≥ 3`.
    pub fn new(x: Vec<f64>, y: Vec<f64>, basis: CodeBasis) -> Result<Self, LinCodeError> {
        if x.len() != y.len() {
            return Err(LinCodeError::LengthMismatch { x: x.len(), y: y.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LinCodeError::NonFinite("x"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(LinCodeError::NonFinite("y"));
        }
        let (n, p) = (x.len(), basis.p());
        if n < p + 3 {
            return Err(LinCodeError::TooFewObservations { n, p, min: 3 });
        }
        let design = basis.design(&x);
        let sv = design.clone().svd(false, false).singular_values;
        if sv.min() <= 1e-12 * sv.max() {
            return Err(LinCodeError::RankDeficient);
        }
        Ok(Self { x, y: DVector::from_vec(y), basis, design })
    }

    /// Reads `x,y` rows after an `x,y` header.
    pub fn parse_csv(text: &str, basis: CodeBasis) -> Result<Self, LinCodeError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim().replace(' ', "") == "x,y" => {}
            Some((i, h)) => {
                return Err(LinCodeError::Parse { line: i + 1, message: format!("expected header `x,y`, got `{h}`") })
            }
            None => return Err(LinCodeError::Parse { line: 1, message: "empty file".into() }),
        }
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (i, line) in lines {
            let bad = |m: &str| LinCodeError::Parse { line: i + 1, message: m.into() };
            let (a, b) = line.split_once(',').ok_or_else(|| bad("expected two comma-separated values"))?;
            x.push(a.trim().parse().map_err(|_| bad("x is not a number"))?);
            y.push(b.trim().parse().map_err(|_| bad("y is not a number"))?);
        }
        Self::new(x, y, basis)
    }

    /// `x,y` header then one row per observation, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y\n");
        for (x, y) in self.x.iter().zip(self.y.iter()) {
            let _ = writeln!(s, "{},{}", sig17(*x), sig17(*y));
        }
        s
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn basis(&self) -> CodeBasis {
        self.basis
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn p(&self) -> usize {
        self.basis.p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub gamma: f64,
    pub jitter: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { gamma: DEFAULT_GAMMA, jitter: DEFAULT_JITTER }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<(), LinCodeError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(LinCodeError::InvalidGamma(self.gamma));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(LinCodeError::InvalidJitter(self.jitter));
        }
        Ok(())
    }

    /// `exp(-((a - b)/γ)²)`, without jitter.
    pub fn correlation(&self, a: f64, b: f64) -> f64 {
        let r = (a - b) / self.gamma;
        (-r * r).exp()
    }
}

/// Squared-exponential correlation matrix with `jitter` on the diagonal.
pub fn se_kernel(x: &[f64], spec: &KernelSpec) -> Result<DMatrix<f64>, LinCodeError> {
    spec.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinCodeError::NonFinite("x"));
    }
    let n = x.len();
    let corr = DMatrix::from_fn(n, n, |i, j| {
        spec.correlation(x[i], x[j]) + if i == j { spec.jitter } else { 0.0 }
    });
    if Cholesky::new(corr.clone()).is_none() {
        return Err(LinCodeError::NotPositiveDefinite(spec.jitter));
    }
    Ok(corr)
}

/// Generalized least squares in whitened coordinates: ordinary least squares
/// of `yw` on `gw` through an SVD.
struct Gls {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    log_det_sigma: f64,
    residual_norm: f64,
}

fn gls(yw: &DVector<f64>, gw: &DMatrix<f64>) -> Result<Gls, LinCodeError> {
    let svd = gw.clone().svd(true, true);
    let (u, v_t) = (svd.u.as_ref().expect("u"), svd.v_t.as_ref().expect("v_t"));
    let sv = &svd.singular_values;
    if sv.min() <= 1e-12 * sv.max() {
        return Err(LinCodeError::RankDeficient);
    }
    let uty = u.transpose() * yw;
    let scaled = uty.component_div(sv);
    let mu = v_t.transpose() * scaled;
    let inv_sq = sv.map(|s| 1.0 / (s * s));
    let sigma = v_t.transpose() * DMatrix::from_diagonal(&inv_sq) * v_t;
    let log_det_sigma = -2.0 * sv.iter().map(|s| s.ln()).sum::<f64>();
    let residual_norm = (yw - gw * &mu).norm();
    if residual_norm < 1e-12 * yw.norm() {
        return Err(LinCodeError::ZeroResidual);
    }
    Ok(Gls { mu, sigma, log_det_sigma, residual_norm })
}

/// `log(½ Γ(a) π^{-a} (|Σ̂| / |V|)^{1/2} R^{-(n-p)})` with `a = (n-p)/2`.
fn log_collapsed_evidence(n: usize, p: usize, log_det_sigma: f64, log_det_v: f64, residual: f64) -> f64 {
    let dof = (n - p) as f64;
    let a = 0.5 * dof;
    -std::f64::consts::LN_2 + ln_gamma(a) - a * std::f64::consts::PI.ln()
        + 0.5 * (log_det_sigma - log_det_v)
        - dof * residual.ln()
}

/// `M0` with `θ` and `λ` integrated out.
#[derive(Debug, Clone, PartialEq)]
pub struct M0Collapsed {
    pub log_m0: f64,
    pub mu0: DVector<f64>,
    pub sigma0: DMatrix<f64>,
    pub residual_norm: f64,
}

/// `log m0`, `μ̂₀ = (g'g)⁻¹g'y` and `Σ̂₀ = (g'g)⁻¹` for any `y` and
/// full-rank `g` with more rows than columns.
pub fn collapsed_m0_raw(y: &DVector<f64>, g: &DMatrix<f64>) -> Result<M0Collapsed, LinCodeError> {
    let (n, p) = g.shape();
    if n <= p {
        return Err(LinCodeError::TooFewObservations { n, p, min: 1 });
    }
    let fit = gls(y, g)?;
    Ok(M0Collapsed {
        log_m0: log_collapsed_evidence(n, p, fit.log_det_sigma, 0.0, fit.residual_norm),
        mu0: fit.mu,
        sigma0: fit.sigma,
        residual_norm: fit.residual_norm,
    })
}

pub fn collapsed_m0(data: &LinCodeData) -> Result<M0Collapsed, LinCodeError> {
    collapsed_m0_raw(&data.y, &data.design)
}

/// `M1` at fixed `k` with `δ`, `θ` and `λ` integrated out.
#[derive(Debug, Clone, PartialEq)]
pub struct M1Collapsed {
    pub k: f64,
    pub log_evidence: f64,
    pub mu1: DVector<f64>,
    pub sigma1: DMatrix<f64>,
    /// `‖V_k^{-1/2}(y - g μ̂₁)‖`.
    pub whitened_residual_norm: f64,
    pub log_det_v: f64,
}

/// `log [y | k, M1]` via the Cholesky factor `L` of `V_k = I + k Corr`:
/// `log|V_k| = 2 Σ log L_ii` and whitening by triangular solves with `L`.
pub fn collapsed_m1_given_k(
    y: &DVector<f64>,
    g: &DMatrix<f64>,
    corr: &DMatrix<f64>,
    k: f64,
) -> Result<M1Collapsed, LinCodeError> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(LinCodeError::InvalidK(k));
    }
    let (n, p) = g.shape();
    if n <= p {
        return Err(LinCodeError::TooFewObservations { n, p, min: 1 });
    }
    let v = DMatrix::identity(n, n) + corr * k;
    let chol = Cholesky::new(v).ok_or(LinCodeError::NotPositiveDefinite(0.0))?;
    let l = chol.l();
    let log_det_v = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let yw = l.solve_lower_triangular(y).ok_or(LinCodeError::NotPositiveDefinite(0.0))?;
    let gw = l.solve_lower_triangular(g).ok_or(LinCodeError::NotPositiveDefinite(0.0))?;
    let fit = gls(&yw, &gw)?;
    Ok(M1Collapsed {
        k,
        log_evidence: log_collapsed_evidence(n, p, fit.log_det_sigma, log_det_v, fit.residual_norm),
        mu1: fit.mu,
        sigma1: fit.sigma,
        whitened_residual_norm: fit.residual_norm,
        log_det_v,
    })
}

/// How `log [y | k = 1/κ, M1]` is evaluated during sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceMode {
    /// Recompute the `O(n³)` factorization for every κ.
    #[default]
    Exact,
    /// Precompute on `points` midpoints `κ_i = (i + ½)/points` and
    /// interpolate linearly in κ (constant beyond the outermost points).
    Grid { points: usize },
}

/// Data, correlation matrix and the κ-independent quantities of both models.
#[derive(Debug, Clone)]
pub struct LinCodeCollapsed {
    data: LinCodeData,
    spec: KernelSpec,
    corr: DMatrix<f64>,
    corr_chol: Cholesky<f64, Dyn>,
    prior_weights: [f64; 2],
    m0: M0Collapsed,
    grid: Option<Vec<f64>>,
}

impl LinCodeCollapsed {
    pub fn new(
        data: LinCodeData,
        spec: KernelSpec,
        prior_weights: [f64; 2],
        mode: EvidenceMode,
    ) -> Result<Self, LinCodeError> {
        let corr = se_kernel(&data.x, &spec)?;
        let corr_chol = Cholesky::new(corr.clone()).ok_or(LinCodeError::NotPositiveDefinite(spec.jitter))?;
        let m0 = collapsed_m0(&data)?;
        let mut this = Self { data, spec, corr, corr_chol, prior_weights, m0, grid: None };
        if let EvidenceMode::Grid { points } = mode {
            let points = points.max(2);
            let grid = (0..points)
                .map(|i| this.exact_log_m1((i as f64 + 0.5) / points as f64))
                .collect::<Result<Vec<_>, _>>()?;
            this.grid = Some(grid);
        }
        Ok(this)
    }

    pub fn data(&self) -> &LinCodeData {
        &self.data
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn corr(&self) -> &DMatrix<f64> {
        &self.corr
    }

    pub fn prior_weights(&self) -> [f64; 2] {
        self.prior_weights
    }

    pub fn m0(&self) -> &M0Collapsed {
        &self.m0
    }

    pub fn m1_given_k(&self, k: f64) -> Result<M1Collapsed, LinCodeError> {
        collapsed_m1_given_k(&self.data.y, &self.data.design, &self.corr, k)
    }

    fn exact_log_m1(&self, kappa: f64) -> Result<f64, LinCodeError> {
        Ok(self.m1_given_k(1.0 / kappa)?.log_evidence)
    }

    /// `log [y | k = 1/κ, M1]`; `-inf` outside `(0, 1)`, NaN if the
    /// factorization fails.
    pub fn log_m1_given_kappa(&self, kappa: f64) -> f64 {
        if !(kappa > 0.0 && kappa < 1.0) {
            return f64::NEG_INFINITY;
        }
        match &self.grid {
            None => self.exact_log_m1(kappa).unwrap_or(f64::NAN),
            Some(grid) => {
                let m = grid.len();
                let pos = kappa * m as f64 - 0.5;
                if pos <= 0.0 {
                    grid[0]
                } else if pos >= (m - 1) as f64 {
                    grid[m - 1]
                } else {
                    let i = pos.floor() as usize;
                    let t = pos - i as f64;
                    grid[i] * (1.0 - t) + grid[i + 1] * t
                }
            }
        }
    }

    /// `log π(κ | y)` up to a constant:
    /// `log(p0 m0 + p1 [y | k = 1/κ, M1])` on `(0, 1)`, `-inf` elsewhere.
    pub fn kappa_log_posterior(&self, kappa: f64) -> f64 {
        if !(kappa > 0.0 && kappa < 1.0) {
            return f64::NEG_INFINITY;
        }
        logsumexp(&[
            self.prior_weights[0].ln() + self.m0.log_m0,
            self.prior_weights[1].ln() + self.log_m1_given_kappa(kappa),
        ])
    }

    /// `π(M0 | κ, y)`.
    pub fn conditional_model_prob(&self, kappa: f64) -> f64 {
        let a = self.prior_weights[0].ln() + self.m0.log_m0;
        let b = self.prior_weights[1].ln() + self.log_m1_given_kappa(kappa);
        let norm = logsumexp(&[a, b]);
        (a - norm).exp()
    }

    /// The two-model ensemble over `κ` alone, with the collapsed evidences as
    /// likelihoods and the uniform prior on `(0, 1)`.
    pub fn ensemble(&self) -> Result<MixtureEnsemble<LinCodeCollapsed>, EnsembleError> {
        MixtureEnsemble::new(
            vec![Transform::Identity],
            |k: &[f64]| if k[0] > 0.0 && k[0] < 1.0 { 0.0 } else { f64::NEG_INFINITY },
            vec![
                CandidateModel::new("m0", self.prior_weights[0], |c: &LinCodeCollapsed, _: &[f64]| c.m0.log_m0),
                CandidateModel::new("m1", self.prior_weights[1], |c: &LinCodeCollapsed, k: &[f64]| {
                    c.log_m1_given_kappa(k[0])
                }),
            ],
        )
    }
}

pub fn default_config(seed: u64) -> ChainConfig {
    ChainConfig::new(DEFAULT_ITERATIONS, seed).with_thin(DEFAULT_THIN)
}

pub fn kappa_proposal() -> ProposalSpec {
    ProposalSpec::Independent { bounds: vec![(0.0, 1.0)] }
}

/// Independent MH over κ with uniform proposals on `(0, 1)`, started at ½.
pub fn run_kappa_imh(
    caches: &LinCodeCollapsed,
    ensemble: &MixtureEnsemble<LinCodeCollapsed>,
    config: &ChainConfig,
) -> Result<Chain, LinCodeError> {
    let init = ParameterVector::new(vec![0.5])?;
    Ok(run_chain(ensemble, caches, &init, &kappa_proposal(), config)?)
}

/// One joint posterior draw rebuilt from a κ draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionDraw {
    /// 0 for `M0`, 1 for `M1`.
    pub zeta: u8,
    /// Observation precision `1/λ²`.
    pub tau: f64,
    pub theta: Vec<f64>,
    /// Discrepancy at the observed `x`; all zeros when `zeta == 0`.
    pub delta: Vec<f64>,
    pub kappa: f64,
}

impl ReconstructionDraw {
    pub fn lambda2(&self) -> f64 {
        1.0 / self.tau
    }

    pub fn lambda(&self) -> f64 {
        self.lambda2().sqrt()
    }
}

fn mvn_draw<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, scale: f64, rng: &mut R) -> DVector<f64> {
    // Eigen square root tolerates the near-singular covariances of smooth kernels.
    let eig = SymmetricEigen::new(0.5 * (cov + cov.transpose()));
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt()).component_mul(&(eig.eigenvectors.transpose() * z));
    mean + eig.eigenvectors * root * scale
}

/// `V = k Corr (I + k Corr)⁻¹`, the discrepancy's conditional covariance in
/// units of `λ²`; equal to `(I + Corr⁻¹/k)⁻¹` without inverting `Corr`.
pub fn delta_covariance(corr: &DMatrix<f64>, k: f64) -> Result<DMatrix<f64>, LinCodeError> {
    let n = corr.nrows();
    let kc = corr * k;
    let chol = Cholesky::new(DMatrix::identity(n, n) + &kc).ok_or(LinCodeError::NotPositiveDefinite(0.0))?;
    // (I + kC)⁻¹ kC commutes with kC, so it equals kC (I + kC)⁻¹.
    let v = chol.solve(&kc);
    Ok(0.5 * (&v + v.transpose()))
}

/// Draws `(τ, θ, δ)` from their full conditionals under model `zeta` at κ.
///
/// `τ ~ Ga((n-p)/2, R²/2)`, `θ | τ ~ N(μ̂, Σ̂/τ)` and, under `M1`,
/// `δ | θ, τ, k ~ N(V(y - gθ), V/τ)`.
pub fn conditional_draw<R: Rng + ?Sized>(
    caches: &LinCodeCollapsed,
    kappa: f64,
    zeta: u8,
    rng: &mut R,
) -> Result<ReconstructionDraw, LinCodeError> {
    let data = &caches.data;
    let (n, p) = (data.n(), data.p());
    let shape = 0.5 * (n - p) as f64;
    let (mu, sigma, resid) = if zeta == 0 {
        (caches.m0.mu0.clone(), caches.m0.sigma0.clone(), caches.m0.residual_norm)
    } else {
        let m1 = caches.m1_given_k(1.0 / kappa)?;
        (m1.mu1, m1.sigma1, m1.whitened_residual_norm)
    };
    let rate = 0.5 * resid * resid;
    let tau = Gamma::new(shape, 1.0 / rate)
        .map_err(|_| LinCodeError::NonFinite("gamma rate"))?
        .sample(rng);
    let lambda = tau.sqrt().recip();
    let theta = mvn_draw(&mu, &sigma, lambda, rng);
    let delta = if zeta == 0 {
        DVector::zeros(n)
    } else {
        let v = delta_covariance(&caches.corr, 1.0 / kappa)?;
        let mean = &v * (&data.y - &data.design * &theta);
        mvn_draw(&mean, &v, lambda, rng)
    };
    Ok(ReconstructionDraw {
        zeta,
        tau,
        theta: theta.iter().copied().collect(),
        delta: delta.iter().copied().collect(),
        kappa,
    })
}

/// For each κ draw, picks a model with probability `π(M_ζ | κ, y)` and then
/// draws the remaining parameters from that model's conditionals.
pub fn reconstruct<R: Rng + ?Sized>(
    chain: &Chain,
    caches: &LinCodeCollapsed,
    ensemble: &MixtureEnsemble<LinCodeCollapsed>,
    rng: &mut R,
) -> Result<Vec<ReconstructionDraw>, LinCodeError> {
    if chain.is_empty() {
        return Err(LinCodeError::NoDraws);
    }
    let w = responsibilities(chain, ensemble)?;
    chain
        .draws()
        .iter()
        .zip(w.rows())
        .map(|(draw, row)| {
            let u: f64 = rng.random();
            let zeta = u8::from(u < row[1]);
            conditional_draw(caches, draw[0], zeta, rng)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TendencyGroup {
    M0,
    M1,
    Bma,
}

impl TendencyGroup {
    pub fn label(self) -> &'static str {
        match self {
            TendencyGroup::M0 => "m0",
            TendencyGroup::M1 => "m1",
            TendencyGroup::Bma => "bma",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TendencyRow {
    pub x: f64,
    pub group: TendencyGroup,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TendencyPrediction {
    pub rows: Vec<TendencyRow>,
    pub warnings: Vec<String>,
}

/// `δ(x*) = Corr(x*, x) Corr⁻¹ δ`; exactly `δ_i` when `x*` is an observed `x_i`.
fn interpolate_delta(caches: &LinCodeCollapsed, corr_inv_delta: &DVector<f64>, delta: &[f64], xs: f64) -> f64 {
    let x = &caches.data.x;
    if let Some(i) = x.iter().position(|&xi| xi == xs) {
        return delta[i];
    }
    x.iter()
        .zip(corr_inv_delta.iter())
        .map(|(&xi, c)| caches.spec.correlation(xs, xi) * c)
        .sum()
}

/// Pointwise mean and 95% band of `h(x)θ_s + 1{ζ_s = 1} δ_s(x)` per model
/// group (draws assigned by `ζ_s`) and pooled.
pub fn predict_tendency(
    draws: &[ReconstructionDraw],
    caches: &LinCodeCollapsed,
    x_grid: &[f64],
) -> Result<TendencyPrediction, LinCodeError> {
    if draws.is_empty() {
        return Err(LinCodeError::NoDraws);
    }
    let basis = caches.data.basis;
    let curves: Vec<Vec<f64>> = draws
        .iter()
        .map(|d| {
            let coef = if d.zeta == 1 {
                Some(caches.corr_chol.solve(&DVector::from_column_slice(&d.delta)))
            } else {
                None
            };
            x_grid
                .iter()
                .map(|&xs| {
                    let code: f64 = basis.row(xs).iter().zip(&d.theta).map(|(h, t)| h * t).sum();
                    code + coef.as_ref().map_or(0.0, |c| interpolate_delta(caches, c, &d.delta, xs))
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for group in [TendencyGroup::M0, TendencyGroup::M1, TendencyGroup::Bma] {
        let members: Vec<usize> = (0..draws.len())
            .filter(|&s| match group {
                TendencyGroup::M0 => draws[s].zeta == 0,
                TendencyGroup::M1 => draws[s].zeta == 1,
                TendencyGroup::Bma => true,
            })
            .collect();
        if members.is_empty() {
            warnings.push(format!("no draws assigned to {}; curve omitted", group.label()));
            continue;
        }
        let ones = vec![1.0; members.len()];
        for (j, &xs) in x_grid.iter().enumerate() {
            let values: Vec<f64> = members.iter().map(|&s| curves[s][j]).collect();
            let summary = weighted_summary(&values, &ones, 1)?;
            rows.push(TendencyRow { x: xs, group, mean: summary.mean, q025: summary.q025, q975: summary.q975 });
        }
    }
    Ok(TendencyPrediction { rows, warnings })
}

/// `x,group,mean,q025,q975` rows, 17 significant digits.
pub fn prediction_csv(rows: &[TendencyRow]) -> String {
    let mut s = String::from("x,group,mean,q025,q975\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", sig17(r.x), r.group.label(), sig17(r.mean), sig17(r.q025), sig17(r.q975));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedLinCode {
    pub data: LinCodeData,
    /// The discrepancy at the observed `x`.
    pub delta: Vec<f64>,
}

/// Data generated under `M1`: `x` equispaced on `[0, 1]`,
/// `δ ~ N(0, λ² k Corr)` and `y = g θ + δ + ε` with `ε ~ N(0, λ² I)`.
///
/// Draws `n` normals for `δ` (skipped when `k = 0`) and then `n` for `ε`.
pub fn simulate_lincode(
    n: usize,
    theta: &[f64],
    lambda: f64,
    k: f64,
    spec: &KernelSpec,
    basis: CodeBasis,
    seed: u64,
) -> Result<SimulatedLinCode, LinCodeError> {
    let p = basis.p();
    if n < p + 3 || n < 2 {
        return Err(LinCodeError::TooFewObservations { n, p, min: 3 });
    }
    if theta.len() != p {
        return Err(LinCodeError::LengthMismatch { x: p, y: theta.len() });
    }
    if !(k >= 0.0 && k.is_finite()) {
        return Err(LinCodeError::InvalidK(k));
    }
    let mut rng = chain_rng(seed, 0);
    let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let delta = if k > 0.0 {
        let corr = se_kernel(&x, spec)?;
        let l = Cholesky::new(corr).ok_or(LinCodeError::NotPositiveDefinite(spec.jitter))?.l();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (l * z * (lambda * k.sqrt())).iter().copied().collect()
    } else {
        vec![0.0; n]
    };
    let g = basis.design(&x);
    let code = &g * DVector::from_column_slice(theta);
    let y: Vec<f64> = (0..n)
        .map(|i| code[i] + delta[i] + lambda * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(SimulatedLinCode { data: LinCodeData::new(x, y, basis)?, delta })
}
