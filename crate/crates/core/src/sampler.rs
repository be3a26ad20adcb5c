//! Random-walk and independent Metropolis–Hastings over a mixture posterior.
//!
//! One chain is one `ChaCha20` stream: `seed` selects the key and `stream`
//! the 64-bit stream id, so chains are reproducible across platforms and
//! sibling chains never share variates.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{EnsembleError, LogDensityValue, MixtureEnsemble, ParameterVector, Transform};

/// Minimum number of retained draws a configuration may produce.
pub const MIN_RETAINED_DRAWS: usize = 100;
/// Burn-in iterations per adaptation block.
pub const ADAPT_INTERVAL: usize = 200;
/// `suggest_thin` never returns more than this.
pub const MAX_THIN: usize = 200;
/// `|ACF(t)|` below this counts as decorrelated for `suggest_thin`.
pub const ACF_CUTOFF: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error("current log posterior is not finite ({0}); a chain must never stand outside the support")]
    NonFiniteCurrent(f64),
    #[error("invalid initial point: log posterior is {0}")]
    InvalidInitialPoint(f64),
    #[error("invalid proposal: {0}")]
    InvalidProposal(String),
    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate chain: coordinate is constant")]
    DegenerateChain,
    #[error("chain too short: {len} draws for max lag {max_lag} (need at least {needed})")]
    ChainTooShort { len: usize, max_lag: usize, needed: usize },
    #[error("coordinate {index} out of range for dimension {dimension}")]
    CoordinateOutOfRange { index: usize, dimension: usize },
}

/// The generator behind every chain.
pub type ChainRng = ChaCha20Rng;

pub fn chain_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalSpec {
    /// Gaussian random walk with one standard deviation per coordinate.
    RandomWalk { scales: Vec<f64> },
    /// Uniform proposal on a box, independent of the current state.
    Independent { bounds: Vec<(f64, f64)> },
}

impl ProposalSpec {
    pub fn random_walk(scales: Vec<f64>) -> Result<Self, SamplerError> {
        let p = ProposalSpec::RandomWalk { scales };
        p.validate()?;
        Ok(p)
    }

    pub fn independent(bounds: Vec<(f64, f64)>) -> Result<Self, SamplerError> {
        let p = ProposalSpec::Independent { bounds };
        p.validate()?;
        Ok(p)
    }

    pub fn dimension(&self) -> usize {
        match self {
            ProposalSpec::RandomWalk { scales } => scales.len(),
            ProposalSpec::Independent { bounds } => bounds.len(),
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        match self {
            ProposalSpec::RandomWalk { scales } => {
                if scales.is_empty() {
                    return Err(SamplerError::InvalidProposal("no scales".into()));
                }
                if let Some(s) = scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                    return Err(SamplerError::InvalidProposal(format!(
                        "random-walk scale {s} is not strictly positive"
                    )));
                }
            }
            ProposalSpec::Independent { bounds } => {
                if bounds.is_empty() {
                    return Err(SamplerError::InvalidProposal("no bounds".into()));
                }
                if let Some((lo, hi)) = bounds
                    .iter()
                    .find(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
                {
                    return Err(SamplerError::InvalidProposal(format!(
                        "independent bounds [{lo}, {hi}] must be finite with lower < upper"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    pub adapt: bool,
    pub target_acceptance_window: (f64, f64),
}

impl ChainConfig {
    /// `iterations` raw iterations with a tenth discarded as burn-in, no
    /// thinning and scale adaptation on.
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            burn_in: iterations / 10,
            thin: 1,
            seed,
            stream: 0,
            adapt: true,
            target_acceptance_window: (0.2, 0.8),
        }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_thin(mut self, thin: usize) -> Self {
        self.thin = thin;
        self
    }

    pub fn with_adapt(mut self, adapt: bool) -> Self {
        self.adapt = adapt;
        self
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn retained(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: String| Err(SamplerError::InvalidConfig(m));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.burn_in >= self.iterations {
            return bad(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if self.thin == 0 {
            return bad("thin must be positive".into());
        }
        let (lo, hi) = self.target_acceptance_window;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad(format!("acceptance window ({lo}, {hi}) must satisfy 0 < lo < hi < 1"));
        }
        if self.retained() < MIN_RETAINED_DRAWS {
            return bad(format!(
                "(iterations - burn_in) / thin = {} retained draws, need at least {MIN_RETAINED_DRAWS}",
                self.retained()
            ));
        }
        Ok(())
    }
}

/// Anything carrying a log target density.
pub trait Scored {
    fn log_density(&self) -> f64;
}

impl Scored for f64 {
    fn log_density(&self) -> f64 {
        *self
    }
}

impl Scored for LogDensityValue {
    fn log_density(&self) -> f64 {
        self.total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step<T> {
    pub state: Vec<f64>,
    pub score: T,
    pub accepted: bool,
}

fn accept_or_keep<T: Scored, R: Rng + ?Sized>(
    state: &[f64],
    current: T,
    proposed: Vec<f64>,
    candidate: T,
    rng: &mut R,
) -> Step<T> {
    let u: f64 = rng.random();
    // `ln(u) < Δ` with u in [0, 1): Δ = 0 always accepts, Δ = -inf never does.
    let delta = candidate.log_density() - current.log_density();
    if u.ln() < delta {
        Step { state: proposed, score: candidate, accepted: true }
    } else {
        Step { state: state.to_vec(), score: current, accepted: false }
    }
}

/// Gaussian random-walk update of the coordinates in `block`.
///
/// Consumes `block.len()` standard normals then one uniform, whatever the
/// outcome.
pub fn rw_mh_block_step<T, R, F>(
    state: &[f64],
    current: T,
    scales: &[f64],
    block: Range<usize>,
    rng: &mut R,
    mut target: F,
) -> Result<Step<T>, SamplerError>
where
    T: Scored,
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<T, EnsembleError>,
{
    if !current.log_density().is_finite() {
        return Err(SamplerError::NonFiniteCurrent(current.log_density()));
    }
    let mut proposed = state.to_vec();
    for i in block {
        let z: f64 = rng.sample(StandardNormal);
        proposed[i] += scales[i] * z;
    }
    let candidate = target(&proposed)?;
    Ok(accept_or_keep(state, current, proposed, candidate, rng))
}

/// Full-vector random-walk step: `d` normals and one uniform per call.
pub fn rw_mh_step<T, R, F>(
    state: &[f64],
    current: T,
    scales: &[f64],
    rng: &mut R,
    target: F,
) -> Result<Step<T>, SamplerError>
where
    T: Scored,
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<T, EnsembleError>,
{
    rw_mh_block_step(state, current, scales, 0..state.len(), rng, target)
}

/// Independent step with a uniform proposal on `bounds`; the proposal density
/// cancels so the ratio is the posterior ratio. Consumes `d + 1` uniforms.
pub fn imh_step<T, R, F>(
    state: &[f64],
    current: T,
    bounds: &[(f64, f64)],
    rng: &mut R,
    mut target: F,
) -> Result<Step<T>, SamplerError>
where
    T: Scored,
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<T, EnsembleError>,
{
    if !current.log_density().is_finite() {
        return Err(SamplerError::NonFiniteCurrent(current.log_density()));
    }
    let proposed: Vec<f64> = bounds
        .iter()
        .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
        .collect();
    let candidate = target(&proposed)?;
    Ok(accept_or_keep(state, current, proposed, candidate, rng))
}

/// Scale update after one adaptation block: doubled above the window,
/// halved below it, unchanged inside.
pub fn adapt_scale(scale: f64, block_acceptance: f64, window: (f64, f64)) -> f64 {
    if block_acceptance > window.1 {
        scale * 2.0
    } else if block_acceptance < window.0 {
        scale * 0.5
    } else {
        scale
    }
}

/// Retained draws of one run, with the per-model log-likelihoods that were
/// already computed for the acceptance ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    draws: Vec<Vec<f64>>,
    per_model_loglik: Vec<Vec<f64>>,
    transforms: Vec<Transform>,
    acceptance_rate: f64,
    final_scales: Vec<f64>,
    seed: u64,
    warnings: Vec<String>,
}

impl Chain {
    /// Wraps externally produced draws, e.g. from an exact sampler.
    pub fn from_draws(
        draws: Vec<Vec<f64>>,
        per_model_loglik: Vec<Vec<f64>>,
        transforms: Vec<Transform>,
    ) -> Self {
        assert_eq!(draws.len(), per_model_loglik.len(), "one loglik row per draw");
        Self {
            draws,
            per_model_loglik,
            transforms,
            acceptance_rate: 1.0,
            final_scales: Vec::new(),
            seed: 0,
            warnings: Vec::new(),
        }
    }

    pub fn draws(&self) -> &[Vec<f64>] {
        &self.draws
    }

    pub fn per_model_loglik(&self) -> &[Vec<f64>] {
        &self.per_model_loglik
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.transforms.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance_rate
    }

    pub fn final_scales(&self) -> &[f64] {
        &self.final_scales
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// One coordinate on the sampling scale.
    pub fn coordinate(&self, index: usize) -> Result<Vec<f64>, SamplerError> {
        if index >= self.dimension() {
            return Err(SamplerError::CoordinateOutOfRange { index, dimension: self.dimension() });
        }
        Ok(self.draws.iter().map(|d| d[index]).collect())
    }

    /// One coordinate mapped back through its transform.
    pub fn natural_coordinate(&self, index: usize) -> Result<Vec<f64>, SamplerError> {
        let t = self.transforms[index.min(self.dimension().saturating_sub(1))];
        Ok(self.coordinate(index)?.into_iter().map(|v| t.to_natural(v)).collect())
    }

    pub fn autocorrelation(&self, index: usize, max_lag: usize) -> Result<Vec<f64>, SamplerError> {
        autocorrelation(&self.coordinate(index)?, max_lag)
    }
}

/// Runs one chain from `init`.
///
/// Random-walk proposals update one coordinate at a time, in order. During
/// burn-in, each coordinate's scale is adapted every [`ADAPT_INTERVAL`]
/// iterations; scales are frozen afterwards. Independent proposals move the
/// whole vector and are never adapted.
pub fn run_chain<D: ?Sized>(
    ensemble: &MixtureEnsemble<D>,
    data: &D,
    init: &ParameterVector,
    proposal: &ProposalSpec,
    config: &ChainConfig,
) -> Result<Chain, SamplerError> {
    config.validate()?;
    proposal.validate()?;
    let d = ensemble.dimension();
    if init.len() != d || proposal.dimension() != d {
        return Err(EnsembleError::DimensionMismatch {
            expected: d,
            got: if init.len() != d { init.len() } else { proposal.dimension() },
        }
        .into());
    }

    let mut rng = chain_rng(config.seed, config.stream);
    let mut state = init.values().to_vec();
    let mut current = ensemble.log_mixture_likelihood(data, &state)?;
    if !current.total.is_finite() {
        return Err(SamplerError::InvalidInitialPoint(current.total));
    }

    let blocks: Vec<Range<usize>> = match proposal {
        ProposalSpec::RandomWalk { .. } => (0..d).map(|i| i..i + 1).collect(),
        ProposalSpec::Independent { .. } => vec![0..d],
    };
    let mut scales = match proposal {
        ProposalSpec::RandomWalk { scales } => scales.clone(),
        ProposalSpec::Independent { .. } => Vec::new(),
    };
    let adapting = config.adapt && matches!(proposal, ProposalSpec::RandomWalk { .. });

    let mut window_accepted = vec![0usize; blocks.len()];
    let mut last_block_rate: Vec<Option<f64>> = vec![None; blocks.len()];
    let mut post_tried = 0usize;
    let mut post_accepted = 0usize;
    let retained = config.retained();
    let mut draws = Vec::with_capacity(retained);
    let mut loglik = Vec::with_capacity(retained);
    let eval = |theta: &[f64]| ensemble.log_mixture_likelihood(data, theta);

    for it in 0..config.iterations {
        for (b, block) in blocks.iter().enumerate() {
            let step = match proposal {
                ProposalSpec::RandomWalk { .. } => {
                    rw_mh_block_step(&state, current, &scales, block.clone(), &mut rng, eval)?
                }
                ProposalSpec::Independent { bounds } => {
                    imh_step(&state, current, bounds, &mut rng, eval)?
                }
            };
            state = step.state;
            current = step.score;
            if it >= config.burn_in {
                post_tried += 1;
                post_accepted += usize::from(step.accepted);
            } else {
                window_accepted[b] += usize::from(step.accepted);
            }
        }
        if adapting && it < config.burn_in && (it + 1) % ADAPT_INTERVAL == 0 {
            for (b, block) in blocks.iter().enumerate() {
                let rate = window_accepted[b] as f64 / ADAPT_INTERVAL as f64;
                for i in block.clone() {
                    scales[i] = adapt_scale(scales[i], rate, config.target_acceptance_window);
                }
                last_block_rate[b] = Some(rate);
                window_accepted[b] = 0;
            }
        }
        if it >= config.burn_in && (it - config.burn_in + 1).is_multiple_of(config.thin) {
            draws.push(state.clone());
            loglik.push(current.per_model_loglik.clone());
        }
    }

    let mut warnings = Vec::new();
    let (lo, hi) = config.target_acceptance_window;
    if adapting {
        for (b, rate) in last_block_rate.iter().enumerate() {
            match rate {
                Some(r) if *r < lo || *r > hi => warnings.push(format!(
                    "coordinate {b}: final adaptation block acceptance {r:.3} outside [{lo}, {hi}]"
                )),
                None => warnings.push(format!(
                    "coordinate {b}: burn-in shorter than one adaptation block ({ADAPT_INTERVAL} iterations)"
                )),
                _ => {}
            }
        }
    }
    let acceptance_rate = post_accepted as f64 / post_tried as f64;
    if acceptance_rate < lo || acceptance_rate > hi {
        warnings.push(format!(
            "post burn-in acceptance rate {acceptance_rate:.3} outside [{lo}, {hi}]"
        ));
    }

    Ok(Chain {
        draws,
        per_model_loglik: loglik,
        transforms: ensemble.transforms().to_vec(),
        acceptance_rate,
        final_scales: scales,
        seed: config.seed,
        warnings,
    })
}

/// Sample autocorrelation `ACF(0..=max_lag)` with `ACF(0) = 1`.
///
/// Uses the biased autocovariance `(1/S) Σ (x_s - x̄)(x_{s+t} - x̄)`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>, SamplerError> {
    let n = series.len();
    let needed = 10 * max_lag.max(1);
    if n < needed {
        return Err(SamplerError::ChainTooShort { len: n, max_lag, needed });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 <= 0.0 || series.iter().all(|&x| x == series[0]) {
        return Err(SamplerError::DegenerateChain);
    }
    let mut acf = Vec::with_capacity(max_lag + 1);
    acf.push(1.0);
    for t in 1..=max_lag {
        let ct: f64 = centered[..n - t]
            .iter()
            .zip(&centered[t..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64;
        acf.push(ct / c0);
    }
    Ok(acf)
}

/// Smallest lag with `|ACF| < 0.05` for the given series, capped at 200.
pub fn suggest_thin_series(series: &[f64]) -> Result<usize, SamplerError> {
    let max_lag = MAX_THIN.min(series.len() / 10);
    let acf = autocorrelation(series, max_lag)?;
    Ok(acf
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, r)| r.abs() < ACF_CUTOFF)
        .map(|(t, _)| t)
        .unwrap_or(MAX_THIN))
}

/// Largest per-coordinate suggestion, so every coordinate is decorrelated.
pub fn suggest_thin(chain: &Chain) -> Result<usize, SamplerError> {
    let mut thin = 1;
    for i in 0..chain.dimension() {
        thin = thin.max(suggest_thin_series(&chain.coordinate(i)?)?);
    }
    Ok(thin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::CandidateModel;
    use rand_distr::{Distribution, Normal};

    fn rng() -> ChainRng {
        chain_rng(11, 0)
    }

    fn normal_ensemble() -> MixtureEnsemble<()> {
        let ll = |_: &(), t: &[f64]| -0.5 * t[0] * t[0];
        MixtureEnsemble::new(
            vec![Transform::Identity],
            |_: &[f64]| 0.0,
            vec![CandidateModel::new("a", 0.5, ll), CandidateModel::new("b", 0.5, ll)],
        )
        .unwrap()
    }

    #[test]
    fn equal_density_always_accepts() {
        let mut r = rng();
        for _ in 0..1000 {
            let s = rw_mh_step(&[0.0], -3.0, &[1.0], &mut r, |_| Ok(-3.0)).unwrap();
            assert!(s.accepted);
        }
    }

    #[test]
    fn neg_infinity_always_rejects_and_keeps_state_bitwise() {
        let mut r = rng();
        let start = [0.123_456_789_f64, -7.5];
        for _ in 0..1000 {
            let s = rw_mh_step(&start, -1.0, &[1.0, 2.0], &mut r, |_| Ok(f64::NEG_INFINITY))
                .unwrap();
            assert!(!s.accepted);
            assert_eq!(s.state[0].to_bits(), start[0].to_bits());
            assert_eq!(s.state[1].to_bits(), start[1].to_bits());
            assert_eq!(s.score, -1.0);
        }
    }

    #[test]
    fn non_finite_current_is_an_error() {
        let mut r = rng();
        let e = rw_mh_step(&[0.0], f64::NEG_INFINITY, &[1.0], &mut r, |_| Ok(0.0));
        assert!(matches!(e, Err(SamplerError::NonFiniteCurrent(_))));
        let e = imh_step(&[0.5], f64::NAN, &[(0.0, 1.0)], &mut r, |_| Ok(0.0));
        assert!(matches!(e, Err(SamplerError::NonFiniteCurrent(_))));
    }

    #[test]
    fn half_ratio_accepts_half_the_time() {
        let mut r = rng();
        let trials = 10_000;
        let accepted = (0..trials)
            .filter(|_| {
                rw_mh_step(&[0.0], 0.0, &[1.0], &mut r, |_| Ok(0.5f64.ln())).unwrap().accepted
            })
            .count();
        let freq = accepted as f64 / trials as f64;
        assert!((freq - 0.5).abs() <= 3.0 * (0.25 / trials as f64).sqrt(), "freq {freq}");
    }

    #[test]
    fn rng_consumption_contract() {
        // d normals then one uniform, on accept and on reject alike.
        for target in [0.0, f64::NEG_INFINITY] {
            let mut a = rng();
            let mut b = rng();
            rw_mh_step(&[0.0, 0.0, 0.0], 0.0, &[1.0; 3], &mut a, |_| Ok(target)).unwrap();
            for _ in 0..3 {
                let _: f64 = b.sample(StandardNormal);
            }
            let _: f64 = b.random();
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
        let mut a = rng();
        let mut b = rng();
        imh_step(&[0.5, 0.5], 0.0, &[(0.0, 1.0); 2], &mut a, |_| Ok(-1.0)).unwrap();
        for _ in 0..3 {
            let _: f64 = b.random();
        }
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn imh_flat_target_always_accepts() {
        let mut r = rng();
        for _ in 0..1000 {
            let s = imh_step(&[0.3], 0.0, &[(0.0, 1.0)], &mut r, |_| Ok(0.0)).unwrap();
            assert!(s.accepted);
            assert!((0.0..1.0).contains(&s.state[0]));
        }
    }

    #[test]
    fn imh_half_support_accepts_half_the_time() {
        let mut r = rng();
        let target = |k: &[f64]| Ok(if k[0] <= 0.5 { 0.0 } else { f64::NEG_INFINITY });
        let mut state = vec![0.25];
        let mut score = 0.0;
        let trials = 20_000;
        let mut accepted = 0;
        for _ in 0..trials {
            let s = imh_step(&state, score, &[(0.0, 1.0)], &mut r, target).unwrap();
            accepted += usize::from(s.accepted);
            state = s.state;
            score = s.score;
        }
        let freq = accepted as f64 / trials as f64;
        assert!((freq - 0.5).abs() <= 3.0 * (0.25 / trials as f64).sqrt(), "freq {freq}");
    }

    #[test]
    fn adaptation_rule() {
        let w = (0.2, 0.8);
        assert_eq!(adapt_scale(1.0, 0.9, w), 2.0);
        assert_eq!(adapt_scale(1.0, 0.05, w), 0.5);
        assert_eq!(adapt_scale(1.0, 0.5, w), 1.0);
        assert_eq!(adapt_scale(1.0, 0.2, w), 1.0);
        assert_eq!(adapt_scale(1.0, 0.8, w), 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(ChainConfig::new(1000, 1).validate().is_ok());
        assert!(ChainConfig::new(1000, 1).with_thin(10).validate().is_err());
        assert!(ChainConfig::new(1000, 1).with_burn_in(1000).validate().is_err());
        assert!(ChainConfig::new(1000, 1).with_thin(0).validate().is_err());
        let mut c = ChainConfig::new(1000, 1);
        c.target_acceptance_window = (0.8, 0.2);
        assert!(c.validate().is_err());
    }

    #[test]
    fn proposal_validation() {
        assert!(ProposalSpec::random_walk(vec![0.0]).is_err());
        assert!(ProposalSpec::random_walk(vec![-1.0]).is_err());
        assert!(ProposalSpec::independent(vec![(1.0, 0.0)]).is_err());
        assert!(ProposalSpec::independent(vec![(0.0, f64::INFINITY)]).is_err());
        assert!(ProposalSpec::independent(vec![(0.0, 1.0)]).is_ok());
    }

    #[test]
    fn invalid_initial_point() {
        let e = MixtureEnsemble::new(
            vec![Transform::Identity],
            |t: &[f64]| if t[0] > 0.0 { 0.0 } else { f64::NEG_INFINITY },
            vec![
                CandidateModel::new("a", 0.5, |_: &(), _: &[f64]| 0.0),
                CandidateModel::new("b", 0.5, |_: &(), _: &[f64]| 0.0),
            ],
        )
        .unwrap();
        let init = ParameterVector::new(vec![-1.0]).unwrap();
        let p = ProposalSpec::random_walk(vec![1.0]).unwrap();
        let err = run_chain(&e, &(), &init, &p, &ChainConfig::new(2000, 1)).unwrap_err();
        assert!(matches!(err, SamplerError::InvalidInitialPoint(_)));
        assert!(err.to_string().contains("invalid initial point"));
    }

    #[test]
    fn chain_is_reproducible_and_sized() {
        let e = normal_ensemble();
        let init = ParameterVector::new(vec![0.0]).unwrap();
        let p = ProposalSpec::random_walk(vec![0.5]).unwrap();
        let cfg = ChainConfig::new(5000, 42).with_burn_in(1000).with_thin(7);
        let a = run_chain(&e, &(), &init, &p, &cfg).unwrap();
        let b = run_chain(&e, &(), &init, &p, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4000 / 7);
        let c = run_chain(&e, &(), &init, &p, &cfg.clone().with_stream(1)).unwrap();
        assert_ne!(a.draws(), c.draws());
    }

    #[test]
    fn cached_loglik_matches_recomputation() {
        let e = normal_ensemble();
        let init = ParameterVector::new(vec![0.0]).unwrap();
        let p = ProposalSpec::random_walk(vec![1.0]).unwrap();
        let chain = run_chain(&e, &(), &init, &p, &ChainConfig::new(3000, 3)).unwrap();
        for (d, ll) in chain.draws().iter().zip(chain.per_model_loglik()) {
            let v = e.log_mixture_likelihood(&(), d).unwrap();
            assert_eq!(&v.per_model_loglik, ll);
        }
    }

    #[test]
    fn burn_in_isolation() {
        let e = normal_ensemble();
        let init = ParameterVector::new(vec![0.0]).unwrap();
        let p = ProposalSpec::random_walk(vec![0.01]).unwrap();
        let cfg = ChainConfig::new(3000, 5).with_burn_in(2000);
        let chain = run_chain(&e, &(), &init, &p, &cfg).unwrap();
        assert_eq!(chain.len(), 1000);
        assert!(chain.final_scales()[0] > 0.01);
        let again = run_chain(&e, &(), &init, &p, &cfg.clone().with_adapt(false)).unwrap();
        assert_eq!(again.final_scales()[0], 0.01);
    }

    #[test]
    fn standard_normal_smoke_test() {
        let e = normal_ensemble();
        let init = ParameterVector::new(vec![0.0]).unwrap();
        let p = ProposalSpec::random_walk(vec![1.0]).unwrap();
        let cfg = ChainConfig::new(110_000, 9).with_burn_in(10_000);
        let chain = run_chain(&e, &(), &init, &p, &cfg).unwrap();
        let x = chain.coordinate(0).unwrap();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // Integrated autocorrelation time from the initial positive sequence.
        let acf = autocorrelation(&x, 200).unwrap();
        let tau = 1.0 + 2.0 * acf[1..].iter().take_while(|r| **r > 0.0).sum::<f64>();
        let se_mean = (var * tau / n).sqrt();
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        let acf_sq = autocorrelation(&sq, 200).unwrap();
        let tau_sq = 1.0 + 2.0 * acf_sq[1..].iter().take_while(|r| **r > 0.0).sum::<f64>();
        let se_var = (2.0 * tau_sq / n).sqrt();
        assert!(mean.abs() < 5.0 * se_mean, "mean {mean} se {se_mean}");
        assert!((var - 1.0).abs() < 5.0 * se_var, "var {var} se {se_var}");
        assert!((0.2..=0.8).contains(&chain.acceptance_rate()));
    }

    #[test]
    fn acf_of_white_noise() {
        let mut r = rng();
        let x: Vec<f64> = (0..20_000).map(|_| r.sample(StandardNormal)).collect();
        let acf = autocorrelation(&x, 100).unwrap();
        assert_eq!(acf[0], 1.0);
        let band = 4.0 / (x.len() as f64).sqrt();
        let inside = acf[1..].iter().filter(|r| r.abs() < band).count();
        assert!(inside as f64 >= 0.95 * 100.0);
        assert_eq!(suggest_thin_series(&x).unwrap(), 1);
    }

    #[test]
    fn acf_of_ar1_matches_closed_form() {
        let mut r = rng();
        let rho: f64 = 0.8;
        let innov = Normal::new(0.0, (1.0 - rho * rho).sqrt()).unwrap();
        let mut x = Vec::with_capacity(100_000);
        let mut v: f64 = r.sample(StandardNormal);
        for _ in 0..100_000 {
            x.push(v);
            v = rho * v + innov.sample(&mut r);
        }
        let acf = autocorrelation(&x, 5).unwrap();
        for (t, a) in acf.iter().enumerate() {
            assert!((a - rho.powi(t as i32)).abs() < 0.05, "lag {t}: {a}");
        }
        // 0.8^t < 0.05 first at t = 14; sampling noise can move it by one.
        let thin = suggest_thin_series(&x).unwrap();
        assert!((13..=16).contains(&thin), "thin {thin}");
    }

    #[test]
    fn acf_errors() {
        assert!(matches!(autocorrelation(&[1.0; 100], 5), Err(SamplerError::DegenerateChain)));
        assert!(matches!(
            autocorrelation(&[1.0, 2.0, 3.0], 5),
            Err(SamplerError::ChainTooShort { .. })
        ));
    }
}
