//! `run`, `oracle` and `simulate`.
//!
//! Every command computes all of its outputs in memory before creating the
//! output directory, so a failure leaves nothing behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use mixbma::analysis::{check_bounds, weighted_summary, BmaReport, HistogramBin};
use mixbma::lincode::{
    self, predict_tendency, prediction_csv, reconstruct, run_kappa_imh, simulate_lincode, LinCodeCollapsed,
    LinCodeData, ReconstructionDraw,
};
use mixbma::numfmt::sig17;
use mixbma::oracle::{self, CountModel, VarianceCheck};
use mixbma::poisgeo::{self, CountData};
use mixbma::sampler::{chain_rng, run_chain, Chain, ChainConfig, ProposalSpec};
use mixbma::{MixtureEnsemble, ParameterVector};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, InlineSpec, LoadedConfig, SimulateSpec, Suite};
use crate::error::CliError;
use crate::jsonfmt;

/// Observations for one of the suites.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Counts(CountData),
    LinCode(LinCodeData),
    Scalar(f64),
}

impl Dataset {
    pub fn n(&self) -> usize {
        match self {
            Dataset::Counts(d) => d.n(),
            Dataset::LinCode(d) => d.n(),
            Dataset::Scalar(_) => 1,
        }
    }
}

/// A simulated dataset with what generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub data: Dataset,
    pub truth: Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub suite: Suite,
    pub seed: u64,
    pub n: usize,
    /// Poisson mean, or lincode noise standard deviation.
    pub lambda: f64,
    pub theta: Option<Vec<f64>>,
    pub k: Option<f64>,
    pub gamma: Option<f64>,
    pub jitter: Option<f64>,
    /// lincode: the discrepancy at the observed x.
    pub delta: Option<Vec<f64>>,
}

fn simulate_dataset(cfg: &LoadedConfig, spec: &SimulateSpec) -> Result<Simulated, CliError> {
    let suite = cfg.config.suite;
    match suite {
        Suite::Poisgeo => {
            let (n, lambda) = (spec.n.unwrap_or(10), spec.lambda.unwrap_or(1.0));
            let data = poisgeo::simulate(n, lambda, spec.seed)
                .map_err(|e| CliError::Config { path: cfg.path.clone(), message: e.to_string() })?;
            let truth = Truth { suite, seed: spec.seed, n, lambda, theta: None, k: None, gamma: None, jitter: None, delta: None };
            Ok(Simulated { data: Dataset::Counts(data), truth })
        }
        Suite::Lincode => {
            let n = spec.n.unwrap_or(lincode::DEFAULT_N);
            let lambda = spec.lambda.unwrap_or(lincode::DEFAULT_LAMBDA);
            let theta = spec.theta.clone().unwrap_or_else(|| vec![lincode::DEFAULT_THETA; cfg.config.lincode.basis.p()]);
            let k = spec.k.unwrap_or(lincode::DEFAULT_K);
            let kernel = cfg.config.lincode.kernel();
            let sim = simulate_lincode(n, &theta, lambda, k, &kernel, cfg.config.lincode.basis, spec.seed)
                .map_err(|e| CliError::Config { path: cfg.path.clone(), message: e.to_string() })?;
            let truth = Truth {
                suite,
                seed: spec.seed,
                n,
                lambda,
                theta: Some(theta),
                k: Some(k),
                gamma: Some(kernel.gamma),
                jitter: Some(kernel.jitter),
                delta: Some(sim.delta),
            };
            Ok(Simulated { data: Dataset::LinCode(sim.data), truth })
        }
        Suite::GaussianCheck => Err(CliError::Config {
            path: cfg.path.clone(),
            message: "gaussian_check has no simulator".into(),
        }),
    }
}

fn parse_dataset(cfg: &LoadedConfig, text: &str, path: &Path) -> Result<Dataset, CliError> {
    let bad = |m: String| CliError::Data { path: path.into(), message: m };
    match cfg.config.suite {
        Suite::Poisgeo => CountData::parse(text).map(Dataset::Counts).map_err(|e| bad(e.to_string())),
        Suite::Lincode => LinCodeData::parse_csv(text, cfg.config.lincode.basis)
            .map(Dataset::LinCode)
            .map_err(|e| bad(e.to_string())),
        Suite::GaussianCheck => {
            let v: f64 = text.trim().parse().map_err(|_| bad(format!("expected one number, got `{}`", text.trim())))?;
            if v.is_finite() {
                Ok(Dataset::Scalar(v))
            } else {
                Err(bad("value must be finite".into()))
            }
        }
    }
}

fn inline_dataset(cfg: &LoadedConfig, spec: &InlineSpec) -> Result<Dataset, CliError> {
    let bad = |m: String| CliError::Config { path: cfg.path.clone(), message: m };
    match (cfg.config.suite, spec) {
        (Suite::Poisgeo, InlineSpec { counts: Some(c), x: None, y: None, value: None }) => {
            CountData::new(c.clone()).map(Dataset::Counts).map_err(|e| bad(e.to_string()))
        }
        (Suite::Lincode, InlineSpec { counts: None, x: Some(x), y: Some(y), value: None }) => {
            LinCodeData::new(x.clone(), y.clone(), cfg.config.lincode.basis)
                .map(Dataset::LinCode)
                .map_err(|e| bad(e.to_string()))
        }
        (Suite::GaussianCheck, InlineSpec { counts: None, x: None, y: None, value: Some(v) }) if v.is_finite() => {
            Ok(Dataset::Scalar(*v))
        }
        (suite, _) => Err(bad(format!(
            "inline data for {} takes {}",
            suite.name(),
            match suite {
                Suite::Poisgeo => "`counts` only",
                Suite::Lincode => "`x` and `y` only",
                Suite::GaussianCheck => "a finite `value` only",
            }
        ))),
    }
}

/// Resolves the configured data source.
pub fn load_dataset(cfg: &LoadedConfig) -> Result<Dataset, CliError> {
    match &cfg.config.data {
        DataSource::Simulate(spec) => Ok(simulate_dataset(cfg, spec)?.data),
        DataSource::Inline(spec) => inline_dataset(cfg, spec),
        DataSource::File(spec) => {
            let path = cfg.resolve(&spec.path);
            let text = std::fs::read_to_string(&path).map_err(|source| CliError::Read { path: path.clone(), source })?;
            parse_dataset(cfg, &text, &path)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerReport {
    /// `random_walk` or `independent`.
    pub kind: String,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub stream: u64,
    pub adapt: bool,
    pub acceptance_rate: f64,
    pub final_scales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub mean: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

/// Per-group summaries of one reconstructed parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupQuantiles {
    pub m0: Option<Quantiles>,
    pub m1: Option<Quantiles>,
    pub bma: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub stream: u64,
    pub draws_m0: usize,
    pub draws_m1: usize,
    /// First code coefficient.
    pub theta: GroupQuantiles,
    pub lambda: GroupQuantiles,
    pub lambda2: GroupQuantiles,
    pub warnings: Vec<String>,
}

/// Contents of `report.json`. The key set is the same for every suite;
/// fields that do not apply are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub suite: Suite,
    pub n_observations: usize,
    pub coordinate_names: Vec<String>,
    #[serde(flatten)]
    pub bma: BmaReport,
    pub sampler: SamplerReport,
    /// `B01 = m0/m1` from closed forms (poisgeo).
    pub bf01_closed_form: Option<f64>,
    pub bf01_estimate: Option<f64>,
    pub bf01_ci: Option<(f64, f64)>,
    /// Exact `π(M0 | y)` (closed form, or κ quadrature for lincode).
    pub prob_m0_exact: Option<f64>,
    pub reconstruction: Option<ReconstructionReport>,
    pub runtime_seconds: f64,
}

/// A chain and its report, before anything is written.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub report: RunReport,
    pub chain: Chain,
    pub config: ChainConfig,
    pub reconstruction: Option<Vec<ReconstructionDraw>>,
    pub prediction_csv: Option<String>,
    pub data: Dataset,
}

fn coordinate_name(suite: Suite) -> &'static str {
    match suite {
        Suite::Poisgeo => "lambda",
        Suite::Lincode => "kappa",
        Suite::GaussianCheck => "mu",
    }
}

fn sampler_report(kind: &str, chain: &Chain, config: &ChainConfig) -> SamplerReport {
    SamplerReport {
        kind: kind.into(),
        iterations: config.iterations,
        burn_in: config.burn_in,
        thin: config.thin,
        seed: config.seed,
        stream: config.stream,
        adapt: config.adapt,
        acceptance_rate: chain.acceptance_rate(),
        final_scales: chain.final_scales().to_vec(),
    }
}

fn quantiles(values: &[f64]) -> Result<Option<Quantiles>, CliError> {
    if values.is_empty() {
        return Ok(None);
    }
    let s = weighted_summary(values, &vec![1.0; values.len()], 1).map_err(CliError::runtime)?;
    Ok(Some(Quantiles { mean: s.mean, q025: s.q025, q50: s.q50, q975: s.q975 }))
}

fn group_quantiles(draws: &[ReconstructionDraw], f: impl Fn(&ReconstructionDraw) -> f64) -> Result<GroupQuantiles, CliError> {
    let pick = |z: Option<u8>| -> Vec<f64> {
        draws.iter().filter(|d| z.is_none_or(|z| d.zeta == z)).map(&f).collect()
    };
    Ok(GroupQuantiles {
        m0: quantiles(&pick(Some(0)))?,
        m1: quantiles(&pick(Some(1)))?,
        bma: quantiles(&pick(None))?.expect("reconstruction is non-empty"),
    })
}

fn finish_report(
    suite: Suite,
    data: &Dataset,
    chain: &Chain,
    config: &ChainConfig,
    bma: BmaReport,
    kind: &str,
) -> RunReport {
    let bf01_estimate = bma.bayes_factor[0][1];
    let bf01_ci = bma.bf_ci[0][1];
    RunReport {
        suite,
        n_observations: data.n(),
        coordinate_names: vec![coordinate_name(suite).into()],
        bma,
        sampler: sampler_report(kind, chain, config),
        bf01_closed_form: None,
        bf01_estimate,
        bf01_ci,
        prob_m0_exact: None,
        reconstruction: None,
        runtime_seconds: 0.0,
    }
}

fn bma_report<D: ?Sized>(chain: &Chain, ensemble: &MixtureEnsemble<D>, bins: usize) -> Result<BmaReport, CliError> {
    let report = BmaReport::from_chain(chain, ensemble, bins).map_err(CliError::runtime)?;
    check_bounds(&report).map_err(CliError::runtime)?;
    for w in &report.warnings {
        warn!("{w}");
    }
    Ok(report)
}

/// Samples and analyses the configured experiment without writing files.
pub fn execute_run(cfg: &LoadedConfig) -> Result<RunResult, CliError> {
    let data = load_dataset(cfg)?;
    execute_run_on(cfg, data)
}

pub fn execute_run_on(cfg: &LoadedConfig, data: Dataset) -> Result<RunResult, CliError> {
    let started = Instant::now();
    let suite = cfg.config.suite;
    let weights = cfg.weights();
    let config = cfg.chain_config();
    let bins = cfg.config.analysis.bins;
    info!("{}: {} iterations, burn-in {}, thin {}", suite.name(), config.iterations, config.burn_in, config.thin);
    let rw = ProposalSpec::random_walk(vec![cfg.scale()]).map_err(CliError::runtime)?;

    let mut result = match &data {
        Dataset::Counts(d) => {
            let ensemble = poisgeo::ensemble(weights).map_err(CliError::runtime)?;
            let chain = poisgeo::run(d, &ensemble, &rw, &config).map_err(CliError::runtime)?;
            let bma = bma_report(&chain, &ensemble, bins)?;
            let mut report = finish_report(suite, &data, &chain, &config, bma, "random_walk");
            report.bf01_closed_form = Some(poisgeo::log_bf01(d).map_err(CliError::runtime)?.exp());
            report.prob_m0_exact = Some(poisgeo::posterior_prob_m0(d, weights).map_err(CliError::runtime)?);
            RunResult { report, chain, config, reconstruction: None, prediction_csv: None, data: data.clone() }
        }
        Dataset::Scalar(y) => {
            let ensemble = oracle::gaussian_ensemble(weights).map_err(CliError::runtime)?;
            let init = ParameterVector::new(vec![0.0]).map_err(CliError::runtime)?;
            let chain = run_chain(&ensemble, y, &init, &rw, &config).map_err(CliError::runtime)?;
            let bma = bma_report(&chain, &ensemble, bins)?;
            let mut report = finish_report(suite, &data, &chain, &config, bma, "random_walk");
            report.prob_m0_exact = Some(oracle::conjugate_gaussian_case_weighted(*y, weights).prob_m0);
            RunResult { report, chain, config, reconstruction: None, prediction_csv: None, data: data.clone() }
        }
        Dataset::LinCode(d) => {
            let lc = &cfg.config.lincode;
            let caches = LinCodeCollapsed::new(d.clone(), lc.kernel(), weights, lc.evidence_mode()).map_err(CliError::runtime)?;
            let ensemble = caches.ensemble().map_err(CliError::runtime)?;
            let chain = run_kappa_imh(&caches, &ensemble, &config).map_err(CliError::runtime)?;
            let bma = bma_report(&chain, &ensemble, bins)?;
            let mut report = finish_report(suite, &data, &chain, &config, bma, "independent");
            report.sampler.adapt = false;
            report.prob_m0_exact = Some(oracle::quad_kappa_marginal_lincode(&caches).map_err(CliError::runtime)?.prob_m0);

            let mut rng = chain_rng(config.seed, lc.reconstruction_stream);
            let draws = reconstruct(&chain, &caches, &ensemble, &mut rng).map_err(CliError::runtime)?;
            let xs = d.x();
            let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let m = lc.prediction_points;
            let grid: Vec<f64> = (0..m)
                .map(|i| if m == 1 { lo } else { lo + (hi - lo) * i as f64 / (m - 1) as f64 })
                .collect();
            let prediction = predict_tendency(&draws, &caches, &grid).map_err(CliError::runtime)?;
            for w in &prediction.warnings {
                warn!("{w}");
            }
            report.reconstruction = Some(ReconstructionReport {
                stream: lc.reconstruction_stream,
                draws_m0: draws.iter().filter(|d| d.zeta == 0).count(),
                draws_m1: draws.iter().filter(|d| d.zeta == 1).count(),
                theta: group_quantiles(&draws, |d| d.theta[0])?,
                lambda: group_quantiles(&draws, ReconstructionDraw::lambda)?,
                lambda2: group_quantiles(&draws, ReconstructionDraw::lambda2)?,
                warnings: prediction.warnings.clone(),
            });
            RunResult {
                report,
                chain,
                config,
                prediction_csv: Some(prediction_csv(&prediction.rows)),
                reconstruction: Some(draws),
                data: data.clone(),
            }
        }
    };
    result.report.runtime_seconds = started.elapsed().as_secs_f64();
    info!(
        "done in {:.2} s: π̂(M0|y) = {}, acceptance {}",
        result.report.runtime_seconds, result.report.bma.prob[0], result.report.sampler.acceptance_rate
    );
    Ok(result)
}

/// `iter,<coordinate>,loglik_<model>...`; `iter` counts sampler iterations
/// from 1, burn-in included.
pub fn chain_csv(result: &RunResult) -> String {
    let chain = &result.chain;
    let mut s = String::from("iter");
    for name in &result.report.coordinate_names {
        let _ = write!(s, ",{name}");
    }
    for name in &result.report.bma.model_names {
        let _ = write!(s, ",loglik_{name}");
    }
    s.push('\n');
    let natural = (0..chain.dimension())
        .map(|c| chain.natural_coordinate(c).expect("coordinate in range"))
        .collect::<Vec<_>>();
    for (j, ll) in chain.per_model_loglik().iter().enumerate() {
        let _ = write!(s, "{}", result.config.burn_in + (j + 1) * result.config.thin);
        for coord in &natural {
            let _ = write!(s, ",{}", sig17(coord[j]));
        }
        for v in ll {
            let _ = write!(s, ",{}", sig17(*v));
        }
        s.push('\n');
    }
    s
}

/// `bin_left,bin_right,weight`.
pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut s = String::from("bin_left,bin_right,weight\n");
    for b in bins {
        let _ = writeln!(s, "{},{},{}", sig17(b.left), sig17(b.right), sig17(b.weight));
    }
    s
}

fn reconstruction_histograms(
    draws: &[ReconstructionDraw],
    bins: usize,
    files: &mut Vec<(String, String)>,
) -> Result<(), CliError> {
    type Getter = fn(&ReconstructionDraw) -> f64;
    let params: [(&str, Getter); 3] =
        [("theta", |d| d.theta[0]), ("lambda", ReconstructionDraw::lambda), ("lambda2", ReconstructionDraw::lambda2)];
    for (name, get) in params {
        let values: Vec<f64> = draws.iter().map(get).collect();
        for (group, weight) in [("bma", None), ("m0", Some(0u8)), ("m1", Some(1u8))] {
            let w: Vec<f64> = draws.iter().map(|d| f64::from(weight.is_none_or(|z| d.zeta == z))).collect();
            if w.iter().all(|v| *v == 0.0) {
                continue;
            }
            let summary = weighted_summary(&values, &w, bins).map_err(CliError::runtime)?;
            files.push((format!("hist_{name}_{group}.csv"), histogram_csv(&summary.histogram)));
        }
    }
    Ok(())
}

/// Every file `run` writes, as `(name, contents)`.
pub fn run_files(result: &RunResult, bins: usize) -> Result<Vec<(String, String)>, CliError> {
    let report = &result.report;
    let mut files = vec![
        ("chain.csv".to_string(), chain_csv(result)),
        ("report.json".to_string(), jsonfmt::to_string(report).map_err(CliError::runtime)?),
    ];
    for (c, summary) in report.bma.summaries.iter().enumerate() {
        let name = &report.coordinate_names[c];
        files.push((format!("hist_{name}_bma.csv"), histogram_csv(&summary.bma.histogram)));
        for (k, per_model) in summary.per_model.iter().enumerate() {
            if let Some(s) = per_model {
                files.push((format!("hist_{name}_{}.csv", report.bma.model_names[k]), histogram_csv(&s.histogram)));
            }
        }
    }
    if let Some(draws) = &result.reconstruction {
        reconstruction_histograms(draws, bins, &mut files)?;
    }
    if let Some(p) = &result.prediction_csv {
        files.push(("prediction.csv".to_string(), p.clone()));
    }
    Ok(files)
}

fn write_files(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.into(), source })?;
    for (name, contents) in files {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Write { path, source })?;
    }
    info!("wrote {} file(s) to {}", files.len(), dir.display());
    Ok(())
}

pub fn cmd_run(cfg: &LoadedConfig, output_override: Option<&Path>) -> Result<PathBuf, CliError> {
    let result = execute_run(cfg)?;
    let files = run_files(&result, cfg.config.analysis.bins)?;
    let dir = cfg.output_dir(output_override);
    write_files(&dir, &files)?;
    Ok(dir)
}

/// One comparison in `oracle.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    /// What `value` is compared against: closed form, quadrature or exact.
    pub reference: f64,
    pub value: f64,
    pub abs_diff: f64,
    pub rel_diff: f64,
    /// Passing requires `abs_diff < tolerance` (Monte-Carlo rows) or
    /// `rel_diff < tolerance` (deterministic rows).
    pub tolerance: f64,
    /// `relative` or `monte_carlo`.
    pub kind: String,
    pub standard_error: Option<f64>,
    pub passed: bool,
}

impl OracleCheck {
    fn relative(name: impl Into<String>, reference: f64, value: f64, tolerance: f64) -> Self {
        let abs_diff = (value - reference).abs();
        let rel_diff = abs_diff / reference.abs();
        Self {
            name: name.into(),
            reference,
            value,
            abs_diff,
            rel_diff,
            tolerance,
            kind: "relative".into(),
            standard_error: None,
            passed: rel_diff < tolerance,
        }
    }

    fn monte_carlo(name: impl Into<String>, exact: f64, estimate: f64, se: f64, sigmas: f64) -> Self {
        let abs_diff = (estimate - exact).abs();
        let tolerance = sigmas * se;
        Self {
            name: name.into(),
            reference: exact,
            value: estimate,
            abs_diff,
            rel_diff: abs_diff / exact.abs(),
            tolerance,
            kind: "monte_carlo".into(),
            standard_error: Some(se),
            passed: abs_diff < tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub suite: Suite,
    pub checks: Vec<OracleCheck>,
    /// poisgeo: spread of π̂(M0|y) over iid replications against π(1-π)/S.
    pub variance_check: Option<VarianceCheck>,
    pub passed: bool,
}

/// Computes every oracle comparison for the configured experiment.
pub fn execute_oracle(cfg: &LoadedConfig) -> Result<OracleReport, CliError> {
    let data = load_dataset(cfg)?;
    let oc = &cfg.config.oracle;
    let weights = cfg.weights();
    let mut checks = Vec::new();
    let mut variance_check = None;
    match &data {
        Dataset::Counts(d) => {
            let tol = oc.closed_form_tol;
            let (c0, c1) = (poisgeo::log_m0(d), poisgeo::log_m1(d));
            let (c0, c1) = (c0.map_err(CliError::runtime)?, c1.map_err(CliError::runtime)?);
            let q0 = oracle::quad_marginal_poisgeo(d, CountModel::Pois).map_err(CliError::runtime)?.log_m;
            let q1 = oracle::quad_marginal_poisgeo(d, CountModel::Geo).map_err(CliError::runtime)?.log_m;
            checks.push(OracleCheck::relative("m0", q0.exp(), c0.exp(), tol));
            checks.push(OracleCheck::relative("m1", q1.exp(), c1.exp(), tol));
            checks.push(OracleCheck::relative("bf01", (q0 - q1).exp(), (c0 - c1).exp(), tol));
            if oc.variance_replications >= 2 {
                let seed = cfg.config.sampler.seed;
                let v = oracle::variance_bound_check(d, weights, oc.variance_replications, oc.variance_draws, seed)
                    .map_err(CliError::runtime)?;
                variance_check = Some(v);
            }
        }
        Dataset::LinCode(d) => {
            let lc = &cfg.config.lincode;
            let caches = LinCodeCollapsed::new(d.clone(), lc.kernel(), weights, lc.evidence_mode()).map_err(CliError::runtime)?;
            let k0 = caches.m1_given_k(0.0).map_err(CliError::runtime)?.log_evidence;
            checks.push(OracleCheck::relative("log_m1_at_k0_vs_log_m0", caches.m0().log_m0, k0, 1e-12));
            if d.p() == 1 && d.n() <= 6 {
                for k in [0.1, 1.0, 10.0] {
                    let quad = oracle::quad_m1_given_k_2d(d.y(), d.design(), caches.corr(), k).map_err(CliError::runtime)?;
                    let closed = caches.m1_given_k(k).map_err(CliError::runtime)?.log_evidence;
                    checks.push(OracleCheck::relative(format!("m1_given_k_{k}"), quad.exp(), closed.exp(), 1e-4));
                }
            }
        }
        Dataset::Scalar(_) => {}
    }

    let run = execute_run_on(cfg, data)?;
    let exact = run.report.prob_m0_exact.expect("every suite reports an exact probability");
    checks.push(OracleCheck::monte_carlo(
        "prob_m0",
        exact,
        run.report.bma.prob[0],
        run.report.bma.prob_se[0],
        oc.mc_sigma,
    ));
    let passed = checks.iter().all(|c| c.passed) && variance_check.as_ref().is_none_or(|v| v.passed);
    Ok(OracleReport { suite: cfg.config.suite, checks, variance_check, passed })
}

pub fn cmd_oracle(cfg: &LoadedConfig, output_override: Option<&Path>) -> Result<PathBuf, CliError> {
    let report = execute_oracle(cfg)?;
    let dir = cfg.output_dir(output_override);
    let json = jsonfmt::to_string(&report).map_err(CliError::runtime)?;
    write_files(&dir, &[("oracle.json".to_string(), json)])?;
    let failed = report.checks.iter().filter(|c| !c.passed).count()
        + usize::from(report.variance_check.as_ref().is_some_and(|v| !v.passed));
    for c in report.checks.iter().filter(|c| !c.passed) {
        warn!("{}: {} vs {} (|diff| {}, tolerance {})", c.name, c.value, c.reference, c.abs_diff, c.tolerance);
    }
    if failed > 0 {
        return Err(CliError::OracleBreach { failed, report: dir.join("oracle.json") });
    }
    Ok(dir)
}

/// Dataset file name for a suite.
pub fn data_file_name(suite: Suite) -> &'static str {
    match suite {
        Suite::Lincode => "data.csv",
        _ => "data.txt",
    }
}

pub fn simulate_files(cfg: &LoadedConfig) -> Result<Vec<(String, String)>, CliError> {
    let DataSource::Simulate(spec) = &cfg.config.data else {
        return Err(CliError::Config { path: cfg.path.clone(), message: "simulate needs a [data.simulate] section".into() });
    };
    let sim = simulate_dataset(cfg, spec)?;
    let text = match &sim.data {
        Dataset::Counts(d) => d.to_text(),
        Dataset::LinCode(d) => d.to_csv(),
        Dataset::Scalar(v) => format!("{}\n", sig17(*v)),
    };
    Ok(vec![
        (data_file_name(cfg.config.suite).to_string(), text),
        ("truth.json".to_string(), jsonfmt::to_string(&sim.truth).map_err(CliError::runtime)?),
    ])
}

pub fn cmd_simulate(cfg: &LoadedConfig, output_override: Option<&Path>) -> Result<PathBuf, CliError> {
    let files = simulate_files(cfg)?;
    let dir = cfg.output_dir(output_override);
    write_files(&dir, &files)?;
    Ok(dir)
}
