//! Monte Carlo harness: data generation, method runs and Bias/SE/SD/MSE/CR
//! summaries.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, fit_all, rubin_pool, single_fit_inference, AnalysisSpec, Family, PooledResult};
use crate::baselines::{cc_analyze, knn_impute, knn_impute_values, mi_full, BaselineKind, KnnMode, DEFAULT_K};
use crate::data::IncompleteMatrix;
use crate::error::{Error, Result};
use crate::imputation::{multiply_impute, ImputeOptions, DEFAULT_M, DEFAULT_RIDGE};
use crate::spca::ReductionMethod;
use crate::stochastic::{MvnSampler, RngStream};

/// Coefficient of `y1` in the analysis model.
pub const THETA1_INDEX: usize = 1;
const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovFamily {
    Ar1,
    BlockCs,
}

impl fmt::Display for CovFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovFamily::Ar1 => "ar1",
            CovFamily::BlockCs => "block_cs",
        })
    }
}

impl FromStr for CovFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ar1" => Ok(CovFamily::Ar1),
            "block_cs" | "blockcs" | "cs" => Ok(CovFamily::BlockCs),
            _ => Err(Error::invalid(format!("unknown covariance family '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    /// Number of `y` variables, the target included.
    pub p: usize,
    pub c: usize,
    pub rho: f64,
    pub cov_family: CovFamily,
    pub block_size: usize,
    /// `None` picks 1 for small active sets and 0.05 for `c = 100`.
    pub eta: Option<f64>,
    pub theta: [f64; 4],
    pub w_noise_var: f64,
    /// Intercept and coefficients on `y2`, `y3`, `w` of the response model.
    pub miss_model: [f64; 4],
    pub calibrate_intercept: bool,
    pub target_rate: f64,
    pub reps: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub knn_k: usize,
    pub ridge: f64,
    /// Enter the analysis-model variables (`w`, `y2`, `y10`) into the
    /// imputation model of the proposed methods next to the components.
    pub impute_with_analysis_vars: bool,
    /// Let the nearest-neighbor baselines use `w` as a candidate.
    pub knn_include_outcome: bool,
    pub impute: ImputeOptions,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 100,
            p: 200,
            c: 4,
            rho: 0.1,
            cov_family: CovFamily::Ar1,
            block_size: 50,
            eta: None,
            theta: [1.0; 4],
            w_noise_var: 3.0,
            miss_model: [-1.0, -0.1, 2.0, -10.0],
            calibrate_intercept: true,
            target_rate: 0.31,
            reps: 200,
            m: DEFAULT_M,
            seed: 1,
            knn_k: DEFAULT_K,
            ridge: DEFAULT_RIDGE,
            impute_with_analysis_vars: true,
            knn_include_outcome: false,
            impute: ImputeOptions::default(),
        }
    }
}

impl SimConfig {
    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(if self.c >= 100 { 0.05 } else { 1.0 })
    }

    /// Options for the proposed methods, with the analysis variables forced in
    /// when `impute_with_analysis_vars` is set.
    pub fn imputation_options(&self) -> ImputeOptions {
        let mut opts = self.impute.clone();
        if self.impute_with_analysis_vars {
            for name in ["w", "y2", "y10"] {
                if !opts.forced.iter().any(|f| f == name) {
                    opts.forced.push(name.to_string());
                }
            }
        }
        opts
    }

    /// 1-based indices `t` of the `y_t` entering the target's mean.
    pub fn active_set(&self) -> Vec<usize> {
        match self.c {
            4 => vec![2, 3, 50, 51],
            100 => (2..=51).chain(100..=149).collect(),
            c => (2..c + 2).collect(),
        }
    }

    /// Every violated constraint, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n < 10 {
            v.push(format!("n must be at least 10 (got {})", self.n));
        }
        if self.p < 10 {
            v.push(format!("p must be at least 10 so that y10 exists (got {})", self.p));
        }
        if self.c == 0 || self.c >= self.p {
            v.push(format!("c must satisfy 1 <= c < p (got c = {}, p = {})", self.c, self.p));
        } else if self.active_set().iter().any(|&t| t > self.p) {
            v.push(format!("active set for c = {} needs p >= {}", self.c, self.active_set().iter().max().unwrap()));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            v.push(format!("rho must lie in (-1, 1) (got {})", self.rho));
        }
        if self.block_size == 0 {
            v.push("block_size must be at least 1".into());
        }
        if let Some(eta) = self.eta {
            if !eta.is_finite() {
                v.push("eta must be finite".into());
            }
        }
        if self.theta.iter().chain(&self.miss_model).any(|x| !x.is_finite()) {
            v.push("theta and miss_model must be finite".into());
        }
        if !(self.w_noise_var >= 0.0 && self.w_noise_var.is_finite()) {
            v.push(format!("w_noise_var must be non-negative (got {})", self.w_noise_var));
        }
        if !(self.target_rate > 0.0 && self.target_rate < 1.0) {
            v.push(format!("target_rate must lie in (0, 1) (got {})", self.target_rate));
        }
        if self.reps == 0 {
            v.push("reps must be at least 1".into());
        }
        if self.m < 2 {
            v.push(format!("M must be at least 2 (got {})", self.m));
        }
        if self.knn_k == 0 {
            v.push("knn_k must be at least 1".into());
        }
        if !(self.ridge >= 0.0) {
            v.push("ridge must be non-negative".into());
        }
        if let Err(e) = self.impute.sdr.validate() {
            v.push(e.to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(v.join("; ")))
        }
    }

    /// Analysis model `w ~ 1 + y1 + y2 + y10` on the generated column layout.
    pub fn analysis_spec(&self) -> AnalysisSpec {
        AnalysisSpec {
            outcome: self.p,
            predictors: vec![0, 1, 9],
            family: Family::Linear,
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        (1..=self.p)
            .map(|t| format!("y{t}"))
            .chain(std::iter::once("w".to_string()))
            .collect()
    }
}

/// Covariance of `(y2, ..., yp)`.
pub fn build_covariance(config: &SimConfig) -> Result<DMatrix<f64>> {
    let q = config.p.saturating_sub(1);
    if !(config.rho > -1.0 && config.rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (-1, 1) (got {})", config.rho)));
    }
    let rho = config.rho;
    let sigma = match config.cov_family {
        CovFamily::Ar1 => DMatrix::from_fn(q, q, |i, j| rho.powi(i.abs_diff(j) as i32)),
        CovFamily::BlockCs => {
            let b = config.block_size.max(1);
            DMatrix::from_fn(q, q, |i, j| {
                if i == j {
                    2.0
                } else if i / b == j / b {
                    2.0 * rho
                } else {
                    0.0
                }
            })
        }
    };
    if sigma.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(sigma)
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    /// `n x (p + 1)`: `y1..yp` then `w`, before missingness.
    pub full: DMatrix<f64>,
    pub data: IncompleteMatrix,
    pub truth: [f64; 4],
    pub intercept: f64,
    /// Mean model probability of missingness at the chosen intercept.
    pub expected_missing: f64,
}

impl SimulatedDataset {
    pub fn missing_fraction(&self) -> f64 {
        self.data.n_missing() as f64 / self.data.nrows() as f64
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Intercept `b0` with `mean_i(1 - sigmoid(b0 + lin_i)) = target`.
pub fn calibrate_intercept(lin: &[f64], target: f64) -> f64 {
    let miss = |b0: f64| lin.iter().map(|l| 1.0 - sigmoid(b0 + l)).sum::<f64>() / lin.len() as f64;
    let lo_l = lin.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_l = lin.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (-hi_l - 60.0, -lo_l + 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if miss(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Draw one dataset. `sampler` must hold `N(0, build_covariance(config))`.
pub fn generate_dataset_with(config: &SimConfig, sampler: &MvnSampler, rng: &RngStream) -> Result<SimulatedDataset> {
    let (n, p) = (config.n, config.p);
    if sampler.dim() != p - 1 {
        return Err(Error::DimensionMismatch(format!(
            "sampler dimension {} for p = {p}",
            sampler.dim()
        )));
    }
    let ys = sampler.sample(&mut rng.substream(0), n);
    let mut full = DMatrix::zeros(n, p + 1);
    full.view_mut((0, 1), (n, p - 1)).copy_from(&ys);
    let active = config.active_set();
    let eta = config.eta();
    let mut noise = rng.substream(1);
    for i in 0..n {
        let s: f64 = active.iter().map(|&t| full[(i, t - 1)]).sum();
        full[(i, 0)] = eta * (1.0 + s) + noise.std_normal();
    }
    let th = config.theta;
    let w_sd = config.w_noise_var.sqrt();
    let mut noise = rng.substream(2);
    for i in 0..n {
        full[(i, p)] = th[0] + th[1] * full[(i, 0)] + th[2] * full[(i, 1)] + th[3] * full[(i, 9)] + w_sd * noise.std_normal();
    }
    let mm = config.miss_model;
    let lin: Vec<f64> = (0..n)
        .map(|i| mm[1] * full[(i, 1)] + mm[2] * full[(i, 2)] + mm[3] * full[(i, p)])
        .collect();
    let intercept = if config.calibrate_intercept {
        calibrate_intercept(&lin, config.target_rate)
    } else {
        mm[0]
    };
    let probs: Vec<f64> = lin.iter().map(|l| sigmoid(intercept + l)).collect();
    let expected_missing = probs.iter().map(|pr| 1.0 - pr).sum::<f64>() / n as f64;
    let mut unif = rng.substream(3);
    let mask: Vec<bool> = probs.iter().map(|&pr| unif.uniform() < pr).collect();
    let mut values = full.clone();
    for (i, &obs) in mask.iter().enumerate() {
        if !obs {
            values[(i, 0)] = f64::NAN;
        }
    }
    let data = IncompleteMatrix::new(values, mask, config.column_names(), 0)?;
    Ok(SimulatedDataset {
        full,
        data,
        truth: th,
        intercept,
        expected_missing,
    })
}

pub fn generate_dataset(config: &SimConfig, rng: &RngStream) -> Result<SimulatedDataset> {
    config.validate()?;
    let sigma = build_covariance(config)?;
    let sampler = MvnSampler::new(DVector::zeros(config.p - 1), &sigma)?;
    generate_dataset_with(config, &sampler, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Method {
    Baseline(BaselineKind),
    Proposed(ReductionMethod),
}

impl Method {
    /// GS, CC, MI, the seven proposed variants, then KNN_S and KNN_V.
    pub fn table_set() -> Vec<Method> {
        let mut v = vec![
            Method::Baseline(BaselineKind::Gs),
            Method::Baseline(BaselineKind::Cc),
            Method::Baseline(BaselineKind::MiFull),
        ];
        v.extend(ReductionMethod::ALL.iter().map(|&m| Method::Proposed(m)));
        v.push(Method::Baseline(BaselineKind::KnnS));
        v.push(Method::Baseline(BaselineKind::KnnV));
        v
    }

    pub fn tag(self) -> &'static str {
        match self {
            Method::Baseline(b) => b.tag(),
            Method::Proposed(m) => m.tag(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Baseline(b) => b.label(),
            Method::Proposed(m) => m.label(),
        }
    }

    /// Fixed per-method stream key, so adding or reordering methods leaves
    /// the others' random numbers unchanged.
    fn stream_key(self) -> u64 {
        match self {
            Method::Baseline(b) => 100 + BaselineKind::ALL.iter().position(|&k| k == b).unwrap() as u64,
            Method::Proposed(m) => 200 + ReductionMethod::ALL.iter().position(|&k| k == m).unwrap() as u64,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<ReductionMethod>()
            .map(Method::Proposed)
            .or_else(|_| s.parse::<BaselineKind>().map(Method::Baseline))
            .map_err(|_| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// Nearest-neighbor completion. Neighbors are searched among the `y`
/// columns only unless `knn_include_outcome` is set.
fn knn_complete(ds: &SimulatedDataset, config: &SimConfig, mode: KnnMode) -> Result<DMatrix<f64>> {
    if config.knn_include_outcome {
        return knn_impute(&ds.data, config.knn_k, mode);
    }
    let view = ds.data.without_columns(&[config.p])?;
    ds.data.complete_with(&knn_impute_values(&view, config.knn_k, mode)?)
}

/// Pooled inference for one method on one simulated dataset.
pub fn run_method(method: Method, ds: &SimulatedDataset, config: &SimConfig, rng: &RngStream) -> Result<PooledResult> {
    let spec = config.analysis_spec();
    let coef = [THETA1_INDEX];
    match method {
        Method::Baseline(BaselineKind::Gs) => single_fit_inference(&analyze(&ds.full, &spec)?, &coef, Family::Linear),
        Method::Baseline(BaselineKind::Cc) => single_fit_inference(&cc_analyze(&ds.data, &spec)?, &coef, Family::Linear),
        Method::Baseline(BaselineKind::KnnS) => {
            single_fit_inference(&analyze(&knn_complete(ds, config, KnnMode::Subjects)?, &spec)?, &coef, Family::Linear)
        }
        Method::Baseline(BaselineKind::KnnV) => {
            single_fit_inference(&analyze(&knn_complete(ds, config, KnnMode::Variables)?, &spec)?, &coef, Family::Linear)
        }
        Method::Baseline(BaselineKind::MiFull) => {
            let ens = mi_full(&ds.data, config.m, config.ridge, rng)?;
            rubin_pool(&fit_all(&ens.datasets, &spec)?, &coef)
        }
        Method::Proposed(m) => {
            let ens = multiply_impute(&ds.data, m, &config.imputation_options(), config.m, rng)?;
            rubin_pool(&fit_all(&ens.datasets, &spec)?, &coef)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub method: String,
    pub p: usize,
    pub c: usize,
    pub rho: f64,
    pub cov_family: CovFamily,
    pub bias: f64,
    pub se: f64,
    pub sd: f64,
    pub mse: f64,
    pub cr: f64,
    pub reps_used: usize,
}

/// Per-replicate record of one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub theta1: f64,
    pub se: f64,
    pub covered: bool,
}

pub fn summarize(method: Method, config: &SimConfig, est: &[Estimate], truth: f64) -> MetricsRow {
    let r = est.len() as f64;
    let mean = est.iter().map(|e| e.theta1).sum::<f64>() / r;
    let sd = if est.len() > 1 {
        (est.iter().map(|e| (e.theta1 - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
    } else {
        0.0
    };
    MetricsRow {
        method: method.label().to_string(),
        p: config.p,
        c: config.c,
        rho: config.rho,
        cov_family: config.cov_family,
        bias: mean - truth,
        se: est.iter().map(|e| e.se).sum::<f64>() / r,
        sd,
        mse: est.iter().map(|e| (e.theta1 - truth).powi(2)).sum::<f64>() / r,
        cr: est.iter().filter(|e| e.covered).count() as f64 / r,
        reps_used: est.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub rows: Vec<MetricsRow>,
    pub missing_fraction_mean: f64,
    pub missing_fractions: Vec<f64>,
    /// `(method label, replicate, message)` for every failed run.
    pub failures: Vec<(String, usize, String)>,
}

struct Replicate {
    missing_fraction: f64,
    results: Vec<std::result::Result<Estimate, String>>,
}

fn run_replicate(config: &SimConfig, methods: &[Method], sampler: &MvnSampler, r: usize) -> Result<Replicate> {
    let stream = RngStream::new(config.seed, r as u64);
    let ds = generate_dataset_with(config, sampler, &stream.substream(0))?;
    let truth = config.theta[THETA1_INDEX];
    let results = methods
        .iter()
        .map(|&m| {
            run_method(m, &ds, config, &stream.substream(m.stream_key()))
                .map(|pooled| Estimate {
                    theta1: pooled.qbar[0],
                    se: pooled.se(0),
                    covered: pooled.covers(0, truth),
                })
                .map_err(|e| e.to_string())
        })
        .collect();
    Ok(Replicate {
        missing_fraction: ds.missing_fraction(),
        results,
    })
}

/// Run every method on `config.reps` replicates. Replicate `r` uses stream
/// `r` of `config.seed`, so the output is identical for any thread count.
pub fn run_study(config: &SimConfig, methods: &[Method], threads: Option<usize>) -> Result<StudyResult> {
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::invalid("no methods selected"));
    }
    let sigma = build_covariance(config)?;
    let sampler = MvnSampler::new(DVector::zeros(config.p - 1), &sigma)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let reps: Vec<Result<Replicate>> = pool.install(|| {
        (0..config.reps)
            .into_par_iter()
            .map(|r| run_replicate(config, methods, &sampler, r))
            .collect()
    });

    let mut per_method: Vec<Vec<Estimate>> = vec![Vec::new(); methods.len()];
    let mut failures = Vec::new();
    let mut fractions = Vec::with_capacity(config.reps);
    for (r, rep) in reps.into_iter().enumerate() {
        let rep = match rep {
            Ok(rep) => rep,
            Err(e) => {
                for m in methods {
                    failures.push((m.label().to_string(), r, format!("data generation: {e}")));
                }
                continue;
            }
        };
        fractions.push(rep.missing_fraction);
        for (k, res) in rep.results.into_iter().enumerate() {
            match res {
                Ok(e) => per_method[k].push(e),
                Err(msg) => failures.push((methods[k].label().to_string(), r, msg)),
            }
        }
    }
    let truth = config.theta[THETA1_INDEX];
    let mut rows = Vec::with_capacity(methods.len());
    for (k, &m) in methods.iter().enumerate() {
        let failed = config.reps - per_method[k].len();
        if failed as f64 > MAX_FAILURE_RATE * config.reps as f64 || per_method[k].is_empty() {
            return Err(Error::TooManyFailures {
                method: m.label().to_string(),
                failed,
                total: config.reps,
            });
        }
        if failed > 0 {
            log::warn!("{}: {failed} of {} replicates failed", m.label(), config.reps);
        }
        rows.push(summarize(m, config, &per_method[k], truth));
    }
    let missing_fraction_mean = if fractions.is_empty() {
        f64::NAN
    } else {
        fractions.iter().sum::<f64>() / fractions.len() as f64
    };
    Ok(StudyResult {
        rows,
        missing_fraction_mean,
        missing_fractions: fractions,
        failures,
    })
}

pub fn write_results_csv<W: Write>(rows: &[MetricsRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<results>".into(),
        source: e,
    })?;
    Ok(())
}

/// The four simulation grids: `rho` in {0.1, 0.5, 0.9} crossed with
/// `p` in {200, 1000}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignPreset {
    Table1,
    Table2,
    Table3,
    Table4,
}

impl DesignPreset {
    pub const ALL: [DesignPreset; 4] = [
        DesignPreset::Table1,
        DesignPreset::Table2,
        DesignPreset::Table3,
        DesignPreset::Table4,
    ];

    pub fn number(self) -> u8 {
        match self {
            DesignPreset::Table1 => 1,
            DesignPreset::Table2 => 2,
            DesignPreset::Table3 => 3,
            DesignPreset::Table4 => 4,
        }
    }

    pub fn c(self) -> usize {
        match self {
            DesignPreset::Table1 | DesignPreset::Table3 => 4,
            DesignPreset::Table2 | DesignPreset::Table4 => 100,
        }
    }

    pub fn cov_family(self) -> CovFamily {
        match self {
            DesignPreset::Table1 | DesignPreset::Table2 => CovFamily::Ar1,
            DesignPreset::Table3 | DesignPreset::Table4 => CovFamily::BlockCs,
        }
    }

    /// Design points in `(p, rho)` order, other fields taken from `base`.
    pub fn points(self, base: &SimConfig) -> Vec<SimConfig> {
        let mut out = Vec::with_capacity(6);
        for p in [200, 1000] {
            for rho in [0.1, 0.5, 0.9] {
                out.push(SimConfig {
                    p,
                    rho,
                    c: self.c(),
                    cov_family: self.cov_family(),
                    eta: None,
                    ..base.clone()
                });
            }
        }
        out
    }
}

impl FromStr for DesignPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| format!("table{}", d.number()) == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown design '{s}' (expected table1..table4)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::ols_fit;
    use crate::linalg;

    #[test]
    fn covariance_examples() {
        let mut cfg = SimConfig {
            p: 120,
            rho: 0.0,
            ..SimConfig::default()
        };
        assert_eq!(build_covariance(&cfg).unwrap(), DMatrix::identity(119, 119));
        cfg.rho = 0.5;
        assert_eq!(build_covariance(&cfg).unwrap()[(0, 2)], 0.25);
        cfg.cov_family = CovFamily::BlockCs;
        let s = build_covariance(&cfg).unwrap();
        assert_eq!(s[(0, 0)], 2.0);
        assert_eq!(s[(0, 1)], 1.0);
        assert_eq!(s[(0, 50)], 0.0);
        assert_eq!(s[(100, 118)], 1.0);
        cfg.rho = 1.0;
        assert!(build_covariance(&cfg).is_err());
    }

    #[test]
    fn active_sets() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.active_set(), vec![2, 3, 50, 51]);
        assert_eq!(cfg.eta(), 1.0);
        let big = SimConfig { c: 100, ..cfg };
        let a = big.active_set();
        assert_eq!(a.len(), 100);
        assert_eq!((a[0], a[49], a[50], a[99]), (2, 51, 100, 149));
        assert_eq!(big.eta(), 0.05);
    }

    #[test]
    fn violations_are_listed_together() {
        let cfg = SimConfig {
            reps: 0,
            rho: 1.5,
            m: 1,
            ..SimConfig::default()
        };
        let v = cfg.violations();
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(SimConfig::default().violations().is_empty());
        assert!(SimConfig { c: 100, p: 120, ..SimConfig::default() }.validate().is_err());
    }

    #[test]
    fn generated_population_moments() {
        let cfg = SimConfig {
            n: 100_000,
            ..SimConfig::default()
        };
        let ds = generate_dataset(&cfg, &RngStream::new(11, 0)).unwrap();
        let y1 = ds.full.column(0).into_owned();
        let corr = |j: usize| {
            let x = ds.full.column(j).into_owned();
            let (mx, my) = (x.mean(), y1.mean());
            let cov = (x.add_scalar(-mx)).dot(&y1.add_scalar(-my));
            cov / (x.add_scalar(-mx).norm() * y1.add_scalar(-my).norm())
        };
        assert!(corr(1) > 0.4);
        assert!(corr(149).abs() < 0.02);
        let x = linalg::with_intercept(&linalg::select_columns(&ds.full, &[0, 1, 9]));
        let w = ds.full.column(cfg.p).into_owned();
        let fit = ols_fit(&w, &x).unwrap();
        for b in fit.estimates.iter() {
            assert!((b - 1.0).abs() < 0.02, "{}", fit.estimates);
        }
    }

    #[test]
    fn calibration_hits_target_in_expectation() {
        let cfg = SimConfig::default();
        let ds = generate_dataset(&cfg, &RngStream::new(3, 0)).unwrap();
        assert!((ds.expected_missing - 0.31).abs() < 1e-9);
        let literal = SimConfig {
            calibrate_intercept: false,
            ..cfg
        };
        let ds = generate_dataset(&literal, &RngStream::new(3, 0)).unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(ds.intercept, -1.0);
    }

    #[test]
    fn calibrate_intercept_bisection() {
        let lin = [-2.0, 0.0, 1.0, 3.0];
        let b0 = calibrate_intercept(&lin, 0.4);
        let miss: f64 = lin.iter().map(|l| 1.0 - sigmoid(b0 + l)).sum::<f64>() / 4.0;
        assert!((miss - 0.4).abs() < 1e-10);
    }

    #[test]
    fn mse_identity() {
        let cfg = SimConfig::default();
        let est: Vec<Estimate> = [0.9, 1.1, 1.3, 0.7, 1.05]
            .iter()
            .map(|&t| Estimate {
                theta1: t,
                se: 0.1,
                covered: (t - 1.0f64).abs() < 0.2,
            })
            .collect();
        let row = summarize(Method::Baseline(BaselineKind::Gs), &cfg, &est, 1.0);
        let r = est.len() as f64;
        assert!((row.mse - (row.bias.powi(2) + row.sd.powi(2) * (r - 1.0) / r)).abs() < 1e-10);
        assert_eq!(row.cr, 0.6);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::table_set() {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert_eq!(Method::table_set().len(), 12);
    }

    #[test]
    fn presets() {
        let pts = DesignPreset::Table2.points(&SimConfig::default());
        assert_eq!(pts.len(), 6);
        assert!(pts.iter().all(|c| c.c == 100 && c.cov_family == CovFamily::Ar1 && c.eta() == 0.05));
        assert_eq!("table3".parse::<DesignPreset>().unwrap(), DesignPreset::Table3);
    }

    #[test]
    fn tiny_study_is_thread_count_invariant() {
        let cfg = SimConfig {
            reps: 6,
            p: 60,
            m: 3,
            ..SimConfig::default()
        };
        let methods = [
            Method::Baseline(BaselineKind::Gs),
            Method::Baseline(BaselineKind::Cc),
            Method::Proposed(ReductionMethod::SpcaSt),
            Method::Proposed(ReductionMethod::SdrSir),
        ];
        let a = run_study(&cfg, &methods, Some(1)).unwrap();
        let b = run_study(&cfg, &methods, Some(4)).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_results_csv(&a.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,p,c,rho,cov_family,bias,se,sd,mse,cr,reps_used\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn zero_noise_gold_standard_has_no_spread() {
        let cfg = SimConfig {
            reps: 5,
            p: 60,
            w_noise_var: 0.0,
            ..SimConfig::default()
        };
        let res = run_study(&cfg, &[Method::Baseline(BaselineKind::Gs)], Some(1)).unwrap();
        assert!(res.rows[0].sd < 1e-10 && res.rows[0].bias.abs() < 1e-10);
    }
}
