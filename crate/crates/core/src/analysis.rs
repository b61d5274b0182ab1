//! Complete-data analyses and Rubin's-rule pooling.

use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::imputation::MIEnsemble;
use crate::linalg;

pub const CI_LEVEL: f64 = 0.95;
const MAX_IRLS_ITER: usize = 50;
const GRAD_TOL: f64 = 1e-8;
/// Linear predictor magnitude treated as a saturated (separated) fit.
const SEPARATION_ETA: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub estimates: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Residual degrees of freedom `n - q`.
    pub df: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn q(&self) -> usize {
        self.estimates.len()
    }

    pub fn se(&self, j: usize) -> f64 {
        self.cov[(j, j)].max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Logistic,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "gaussian" => Ok(Family::Linear),
            "logistic" | "binomial" => Ok(Family::Logistic),
            _ => Err(Error::invalid(format!("unknown family '{s}'"))),
        }
    }
}

/// Regression of one column on others, with an intercept prepended.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSpec {
    pub outcome: usize,
    pub predictors: Vec<usize>,
    pub family: Family,
}

impl AnalysisSpec {
    pub fn from_names(names: &[String], outcome: &str, predictors: &[&str], family: Family) -> Result<Self> {
        let find = |c: &str| {
            names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::UnknownColumn(c.to_string()))
        };
        let spec = AnalysisSpec {
            outcome: find(outcome)?,
            predictors: predictors.iter().map(|c| find(c)).collect::<Result<_>>()?,
            family,
        };
        if spec.predictors.contains(&spec.outcome) {
            return Err(Error::invalid(format!("outcome '{outcome}' also listed as predictor")));
        }
        Ok(spec)
    }

    /// `"(Intercept)"` followed by the predictor names.
    pub fn term_names(&self, names: &[String]) -> Vec<String> {
        std::iter::once("(Intercept)".to_string())
            .chain(self.predictors.iter().map(|&j| names[j].clone()))
            .collect()
    }
}

pub fn analyze(values: &DMatrix<f64>, spec: &AnalysisSpec) -> Result<FitResult> {
    let n = values.nrows();
    for &j in spec.predictors.iter().chain(std::iter::once(&spec.outcome)) {
        if j >= values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "column {j} out of range for {} columns",
                values.ncols()
            )));
        }
    }
    let y = DVector::from_iterator(n, values.column(spec.outcome).iter().copied());
    let x = linalg::with_intercept(&linalg::select_columns(values, &spec.predictors));
    match spec.family {
        Family::Linear => ols_fit(&y, &x),
        Family::Logistic => logistic_fit(&y, &x),
    }
}

fn check_design(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<()> {
    let (n, q) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("{} responses for {n} design rows", y.len())));
    }
    if n <= q {
        return Err(Error::TooFewCompleteCases { have: n, need: q + 1 });
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite value in analysis data".into()));
    }
    Ok(())
}

/// Ordinary least squares, `cov = s^2 (X^T X)^{-1}` with `s^2 = SSE / (n - q)`.
pub fn ols_fit(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<FitResult> {
    check_design(y, x)?;
    let (n, q) = x.shape();
    let xtx = x.tr_mul(x);
    let svals = xtx.clone().singular_values();
    let smax = svals.max();
    if !(svals.min() > smax * 1e-12) {
        return Err(Error::RankDeficient);
    }
    let xtx_inv = linalg::spd_inverse(&xtx).map_err(|_| Error::RankDeficient)?;
    let estimates = &xtx_inv * x.tr_mul(y);
    let sse = (y - x * &estimates).norm_squared();
    let df = (n - q) as f64;
    let cov = xtx_inv * (sse / df);
    Ok(FitResult {
        estimates,
        cov,
        df,
        converged: true,
        iterations: 1,
    })
}

fn log_lik(y: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    y.iter()
        .zip(eta.iter())
        // log(1 + e^eta) computed stably.
        .map(|(&yi, &e)| yi * e - (e.max(0.0) + (-e.abs()).exp().ln_1p()))
        .sum()
}

fn sigmoid(e: f64) -> f64 {
    if e >= 0.0 {
        1.0 / (1.0 + (-e).exp())
    } else {
        let z = e.exp();
        z / (1.0 + z)
    }
}

/// Logistic regression by Newton-Raphson (IRLS) with step halving.
/// `cov` is the inverse observed information at the final iterate.
pub fn logistic_fit(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<FitResult> {
    check_design(y, x)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidData("logistic outcome must be coded 0/1".into()));
    }
    let ones = y.sum();
    if ones == 0.0 || ones == y.len() as f64 {
        return Err(Error::InvalidData("logistic outcome has a single class".into()));
    }
    let (n, q) = x.shape();
    let mut beta = DVector::zeros(q);
    let mut eta = x * &beta;
    let mut ll = log_lik(y, &eta);
    let mut converged = false;
    let mut iterations = 0;
    let mut info = DMatrix::zeros(q, q);
    for it in 0..=MAX_IRLS_ITER {
        let p = eta.map(sigmoid);
        let grad = x.tr_mul(&(y - &p));
        let w = p.map(|pi| pi * (1.0 - pi));
        info = DMatrix::from_fn(q, q, |a, b| (0..n).map(|i| w[i] * x[(i, a)] * x[(i, b)]).sum());
        if grad.norm() < GRAD_TOL {
            converged = true;
            iterations = it;
            break;
        }
        if it == MAX_IRLS_ITER {
            iterations = it;
            break;
        }
        let Some(chol) = info.clone().cholesky() else {
            break;
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        loop {
            let cand = &beta + &step * t;
            let cand_eta = x * &cand;
            let cand_ll = log_lik(y, &cand_eta);
            if cand_ll >= ll - 1e-12 * ll.abs() || t < 1e-10 {
                beta = cand;
                eta = cand_eta;
                ll = cand_ll;
                break;
            }
            t *= 0.5;
        }
        iterations = it + 1;
    }
    if eta.amax() > SEPARATION_ETA || beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Separation);
    }
    let cov = linalg::spd_inverse(&info).map_err(|_| Error::RankDeficient)?;
    if !converged {
        log::warn!("logistic regression did not converge in {MAX_IRLS_ITER} iterations");
    }
    Ok(FitResult {
        estimates: beta,
        cov,
        df: (n - q) as f64,
        converged,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DfMethod {
    /// `(M - 1) (1 + W / ((1 + 1/M) B))^2`.
    #[default]
    Rubin,
    /// Small-sample adjustment using the complete-data df of the fits.
    BarnardRubin,
}

/// Per-coefficient pooled inference. `df` is `f64::INFINITY` when the normal
/// reference applies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledResult {
    pub coefficients: Vec<usize>,
    pub m: usize,
    pub qbar: Vec<f64>,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub t: Vec<f64>,
    pub df: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub p_value: Vec<f64>,
}

impl PooledResult {
    pub fn se(&self, k: usize) -> f64 {
        self.t[k].sqrt()
    }

    pub fn len(&self) -> usize {
        self.qbar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qbar.is_empty()
    }

    pub fn covers(&self, k: usize, truth: f64) -> bool {
        self.ci_low[k] <= truth && truth <= self.ci_high[k]
    }
}

/// Above this df the t quantile comes from its asymptotic expansion about the
/// normal quantile; the incomplete-beta inversion loses accuracy there.
const T_EXPANSION_DF: f64 = 1e4;
/// Above this df, tail probabilities use the normal reference.
const T_NORMAL_SF_DF: f64 = 1e7;

/// Upper `prob` quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile(df: f64, prob: f64) -> f64 {
    if df.is_infinite() {
        return Normal::standard().inverse_cdf(prob);
    }
    if df <= T_EXPANSION_DF {
        return StudentsT::new(0.0, 1.0, df).expect("positive df").inverse_cdf(prob);
    }
    let z = Normal::standard().inverse_cdf(prob);
    let (z2, nu) = (z * z, df);
    let g1 = (z2 + 1.0) * z / 4.0;
    let g2 = ((5.0 * z2 + 16.0) * z2 + 3.0) * z / 96.0;
    let g3 = (((3.0 * z2 + 19.0) * z2 + 17.0) * z2 - 15.0) * z / 384.0;
    let g4 = ((((79.0 * z2 + 776.0) * z2 + 1482.0) * z2 - 1920.0) * z2 - 945.0) * z / 92160.0;
    z + g1 / nu + g2 / nu.powi(2) + g3 / nu.powi(3) + g4 / nu.powi(4)
}

/// Two-sided critical value and p-value for a t (or normal) reference.
fn reference(df: f64, stat: f64) -> (f64, f64) {
    let upper = 0.5 + CI_LEVEL / 2.0;
    if df.is_finite() && df <= T_NORMAL_SF_DF {
        let t = StudentsT::new(0.0, 1.0, df).expect("positive df");
        (t_quantile(df, upper), 2.0 * t.sf(stat.abs()))
    } else if df.is_finite() {
        (t_quantile(df, upper), 2.0 * Normal::standard().sf(stat.abs()))
    } else {
        let z = Normal::standard();
        (z.inverse_cdf(upper), 2.0 * z.sf(stat.abs()))
    }
}

fn finish(coefficients: Vec<usize>, m: usize, qbar: Vec<f64>, w: Vec<f64>, b: Vec<f64>, t: Vec<f64>, df: Vec<f64>) -> PooledResult {
    let k = qbar.len();
    let (mut ci_low, mut ci_high, mut p_value) = (Vec::with_capacity(k), Vec::with_capacity(k), Vec::with_capacity(k));
    for j in 0..k {
        let se = t[j].sqrt();
        let stat = if se > 0.0 { qbar[j] / se } else if qbar[j] == 0.0 { 0.0 } else { f64::INFINITY };
        let (crit, p) = reference(df[j], stat);
        ci_low.push(qbar[j] - crit * se);
        ci_high.push(qbar[j] + crit * se);
        p_value.push(p);
    }
    PooledResult {
        coefficients,
        m,
        qbar,
        w,
        b,
        t,
        df,
        ci_low,
        ci_high,
        p_value,
    }
}

/// Rubin's rules over `fits` for the selected coefficients (all when empty).
pub fn rubin_pool(fits: &[FitResult], coefs: &[usize]) -> Result<PooledResult> {
    rubin_pool_with(fits, coefs, DfMethod::Rubin)
}

pub fn rubin_pool_with(fits: &[FitResult], coefs: &[usize], method: DfMethod) -> Result<PooledResult> {
    let m = fits.len();
    if m < 2 {
        return Err(Error::TooFewImputations(m));
    }
    let q = fits[0].q();
    if fits.iter().any(|f| f.q() != q) {
        return Err(Error::DimensionMismatch("fits have different numbers of coefficients".into()));
    }
    let coefs: Vec<usize> = if coefs.is_empty() { (0..q).collect() } else { coefs.to_vec() };
    if let Some(&bad) = coefs.iter().find(|&&j| j >= q) {
        return Err(Error::DimensionMismatch(format!("coefficient {bad} out of range for q = {q}")));
    }
    let mf = m as f64;
    let nu_com = fits.iter().map(|f| f.df).fold(f64::INFINITY, f64::min);
    let (mut qbar, mut w, mut b, mut t, mut df) = (vec![], vec![], vec![], vec![], vec![]);
    for &j in &coefs {
        let est: Vec<f64> = fits.iter().map(|f| f.estimates[j]).collect();
        let mean = est.iter().sum::<f64>() / mf;
        let within = fits.iter().map(|f| f.cov[(j, j)]).sum::<f64>() / mf;
        let between = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (mf - 1.0);
        let inflated = (1.0 + 1.0 / mf) * between;
        let total = within + inflated;
        let nu_m = if inflated > 0.0 {
            (mf - 1.0) * (1.0 + within / inflated).powi(2)
        } else {
            f64::INFINITY
        };
        let nu = match method {
            DfMethod::Rubin => nu_m,
            DfMethod::BarnardRubin => {
                let gamma = if total > 0.0 { inflated / total } else { 0.0 };
                let nu_obs = (nu_com + 1.0) / (nu_com + 3.0) * nu_com * (1.0 - gamma);
                if nu_m.is_infinite() {
                    nu_obs
                } else {
                    1.0 / (1.0 / nu_m + 1.0 / nu_obs)
                }
            }
        };
        qbar.push(mean);
        w.push(within);
        b.push(between);
        t.push(total);
        df.push(nu);
    }
    Ok(finish(coefs, m, qbar, w, b, t, df))
}

/// Inference from one fit: `t_{n-q}` reference for linear models, normal for
/// logistic (Wald).
pub fn single_fit_inference(fit: &FitResult, coefs: &[usize], family: Family) -> Result<PooledResult> {
    let q = fit.q();
    let coefs: Vec<usize> = if coefs.is_empty() { (0..q).collect() } else { coefs.to_vec() };
    if let Some(&bad) = coefs.iter().find(|&&j| j >= q) {
        return Err(Error::DimensionMismatch(format!("coefficient {bad} out of range for q = {q}")));
    }
    let df = match family {
        Family::Linear => fit.df,
        Family::Logistic => f64::INFINITY,
    };
    let qbar = coefs.iter().map(|&j| fit.estimates[j]).collect();
    let w: Vec<f64> = coefs.iter().map(|&j| fit.cov[(j, j)]).collect();
    let k = coefs.len();
    Ok(finish(coefs, 1, qbar, w.clone(), vec![0.0; k], w, vec![df; k]))
}

/// Fit `spec` on every completed dataset and pool.
pub fn pool_ensemble(ens: &MIEnsemble, spec: &AnalysisSpec, coefs: &[usize]) -> Result<PooledResult> {
    let fits = fit_all(&ens.datasets, spec)?;
    rubin_pool(&fits, coefs)
}

/// One output line of a pooled analysis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledRow {
    pub method: String,
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub df: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

pub const POOLED_COLUMNS: [&str; 8] = ["method", "term", "estimate", "se", "df", "ci_low", "ci_high", "p_value"];

/// `terms` is indexed by coefficient position.
pub fn pooled_rows(method: &str, terms: &[String], pooled: &PooledResult) -> Vec<PooledRow> {
    pooled
        .coefficients
        .iter()
        .enumerate()
        .map(|(k, &j)| PooledRow {
            method: method.to_string(),
            term: terms.get(j).cloned().unwrap_or_else(|| format!("b{j}")),
            estimate: pooled.qbar[k],
            se: pooled.se(k),
            df: pooled.df[k],
            ci_low: pooled.ci_low[k],
            ci_high: pooled.ci_high[k],
            p_value: pooled.p_value[k],
        })
        .collect()
}

pub fn write_pooled_csv<W: Write>(rows: &[PooledRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(POOLED_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.term.clone(),
            r.estimate.to_string(),
            r.se.to_string(),
            r.df.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            r.p_value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<pooled>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn fit_all(datasets: &[DMatrix<f64>], spec: &AnalysisSpec) -> Result<Vec<FitResult>> {
    datasets.iter().map(|d| analyze(d, spec)).collect()
}
