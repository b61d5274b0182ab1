//! Proper Bayesian imputation of the target column.
//!
//! The pipeline screens candidate predictors on the complete cases, reduces
//! the screened set to a few components (sparse PCA on all rows, or SDR on
//! the complete cases), then draws `M` imputations from the posterior
//! predictive of a normal linear model on those components.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{split_complete_cases, standardize_columns_with, CompleteCaseSplit, IncompleteMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::screening::{sis_screen, ScreenResult};
use crate::sdr::{fit_sdr, SdrKind, SdrOptions};
use crate::spca::{fit_spca, project, select_n_components, ComponentRule, ReductionMap, ReductionMethod};
use crate::stochastic::RngStream;

pub const DEFAULT_RIDGE: f64 = 1e-5;
pub const DEFAULT_M: usize = 30;

/// One posterior draw: coefficients `(intercept, slopes)`, residual sd and
/// the imputed target values for the incomplete rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationDraw {
    pub beta: DVector<f64>,
    pub sigma: f64,
    pub imputed: Vec<f64>,
    pub m: usize,
    /// Zero residual sum of squares: sigma is 0 and imputations are fitted values.
    pub degenerate: bool,
}

/// Posterior of the normal linear model `y = [1, Z] beta + e` under the
/// standard noninformative prior, with a ridge stabilizer
/// `S = W^T W + ridge * diag(W^T W)`.
#[derive(Debug, Clone)]
pub struct BayesLinearPosterior {
    pub beta_hat: DVector<f64>,
    /// Lower factor `L` with `L L^T = S^{-1}`.
    pub inv_chol: DMatrix<f64>,
    pub s_inv: DMatrix<f64>,
    pub sse: f64,
    pub df: u64,
}

impl BayesLinearPosterior {
    pub fn fit(y: &DVector<f64>, z_obs: &DMatrix<f64>, ridge: f64) -> Result<Self> {
        Self::fit_with(y, z_obs, ridge, false)
    }

    /// With `allow_overparameterized`, designs with `q >= n1` are accepted and
    /// the chi-square df is floored at 1, as standard full-model MI does.
    pub fn fit_with(
        y: &DVector<f64>,
        z_obs: &DMatrix<f64>,
        ridge: f64,
        allow_overparameterized: bool,
    ) -> Result<Self> {
        let n1 = y.len();
        if z_obs.nrows() != n1 {
            return Err(Error::DimensionMismatch(format!(
                "{} responses for {} design rows",
                n1,
                z_obs.nrows()
            )));
        }
        if !(ridge >= 0.0) {
            return Err(Error::invalid("ridge must be non-negative"));
        }
        let w = linalg::with_intercept(z_obs);
        let q = w.ncols();
        if n1 <= q && !allow_overparameterized {
            return Err(Error::TooFewCompleteCases { have: n1, need: q + 1 });
        }
        let mut s = w.tr_mul(&w);
        for j in 0..q {
            s[(j, j)] += ridge * s[(j, j)];
        }
        let s_inv = linalg::spd_inverse(&s).map_err(|_| Error::RankDeficient)?;
        let beta_hat = &s_inv * w.tr_mul(y);
        let resid = y - &w * &beta_hat;
        let sse = resid.norm_squared();
        let inv_chol = s_inv
            .clone()
            .cholesky()
            .ok_or(Error::RankDeficient)?
            .unpack();
        let df = if n1 > q { (n1 - q) as u64 } else { 1 };
        Ok(Self {
            beta_hat,
            inv_chol,
            s_inv,
            sse,
            df,
        })
    }

    pub fn q(&self) -> usize {
        self.beta_hat.len()
    }

    /// Draw `sigma*^2 = SSE / chi2_df`, `beta* = beta_hat + sigma* L zeta`, then
    /// `y_mis = [1, Z_mis] beta* + sigma* eps`.
    pub fn draw(&self, z_mis: &DMatrix<f64>, rng: &mut RngStream, m: usize) -> Result<ImputationDraw> {
        let q = self.q();
        if z_mis.ncols() + 1 != q {
            return Err(Error::DimensionMismatch(format!(
                "missing-row design has {} columns, model has {}",
                z_mis.ncols(),
                q - 1
            )));
        }
        let chi = rng.sample_chisq(self.df)?;
        let degenerate = !(self.sse > 0.0);
        let sigma = if degenerate { 0.0 } else { (self.sse / chi).sqrt() };
        let zeta = DVector::from_vec(rng.sample_std_normal(q));
        let beta = &self.beta_hat + (&self.inv_chol * zeta) * sigma;
        let w_mis = linalg::with_intercept(z_mis);
        let mean = &w_mis * &beta;
        let imputed = mean
            .iter()
            .map(|mu| mu + sigma * rng.std_normal())
            .collect::<Vec<_>>();
        if imputed.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite imputed value".into()));
        }
        Ok(ImputationDraw {
            beta,
            sigma,
            imputed,
            m,
            degenerate,
        })
    }
}

pub fn draw_bayes_linear(
    y: &DVector<f64>,
    z_obs: &DMatrix<f64>,
    z_mis: &DMatrix<f64>,
    ridge: f64,
    rng: &mut RngStream,
) -> Result<ImputationDraw> {
    BayesLinearPosterior::fit(y, z_obs, ridge)?.draw(z_mis, rng, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeOptions {
    /// Upper bound on the number of screened variables.
    pub screen_cap: Option<usize>,
    /// sPCA sparsity; `None` uses the variant default.
    pub sparsity: Option<f64>,
    pub component_rule: ComponentRule,
    /// Components fitted before a variance rule is applied.
    pub max_components: usize,
    pub sdr: SdrOptions,
    pub ridge: f64,
    /// Refit screening and reduction on a bootstrap of the complete cases for
    /// every draw instead of once per call.
    pub refit_per_draw: bool,
    /// Columns entered into the imputation model as they are, next to the
    /// derived components. They are not screened.
    pub forced: Vec<String>,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        Self {
            screen_cap: None,
            sparsity: None,
            component_rule: ComponentRule::FirstOne,
            max_components: 10,
            sdr: SdrOptions::default(),
            ridge: DEFAULT_RIDGE,
            refit_per_draw: false,
            forced: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawSummary {
    pub m: usize,
    pub beta: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Original column indices of the screened variables.
    pub screened_columns: Vec<usize>,
    pub screened_names: Vec<String>,
    pub forced_names: Vec<String>,
    pub d: usize,
    pub explained_variance: Vec<f64>,
    pub sdr_d_selected: Option<usize>,
    pub loadings: Vec<Vec<f64>>,
    pub draws: Vec<DrawSummary>,
    pub warnings: Vec<String>,
}

/// `M` completed copies of the input data.
#[derive(Debug, Clone)]
pub struct MIEnsemble {
    pub datasets: Vec<DMatrix<f64>>,
    pub column_names: Vec<String>,
    pub target_index: usize,
    pub mis_rows: Vec<usize>,
    pub method_tag: String,
    pub diagnostics: Diagnostics,
}

impl MIEnsemble {
    pub fn m(&self) -> usize {
        self.datasets.len()
    }

    pub(crate) fn copies(data: &IncompleteMatrix, m: usize, method_tag: &str, warning: &str) -> Self {
        log::warn!("{warning}");
        MIEnsemble {
            datasets: vec![data.values().clone(); m],
            column_names: data.column_names().to_vec(),
            target_index: data.target_index(),
            mis_rows: Vec::new(),
            method_tag: method_tag.to_string(),
            diagnostics: Diagnostics {
                warnings: vec![warning.to_string()],
                ..Diagnostics::default()
            },
        }
    }

    pub(crate) fn from_draws(
        data: &IncompleteMatrix,
        draws: &[ImputationDraw],
        method_tag: &str,
        mut diagnostics: Diagnostics,
    ) -> Result<Self> {
        let datasets = draws
            .iter()
            .map(|d| data.complete_with(&d.imputed))
            .collect::<Result<Vec<_>>>()?;
        diagnostics.draws = draws
            .iter()
            .map(|d| DrawSummary {
                m: d.m,
                beta: d.beta.iter().copied().collect(),
                sigma: d.sigma,
            })
            .collect();
        if draws.iter().any(|d| d.degenerate) {
            diagnostics
                .warnings
                .push("zero residual variance: imputations are deterministic fitted values".into());
        }
        Ok(MIEnsemble {
            datasets,
            column_names: data.column_names().to_vec(),
            target_index: data.target_index(),
            mis_rows: (0..data.nrows()).filter(|&i| !data.mask()[i]).collect(),
            method_tag: method_tag.to_string(),
            diagnostics,
        })
    }
}

/// Output of steps 1 and 2 for one split.
#[derive(Debug, Clone)]
pub struct FittedReduction {
    pub screen: ScreenResult,
    /// `source_columns` index the split's candidate columns.
    pub map: ReductionMap,
    pub z_obs: DMatrix<f64>,
    pub z_mis: DMatrix<f64>,
    pub sdr_d_selected: Option<usize>,
    pub warnings: Vec<String>,
}

/// Screen, then reduce with `method`. sPCA is fitted on all rows of the
/// screened columns; SDR on the complete cases with the target as response.
pub fn fit_reduction(
    split: &CompleteCaseSplit,
    method: ReductionMethod,
    opts: &ImputeOptions,
    rng: &RngStream,
) -> Result<FittedReduction> {
    let screen = sis_screen(split, opts.screen_cap)?;
    let cols = &screen.selected;
    let x_obs = linalg::select_columns(&split.x_obs, cols);
    let x_mis = linalg::select_columns(&split.x_mis, cols);
    let mut warnings = Vec::new();
    let mut sdr_d_selected = None;

    let mut map = if let Some(variant) = method.spca_variant() {
        let mut all = DMatrix::zeros(x_obs.nrows() + x_mis.nrows(), cols.len());
        all.rows_mut(0, x_obs.nrows()).copy_from(&x_obs);
        all.rows_mut(x_obs.nrows(), x_mis.nrows()).copy_from(&x_mis);
        let std = standardize_columns_with(&all, |j| format!("candidate #{}", split.candidates[cols[j]]))?;
        let n_fit = match opts.component_rule {
            ComponentRule::FirstOne => 1,
            _ => opts.max_components.clamp(1, cols.len()),
        };
        let sparsity = opts.sparsity.unwrap_or_else(|| variant.default_sparsity());
        let mut map = fit_spca(&std.matrix, variant, n_fit, sparsity)?.with_center_scale(std.means, std.sds);
        let sel = select_n_components(&map, opts.component_rule)?;
        if !sel.reached {
            warnings.push(format!(
                "variance rule not reached with {} components; using all",
                sel.d
            ));
        }
        map.truncate(sel.d);
        map
    } else {
        let kind = SdrKind::from_method(method).expect("SDR method");
        let fit = fit_sdr(kind, &split.y_obs, &x_obs, &opts.sdr, rng)?;
        if fit.fallback_forced {
            warnings.push(format!("{} selected d = 0; forced d = 1", method.label()));
        }
        if fit.ridge_repaired {
            warnings.push("singular screened covariance; ridge repair applied".into());
        }
        if fit.nslices_reduced {
            warnings.push(format!("slice count reduced to {}", fit.nslices));
        }
        sdr_d_selected = Some(fit.d_selected);
        fit.map
    };
    map.source_columns = cols.clone();
    let z_obs = project(&map, &x_obs)?;
    let z_mis = project(&map, &x_mis)?;
    Ok(FittedReduction {
        screen,
        map,
        z_obs,
        z_mis,
        sdr_d_selected,
        warnings,
    })
}

const REDUCTION_STREAM: u64 = 0;

fn draw_stream(m: usize) -> u64 {
    1 + m as u64
}

/// Steps 1-3 end to end, producing `m_count` completed datasets.
pub fn multiply_impute(
    data: &IncompleteMatrix,
    method: ReductionMethod,
    opts: &ImputeOptions,
    m_count: usize,
    rng: &RngStream,
) -> Result<MIEnsemble> {
    if m_count < 2 {
        return Err(Error::TooFewImputations(m_count));
    }
    if data.n_missing() == 0 {
        return Ok(MIEnsemble::copies(
            data,
            m_count,
            method.tag(),
            "no missing values in the target column; returning identical copies",
        ));
    }
    let forced = resolve_forced(data, &opts.forced)?;
    let split = split_complete_cases(data)?;
    let names = data.column_names();
    let forced_names: Vec<String> = forced.iter().map(|&c| names[c].clone()).collect();

    if opts.refit_per_draw {
        let mut draws = Vec::with_capacity(m_count);
        let mut diagnostics = Diagnostics {
            forced_names,
            ..Diagnostics::default()
        };
        for m in 0..m_count {
            let stream = rng.substream(draw_stream(m));
            let boot = bootstrap_split(&split, &mut stream.substream(0));
            let (boot, f_obs, f_mis) = take_forced(boot, &forced);
            let red = fit_reduction(&boot, method, opts, &stream.substream(1))?;
            let post = BayesLinearPosterior::fit(&boot.y_obs, &append_columns(&red.z_obs, &f_obs), opts.ridge)?;
            draws.push(post.draw(&append_columns(&red.z_mis, &f_mis), &mut stream.substream(2), m)?);
            diagnostics.warnings.extend(red.warnings);
            diagnostics.d = diagnostics.d.max(red.map.d());
        }
        diagnostics.warnings.sort();
        diagnostics.warnings.dedup();
        return MIEnsemble::from_draws(data, &draws, method.tag(), diagnostics);
    }

    let (split, f_obs, f_mis) = take_forced(split, &forced);
    let red = fit_reduction(&split, method, opts, &rng.substream(REDUCTION_STREAM))?;
    let post = BayesLinearPosterior::fit(&split.y_obs, &append_columns(&red.z_obs, &f_obs), opts.ridge)?;
    let z_mis = append_columns(&red.z_mis, &f_mis);
    let draws = (0..m_count)
        .map(|m| post.draw(&z_mis, &mut rng.substream(draw_stream(m)), m))
        .collect::<Result<Vec<_>>>()?;
    let screened_columns: Vec<usize> = red.map.source_columns.iter().map(|&c| split.candidates[c]).collect();
    let diagnostics = Diagnostics {
        screened_names: screened_columns.iter().map(|&c| names[c].clone()).collect(),
        screened_columns,
        forced_names,
        d: red.map.d(),
        explained_variance: red.map.explained_variance.clone(),
        sdr_d_selected: red.sdr_d_selected,
        loadings: red.map.loadings_rows(),
        draws: Vec::new(),
        warnings: red.warnings,
    };
    MIEnsemble::from_draws(data, &draws, method.tag(), diagnostics)
}

fn resolve_forced(data: &IncompleteMatrix, names: &[String]) -> Result<Vec<usize>> {
    let mut cols = Vec::with_capacity(names.len());
    for name in names {
        let c = data.column_index(name).ok_or_else(|| Error::UnknownColumn(name.clone()))?;
        if c == data.target_index() {
            return Err(Error::invalid(format!("forced column '{name}' is the target")));
        }
        if !cols.contains(&c) {
            cols.push(c);
        }
    }
    Ok(cols)
}

/// Move the `forced` data columns out of the candidate set.
fn take_forced(split: CompleteCaseSplit, forced: &[usize]) -> (CompleteCaseSplit, DMatrix<f64>, DMatrix<f64>) {
    let pos: Vec<usize> = forced
        .iter()
        .filter_map(|f| split.candidates.iter().position(|c| c == f))
        .collect();
    let keep: Vec<usize> = (0..split.candidates.len()).filter(|j| !pos.contains(j)).collect();
    let f_obs = linalg::select_columns(&split.x_obs, &pos);
    let f_mis = linalg::select_columns(&split.x_mis, &pos);
    let rest = CompleteCaseSplit {
        x_obs: linalg::select_columns(&split.x_obs, &keep),
        x_mis: linalg::select_columns(&split.x_mis, &keep),
        candidates: keep.iter().map(|&j| split.candidates[j]).collect(),
        ..split
    };
    (rest, f_obs, f_mis)
}

fn append_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    if b.ncols() == 0 {
        return a.clone();
    }
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Resample the complete cases with replacement; incomplete rows are kept.
fn bootstrap_split(split: &CompleteCaseSplit, rng: &mut RngStream) -> CompleteCaseSplit {
    let n1 = split.n_obs();
    let idx: Vec<usize> = (0..n1).map(|_| rng.index(n1)).collect();
    CompleteCaseSplit {
        obs_rows: idx.iter().map(|&i| split.obs_rows[i]).collect(),
        mis_rows: split.mis_rows.clone(),
        y_obs: DVector::from_iterator(n1, idx.iter().map(|&i| split.y_obs[i])),
        x_obs: linalg::select_rows(&split.x_obs, &idx),
        x_mis: split.x_mis.clone(),
        candidates: split.candidates.clone(),
    }
}
