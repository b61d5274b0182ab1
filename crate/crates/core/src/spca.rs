//! Sparse principal components by alternating rank-one updates with
//! soft-thresholded loadings, followed by projection deflation.
//!
//! The four variants share the same loop and differ only in how the
//! threshold is chosen from `a = X^T u` at each step:
//!
//! * `SoftThreshold`: a fixed fraction of `max |a|`, `lambda = (1 - s) max|a|`.
//! * `Pmd`: the smallest `lambda` whose normalized loading satisfies the L1
//!   budget `||w||_1 <= 1 + s (sqrt(v) - 1)`, found by bisection.
//! * `Lasso`: `lambda` minimizing a BIC criterion over a 20-point log grid.
//! * `AdaptiveLasso`: as `Lasso`, with per-coefficient thresholds weighted by
//!   `1 / |w_pca|` from the unpenalized leading loading.
//!
//! A sparsity of 1 disables thresholding in every variant and the fit reduces
//! to ordinary PCA.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReductionMethod {
    SpcaSt,
    SpcaPmd,
    SpcaL,
    SpcaAl,
    SdrSir,
    SdrSave,
    SdrPhd,
}

impl ReductionMethod {
    pub const ALL: [ReductionMethod; 7] = [
        ReductionMethod::SpcaSt,
        ReductionMethod::SpcaPmd,
        ReductionMethod::SpcaL,
        ReductionMethod::SpcaAl,
        ReductionMethod::SdrSir,
        ReductionMethod::SdrSave,
        ReductionMethod::SdrPhd,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ReductionMethod::SpcaSt => "spca_st",
            ReductionMethod::SpcaPmd => "spca_pmd",
            ReductionMethod::SpcaL => "spca_l",
            ReductionMethod::SpcaAl => "spca_al",
            ReductionMethod::SdrSir => "sdr_sir",
            ReductionMethod::SdrSave => "sdr_save",
            ReductionMethod::SdrPhd => "sdr_phd",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ReductionMethod::SpcaSt => "sPCA_ST",
            ReductionMethod::SpcaPmd => "sPCA_PMD",
            ReductionMethod::SpcaL => "sPCA_L",
            ReductionMethod::SpcaAl => "sPCA_AL",
            ReductionMethod::SdrSir => "SDR_SIR",
            ReductionMethod::SdrSave => "SDR_SAVE",
            ReductionMethod::SdrPhd => "SDR_PHD",
        }
    }

    pub fn spca_variant(self) -> Option<SpcaVariant> {
        match self {
            ReductionMethod::SpcaSt => Some(SpcaVariant::SoftThreshold),
            ReductionMethod::SpcaPmd => Some(SpcaVariant::Pmd),
            ReductionMethod::SpcaL => Some(SpcaVariant::Lasso),
            ReductionMethod::SpcaAl => Some(SpcaVariant::AdaptiveLasso),
            _ => None,
        }
    }
}

impl fmt::Display for ReductionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ReductionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        ReductionMethod::ALL
            .into_iter()
            .find(|m| m.tag() == key)
            .ok_or_else(|| Error::invalid(format!("unknown reduction method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpcaVariant {
    SoftThreshold,
    Pmd,
    Lasso,
    AdaptiveLasso,
}

impl SpcaVariant {
    pub fn default_sparsity(self) -> f64 {
        match self {
            SpcaVariant::SoftThreshold => 0.5,
            SpcaVariant::Pmd => 0.7,
            SpcaVariant::Lasso | SpcaVariant::AdaptiveLasso => 0.05,
        }
    }

    pub fn method(self) -> ReductionMethod {
        match self {
            SpcaVariant::SoftThreshold => ReductionMethod::SpcaSt,
            SpcaVariant::Pmd => ReductionMethod::SpcaPmd,
            SpcaVariant::Lasso => ReductionMethod::SpcaL,
            SpcaVariant::AdaptiveLasso => ReductionMethod::SpcaAl,
        }
    }
}

/// A fitted linear map from `v` source variables to `d` components:
/// `Z = ((X - center) / scale) * loadings^T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionMap {
    /// `d x v`; each row is one loading (or direction) vector.
    #[serde(skip)]
    pub loadings: DMatrix<f64>,
    pub source_columns: Vec<usize>,
    pub method: ReductionMethod,
    pub explained_variance: Vec<f64>,
    #[serde(skip)]
    pub center: DVector<f64>,
    #[serde(skip)]
    pub scale: DVector<f64>,
}

impl ReductionMap {
    pub fn d(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn v(&self) -> usize {
        self.loadings.ncols()
    }

    /// Keep the first `d` components.
    pub fn truncate(&mut self, d: usize) {
        let d = d.clamp(1, self.d());
        self.loadings = self.loadings.rows(0, d).into_owned();
        self.explained_variance.truncate(d);
    }

    pub fn with_center_scale(mut self, center: DVector<f64>, scale: DVector<f64>) -> Self {
        self.center = center;
        self.scale = scale;
        self
    }

    pub fn loadings_rows(&self) -> Vec<Vec<f64>> {
        self.loadings.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

pub fn project(map: &ReductionMap, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x_new.ncols() != map.v() {
        return Err(Error::DimensionMismatch(format!(
            "projection expects {} columns, got {}",
            map.v(),
            x_new.ncols()
        )));
    }
    let mut xs = x_new.clone();
    for (j, mut col) in xs.column_iter_mut().enumerate() {
        col.add_scalar_mut(-map.center[j]);
        col /= map.scale[j];
    }
    Ok(xs * map.loadings.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentRule {
    FirstOne,
    Var60,
    Var80,
}

impl ComponentRule {
    fn threshold(self) -> Option<f64> {
        match self {
            ComponentRule::FirstOne => None,
            ComponentRule::Var60 => Some(0.6),
            ComponentRule::Var80 => Some(0.8),
        }
    }
}

impl FromStr for ComponentRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "first" | "first_one" | "one" => Ok(ComponentRule::FirstOne),
            "var60" => Ok(ComponentRule::Var60),
            "var80" => Ok(ComponentRule::Var80),
            _ => Err(Error::invalid(format!("unknown component rule '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentSelection {
    pub d: usize,
    /// False when a variance rule was never met and all components were kept.
    pub reached: bool,
}

pub fn select_n_components(map: &ReductionMap, rule: ComponentRule) -> Result<ComponentSelection> {
    if map.explained_variance.is_empty() {
        return Err(Error::invalid("reduction map has no explained variance"));
    }
    let Some(target) = rule.threshold() else {
        return Ok(ComponentSelection { d: 1, reached: true });
    };
    let mut cum = 0.0;
    for (k, ev) in map.explained_variance.iter().enumerate() {
        cum += ev;
        // Tolerance absorbs rounding in exact-boundary cases such as 0.6 + 0.2.
        if cum >= target - 1e-12 {
            return Ok(ComponentSelection { d: k + 1, reached: true });
        }
    }
    Ok(ComponentSelection {
        d: map.explained_variance.len(),
        reached: false,
    })
}

const MAX_ITER: usize = 500;
const TOL: f64 = 1e-7;
const GRID_POINTS: usize = 20;

/// Fit `n_components` sparse loadings to a column-standardized matrix.
pub fn fit_spca(
    x: &DMatrix<f64>,
    variant: SpcaVariant,
    n_components: usize,
    sparsity: f64,
) -> Result<ReductionMap> {
    fit_spca_with_scores(x, variant, n_components, sparsity).map(|(map, _)| map)
}

/// As [`fit_spca`], also returning the unit score vectors `u_k` (one column
/// per component) from the deflation sequence.
pub fn fit_spca_with_scores(
    x: &DMatrix<f64>,
    variant: SpcaVariant,
    n_components: usize,
    sparsity: f64,
) -> Result<(ReductionMap, DMatrix<f64>)> {
    let (n, v) = x.shape();
    if n < 3 || v < 1 {
        return Err(Error::InvalidData(format!("sPCA needs n >= 3 and v >= 1, got {n}x{v}")));
    }
    if n_components < 1 || n_components > v {
        return Err(Error::invalid(format!(
            "n_components must be in 1..={v}, got {n_components}"
        )));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::invalid(format!("sparsity must be in (0, 1], got {sparsity}")));
    }
    for (j, col) in x.column_iter().enumerate() {
        let mean = col.sum() / n as f64;
        if mean.abs() > 1e-6 {
            return Err(Error::NotStandardized { column: j, mean });
        }
    }

    let total_var = x.iter().map(|v| v * v).sum::<f64>() / (n as f64 - 1.0);
    let mut resid = x.clone();
    let mut loadings = DMatrix::zeros(n_components, v);
    let mut explained = Vec::with_capacity(n_components);
    let mut scores = DMatrix::zeros(n, n_components);

    for k in 0..n_components {
        let w = rank_one(&resid, variant, sparsity).ok_or(Error::ZeroLoading { component: k })?;
        let xw = &resid * &w;
        let s = xw.norm();
        let u = &xw / s;
        // Projection deflation X <- (I - u u^T) X. Equals X - (u^T X w) u w^T
        // when w is unthresholded, and keeps later scores orthogonal to u
        // when it is not.
        let ua = u.tr_mul(&resid);
        resid -= &u * ua;
        scores.set_column(k, &u);
        let score = x * &w;
        explained.push(score.norm_squared() / (n as f64 - 1.0) / total_var);
        loadings.set_row(k, &w.transpose());
    }

    let map = ReductionMap {
        loadings,
        source_columns: (0..v).collect(),
        method: variant.method(),
        explained_variance: explained,
        center: DVector::zeros(v),
        scale: DVector::from_element(v, 1.0),
    };
    Ok((map, scores))
}

/// Leading right singular vector.
fn leading_right_vector(x: &DMatrix<f64>) -> Option<DVector<f64>> {
    let gram = x.tr_mul(x);
    let (vals, vecs) = linalg::sym_eigen_desc(&gram);
    if !(vals[0] > 1e-14 * gram.trace().max(1e-300)) {
        return None;
    }
    Some(vecs.column(0).into_owned())
}

fn rank_one(x: &DMatrix<f64>, variant: SpcaVariant, sparsity: f64) -> Option<DVector<f64>> {
    let w_pca = leading_right_vector(x)?;
    let total_ss = x.norm_squared();
    let (n, v) = x.shape();
    let mut w = w_pca.clone();
    for _ in 0..MAX_ITER {
        let xw = x * &w;
        let norm = xw.norm();
        if norm == 0.0 {
            return None;
        }
        let u = xw / norm;
        let a = x.tr_mul(&u);
        let mut next = match variant {
            SpcaVariant::SoftThreshold => {
                let lam = (1.0 - sparsity) * a.amax();
                soft_threshold(&a, lam)
            }
            SpcaVariant::Pmd => pmd_threshold(&a, 1.0 + sparsity * ((v as f64).sqrt() - 1.0)),
            SpcaVariant::Lasso => {
                let weights = DVector::from_element(v, 1.0);
                bic_threshold(&a, &weights, sparsity, total_ss, n, v)
            }
            SpcaVariant::AdaptiveLasso => {
                let weights = w_pca.map(|c| if c == 0.0 { f64::INFINITY } else { 1.0 / c.abs() });
                bic_threshold(&a, &weights, sparsity, total_ss, n, v)
            }
        };
        let nn = next.norm();
        if !(nn > 0.0) {
            return None;
        }
        next /= nn;
        let delta = (&next - &w).norm();
        w = next;
        if delta < TOL {
            break;
        }
    }
    let imax = w.iamax();
    if w[imax] < 0.0 {
        w = -w;
    }
    Some(w)
}

pub(crate) fn soft_threshold(a: &DVector<f64>, lam: f64) -> DVector<f64> {
    a.map(|x| x.signum() * (x.abs() - lam).max(0.0))
}

fn l1_ratio(w: &DVector<f64>) -> f64 {
    let n2 = w.norm();
    if n2 == 0.0 {
        0.0
    } else {
        w.lp_norm(1) / n2
    }
}

/// Soft-threshold `a` at the smallest level meeting `||w||_1 / ||w||_2 <= budget`.
pub(crate) fn pmd_threshold(a: &DVector<f64>, budget: f64) -> DVector<f64> {
    if l1_ratio(a) <= budget {
        return a.clone();
    }
    let (mut lo, mut hi) = (0.0, a.amax());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let w = soft_threshold(a, mid);
        if l1_ratio(&w) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * a.amax() {
            break;
        }
    }
    soft_threshold(a, hi)
}

/// Weighted soft-threshold with `lambda` picked by BIC on the rank-one fit
/// `X ~ u w^T` (u unit norm), over a log grid spanning three decades below
/// `(1 - s) * max |a_j| / weight_j`.
fn bic_threshold(
    a: &DVector<f64>,
    weights: &DVector<f64>,
    sparsity: f64,
    total_ss: f64,
    n: usize,
    v: usize,
) -> DVector<f64> {
    let apply = |lam: f64| {
        DVector::from_iterator(
            a.len(),
            a.iter().zip(weights.iter()).map(|(&x, &wt)| {
                if wt.is_infinite() {
                    0.0
                } else {
                    x.signum() * (x.abs() - lam * wt).max(0.0)
                }
            }),
        )
    };
    let lam_max = a
        .iter()
        .zip(weights.iter())
        .filter(|(_, w)| w.is_finite())
        .map(|(x, w)| x.abs() / w)
        .fold(0.0, f64::max);
    let top = (1.0 - sparsity) * lam_max;
    if !(top > 0.0) {
        return apply(0.0);
    }
    let nv = (n * v) as f64;
    let sigma2 = (total_ss - a.norm_squared()) / (nv - v as f64).max(1.0);
    if !(sigma2 > 1e-14 * total_ss) {
        return apply(top * 1e-3);
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    for g in 0..GRID_POINTS {
        let lam = top * 10f64.powf(-3.0 + 3.0 * g as f64 / (GRID_POINTS - 1) as f64);
        let w = apply(lam);
        let df = w.iter().filter(|x| **x != 0.0).count() as f64;
        let rss = total_ss - 2.0 * a.dot(&w) + w.norm_squared();
        let bic = rss / (nv * sigma2) + nv.ln() / nv * df;
        if best.as_ref().is_none_or(|(b, _)| bic < *b) {
            best = Some((bic, w));
        }
    }
    best.map(|(_, w)| w).unwrap_or_else(|| apply(0.0))
}
