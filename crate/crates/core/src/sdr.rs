//! Sufficient dimension reduction on the complete cases: sliced inverse
//! regression (SIR), sliced average variance estimation (SAVE) and
//! residual-based principal Hessian directions (PHD).
//!
//! All three standardize the predictors to `Z = (X - mean) S^{-1/2}` with `S`
//! the sample covariance, build a `v x v` kernel from `Z` and the response,
//! and map kernel eigenvectors back through `S^{-1/2}`. The resulting
//! directions are S-orthonormal.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg;
use crate::spca::{ReductionMap, ReductionMethod};
use crate::stochastic::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SdrKind {
    Sir,
    Save,
    Phd,
}

impl SdrKind {
    pub fn method(self) -> ReductionMethod {
        match self {
            SdrKind::Sir => ReductionMethod::SdrSir,
            SdrKind::Save => ReductionMethod::SdrSave,
            SdrKind::Phd => ReductionMethod::SdrPhd,
        }
    }

    pub fn from_method(method: ReductionMethod) -> Option<Self> {
        match method {
            ReductionMethod::SdrSir => Some(SdrKind::Sir),
            ReductionMethod::SdrSave => Some(SdrKind::Save),
            ReductionMethod::SdrPhd => Some(SdrKind::Phd),
            _ => None,
        }
    }
}

impl FromStr for SdrKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sir" => Ok(SdrKind::Sir),
            "save" => Ok(SdrKind::Save),
            "phd" => Ok(SdrKind::Phd),
            _ => Err(Error::invalid(format!("unknown SDR method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdrOptions {
    pub nslices: usize,
    pub n_perm: usize,
    pub alpha: f64,
    pub max_dim: usize,
    /// Use `y - mean(y)` instead of OLS residuals in the PHD kernel.
    pub phd_response_based: bool,
}

impl Default for SdrOptions {
    fn default() -> Self {
        Self {
            nslices: 8,
            n_perm: 200,
            alpha: 0.05,
            max_dim: 4,
            phd_response_based: false,
        }
    }
}

impl SdrOptions {
    pub fn validate(&self) -> Result<()> {
        if self.nslices < 2 {
            return Err(Error::invalid("nslices must be at least 2"));
        }
        if self.n_perm < 100 {
            return Err(Error::invalid("permutation count must be at least 100"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must be in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SdrFit {
    /// Rows are the directions actually used (at least one).
    pub map: ReductionMap,
    /// All kernel eigenvalues, ordered by decreasing magnitude.
    pub eigenvalues: Vec<f64>,
    /// Dimension chosen by the test (may be 0).
    pub d_selected: usize,
    pub test_pvalues: Vec<f64>,
    /// Slices actually used (SIR/SAVE); 0 for PHD.
    pub nslices: usize,
    pub ridge_repaired: bool,
    pub nslices_reduced: bool,
    /// The test chose d = 0 and the leading direction was kept anyway.
    pub fallback_forced: bool,
    /// Covariance used for standardization (after any ridge repair).
    pub sigma: DMatrix<f64>,
}

/// Standardized predictors plus what is needed to map back.
#[derive(Debug, Clone)]
pub struct Whitened {
    pub z: DMatrix<f64>,
    pub means: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
    pub repaired: bool,
}

pub fn whiten(x: &DMatrix<f64>) -> Result<Whitened> {
    let (n, v) = x.shape();
    if n < 2 {
        return Err(Error::InvalidData("need at least 2 rows".into()));
    }
    let means = linalg::column_means(x);
    let xc = linalg::center_columns(x, &means);
    let mut sigma = xc.tr_mul(&xc) / (n as f64 - 1.0);
    for (j, d) in sigma.diagonal().iter().enumerate() {
        if !(*d > 0.0) {
            return Err(Error::ConstantColumn(format!("#{j}")));
        }
    }
    let mut repaired = false;
    let inv_sqrt = match linalg::inv_sqrt_spd(&sigma) {
        Some(s) => s,
        None => {
            let ridge = 1e-8 * sigma.trace() / v as f64;
            for j in 0..v {
                sigma[(j, j)] += ridge;
            }
            repaired = true;
            log::warn!("singular predictor covariance; added ridge {ridge:e} to the diagonal");
            linalg::inv_sqrt_spd(&sigma).ok_or(Error::NotPositiveDefinite)?
        }
    };
    Ok(Whitened {
        z: xc * &inv_sqrt,
        means,
        sigma,
        inv_sqrt,
        repaired,
    })
}

/// Partition rows into at most `nslices` groups of near-equal size by sorted
/// `y`. Tied responses always share a slice; equal responses keep their
/// original order.
pub fn make_slices(y: &DVector<f64>, nslices: usize) -> Vec<Vec<usize>> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut slices = Vec::new();
    let mut start = 0;
    for k in 1..=nslices {
        if start >= n {
            break;
        }
        let mut end = if k == nslices {
            n
        } else {
            ((k * n) as f64 / nslices as f64).round() as usize
        };
        if end <= start {
            continue;
        }
        while end < n && y[order[end]] == y[order[end - 1]] {
            end += 1;
        }
        slices.push(order[start..end].to_vec());
        start = end;
    }
    slices
}

/// Merge any slice with fewer than `min_size` rows into its neighbour.
fn merge_small_slices(mut slices: Vec<Vec<usize>>, min_size: usize) -> (Vec<Vec<usize>>, bool) {
    let mut merged = false;
    while slices.len() > 1 {
        let Some(i) = slices.iter().position(|s| s.len() < min_size) else {
            break;
        };
        let small = slices.remove(i);
        let target = if i == 0 { 0 } else { i - 1 };
        if i == 0 {
            let mut joined = small;
            joined.extend(slices[0].iter().copied());
            slices[0] = joined;
        } else {
            slices[target].extend(small);
        }
        merged = true;
    }
    (slices, merged)
}

fn slice_mean(z: &DMatrix<f64>, rows: &[usize]) -> DVector<f64> {
    let mut m = DVector::zeros(z.ncols());
    for &i in rows {
        m += z.row(i).transpose();
    }
    m / rows.len() as f64
}

/// `M = sum_h p_h m_h m_h^T` over slice means of `z`.
pub fn sir_kernel(z: &DMatrix<f64>, slices: &[Vec<usize>]) -> DMatrix<f64> {
    let n = z.nrows() as f64;
    let v = z.ncols();
    let mut m = DMatrix::zeros(v, v);
    for s in slices {
        let mean = slice_mean(z, s);
        m += (&mean * mean.transpose()) * (s.len() as f64 / n);
    }
    m
}

/// `M = sum_h p_h (I - V_h)^2` with `V_h` the within-slice covariance
/// (denominator `n_h - 1`). Every slice needs at least two rows.
pub fn save_kernel(z: &DMatrix<f64>, slices: &[Vec<usize>]) -> DMatrix<f64> {
    let n = z.nrows() as f64;
    let v = z.ncols();
    let mut m = DMatrix::zeros(v, v);
    for s in slices {
        let mean = slice_mean(z, s);
        let mut cov = DMatrix::zeros(v, v);
        for &i in s {
            let d = z.row(i).transpose() - &mean;
            cov += &d * d.transpose();
        }
        cov /= s.len() as f64 - 1.0;
        let a = DMatrix::identity(v, v) - cov;
        m += (&a * &a) * (s.len() as f64 / n);
    }
    m
}

/// Residuals used by PHD: OLS residuals of `y` on `[1, z]` (z centered with
/// identity covariance), or the centered response.
pub fn phd_residuals(y: &DVector<f64>, z: &DMatrix<f64>, response_based: bool) -> DVector<f64> {
    let n = y.len() as f64;
    let yc = y.add_scalar(-y.mean());
    if response_based {
        return yc;
    }
    let beta = z.tr_mul(&yc) / (n - 1.0);
    yc - z * beta
}

/// `M = (1/n) sum_i e_i z_i z_i^T`.
pub fn phd_kernel(e: &DVector<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.nrows() as f64;
    let mut weighted = z.clone();
    for (mut row, ei) in weighted.row_iter_mut().zip(e.iter()) {
        row *= *ei;
    }
    weighted.tr_mul(z) / n
}

struct KernelContext<'a> {
    kind: SdrKind,
    z: &'a DMatrix<f64>,
    nslices: usize,
    response_based: bool,
}

impl KernelContext<'_> {
    fn kernel(&self, y: &DVector<f64>) -> DMatrix<f64> {
        match self.kind {
            SdrKind::Sir => sir_kernel(self.z, &make_slices(y, self.nslices)),
            SdrKind::Save => {
                let (slices, _) = merge_small_slices(make_slices(y, self.nslices), 2);
                save_kernel(self.z, &slices)
            }
            SdrKind::Phd => phd_kernel(&phd_residuals(y, self.z, self.response_based), self.z),
        }
    }

    fn eigen(&self, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.kernel(y);
        match self.kind {
            SdrKind::Phd => linalg::sym_eigen_sorted_by(&m, f64::abs),
            _ => linalg::sym_eigen_desc(&m),
        }
    }
}

/// Tail statistics `T_k = n * sum_{j > k} lambda_j` for `k = 0..cap`.
fn tail_stats(n: usize, eig: &DVector<f64>, cap: usize) -> Vec<f64> {
    (0..cap)
        .map(|k| n as f64 * eig.iter().skip(k).map(|l| l.max(0.0)).sum::<f64>())
        .collect()
}

/// Sequential permutation test for the structural dimension.
///
/// For `k = 0, 1, ...` the observed tail statistic is compared against the
/// same statistic recomputed on `n_perm` permutations of `y` (X held fixed).
/// Returns the first `k` whose p-value exceeds `alpha`, capped at `cap`,
/// together with the p-values for every tested `k`.
pub fn permutation_test_d(
    kind: SdrKind,
    y: &DVector<f64>,
    z: &DMatrix<f64>,
    nslices: usize,
    n_perm: usize,
    alpha: f64,
    cap: usize,
    rng: &RngStream,
) -> (usize, Vec<f64>) {
    let n = y.len();
    if cap == 0 {
        return (0, Vec::new());
    }
    let ctx = KernelContext {
        kind,
        z,
        nslices,
        response_based: false,
    };
    let observed = tail_stats(n, &ctx.eigen(y).0, cap);
    let mut exceed = vec![0usize; cap];
    for b in 0..n_perm {
        let perm = rng.substream(b as u64).permutation(n);
        let yp = DVector::from_iterator(n, perm.iter().map(|&i| y[i]));
        let stats = tail_stats(n, &ctx.eigen(&yp).0, cap);
        for k in 0..cap {
            // Relative slack so that exact ties (e.g. a constant response) count.
            if stats[k] >= observed[k] * (1.0 - 1e-12) - 1e-300 {
                exceed[k] += 1;
            }
        }
    }
    let pvalues: Vec<f64> = exceed
        .iter()
        .map(|&e| (1 + e) as f64 / (n_perm + 1) as f64)
        .collect();
    let d = pvalues.iter().position(|&p| p > alpha).unwrap_or(cap);
    (d, pvalues)
}

/// Sequential asymptotic chi-square test for PHD:
/// `n * sum_{j > k} lambda_j^2 / (2 var(e))` on `(v-k)(v-k+1)/2` df.
pub fn phd_asymptotic_test_d(
    n: usize,
    eig: &DVector<f64>,
    resid_var: f64,
    alpha: f64,
    cap: usize,
) -> (usize, Vec<f64>) {
    let v = eig.len();
    let mut pvalues = Vec::with_capacity(cap);
    for k in 0..cap {
        let stat = n as f64 * eig.iter().skip(k).map(|l| l * l).sum::<f64>() / (2.0 * resid_var);
        let df = ((v - k) * (v - k + 1) / 2) as f64;
        let p = if resid_var > 0.0 && stat.is_finite() {
            ChiSquared::new(df).map(|c| c.sf(stat)).unwrap_or(1.0)
        } else {
            1.0
        };
        pvalues.push(p);
    }
    let d = pvalues.iter().position(|&p| p > alpha).unwrap_or(cap);
    (d, pvalues)
}

pub fn fit_sir(y: &DVector<f64>, x: &DMatrix<f64>, opts: &SdrOptions, rng: &RngStream) -> Result<SdrFit> {
    fit_sdr(SdrKind::Sir, y, x, opts, rng)
}

pub fn fit_save(y: &DVector<f64>, x: &DMatrix<f64>, opts: &SdrOptions, rng: &RngStream) -> Result<SdrFit> {
    fit_sdr(SdrKind::Save, y, x, opts, rng)
}

pub fn fit_phd(y: &DVector<f64>, x: &DMatrix<f64>, opts: &SdrOptions) -> Result<SdrFit> {
    // The asymptotic test draws no random numbers.
    fit_sdr(SdrKind::Phd, y, x, opts, &RngStream::new(0, 0))
}

pub fn fit_sdr(
    kind: SdrKind,
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    opts: &SdrOptions,
    rng: &RngStream,
) -> Result<SdrFit> {
    opts.validate()?;
    let (n, v) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("{} responses for {n} rows", y.len())));
    }
    if v == 0 {
        return Err(Error::InvalidData("no predictors".into()));
    }
    if kind == SdrKind::Phd && n <= v + 2 {
        return Err(Error::TooFewCompleteCases { have: n, need: v + 3 });
    }
    if n < 4 {
        return Err(Error::TooFewCompleteCases { have: n, need: 4 });
    }
    let w = whiten(x)?;

    let mut nslices = opts.nslices;
    let mut nslices_reduced = false;
    if kind != SdrKind::Phd && n < 2 * nslices {
        nslices = n / 2;
        nslices_reduced = true;
        log::warn!("too few rows for {} slices; using {nslices}", opts.nslices);
    }

    let ctx = KernelContext {
        kind,
        z: &w.z,
        nslices,
        response_based: opts.phd_response_based,
    };
    let used_slices = match kind {
        SdrKind::Phd => 0,
        SdrKind::Sir => make_slices(y, nslices).len(),
        SdrKind::Save => {
            let (s, merged) = merge_small_slices(make_slices(y, nslices), 2);
            nslices_reduced |= merged;
            s.len()
        }
    };
    let (eigenvalues, eigenvectors) = ctx.eigen(y);

    let (d_selected, test_pvalues) = match kind {
        SdrKind::Phd => {
            let e = phd_residuals(y, &w.z, opts.phd_response_based);
            let resid_var = e.norm_squared() / n as f64;
            let cap = v.min(opts.max_dim);
            phd_asymptotic_test_d(n, &eigenvalues, resid_var, opts.alpha, cap)
        }
        _ => {
            let cap = v.min(used_slices.saturating_sub(1)).min(opts.max_dim);
            permutation_test_d(kind, y, &w.z, nslices, opts.n_perm, opts.alpha, cap, rng)
        }
    };

    let fallback_forced = d_selected == 0;
    if fallback_forced {
        log::warn!("{:?} dimension test selected d = 0; keeping the leading direction", kind);
    }
    let d_used = d_selected.max(1);
    let mut loadings = DMatrix::zeros(d_used, v);
    for k in 0..d_used {
        let mut gamma = &w.inv_sqrt * eigenvectors.column(k);
        let imax = gamma.iamax();
        if gamma[imax] < 0.0 {
            gamma = -gamma;
        }
        loadings.set_row(k, &gamma.transpose());
    }

    let map = ReductionMap {
        loadings,
        source_columns: (0..v).collect(),
        method: kind.method(),
        explained_variance: Vec::new(),
        center: w.means.clone(),
        scale: DVector::from_element(v, 1.0),
    };
    Ok(SdrFit {
        map,
        eigenvalues: eigenvalues.iter().copied().collect(),
        d_selected,
        test_pvalues,
        nslices: used_slices,
        ridge_repaired: w.repaired,
        nslices_reduced,
        fallback_forced,
        sigma: w.sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::angle_to_span_deg;

    #[test]
    fn slices_keep_ties_together() {
        let y = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 2.0, 3.0]);
        let s = make_slices(&y, 3);
        assert_eq!(s[0], vec![0, 1, 2, 3]);
        assert_eq!(s.iter().map(Vec::len).sum::<usize>(), 6);
        let constant = DVector::from_element(10, 4.0);
        assert_eq!(make_slices(&constant, 4).len(), 1);
    }

    #[test]
    fn slices_near_equal() {
        let y = DVector::from_fn(20, |i, _| ((i * 7) % 20) as f64);
        let s = make_slices(&y, 8);
        assert_eq!(s.len(), 8);
        assert!(s.iter().all(|sl| sl.len() == 2 || sl.len() == 3));
    }

    #[test]
    fn merge_small() {
        let (s, merged) = merge_small_slices(vec![vec![0], vec![1, 2], vec![3, 4, 5]], 2);
        assert!(merged);
        assert_eq!(s, vec![vec![0, 1, 2], vec![3, 4, 5]]);
    }

    #[test]
    fn constant_response_gives_null_model() {
        let mut rng = RngStream::new(1, 0);
        let x = DMatrix::from_fn(40, 3, |_, _| rng.std_normal());
        let y = DVector::from_element(40, 2.0);
        let opts = SdrOptions::default();
        let fit = fit_sir(&y, &x, &opts, &RngStream::new(2, 0)).unwrap();
        assert!(fit.eigenvalues.iter().all(|l| l.abs() < 1e-10));
        assert_eq!(fit.d_selected, 0);
        assert!(fit.fallback_forced);
        assert_eq!(fit.map.d(), 1);
        let fit = fit_save(&y, &x, &opts, &RngStream::new(2, 0)).unwrap();
        assert!(fit.eigenvalues.iter().all(|l| l.abs() < 1e-10));
        assert_eq!(fit.d_selected, 0);
    }

    #[test]
    fn directions_are_sigma_orthonormal() {
        let mut rng = RngStream::new(3, 0);
        let b = DVector::from_vec(vec![1.0, -1.0, 0.5, 0.0]);
        let x = DMatrix::from_fn(300, 4, |_, j| (j + 1) as f64 * rng.std_normal());
        let y = DVector::from_fn(300, |i, _| {
            let t: f64 = x.row(i).transpose().dot(&b);
            t + 0.3 * t * t
        });
        let opts = SdrOptions {
            max_dim: 4,
            ..SdrOptions::default()
        };
        for kind in [SdrKind::Sir, SdrKind::Save, SdrKind::Phd] {
            let fit = fit_sdr(kind, &y, &x, &opts, &RngStream::new(4, 0)).unwrap();
            let g = &fit.map.loadings;
            let gram = g * &fit.sigma * g.transpose();
            assert!((gram - DMatrix::identity(g.nrows(), g.nrows())).amax() < 1e-6, "{kind:?}");
            assert!(fit.d_selected <= 4);
        }
    }

    #[test]
    fn sir_recovers_single_index() {
        let mut rng = RngStream::new(5, 0);
        let n = 500;
        let b = DVector::from_vec(vec![1.0, 2.0, 0.0, -1.0, 0.5]);
        let x = DMatrix::from_fn(n, 5, |_, _| rng.std_normal());
        let y = &x * &b + DVector::from_fn(n, |_, _| 0.1 * rng.std_normal());
        let fit = fit_sir(&y, &x, &SdrOptions::default(), &RngStream::new(6, 0)).unwrap();
        let dir = fit.map.loadings.row(0).transpose();
        assert!(angle_to_span_deg(&dir, &b) < 5.0);
        assert_eq!(fit.d_selected, 1);
    }

    fn quadratic_data(seed: u64, n: usize) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let mut rng = RngStream::new(seed, 0);
        let b = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.0]) / 2f64.sqrt();
        let x = DMatrix::from_fn(n, 4, |_, _| rng.std_normal());
        let y = DVector::from_fn(n, |i, _| {
            let t = x.row(i).transpose().dot(&b);
            t * t + 0.1 * rng.std_normal()
        });
        (y, x, b)
    }

    #[test]
    fn save_recovers_symmetric_link() {
        let (y, x, b) = quadratic_data(7, 1000);
        let fit = fit_save(&y, &x, &SdrOptions::default(), &RngStream::new(8, 0)).unwrap();
        let dir = fit.map.loadings.row(0).transpose();
        assert!(angle_to_span_deg(&dir, &b) < 10.0);
    }

    #[test]
    fn phd_recovers_symmetric_link() {
        let (y, x, b) = quadratic_data(9, 1000);
        let fit = fit_phd(&y, &x, &SdrOptions::default()).unwrap();
        let dir = fit.map.loadings.row(0).transpose();
        assert!(angle_to_span_deg(&dir, &b) < 10.0);
        assert!(fit.d_selected >= 1);
    }

    #[test]
    fn phd_linear_null_rarely_rejects() {
        let reps = 100;
        let mut zero = 0;
        for r in 0..reps {
            let mut rng = RngStream::new(10, r);
            let b = DVector::from_vec(vec![1.0, -0.5, 0.25]);
            let x = DMatrix::from_fn(200, 3, |_, _| rng.std_normal());
            let y = &x * &b + DVector::from_fn(200, |_, _| rng.std_normal());
            let fit = fit_phd(&y, &x, &SdrOptions::default()).unwrap();
            if fit.d_selected == 0 {
                zero += 1;
            }
        }
        assert!(zero >= 90, "d = 0 in {zero}/{reps}");
    }

    #[test]
    fn permutation_test_deterministic() {
        let mut rng = RngStream::new(11, 0);
        let x = DMatrix::from_fn(60, 3, |_, _| rng.std_normal());
        let y = DVector::from_fn(60, |i, _| x[(i, 0)] + rng.std_normal());
        let w = whiten(&x).unwrap();
        let a = permutation_test_d(SdrKind::Sir, &y, &w.z, 6, 100, 0.05, 3, &RngStream::new(1, 1));
        let b = permutation_test_d(SdrKind::Sir, &y, &w.z, 6, 100, 0.05, 3, &RngStream::new(1, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn diagonal_rescaling_invariance() {
        let mut rng = RngStream::new(12, 0);
        let x = DMatrix::from_fn(120, 3, |_, _| rng.std_normal());
        let y = DVector::from_fn(120, |i, _| x[(i, 0)] - x[(i, 2)] + 0.5 * rng.std_normal());
        let scaled = DMatrix::from_fn(120, 3, |i, j| x[(i, j)] * [2.0, 0.5, 7.0][j]);
        for kind in [SdrKind::Sir, SdrKind::Save, SdrKind::Phd] {
            let a = fit_sdr(kind, &y, &x, &SdrOptions::default(), &RngStream::new(3, 3)).unwrap();
            let b = fit_sdr(kind, &y, &scaled, &SdrOptions::default(), &RngStream::new(3, 3)).unwrap();
            for (l1, l2) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                assert!((l1 - l2).abs() < 1e-8, "{kind:?}");
            }
            assert_eq!(a.d_selected, b.d_selected);
        }
    }

    #[test]
    fn projection_matches_explicit_combination() {
        let mut rng = RngStream::new(13, 0);
        let x = DMatrix::from_fn(50, 3, |_, _| rng.std_normal());
        let y = DVector::from_fn(50, |i, _| x[(i, 1)] + 0.2 * rng.std_normal());
        let fit = fit_sir(&y, &x, &SdrOptions::default(), &RngStream::new(1, 0)).unwrap();
        let z = crate::spca::project(&fit.map, &x).unwrap();
        let g = &fit.map.loadings;
        for i in 0..50 {
            for k in 0..g.nrows() {
                let explicit: f64 = (0..3).map(|j| g[(k, j)] * x[(i, j)]).sum::<f64>()
                    - (0..3).map(|j| g[(k, j)] * fit.map.center[j]).sum::<f64>();
                assert!((z[(i, k)] - explicit).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_covariance_is_repaired() {
        let mut rng = RngStream::new(14, 0);
        let mut x = DMatrix::from_fn(40, 3, |_, _| rng.std_normal());
        let c0 = x.column(0).into_owned();
        x.set_column(2, &c0);
        let y = DVector::from_fn(40, |i, _| x[(i, 1)] + rng.std_normal());
        let fit = fit_sir(&y, &x, &SdrOptions::default(), &RngStream::new(1, 0)).unwrap();
        assert!(fit.ridge_repaired);
    }
}
