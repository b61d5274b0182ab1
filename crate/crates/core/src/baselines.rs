//! Comparator methods: gold standard, complete cases, full-model MI and
//! nearest-neighbor single imputation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, AnalysisSpec, FitResult};
use crate::data::{split_complete_cases, standardize_columns_with, IncompleteMatrix};
use crate::error::{Error, Result};
use crate::imputation::{BayesLinearPosterior, Diagnostics, MIEnsemble, DEFAULT_RIDGE};
use crate::linalg;
use crate::screening::sis_screen;
use crate::stochastic::RngStream;

pub const DEFAULT_K: usize = 5;
const WEIGHT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    Gs,
    Cc,
    MiFull,
    KnnS,
    KnnV,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Gs,
        BaselineKind::Cc,
        BaselineKind::MiFull,
        BaselineKind::KnnS,
        BaselineKind::KnnV,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            BaselineKind::Gs => "gs",
            BaselineKind::Cc => "cc",
            BaselineKind::MiFull => "mi_full",
            BaselineKind::KnnS => "knn_s",
            BaselineKind::KnnV => "knn_v",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::Gs => "GS",
            BaselineKind::Cc => "CC",
            BaselineKind::MiFull => "MI",
            BaselineKind::KnnS => "KNN_S",
            BaselineKind::KnnV => "KNN_V",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == lower || k.label().eq_ignore_ascii_case(s))
            .or(if lower == "mi" { Some(BaselineKind::MiFull) } else { None })
            .ok_or_else(|| Error::invalid(format!("unknown baseline '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub k: usize,
    pub ridge: f64,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind) -> Self {
        Self {
            kind,
            k: DEFAULT_K,
            ridge: DEFAULT_RIDGE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.kind, BaselineKind::KnnS | BaselineKind::KnnV) && self.k == 0 {
            return Err(Error::invalid("KNN requires k >= 1"));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::invalid("ridge must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnnMode {
    Subjects,
    Variables,
}

/// Analysis restricted to rows whose target is observed.
pub fn cc_analyze(data: &IncompleteMatrix, spec: &AnalysisSpec) -> Result<FitResult> {
    let rows: Vec<usize> = (0..data.nrows()).filter(|&i| data.mask()[i]).collect();
    analyze(&linalg::select_rows(data.values(), &rows), spec)
}

/// Relative residual norm below which a column counts as aliased.
pub const ALIAS_TOL: f64 = 1e-7;

/// Columns of `x` kept by a sequential least-squares fit with an intercept:
/// in column order, a column is dropped when its residual after projection
/// on the intercept and the columns kept so far has relative norm below
/// `tol`. With more columns than rows, only the first rank-many survive.
pub fn non_aliased_columns(x: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let n = x.nrows();
    let mut basis: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0 / (n as f64).sqrt())];
    let mut kept = Vec::new();
    for j in 0..x.ncols() {
        if basis.len() >= n {
            break;
        }
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut r = col;
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
        }
        let norm = r.norm();
        if norm / norm0 >= tol {
            basis.push(r / norm);
            kept.push(j);
        }
    }
    kept
}

/// Bayesian linear-regression MI on the raw candidate columns, with no
/// screening or reduction. Aliased columns are dropped the way a pivoting
/// least-squares fit drops them, so with `p > n1` the model is saturated.
pub fn mi_full(data: &IncompleteMatrix, m_count: usize, ridge: f64, rng: &RngStream) -> Result<MIEnsemble> {
    let tag = BaselineKind::MiFull.tag();
    if m_count < 2 {
        return Err(Error::TooFewImputations(m_count));
    }
    if data.n_missing() == 0 {
        return Ok(MIEnsemble::copies(data, m_count, tag, "no missing values in the target column; returning identical copies"));
    }
    let split = split_complete_cases(data)?;
    let kept = non_aliased_columns(&split.x_obs, ALIAS_TOL);
    let x_obs = linalg::select_columns(&split.x_obs, &kept);
    let x_mis = linalg::select_columns(&split.x_mis, &kept);
    let post = BayesLinearPosterior::fit_with(&split.y_obs, &x_obs, ridge, true)?;
    let draws = (0..m_count)
        .map(|m| post.draw(&x_mis, &mut rng.substream(1 + m as u64), m))
        .collect::<Result<Vec<_>>>()?;
    let columns: Vec<usize> = kept.iter().map(|&j| split.candidates[j]).collect();
    let mut diagnostics = Diagnostics {
        screened_names: columns.iter().map(|&c| data.column_names()[c].clone()).collect(),
        screened_columns: columns,
        d: kept.len(),
        ..Diagnostics::default()
    };
    if kept.len() < split.candidates.len() {
        diagnostics.warnings.push(format!(
            "{} of {} predictors aliased and dropped",
            split.candidates.len() - kept.len(),
            split.candidates.len()
        ));
    }
    if split.n_obs() <= post.q() {
        diagnostics.warnings.push(format!(
            "{} predictors for {} complete cases; posterior df floored at 1",
            post.q(),
            split.n_obs()
        ));
    }
    MIEnsemble::from_draws(data, &draws, tag, diagnostics)
}

fn inverse_distance_weights(dist: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = dist.iter().map(|d| 1.0 / (d + WEIGHT_EPS)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// Indices of the `k` smallest entries; ties go to the lower index.
fn k_smallest(dist: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Single nearest-neighbor imputation. Returns the values for the missing
/// rows, in row order.
pub fn knn_impute_values(data: &IncompleteMatrix, k: usize, mode: KnnMode) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("KNN requires k >= 1"));
    }
    if data.n_missing() == 0 {
        return Ok(Vec::new());
    }
    let split = split_complete_cases(data)?;
    match mode {
        KnnMode::Subjects => {
            if split.n_obs() < k {
                return Err(Error::TooFewCompleteCases { have: split.n_obs(), need: k });
            }
            let screen = sis_screen(&split, None)?;
            let cols = &screen.selected;
            let n1 = split.n_obs();
            let mut all = DMatrix::zeros(n1 + split.n_mis(), cols.len());
            all.rows_mut(0, n1).copy_from(&linalg::select_columns(&split.x_obs, cols));
            all.rows_mut(n1, split.n_mis())
                .copy_from(&linalg::select_columns(&split.x_mis, cols));
            let std = standardize_columns_with(&all, |j| format!("candidate #{}", split.candidates[cols[j]]))?.matrix;
            Ok((0..split.n_mis())
                .map(|r| {
                    let target = std.row(n1 + r);
                    let dist: Vec<f64> = (0..n1).map(|i| (std.row(i) - target).norm()).collect();
                    let nn = k_smallest(&dist, k);
                    let w = inverse_distance_weights(&nn.iter().map(|&i| dist[i]).collect::<Vec<_>>());
                    nn.iter().zip(&w).map(|(&i, wi)| wi * split.y_obs[i]).sum()
                })
                .collect())
        }
        KnnMode::Variables => {
            let n_cand = split.candidates.len();
            if n_cand < k {
                return Err(Error::invalid(format!("{n_cand} candidate columns for k = {k}")));
            }
            let screen = sis_screen(&split, Some(n_cand))?;
            let dist: Vec<f64> = screen.scores.iter().map(|r| 1.0 - r).collect();
            let nn = k_smallest(&dist, k);
            let w = inverse_distance_weights(&nn.iter().map(|&j| dist[j]).collect::<Vec<_>>());
            let y_mean = split.y_obs.mean();
            let centered_y = split.y_obs.add_scalar(-y_mean);
            let y_sd = (centered_y.norm_squared() / (split.n_obs() - 1) as f64).sqrt();
            let parts: Vec<(usize, f64, f64, f64)> = nn
                .iter()
                .zip(&w)
                .map(|(&j, &wj)| {
                    let col = split.x_obs.column(j);
                    let m = col.mean();
                    let sd = (col.add_scalar(-m).norm_squared() / (split.n_obs() - 1) as f64).sqrt();
                    let sign = if col.add_scalar(-m).dot(&centered_y) < 0.0 { -1.0 } else { 1.0 };
                    (j, m, sd, sign * wj)
                })
                .collect();
            Ok((0..split.n_mis())
                .map(|r| {
                    let z: f64 = parts
                        .iter()
                        .map(|&(j, m, sd, sw)| sw * (split.x_mis[(r, j)] - m) / sd)
                        .sum();
                    y_mean + y_sd * z
                })
                .collect())
        }
    }
}

pub fn knn_impute(data: &IncompleteMatrix, k: usize, mode: KnnMode) -> Result<DMatrix<f64>> {
    data.complete_with(&knn_impute_values(data, k, mode)?)
}

/// KNN result as `m_count` identical completed datasets.
pub fn knn_ensemble(data: &IncompleteMatrix, k: usize, mode: KnnMode, m_count: usize) -> Result<MIEnsemble> {
    let tag = match mode {
        KnnMode::Subjects => BaselineKind::KnnS.tag(),
        KnnMode::Variables => BaselineKind::KnnV.tag(),
    };
    if m_count < 1 {
        return Err(Error::TooFewImputations(m_count));
    }
    let completed = knn_impute(data, k, mode)?;
    Ok(MIEnsemble {
        datasets: vec![completed; m_count],
        column_names: data.column_names().to_vec(),
        target_index: data.target_index(),
        mis_rows: (0..data.nrows()).filter(|&i| !data.mask()[i]).collect(),
        method_tag: tag.to_string(),
        diagnostics: Diagnostics {
            warnings: vec!["single imputation: between-imputation variance is zero".into()],
            ..Diagnostics::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Family;

    fn incomplete(rows: &[&[f64]], mask: &[bool]) -> IncompleteMatrix {
        let n = rows.len();
        let p = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let mut values = DMatrix::from_row_slice(n, p, &flat);
        for (i, &obs) in mask.iter().enumerate() {
            if !obs {
                values[(i, 0)] = f64::NAN;
            }
        }
        let names = (0..p).map(|j| format!("c{j}")).collect();
        IncompleteMatrix::new(values, mask.to_vec(), names, 0).unwrap()
    }

    #[test]
    fn zero_distance_donor() {
        let rows: [&[f64]; 6] = [
            &[1.0, 0.1, 2.0],
            &[2.0, 1.3, 0.5],
            &[3.0, 2.2, 3.1],
            &[4.0, 2.9, 1.0],
            &[5.0, 4.4, 2.5],
            &[0.0, 1.3, 0.5],
        ];
        let data = incomplete(&rows, &[true, true, true, true, true, false]);
        let imp = knn_impute_values(&data, 1, KnnMode::Subjects).unwrap();
        assert_eq!(imp, vec![2.0]);
    }

    /// Exhaustive 4x3 instance: every distance written out, no shared helpers.
    #[test]
    fn four_by_three_brute_force() {
        let rows: [&[f64]; 4] = [&[1.0, 2.0, 0.0], &[3.0, 1.0, 4.0], &[2.0, 5.0, 3.0], &[0.0, 3.0, 1.0]];
        let data = incomplete(&rows, &[true, true, true, false]);

        // Subjects: screened set keeps both candidates (floor(3 / ln 3) = 2).
        let a = [2.0, 1.0, 5.0, 3.0];
        let b = [0.0, 4.0, 3.0, 1.0];
        let std = |v: [f64; 4]| {
            let m = v.iter().sum::<f64>() / 4.0;
            let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 3.0).sqrt();
            v.map(|x| (x - m) / s)
        };
        let (sa, sb) = (std(a), std(b));
        let d: Vec<f64> = (0..3)
            .map(|i| ((sa[i] - sa[3]).powi(2) + (sb[i] - sb[3]).powi(2)).sqrt())
            .collect();
        let mut order = vec![0usize, 1, 2];
        order.sort_by(|&x, &y| d[x].partial_cmp(&d[y]).unwrap());
        let (i, j) = (order[0], order[1]);
        let (wi, wj) = (1.0 / (d[i] + 1e-12), 1.0 / (d[j] + 1e-12));
        let y = [1.0, 3.0, 2.0];
        let oracle = (wi * y[i] + wj * y[j]) / (wi + wj);
        let imp = knn_impute_values(&data, 2, KnnMode::Subjects).unwrap();
        assert!((imp[0] - oracle).abs() < 1e-10, "{} vs {oracle}", imp[0]);

        // Variables over the three complete rows.
        let yc = [1.0, 3.0, 2.0];
        let ac = [2.0, 1.0, 5.0];
        let bc = [0.0, 4.0, 3.0];
        let mean3 = |v: &[f64; 3]| v.iter().sum::<f64>() / 3.0;
        let sd3 = |v: &[f64; 3]| {
            let m = mean3(v);
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 2.0).sqrt()
        };
        let corr = |u: &[f64; 3], v: &[f64; 3]| {
            let (mu, mv) = (mean3(u), mean3(v));
            let c: f64 = u.iter().zip(v).map(|(x, z)| (x - mu) * (z - mv)).sum::<f64>() / 2.0;
            c / (sd3(u) * sd3(v))
        };
        let (ra, rb) = (corr(&yc, &ac), corr(&yc, &bc));
        let (wa, wb) = (1.0 / (1.0 - ra.abs() + 1e-12), 1.0 / (1.0 - rb.abs() + 1e-12));
        let za = ra.signum() * (3.0 - mean3(&ac)) / sd3(&ac);
        let zb = rb.signum() * (1.0 - mean3(&bc)) / sd3(&bc);
        let oracle_v = mean3(&yc) + sd3(&yc) * (wa * za + wb * zb) / (wa + wb);
        let imp = knn_impute_values(&data, 2, KnnMode::Variables).unwrap();
        assert!((imp[0] - oracle_v).abs() < 1e-10, "{} vs {oracle_v}", imp[0]);
    }

    fn noisy(n: usize, seed: u64) -> IncompleteMatrix {
        let mut rng = RngStream::new(seed, 0);
        let x = DMatrix::from_fn(n, 5, |_, _| rng.std_normal());
        let mut values = DMatrix::zeros(n, 6);
        let mut mask = vec![true; n];
        for i in 0..n {
            values[(i, 0)] = x[(i, 0)] + 0.5 * x[(i, 1)] + rng.std_normal();
            for j in 0..5 {
                values[(i, j + 1)] = x[(i, j)];
            }
            if i % 4 == 0 {
                mask[i] = false;
                values[(i, 0)] = f64::NAN;
            }
        }
        let names = (0..6).map(|j| format!("v{j}")).collect();
        IncompleteMatrix::new(values, mask, names, 0).unwrap()
    }

    #[test]
    fn knn_preserves_observed_cells() {
        let data = noisy(40, 1);
        for mode in [KnnMode::Subjects, KnnMode::Variables] {
            let out = knn_impute(&data, 3, mode).unwrap();
            for i in 0..data.nrows() {
                for j in 0..data.ncols() {
                    if j != 0 || data.mask()[i] {
                        assert_eq!(out[(i, j)].to_bits(), data.values()[(i, j)].to_bits());
                    } else {
                        assert!(out[(i, j)].is_finite());
                    }
                }
            }
        }
    }

    #[test]
    fn knn_needs_enough_donors() {
        let data = noisy(12, 2);
        assert!(knn_impute(&data, 50, KnnMode::Subjects).is_err());
        assert!(knn_impute(&data, 6, KnnMode::Variables).is_err());
        assert!(knn_impute(&data, 0, KnnMode::Variables).is_err());
    }

    #[test]
    fn mi_full_draws_vary_and_keep_observed() {
        let data = noisy(60, 3);
        let ens = mi_full(&data, 5, DEFAULT_RIDGE, &RngStream::new(4, 0)).unwrap();
        assert_eq!(ens.m(), 5);
        let r = ens.mis_rows[0];
        assert_ne!(ens.datasets[0][(r, 0)], ens.datasets[1][(r, 0)]);
        for d in &ens.datasets {
            for i in (0..60).filter(|&i| data.mask()[i]) {
                assert_eq!(d[(i, 0)].to_bits(), data.values()[(i, 0)].to_bits());
            }
        }
    }

    #[test]
    fn cc_equals_gs_without_missingness() {
        let data = noisy(30, 5);
        let full = data.complete_with(&vec![0.5; data.n_missing()]).unwrap();
        let names: Vec<String> = (0..6).map(|j| format!("v{j}")).collect();
        let complete = IncompleteMatrix::new(full.clone(), vec![true; 30], names, 0).unwrap();
        let spec = AnalysisSpec {
            outcome: 0,
            predictors: vec![1, 2],
            family: Family::Linear,
        };
        assert_eq!(cc_analyze(&complete, &spec).unwrap(), analyze(&full, &spec).unwrap());
    }

    #[test]
    fn aliased_columns_dropped_in_order() {
        let mut rng = RngStream::new(3, 0);
        let base = DMatrix::from_fn(8, 3, |_, _| rng.std_normal());
        // col 3 = col 0 + col 1, col 4 constant (aliased with the intercept)
        let x = DMatrix::from_fn(8, 6, |i, j| match j {
            0..=2 => base[(i, j)],
            3 => base[(i, 0)] + base[(i, 1)],
            4 => 2.5,
            _ => base[(i, 2)] * 0.5 + 1.0 + if i == 0 { 1.0 } else { 0.0 },
        });
        assert_eq!(non_aliased_columns(&x, ALIAS_TOL), vec![0, 1, 2, 5]);

        let wide = DMatrix::from_fn(6, 20, |_, _| rng.std_normal());
        assert_eq!(non_aliased_columns(&wide, ALIAS_TOL), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn kind_parsing() {
        for k in BaselineKind::ALL {
            assert_eq!(k.tag().parse::<BaselineKind>().unwrap(), k);
            assert_eq!(k.label().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("nope".parse::<BaselineKind>().is_err());
    }
}
