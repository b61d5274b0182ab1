//! Small dense helpers on top of nalgebra shared by the fitting modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Sample standard deviations with denominator n - 1.
pub fn column_sds(x: &DMatrix<f64>, means: &DVector<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(
        x.ncols(),
        x.column_iter().zip(means.iter()).map(|(c, m)| {
            let ss: f64 = c.iter().map(|v| (v - m).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        }),
    )
}

pub fn center_columns(x: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (mut col, m) in out.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-m);
    }
    out
}

/// Sample covariance (denominator n - 1).
pub fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    let xc = center_columns(x, &means);
    xc.tr_mul(&xc) / (x.nrows() as f64 - 1.0)
}

/// Symmetric eigendecomposition sorted by `key(eigenvalue)` descending.
/// Returns eigenvalues and eigenvectors as columns in the same order.
pub fn sym_eigen_sorted_by(
    m: &DMatrix<f64>,
    key: impl Fn(f64) -> f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let k = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        key(eig.eigenvalues[b])
            .partial_cmp(&key(eig.eigenvalues[a]))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(k, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(m.nrows(), k);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    sym_eigen_sorted_by(m, |v| v)
}

/// Inverse symmetric square root of an SPD matrix. Returns `None` when the
/// smallest eigenvalue is not safely positive relative to the largest.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen_desc(m);
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= max * 1e-12 {
        return None;
    }
    let d = DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt()));
    Some(&vecs * d * vecs.transpose())
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Prepend a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}

pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Angle in degrees between vector `a` and the line spanned by `b`.
pub fn angle_to_span_deg(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let c = (a.dot(b) / (a.norm() * b.norm())).abs().min(1.0);
    c.acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = inv_sqrt_spd(&m).unwrap();
        let prod = &s * &m * &s;
        assert!((prod - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let (vals, vecs) = sym_eigen_desc(&m);
        assert_eq!(vals.as_slice(), &[3.0, 2.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }
}
