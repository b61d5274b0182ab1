//! Sure independence screening on the complete cases.

use crate::data::{standardize_columns_with, CompleteCaseSplit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenResult {
    /// Positions into the split's candidate columns, strongest first.
    pub selected: Vec<usize>,
    /// |Pearson correlation| of every candidate with the observed target.
    pub scores: Vec<f64>,
}

impl ScreenResult {
    pub fn v(&self) -> usize {
        self.selected.len()
    }
}

/// Default screening size `floor(n / ln n)`, never below 1.
pub fn default_screen_size(n_obs: usize) -> usize {
    let n = n_obs as f64;
    ((n / n.ln()).floor() as usize).max(1)
}

/// Rank candidates by absolute marginal correlation with the observed target
/// and keep the top `min(cap, p - 1, floor(n1 / ln n1))`. Ties go to the lower
/// column position.
pub fn sis_screen(split: &CompleteCaseSplit, cap: Option<usize>) -> Result<ScreenResult> {
    let n1 = split.n_obs();
    if n1 <= 2 {
        return Err(Error::TooFewCompleteCases { have: n1, need: 3 });
    }
    let n_cand = split.x_obs.ncols();
    if n_cand == 0 {
        return Err(Error::InvalidData("no candidate columns to screen".into()));
    }
    let y = nalgebra::DMatrix::from_column_slice(n1, 1, split.y_obs.as_slice());
    let ys = standardize_columns_with(&y, |_| "target".into())?;
    let xs = standardize_columns_with(&split.x_obs, |j| format!("candidate #{}", split.candidates[j]))?;
    let denom = (n1 - 1) as f64;
    let yz = ys.matrix.column(0);
    let scores: Vec<f64> = xs
        .matrix
        .column_iter()
        .map(|c| (c.dot(&yz) / denom).abs().min(1.0))
        .collect();

    let mut order: Vec<usize> = (0..n_cand).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let v = default_screen_size(n1)
        .min(n_cand)
        .min(cap.unwrap_or(usize::MAX))
        .max(1);
    order.truncate(v);
    Ok(ScreenResult {
        selected: order,
        scores,
    })
}
