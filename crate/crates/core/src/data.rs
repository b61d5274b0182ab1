//! Incomplete datasets with a single target column, complete-case splitting,
//! standardization and CSV I/O.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_NA_TOKENS: [&str; 3] = ["NA", "", "NaN"];

/// An `n x p` data matrix in which only the target column may have missing
/// entries. Missing target cells are stored as NaN; `mask[i]` is true when
/// row `i` has an observed target.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteMatrix {
    values: DMatrix<f64>,
    mask: Vec<bool>,
    column_names: Vec<String>,
    target_index: usize,
}

impl IncompleteMatrix {
    pub fn new(
        mut values: DMatrix<f64>,
        mask: Vec<bool>,
        column_names: Vec<String>,
        target_index: usize,
    ) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 3 || p < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 3 rows and 2 columns, got {n}x{p}"
            )));
        }
        if mask.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "mask has length {} for {n} rows",
                mask.len()
            )));
        }
        if column_names.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "{} column names for {p} columns",
                column_names.len()
            )));
        }
        if target_index >= p {
            return Err(Error::invalid(format!(
                "target index {target_index} out of range for {p} columns"
            )));
        }
        let observed = mask.iter().filter(|&&m| m).count();
        if observed < 2 {
            return Err(Error::InvalidData(format!(
                "target column '{}' has {observed} observed values; at least 2 required",
                column_names[target_index]
            )));
        }
        for i in 0..n {
            for j in 0..p {
                let v = values[(i, j)];
                if j == target_index && !mask[i] {
                    continue;
                }
                if !v.is_finite() {
                    return Err(if j == target_index {
                        Error::InvalidData(format!(
                            "row {i}: observed target value is not finite"
                        ))
                    } else {
                        Error::MissingOutsideTarget {
                            row: i,
                            column: column_names[j].clone(),
                        }
                    });
                }
            }
            if !mask[i] {
                values[(i, target_index)] = f64::NAN;
            }
        }
        Ok(Self {
            values,
            mask,
            column_names,
            target_index,
        })
    }

    /// Copy without the listed non-target columns.
    pub fn without_columns(&self, drop: &[usize]) -> Result<Self> {
        if drop.contains(&self.target_index) {
            return Err(Error::invalid("cannot drop the target column"));
        }
        let keep: Vec<usize> = (0..self.ncols()).filter(|j| !drop.contains(j)).collect();
        let target_index = keep.iter().position(|&j| j == self.target_index).expect("target kept");
        Self::new(
            linalg::select_columns(&self.values, &keep),
            self.mask.clone(),
            keep.iter().map(|&j| self.column_names[j].clone()).collect(),
            target_index,
        )
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn target_name(&self) -> &str {
        &self.column_names[self.target_index]
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_missing(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    /// Indices of all non-target columns, in order.
    pub fn candidate_columns(&self) -> Vec<usize> {
        (0..self.ncols()).filter(|&j| j != self.target_index).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Copy of the values with the missing target cells replaced by `fill`.
    pub fn complete_with(&self, fill: &[f64]) -> Result<DMatrix<f64>> {
        let mis: Vec<usize> = (0..self.nrows()).filter(|&i| !self.mask[i]).collect();
        if fill.len() != mis.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} fill values for {} missing cells",
                fill.len(),
                mis.len()
            )));
        }
        let mut out = self.values.clone();
        for (&row, &v) in mis.iter().zip(fill) {
            out[(row, self.target_index)] = v;
        }
        Ok(out)
    }
}

/// Partition of the rows into complete cases and incomplete cases.
/// `x_obs`/`x_mis` hold the non-target columns listed in `candidates`.
#[derive(Debug, Clone)]
pub struct CompleteCaseSplit {
    pub obs_rows: Vec<usize>,
    pub mis_rows: Vec<usize>,
    pub y_obs: DVector<f64>,
    pub x_obs: DMatrix<f64>,
    pub x_mis: DMatrix<f64>,
    pub candidates: Vec<usize>,
}

impl CompleteCaseSplit {
    pub fn n_obs(&self) -> usize {
        self.obs_rows.len()
    }

    pub fn n_mis(&self) -> usize {
        self.mis_rows.len()
    }
}

pub fn split_complete_cases(data: &IncompleteMatrix) -> Result<CompleteCaseSplit> {
    let (obs_rows, mis_rows): (Vec<usize>, Vec<usize>) =
        (0..data.nrows()).partition(|&i| data.mask[i]);
    if obs_rows.len() < 3 {
        return Err(Error::TooFewCompleteCases {
            have: obs_rows.len(),
            need: 3,
        });
    }
    let candidates = data.candidate_columns();
    let x = linalg::select_columns(&data.values, &candidates);
    let y_obs = DVector::from_iterator(
        obs_rows.len(),
        obs_rows.iter().map(|&i| data.values[(i, data.target_index)]),
    );
    Ok(CompleteCaseSplit {
        x_obs: linalg::select_rows(&x, &obs_rows),
        x_mis: linalg::select_rows(&x, &mis_rows),
        y_obs,
        obs_rows,
        mis_rows,
        candidates,
    })
}

#[derive(Debug, Clone)]
pub struct Standardized {
    pub matrix: DMatrix<f64>,
    pub means: DVector<f64>,
    pub sds: DVector<f64>,
}

/// Center each column and scale it to unit sample sd (denominator n - 1).
pub fn standardize_columns(x: &DMatrix<f64>) -> Result<Standardized> {
    standardize_columns_with(x, |j| format!("#{j}"))
}

pub(crate) fn standardize_columns_with(
    x: &DMatrix<f64>,
    name: impl Fn(usize) -> String,
) -> Result<Standardized> {
    if x.nrows() < 2 {
        return Err(Error::InvalidData("need at least 2 rows to standardize".into()));
    }
    let means = linalg::column_means(x);
    let sds = linalg::column_sds(x, &means);
    for (j, (&s, &m)) in sds.iter().zip(means.iter()).enumerate() {
        if !(s > 1e-12 * m.abs().max(1.0)) {
            return Err(Error::ConstantColumn(name(j)));
        }
    }
    let mut matrix = linalg::center_columns(x, &means);
    for (mut col, s) in matrix.column_iter_mut().zip(sds.iter()) {
        col /= *s;
    }
    Ok(Standardized { matrix, means, sds })
}

pub fn load_csv(path: impl AsRef<Path>, target: &str, na_tokens: &[&str]) -> Result<IncompleteMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, target, na_tokens)
}

pub fn read_csv<R: Read>(reader: R, target: &str, na_tokens: &[&str]) -> Result<IncompleteMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let target_index = names
        .iter()
        .position(|c| c == target)
        .ok_or_else(|| Error::UnknownColumn(target.to_string()))?;
    let p = names.len();
    let mut data = Vec::new();
    let mut mask = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != p {
            return Err(Error::InvalidData(format!(
                "row {row} has {} fields, header has {p}",
                record.len()
            )));
        }
        for (j, field) in record.iter().enumerate() {
            let field = field.trim();
            if na_tokens.contains(&field) {
                if j != target_index {
                    return Err(Error::MissingOutsideTarget {
                        row,
                        column: names[j].clone(),
                    });
                }
                mask.push(false);
                data.push(f64::NAN);
                continue;
            }
            let v: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::Parse {
                    row,
                    column: names[j].clone(),
                    value: field.to_string(),
                }
            })?;
            if j == target_index {
                mask.push(true);
            }
            data.push(v);
        }
    }
    let n = mask.len();
    if n > 0 && mask.iter().all(|&m| !m) {
        return Err(Error::InvalidData(format!("target column '{target}' is entirely missing")));
    }
    let values = DMatrix::from_row_slice(n, p, &data);
    IncompleteMatrix::new(values, mask, names, target_index)
}

/// Write the dataset back out, with missing target cells as `NA`.
pub fn emit_csv(data: &IncompleteMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(data, file)
}

pub fn write_csv<W: Write>(data: &IncompleteMatrix, writer: W) -> Result<()> {
    write_matrix(&data.values, &data.column_names, writer)
}

/// Write a named matrix; non-finite cells are written as `NA`. Numbers use the
/// shortest representation that round-trips exactly.
pub fn write_matrix<W: Write>(values: &DMatrix<f64>, names: &[String], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(names)?;
    let mut buf = Vec::with_capacity(values.ncols());
    for row in values.row_iter() {
        buf.clear();
        buf.extend(row.iter().map(|v| {
            if v.is_finite() {
                format!("{v}")
            } else {
                "NA".to_string()
            }
        }));
        wtr.write_record(&buf)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn write_matrix_file(values: &DMatrix<f64>, names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_matrix(values, names, file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str, target: &str) -> Result<IncompleteMatrix> {
        read_csv(s.as_bytes(), target, &DEFAULT_NA_TOKENS)
    }

    #[test]
    fn mask_from_na_tokens() {
        let d = parse("y1,x\n1.0,3\nNA,4\n2.0,5\n", "y1").unwrap();
        assert_eq!(d.mask(), &[true, false, true]);
        assert_eq!(d.n_missing(), 1);
        assert!(d.values()[(1, 0)].is_nan());
    }

    #[test]
    fn complete_csv_has_full_mask() {
        let d = parse("a,b\n1,2\n3,4\n5,7\n", "b").unwrap();
        assert!(d.mask().iter().all(|&m| m));
        assert_eq!(d.n_missing(), 0);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(parse("a,b\n1,x\n3,4\n5,6\n", "a"), Err(Error::Parse { .. })));
        assert!(matches!(
            parse("a,b\n1,NA\n3,4\n5,6\n", "a"),
            Err(Error::MissingOutsideTarget { .. })
        ));
        assert!(matches!(parse("a,b\nNA,1\nNA,4\nNA,6\n", "a"), Err(Error::InvalidData(_))));
        assert!(matches!(parse("a,b\n1,1\n2,4\n3,6\n", "z"), Err(Error::UnknownColumn(_))));
        assert!(matches!(
            load_csv("/nonexistent/file.csv", "a", &DEFAULT_NA_TOKENS),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn custom_na_tokens() {
        let d = read_csv("a,b\n1,.\n3,4\n5,6\n".as_bytes(), "b", &["."]).unwrap();
        assert_eq!(d.mask(), &[false, true, true]);
    }

    #[test]
    fn split_partition() {
        let d = parse("y,x\n1,1\nNA,2\n3,3\n4,5\n", "y").unwrap();
        let s = split_complete_cases(&d).unwrap();
        assert_eq!(s.obs_rows, vec![0, 2, 3]);
        assert_eq!(s.mis_rows, vec![1]);
        assert_eq!(s.y_obs.as_slice(), &[1.0, 3.0, 4.0]);
        assert_eq!(s.x_mis[(0, 0)], 2.0);
        assert_eq!(s.x_obs.ncols(), 1);
    }

    #[test]
    fn split_all_observed() {
        let d = parse("y,x\n1,1\n2,2\n3,3\n", "y").unwrap();
        let s = split_complete_cases(&d).unwrap();
        assert!(s.mis_rows.is_empty());
        assert_eq!(s.x_mis.nrows(), 0);
    }

    #[test]
    fn split_needs_three_complete_cases() {
        let d = parse("y,x\n1,1\nNA,2\n3,3\nNA,4\n", "y").unwrap();
        assert!(matches!(
            split_complete_cases(&d),
            Err(Error::TooFewCompleteCases { have: 2, .. })
        ));
    }

    #[test]
    fn standardize_simple() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let s = standardize_columns(&x).unwrap();
        assert_eq!(s.matrix.as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(s.means[0], 2.0);
        assert_eq!(s.sds[0], 1.0);
        let again = standardize_columns(&s.matrix).unwrap();
        assert!((again.matrix - &s.matrix).abs().max() < 1e-12);
    }

    #[test]
    fn standardize_moments_random() {
        let mut rng = crate::stochastic::RngStream::new(4, 0);
        let x = DMatrix::from_fn(100, 5, |_, j| 3.0 * j as f64 + (j + 1) as f64 * rng.std_normal());
        let s = standardize_columns(&x).unwrap();
        let m = linalg::column_means(&s.matrix);
        let sd = linalg::column_sds(&s.matrix, &m);
        assert!(m.iter().all(|v| v.abs() < 1e-10));
        assert!(sd.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn standardize_rejects_constant() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let err = standardize_columns(&x).unwrap_err();
        assert!(matches!(err, Error::ConstantColumn(ref c) if c == "#1"));
    }

    #[test]
    fn dropping_columns_keeps_target() {
        let data = parse("a,y,b\n1,NA,4\n2,5,6\n3,7,9\n", "y").unwrap();
        let sub = data.without_columns(&[0]).unwrap();
        assert_eq!(sub.column_names(), ["y".to_string(), "b".to_string()]);
        assert_eq!(sub.target_index(), 0);
        assert_eq!(sub.mask(), data.mask());
        assert!(data.without_columns(&[1]).is_err());
    }
}
