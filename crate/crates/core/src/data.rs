//! The sample matrix consumed by every estimator.

use std::collections::HashSet;

use ndarray::{s, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// An `n × d` matrix of i.i.d. samples with one name per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Array2<f64>,
    column_names: Vec<String>,
}

impl Dataset {
    /// Validates shape, name uniqueness and finiteness.
    pub fn new(values: Array2<f64>, column_names: Vec<String>) -> Result<Self> {
        let (n, d) = values.dim();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 rows, got {n}")));
        }
        if d < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 columns, got {d}"
            )));
        }
        if column_names.len() != d {
            return Err(Error::InvalidData(format!(
                "{} column names for {d} columns",
                column_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate column name {name:?}"
                )));
            }
        }
        for ((row, column), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { column, row });
            }
        }
        Ok(Dataset {
            values,
            column_names,
        })
    }

    /// Builds a dataset with default names `X1..Xd`.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let names = default_names(values.ncols());
        Self::new(values, names)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    /// Column `j` copied into a contiguous vector.
    pub fn column_vec(&self, j: usize) -> Vec<f64> {
        self.values.column(j).to_vec()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Interprets column `j` as integer category codes.
    pub fn codes(&self, j: usize) -> Result<Vec<i64>> {
        self.column(j)
            .iter()
            .enumerate()
            .map(|(row, &v)| {
                if v.fract() == 0.0 && v.abs() < 9.0e15 {
                    Ok(v as i64)
                } else {
                    Err(Error::InvalidData(format!(
                        "column {:?} row {row}: {v} is not an integer code",
                        self.column_names[j]
                    )))
                }
            })
            .collect()
    }

    /// Splits off the first `n_first` rows; the remainder forms the second dataset.
    pub fn split_rows(&self, n_first: usize) -> Result<(Dataset, Dataset)> {
        let first = self.values.slice(s![..n_first, ..]).to_owned();
        let second = self.values.slice(s![n_first.., ..]).to_owned();
        Ok((
            Dataset::new(first, self.column_names.clone())?,
            Dataset::new(second, self.column_names.clone())?,
        ))
    }

    /// Row-wise concatenation of datasets sharing column names.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidData("nothing to concatenate".into()))?;
        if parts.iter().any(|p| p.column_names != first.column_names) {
            return Err(Error::InvalidData("column names differ".into()));
        }
        let views: Vec<_> = parts.iter().map(|p| p.values.view()).collect();
        let values =
            ndarray::concatenate(Axis(0), &views).map_err(|e| Error::InvalidData(e.to_string()))?;
        Dataset::new(values, first.column_names.clone())
    }
}

/// `X1, X2, ..., Xd`.
pub fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("X{k}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(Dataset::from_values(array![[1.0, 2.0]]).is_err());
        assert!(Dataset::from_values(array![[1.0], [2.0]]).is_err());
        let err = Dataset::from_values(array![[1.0, 2.0], [f64::NAN, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { column: 0, row: 1 }));
        let dup = Dataset::new(array![[1.0, 2.0], [3.0, 4.0]], vec!["a".into(), "a".into()]);
        assert!(dup.is_err());
    }

    #[test]
    fn codes_require_integers() {
        let ds = Dataset::from_values(array![[1.0, 0.5], [2.0, 1.0]]).unwrap();
        assert_eq!(ds.codes(0).unwrap(), vec![1, 2]);
        assert!(ds.codes(1).is_err());
    }

    #[test]
    fn split_and_concat() {
        let ds =
            Dataset::from_values(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]]).unwrap();
        let (a, b) = ds.split_rows(2).unwrap();
        assert_eq!(a.n(), 2);
        assert_eq!(b.column_vec(1), vec![6.0, 8.0]);
        assert_eq!(Dataset::concat(&[&a, &b]).unwrap(), ds);
    }
}
