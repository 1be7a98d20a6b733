//! Dense row-major storage for data points and centroids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n x m` matrix of finite `f64` feature vectors, one point per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::InvalidParameter("feature dimension must be >= 1".into()));
        }
        if rows * cols != values.len() {
            return Err(Error::ShapeMismatch { rows, cols, len: values.len() });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / cols, col: pos % cols });
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds a matrix from nested rows; all rows must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        Self::from_rows_with_dim(rows, cols)
    }

    /// Like [`DataMatrix::from_rows`] but with an explicit dimension, so that
    /// zero-row matrices keep a meaningful width.
    pub fn from_rows_with_dim<R: AsRef<[f64]>>(rows: &[R], cols: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: r.len() });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn empty(cols: usize) -> Result<Self> {
        Self::new(0, cols, Vec::new())
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.cols)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Copies the given rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> DataMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        DataMatrix { rows: indices.len(), cols: self.cols, values }
    }

    /// Stacks matrices of equal width vertically.
    pub fn concat<'a, I>(parts: I) -> Result<DataMatrix>
    where
        I: IntoIterator<Item = &'a DataMatrix>,
    {
        let mut iter = parts.into_iter().peekable();
        let cols = iter.peek().map(|m| m.cols).ok_or(Error::Empty("no matrices to concatenate"))?;
        let mut rows = 0;
        let mut values = Vec::new();
        for m in iter {
            if m.cols != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: m.cols });
            }
            rows += m.rows;
            values.extend_from_slice(&m.values);
        }
        Ok(DataMatrix { rows, cols, values })
    }
}

/// `k` cluster centers of dimension `m`, stored one centroid per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSet {
    k: usize,
    dim: usize,
    values: Vec<f64>,
}

impl CentroidSet {
    pub fn new(k: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        let m = DataMatrix::new(k, dim, values)?;
        Ok(Self { k, dim, values: m.values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = DataMatrix::from_rows(rows)?;
        Self::new(m.rows, m.cols, m.values)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub(crate) fn centroid_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn centroids(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.centroids().map(<[f64]>::to_vec).collect()
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &CentroidSet) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: dim });
        }
        Ok(())
    }

    pub(crate) fn check_shape(&self, other: &CentroidSet) -> Result<()> {
        if self.k != other.k {
            return Err(Error::LengthMismatch { left: self.k, right: other.k });
        }
        self.check_dim(other.dim)
    }
}

impl From<CentroidSet> for DataMatrix {
    fn from(c: CentroidSet) -> Self {
        DataMatrix { rows: c.k, cols: c.dim, values: c.values }
    }
}

impl TryFrom<DataMatrix> for CentroidSet {
    type Error = Error;

    fn try_from(m: DataMatrix) -> Result<Self> {
        CentroidSet::new(m.rows, m.cols, m.values)
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
