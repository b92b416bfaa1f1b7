use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major set of points sharing one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            if !coords.is_empty() {
                return Err(Error::InvalidInput(
                    "zero-dimensional point set with coordinates".into(),
                ));
            }
        } else if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: coords.len() % dim,
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        Ok(Self { dim, coords })
    }

    /// A set with no columns, used when there are no unstructured features.
    pub fn empty() -> Self {
        Self {
            dim: 0,
            coords: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            coords.extend_from_slice(r);
        }
        Self::new(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of points. Zero-dimensional sets report zero rows; callers
    /// that pair them with other data use the partner's row count.
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        if self.dim == 0 {
            return &[];
        }
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            coords,
        }
    }

    /// Column `j` as an owned vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Append the columns of `other` (same row count) to every row.
    pub fn hstack(&self, other: &PointSet, n: usize) -> Self {
        let dim = self.dim + other.dim;
        let mut coords = Vec::with_capacity(n * dim);
        for i in 0..n {
            coords.extend_from_slice(self.row(i));
            coords.extend_from_slice(other.row(i));
        }
        Self { dim, coords }
    }
}

/// Structured features, unstructured features and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub structured: PointSet,
    pub unstructured: PointSet,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(structured: PointSet, unstructured: PointSet, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if structured.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: structured.len(),
            });
        }
        if unstructured.dim() > 0 && unstructured.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: unstructured.len(),
            });
        }
        if structured.dim() == 0 {
            return Err(Error::InvalidInput(
                "at least one structured feature is required".into(),
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite response".into()));
        }
        Ok(Self {
            structured,
            unstructured,
            y,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn d_structured(&self) -> usize {
        self.structured.dim()
    }

    pub fn n_unstructured(&self) -> usize {
        self.unstructured.dim()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            structured: self.structured.select(idx),
            unstructured: self.unstructured.select(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with the n - 1 denominator.
pub(crate) fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}
