use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::{mean_of, ridge, scatter, sorted_eigen, MatrixData};
use super::BackendError;
use crate::trial_data::EmbeddingTable;

/// Centering plus symmetric inverse-square-root whitening.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitener {
    pub mean: DVector<f64>,
    pub transform: DMatrix<f64>,
}

/// Estimates the mean and the inverse square root of the sample covariance
/// (divided by n). The ridge `1e-6 * trace / d` is added only when the
/// covariance is numerically singular; a zero covariance is an error.
pub fn fit_whitener(table: &EmbeddingTable) -> Result<Whitener, BackendError> {
    let d = table.dim();
    let n = table.len();
    if n < d + 1 {
        return Err(BackendError::TooFewRows { needed: d + 1, got: n });
    }
    let rows: Vec<&[f64]> = table.rows().iter().map(|r| r.vector.as_slice()).collect();
    let mean = mean_of(&rows, d);
    let cov = scatter(&rows, &mean) / n as f64;
    let scale = cov.trace() / d as f64;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(BackendError::Singular("whitening covariance is zero".into()));
    }
    let (mut values, vectors) = sorted_eigen(&cov);
    if values[d - 1] <= 1e-10 * scale {
        let r = ridge(&cov);
        values.iter_mut().for_each(|v| *v += r);
    }
    if values[d - 1] <= 0.0 {
        return Err(BackendError::Singular("whitening covariance is singular after ridge".into()));
    }
    let inv_sqrt = DVector::from_iterator(d, values.iter().map(|v| 1.0 / v.sqrt()));
    let transform = &vectors * DMatrix::from_diagonal(&inv_sqrt) * vectors.transpose();
    Ok(Whitener { mean, transform })
}

impl Whitener {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, BackendError> {
        if x.len() != self.dim() {
            return Err(BackendError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let v = &self.transform * (DVector::from_column_slice(x) - &self.mean);
        Ok(v.iter().copied().collect())
    }

    pub fn apply_table(&self, table: &EmbeddingTable) -> Result<EmbeddingTable, BackendError> {
        if table.dim() != self.dim() {
            return Err(BackendError::DimensionMismatch {
                expected: self.dim(),
                got: table.dim(),
            });
        }
        Ok(table.map_vectors(|x| self.apply(x).expect("dimension checked"))?)
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct WhitenerData {
    mean: Vec<f64>,
    transform: MatrixData,
}

impl From<&Whitener> for WhitenerData {
    fn from(w: &Whitener) -> Self {
        WhitenerData {
            mean: w.mean.iter().copied().collect(),
            transform: (&w.transform).into(),
        }
    }
}

impl TryFrom<&WhitenerData> for Whitener {
    type Error = BackendError;

    fn try_from(w: &WhitenerData) -> Result<Self, BackendError> {
        let transform = DMatrix::try_from(&w.transform)?;
        if transform.nrows() != w.mean.len() || transform.ncols() != w.mean.len() {
            return Err(BackendError::Model("whitener shape mismatch".into()));
        }
        Ok(Whitener {
            mean: DVector::from_vec(w.mean.clone()),
            transform,
        })
    }
}

/// Scales `v` to unit Euclidean norm.
pub fn length_norm(v: &[f64]) -> Result<Vec<f64>, BackendError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(BackendError::ZeroVector);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}
