use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::BackendError;

/// Row-major matrix as stored in model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixData {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        MatrixData {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl TryFrom<&MatrixData> for DMatrix<f64> {
    type Error = BackendError;

    fn try_from(m: &MatrixData) -> Result<Self, BackendError> {
        if m.rows * m.cols != m.data.len() {
            return Err(BackendError::Model(format!(
                "matrix {}x{} has {} entries",
                m.rows,
                m.cols,
                m.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(m.rows, m.cols, &m.data))
    }
}

pub(crate) fn mean_of(rows: &[&[f64]], dim: usize) -> DVector<f64> {
    let mut m = DVector::zeros(dim);
    for r in rows {
        m += DVector::from_column_slice(r);
    }
    m / rows.len() as f64
}

/// Scatter matrix `sum (x - mean)(x - mean)^T`.
pub(crate) fn scatter(rows: &[&[f64]], mean: &DVector<f64>) -> DMatrix<f64> {
    let d = mean.len();
    let mut s = DMatrix::zeros(d, d);
    for r in rows {
        let x = DVector::from_column_slice(r) - mean;
        s.ger(1.0, &x, &x, 1.0);
    }
    s
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Eigen decomposition with eigenvalues sorted in descending order.
pub(crate) fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (values, vectors)
}

/// Ridge value `1e-6 * trace / d` used on covariance estimates.
pub(crate) fn ridge(m: &DMatrix<f64>) -> f64 {
    1e-6 * m.trace() / m.nrows() as f64
}

pub(crate) fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    Some(2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}
