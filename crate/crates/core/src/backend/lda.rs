use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::{mean_of, ridge, scatter, sorted_eigen, symmetrize, MatrixData};
use super::BackendError;
use crate::trial_data::EmbeddingTable;

/// Linear projection onto the leading discriminant directions.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaProjection {
    /// `k x d`; row `i` is the i-th discriminant direction.
    pub basis: DMatrix<f64>,
    /// Generalized eigenvalues of the kept directions, descending.
    pub eigenvalues: Vec<f64>,
}

/// Within- and between-class scatter (both divided by the row count) of a
/// labeled table.
pub(crate) fn class_scatter(table: &EmbeddingTable) -> Result<(DMatrix<f64>, DMatrix<f64>, usize), BackendError> {
    let groups = table.speaker_groups().ok_or(BackendError::MissingLabels)?;
    let d = table.dim();
    let n = table.len() as f64;
    let all: Vec<&[f64]> = table.rows().iter().map(|r| r.vector.as_slice()).collect();
    let mean = mean_of(&all, d);
    let mut within = DMatrix::zeros(d, d);
    let mut between = DMatrix::zeros(d, d);
    for (_, idx) in &groups {
        let rows: Vec<&[f64]> = idx.iter().map(|&i| all[i]).collect();
        let m = mean_of(&rows, d);
        within += scatter(&rows, &m);
        let diff = &m - &mean;
        between.ger(rows.len() as f64, &diff, &diff, 1.0);
    }
    Ok((within / n, between / n, groups.len()))
}

/// Fits LDA by solving `S_b v = lambda S_w v` through a Cholesky
/// transform of the (ridged) within-class scatter. Basis rows satisfy
/// `v^T S_w v = 1`; each row's largest-magnitude entry is made positive.
pub fn fit_lda(table: &EmbeddingTable, out_dim: usize) -> Result<LdaProjection, BackendError> {
    let (mut within, between, n_classes) = class_scatter(table)?;
    let d = table.dim();
    if n_classes < 2 {
        return Err(BackendError::Precondition("LDA needs at least 2 speakers".into()));
    }
    let max_dim = d.min(n_classes - 1);
    if out_dim == 0 || out_dim > max_dim {
        return Err(BackendError::Precondition(format!(
            "LDA output dimension {out_dim} must lie in 1..={max_dim} (d = {d}, {n_classes} speakers)"
        )));
    }
    let r = ridge(&within);
    if !(r > 0.0) {
        return Err(BackendError::Singular("within-class scatter is zero".into()));
    }
    for i in 0..d {
        within[(i, i)] += r;
    }
    let chol = within
        .cholesky()
        .ok_or_else(|| BackendError::Singular("within-class scatter not positive definite after ridge".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| BackendError::Singular("within-class Cholesky factor".into()))?;
    let mut m = &l_inv * &between * l_inv.transpose();
    symmetrize(&mut m);
    let (values, vectors) = sorted_eigen(&m);
    let lt_inv = l_inv.transpose();
    let mut basis = DMatrix::zeros(out_dim, d);
    for k in 0..out_dim {
        let mut v: DVector<f64> = &lt_inv * vectors.column(k);
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
        basis.row_mut(k).copy_from(&v.transpose());
    }
    Ok(LdaProjection {
        basis,
        eigenvalues: values[..out_dim].to_vec(),
    })
}

impl LdaProjection {
    pub fn in_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, BackendError> {
        if x.len() != self.in_dim() {
            return Err(BackendError::DimensionMismatch {
                expected: self.in_dim(),
                got: x.len(),
            });
        }
        Ok((&self.basis * DVector::from_column_slice(x)).iter().copied().collect())
    }

    pub fn apply_table(&self, table: &EmbeddingTable) -> Result<EmbeddingTable, BackendError> {
        if table.dim() != self.in_dim() {
            return Err(BackendError::DimensionMismatch {
                expected: self.in_dim(),
                got: table.dim(),
            });
        }
        Ok(table.map_vectors(|x| self.apply(x).expect("dimension checked"))?)
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct LdaData {
    basis: MatrixData,
    eigenvalues: Vec<f64>,
}

impl From<&LdaProjection> for LdaData {
    fn from(l: &LdaProjection) -> Self {
        LdaData {
            basis: (&l.basis).into(),
            eigenvalues: l.eigenvalues.clone(),
        }
    }
}

impl TryFrom<&LdaData> for LdaProjection {
    type Error = BackendError;

    fn try_from(l: &LdaData) -> Result<Self, BackendError> {
        Ok(LdaProjection {
            basis: DMatrix::try_from(&l.basis)?,
            eigenvalues: l.eigenvalues.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial_data::EmbeddingRow;

    fn labeled(rows: &[(&str, Vec<f64>)]) -> EmbeddingTable {
        EmbeddingTable::new(
            rows[0].1.len(),
            rows.iter()
                .enumerate()
                .map(|(i, (s, v))| EmbeddingRow {
                    segment_id: format!("seg{i}"),
                    speaker: Some(s.to_string()),
                    vector: v.clone(),
                })
                .collect(),
        )
        .unwrap()
    }

    /// Two classes whose members sit at mean +- unit offsets along both
    /// axes, so the within-class scatter is isotropic and the discriminant
    /// direction is the mean difference itself.
    #[test]
    fn direction_follows_mean_difference() {
        let u = [0.6f64, 0.8];
        let mut rows = Vec::new();
        for (spk, sign) in [("a", 1.0), ("b", -1.0)] {
            let m = [sign * 3.0 * u[0], sign * 3.0 * u[1]];
            for off in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]] {
                rows.push((spk, vec![m[0] + off[0], m[1] + off[1]]));
            }
        }
        let lda = fit_lda(&labeled(&rows), 1).unwrap();
        let v = lda.basis.row(0);
        let cos = (v[0] * u[0] + v[1] * u[1]) / v.norm();
        let angle = cos.clamp(-1.0, 1.0).acos();
        assert!(angle < 1e-6, "angle {angle}");
    }

    #[test]
    fn out_dim_limited_by_classes() {
        let rows = vec![("a", vec![0.0, 1.0]), ("a", vec![1.0, 0.0]), ("b", vec![3.0, 3.0]), ("b", vec![4.0, 2.0])];
        let err = fit_lda(&labeled(&rows), 2).unwrap_err();
        assert!(matches!(err, BackendError::Precondition(_)));
    }

    #[test]
    fn unlabeled_rows_rejected() {
        let t = EmbeddingTable::new(
            1,
            vec![EmbeddingRow {
                segment_id: "x".into(),
                speaker: None,
                vector: vec![1.0],
            }],
        )
        .unwrap();
        assert!(matches!(fit_lda(&t, 1), Err(BackendError::MissingLabels)));
    }

    #[test]
    fn basis_is_within_orthonormal() {
        let mut rows = Vec::new();
        let centers = [[0.0, 0.0, 0.0], [5.0, 1.0, 0.0], [0.0, 4.0, 2.0], [1.0, 1.0, 6.0]];
        let offs = [[1.0, 0.2, 0.0], [-1.0, -0.2, 0.0], [0.0, 0.5, 0.3], [0.0, -0.5, -0.3], [0.1, 0.0, 1.0], [-0.1, 0.0, -1.0]];
        let names = ["a", "b", "c", "d"];
        for (c, name) in centers.iter().zip(names) {
            for o in &offs {
                rows.push((name, vec![c[0] + o[0], c[1] + o[1], c[2] + o[2]]));
            }
        }
        let t = labeled(&rows);
        let lda = fit_lda(&t, 3).unwrap();
        let (mut sw, _, _) = class_scatter(&t).unwrap();
        let r = ridge(&sw);
        for i in 0..3 {
            sw[(i, i)] += r;
        }
        let g = &lda.basis * sw * lda.basis.transpose();
        assert!((g - DMatrix::identity(3, 3)).abs().max() < 1e-9);
        assert!(lda.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }
}
