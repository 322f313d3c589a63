//! Embedding scoring chain.
//!
//! Embeddings are centered and whitened, length-normalized, projected with
//! LDA and scored with a two-covariance Gaussian PLDA model
//! (`y ~ N(mu, B)`, `x | y ~ N(y, W)`), optionally MAP-adapted to in-domain
//! data. Cosine scoring, adaptive s-norm, logistic calibration and linear
//! fusion operate on the resulting scores.

mod calibration;
mod lda;
mod linalg;
mod pipeline;
mod plda;
mod scoring;
mod whiten;

pub use calibration::{
    calibration_objective, default_effective_prior, fit_calibration, fit_fusion, fuse, logistic_objective,
    train_logistic, CalibrationMap, FusionModel, LogisticFit,
};
pub use lda::{fit_lda, LdaProjection};
pub use linalg::MatrixData;
pub use pipeline::{fit_backend, BackendConfig, BackendModel, Scoring, MODEL_FORMAT_VERSION};
pub use plda::{
    fit_plda, fit_plda_with, interpolate, map_adapt, plda_llr, EmOptions, EnrollStats, PldaFit, PldaModel, PldaScorer,
};
pub use scoring::{adaptive_snorm, cosine_score, DEFAULT_SNORM_TOP_K};
pub use whiten::{fit_whitener, length_norm, Whitener};

use crate::trial_data::DataError;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("embedding table has no speaker labels")]
    MissingLabels,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("between-speaker covariance is unidentifiable: every speaker has a single segment")]
    Unidentifiable,
    #[error("score sets cover different trials")]
    CoverageMismatch,
    #[error("missing embedding for segment {0:?}")]
    MissingEmbedding(String),
    #[error("no enrollment segments for model {0:?}")]
    MissingEnrollment(String),
    #[error("invalid model file: {0}")]
    Model(String),
    #[error(transparent)]
    Data(#[from] DataError),
}
