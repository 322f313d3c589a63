//! Evaluation toolkit for speaker and person detection trials.
//!
//! The crate covers the whole measurement chain:
//!
//! - [`trial_data`]: trial keys, score files, embedding tables and
//!   submission validation.
//! - [`metrics`]: partition-equalized normalized detection cost, actual and
//!   minimum, at fixed operating points.
//! - [`det`]: DET curves, probit warping, equal error rate, equi-cost
//!   contours and bootstrap confidence intervals.
//! - [`backend`]: embedding scoring chain (whitening, length normalization,
//!   LDA, two-covariance PLDA with MAP adaptation), adaptive s-norm,
//!   logistic calibration and linear fusion.
//! - [`visual`]: k-means++ pseudo-encodings and max-cosine video scoring.
//! - [`synthgen`]: seeded synthetic keys, scores and embeddings.

pub mod trial_data;
pub mod metrics;
pub mod det;
pub mod backend;
pub mod visual;
pub mod synthgen;
