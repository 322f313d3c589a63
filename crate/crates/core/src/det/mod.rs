//! DET analysis: curves, probit warping, equal error rate, equi-cost
//! contours and bootstrap confidence intervals of the primary cost.

mod bootstrap;
mod curve;
mod probit;

pub use bootstrap::{
    bootstrap_ci, nearest_rank, BootstrapConfig, ConfidenceInterval, CostMetric, Resampling, MAX_DISCARD_FRACTION,
};
pub use curve::{det_points, eer, equi_cost_contour, DetCurve, DetPoint};
pub use probit::{normal_cdf, probit, probit_extended};

use crate::metrics::MetricError;

#[derive(Debug, thiserror::Error)]
pub enum DetError {
    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("both target and non-target trials are required")]
    EmptyClass,
    #[error("{0}")]
    InvalidContour(String),
    #[error("{0}")]
    InvalidBootstrap(String),
    #[error("{discarded} of {total} bootstrap replicates had no scoreable cell")]
    TooManyDiscarded { discarded: usize, total: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
}
