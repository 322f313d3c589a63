//! Normalized detection cost with partition equalization.
//!
//! `C_norm(theta) = P_miss(theta) + beta * P_fa(theta)`, with a trial
//! accepted iff its LLR is strictly greater than `theta` (a score equal to
//! the threshold is a miss). The actual cost uses `theta = ln(beta)`; the
//! minimum cost sweeps one global threshold over the equalized pool.

mod cost;
mod operating_point;
mod partition;

pub use cost::{
    actual_c_primary, error_rates, evaluate, min_c_primary, CellCost, CellPointCost, CostReport, PointCost,
    SkippedCell,
};
pub use operating_point::{beta, c_norm, default_points, OperatingPoint};
pub use partition::{equalization_weights, Coordinates, Dimension, EqualizationWeights, Exclusion, PartitionSchema};

pub(crate) use cost::{check_points, summarize, CostSummary, Prepared};
pub(crate) use partition::Layout;

use crate::trial_data::TrialId;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("invalid operating point: {0}")]
    InvalidOperatingPoint(String),
    #[error("no operating points given")]
    NoOperatingPoints,
    #[error("trial {0} has no score")]
    MissingScore(TrialId),
    #[error("every trial is excluded by the partition schema")]
    AllExcluded,
    #[error("no partition cell has both target and matched non-target trials ({skipped} cells skipped)")]
    NoParticipatingCells { skipped: usize },
    #[error("key must contain both target and non-target trials")]
    MissingClass,
    #[error("equalization weights were built for a different key")]
    WeightsMismatch,
}
