use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DetError;
use crate::metrics::{check_points, CostSummary, summarize, Layout, MetricError, OperatingPoint, PartitionSchema, Prepared};
use crate::trial_data::{ScoreSet, TrialKey};

/// Which cost the bootstrap recomputes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMetric {
    Actual,
    Min,
}

/// Resampling unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// Distinct model ids drawn with replacement; each draw brings all of
    /// the model's trials.
    #[default]
    Models,
    /// Models drawn as above, then each drawn model's trials are
    /// themselves drawn with replacement.
    ModelsAndSegments,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub metric: CostMetric,
    pub n_replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub resampling: Resampling,
}

impl BootstrapConfig {
    pub fn new(metric: CostMetric, seed: u64) -> Self {
        BootstrapConfig {
            metric,
            n_replicates: 1000,
            level: 0.95,
            seed,
            resampling: Resampling::Models,
        }
    }
}

/// Percentile interval. `lower <= upper` always holds, the point estimate
/// may fall outside the interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub metric: CostMetric,
    pub point_estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n_replicates: usize,
    pub n_discarded: usize,
    pub seed: u64,
    pub resampling: Resampling,
}

/// Largest share of replicates that may be discarded (no scoreable cell)
/// before the bootstrap fails.
pub const MAX_DISCARD_FRACTION: f64 = 0.10;

/// Nearest-rank quantile of sorted values, `q` in (0, 1).
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Per-record multiplicities for one replicate.
fn draw(
    rng: &mut ChaCha8Rng,
    model_records: &[Vec<usize>],
    n_records: usize,
    resampling: Resampling,
) -> Vec<u32> {
    let n_models = model_records.len();
    let mut mult = vec![0u32; n_records];
    for _ in 0..n_models {
        let recs = &model_records[rng.random_range(0..n_models)];
        match resampling {
            Resampling::Models => {
                for &r in recs {
                    mult[r] += 1;
                }
            }
            Resampling::ModelsAndSegments => {
                for _ in 0..recs.len() {
                    mult[recs[rng.random_range(0..recs.len())]] += 1;
                }
            }
        }
    }
    mult
}

/// Bootstrap confidence interval of the primary cost. Each replicate
/// resamples model ids with replacement, rebuilds the equalization for the
/// resampled multiset and recomputes the chosen cost. Replicate `i` draws
/// from its own ChaCha stream `i` under `seed`, so the result does not
/// depend on execution order or thread count.
pub fn bootstrap_ci(
    scores: &ScoreSet,
    key: &TrialKey,
    schema: &PartitionSchema,
    points: &[OperatingPoint],
    config: &BootstrapConfig,
) -> Result<ConfidenceInterval, DetError> {
    check_points(points)?;
    if config.n_replicates == 0 {
        return Err(DetError::InvalidBootstrap("n_replicates must be >= 1".into()));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(DetError::InvalidBootstrap(format!(
            "level must lie in (0, 1), got {}",
            config.level
        )));
    }
    if !key.has_both_classes() {
        return Err(DetError::EmptyClass);
    }
    let layout = Layout::new(key, schema)?;
    let prepared = Prepared::new(&layout, key, scores)?;
    let pick = |s: CostSummary| match config.metric {
        CostMetric::Actual => s.actual,
        CostMetric::Min => s.minimum,
    };
    let point_estimate = pick(summarize(&layout, &prepared, points, None)?);

    let mut by_model: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in key.records().iter().enumerate() {
        by_model.entry(r.id.model_id.as_str()).or_default().push(i);
    }
    let model_records: Vec<Vec<usize>> = by_model.into_values().collect();

    let outcomes: Vec<Option<f64>> = (0..config.n_replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let mult = draw(&mut rng, &model_records, key.len(), config.resampling);
            match summarize(&layout, &prepared, points, Some(&mult)) {
                Ok(s) => Some(pick(s)),
                Err(MetricError::NoParticipatingCells { .. }) => None,
                Err(e) => panic!("unexpected replicate failure: {e}"),
            }
        })
        .collect();
    let mut costs: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let n_discarded = outcomes.len() - costs.len();
    if costs.is_empty() || n_discarded as f64 > MAX_DISCARD_FRACTION * config.n_replicates as f64 {
        return Err(DetError::TooManyDiscarded {
            discarded: n_discarded,
            total: config.n_replicates,
        });
    }
    costs.sort_by(f64::total_cmp);
    let tail = (1.0 - config.level) / 2.0;
    Ok(ConfidenceInterval {
        metric: config.metric,
        point_estimate,
        lower: nearest_rank(&costs, tail),
        upper: nearest_rank(&costs, 1.0 - tail),
        level: config.level,
        n_replicates: config.n_replicates,
        n_discarded,
        seed: config.seed,
        resampling: config.resampling,
    })
}
