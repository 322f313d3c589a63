use std::io::Write;

use serde::{Deserialize, Serialize};

use super::probit::probit_extended;
use super::DetError;
use crate::metrics::{EqualizationWeights, OperatingPoint, Prepared};
use crate::trial_data::{ScoreSet, TrialKey};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Equalized miss/false-alarm trade-off, one point per decision state in
/// increasing threshold order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
}

/// DET curve under the given equalization weights. The first point is the
/// accept-everything corner (0, 1) and the last is the reject-everything
/// corner (1, 0).
pub fn det_points(scores: &ScoreSet, key: &TrialKey, weights: &EqualizationWeights) -> Result<DetCurve, DetError> {
    if !key.has_both_classes() {
        return Err(DetError::EmptyClass);
    }
    if weights.n_records != key.len() {
        return Err(crate::metrics::MetricError::WeightsMismatch.into());
    }
    let layout = &weights.layout;
    let tally = &weights.tally;
    let prepared = Prepared::new(layout, key, scores)?;
    let mut points = Vec::new();
    prepared.sweep(layout, tally, None, |threshold, miss, fa| {
        let (p_miss, p_fa) = tally.rates(layout, miss, fa);
        points.push(DetPoint {
            threshold,
            p_miss,
            p_fa,
        });
    });
    if points.is_empty() {
        return Err(DetError::EmptyClass);
    }
    Ok(DetCurve { points })
}

impl DetCurve {
    /// Writes `theta, p_miss, p_fa, probit_miss, probit_fa` rows. Probits of
    /// the 0/1 corners are written as `-inf`/`inf`.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "theta\tp_miss\tp_fa\tprobit_miss\tprobit_fa")?;
        for p in &self.points {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                p.threshold,
                p.p_miss,
                p.p_fa,
                probit_extended(p.p_miss),
                probit_extended(p.p_fa)
            )?;
        }
        Ok(())
    }

    /// Checks the curve invariants: strictly increasing thresholds,
    /// non-decreasing miss rate and non-increasing false-alarm rate.
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| {
            w[0].threshold < w[1].threshold && w[0].p_miss <= w[1].p_miss && w[0].p_fa >= w[1].p_fa
        })
    }
}

/// Equal error rate: the rate where miss and false-alarm probabilities
/// cross, linearly interpolated between the bracketing curve points.
pub fn eer(curve: &DetCurve) -> f64 {
    let pts = &curve.points;
    let Some(i) = pts.iter().position(|p| p.p_miss >= p.p_fa) else {
        // never crosses: only possible for a curve missing its end corner
        return pts.last().map_or(0.5, |p| 0.5 * (p.p_miss + p.p_fa));
    };
    if i == 0 {
        return 0.5 * (pts[0].p_miss + pts[0].p_fa);
    }
    let (a, b) = (pts[i - 1], pts[i]);
    let d0 = a.p_miss - a.p_fa;
    let d1 = b.p_miss - b.p_fa;
    let t = -d0 / (d1 - d0);
    a.p_miss + t * (b.p_miss - a.p_miss)
}

/// Points `(p_fa, p_miss)` on the line `p_miss + beta * p_fa = cost`
/// inside the unit square, evenly spaced in `p_fa`.
pub fn equi_cost_contour(cost: f64, point: &OperatingPoint, n_samples: usize) -> Result<Vec<(f64, f64)>, DetError> {
    if !(cost > 0.0 && cost.is_finite()) {
        return Err(DetError::InvalidContour(format!("cost must be > 0, got {cost}")));
    }
    if n_samples < 2 {
        return Err(DetError::InvalidContour("need at least 2 samples".into()));
    }
    let beta = point.beta();
    let lo = ((cost - 1.0) / beta).max(0.0);
    let hi = (cost / beta).min(1.0);
    if lo > hi {
        return Err(DetError::InvalidContour(format!(
            "cost {cost} does not intersect the unit square at beta {beta}"
        )));
    }
    let step = (hi - lo) / (n_samples - 1) as f64;
    Ok((0..n_samples)
        .map(|i| {
            let p_fa = if i + 1 == n_samples { hi } else { lo + step * i as f64 };
            let p_miss = (cost - beta * p_fa).clamp(0.0, 1.0);
            (p_fa, p_miss)
        })
        .collect())
}
