use std::io::Write;

use serde::Serialize;

use super::partition::{equalization_weights, Coordinates, EqualizationWeights, Layout, Slot, Tally};
use super::{c_norm, MetricError, OperatingPoint, PartitionSchema};
use crate::det::ConfidenceInterval;
use crate::trial_data::{ScoreSet, TrialKey};

/// Scored, non-excluded trials sorted by score.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub scores: Vec<f64>,
    pub slots: Vec<Slot>,
    /// Index into `TrialKey::records` of each entry.
    pub record: Vec<usize>,
}

impl Prepared {
    pub fn new(layout: &Layout, key: &TrialKey, scores: &ScoreSet) -> Result<Self, MetricError> {
        let mut items: Vec<(f64, Slot, usize)> = Vec::with_capacity(key.len());
        for (i, (r, slot)) in key.records().iter().zip(&layout.slots).enumerate() {
            let Some(slot) = slot else { continue };
            let s = scores
                .get(&r.id)
                .ok_or_else(|| MetricError::MissingScore(r.id.clone()))?;
            items.push((s, *slot, i));
        }
        items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        Ok(Prepared {
            scores: items.iter().map(|x| x.0).collect(),
            slots: items.iter().map(|x| x.1).collect(),
            record: items.iter().map(|x| x.2).collect(),
        })
    }

    /// Miss counts per target cell and false-alarm counts per pool at
    /// `theta` (accept iff score > theta).
    pub fn counts_at(&self, layout: &Layout, theta: f64, multiplicity: Option<&[u32]>) -> (Vec<u64>, Vec<u64>) {
        let mut miss = vec![0u64; layout.target_cells.len()];
        let mut fa = vec![0u64; layout.pools.len()];
        for ((&s, slot), &rec) in self.scores.iter().zip(&self.slots).zip(&self.record) {
            let m = multiplicity.map_or(1, |m| m[rec]) as u64;
            match *slot {
                Slot::Target(c) if s <= theta => miss[c] += m,
                Slot::Nontarget(p) if s > theta => fa[p] += m,
                _ => {}
            }
        }
        (miss, fa)
    }

    /// Walks every distinct decision state of the equalized error rates, in
    /// increasing threshold order. `visit` receives the threshold
    /// representing the state, the per-cell miss counts and per-pool
    /// false-alarm counts.
    ///
    /// Only trials that contribute (participating cells and the pools they
    /// use, with nonzero multiplicity) generate thresholds. States are
    /// represented by a sentinel below the lowest score, midpoints between
    /// consecutive distinct scores and a sentinel above the highest.
    pub fn sweep(
        &self,
        layout: &Layout,
        tally: &Tally,
        multiplicity: Option<&[u32]>,
        mut visit: impl FnMut(f64, &[u64], &[u64]),
    ) {
        let uses = tally.pool_uses(layout);
        let active: Vec<usize> = (0..self.scores.len())
            .filter(|&i| multiplicity.is_none_or(|m| m[self.record[i]] > 0))
            .filter(|&i| tally.is_active(layout, self.slots[i], &uses))
            .collect();
        let mut miss = vec![0u64; layout.target_cells.len()];
        let mut fa = vec![0u64; layout.pools.len()];
        for &i in &active {
            if let Slot::Nontarget(p) = self.slots[i] {
                fa[p] += multiplicity.map_or(1, |m| m[self.record[i]]) as u64;
            }
        }
        let (Some(&first), Some(&last)) = (active.first(), active.last()) else {
            return;
        };
        visit(below(self.scores[first]), &miss, &fa);
        let mut k = 0;
        while k < active.len() {
            let v = self.scores[active[k]];
            while k < active.len() && self.scores[active[k]] == v {
                let i = active[k];
                let m = multiplicity.map_or(1, |m| m[self.record[i]]) as u64;
                match self.slots[i] {
                    Slot::Target(c) => miss[c] += m,
                    Slot::Nontarget(p) => fa[p] -= m,
                }
                k += 1;
            }
            let theta = if k < active.len() {
                midpoint(v, self.scores[active[k]])
            } else {
                above(self.scores[last])
            };
            visit(theta, &miss, &fa);
        }
    }
}

/// A threshold strictly between `lo` and `hi` (lo < hi) that rejects `lo`
/// and accepts `hi`; falls back to `lo` itself when the two are adjacent
/// floats.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = 0.5 * lo + 0.5 * hi;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

pub(crate) fn below(lo: f64) -> f64 {
    let t = lo - 1.0 - lo.abs();
    if t.is_finite() {
        t
    } else {
        f64::MIN
    }
}

pub(crate) fn above(hi: f64) -> f64 {
    let t = hi + 1.0 + hi.abs();
    if t.is_finite() {
        t
    } else {
        f64::MAX
    }
}

/// Equalized miss and false-alarm probabilities at `theta`.
pub fn error_rates(
    scores: &ScoreSet,
    key: &TrialKey,
    theta: f64,
    weights: &EqualizationWeights,
) -> Result<(f64, f64), MetricError> {
    if weights.n_records != key.len() {
        return Err(MetricError::WeightsMismatch);
    }
    let prepared = Prepared::new(&weights.layout, key, scores)?;
    let (miss, fa) = prepared.counts_at(&weights.layout, theta, None);
    Ok(weights.tally.rates(&weights.layout, &miss, &fa))
}

#[derive(Debug, Clone, Serialize)]
pub struct PointCost {
    pub point: OperatingPoint,
    pub beta: f64,
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
    pub actual_c_norm: f64,
    pub min_c_norm: f64,
    pub min_threshold: f64,
    pub min_p_miss: f64,
    pub min_p_fa: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellPointCost {
    pub p_miss: f64,
    pub p_fa: f64,
    pub c_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellCost {
    pub cell: Coordinates,
    pub n_target: u64,
    pub n_nontarget: u64,
    /// One entry per operating point, in report order.
    pub per_point: Vec<CellPointCost>,
    pub c_primary: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedCell {
    pub cell: Coordinates,
    pub n_target: u64,
    pub reason: &'static str,
}

/// Actual and minimum primary cost with per-point and per-cell breakdown.
#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub actual_c_primary: f64,
    pub min_c_primary: f64,
    pub per_point: Vec<PointCost>,
    pub per_cell: Vec<CellCost>,
    pub skipped_cells: Vec<SkippedCell>,
    pub n_trials_scored: usize,
    pub n_trials_excluded: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub confidence_intervals: Vec<ConfidenceInterval>,
}

impl CostReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per cell and operating point.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "cell\tp_target\tbeta\tthreshold\tn_target\tn_nontarget\tp_miss\tp_fa\tc_norm"
        )?;
        for cell in &self.per_cell {
            for (pc, pt) in cell.per_point.iter().zip(&self.per_point) {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    cell.cell,
                    pt.point.p_target(),
                    pt.beta,
                    pt.threshold,
                    cell.n_target,
                    cell.n_nontarget,
                    pc.p_miss,
                    pc.p_fa,
                    pc.c_norm
                )?;
            }
        }
        Ok(())
    }
}

/// Cost of one (possibly resampled) trial multiset.
pub(crate) struct CostSummary {
    pub actual: f64,
    pub minimum: f64,
}

pub(crate) fn check_points(points: &[OperatingPoint]) -> Result<(), MetricError> {
    if points.is_empty() {
        Err(MetricError::NoOperatingPoints)
    } else {
        Ok(())
    }
}

/// Actual and minimum primary cost without the per-cell breakdown. Used by
/// the bootstrap, where `multiplicity` gives each key record's count.
pub(crate) fn summarize(
    layout: &Layout,
    prepared: &Prepared,
    points: &[OperatingPoint],
    multiplicity: Option<&[u32]>,
) -> Result<CostSummary, MetricError> {
    let tally = Tally::new(layout, multiplicity);
    if tally.participating.is_empty() {
        return Err(MetricError::NoParticipatingCells {
            skipped: tally.skipped.len(),
        });
    }
    let mut minima = vec![f64::INFINITY; points.len()];
    prepared.sweep(layout, &tally, multiplicity, |_, miss, fa| {
        let (pm, pf) = tally.rates(layout, miss, fa);
        for (m, pt) in minima.iter_mut().zip(points) {
            let c = c_norm(pm, pf, pt);
            if c < *m {
                *m = c;
            }
        }
    });
    let mut actual = 0.0;
    for pt in points {
        let (miss, fa) = prepared.counts_at(layout, pt.threshold(), multiplicity);
        let (pm, pf) = tally.rates(layout, &miss, &fa);
        actual += c_norm(pm, pf, pt);
    }
    let n = points.len() as f64;
    Ok(CostSummary {
        actual: actual / n,
        minimum: minima.iter().sum::<f64>() / n,
    })
}

/// Computes the full cost report: actual cost at `ln(beta)` per point and
/// cell, and the minimum over a single global threshold per point.
pub fn evaluate(
    scores: &ScoreSet,
    key: &TrialKey,
    schema: &PartitionSchema,
    points: &[OperatingPoint],
) -> Result<CostReport, MetricError> {
    check_points(points)?;
    if !key.has_both_classes() {
        return Err(MetricError::MissingClass);
    }
    let weights = equalization_weights(key, schema)?;
    let layout = &weights.layout;
    let tally = &weights.tally;
    let prepared = Prepared::new(layout, key, scores)?;

    struct Best {
        c: f64,
        theta: f64,
        pm: f64,
        pf: f64,
    }
    let mut best: Vec<Best> = points
        .iter()
        .map(|_| Best {
            c: f64::INFINITY,
            theta: f64::NAN,
            pm: f64::NAN,
            pf: f64::NAN,
        })
        .collect();
    prepared.sweep(layout, tally, None, |theta, miss, fa| {
        let (pm, pf) = tally.rates(layout, miss, fa);
        for (b, pt) in best.iter_mut().zip(points) {
            let c = c_norm(pm, pf, pt);
            if c < b.c {
                *b = Best { c, theta, pm, pf };
            }
        }
    });

    let mut per_point = Vec::with_capacity(points.len());
    let mut cell_points: Vec<Vec<CellPointCost>> = vec![Vec::new(); tally.participating.len()];
    for (pt, b) in points.iter().zip(&best) {
        let (miss, fa) = prepared.counts_at(layout, pt.threshold(), None);
        let (pm, pf) = tally.rates(layout, &miss, &fa);
        for (slot, &c) in cell_points.iter_mut().zip(&tally.participating) {
            let p = layout.target_pool[c].expect("participating");
            let cpm = miss[c] as f64 / tally.n_target[c] as f64;
            let cpf = fa[p] as f64 / tally.n_pool[p] as f64;
            slot.push(CellPointCost {
                p_miss: cpm,
                p_fa: cpf,
                c_norm: c_norm(cpm, cpf, pt),
            });
        }
        per_point.push(PointCost {
            point: *pt,
            beta: pt.beta(),
            threshold: pt.threshold(),
            p_miss: pm,
            p_fa: pf,
            actual_c_norm: c_norm(pm, pf, pt),
            min_c_norm: b.c,
            min_threshold: b.theta,
            min_p_miss: b.pm,
            min_p_fa: b.pf,
        });
    }
    let n = points.len() as f64;
    let actual_c_primary = per_point.iter().map(|p| p.actual_c_norm).sum::<f64>() / n;
    let min_c_primary = per_point.iter().map(|p| p.min_c_norm).sum::<f64>() / n;

    let per_cell = tally
        .participating
        .iter()
        .zip(cell_points)
        .map(|(&c, pts)| {
            let p = layout.target_pool[c].expect("participating");
            CellCost {
                cell: layout.target_cells[c].clone(),
                n_target: tally.n_target[c],
                n_nontarget: tally.n_pool[p],
                c_primary: pts.iter().map(|x| x.c_norm).sum::<f64>() / n,
                per_point: pts,
            }
        })
        .collect();
    let skipped_cells = tally
        .skipped
        .iter()
        .map(|&c| SkippedCell {
            cell: layout.target_cells[c].clone(),
            n_target: tally.n_target[c],
            reason: "no matched non-target trials",
        })
        .collect();
    let n_trials_excluded = layout.slots.iter().filter(|s| s.is_none()).count();
    Ok(CostReport {
        actual_c_primary,
        min_c_primary,
        per_point,
        per_cell,
        skipped_cells,
        n_trials_scored: prepared.scores.len(),
        n_trials_excluded,
        confidence_intervals: Vec::new(),
    })
}

/// Actual primary cost: per-cell `C_norm` at `theta = ln(beta)`, averaged
/// over operating points and cells. The returned report also carries the
/// minimum.
pub fn actual_c_primary(
    scores: &ScoreSet,
    key: &TrialKey,
    schema: &PartitionSchema,
    points: &[OperatingPoint],
) -> Result<CostReport, MetricError> {
    evaluate(scores, key, schema, points)
}

/// Minimum primary cost: for each point the lowest equalized `C_norm` over
/// a single global threshold, averaged over points. The returned report
/// also carries the actual cost.
pub fn min_c_primary(
    scores: &ScoreSet,
    key: &TrialKey,
    schema: &PartitionSchema,
    points: &[OperatingPoint],
) -> Result<CostReport, MetricError> {
    evaluate(scores, key, schema, points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_stays_inside() {
        assert_eq!(midpoint(1.0, 2.0), 1.5);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
        assert_eq!(midpoint(-3.0, 5.0), 1.0);
    }

    #[test]
    fn sentinels_bracket() {
        for v in [0.0, -2.5, 1e10, -1e300, 7.0] {
            assert!(below(v) < v);
            assert!(above(v) > v);
        }
        assert_eq!(above(f64::MAX), f64::MAX);
    }
}
