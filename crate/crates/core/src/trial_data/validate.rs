use serde::{Deserialize, Serialize};

use super::{ScoreScan, ScoreSet, TrialId, TrialKey};

/// Maximum number of example ids listed per finding.
pub const SAMPLE_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialFinding {
    pub count: usize,
    pub sample: Vec<TrialId>,
}

impl TrialFinding {
    fn push(&mut self, id: &TrialId) {
        self.count += 1;
        if self.sample.len() < SAMPLE_LIMIT {
            self.sample.push(id.clone());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LineFinding {
    pub count: usize,
    pub lines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub missing_trials: TrialFinding,
    pub extra_trials: TrialFinding,
    pub malformed_lines: LineFinding,
    pub nonfinite_scores: usize,
    pub verdict: Verdict,
}

/// Compares a parsed score set with the key. Accepts iff the scored trials
/// are exactly the key's trials.
pub fn validate_submission(scores: &ScoreSet, key: &TrialKey) -> ValidationReport {
    let mut missing = TrialFinding::default();
    let mut extra = TrialFinding::default();
    for r in key.records() {
        if !scores.contains(&r.id) {
            missing.push(&r.id);
        }
    }
    for (id, _) in scores.iter() {
        if key.get(id).is_none() {
            extra.push(id);
        }
    }
    finish(missing, extra, LineFinding::default(), 0)
}

/// Like [`validate_submission`] but also folds in the line-level problems a
/// lenient scan found.
pub fn validate_scan(scan: &ScoreScan, key: &TrialKey) -> ValidationReport {
    let base = validate_submission(&scan.scores, key);
    let malformed = LineFinding {
        count: scan.malformed_lines.len(),
        lines: scan.malformed_lines.clone(),
    };
    finish(
        base.missing_trials,
        base.extra_trials,
        malformed,
        scan.nonfinite_lines.len(),
    )
}

fn finish(
    missing_trials: TrialFinding,
    extra_trials: TrialFinding,
    malformed_lines: LineFinding,
    nonfinite_scores: usize,
) -> ValidationReport {
    let clean = missing_trials.count == 0
        && extra_trials.count == 0
        && malformed_lines.count == 0
        && nonfinite_scores == 0;
    ValidationReport {
        missing_trials,
        extra_trials,
        malformed_lines,
        nonfinite_scores,
        verdict: if clean { Verdict::Accept } else { Verdict::Reject },
    }
}
