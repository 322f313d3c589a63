use rand_distr::{Distribution, StandardNormal};

use super::world::stream;
use super::{SynthConfig, SynthError};
use crate::trial_data::{Match, PhoneMatch, ScoreSet, TrialKey, TrialRecord};

const SCORES: u64 = 2;

fn indicator(m: Match) -> f64 {
    if m == Match::N {
        1.0
    } else {
        0.0
    }
}

/// Mean and standard deviation of the score distribution of a trial.
fn condition(record: &TrialRecord, config: &SynthConfig) -> (f64, f64) {
    let s = &config.scores;
    let source = indicator(record.source_match);
    let language = indicator(record.language_match);
    if record.is_target() {
        let phone = if record.phone_match == PhoneMatch::N { 1.0 } else { 0.0 };
        (
            s.target_mean
                - s.source_mismatch_penalty * source
                - s.language_mismatch_penalty * language
                - s.phone_mismatch_penalty * phone,
            s.target_sd,
        )
    } else {
        (
            s.nontarget_mean + s.nontarget_source_shift * source + s.nontarget_language_shift * language,
            s.nontarget_sd,
        )
    }
}

/// Draws one Gaussian score per trial. Each model (in key order) has its
/// own random stream, and draws are standard normals scaled afterwards, so
/// changing a mean or penalty moves scores without reshuffling them.
pub fn generate_scores(key: &TrialKey, config: &SynthConfig, seed: u64) -> Result<ScoreSet, SynthError> {
    config.validate()?;
    let mut out = ScoreSet::new();
    let records = key.records();
    let mut start = 0;
    let mut model_index = 0u64;
    while start < records.len() {
        let model = &records[start].id.model_id;
        let end = start + records[start..].iter().take_while(|r| &r.id.model_id == model).count();
        let mut rng = stream(seed, SCORES, model_index);
        for r in &records[start..end] {
            let z: f64 = StandardNormal.sample(&mut rng);
            let (mean, sd) = condition(r, config);
            out.insert(r.id.clone(), mean + sd * z)
                .map_err(|e| SynthError::Config(format!("score for {}: {e:?}", r.id)))?;
        }
        start = end;
        model_index += 1;
    }
    Ok(out)
}
