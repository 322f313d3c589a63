use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::trial_data::{valid_token, Track};

/// Condition-additive Gaussian score model. Target means drop by each
/// mismatch penalty; non-target means move by the corresponding shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreModel {
    pub target_mean: f64,
    pub target_sd: f64,
    pub nontarget_mean: f64,
    pub nontarget_sd: f64,
    pub source_mismatch_penalty: f64,
    pub language_mismatch_penalty: f64,
    pub phone_mismatch_penalty: f64,
    pub nontarget_source_shift: f64,
    pub nontarget_language_shift: f64,
}

impl Default for ScoreModel {
    fn default() -> Self {
        ScoreModel {
            target_mean: 6.0,
            target_sd: 2.0,
            nontarget_mean: -6.0,
            nontarget_sd: 2.0,
            source_mismatch_penalty: 2.0,
            language_mismatch_penalty: 1.0,
            phone_mismatch_penalty: 0.5,
            nontarget_source_shift: 0.5,
            nontarget_language_shift: -0.5,
        }
    }
}

/// Embedding model `x = mu_speaker + shift(source, language) + noise` with
/// `mu_speaker ~ N(0, between_variance I)` and
/// `noise ~ N(0, within_variance I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingModel {
    pub dim: usize,
    pub between_variance: f64,
    pub within_variance: f64,
    /// Standard deviation of the per-(source, language) shift vectors.
    pub condition_shift_sd: f64,
    /// Standard deviation of the constant offset applied to the
    /// out-of-domain training set.
    pub domain_shift_sd: f64,
    pub train_speakers: usize,
    pub train_segments_per_speaker: usize,
    pub dev_speakers: usize,
    pub dev_segments_per_speaker: usize,
}

impl Default for EmbeddingModel {
    fn default() -> Self {
        EmbeddingModel {
            dim: 16,
            between_variance: 1.0,
            within_variance: 0.25,
            condition_shift_sd: 0.3,
            domain_shift_sd: 0.3,
            train_speakers: 200,
            train_segments_per_speaker: 8,
            dev_speakers: 20,
            dev_segments_per_speaker: 10,
        }
    }
}

/// Face encodings: identity vector `N(0, between_variance I)` plus
/// per-frame noise `N(0, within_variance I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaceModel {
    pub dim: usize,
    pub between_variance: f64,
    pub within_variance: f64,
    pub frames_min: usize,
    pub frames_max: usize,
}

impl Default for FaceModel {
    fn default() -> Self {
        FaceModel {
            dim: 8,
            between_variance: 1.0,
            within_variance: 0.1,
            frames_min: 3,
            frames_max: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub track: Track,
    pub n_speakers: usize,
    /// Fraction of male speakers; the male count is
    /// `round(n_speakers * male_fraction)`.
    pub male_fraction: f64,
    pub languages: Vec<String>,
    /// Fraction of speakers (per gender, rounded) who also speak a second
    /// language.
    pub multilingual_fraction: f64,
    /// Fraction of each speaker's test segments taken from video (AfV).
    pub afv_fraction: f64,
    pub test_segments_min: usize,
    pub test_segments_max: usize,
    /// Also enroll a 3-segment CTS model per speaker (audio track only).
    pub three_segment_models: bool,
    pub scores: ScoreModel,
    pub embeddings: EmbeddingModel,
    pub faces: FaceModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            track: Track::Audio,
            n_speakers: 40,
            male_fraction: 43.0 / 182.0,
            languages: vec!["cantonese".into(), "english".into(), "mandarin".into()],
            multilingual_fraction: 0.5,
            afv_fraction: 0.5,
            test_segments_min: 8,
            test_segments_max: 10,
            three_segment_models: true,
            scores: ScoreModel::default(),
            embeddings: EmbeddingModel::default(),
            faces: FaceModel::default(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), SynthError> {
    if ok {
        Ok(())
    } else {
        Err(SynthError::Config(msg()))
    }
}

fn prob(name: &str, v: f64) -> Result<(), SynthError> {
    check((0.0..=1.0).contains(&v), || format!("{name} must lie in [0, 1], got {v}"))
}

fn positive(name: &str, v: f64) -> Result<(), SynthError> {
    check(v > 0.0 && v.is_finite(), || format!("{name} must be > 0, got {v}"))
}

fn non_negative(name: &str, v: f64) -> Result<(), SynthError> {
    check(v >= 0.0 && v.is_finite(), || format!("{name} must be >= 0, got {v}"))
}

fn finite(name: &str, v: f64) -> Result<(), SynthError> {
    check(v.is_finite(), || format!("{name} must be finite, got {v}"))
}

impl SynthConfig {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let config: SynthConfig = serde_json::from_str(text).map_err(|e| SynthError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn n_male(&self) -> usize {
        (self.n_speakers as f64 * self.male_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        check(self.n_speakers >= 1, || "n_speakers must be >= 1".into())?;
        prob("male_fraction", self.male_fraction)?;
        prob("multilingual_fraction", self.multilingual_fraction)?;
        prob("afv_fraction", self.afv_fraction)?;
        check(!self.languages.is_empty(), || "languages must not be empty".into())?;
        for (i, l) in self.languages.iter().enumerate() {
            check(valid_token(l), || format!("language {l:?} is not a valid token"))?;
            check(!self.languages[..i].contains(l), || format!("language {l:?} listed twice"))?;
        }
        check(self.test_segments_min >= 1, || "test_segments_min must be >= 1".into())?;
        check(self.test_segments_max >= self.test_segments_min, || {
            "test_segments_max must be >= test_segments_min".into()
        })?;
        if self.track != Track::Audio {
            check(self.afv_fraction > 0.0, || "visual tracks need afv_fraction > 0".into())?;
        }

        let s = &self.scores;
        for (n, v) in [
            ("target_mean", s.target_mean),
            ("nontarget_mean", s.nontarget_mean),
            ("source_mismatch_penalty", s.source_mismatch_penalty),
            ("language_mismatch_penalty", s.language_mismatch_penalty),
            ("phone_mismatch_penalty", s.phone_mismatch_penalty),
            ("nontarget_source_shift", s.nontarget_source_shift),
            ("nontarget_language_shift", s.nontarget_language_shift),
        ] {
            finite(n, v)?;
        }
        positive("target_sd", s.target_sd)?;
        positive("nontarget_sd", s.nontarget_sd)?;

        let e = &self.embeddings;
        check(e.dim >= 1, || "embedding dim must be >= 1".into())?;
        non_negative("between_variance", e.between_variance)?;
        positive("within_variance", e.within_variance)?;
        non_negative("condition_shift_sd", e.condition_shift_sd)?;
        non_negative("domain_shift_sd", e.domain_shift_sd)?;
        check(e.train_speakers >= 2 && e.dev_speakers >= 2, || {
            "train_speakers and dev_speakers must be >= 2".into()
        })?;
        check(e.train_segments_per_speaker >= 2 && e.dev_segments_per_speaker >= 2, || {
            "segments per training/dev speaker must be >= 2".into()
        })?;

        let f = &self.faces;
        check(f.dim >= 1, || "face dim must be >= 1".into())?;
        non_negative("face between_variance", f.between_variance)?;
        positive("face within_variance", f.within_variance)?;
        check(f.frames_min >= 1 && f.frames_max >= f.frames_min, || {
            "frames_min must be >= 1 and <= frames_max".into()
        })?;
        Ok(())
    }
}
