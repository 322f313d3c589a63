//! Trial keys, score files, enrollment lists and embedding tables.
//!
//! Enrollment lists map a model to its enrollment segments, one
//! `modelid<TAB>segmentid` pair per line. Embedding tables carry their
//! width in the header (`segmentid<TAB>speaker<TAB>dim=N`).
//!
//! All formats are UTF-8, tab-separated, with a mandatory exact header
//! line. Parsers report the 1-based line number of the first problem they
//! hit. Keys and score sets are stored in canonical (sorted) order so that
//! permuting the data lines of a file yields an equal value.

mod embeddings;
mod enrollment;
mod key;
mod scores;
mod validate;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use embeddings::{load_embeddings, read_embeddings, write_embeddings, EmbeddingRow, EmbeddingTable};
pub use enrollment::{load_enrollment, read_enrollment, write_enrollment, Enrollment, ENROLLMENT_HEADER};
pub use key::{parse_key, read_key, write_key, KEY_HEADER};
pub use scores::{parse_scores, read_scores, scan_scores, write_scores, ScoreScan, SCORE_HEADER};
pub use validate::{validate_scan, validate_submission, ValidationReport, Verdict, SAMPLE_LIMIT};

/// Errors raised while reading or constructing trial data.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error: {0}")]
    Stream(#[from] std::io::Error),
    #[error("file is empty")]
    Empty,
    #[error("line {line}: bad header: expected {expected:?}, found {found:?}")]
    Header {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: field {field:?}: invalid value {value:?}")]
    Field {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: non-finite score {value:?}")]
    NonFinite { line: usize, value: String },
    #[error("line {line}: duplicate trial ({model_id}, {segment_id})")]
    DuplicateTrial {
        line: usize,
        model_id: String,
        segment_id: String,
    },
    #[error("line {line}: duplicate segment {segment_id:?}")]
    DuplicateSegment { line: usize, segment_id: String },
    #[error("line {line}: {message}")]
    Invariant { line: usize, message: String },
    #[error("{0}")]
    Degenerate(String),
}

impl DataError {
    /// Line number the error refers to, when there is one.
    pub fn line(&self) -> Option<usize> {
        match self {
            DataError::Header { line, .. }
            | DataError::ColumnCount { line, .. }
            | DataError::Field { line, .. }
            | DataError::NonFinite { line, .. }
            | DataError::DuplicateTrial { line, .. }
            | DataError::DuplicateSegment { line, .. }
            | DataError::Invariant { line, .. } => Some(*line),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, DataError>;

/// The (enrollment model, test segment) pair identifying a trial.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrialId {
    pub model_id: String,
    pub segment_id: String,
}

pub(crate) fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.contains(['\t', '\n', '\r'])
}

impl TrialId {
    /// Builds a trial id, rejecting empty tokens or tokens containing tabs
    /// or line breaks.
    pub fn new(model_id: impl Into<String>, segment_id: impl Into<String>) -> Option<Self> {
        let model_id = model_id.into();
        let segment_id = segment_id.into();
        (valid_token(&model_id) && valid_token(&segment_id)).then_some(TrialId { model_id, segment_id })
    }
}

impl fmt::Display for TrialId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.model_id, self.segment_id)
    }
}

macro_rules! token_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $tok:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name { $(#[serde(rename = $tok)] $variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $tok),+ }
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s { $($tok => Some($name::$variant),)+ _ => None }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

token_enum!(
    /// Ground truth of a trial.
    Label { Target => "target", Nontarget => "nontarget" }
);
token_enum!(Gender { Male => "male", Female => "female" });
token_enum!(
    /// Y/N match flag (source type, language).
    Match { Y => "Y", N => "N" }
);
token_enum!(
    /// Phone-number match; only defined for CTS target trials.
    PhoneMatch { Y => "Y", N => "N", NotApplicable => "NA" }
);
token_enum!(Track { Audio => "audio", Visual => "visual", AudioVisual => "audio-visual" });

impl PhoneMatch {
    /// Value used for partitioning: not-applicable collapses to N.
    pub fn normalized(self) -> Match {
        match self {
            PhoneMatch::Y => Match::Y,
            PhoneMatch::N | PhoneMatch::NotApplicable => Match::N,
        }
    }
}

/// One line of a trial key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: TrialId,
    pub label: Label,
    pub gender: Gender,
    pub source_match: Match,
    pub language_match: Match,
    pub phone_match: PhoneMatch,
    pub num_enroll_segments: u8,
    pub track: Track,
}

impl TrialRecord {
    pub fn is_target(&self) -> bool {
        self.label == Label::Target
    }

    /// Checks the per-record invariants, returning a message on violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.phone_match == PhoneMatch::Y && self.label != Label::Target {
            return Err("phone_match=Y on a non-target trial".into());
        }
        match self.num_enroll_segments {
            1 => {}
            3 if self.track == Track::Audio => {}
            3 => return Err("3-segment enrollment is only defined for audio trials".into()),
            n => return Err(format!("num_enroll must be 1 or 3, got {n}")),
        }
        Ok(())
    }
}

/// The answer key for one track.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialKey {
    track: Track,
    records: Vec<TrialRecord>,
}

impl TrialKey {
    /// Builds a key from records in any order. Records are checked
    /// individually and ids must be unique. Class balance is not required
    /// here; scoring entry points reject keys missing a class.
    pub fn new(track: Track, mut records: Vec<TrialRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if r.track != track {
                return Err(DataError::Invariant {
                    line: i + 1,
                    message: format!("record track {} differs from key track {}", r.track, track),
                });
            }
            r.check().map_err(|message| DataError::Invariant { line: i + 1, message })?;
        }
        records.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = records.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(DataError::DuplicateTrial {
                line: 0,
                model_id: w[0].id.model_id.clone(),
                segment_id: w[0].id.segment_id.clone(),
            });
        }
        if records.is_empty() {
            return Err(DataError::Degenerate("key has no trials".into()));
        }
        Ok(TrialKey { track, records })
    }

    pub fn track(&self) -> Track {
        self.track
    }

    /// Records sorted by trial id.
    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// True when the key holds at least one target and one non-target.
    pub fn has_both_classes(&self) -> bool {
        let n_target = self.records.iter().filter(|r| r.is_target()).count();
        n_target > 0 && n_target < self.records.len()
    }

    pub fn get(&self, id: &TrialId) -> Option<&TrialRecord> {
        self.records
            .binary_search_by(|r| r.id.cmp(id))
            .ok()
            .map(|i| &self.records[i])
    }

    /// Distinct model ids in sorted order.
    pub fn model_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.records.iter().map(|r| r.id.model_id.as_str()).collect();
        ids.dedup();
        ids
    }
}

/// One system's LLR per trial.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    entries: std::collections::BTreeMap<TrialId, f64>,
}

impl ScoreSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a score. Fails on a non-finite value or an id already present.
    pub fn insert(&mut self, id: TrialId, llr: f64) -> std::result::Result<(), ScoreInsertError> {
        if !llr.is_finite() {
            return Err(ScoreInsertError::NonFinite);
        }
        match self.entries.entry(id) {
            std::collections::btree_map::Entry::Occupied(_) => Err(ScoreInsertError::Duplicate),
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(llr);
                Ok(())
            }
        }
    }

    pub fn get(&self, id: &TrialId) -> Option<f64> {
        self.entries.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TrialId, f64)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    pub fn contains(&self, id: &TrialId) -> bool {
        self.entries.contains_key(id)
    }

    /// Applies `f` to every score, keeping ids.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> ScoreSet {
        ScoreSet {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), f(*v))).collect(),
        }
    }
}

impl FromIterator<(TrialId, f64)> for ScoreSet {
    /// Collects scores; later duplicates overwrite earlier ones. Non-finite
    /// values are not filtered, callers building from parsed data should go
    /// through [`ScoreSet::insert`].
    fn from_iter<I: IntoIterator<Item = (TrialId, f64)>>(iter: I) -> Self {
        ScoreSet {
            entries: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreInsertError {
    NonFinite,
    Duplicate,
}

fn split_line(line: &str) -> Vec<&str> {
    line.trim_end_matches(['\r', '\n']).split('\t').collect()
}

fn open(path: &std::path::Path) -> Result<std::io::BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Parses a decimal real, accepting scientific notation but rejecting
/// NaN/infinity literals (returns `Err(true)` for those) and garbage
/// (`Err(false)`).
fn parse_real(s: &str) -> std::result::Result<f64, bool> {
    let lower = s.to_ascii_lowercase();
    let body = lower.trim_start_matches(['+', '-']);
    if body.starts_with("nan") || body.starts_with("inf") {
        return Err(true);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(true),
        Err(_) => Err(false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_id_rejects_bad_tokens() {
        assert!(TrialId::new("m1", "s1").is_some());
        assert!(TrialId::new("", "s1").is_none());
        assert!(TrialId::new("m\t1", "s1").is_none());
        assert!(TrialId::new("m1", "s\n").is_none());
    }

    #[test]
    fn parse_real_flags_nonfinite() {
        assert_eq!(parse_real("2.5"), Ok(2.5));
        assert_eq!(parse_real("-1e-3"), Ok(-1e-3));
        assert_eq!(parse_real("NaN"), Err(true));
        assert_eq!(parse_real("-inf"), Err(true));
        assert_eq!(parse_real("1e999"), Err(true));
        assert_eq!(parse_real("abc"), Err(false));
    }

    #[test]
    fn phone_match_normalization() {
        assert_eq!(PhoneMatch::NotApplicable.normalized(), Match::N);
        assert_eq!(PhoneMatch::Y.normalized(), Match::Y);
    }
}
