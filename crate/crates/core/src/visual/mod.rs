//! Visual-track scoring from per-frame face encodings.
//!
//! The frames of each test video are clustered with k-means++ into a few
//! pseudo-encodings; a trial scores the maximum cosine similarity between
//! the enrollment encoding and those centroids. Frame encodings are read in
//! the embedding table format with the video id in the speaker column.

mod kmeans;

pub use kmeans::{inertia, kmeanspp_cluster, PseudoEncodings};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::cosine_score;
use crate::trial_data::{DataError, EmbeddingTable, Enrollment, ScoreSet, TrialKey};

/// Score given to videos that have no frame encodings.
pub const EMPTY_VIDEO_SCORE: f64 = -1.0;

#[derive(Debug, thiserror::Error)]
pub enum VisualError {
    #[error("no encodings to cluster")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {n} available encodings")]
    TooManyClusters { k: usize, n: usize },
    #[error("encodings differ in dimension: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite encoding value")]
    NonFinite,
    #[error("zero enrollment encoding")]
    ZeroVector,
    #[error("frame table row {0:?} has no video id")]
    MissingVideoId(String),
    #[error("no enrollment segments for model {0:?}")]
    MissingEnrollment(String),
    #[error("missing enrollment encoding for segment {0:?}")]
    MissingEncoding(String),
    #[error("key track must be visual or audio-visual")]
    WrongTrack,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Face encodings of the frames of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEncodings {
    video_id: String,
    encodings: Vec<Vec<f64>>,
}

impl FrameEncodings {
    pub fn new(video_id: impl Into<String>, encodings: Vec<Vec<f64>>) -> Result<Self, VisualError> {
        let first = encodings.first().ok_or(VisualError::Empty)?;
        let d = first.len();
        if d == 0 {
            return Err(VisualError::Empty);
        }
        for e in &encodings {
            if e.len() != d {
                return Err(VisualError::DimensionMismatch { expected: d, got: e.len() });
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(VisualError::NonFinite);
            }
        }
        Ok(FrameEncodings {
            video_id: video_id.into(),
            encodings,
        })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn encodings(&self) -> &[Vec<f64>] {
        &self.encodings
    }

    pub fn dim(&self) -> usize {
        self.encodings[0].len()
    }
}

/// Groups the rows of a frame table by video id (speaker column), in order
/// of first appearance.
pub fn frames_by_video(table: &EmbeddingTable) -> Result<Vec<FrameEncodings>, VisualError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for row in table.rows() {
        let video = row
            .speaker
            .as_ref()
            .ok_or_else(|| VisualError::MissingVideoId(row.segment_id.clone()))?;
        let entry = groups.entry(video.clone()).or_default();
        if entry.is_empty() {
            order.push(video.clone());
        }
        entry.push(row.vector.clone());
    }
    order
        .into_iter()
        .map(|v| {
            let enc = groups.remove(&v).expect("grouped");
            FrameEncodings::new(v, enc)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisualConfig {
    /// Pseudo-encodings per video; clamped to the frame count.
    pub k: usize,
    pub n_restarts: usize,
    pub seed: u64,
}

impl Default for VisualConfig {
    fn default() -> Self {
        VisualConfig {
            k: 5,
            n_restarts: 10,
            seed: 0,
        }
    }
}

fn max_cosine(enroll: &[f64], centroids: &[Vec<f64>]) -> Result<f64, VisualError> {
    if enroll.iter().all(|v| *v == 0.0) {
        return Err(VisualError::ZeroVector);
    }
    let mut best = f64::NEG_INFINITY;
    for c in centroids {
        if c.len() != enroll.len() {
            return Err(VisualError::DimensionMismatch {
                expected: enroll.len(),
                got: c.len(),
            });
        }
        // A zero centroid has no direction and cannot match anything.
        if let Ok(s) = cosine_score(enroll, c) {
            best = best.max(s);
        }
    }
    Ok(if best.is_finite() { best } else { EMPTY_VIDEO_SCORE })
}

/// Maximum cosine similarity between `enroll` and the k-means++
/// pseudo-encodings of `frames`; `k` is clamped to the frame count.
pub fn video_trial_score(enroll: &[f64], frames: &FrameEncodings, k: usize, seed: u64) -> Result<f64, VisualError> {
    if enroll.len() != frames.dim() {
        return Err(VisualError::DimensionMismatch {
            expected: frames.dim(),
            got: enroll.len(),
        });
    }
    let k = k.clamp(1, frames.encodings.len());
    let pseudo = kmeanspp_cluster(&frames.encodings, k, seed, VisualConfig::default().n_restarts)?;
    max_cosine(enroll, &pseudo.centroids)
}

/// Scores of a visual key plus the videos that had no frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualScores {
    pub scores: ScoreSet,
    /// Test videos without any frame encoding; their trials score
    /// [`EMPTY_VIDEO_SCORE`].
    pub empty_videos: Vec<String>,
}

/// Scores every trial of `key`. A model's enrollment encoding is the mean
/// of the encodings of its enrollment segments.
pub fn score_visual_trials(
    key: &TrialKey,
    enrollment: &Enrollment,
    enroll_encodings: &EmbeddingTable,
    frames: &EmbeddingTable,
    config: &VisualConfig,
) -> Result<VisualScores, VisualError> {
    if key.track() == crate::trial_data::Track::Audio {
        return Err(VisualError::WrongTrack);
    }
    if config.k == 0 {
        return Err(VisualError::ZeroK);
    }
    if enroll_encodings.dim() != frames.dim() {
        return Err(VisualError::DimensionMismatch {
            expected: frames.dim(),
            got: enroll_encodings.dim(),
        });
    }
    let mut models = key.model_ids();
    models.dedup();
    let mut enroll_vectors: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for m in models {
        let segs = enrollment
            .segments(m)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| VisualError::MissingEnrollment(m.to_string()))?;
        let mut mean = vec![0.0; frames.dim()];
        for s in segs {
            let row = enroll_encodings
                .get(s)
                .ok_or_else(|| VisualError::MissingEncoding(s.clone()))?;
            for (a, b) in mean.iter_mut().zip(&row.vector) {
                *a += b;
            }
        }
        mean.iter_mut().for_each(|v| *v /= segs.len() as f64);
        enroll_vectors.insert(m, mean);
    }

    let videos = frames_by_video(frames)?;
    let wanted: std::collections::BTreeSet<&str> = key.records().iter().map(|r| r.id.segment_id.as_str()).collect();
    let centroids: BTreeMap<&str, Vec<Vec<f64>>> = videos
        .par_iter()
        .filter(|v| wanted.contains(v.video_id()))
        .map(|v| {
            let k = config.k.min(v.encodings.len());
            let p = kmeanspp_cluster(&v.encodings, k, config.seed, config.n_restarts)?;
            Ok((v.video_id(), p.centroids))
        })
        .collect::<Result<_, VisualError>>()?;

    let mut empty_videos: Vec<String> = wanted
        .iter()
        .filter(|v| !centroids.contains_key(*v))
        .map(|v| v.to_string())
        .collect();
    empty_videos.sort();

    let scored = key
        .records()
        .par_iter()
        .map(|r| {
            let value = match centroids.get(r.id.segment_id.as_str()) {
                None => EMPTY_VIDEO_SCORE,
                Some(c) => max_cosine(&enroll_vectors[r.id.model_id.as_str()], c)?,
            };
            Ok((r.id.clone(), value))
        })
        .collect::<Result<Vec<_>, VisualError>>()?;
    Ok(VisualScores {
        scores: scored.into_iter().collect(),
        empty_videos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_frames_score_one() {
        let f = FrameEncodings::new("v", vec![vec![0.3, 0.4]; 6]).unwrap();
        let s = video_trial_score(&[0.3, 0.4], &f, 5, 1).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_enrollment_rejected() {
        let f = FrameEncodings::new("v", vec![vec![1.0, 0.0]]).unwrap();
        assert!(matches!(video_trial_score(&[0.0, 0.0], &f, 1, 0), Err(VisualError::ZeroVector)));
    }

    #[test]
    fn frame_validation() {
        assert!(FrameEncodings::new("v", vec![]).is_err());
        assert!(FrameEncodings::new("v", vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
