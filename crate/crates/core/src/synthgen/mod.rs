//! Seeded synthetic evaluation data.
//!
//! A synthetic "world" of speakers, enrollment models and test segments is
//! built from a [`SynthConfig`]; trial keys, Gaussian system scores,
//! embeddings (eval, out-of-domain train, in-domain dev) and face
//! encodings are derived from it. Everything is a pure function of the
//! config and its seed; randomness is split into independent ChaCha
//! streams per speaker or per model so generation order does not matter.

mod config;
mod embeddings;
mod scores;
mod world;

pub use config::{EmbeddingModel, FaceModel, ScoreModel, SynthConfig};
pub use embeddings::{generate_embeddings, generate_face_encodings, generate_training_embeddings, FaceData};
pub use scores::generate_scores;
pub use world::{generate_enrollment, generate_key, required_cells, Source, World};

use crate::trial_data::{EmbeddingTable, Enrollment, ScoreSet, TrialKey};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config leaves required partition cell empty: {0}")]
    EmptyCell(String),
    #[error(transparent)]
    Data(#[from] crate::trial_data::DataError),
}

/// Every artifact generated for one config.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub key: TrialKey,
    pub scores: ScoreSet,
    pub enrollment: Enrollment,
    /// Enrollment and test segment embeddings, labeled by speaker.
    pub embeddings: EmbeddingTable,
    /// Out-of-domain labeled training embeddings.
    pub train: EmbeddingTable,
    /// In-domain labeled development embeddings.
    pub dev: EmbeddingTable,
    /// Frame and enrollment-image encodings; present for visual and
    /// audio-visual tracks.
    pub faces: Option<FaceData>,
}

/// Generates the full corpus for `config`.
pub fn generate(config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    config.validate()?;
    let world = World::build(config)?;
    let key = world.audited_key(config)?;
    let scores = generate_scores(&key, config, config.seed)?;
    let enrollment = world.enrollment(config.track);
    let embeddings = embeddings::eval_embeddings(&world, config)?;
    let (train, dev) = generate_training_embeddings(config)?;
    let faces = match config.track {
        crate::trial_data::Track::Audio => None,
        _ => Some(embeddings::face_encodings(&world, config)?),
    };
    Ok(SynthCorpus {
        key,
        scores,
        enrollment,
        embeddings,
        train,
        dev,
        faces,
    })
}
