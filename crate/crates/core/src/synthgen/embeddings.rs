use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::world::{stream, Source, World};
use super::{SynthConfig, SynthError};
use crate::trial_data::{EmbeddingRow, EmbeddingTable};

const SHIFTS: u64 = 3;
const EVAL: u64 = 4;
const TRAIN: u64 = 5;
const DEV: u64 = 6;
const DOMAIN: u64 = 7;
const FACES: u64 = 8;

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, sd: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

fn add(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

/// Fixed shift vector of every (source, language) condition.
struct Shifts {
    n_languages: usize,
    vectors: Vec<Vec<f64>>,
}

impl Shifts {
    fn new(config: &SynthConfig, seed: u64) -> Self {
        let e = &config.embeddings;
        let n_languages = config.languages.len();
        let vectors = (0..2 * n_languages)
            .map(|i| gaussian(&mut stream(seed, SHIFTS, i as u64), e.dim, e.condition_shift_sd))
            .collect();
        Shifts { n_languages, vectors }
    }

    fn get(&self, source: Source, language: usize) -> &[f64] {
        let s = match source {
            Source::Cts => 0,
            Source::Afv => 1,
        };
        &self.vectors[s * self.n_languages + language]
    }
}

pub(crate) fn eval_embeddings(world: &World, config: &SynthConfig) -> Result<EmbeddingTable, SynthError> {
    eval_with_seed(world, config, config.seed)
}

fn eval_with_seed(world: &World, config: &SynthConfig, seed: u64) -> Result<EmbeddingTable, SynthError> {
    let e = &config.embeddings;
    let shifts = Shifts::new(config, seed);
    let mut rows = Vec::with_capacity(world.segments.len());
    for (i, spk) in world.speakers.iter().enumerate() {
        let mut rng = stream(seed, EVAL, i as u64);
        let mu = gaussian(&mut rng, e.dim, e.between_variance.sqrt());
        for seg in world.segments.iter().filter(|s| s.speaker == i) {
            let mut x = gaussian(&mut rng, e.dim, e.within_variance.sqrt());
            add(&mut x, &mu);
            add(&mut x, shifts.get(seg.source, seg.language));
            rows.push(EmbeddingRow {
                segment_id: seg.id.clone(),
                speaker: Some(spk.id.clone()),
                vector: x,
            });
        }
    }
    Ok(EmbeddingTable::new(e.dim, rows)?)
}

/// Embeddings of every enrollment and test segment of the world built
/// from `config`, drawn with `seed`.
pub fn generate_embeddings(config: &SynthConfig, seed: u64) -> Result<EmbeddingTable, SynthError> {
    let world = World::build(config)?;
    eval_with_seed(&world, config, seed)
}

/// Labeled (train, dev) tables. Training speakers are CTS-only and carry a
/// constant domain offset; development speakers share the evaluation
/// conditions.
pub fn generate_training_embeddings(config: &SynthConfig) -> Result<(EmbeddingTable, EmbeddingTable), SynthError> {
    config.validate()?;
    let e = &config.embeddings;
    let seed = config.seed;
    let shifts = Shifts::new(config, seed);
    let n_lang = config.languages.len();
    let domain = gaussian(&mut stream(seed, DOMAIN, 0), e.dim, e.domain_shift_sd);

    let mut train = Vec::with_capacity(e.train_speakers * e.train_segments_per_speaker);
    for i in 0..e.train_speakers {
        let mut rng = stream(seed, TRAIN, i as u64);
        let mut mu = gaussian(&mut rng, e.dim, e.between_variance.sqrt());
        add(&mut mu, &domain);
        for j in 0..e.train_segments_per_speaker {
            let language = rng.random_range(0..n_lang);
            let mut x = gaussian(&mut rng, e.dim, e.within_variance.sqrt());
            add(&mut x, &mu);
            add(&mut x, shifts.get(Source::Cts, language));
            train.push(EmbeddingRow {
                segment_id: format!("trn{i:05}_{j:02}"),
                speaker: Some(format!("trnspk{i:05}")),
                vector: x,
            });
        }
    }

    let mut dev = Vec::with_capacity(e.dev_speakers * e.dev_segments_per_speaker);
    for i in 0..e.dev_speakers {
        let mut rng = stream(seed, DEV, i as u64);
        let mu = gaussian(&mut rng, e.dim, e.between_variance.sqrt());
        let primary = i % n_lang;
        for j in 0..e.dev_segments_per_speaker {
            let source = if j % 2 == 0 { Source::Cts } else { Source::Afv };
            let language = if n_lang > 1 && j % 4 >= 2 { (primary + 1) % n_lang } else { primary };
            let mut x = gaussian(&mut rng, e.dim, e.within_variance.sqrt());
            add(&mut x, &mu);
            add(&mut x, shifts.get(source, language));
            dev.push(EmbeddingRow {
                segment_id: format!("dev{i:04}_{j:02}"),
                speaker: Some(format!("devspk{i:04}")),
                vector: x,
            });
        }
    }
    Ok((EmbeddingTable::new(e.dim, train)?, EmbeddingTable::new(e.dim, dev)?))
}

/// Face encodings for the visual tracks.
#[derive(Debug, Clone)]
pub struct FaceData {
    /// One row per frame; the speaker column holds the video id.
    pub frames: EmbeddingTable,
    /// One row per enrollment image, labeled by speaker.
    pub images: EmbeddingTable,
}

pub(crate) fn face_encodings(world: &World, config: &SynthConfig) -> Result<FaceData, SynthError> {
    faces_with_seed(world, config, config.seed)
}

fn faces_with_seed(world: &World, config: &SynthConfig, seed: u64) -> Result<FaceData, SynthError> {
    let f = &config.faces;
    let mut frames = Vec::new();
    let mut images = Vec::new();
    for (i, spk) in world.speakers.iter().enumerate() {
        let mut rng = stream(seed, FACES, i as u64);
        let identity = gaussian(&mut rng, f.dim, f.between_variance.sqrt());
        let noise_sd = f.within_variance.sqrt();
        for m in world.models.iter().filter(|m| m.speaker == i) {
            if let Some(img) = &m.image {
                let mut x = gaussian(&mut rng, f.dim, noise_sd);
                add(&mut x, &identity);
                images.push(EmbeddingRow {
                    segment_id: img.clone(),
                    speaker: Some(spk.id.clone()),
                    vector: x,
                });
            }
        }
        for seg in world.segments.iter().filter(|s| s.speaker == i && s.source == Source::Afv) {
            let n = rng.random_range(f.frames_min..=f.frames_max);
            for j in 0..n {
                let mut x = gaussian(&mut rng, f.dim, noise_sd);
                add(&mut x, &identity);
                frames.push(EmbeddingRow {
                    segment_id: format!("{}_f{j:02}", seg.id),
                    speaker: Some(seg.id.clone()),
                    vector: x,
                });
            }
        }
    }
    Ok(FaceData {
        frames: EmbeddingTable::new(f.dim, frames)?,
        images: EmbeddingTable::new(f.dim, images)?,
    })
}

/// Frame and enrollment-image encodings of the world built from `config`,
/// drawn with `seed`.
pub fn generate_face_encodings(config: &SynthConfig, seed: u64) -> Result<FaceData, SynthError> {
    let world = World::build(config)?;
    faces_with_seed(&world, config, seed)
}
