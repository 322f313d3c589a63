use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lda::LdaData;
use super::plda::PldaData;
use super::whiten::WhitenerData;
use super::{
    adaptive_snorm, cosine_score, fit_lda, fit_plda, fit_whitener, length_norm, map_adapt, BackendError, EnrollStats,
    LdaProjection, PldaModel, PldaScorer, Whitener,
};
use crate::trial_data::{EmbeddingRow, EmbeddingTable, Enrollment, ScoreSet, TrialKey};

/// Version written into serialized backend models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scoring {
    Plda,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    /// Requested LDA dimension; clamped to `min(d, speakers - 1)`.
    pub lda_dim: usize,
    pub scoring: Scoring,
    /// Weight of the in-domain PLDA estimate in MAP adaptation.
    pub map_alpha: f64,
    /// Adaptive s-norm cohort size; `None` disables normalization.
    pub snorm_top_k: Option<usize>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            lda_dim: 250,
            scoring: Scoring::Plda,
            map_alpha: 0.5,
            snorm_top_k: None,
        }
    }
}

/// Trained scoring chain: whitening, length normalization, LDA and the
/// scoring model.
#[derive(Debug, Clone)]
pub struct BackendModel {
    pub config: BackendConfig,
    pub whitener: Whitener,
    pub lda: LdaProjection,
    pub plda: Option<PldaModel>,
    /// Projected cohort embeddings for s-norm.
    pub cohort: Vec<Vec<f64>>,
}

fn preprocess(whitener: &Whitener, x: &[f64]) -> Result<Vec<f64>, BackendError> {
    length_norm(&whitener.apply(x)?)
}

fn map_table(
    table: &EmbeddingTable,
    f: impl Fn(&[f64]) -> Result<Vec<f64>, BackendError>,
) -> Result<EmbeddingTable, BackendError> {
    let rows = table
        .rows()
        .iter()
        .map(|r| {
            Ok(EmbeddingRow {
                segment_id: r.segment_id.clone(),
                speaker: r.speaker.clone(),
                vector: f(&r.vector)?,
            })
        })
        .collect::<Result<Vec<_>, BackendError>>()?;
    let dim = rows.first().map_or(table.dim(), |r| r.vector.len());
    Ok(EmbeddingTable::new(dim, rows)?)
}

/// Trains the chain on the labeled `train` table. Whitening statistics and
/// the s-norm cohort come from `in_domain` when given, which is also used
/// for MAP adaptation of the PLDA model (it must then be labeled unless
/// `map_alpha` is 0).
pub fn fit_backend(
    train: &EmbeddingTable,
    in_domain: Option<&EmbeddingTable>,
    config: &BackendConfig,
) -> Result<BackendModel, BackendError> {
    if !(0.0..=1.0).contains(&config.map_alpha) {
        return Err(BackendError::Precondition(format!(
            "map_alpha must lie in [0, 1], got {}",
            config.map_alpha
        )));
    }
    if let Some(k) = config.snorm_top_k {
        if k < 2 {
            return Err(BackendError::Precondition(format!("s-norm top_k must be at least 2, got {k}")));
        }
    }
    if config.lda_dim == 0 {
        return Err(BackendError::Precondition("lda_dim must be positive".into()));
    }
    if let Some(dev) = in_domain {
        if dev.dim() != train.dim() {
            return Err(BackendError::DimensionMismatch {
                expected: train.dim(),
                got: dev.dim(),
            });
        }
    }
    let whitener = fit_whitener(in_domain.unwrap_or(train))?;
    let train_p = map_table(train, |x| preprocess(&whitener, x))?;
    let n_speakers = train_p.speaker_groups().ok_or(BackendError::MissingLabels)?.len();
    let lda_dim = config.lda_dim.min(train.dim()).min(n_speakers.saturating_sub(1)).max(1);
    let lda = fit_lda(&train_p, lda_dim)?;
    let project = |x: &[f64]| -> Result<Vec<f64>, BackendError> { lda.apply(&preprocess(&whitener, x)?) };
    let train_l = lda.apply_table(&train_p)?;
    let dev_l = in_domain.map(|t| map_table(t, project)).transpose()?;

    let plda = match config.scoring {
        Scoring::Cosine => None,
        Scoring::Plda => {
            let base = fit_plda(&train_l)?;
            match &dev_l {
                Some(dev) if config.map_alpha > 0.0 => Some(map_adapt(&base, dev, config.map_alpha)?),
                _ => Some(base),
            }
        }
    };
    let cohort = match config.snorm_top_k {
        None => Vec::new(),
        Some(_) => dev_l
            .as_ref()
            .unwrap_or(&train_l)
            .rows()
            .iter()
            .map(|r| r.vector.clone())
            .collect(),
    };
    Ok(BackendModel {
        config: config.clone(),
        whitener,
        lda,
        plda,
        cohort,
    })
}

/// Enrollment-side representation used by the scorer.
enum Side {
    Plda(EnrollStats),
    Cosine(Vec<f64>),
}

enum Scorer {
    Plda(PldaScorer),
    Cosine,
}

impl Scorer {
    fn side(&self, vectors: &[&[f64]]) -> Result<Side, BackendError> {
        match self {
            Scorer::Plda(s) => Ok(Side::Plda(s.enroll(vectors)?)),
            Scorer::Cosine => {
                let d = vectors[0].len();
                let mut mean = vec![0.0; d];
                for v in vectors {
                    for (m, x) in mean.iter_mut().zip(v.iter()) {
                        *m += x;
                    }
                }
                Ok(Side::Cosine(mean.iter().map(|m| m / vectors.len() as f64).collect()))
            }
        }
    }

    fn score(&self, side: &Side, test: &[f64]) -> Result<f64, BackendError> {
        match (self, side) {
            (Scorer::Plda(s), Side::Plda(e)) => s.score(e, test),
            (Scorer::Cosine, Side::Cosine(m)) => cosine_score(m, test),
            _ => unreachable!("scorer and enrollment kinds always match"),
        }
    }
}

impl BackendModel {
    /// Whitens, length-normalizes and projects one raw embedding.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, BackendError> {
        self.lda.apply(&preprocess(&self.whitener, x)?)
    }

    pub fn input_dim(&self) -> usize {
        self.whitener.dim()
    }

    /// Scores every trial of `key`. Model enrollment segments come from
    /// `enrollment`; enrollment and test embeddings are looked up in
    /// `embeddings`.
    pub fn score_trials(
        &self,
        key: &TrialKey,
        enrollment: &Enrollment,
        embeddings: &EmbeddingTable,
    ) -> Result<ScoreSet, BackendError> {
        if embeddings.dim() != self.input_dim() {
            return Err(BackendError::DimensionMismatch {
                expected: self.input_dim(),
                got: embeddings.dim(),
            });
        }
        let mut projected: HashMap<String, Vec<f64>> = HashMap::new();
        let mut project = |seg: &str| -> Result<(), BackendError> {
            if projected.contains_key(seg) {
                return Ok(());
            }
            let row = embeddings
                .get(seg)
                .ok_or_else(|| BackendError::MissingEmbedding(seg.to_string()))?;
            projected.insert(seg.to_string(), self.transform(&row.vector)?);
            Ok(())
        };
        let mut models: Vec<&str> = key.model_ids();
        models.dedup();
        let mut max_enroll = 1;
        for m in &models {
            let segs = enrollment
                .segments(m)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| BackendError::MissingEnrollment(m.to_string()))?;
            max_enroll = max_enroll.max(segs.len());
            for s in segs {
                project(s)?;
            }
        }
        for r in key.records() {
            project(&r.id.segment_id)?;
        }

        let scorer = match &self.plda {
            Some(p) => Scorer::Plda(PldaScorer::new(p.clone(), max_enroll)?),
            None => Scorer::Cosine,
        };
        let sides: HashMap<&str, Side> = models
            .par_iter()
            .map(|m| {
                let segs = enrollment.segments(m).expect("checked above");
                let vecs: Vec<&[f64]> = segs.iter().map(|s| projected[s.as_str()].as_slice()).collect();
                Ok((*m, scorer.side(&vecs)?))
            })
            .collect::<Result<_, BackendError>>()?;

        let norm = match self.config.snorm_top_k {
            None => None,
            Some(k) => {
                if self.cohort.len() < 2 {
                    return Err(BackendError::Precondition("s-norm cohort has fewer than 2 embeddings".into()));
                }
                let top_k = k.min(self.cohort.len());
                let enroll_cohort: HashMap<&str, Vec<f64>> = sides
                    .par_iter()
                    .map(|(m, side)| {
                        let s = self
                            .cohort
                            .iter()
                            .map(|c| scorer.score(side, c))
                            .collect::<Result<Vec<_>, _>>()?;
                        Ok((*m, s))
                    })
                    .collect::<Result<_, BackendError>>()?;
                let mut tests: Vec<&str> = key.records().iter().map(|r| r.id.segment_id.as_str()).collect();
                tests.sort_unstable();
                tests.dedup();
                let test_cohort: HashMap<&str, Vec<f64>> = tests
                    .par_iter()
                    .map(|t| {
                        let side = scorer.side(&[projected[*t].as_slice()])?;
                        let s = self
                            .cohort
                            .iter()
                            .map(|c| scorer.score(&side, c))
                            .collect::<Result<Vec<_>, _>>()?;
                        Ok((*t, s))
                    })
                    .collect::<Result<_, BackendError>>()?;
                Some((top_k, enroll_cohort, test_cohort))
            }
        };

        let scored: Vec<(crate::trial_data::TrialId, f64)> = key
            .records()
            .par_iter()
            .map(|r| {
                let side = &sides[r.id.model_id.as_str()];
                let test = projected[r.id.segment_id.as_str()].as_slice();
                let raw = scorer.score(side, test)?;
                let value = match &norm {
                    None => raw,
                    Some((k, ec, tc)) => {
                        adaptive_snorm(raw, &ec[r.id.model_id.as_str()], &tc[r.id.segment_id.as_str()], *k)?
                    }
                };
                Ok((r.id.clone(), value))
            })
            .collect::<Result<_, BackendError>>()?;
        let mut out = ScoreSet::new();
        for (id, v) in scored {
            out.insert(id, v)
                .map_err(|_| BackendError::Degenerate("non-finite trial score".into()))?;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let data = BackendModelData {
            format_version: MODEL_FORMAT_VERSION,
            config: self.config.clone(),
            whitener: (&self.whitener).into(),
            lda: (&self.lda).into(),
            plda: self.plda.as_ref().map(Into::into),
            cohort: self.cohort.clone(),
        };
        serde_json::to_string_pretty(&data).expect("model data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let data: BackendModelData = serde_json::from_str(text).map_err(|e| BackendError::Model(e.to_string()))?;
        if data.format_version != MODEL_FORMAT_VERSION {
            return Err(BackendError::Model(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                data.format_version
            )));
        }
        let whitener = Whitener::try_from(&data.whitener)?;
        let lda = LdaProjection::try_from(&data.lda)?;
        if lda.in_dim() != whitener.dim() {
            return Err(BackendError::Model("LDA input dimension differs from whitener".into()));
        }
        let plda = data.plda.as_ref().map(PldaModel::try_from).transpose()?;
        if plda.as_ref().is_some_and(|p| p.dim() != lda.out_dim()) {
            return Err(BackendError::Model("PLDA dimension differs from LDA output".into()));
        }
        if (plda.is_some()) != (data.config.scoring == Scoring::Plda) {
            return Err(BackendError::Model("scoring mode and stored PLDA model disagree".into()));
        }
        if data.cohort.iter().any(|c| c.len() != lda.out_dim()) {
            return Err(BackendError::Model("cohort vector dimension differs from LDA output".into()));
        }
        Ok(BackendModel {
            config: data.config,
            whitener,
            lda,
            plda,
            cohort: data.cohort,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BackendModelData {
    format_version: u32,
    config: BackendConfig,
    whitener: WhitenerData,
    lda: LdaData,
    plda: Option<PldaData>,
    cohort: Vec<Vec<f64>>,
}
