use std::collections::BTreeSet;
use std::io::Cursor;

use sre_core::backend::fit_plda;
use sre_core::metrics::{default_points, evaluate, PartitionSchema};
use sre_core::synthgen::{generate, generate_scores, generate_training_embeddings, EmbeddingModel, ScoreModel, SynthConfig};
use sre_core::trial_data::{
    read_embeddings, read_enrollment, read_key, read_scores, write_embeddings, write_enrollment, write_key,
    write_scores, Match, Track,
};

fn flat_scores(target_mean: f64, nontarget_mean: f64) -> ScoreModel {
    ScoreModel {
        target_mean,
        target_sd: 1.0,
        nontarget_mean,
        nontarget_sd: 1.0,
        source_mismatch_penalty: 0.0,
        language_mismatch_penalty: 0.0,
        phone_mismatch_penalty: 0.0,
        nontarget_source_shift: 0.0,
        nontarget_language_shift: 0.0,
    }
}

fn audio() -> PartitionSchema {
    PartitionSchema::for_track(Track::Audio)
}

#[test]
fn separated_scores_give_low_cost() {
    let config = SynthConfig {
        scores: flat_scores(4.0, -4.0),
        ..SynthConfig::default()
    };
    let corpus = generate(&config).unwrap();
    assert!(corpus.key.len() >= 10_000);
    let r = evaluate(&corpus.scores, &corpus.key, &audio(), &default_points()).unwrap();
    assert!(r.min_c_primary < 0.05, "{}", r.min_c_primary);
}

#[test]
fn identical_distributions_give_chance_cost() {
    let config = SynthConfig {
        scores: flat_scores(0.0, 0.0),
        ..SynthConfig::default()
    };
    let corpus = generate(&config).unwrap();
    let r = evaluate(&corpus.scores, &corpus.key, &audio(), &default_points()).unwrap();
    for p in &r.per_point {
        assert!(p.min_c_norm <= 1.0);
        assert!(p.min_c_norm >= 0.9, "{}", p.min_c_norm);
    }
}

#[test]
fn default_config_fills_every_cell() {
    let corpus = generate(&SynthConfig::default()).unwrap();
    let r = evaluate(&corpus.scores, &corpus.key, &audio(), &default_points()).unwrap();
    assert!(r.skipped_cells.is_empty());
    let mut seen = BTreeSet::new();
    for rec in corpus.key.records().iter().filter(|r| r.is_target()) {
        seen.insert((rec.gender, rec.source_match, rec.language_match));
    }
    assert_eq!(seen.len(), 8);
}

#[test]
fn language_penalty_raises_cross_language_misses() {
    let base = SynthConfig::default();
    let key = generate(&base).unwrap().key;
    let theta = default_points()[0].threshold();
    let mut last = -1.0;
    for penalty in [0.0, 1.0, 2.0, 4.0, 8.0] {
        let config = SynthConfig {
            scores: ScoreModel {
                language_mismatch_penalty: penalty,
                ..ScoreModel::default()
            },
            ..base.clone()
        };
        let scores = generate_scores(&key, &config, 3).unwrap();
        let cross: Vec<f64> = key
            .records()
            .iter()
            .filter(|r| r.is_target() && r.language_match == Match::N)
            .map(|r| scores.get(&r.id).unwrap())
            .collect();
        let miss = cross.iter().filter(|s| **s <= theta).count() as f64 / cross.len() as f64;
        assert!(miss >= last);
        last = miss;
    }
    assert!(last > 0.5);
}

#[test]
fn zero_between_variance_is_recovered() {
    let config = SynthConfig {
        embeddings: EmbeddingModel {
            between_variance: 0.0,
            train_speakers: 500,
            ..EmbeddingModel::default()
        },
        ..SynthConfig::default()
    };
    let (train, _) = generate_training_embeddings(&config).unwrap();
    let model = fit_plda(&train).unwrap();
    assert!(model.between().norm() < 0.05 * model.within().norm());
}

#[test]
fn artifacts_round_trip_through_parsers() {
    for track in [Track::Audio, Track::AudioVisual, Track::Visual] {
        let corpus = generate(&SynthConfig {
            track,
            n_speakers: 12,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_key(&corpus.key, &mut buf).unwrap();
        assert_eq!(read_key(Cursor::new(&buf)).unwrap(), corpus.key);
        buf.clear();
        write_scores(&corpus.scores, &mut buf).unwrap();
        assert_eq!(read_scores(Cursor::new(&buf)).unwrap(), corpus.scores);
        buf.clear();
        write_enrollment(&corpus.enrollment, &mut buf).unwrap();
        assert_eq!(read_enrollment(Cursor::new(&buf)).unwrap(), corpus.enrollment);
        for table in [&corpus.embeddings, &corpus.train, &corpus.dev] {
            buf.clear();
            write_embeddings(table, &mut buf).unwrap();
            assert_eq!(&read_embeddings(Cursor::new(&buf)).unwrap(), table);
        }
        assert_eq!(corpus.faces.is_some(), track != Track::Audio);
        for model in corpus.key.model_ids() {
            assert!(corpus.enrollment.segments(model).is_some(), "{model}");
        }
    }
}

#[test]
fn same_seed_same_corpus() {
    let a = generate(&SynthConfig::default()).unwrap();
    let b = generate(&SynthConfig::default()).unwrap();
    assert_eq!(a.key, b.key);
    assert_eq!(a.scores, b.scores);
    assert_eq!(a.embeddings, b.embeddings);
    let c = generate(&SynthConfig {
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    assert_ne!(a.scores, c.scores);
}
