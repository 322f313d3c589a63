use sre_core::backend::{
    default_effective_prior, fit_backend, fit_calibration, BackendConfig, BackendModel, Scoring,
};
use sre_core::metrics::{default_points, evaluate, PartitionSchema};
use sre_core::synthgen::{generate, SynthConfig};

#[test]
fn synthetic_chain_separates_speakers() {
    let config = SynthConfig::default();
    let corpus = generate(&config).unwrap();
    let schema = PartitionSchema::for_track(corpus.key.track());
    let points = default_points();

    let model = fit_backend(&corpus.train, Some(&corpus.dev), &BackendConfig::default()).unwrap();
    let scores = model.score_trials(&corpus.key, &corpus.enrollment, &corpus.embeddings).unwrap();
    assert_eq!(scores.len(), corpus.key.len());
    let report = evaluate(&scores, &corpus.key, &schema, &points).unwrap();
    assert!(report.min_c_primary < 0.5, "min cost {}", report.min_c_primary);

    // reload from JSON scores identically
    let reloaded = BackendModel::from_json(&model.to_json()).unwrap();
    let again = reloaded.score_trials(&corpus.key, &corpus.enrollment, &corpus.embeddings).unwrap();
    assert_eq!(scores, again);

    // calibration keeps the minimum
    let labeled: Vec<(f64, bool)> = corpus
        .key
        .records()
        .iter()
        .map(|r| (scores.get(&r.id).unwrap(), r.is_target()))
        .collect();
    let cal = fit_calibration(&labeled, default_effective_prior(&points)).unwrap();
    assert!(cal.scale > 0.0);
    let calibrated = cal.apply_set(&scores);
    let after = evaluate(&calibrated, &corpus.key, &schema, &points).unwrap();
    assert_eq!(after.min_c_primary, report.min_c_primary);
    assert!(after.actual_c_primary <= report.actual_c_primary + 1e-9 || report.actual_c_primary < 0.2);
}

#[test]
fn cosine_and_snorm_variants_run() {
    let config = SynthConfig {
        n_speakers: 20,
        male_fraction: 0.25,
        ..SynthConfig::default()
    };
    let corpus = generate(&config).unwrap();
    let schema = PartitionSchema::for_track(corpus.key.track());
    for backend in [
        BackendConfig {
            scoring: Scoring::Cosine,
            ..BackendConfig::default()
        },
        BackendConfig {
            snorm_top_k: Some(50),
            ..BackendConfig::default()
        },
    ] {
        let model = fit_backend(&corpus.train, Some(&corpus.dev), &backend).unwrap();
        let scores = model.score_trials(&corpus.key, &corpus.enrollment, &corpus.embeddings).unwrap();
        let report = evaluate(&scores, &corpus.key, &schema, &default_points()).unwrap();
        assert!(report.min_c_primary < 0.7, "{backend:?}: {}", report.min_c_primary);
    }
}
