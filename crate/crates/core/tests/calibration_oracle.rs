mod common;

use common::random_audio_set;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sre_core::backend::{calibration_objective, fit_calibration, fit_fusion, fuse, logistic_objective, train_logistic};
use sre_core::metrics::{default_points, evaluate, PartitionSchema};
use sre_core::trial_data::Track;

/// Scores that are exact LLRs: N(+m, 2m) for targets, N(-m, 2m) otherwise.
fn calibrated_scores(n: usize, m: f64, seed: u64) -> Vec<(f64, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tar = Normal::new(m, (2.0 * m).sqrt()).unwrap();
    let non = Normal::new(-m, (2.0 * m).sqrt()).unwrap();
    (0..n)
        .map(|i| {
            let t = i % 2 == 0;
            (if t { tar.sample(&mut rng) } else { non.sample(&mut rng) }, t)
        })
        .collect()
}

fn central_gradient(f: impl Fn(f64, f64) -> f64, a: f64, b: f64, h: f64) -> (f64, f64) {
    (
        (f(a + h, b) - f(a - h, b)) / (2.0 * h),
        (f(a, b + h) - f(a, b - h)) / (2.0 * h),
    )
}

#[test]
fn recovers_identity_on_calibrated_scores() {
    let scores = calibrated_scores(100_000, 2.0, 1);
    for prior in [0.5, 0.05] {
        let map = fit_calibration(&scores, prior).unwrap();
        assert!(map.converged && !map.constrained);
        assert!((map.scale - 1.0).abs() < 0.05, "scale {}", map.scale);
        assert!(map.offset.abs() < 0.05, "offset {}", map.offset);
    }
}

#[test]
fn optimum_has_zero_finite_difference_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..5 {
        let m = rng.random_range(0.5..4.0);
        let shift = rng.random_range(-3.0..3.0);
        let stretch = rng.random_range(0.3..3.0);
        let raw: Vec<(f64, bool)> = calibrated_scores(5_000, m, case)
            .into_iter()
            .map(|(s, l)| (stretch * s + shift, l))
            .collect();
        let prior = rng.random_range(0.01..0.5);
        let map = fit_calibration(&raw, prior).unwrap();
        let f = |a: f64, b: f64| calibration_objective(&raw, prior, a, b).unwrap();
        let (ga, gb) = central_gradient(f, map.scale, map.offset, 1e-5);
        assert!(ga.abs() < 1e-6 && gb.abs() < 1e-6, "case {case}: ({ga}, {gb})");
        // the map undoes the distortion
        assert!((map.scale * stretch - 1.0).abs() < 0.1);
    }
}

#[test]
fn uninformative_scores_get_near_zero_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let scores: Vec<(f64, bool)> = (0..50_000)
        .map(|_| (rng.random_range(-5.0..5.0), rng.random_bool(0.3)))
        .collect();
    let map = fit_calibration(&scores, 0.1).unwrap();
    assert!(map.scale.abs() < 0.02, "scale {}", map.scale);
}

#[test]
fn calibration_preserves_min_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let schema = PartitionSchema::for_track(Track::Audio);
    let points = default_points();
    for _ in 0..10 {
        let (key, scores) = random_audio_set(&mut rng, 1500, false);
        let Ok(before) = evaluate(&scores, &key, &schema, &points) else { continue };
        let labeled: Vec<(f64, bool)> = key
            .records()
            .iter()
            .map(|r| (scores.get(&r.id).unwrap(), r.is_target()))
            .collect();
        let map = fit_calibration(&labeled, 0.05).unwrap();
        assert!(map.scale > 0.0);
        let after = evaluate(&map.apply_set(&scores), &key, &schema, &points).unwrap();
        assert_eq!(before.min_c_primary, after.min_c_primary);
    }
}

#[test]
fn separable_data_is_flagged() {
    let scores: Vec<(f64, bool)> = (0..40).map(|i| (i as f64, i >= 20)).collect();
    let map = fit_calibration(&scores, 0.5).unwrap();
    assert!(map.separable);
    assert!(!map.converged);
}

#[test]
fn fusion_of_complementary_systems_beats_each() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let (key, a) = random_audio_set(&mut rng, 2000, false);
    let noise = Normal::new(0.0, 2.0).unwrap();
    let b = sre_core::trial_data::ScoreSet::from_iter(key.records().iter().map(|r| {
        let base = if r.is_target() { 2.0 } else { -2.0 };
        (r.id.clone(), base + noise.sample(&mut rng))
    }));
    let sets = [a, b];
    let model = fit_fusion(&sets, &key, 0.05).unwrap();
    assert!(model.weights.iter().all(|w| *w > 0.0));
    let fused = fuse(&sets, &model.weights, model.offset).unwrap();

    let rows: Vec<Vec<f64>> = key.records().iter().map(|r| sets.iter().map(|s| s.get(&r.id).unwrap()).collect()).collect();
    let labels: Vec<bool> = key.records().iter().map(|r| r.is_target()).collect();
    let fit = train_logistic(&rows, &labels, 0.05).unwrap();
    let fused_obj = logistic_objective(&rows, &labels, 0.05, &fit.weights, fit.offset).unwrap();
    for i in 0..2 {
        let single: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[i]]).collect();
        let f = train_logistic(&single, &labels, 0.05).unwrap();
        assert!(fused_obj < logistic_objective(&single, &labels, 0.05, &f.weights, f.offset).unwrap());
    }
    assert_eq!(fused.len(), key.len());
}
