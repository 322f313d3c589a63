mod common;

use common::{brute_force_min, cells, per_cell_actual, random_audio_set, record};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sre_core::metrics::{default_points, equalization_weights, evaluate, OperatingPoint, PartitionSchema};
use sre_core::trial_data::{Gender, Match, PhoneMatch, ScoreSet, Track, TrialId, TrialKey, TrialRecord};

fn audio() -> PartitionSchema {
    PartitionSchema::for_track(Track::Audio)
}

fn single_cell(targets: &[f64], nontargets: &[f64]) -> (TrialKey, ScoreSet) {
    let mut records = Vec::new();
    let mut scores = ScoreSet::new();
    for (i, (&s, target)) in targets
        .iter()
        .map(|s| (s, true))
        .chain(nontargets.iter().map(|s| (s, false)))
        .enumerate()
    {
        let phone = if target { PhoneMatch::N } else { PhoneMatch::NotApplicable };
        let r = record("m0", &format!("t{i:04}"), target, Gender::Male, Match::Y, Match::Y, phone);
        scores.insert(r.id.clone(), s).unwrap();
        records.push(r);
    }
    (TrialKey::new(Track::Audio, records).unwrap(), scores)
}

#[test]
fn worked_example() {
    let (key, scores) = single_cell(&[5.0, 3.5], &[4.0, 0.0]);
    let points = default_points();
    assert_eq!(points[0].beta(), 99.0);
    assert_eq!(points[1].beta(), 19.0);
    assert!((points[0].threshold() - 4.59512).abs() < 5e-6);
    assert!((points[1].threshold() - 2.94444).abs() < 5e-6);
    let report = evaluate(&scores, &key, &audio(), &points).unwrap();
    assert_eq!(report.actual_c_primary, 5.0);
    assert_eq!(report.min_c_primary, 0.5);
}

#[test]
fn matches_brute_force_on_random_sets() {
    let points = default_points();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for i in 0..30 {
        let (key, scores) = random_audio_set(&mut rng, 600, i % 2 == 1);
        let c = cells(&key, &scores, false);
        let Ok(report) = evaluate(&scores, &key, &audio(), &points) else {
            assert!(c.is_empty());
            continue;
        };
        assert_eq!(report.per_cell.len(), c.len());
        assert_eq!(report.min_c_primary, brute_force_min(&c, &points));
        assert!((report.actual_c_primary - per_cell_actual(&c, &points)).abs() < 1e-12);
        checked += 1;
    }
    assert!(checked >= 25);
}

#[test]
fn three_segment_trials_add_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (key, scores) = random_audio_set(&mut rng, 2000, false);
    let points = default_points();
    let without = evaluate(&scores, &key, &audio(), &points).unwrap();
    let schema = audio().with_three_segment_trials();
    let with = evaluate(&scores, &key, &schema, &points).unwrap();
    assert!(without.n_trials_excluded > 0);
    assert_eq!(with.n_trials_excluded, 0);
    assert_eq!(with.per_cell.len(), cells(&key, &scores, true).len());
    assert!(with.per_cell.len() > without.per_cell.len());
    assert_eq!(with.min_c_primary, brute_force_min(&cells(&key, &scores, true), &points));
}

#[test]
fn single_cell_equals_pooled_cost() {
    let t = [2.5, 1.0, 0.3, 4.2, 3.3, -0.5, 6.0];
    let n = [-3.0, 0.1, -1.5, 2.0, -0.2, 3.1, -4.0, -2.2, 0.9];
    let (key, scores) = single_cell(&t, &n);
    let points = default_points();
    let report = evaluate(&scores, &key, &audio(), &points).unwrap();
    let mut actual = 0.0;
    for p in &points {
        let th = p.beta().ln();
        let pm = t.iter().filter(|s| **s <= th).count() as f64 / t.len() as f64;
        let pf = n.iter().filter(|s| **s > th).count() as f64 / n.len() as f64;
        actual += pm + p.beta() * pf;
    }
    assert_eq!(report.actual_c_primary, actual / points.len() as f64);
}

#[test]
fn weight_mass_is_equal_across_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (key, _) = random_audio_set(&mut rng, 1500, false);
    let w = equalization_weights(&key, &audio()).unwrap();
    let cells = w.cells();
    let mut target_mass = vec![0.0; cells.len()];
    let mut total_nontarget = 0.0;
    for r in key.records() {
        let Some(weight) = w.get(&r.id) else { continue };
        if r.is_target() {
            let g = w.group_of(&key, &r.id).unwrap();
            let i = cells.iter().position(|c| *c == g).unwrap();
            target_mass[i] += weight;
        } else {
            total_nontarget += weight;
        }
    }
    for m in &target_mass {
        assert!((m - 1.0 / cells.len() as f64).abs() < 1e-12);
    }
    assert!((total_nontarget - 1.0).abs() < 1e-12);
}

fn duplicate(key: &TrialKey, scores: &ScoreSet, k: usize) -> (TrialKey, ScoreSet) {
    let mut records = Vec::new();
    let mut out = ScoreSet::new();
    for copy in 0..k {
        for r in key.records() {
            let id = TrialId::new(format!("{}_c{copy}", r.id.model_id), r.id.segment_id.clone()).unwrap();
            out.insert(id.clone(), scores.get(&r.id).unwrap()).unwrap();
            records.push(TrialRecord { id, ..r.clone() });
        }
    }
    (TrialKey::new(key.track(), records).unwrap(), out)
}

#[test]
fn duplication_leaves_costs_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let points = default_points();
    for _ in 0..5 {
        let (key, scores) = random_audio_set(&mut rng, 400, true);
        let Ok(base) = evaluate(&scores, &key, &audio(), &points) else { continue };
        for k in [2, 3] {
            let (dk, ds) = duplicate(&key, &scores, k);
            let dup = evaluate(&ds, &dk, &audio(), &points).unwrap();
            assert_eq!(dup.actual_c_primary, base.actual_c_primary);
            assert_eq!(dup.min_c_primary, base.min_c_primary);
        }
    }
}

#[test]
fn custom_points_are_used() {
    let (key, scores) = single_cell(&[5.0, 3.5], &[4.0, 0.0]);
    let p = OperatingPoint::parse("1,1,0.5").unwrap();
    let report = evaluate(&scores, &key, &audio(), &[p]).unwrap();
    // theta = 0: both targets accepted, 4.0 is a false alarm
    assert_eq!(report.actual_c_primary, 0.5);
    assert_eq!(report.min_c_primary, 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn min_never_exceeds_actual(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (key, scores) = random_audio_set(&mut rng, 300, seed % 2 == 0);
        if let Ok(r) = evaluate(&scores, &key, &audio(), &default_points()) {
            prop_assert!(r.min_c_primary <= r.actual_c_primary);
            prop_assert!(r.min_c_primary >= 0.0);
            prop_assert!(r.min_c_primary <= 1.0);
        }
    }

    #[test]
    fn min_invariant_under_increasing_maps(seed in 0u64..10_000, a in 0.1f64..5.0, b in -10.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (key, scores) = random_audio_set(&mut rng, 300, false);
        let points = default_points();
        if let Ok(r) = evaluate(&scores, &key, &audio(), &points) {
            let moved = scores.map(|s| (a * s + b).exp().ln_1p() + s.cbrt());
            let r2 = evaluate(&moved, &key, &audio(), &points).unwrap();
            prop_assert_eq!(r.min_c_primary, r2.min_c_primary);
        }
    }

    #[test]
    fn score_order_of_key_records_is_irrelevant(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (key, scores) = random_audio_set(&mut rng, 200, true);
        let mut records = key.records().to_vec();
        records.reverse();
        let reversed = TrialKey::new(Track::Audio, records).unwrap();
        let points = default_points();
        match (evaluate(&scores, &key, &audio(), &points), evaluate(&scores, &reversed, &audio(), &points)) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x.actual_c_primary, y.actual_c_primary);
                prop_assert_eq!(x.min_c_primary, y.min_c_primary);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false),
        }
    }
}
