mod common;

use common::exhaustive_inertia;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sre_core::synthgen::{generate, SynthConfig};
use sre_core::trial_data::{EmbeddingRow, EmbeddingTable, Track};
use sre_core::visual::{
    inertia, kmeanspp_cluster, score_visual_trials, video_trial_score, FrameEncodings, VisualConfig,
    EMPTY_VIDEO_SCORE,
};

fn direct_cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-4.0..4.0)).collect()).collect()
}

#[test]
fn single_cluster_is_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let n = rng.random_range(1..=16);
        // multiples of 1/8 keep every partial sum exact
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-64i32..64) as f64 / 8.0).collect())
            .collect();
        let fit = kmeanspp_cluster(&pts, 1, 0, 3).unwrap();
        let mean: Vec<f64> = (0..3).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        assert_eq!(fit.centroids, vec![mean]);
    }
}

#[test]
fn one_cluster_per_frame_scores_like_direct_max_cosine() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..20 {
        let n = rng.random_range(1..=10);
        let frames = FrameEncodings::new("v", random_points(&mut rng, n, 5)).unwrap();
        let enroll = random_points(&mut rng, 1, 5).remove(0);
        let got = video_trial_score(&enroll, &frames, n, seed).unwrap();
        let want = frames
            .encodings()
            .iter()
            .map(|f| direct_cosine(&enroll, f))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(got, want);
    }
}

#[test]
fn inertia_reaches_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 2..=8 {
        for k in 1..=3.min(n) {
            for rep in 0..20 {
                let pts = random_points(&mut rng, n, 2);
                let fit = kmeanspp_cluster(&pts, k, rep, 50).unwrap();
                let best = exhaustive_inertia(&pts, k);
                assert!((fit.inertia - inertia(&pts, &fit.centroids)).abs() < 1e-9);
                assert!(fit.inertia <= best * (1.0 + 1e-12) + 1e-12, "n={n} k={k}: {} > {best}", fit.inertia);
            }
        }
    }
}

#[test]
fn two_clusters_match_the_closer_face() {
    // frames of two faces around orthogonal directions
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut frames = Vec::new();
    for i in 0..12 {
        let jitter: f64 = rng.random_range(-0.05..0.05);
        frames.push(if i % 2 == 0 { vec![1.0, jitter, 0.0] } else { vec![jitter, 1.0, 0.0] });
    }
    let video = FrameEncodings::new("v", frames).unwrap();
    let s1 = video_trial_score(&[1.0, 0.0, 0.0], &video, 2, 0).unwrap();
    let s2 = video_trial_score(&[0.0, 0.0, 1.0], &video, 2, 0).unwrap();
    let face: Vec<&Vec<f64>> = video.encodings().iter().step_by(2).collect();
    let face_mean: Vec<f64> = (0..3).map(|j| face.iter().map(|f| f[j]).sum::<f64>() / face.len() as f64).collect();
    assert!((s1 - direct_cosine(&[1.0, 0.0, 0.0], &face_mean)).abs() < 1e-6);
    assert!(s2.abs() < 0.05);
    // a single centroid averages the two faces away
    let s_mean = video_trial_score(&[1.0, 0.0, 0.0], &video, 1, 0).unwrap();
    assert!(s_mean < 0.8);
}

#[test]
fn permutation_and_thread_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts = random_points(&mut rng, 30, 4);
    let a = kmeanspp_cluster(&pts, 4, 7, 5).unwrap();
    let mut rev = pts.clone();
    rev.reverse();
    let b = kmeanspp_cluster(&rev, 4, 7, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn synthetic_visual_track_scores_and_flags_empty_videos() {
    let config = SynthConfig {
        track: Track::Visual,
        n_speakers: 12,
        ..SynthConfig::default()
    };
    let corpus = generate(&config).unwrap();
    let faces = corpus.faces.unwrap();
    let vc = VisualConfig::default();
    let result = score_visual_trials(&corpus.key, &corpus.enrollment, &faces.images, &faces.frames, &vc).unwrap();
    assert!(result.empty_videos.is_empty());
    assert_eq!(result.scores.len(), corpus.key.len());
    let (mut t, mut n) = (Vec::new(), Vec::new());
    for r in corpus.key.records() {
        let s = result.scores.get(&r.id).unwrap();
        if r.is_target() { t.push(s) } else { n.push(s) }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&t) > mean(&n) + 0.3);

    // drop every frame of one test video
    let victim = corpus.key.records()[0].id.segment_id.clone();
    let rows: Vec<EmbeddingRow> = faces
        .frames
        .rows()
        .iter()
        .filter(|r| r.speaker.as_deref() != Some(victim.as_str()))
        .cloned()
        .collect();
    let frames = EmbeddingTable::new(faces.frames.dim(), rows).unwrap();
    let result = score_visual_trials(&corpus.key, &corpus.enrollment, &faces.images, &frames, &vc).unwrap();
    assert_eq!(result.empty_videos, vec![victim.clone()]);
    for r in corpus.key.records().iter().filter(|r| r.id.segment_id == victim) {
        assert_eq!(result.scores.get(&r.id), Some(EMPTY_VIDEO_SCORE));
    }
}
