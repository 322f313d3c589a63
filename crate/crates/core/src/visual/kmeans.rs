use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::VisualError;

/// Cap on Lloyd iterations; the assignment fixpoint is normally reached
/// long before.
const MAX_LLOYD_ITERATIONS: usize = 1000;

/// Cluster centroids of one video's frame encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoEncodings {
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances of every encoding to its centroid.
    pub inertia: f64,
}

impl PseudoEncodings {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared distances from each point to its nearest centroid.
pub fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .map(|p| centroids.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
        .sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            while d2[chosen] == 0.0 {
                chosen -= 1;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[idx].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

fn mean_of(points: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let d = points[0].len();
    let mut m = vec![0.0; d];
    for &i in members {
        for (a, b) in m.iter_mut().zip(&points[i]) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|v| *v /= members.len() as f64);
    m
}

/// Nearest-centroid assignment (ties to the lower index). A cluster left
/// empty takes the point farthest from its centroid among clusters with
/// more than one member.
fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    let k = centroids.len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, centroids).0).collect();
    loop {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return labels;
        };
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[labels[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        labels[far.expect("k <= n leaves a cluster with two members")] = empty;
    }
}

fn centroids_of(points: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|j| {
            let members: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == j).collect();
            mean_of(points, &members)
        })
        .collect()
}

/// First single-point move that strictly lowers inertia, accounting for
/// the centroid shift in both clusters.
fn improving_move(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> Option<(usize, usize)> {
    let mut sizes = vec![0usize; centroids.len()];
    labels.iter().for_each(|&l| sizes[l] += 1);
    for (i, p) in points.iter().enumerate() {
        let from = labels[i];
        if sizes[from] < 2 {
            continue;
        }
        let n_from = sizes[from] as f64;
        let removal = n_from / (n_from - 1.0) * sq_dist(p, &centroids[from]);
        let mut best = None;
        let mut best_cost = removal * (1.0 - 1e-12);
        for (to, c) in centroids.iter().enumerate() {
            if to == from {
                continue;
            }
            let n_to = sizes[to] as f64;
            let cost = n_to / (n_to + 1.0) * sq_dist(p, c);
            if cost < best_cost {
                best_cost = cost;
                best = Some(to);
            }
        }
        if let Some(to) = best {
            return Some((i, to));
        }
    }
    None
}

/// Lloyd iterations to an assignment fixpoint; at each fixpoint a single
/// point move that still lowers inertia is applied and iteration resumes.
fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, f64) {
    let k = centroids.len();
    let mut labels = assign(points, &centroids);
    for _ in 0..MAX_LLOYD_ITERATIONS {
        centroids = centroids_of(points, &labels, k);
        let mut next = assign(points, &centroids);
        if next == labels {
            let Some((i, to)) = improving_move(points, &labels, &centroids) else {
                break;
            };
            next[i] = to;
        }
        labels = next;
    }
    let total = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum();
    (centroids, total)
}

/// k-means++ seeding followed by Lloyd iterations to an assignment
/// fixpoint (refined by single-point moves), keeping the lowest-inertia
/// result over `n_restarts` runs.
///
/// Points are sorted lexicographically first, so the result depends on the
/// multiset of encodings and the seed but not on their order. Restart `r`
/// draws from ChaCha stream `r` under `seed`.
pub fn kmeanspp_cluster(
    encodings: &[Vec<f64>],
    k: usize,
    seed: u64,
    n_restarts: usize,
) -> Result<PseudoEncodings, VisualError> {
    let first = encodings.first().ok_or(VisualError::Empty)?;
    if k == 0 {
        return Err(VisualError::ZeroK);
    }
    if k > encodings.len() {
        return Err(VisualError::TooManyClusters { k, n: encodings.len() });
    }
    for e in encodings {
        if e.len() != first.len() {
            return Err(VisualError::DimensionMismatch {
                expected: first.len(),
                got: e.len(),
            });
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(VisualError::NonFinite);
        }
    }
    let mut points = encodings.to_vec();
    points.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut best: Option<PseudoEncodings> = None;
    for r in 0..n_restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let init = seed_centers(&points, k, &mut rng);
        let (centroids, inertia) = lloyd(&points, init);
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(PseudoEncodings { centroids, inertia });
        }
    }
    Ok(best.expect("at least one restart"))
}
