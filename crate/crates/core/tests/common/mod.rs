//! Independent reference implementations shared by the integration tests
//! and the acceptance harness. Nothing here calls into the code under test
//! except for plain data constructors.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sre_core::metrics::OperatingPoint;
use sre_core::trial_data::{Gender, Label, Match, PhoneMatch, ScoreSet, Track, TrialId, TrialKey, TrialRecord};

pub fn record(model: &str, seg: &str, target: bool, gender: Gender, source: Match, lang: Match, phone: PhoneMatch) -> TrialRecord {
    TrialRecord {
        id: TrialId::new(model, seg).unwrap(),
        label: if target { Label::Target } else { Label::Nontarget },
        gender,
        source_match: source,
        language_match: lang,
        phone_match: phone,
        num_enroll_segments: 1,
        track: Track::Audio,
    }
}

fn yn(rng: &mut ChaCha8Rng) -> Match {
    if rng.random_bool(0.5) {
        Match::Y
    } else {
        Match::N
    }
}

/// Random audio key with up to `max_trials` trials and Gaussian scores.
/// With `quantize` scores are rounded to a coarse grid, creating ties.
pub fn random_audio_set(rng: &mut ChaCha8Rng, max_trials: usize, quantize: bool) -> (TrialKey, ScoreSet) {
    let n_trials = rng.random_range(20..=max_trials);
    let n_models = rng.random_range(2..=40usize);
    let p_target = rng.random_range(0.05..0.5);
    let genders: Vec<Gender> = (0..n_models)
        .map(|_| if rng.random_bool(0.5) { Gender::Male } else { Gender::Female })
        .collect();
    let mut records = Vec::with_capacity(n_trials);
    let mut scores = ScoreSet::new();
    for t in 0..n_trials {
        let m = rng.random_range(0..n_models);
        let target = rng.random_bool(p_target);
        let source = yn(rng);
        let lang = yn(rng);
        let phone = if target {
            if rng.random_bool(0.5) { PhoneMatch::Y } else { PhoneMatch::N }
        } else if rng.random_bool(0.5) {
            PhoneMatch::NotApplicable
        } else {
            PhoneMatch::N
        };
        let mut r = record(&format!("m{m:03}"), &format!("s{t:05}"), target, genders[m], source, lang, phone);
        if rng.random_bool(0.1) {
            r.num_enroll_segments = 3;
        }
        let z: f64 = StandardNormal.sample(rng);
        let mut s = if target { 2.0 + 2.0 * z } else { -2.0 + 2.0 * z };
        if quantize {
            s = (s * 2.0).round() / 2.0;
        }
        scores.insert(r.id.clone(), s).unwrap();
        records.push(r);
    }
    (TrialKey::new(Track::Audio, records).unwrap(), scores)
}

type Cell = Vec<&'static str>;

/// Cell and pool coordinates of a record under the default audio schema
/// (gender, source, language, phone), optionally keeping 3-segment trials
/// with the enrollment count as an extra coordinate.
fn audio_cell(r: &TrialRecord, with_three: bool) -> Option<(Cell, Cell)> {
    if r.num_enroll_segments == 3 && !with_three {
        return None;
    }
    let phone = match r.phone_match {
        PhoneMatch::Y => "Y",
        _ => "N",
    };
    let mut cell = vec![r.gender.as_str(), r.source_match.as_str(), r.language_match.as_str(), phone];
    let mut pool = vec![r.gender.as_str(), r.source_match.as_str(), r.language_match.as_str()];
    if with_three {
        let n = if r.num_enroll_segments == 3 { "3" } else { "1" };
        cell.push(n);
        pool.push(n);
    }
    Some((cell, pool))
}

fn pool_of(cell: &Cell, with_three: bool) -> Cell {
    let mut p = cell[..3].to_vec();
    if with_three {
        p.push(cell[4]);
    }
    p
}

/// Per-cell scores: each participating target cell with its target scores
/// and the non-target scores of its matched pool, in coordinate order.
pub fn cells(key: &TrialKey, scores: &ScoreSet, with_three: bool) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut targets: BTreeMap<Cell, Vec<f64>> = BTreeMap::new();
    let mut pools: BTreeMap<Cell, Vec<f64>> = BTreeMap::new();
    for r in key.records() {
        let Some((cell, pool)) = audio_cell(r, with_three) else { continue };
        let s = scores.get(&r.id).unwrap();
        if r.is_target() {
            targets.entry(cell).or_default().push(s);
        } else {
            pools.entry(pool).or_default().push(s);
        }
    }
    targets
        .into_iter()
        .filter_map(|(c, t)| {
            let n = pools.get(&pool_of(&c, with_three))?;
            (!n.is_empty()).then(|| (t, n.clone()))
        })
        .collect()
}

/// Equalized (p_miss, p_fa) at `theta`, accepting scores strictly above it.
pub fn rates_at(cells: &[(Vec<f64>, Vec<f64>)], theta: f64) -> (f64, f64) {
    let mut pm = 0.0;
    let mut pf = 0.0;
    for (t, n) in cells {
        pm += t.iter().filter(|s| **s <= theta).count() as f64 / t.len() as f64;
        pf += n.iter().filter(|s| **s > theta).count() as f64 / n.len() as f64;
    }
    let c = cells.len() as f64;
    (pm / c, pf / c)
}

/// Minimum primary cost by trying every threshold: below all scores, every
/// midpoint of consecutive distinct scores, above all scores.
pub fn brute_force_min(cells: &[(Vec<f64>, Vec<f64>)], points: &[OperatingPoint]) -> f64 {
    let mut all: Vec<f64> = cells.iter().flat_map(|(t, n)| t.iter().chain(n)).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut thresholds = vec![all[0] - 1.0];
    thresholds.extend(all.windows(2).map(|w| 0.5 * w[0] + 0.5 * w[1]));
    thresholds.push(all[all.len() - 1] + 1.0);
    let mut total = 0.0;
    for p in points {
        let mut best = f64::INFINITY;
        for &th in &thresholds {
            let (pm, pf) = rates_at(cells, th);
            best = best.min(pm + p.beta() * pf);
        }
        total += best;
    }
    total / points.len() as f64
}

/// Actual primary cost as the mean over points and cells of each cell's
/// own normalized cost at `ln(beta)`.
pub fn per_cell_actual(cells: &[(Vec<f64>, Vec<f64>)], points: &[OperatingPoint]) -> f64 {
    let mut total = 0.0;
    for p in points {
        let theta = p.beta().ln();
        let mut sum = 0.0;
        for (t, n) in cells {
            let pm = t.iter().filter(|s| **s <= theta).count() as f64 / t.len() as f64;
            let pf = n.iter().filter(|s| **s > theta).count() as f64 / n.len() as f64;
            sum += pm + p.beta() * pf;
        }
        total += sum / cells.len() as f64;
    }
    total / points.len() as f64
}

/// Gauss-Hermite nodes and weights for `int exp(-x^2) f(x) dx` by the
/// Golub-Welsch eigenvalue method.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn log_gauss(x: &DVector<f64>, mean: &DVector<f64>, cov_inv: &DMatrix<f64>, log_det: f64) -> f64 {
    let d = x - mean;
    let k = x.len() as f64;
    -0.5 * (k * (2.0 * std::f64::consts::PI).ln() + log_det + (d.transpose() * cov_inv * &d)[(0, 0)])
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln int N(y | mu, B) prod_i N(x_i | y, W) dy` by tensor-product
/// Gauss-Hermite quadrature. The rule is centered at the posterior mean of
/// `y` with the posterior covariance widened by `spread`, so the integrand
/// seen by the rule is not itself a Gaussian of the rule's shape.
pub fn log_marginal_quadrature(
    mu: &DVector<f64>,
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
    xs: &[DVector<f64>],
    nodes: &(Vec<f64>, Vec<f64>),
    spread: f64,
) -> f64 {
    let k = mu.len();
    let b_inv = b.clone().try_inverse().unwrap();
    let w_inv = w.clone().try_inverse().unwrap();
    let ld_b = b.determinant().ln();
    let ld_w = w.determinant().ln();
    let n = xs.len() as f64;
    let sum = xs.iter().fold(DVector::zeros(k), |acc, x| acc + x);
    let post_cov = (&b_inv + &w_inv * n).try_inverse().unwrap();
    let center = &post_cov * (&b_inv * mu + &w_inv * sum);
    let l = (post_cov * (2.0 * spread * spread)).cholesky().unwrap().l();
    let log_jac = l.determinant().ln();
    let (z, wt) = nodes;
    let m = z.len();
    let mut terms = Vec::with_capacity(m.pow(k as u32));
    let mut idx = vec![0usize; k];
    loop {
        let u = DVector::from_iterator(k, idx.iter().map(|&i| z[i]));
        let y = &center + &l * &u;
        let mut lf = log_gauss(&y, mu, &b_inv, ld_b);
        for x in xs {
            lf += log_gauss(x, &y, &w_inv, ld_w);
        }
        let lw: f64 = idx.iter().map(|&i| wt[i].ln()).sum();
        terms.push(lf + lw + u.norm_squared());
        let mut d = 0;
        loop {
            if d == k {
                return log_sum_exp(&terms) + log_jac;
            }
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Verification LLR from three quadrature marginals.
pub fn llr_quadrature(
    mu: &DVector<f64>,
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
    enroll: &[DVector<f64>],
    test: &DVector<f64>,
    nodes: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let mut joint = enroll.to_vec();
    joint.push(test.clone());
    log_marginal_quadrature(mu, b, w, &joint, nodes, 1.3)
        - log_marginal_quadrature(mu, b, w, enroll, nodes, 1.3)
        - log_marginal_quadrature(mu, b, w, std::slice::from_ref(test), nodes, 1.3)
}

/// Random symmetric positive definite matrix `A A^T + floor I`.
pub fn random_spd(rng: &mut ChaCha8Rng, k: usize, floor: f64) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(k, k, |_, _| StandardNormal.sample(rng));
    &a * a.transpose() + DMatrix::identity(k, k) * floor
}

pub fn sample_gaussian(rng: &mut ChaCha8Rng, mean: &DVector<f64>, chol_l: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::<f64>::from_fn(mean.len(), |_, _| StandardNormal.sample(rng));
    mean + chol_l * z
}

/// Smallest k-means inertia over every assignment of `points` to `k`
/// non-empty clusters.
pub fn exhaustive_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let d = points[0].len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    loop {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        if counts.iter().all(|&c| c > 0) {
            let mut total = 0.0;
            for (p, &c) in points.iter().zip(&labels) {
                for (j, v) in p.iter().enumerate() {
                    let m = sums[c][j] / counts[c] as f64;
                    total += (v - m) * (v - m);
                }
            }
            best = best.min(total);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// Inverse standard normal CDF at selected probabilities, computed to 50
/// significant digits and rounded to 21.
pub const PROBIT_TABLE: &[(f64, f64)] = &[
    (1.0e-9, -5.99780701500768687156),
    (2.5e-9, -5.847172145099800854),
    (5.0e-9, -5.73072886823628965008),
    (1.0e-8, -5.61200124417478873155),
    (2.5e-8, -5.45131043784547850274),
    (5.0e-8, -5.32672388638449631783),
    (1.0e-7, -5.19933758219281693159),
    (2.5e-7, -5.02631283605668486082),
    (5.0e-7, -4.89163847569859038623),
    (1.0e-6, -4.75342430882289894819),
    (2.5e-6, -4.56478773028088434594),
    (5.0e-6, -4.41717341346902210674),
    (1.0e-5, -4.2648907939228246285),
    (2.5e-5, -4.05562698112240120176),
    (5.0e-5, -3.89059188641309396704),
    (0.0001, -3.71901648545568056439),
    (0.00025, -3.48075640434621277744),
    (0.0005, -3.29052673149189479322),
    (0.001, -3.09023230616781354154),
    (0.0025, -2.80703376834380411722),
    (0.005, -2.57582930354890076098),
    (0.01, -2.32634787404084110089),
    (0.025, -1.95996398454005423552),
    (0.05, -1.64485362695147271486),
    (0.1, -1.28155156554460046697),
    (0.2, -0.841621233572914205179),
    (0.25, -0.674489750196081743202),
    (0.3, -0.524400512708040784038),
    (0.45, -0.12566134685507403421),
    (0.49, -0.0250689082587110357624),
    (0.4999, -0.000250662830088035098921),
    // upper tail at the exact binary value of 1 - q
    (0.999999999, 5.99780701960163742642),
    (0.9999999975, 5.84717214611112765086),
    (0.999999995, 5.73072886926708010819),
    (0.99999999, 5.6120012433055049826),
    (0.999999975, 5.45131043813647305766),
    (0.99999995, 5.32672388627839834892),
    (0.9999999, 5.19933758229066109366),
    (0.99999975, 5.02631283602986616658),
    (0.9999995, 4.89163847571477902908),
    (0.999999, 4.75342430881708776569),
    (0.9999975, 4.56478773027950995446),
    (0.999995, 4.41717341346760555549),
    (0.99999, 4.26489079392384076995),
    (0.999975, 4.05562698112190798441),
    (0.99995, 3.89059188641312068945),
    (0.9999, 3.71901648545570838672),
    (0.99975, 3.48075640434624227833),
    (0.9995, 3.29052673149192577868),
    (0.999, 3.09023230616781327776),
    (0.9975, 2.80703376834381098379),
    (0.995, 2.57582930354890045386),
    (0.99, 2.32634787404084076764),
    (0.975, 1.9599639845400538556),
    (0.95, 1.64485362695147228428),
    (0.9, 1.28155156554460059349),
    (0.75, 0.674489750196081743202),
    (0.5, 0.0),
    (0.8, 0.841621233572914363804),
    (0.7, 0.524400512708040656314),
    (0.55, 0.125661346855074146409),
    (0.51, 0.0250689082587110580327),
    (0.5001, 0.000250662830088007492389),
];
