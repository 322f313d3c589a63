use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::{log_det_spd, mean_of, ridge, scatter, sorted_eigen, symmetrize, MatrixData};
use super::BackendError;
use crate::trial_data::EmbeddingTable;

/// Two-covariance PLDA: speaker variable `y ~ N(mu, B)`, observation
/// `x | y ~ N(y, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    mu: DVector<f64>,
    b: DMatrix<f64>,
    w: DMatrix<f64>,
}

impl PldaModel {
    /// Checks shapes and symmetry, `W` positive definite and `B` positive
    /// semi-definite (up to `1e-12` relative to its largest eigenvalue).
    pub fn new(mu: DVector<f64>, b: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self, BackendError> {
        let d = mu.len();
        if d == 0 {
            return Err(BackendError::Precondition("PLDA dimension must be positive".into()));
        }
        for (name, m) in [("B", &b), ("W", &w)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(BackendError::DimensionMismatch {
                    expected: d,
                    got: m.nrows(),
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(BackendError::Model(format!("{name} has non-finite entries")));
            }
            let scale = m.abs().max().max(f64::MIN_POSITIVE);
            if (m - m.transpose()).abs().max() > 1e-9 * scale {
                return Err(BackendError::Model(format!("{name} is not symmetric")));
            }
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::Model("mean has non-finite entries".into()));
        }
        if w.clone().cholesky().is_none() {
            return Err(BackendError::Singular("within-speaker covariance W".into()));
        }
        let (vals, _) = sorted_eigen(&b);
        if vals[d - 1] < -1e-12 * vals[0].abs().max(1.0) {
            return Err(BackendError::Model("between-speaker covariance B is not PSD".into()));
        }
        Ok(PldaModel { mu, b, w })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn between(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn within(&self) -> &DMatrix<f64> {
        &self.w
    }
}

/// Per-speaker sufficient statistics.
struct Group {
    n: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

fn groups_of(table: &EmbeddingTable) -> Result<Vec<Group>, BackendError> {
    let groups = table.speaker_groups().ok_or(BackendError::MissingLabels)?;
    let d = table.dim();
    Ok(groups
        .iter()
        .map(|(_, idx)| {
            let rows: Vec<&[f64]> = idx.iter().map(|&i| table.rows()[i].vector.as_slice()).collect();
            let mean = mean_of(&rows, d);
            let scatter = scatter(&rows, &mean);
            Group {
                n: rows.len(),
                mean,
                scatter,
            }
        })
        .collect())
}

/// `W + n B` factorized once for every group size in use.
struct SizeTerms {
    log_det: f64,
    inv: DMatrix<f64>,
}

fn size_terms(model: &PldaModel, n: usize) -> Result<SizeTerms, BackendError> {
    let m = &model.w + &model.b * n as f64;
    let chol = m
        .cholesky()
        .ok_or_else(|| BackendError::Singular(format!("W + {n} B")))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(SizeTerms {
        log_det,
        inv: chol.inverse(),
    })
}

/// Log marginal density of `n` observations sharing one speaker variable,
/// given their mean and `tr(W^-1 S)` for their scatter `S`.
fn group_log_likelihood(
    model: &PldaModel,
    log_det_w: f64,
    terms: &SizeTerms,
    n: usize,
    mean: &DVector<f64>,
    trace_term: f64,
) -> f64 {
    let d = model.dim() as f64;
    let nf = n as f64;
    let q = mean - &model.mu;
    let quad = q.dot(&(&terms.inv * &q));
    -0.5 * nf * d * (2.0 * PI).ln() - 0.5 * (nf - 1.0) * log_det_w - 0.5 * terms.log_det - 0.5 * trace_term - 0.5 * nf * quad
}

fn data_log_likelihood(model: &PldaModel, groups: &[Group]) -> Result<f64, BackendError> {
    let chol_w = model
        .w
        .clone()
        .cholesky()
        .ok_or_else(|| BackendError::Singular("within-speaker covariance W".into()))?;
    let log_det_w = 2.0 * chol_w.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let w_inv = chol_w.inverse();
    let mut cache: BTreeMap<usize, SizeTerms> = BTreeMap::new();
    let mut total = 0.0;
    for g in groups {
        if !cache.contains_key(&g.n) {
            cache.insert(g.n, size_terms(model, g.n)?);
        }
        let trace_term = (&w_inv * &g.scatter).trace();
        total += group_log_likelihood(model, log_det_w, &cache[&g.n], g.n, &g.mean, trace_term);
    }
    Ok(total)
}

/// EM stopping controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iterations: usize,
    /// Stop once `(L_new - L_old) / |L_old|` falls below this value.
    pub tolerance: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iterations: 200,
            tolerance: 1e-6,
        }
    }
}

/// Result of EM training.
#[derive(Debug, Clone)]
pub struct PldaFit {
    pub model: PldaModel,
    /// Training log-likelihood of the initial model and after every
    /// accepted iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn fit_plda(table: &EmbeddingTable) -> Result<PldaModel, BackendError> {
    Ok(fit_plda_with(table, EmOptions::default())?.model)
}

/// EM training of the two-covariance model.
///
/// The initial `W` is the pooled within-speaker covariance (with ridge) and
/// the initial `B` the covariance of speaker means minus the expected
/// within-speaker contribution, with eigenvalues clipped from below. An
/// iteration that does not increase the likelihood is discarded and ends
/// training, so the recorded trace is non-decreasing.
pub fn fit_plda_with(table: &EmbeddingTable, options: EmOptions) -> Result<PldaFit, BackendError> {
    let groups = groups_of(table)?;
    let d = table.dim();
    let s = groups.len();
    if s < 2 {
        return Err(BackendError::Degenerate(format!("PLDA needs at least 2 speakers, got {s}")));
    }
    if groups.iter().all(|g| g.n < 2) {
        return Err(BackendError::Unidentifiable);
    }
    let n_total: usize = groups.iter().map(|g| g.n).sum();
    let mut sw_total = DMatrix::zeros(d, d);
    for g in &groups {
        sw_total += &g.scatter;
    }

    let mut w0 = &sw_total / n_total as f64;
    let r = ridge(&w0);
    if !(r > 0.0) {
        return Err(BackendError::Unidentifiable);
    }
    for i in 0..d {
        w0[(i, i)] += r;
    }
    let means: Vec<&[f64]> = groups.iter().map(|g| g.mean.as_slice()).collect();
    let grand = mean_of(&means, d);
    let between_cov = scatter(&means, &grand) / s as f64;
    let inv_n_mean = groups.iter().map(|g| 1.0 / g.n as f64).sum::<f64>() / s as f64;
    let mut b0 = between_cov - &w0 * inv_n_mean;
    symmetrize(&mut b0);
    let floor = 1e-3 * w0.trace() / d as f64;
    let (vals, vecs) = sorted_eigen(&b0);
    let clipped = DVector::from_iterator(d, vals.iter().map(|v| v.max(floor)));
    let mut b0 = &vecs * DMatrix::from_diagonal(&clipped) * vecs.transpose();
    symmetrize(&mut b0);

    let mut model = PldaModel { mu: grand, b: b0, w: w0 };
    let mut ll = data_log_likelihood(&model, &groups)?;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        let next = match em_step(&model, &groups, &sw_total, n_total) {
            Ok(m) => m,
            Err(_) => {
                converged = true;
                break;
            }
        };
        let next_ll = match data_log_likelihood(&next, &groups) {
            Ok(v) if v.is_finite() => v,
            _ => {
                converged = true;
                break;
            }
        };
        if next_ll < ll {
            converged = true;
            break;
        }
        iterations += 1;
        let improvement = (next_ll - ll) / ll.abs().max(f64::MIN_POSITIVE);
        model = next;
        ll = next_ll;
        trace.push(ll);
        if improvement < options.tolerance {
            converged = true;
            break;
        }
    }
    Ok(PldaFit {
        model,
        log_likelihood: trace,
        iterations,
        converged,
    })
}

fn em_step(model: &PldaModel, groups: &[Group], sw_total: &DMatrix<f64>, n_total: usize) -> Result<PldaModel, BackendError> {
    let d = model.dim();
    let s = groups.len() as f64;
    // E-step: posterior of y given n observations with mean xbar is
    // N(mu + B G (xbar - mu), B - B G B) with G = (B + W/n)^-1.
    let mut posterior: BTreeMap<usize, (DMatrix<f64>, DMatrix<f64>)> = BTreeMap::new();
    for g in groups {
        if posterior.contains_key(&g.n) {
            continue;
        }
        let m = &model.b + &model.w / g.n as f64;
        let inv = m
            .cholesky()
            .ok_or_else(|| BackendError::Singular(format!("B + W/{}", g.n)))?
            .inverse();
        let gain = &model.b * inv;
        let mut cov = &model.b - &gain * &model.b;
        symmetrize(&mut cov);
        posterior.insert(g.n, (gain, cov));
    }
    let post_means: Vec<DVector<f64>> = groups
        .iter()
        .map(|g| {
            let (gain, _) = &posterior[&g.n];
            &model.mu + gain * (&g.mean - &model.mu)
        })
        .collect();

    // M-step.
    let mut mu = DVector::zeros(d);
    for m in &post_means {
        mu += m;
    }
    mu /= s;
    let mut b = DMatrix::zeros(d, d);
    let mut w = sw_total.clone();
    for (g, m) in groups.iter().zip(&post_means) {
        let cov = &posterior[&g.n].1;
        let dm = m - &mu;
        b += cov;
        b.ger(1.0, &dm, &dm, 1.0);
        let dx = &g.mean - m;
        let nf = g.n as f64;
        w.ger(nf, &dx, &dx, 1.0);
        w += cov * nf;
    }
    b /= s;
    w /= n_total as f64;
    symmetrize(&mut b);
    symmetrize(&mut w);
    Ok(PldaModel { mu, b, w })
}

/// Convex combination `alpha * in_domain + (1 - alpha) * out_of_domain` of
/// mean, `B` and `W`.
pub fn interpolate(out_of_domain: &PldaModel, in_domain: &PldaModel, alpha: f64) -> Result<PldaModel, BackendError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(BackendError::Precondition(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if out_of_domain.dim() != in_domain.dim() {
        return Err(BackendError::DimensionMismatch {
            expected: out_of_domain.dim(),
            got: in_domain.dim(),
        });
    }
    if alpha == 0.0 {
        return Ok(out_of_domain.clone());
    }
    if alpha == 1.0 {
        return Ok(in_domain.clone());
    }
    let mix_v = |a: &DVector<f64>, b: &DVector<f64>| b * alpha + a * (1.0 - alpha);
    let mix_m = |a: &DMatrix<f64>, b: &DMatrix<f64>| b * alpha + a * (1.0 - alpha);
    Ok(PldaModel {
        mu: mix_v(&out_of_domain.mu, &in_domain.mu),
        b: mix_m(&out_of_domain.b, &in_domain.b),
        w: mix_m(&out_of_domain.w, &in_domain.w),
    })
}

/// Fits PLDA on the labeled in-domain table and interpolates it with
/// `model` at weight `alpha`.
pub fn map_adapt(model: &PldaModel, in_domain: &EmbeddingTable, alpha: f64) -> Result<PldaModel, BackendError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(BackendError::Precondition(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if in_domain.is_empty() {
        return Err(BackendError::Precondition("in-domain table is empty".into()));
    }
    if in_domain.dim() != model.dim() {
        return Err(BackendError::DimensionMismatch {
            expected: model.dim(),
            got: in_domain.dim(),
        });
    }
    if alpha == 0.0 {
        return Ok(model.clone());
    }
    let adapted = fit_plda(in_domain)?;
    interpolate(model, &adapted, alpha)
}

/// Enrollment statistics: count, mean and `tr(W^-1 S)`.
#[derive(Debug, Clone)]
pub struct EnrollStats {
    n: usize,
    mean: DVector<f64>,
    trace_term: f64,
}

/// Scorer with `W^-1` and the `W + n B` factorizations precomputed.
pub struct PldaScorer {
    model: PldaModel,
    w_inv: DMatrix<f64>,
    log_det_w: f64,
    sizes: Vec<SizeTerms>,
}

impl PldaScorer {
    /// Precomputes terms for enrollments of up to `max_enroll` segments;
    /// larger enrollments are still scored, just without the cache.
    pub fn new(model: PldaModel, max_enroll: usize) -> Result<Self, BackendError> {
        let log_det_w = log_det_spd(&model.w).ok_or_else(|| BackendError::Singular("within-speaker covariance W".into()))?;
        let w_inv = model
            .w
            .clone()
            .cholesky()
            .ok_or_else(|| BackendError::Singular("within-speaker covariance W".into()))?
            .inverse();
        let sizes = (1..=max_enroll.max(1) + 1)
            .map(|n| size_terms(&model, n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PldaScorer {
            model,
            w_inv,
            log_det_w,
            sizes,
        })
    }

    pub fn model(&self) -> &PldaModel {
        &self.model
    }

    fn check(&self, v: &[f64]) -> Result<(), BackendError> {
        if v.len() != self.model.dim() {
            return Err(BackendError::DimensionMismatch {
                expected: self.model.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn enroll<V: AsRef<[f64]>>(&self, vectors: &[V]) -> Result<EnrollStats, BackendError> {
        if vectors.is_empty() {
            return Err(BackendError::Precondition("enrollment is empty".into()));
        }
        for v in vectors {
            self.check(v.as_ref())?;
        }
        let rows: Vec<&[f64]> = vectors.iter().map(|v| v.as_ref()).collect();
        let mean = mean_of(&rows, self.model.dim());
        let mut trace_term = 0.0;
        for r in &rows {
            let x = DVector::from_column_slice(r) - &mean;
            trace_term += x.dot(&(&self.w_inv * &x));
        }
        Ok(EnrollStats {
            n: rows.len(),
            mean,
            trace_term,
        })
    }

    fn log_likelihood(&self, n: usize, mean: &DVector<f64>, trace_term: f64) -> Result<f64, BackendError> {
        let owned;
        let terms = match self.sizes.get(n - 1) {
            Some(t) => t,
            None => {
                owned = size_terms(&self.model, n)?;
                &owned
            }
        };
        Ok(group_log_likelihood(&self.model, self.log_det_w, terms, n, mean, trace_term))
    }

    /// `log p(E, t | same speaker) - log p(E) - log p(t)`.
    pub fn score(&self, enroll: &EnrollStats, test: &[f64]) -> Result<f64, BackendError> {
        self.check(test)?;
        let t = DVector::from_column_slice(test);
        let n = enroll.n;
        let nf = n as f64;
        let diff = &t - &enroll.mean;
        let joint_mean = (&enroll.mean * nf + &t) / (nf + 1.0);
        let joint_trace = enroll.trace_term + nf / (nf + 1.0) * diff.dot(&(&self.w_inv * &diff));
        let joint = self.log_likelihood(n + 1, &joint_mean, joint_trace)?;
        let e = self.log_likelihood(n, &enroll.mean, enroll.trace_term)?;
        let single = self.log_likelihood(1, &t, 0.0)?;
        Ok(joint - e - single)
    }
}

/// PLDA log-likelihood ratio of `test` against the enrollment set.
pub fn plda_llr<V: AsRef<[f64]>>(model: &PldaModel, enroll: &[V], test: &[f64]) -> Result<f64, BackendError> {
    let scorer = PldaScorer::new(model.clone(), enroll.len())?;
    let stats = scorer.enroll(enroll)?;
    scorer.score(&stats, test)
}

#[derive(Serialize, Deserialize)]
pub(crate) struct PldaData {
    mu: Vec<f64>,
    between: MatrixData,
    within: MatrixData,
}

impl From<&PldaModel> for PldaData {
    fn from(m: &PldaModel) -> Self {
        PldaData {
            mu: m.mu.iter().copied().collect(),
            between: (&m.b).into(),
            within: (&m.w).into(),
        }
    }
}

impl TryFrom<&PldaData> for PldaModel {
    type Error = BackendError;

    fn try_from(p: &PldaData) -> Result<Self, BackendError> {
        PldaModel::new(
            DVector::from_vec(p.mu.clone()),
            DMatrix::try_from(&p.between)?,
            DMatrix::try_from(&p.within)?,
        )
    }
}
