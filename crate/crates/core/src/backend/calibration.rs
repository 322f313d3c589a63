use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::metrics::OperatingPoint;
use crate::trial_data::{ScoreSet, TrialKey};

const MAX_ITERATIONS: usize = 100;
const GRADIENT_TOLERANCE: f64 = 1e-10;
/// Scale used when the unconstrained optimum is not order-preserving.
const MIN_SCALE: f64 = 1e-6;

/// Prior whose log prior-odds is minus the mean of `ln beta` over the
/// operating points.
pub fn default_effective_prior(points: &[OperatingPoint]) -> f64 {
    if points.is_empty() {
        return 0.5;
    }
    let mean_log_beta = points.iter().map(|p| p.threshold()).sum::<f64>() / points.len() as f64;
    1.0 / (1.0 + mean_log_beta.exp())
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Labeled design for prior-weighted logistic regression. Each row holds
/// the features of one trial.
struct Problem<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [bool],
    w_target: f64,
    w_nontarget: f64,
    offset: f64,
}

impl<'a> Problem<'a> {
    fn new(rows: &'a [Vec<f64>], labels: &'a [bool], prior: f64) -> Result<Self, BackendError> {
        if !(prior > 0.0 && prior < 1.0) {
            return Err(BackendError::Precondition(format!("effective prior must lie in (0, 1), got {prior}")));
        }
        if rows.len() != labels.len() {
            return Err(BackendError::Precondition("features and labels differ in length".into()));
        }
        let n_t = labels.iter().filter(|&&l| l).count();
        let n_n = labels.len() - n_t;
        if n_t == 0 || n_n == 0 {
            return Err(BackendError::Precondition("both target and non-target trials are required".into()));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(BackendError::Precondition("rows have different feature counts".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(BackendError::Precondition("non-finite score".into()));
        }
        Ok(Problem {
            rows,
            labels,
            w_target: prior / n_t as f64,
            w_nontarget: (1.0 - prior) / n_n as f64,
            offset: logit(prior),
        })
    }

    fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn linear(&self, params: &[f64], row: &[f64]) -> f64 {
        let m = row.len();
        row.iter().zip(params).map(|(x, w)| x * w).sum::<f64>() + params[m] + self.offset
    }

    fn objective(&self, params: &[f64]) -> f64 {
        let mut total = 0.0;
        for (row, &t) in self.rows.iter().zip(self.labels) {
            let z = self.linear(params, row);
            total += if t { self.w_target * softplus(-z) } else { self.w_nontarget * softplus(z) };
        }
        total
    }

    fn gradient_hessian(&self, params: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.dim() + 1;
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        let mut x = DVector::zeros(p);
        for (row, &t) in self.rows.iter().zip(self.labels) {
            let z = self.linear(params, row);
            let s = sigmoid(z);
            let (coef, weight) = if t {
                (-(1.0 - s) * self.w_target, self.w_target)
            } else {
                (s * self.w_nontarget, self.w_nontarget)
            };
            for (i, v) in row.iter().enumerate() {
                x[i] = *v;
            }
            x[p - 1] = 1.0;
            g.axpy(coef, &x, 1.0);
            h.ger(weight * s * (1.0 - s), &x, &x, 1.0);
        }
        (g, h)
    }

    /// Largest non-target linear score is below the smallest target one.
    fn separated_by(&self, params: &[f64]) -> bool {
        let mut max_n = f64::NEG_INFINITY;
        let mut min_t = f64::INFINITY;
        for (row, &t) in self.rows.iter().zip(self.labels) {
            let z = self.linear(params, row);
            if t {
                min_t = min_t.min(z);
            } else {
                max_n = max_n.max(z);
            }
        }
        max_n < min_t
    }
}

/// Damped Newton iterations with backtracking line search. `free` marks the
/// coordinates being optimized; the rest stay at their starting values.
fn newton(problem: &Problem, start: Vec<f64>, free: &[bool], max_iterations: usize) -> (Vec<f64>, usize, bool, f64) {
    let idx: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
    let mut params = start;
    let mut value = problem.objective(&params);
    let mut iterations = 0;
    loop {
        let (g_full, h_full) = problem.gradient_hessian(&params);
        let g = DVector::from_iterator(idx.len(), idx.iter().map(|&i| g_full[i]));
        let grad_norm = g.amax();
        if grad_norm < GRADIENT_TOLERANCE {
            return (params, iterations, true, grad_norm);
        }
        if iterations >= max_iterations {
            return (params, iterations, false, grad_norm);
        }
        let h = DMatrix::from_fn(idx.len(), idx.len(), |r, c| h_full[(idx[r], idx[c])]);
        let mut damping = 0.0;
        let step = loop {
            let mut hd = h.clone();
            for i in 0..idx.len() {
                hd[(i, i)] += damping;
            }
            if let Some(chol) = hd.cholesky() {
                break chol.solve(&g);
            }
            damping = if damping == 0.0 { 1e-12 * h.trace().max(1e-300) } else { damping * 10.0 };
        };
        let mut t = 1.0;
        let slope = -g.dot(&step);
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = params.clone();
            for (k, &i) in idx.iter().enumerate() {
                trial[i] -= t * step[k];
            }
            let v = problem.objective(&trial);
            if v <= value + 1e-4 * t * slope {
                params = trial;
                value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // No decrease representable in floating point: at the optimum to
            // working precision.
            return (params, iterations, true, grad_norm);
        }
    }
}

/// Fitted prior-weighted logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub offset: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The classes are linearly separable, so the optimum is at infinity and
    /// the returned parameters come from the iteration cap.
    pub separable: bool,
    pub gradient_norm: f64,
}

/// Prior-weighted cross-entropy of `w . x + b + logit(prior)`:
/// `prior * mean_tar softplus(-z) + (1 - prior) * mean_non softplus(z)`.
pub fn logistic_objective(rows: &[Vec<f64>], labels: &[bool], prior: f64, weights: &[f64], offset: f64) -> Result<f64, BackendError> {
    let problem = Problem::new(rows, labels, prior)?;
    if weights.len() != problem.dim() {
        return Err(BackendError::DimensionMismatch {
            expected: problem.dim(),
            got: weights.len(),
        });
    }
    let mut params = weights.to_vec();
    params.push(offset);
    Ok(problem.objective(&params))
}

/// Minimizes [`logistic_objective`] by Newton's method.
pub fn train_logistic(rows: &[Vec<f64>], labels: &[bool], prior: f64) -> Result<LogisticFit, BackendError> {
    if rows.is_empty() {
        return Err(BackendError::Precondition("no training trials".into()));
    }
    let problem = Problem::new(rows, labels, prior)?;
    let p = problem.dim() + 1;
    let (params, iterations, converged, gradient_norm) = newton(&problem, vec![0.0; p], &vec![true; p], MAX_ITERATIONS);
    let separable = problem.separated_by(&params);
    Ok(LogisticFit {
        weights: params[..p - 1].to_vec(),
        offset: params[p - 1],
        iterations,
        converged: converged && !separable,
        separable,
        gradient_norm,
    })
}

/// Order-preserving affine map `scale * s + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMap {
    pub scale: f64,
    pub offset: f64,
    pub effective_prior: f64,
    pub iterations: usize,
    pub converged: bool,
    pub separable: bool,
    /// The unconstrained optimum had a non-positive scale; the scale was
    /// pinned to a small positive value and only the offset refit.
    pub constrained: bool,
}

impl CalibrationMap {
    pub fn apply(&self, score: f64) -> f64 {
        self.scale * score + self.offset
    }

    pub fn apply_set(&self, scores: &ScoreSet) -> ScoreSet {
        scores.map(|s| self.apply(s))
    }
}

/// Objective minimized by [`fit_calibration`] at `(scale, offset)`.
pub fn calibration_objective(scores: &[(f64, bool)], prior: f64, scale: f64, offset: f64) -> Result<f64, BackendError> {
    let (rows, labels) = split(scores);
    logistic_objective(&rows, &labels, prior, &[scale], offset)
}

fn split(scores: &[(f64, bool)]) -> (Vec<Vec<f64>>, Vec<bool>) {
    (scores.iter().map(|(s, _)| vec![*s]).collect(), scores.iter().map(|(_, l)| *l).collect())
}

/// Logistic calibration of one system's scores.
pub fn fit_calibration(scores: &[(f64, bool)], effective_prior: f64) -> Result<CalibrationMap, BackendError> {
    let (rows, labels) = split(scores);
    let fit = train_logistic(&rows, &labels, effective_prior)?;
    let mut map = CalibrationMap {
        scale: fit.weights[0],
        offset: fit.offset,
        effective_prior,
        iterations: fit.iterations,
        converged: fit.converged,
        separable: fit.separable,
        constrained: false,
    };
    if !(map.scale > 0.0) {
        let problem = Problem::new(&rows, &labels, effective_prior)?;
        let (params, iterations, converged, _) = newton(&problem, vec![MIN_SCALE, 0.0], &[false, true], MAX_ITERATIONS);
        map.scale = MIN_SCALE;
        map.offset = params[1];
        map.iterations += iterations;
        map.converged = converged;
        map.constrained = true;
    }
    Ok(map)
}

/// Per-trial scores of several systems on a common key, in key order.
fn aligned(sets: &[ScoreSet], key: &TrialKey) -> Result<(Vec<Vec<f64>>, Vec<bool>), BackendError> {
    let mut rows = Vec::with_capacity(key.len());
    let mut labels = Vec::with_capacity(key.len());
    for r in key.records() {
        let row = sets
            .iter()
            .map(|s| s.get(&r.id))
            .collect::<Option<Vec<f64>>>()
            .ok_or(BackendError::CoverageMismatch)?;
        rows.push(row);
        labels.push(r.is_target());
    }
    Ok((rows, labels))
}

/// Linear fusion weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub weights: Vec<f64>,
    pub offset: f64,
    pub effective_prior: f64,
    pub converged: bool,
    pub separable: bool,
}

/// Trains fusion weights on the trials of `key` (every set must score
/// every key trial).
pub fn fit_fusion(sets: &[ScoreSet], key: &TrialKey, effective_prior: f64) -> Result<FusionModel, BackendError> {
    if sets.is_empty() {
        return Err(BackendError::Precondition("no score sets to fuse".into()));
    }
    let (rows, labels) = aligned(sets, key)?;
    let fit = train_logistic(&rows, &labels, effective_prior)?;
    Ok(FusionModel {
        weights: fit.weights,
        offset: fit.offset,
        effective_prior,
        converged: fit.converged,
        separable: fit.separable,
    })
}

/// `offset + sum_i weights[i] * sets[i]` per trial. All sets must cover the
/// same trials.
pub fn fuse(sets: &[ScoreSet], weights: &[f64], offset: f64) -> Result<ScoreSet, BackendError> {
    if sets.is_empty() {
        return Err(BackendError::Precondition("no score sets to fuse".into()));
    }
    if sets.len() != weights.len() {
        return Err(BackendError::DimensionMismatch {
            expected: sets.len(),
            got: weights.len(),
        });
    }
    let first = &sets[0];
    if sets[1..].iter().any(|s| s.len() != first.len() || s.iter().any(|(id, _)| !first.contains(id))) {
        return Err(BackendError::CoverageMismatch);
    }
    Ok(first
        .iter()
        .map(|(id, _)| {
            let v = sets
                .iter()
                .zip(weights)
                .map(|(s, w)| w * s.get(id).expect("coverage checked"))
                .sum::<f64>();
            (id.clone(), offset + v)
        })
        .collect())
}
