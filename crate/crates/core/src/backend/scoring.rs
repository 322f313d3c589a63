use super::BackendError;

/// Default number of top cohort scores kept by adaptive s-norm.
pub const DEFAULT_SNORM_TOP_K: usize = 200;

const SIGMA_FLOOR: f64 = 1e-6;

/// Cosine similarity `a.b / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64, BackendError> {
    if a.len() != b.len() {
        return Err(BackendError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(na > 0.0 && nb > 0.0) {
        return Err(BackendError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean and population standard deviation (floored) of the `top_k` largest
/// values.
fn top_stats(cohort: &[f64], top_k: usize) -> (f64, f64) {
    let mut sorted = cohort.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = &sorted[..top_k];
    let mean = top.iter().sum::<f64>() / top_k as f64;
    let var = top.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / top_k as f64;
    (mean, var.sqrt().max(SIGMA_FLOOR))
}

/// Symmetric adaptive score normalization:
/// `0.5 * ((raw - mu_e) / sd_e + (raw - mu_t) / sd_t)` where each side's
/// statistics come from its `top_k` highest cohort scores.
pub fn adaptive_snorm(raw: f64, enroll_cohort: &[f64], test_cohort: &[f64], top_k: usize) -> Result<f64, BackendError> {
    if top_k < 2 {
        return Err(BackendError::Precondition(format!("s-norm top_k must be at least 2, got {top_k}")));
    }
    if enroll_cohort.len() < top_k || test_cohort.len() < top_k {
        return Err(BackendError::Precondition(format!(
            "s-norm cohorts have {} and {} scores, need {top_k}",
            enroll_cohort.len(),
            test_cohort.len()
        )));
    }
    if enroll_cohort.iter().chain(test_cohort).any(|v| !v.is_finite()) {
        return Err(BackendError::Precondition("non-finite cohort score".into()));
    }
    let (me, se) = top_stats(enroll_cohort, top_k);
    let (mt, st) = top_stats(test_cohort, top_k);
    Ok(0.5 * ((raw - me) / se + (raw - mt) / st))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_cases() {
        assert!((cosine_score(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_score(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((cosine_score(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - 0.707107).abs() < 1e-6);
        assert!(matches!(cosine_score(&[0.0, 0.0], &[1.0, 1.0]), Err(BackendError::ZeroVector)));
    }

    #[test]
    fn snorm_centering_and_symmetry() {
        let e = [1.0, 2.0, 3.0, -5.0];
        let t = [0.0, 4.0, 2.0, -1.0];
        // top-3 means: 2 and 2
        assert_eq!(adaptive_snorm(2.0, &e, &t, 3).unwrap(), 0.0);
        let a = adaptive_snorm(0.7, &e, &t, 3).unwrap();
        let b = adaptive_snorm(0.7, &t, &e, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn snorm_constant_cohort_floored() {
        let z = adaptive_snorm(1.0, &[0.5; 5], &[0.5; 5], 4).unwrap();
        assert!(z.is_finite());
        assert!((z - 0.5 / SIGMA_FLOOR).abs() < 1e-3);
    }

    #[test]
    fn snorm_preconditions() {
        assert!(adaptive_snorm(0.0, &[1.0, 2.0], &[1.0, 2.0], 1).is_err());
        assert!(adaptive_snorm(0.0, &[1.0, 2.0], &[1.0, 2.0, 3.0], 3).is_err());
    }
}
