use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::erf::erfc;

use super::DetError;

// Rational approximation coefficients (P. J. Acklam), relative error
// about 1.15e-9 before refinement.
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const P_LOW: f64 = 0.02425;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Lower half only: p in (0, 0.5].
fn lower_quantile(p: f64) -> f64 {
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // one Newton step on Phi(x) - p
    let e = normal_cdf(x) - p;
    x - e * (2.0 * PI).sqrt() * (0.5 * x * x).exp()
}

/// Inverse of the standard normal CDF for p in the open interval (0, 1).
pub fn probit(p: f64) -> Result<f64, DetError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(DetError::ProbabilityOutOfRange(p));
    }
    if p <= 0.5 {
        Ok(lower_quantile(p))
    } else {
        Ok(-lower_quantile(1.0 - p))
    }
}

/// Probit that maps 0 and 1 to negative and positive infinity, for DET
/// axes that include the corner points.
pub fn probit_extended(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        probit(p).expect("in range")
    }
}
