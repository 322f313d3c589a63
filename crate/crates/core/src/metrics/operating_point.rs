use serde::{Deserialize, Serialize};

use super::MetricError;

/// Ratio of false-alarm to miss cost weighted by prior odds:
/// `(c_fa / c_miss) * (1 - p_target) / p_target`.
pub fn beta(c_miss: f64, c_fa: f64, p_target: f64) -> Result<f64, MetricError> {
    if !(c_miss > 0.0 && c_miss.is_finite()) {
        return Err(MetricError::InvalidOperatingPoint(format!("c_miss must be > 0, got {c_miss}")));
    }
    if !(c_fa > 0.0 && c_fa.is_finite()) {
        return Err(MetricError::InvalidOperatingPoint(format!("c_fa must be > 0, got {c_fa}")));
    }
    if !(p_target > 0.0 && p_target < 1.0) {
        return Err(MetricError::InvalidOperatingPoint(format!(
            "p_target must lie in (0, 1), got {p_target}"
        )));
    }
    // (1 - p) / p written as 1/p - 1, which is exact for the usual priors
    Ok((c_fa / c_miss) * (1.0 / p_target - 1.0))
}

/// A (C_miss, C_fa, P_target) triple. The decision threshold is `ln(beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    c_miss: f64,
    c_fa: f64,
    p_target: f64,
    beta: f64,
}

impl OperatingPoint {
    pub fn new(c_miss: f64, c_fa: f64, p_target: f64) -> Result<Self, MetricError> {
        let beta = beta(c_miss, c_fa, p_target)?;
        Ok(OperatingPoint {
            c_miss,
            c_fa,
            p_target,
            beta,
        })
    }

    pub fn c_miss(&self) -> f64 {
        self.c_miss
    }

    pub fn c_fa(&self) -> f64 {
        self.c_fa
    }

    pub fn p_target(&self) -> f64 {
        self.p_target
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn threshold(&self) -> f64 {
        self.beta.ln()
    }

    /// Parses `c_miss,c_fa,p_target`.
    pub fn parse(s: &str) -> Result<Self, MetricError> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| MetricError::InvalidOperatingPoint(format!("{s:?}: {e}")))?;
        match parts.as_slice() {
            [m, f, p] => OperatingPoint::new(*m, *f, *p),
            _ => Err(MetricError::InvalidOperatingPoint(format!(
                "{s:?}: expected c_miss,c_fa,p_target"
            ))),
        }
    }
}

/// The two primary operating points: C_miss = C_fa = 1 with P_target of
/// 0.01 and 0.05.
pub fn default_points() -> Vec<OperatingPoint> {
    vec![
        OperatingPoint::new(1.0, 1.0, 0.01).expect("valid"),
        OperatingPoint::new(1.0, 1.0, 0.05).expect("valid"),
    ]
}

/// Normalized detection cost `p_miss + beta * p_fa`.
pub fn c_norm(p_miss: f64, p_fa: f64, point: &OperatingPoint) -> f64 {
    p_miss + point.beta * p_fa
}
