//! Concentration radii for an empirical Bernoulli mean.
//!
//! Every radius is `+∞` when `count == 0`: with no observations the
//! confidence set is the whole of `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of a radius: the probability `p` it is evaluated at, the sample
/// count `n`, and `L1 = log(2/δ1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceQuery {
    pub prob: f64,
    pub count: u64,
    pub log_term: f64,
}

impl ConfidenceQuery {
    pub fn new(prob: f64, count: u64, log_term: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::Domain(format!("probability {prob} outside [0, 1]")));
        }
        if !(log_term > 0.0) {
            return Err(Error::Domain(format!(
                "log term {log_term} must be positive"
            )));
        }
        Ok(Self {
            prob,
            count,
            log_term,
        })
    }

    fn variance(&self) -> f64 {
        self.prob * (1.0 - self.prob)
    }

    fn per_sample(&self) -> f64 {
        self.log_term / self.count as f64
    }
}

/// `L1 = log(2/δ1)`.
pub fn log_term(delta1: f64) -> f64 {
    (2.0 / delta1).ln()
}

/// Hoeffding radius `√(L1 / 2n)`.
pub fn hoeffding_radius(q: &ConfidenceQuery) -> f64 {
    if q.count == 0 {
        return f64::INFINITY;
    }
    (q.per_sample() / 2.0).sqrt()
}

/// Bernstein radius `√(2 L1 p(1-p) / n) + 2 L1 / 3n`.
pub fn bernstein_radius(q: &ConfidenceQuery) -> f64 {
    if q.count == 0 {
        return f64::INFINITY;
    }
    let l = q.per_sample();
    (2.0 * l * q.variance()).sqrt() + 2.0 * l / 3.0
}

/// The tighter of the Bernstein and Hoeffding radii.
pub fn confidence_radius(q: &ConfidenceQuery) -> f64 {
    bernstein_radius(q).min(hoeffding_radius(q))
}

/// Bound on `|p - p̃|` when both `p` and `p̃` lie within their own
/// [`confidence_radius`] of the same empirical estimate; `q.prob` is `p̃`.
///
/// `√(8 L1 p̃(1-p̃) / n) + 2 (L1/n)^{3/4} + 4 L1 / 3n`.
pub fn combined_radius(q: &ConfidenceQuery) -> f64 {
    if q.count == 0 {
        return f64::INFINITY;
    }
    let l = q.per_sample();
    (8.0 * l * q.variance()).sqrt() + 2.0 * l.powf(0.75) + 4.0 * l / 3.0
}
