//! Detection statistics of the two atoms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{FinalCoefficients, ProtocolAngles};
use crate::qstate::NORM_TOLERANCE;

/// Joint detection probabilities, first letter atom 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub p_gg: f64,
    pub p_ge: f64,
    pub p_eg: f64,
    pub p_ee: f64,
}

impl OutcomeDistribution {
    pub fn new(p_gg: f64, p_ge: f64, p_eg: f64, p_ee: f64) -> Result<Self> {
        let dist = Self {
            p_gg,
            p_ge,
            p_eg,
            p_ee,
        };
        let probs = dist.to_array();
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("probability"));
        }
        if probs
            .iter()
            .any(|&p| !(-NORM_TOLERANCE..=1.0 + NORM_TOLERANCE).contains(&p))
        {
            return Err(Error::InvalidConfig(format!(
                "probabilities must lie in [0, 1], got {probs:?}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized { norm_sqr: total });
        }
        Ok(dist)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.p_gg, self.p_ge, self.p_eg, self.p_ee]
    }

    /// Probability that atom 1 is found excited.
    pub fn p_e1(&self) -> f64 {
        self.p_eg + self.p_ee
    }

    /// Probability that atom 2 is found excited.
    pub fn p_e2(&self) -> f64 {
        self.p_ge + self.p_ee
    }
}

pub fn distribution_from_coefficients(coeffs: &FinalCoefficients) -> Result<OutcomeDistribution> {
    let [gg, ge, eg, ee] = coeffs.to_array().map(|z| z.norm_sqr());
    OutcomeDistribution::new(gg, ge, eg, ee)
}

/// `P̄ = P_ee − P_e1·P_e2 + 1/4`.
pub fn corrected_joint_probability(dist: &OutcomeDistribution) -> f64 {
    dist.p_ee - dist.p_e1() * dist.p_e2() + 0.25
}

/// Closed form of `P̄` for real amplitudes `(a, b, c, d)`.
pub fn real_coefficient_pbar(a: f64, b: f64, c: f64, d: f64, angles: &ProtocolAngles) -> Result<f64> {
    let norm_sqr = a * a + b * b + c * c + d * d;
    if !norm_sqr.is_finite() || !angles.is_finite() {
        return Err(Error::NonFinite("real-coefficient input"));
    }
    if (norm_sqr - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NotNormalized { norm_sqr });
    }
    let (s1, c1) = (2.0 * angles.theta1).sin_cos();
    let (s2, c2) = (2.0 * angles.theta2).sin_cos();
    let (phi1, phi2) = (angles.phi1, angles.phi2);
    let fringe = 2.0 * (a * d + b * c) * c1 * c2
        + 2.0 * (a * c - b * d) * phi2.cos() * c1 * s2
        + 2.0 * (a * b - c * d) * phi1.cos() * s1 * c2
        + ((a * a + d * d) * (phi1 + phi2).cos() - (b * b + c * c) * (phi1 - phi2).cos()) * s1 * s2;
    Ok((fringe * 2.0 * (a * d - b * c) + 1.0) / 4.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShotCounts {
    pub n_gg: u64,
    pub n_ge: u64,
    pub n_eg: u64,
    pub n_ee: u64,
}

impl ShotCounts {
    pub fn new(n_gg: u64, n_ge: u64, n_eg: u64, n_ee: u64) -> Self {
        Self {
            n_gg,
            n_ge,
            n_eg,
            n_ee,
        }
    }

    pub fn to_array(self) -> [u64; 4] {
        [self.n_gg, self.n_ge, self.n_eg, self.n_ee]
    }

    pub fn n_total(&self) -> u64 {
        self.to_array().iter().sum()
    }

    /// Empirical frequencies. `n_total` must be positive.
    pub fn frequencies(&self) -> [f64; 4] {
        let n = self.n_total() as f64;
        self.to_array().map(|k| k as f64 / n)
    }
}

/// Generator behind every seeded draw in the crate.
pub fn shot_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform on `[0, 1)` from the top 53 bits of one `u64`.
fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `n` independent categorical draws against the cumulative distribution.
pub fn sample_shots(dist: &OutcomeDistribution, n: u64, seed: u64) -> Result<ShotCounts> {
    if n == 0 {
        return Err(Error::InsufficientShots {
            what: "shot sampling",
            required: 1,
            got: 0,
        });
    }
    let probs = dist.to_array().map(|p| p.max(0.0));
    let total: f64 = probs.iter().sum();
    let c0 = probs[0] / total;
    let c1 = c0 + probs[1] / total;
    let c2 = c1 + probs[2] / total;
    // a draw above the rounded cumulative sum must never land on an empty category
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(3);

    let mut rng = shot_rng(seed);
    let mut counts = [0u64; 4];
    for _ in 0..n {
        let u = unit_f64(&mut rng);
        let k = if u < c0 {
            0
        } else if u < c1 {
            1
        } else if u < c2 {
            2
        } else {
            last
        };
        counts[k] += 1;
    }
    let [gg, ge, eg, ee] = counts;
    Ok(ShotCounts::new(gg, ge, eg, ee))
}

/// Plug-in estimate of `P̄` with its first-order standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PbarEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_total: u64,
}

/// Evaluates `P̄` on the empirical frequencies. The standard error propagates
/// the multinomial covariance `(diag(p) − ppᵀ)/n` through the gradient
/// `(0, −P_e1, −P_e2, 1 − P_e1 − P_e2)`.
///
/// The product term makes the estimator biased by `O(1/n)`.
pub fn estimate_pbar(counts: &ShotCounts) -> Result<PbarEstimate> {
    let n_total = counts.n_total();
    if n_total < 2 {
        return Err(Error::InsufficientShots {
            what: "P̄ estimate",
            required: 2,
            got: n_total,
        });
    }
    let [p_gg, p_ge, p_eg, p_ee] = counts.frequencies();
    let freq = OutcomeDistribution {
        p_gg,
        p_ge,
        p_eg,
        p_ee,
    };
    let value = corrected_joint_probability(&freq);

    let (e1, e2) = (freq.p_e1(), freq.p_e2());
    let grad = [0.0, -e1, -e2, 1.0 - e1 - e2];
    let p = freq.to_array();
    let mean: f64 = p.iter().zip(grad.iter()).map(|(p, g)| p * g).sum();
    let second: f64 = p.iter().zip(grad.iter()).map(|(p, g)| p * g * g).sum();
    let variance = ((second - mean * mean) / n_total as f64).max(0.0);
    Ok(PbarEstimate {
        value,
        std_error: variance.sqrt(),
        n_total,
    })
}
