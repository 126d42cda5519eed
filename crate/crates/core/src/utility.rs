//! Exponential utility of a distribution over action values, and the rules
//! that turn a pair of critic outputs into a single value.
//!
//! The utility of a value distribution `Q` at risk level `λ` is
//! `(1/λ)·log E[exp(λQ)]` (the mean when `λ = 0`). For a Laplace-distributed
//! `Q` with mean `μ` and standard deviation `σ`, substituting
//! `λ = √2·κ/σ` gives the closed form `μ + g(κ)·σ` with
//!
//! ```text
//! g(κ) = log(1/(1−κ²)) / (√2·κ),   g(0) = 0,   κ ∈ (−1, 1).
//! ```
//!
//! For a Gaussian `Q` the utility is `μ + λσ²/2` for every real `λ`.
//!
//! Twin critics `q1, q2` are read as two samples of `Q`: `μ = (q1+q2)/2`
//! and `σ = |q1−q2|/2`. With that statistic `μ − σ = min(q1, q2)`, so
//! `g(κ) = −1` is exactly the min-clipped target.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// κ at which `g(κ) = −1` (min-clipping), as published to six decimals.
pub const KAPPA_MIN_CLIP: f64 = -0.831559;

/// κ at which `g(κ) = −√2`, the pessimistic end of the TOP β-rule.
pub const KAPPA_TOP_PESSIMISTIC: f64 = -0.916563;

/// Largest |κ| accepted by run configurations.
pub const KAPPA_CONFIG_BOUND: f64 = 0.999999;

/// Spread weights this close to zero are treated as exact min-clipping.
///
/// κ is specified to six decimals and `g' ≈ 3.4` near the min-clip root, so
/// rounding κ moves `g` by at most ~2e-6 and the spread weight
/// `(1 + g)/2` by at most ~1e-6.
pub const MIN_CLIP_SNAP: f64 = 1e-6;

const SERIES_CUTOFF: f64 = 1e-4;

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::KappaDomain(kappa))
    }
}

/// Laplace utility coefficient `g(κ)`.
pub fn g(kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if kappa.abs() < SERIES_CUTOFF {
        // log(1/(1−κ²))/(√2κ) = κ/√2 + κ³/(2√2) + O(κ⁵)
        return Ok(kappa * FRAC_1_SQRT_2 + kappa.powi(3) * FRAC_1_SQRT_2 / 2.0);
    }
    Ok(-(-kappa * kappa).ln_1p() / (SQRT_2 * kappa))
}

/// Inverse of [`g`]: the κ with `g(κ) = target`, found by bisection.
pub fn kappa_for_coefficient(target: f64) -> Result<f64> {
    if !target.is_finite() {
        return Err(Error::config(format!("coefficient must be finite, got {target}")));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = if target < 0.0 { (-1.0f64, 0.0f64) } else { (0.0, 1.0) };
    // Shrink away from the singular endpoint.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pick = if (g(lo)? - target).abs() <= (g(hi)? - target).abs() {
        lo
    } else {
        hi
    };
    Ok(pick)
}

/// Mean and scale of the two-sample value distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticDistribution {
    pub mu: f64,
    pub sigma: f64,
}

impl CriticDistribution {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::config(format!(
                "critic distribution needs finite mu and sigma >= 0, got ({mu}, {sigma})"
            )));
        }
        Ok(Self { mu, sigma })
    }
}

/// `μ = (q1+q2)/2`, `σ = |q1−q2|/2`.
pub fn twin_stats_laplace(q1: f64, q2: f64) -> CriticDistribution {
    CriticDistribution {
        mu: 0.5 * (q1 + q2),
        sigma: 0.5 * (q1 - q2).abs(),
    }
}

/// `μ = (q1+q2)/2`, `σ = sqrt(Σ_k (q_k − μ)²) = |q1−q2|/√2`.
pub fn twin_stats_top(q1: f64, q2: f64) -> CriticDistribution {
    CriticDistribution {
        mu: 0.5 * (q1 + q2),
        sigma: (q1 - q2).abs() * FRAC_1_SQRT_2,
    }
}

/// `μ + g(κ)·σ`.
pub fn laplace_utility(d: CriticDistribution, kappa: f64) -> Result<f64> {
    Ok(d.mu + g(kappa)? * d.sigma)
}

/// `μ + λσ²/2`.
pub fn gaussian_utility(mu: f64, sigma_sq: f64, lambda: f64) -> f64 {
    debug_assert!(sigma_sq >= 0.0, "variance must be nonnegative");
    mu + lambda * sigma_sq / 2.0
}

/// How two critic outputs collapse into one value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AggregationRule {
    /// `μ + g(κ)σ` with `σ = |q1−q2|/2`.
    #[serde(rename = "laplace")]
    LaplaceUtility { kappa: f64 },
    /// `μ + λσ²/2` with `σ = |q1−q2|/2`.
    #[serde(rename = "gaussian")]
    GaussianUtility { lambda: f64 },
    /// `min(q1, q2)`.
    MinClip,
    /// `μ + βσ̄` with `σ̄ = |q1−q2|/√2`.
    TopBeta { beta: f64 },
    /// `(q1+q2)/2`.
    Mean,
}

impl AggregationRule {
    pub fn laplace(kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(AggregationRule::LaplaceUtility { kappa })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AggregationRule::LaplaceUtility { kappa } => check_kappa(kappa),
            AggregationRule::GaussianUtility { lambda: x } | AggregationRule::TopBeta { beta: x } => {
                if x.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config(format!("rule parameter must be finite, got {x}")))
                }
            }
            AggregationRule::MinClip | AggregationRule::Mean => Ok(()),
        }
    }

    /// Resolves the rule into its evaluation form.
    pub fn compile(&self) -> Result<Aggregator> {
        self.validate()?;
        let weight = match *self {
            AggregationRule::LaplaceUtility { kappa } => 0.5 * (1.0 + g(kappa)?),
            AggregationRule::TopBeta { beta } => 0.5 + beta * FRAC_1_SQRT_2,
            AggregationRule::MinClip => 0.0,
            AggregationRule::Mean => 0.5,
            AggregationRule::GaussianUtility { lambda } => {
                return Ok(Aggregator::Quadratic { lambda });
            }
        };
        let weight = if weight.abs() <= MIN_CLIP_SNAP { 0.0 } else { weight };
        Ok(Aggregator::Spread { weight })
    }
}

/// Compiled aggregation rule with value and gradient.
///
/// Every rule except the Gaussian one is linear in `(min, |q1−q2|)`:
/// `min(q1,q2) + w·|q1−q2|`. Laplace: `w = (1+g)/2`; TOP: `w = 1/2 + β/√2`;
/// min-clip: `w = 0`; mean: `w = 1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregator {
    Spread {
        weight: f64,
    },
    /// `μ + λ(q1−q2)²/8`.
    Quadratic {
        lambda: f64,
    },
}

impl Aggregator {
    #[inline]
    pub fn value(&self, q1: f64, q2: f64) -> f64 {
        match *self {
            Aggregator::Spread { weight } => {
                let lo = q1.min(q2);
                if weight == 0.0 {
                    lo
                } else {
                    lo + weight * (q1 - q2).abs()
                }
            }
            Aggregator::Quadratic { lambda } => {
                let d = q1 - q2;
                0.5 * (q1 + q2) + lambda * d * d / 8.0
            }
        }
    }

    /// Partial derivatives with respect to `(q1, q2)`. At a tie the
    /// absolute value contributes subgradient 0, giving `(1/2, 1/2)`.
    #[inline]
    pub fn grad(&self, q1: f64, q2: f64) -> (f64, f64) {
        match *self {
            Aggregator::Spread { weight } => {
                if q1 < q2 {
                    (1.0 - weight, weight)
                } else if q1 > q2 {
                    (weight, 1.0 - weight)
                } else {
                    (0.5, 0.5)
                }
            }
            Aggregator::Quadratic { lambda } => {
                let d = q1 - q2;
                (0.5 + lambda * d / 4.0, 0.5 - lambda * d / 4.0)
            }
        }
    }
}

/// Applies `rule` to one critic pair.
pub fn aggregate(rule: AggregationRule, q1: f64, q2: f64) -> Result<f64> {
    Ok(rule.compile()?.value(q1, q2))
}

/// Pessimism/optimism levels for the critic target and the actor objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityParams {
    pub kappa_critic: f64,
    pub kappa_actor: f64,
}

impl UtilityParams {
    pub fn new(kappa_critic: f64, kappa_actor: f64) -> Result<Self> {
        check_kappa(kappa_critic)?;
        check_kappa(kappa_actor)?;
        Ok(Self {
            kappa_critic,
            kappa_actor,
        })
    }

    /// Min-clipped critic and actor (standard SAC).
    pub fn sac() -> Self {
        Self {
            kappa_critic: KAPPA_MIN_CLIP,
            kappa_actor: KAPPA_MIN_CLIP,
        }
    }

    pub fn rules(&self) -> (AggregationRule, AggregationRule) {
        (
            AggregationRule::LaplaceUtility {
                kappa: self.kappa_critic,
            },
            AggregationRule::LaplaceUtility {
                kappa: self.kappa_actor,
            },
        )
    }
}
