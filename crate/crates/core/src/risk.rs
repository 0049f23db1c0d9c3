//! Entropic risk measure and the exponential-utility Bellman operator.
//!
//! For a discrete random variable `X` with outcomes `x_i` and weights `w_i`,
//!
//! ```text
//! rho_alpha(X) = -(1/alpha) * ln( sum_i w_i * exp(-alpha * x_i) )
//! ```
//!
//! The log-sum-exp is evaluated after shifting by the largest exponent so that
//! `alpha * |x|` in the hundreds (inventory returns) does not overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// Below this risk-aversion the measure is replaced by the weighted mean.
pub const SMALL_ALPHA: f64 = 1e-10;

/// Largest exponent fed to `exp` by the raw exponential-utility helpers.
const MAX_EXPONENT: f64 = 700.0;

/// A finitely supported distribution: outcomes with normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSamples {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSamples {
    /// Builds a distribution, normalizing `weights` to sum to one.
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("distribution has no outcomes"));
        }
        if values.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite outcome {v}")));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights sum to zero"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { values, weights })
    }

    /// Equal weight on every outcome.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![1.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum()
    }

    /// Same weights, every outcome shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|x| x + c).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Same weights, every outcome multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            values: self.values.iter().map(|x| x * k).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// Risk-aversion `alpha` and the cost tolerance `beta` of the constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl RiskConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let cfg = Self { alpha, beta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::config("alpha", format!("must be > 0, got {}", self.alpha)));
        }
        if !self.beta.is_finite() {
            return Err(Error::config("beta", "must be finite"));
        }
        Ok(())
    }

    /// `exp(-alpha * beta)`, the threshold the model-averaged utility is compared to.
    pub fn threshold(&self) -> f64 {
        neg_exp(self.alpha, self.beta)
    }
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 1.0,
        }
    }
}

/// `exp(-alpha * x)` with the exponent saturated at 700.
pub fn neg_exp(alpha: f64, x: f64) -> f64 {
    (-alpha * x).min(MAX_EXPONENT).exp()
}

/// Entropic risk (certainty equivalent) of a weighted distribution.
pub fn entropic_risk(dist: &WeightedSamples, alpha: f64) -> Result<f64> {
    entropic_risk_of(dist.values(), dist.weights(), alpha)
}

/// Slice form of [`entropic_risk`]; `weights` must already be normalized.
pub fn entropic_risk_of(values: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
    }
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::invalid("values and weights must be nonempty and equal length"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite outcome"));
    }
    if alpha < SMALL_ALPHA {
        return Ok(values.iter().zip(weights).map(|(x, w)| x * w).sum());
    }
    let shift = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(x, _)| -alpha * x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::invalid("all weights are zero"));
    }
    let sum: f64 = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(x, w)| w * (-alpha * x - shift).exp())
        .sum();
    Ok(-(shift + sum.ln()) / alpha)
}

/// One application of the exponential-utility Bellman operator:
/// `T[v](s) = max_a [ -exp(-R(s,a)) + gamma * sum_s' P(s'|s,a) v(s') ]`.
///
/// The reward enters through `-exp(-R)` while the continuation is linear in `v`.
pub fn entropic_bellman(mdp: &TabularMdp, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != mdp.n_states() {
        return Err(Error::invalid(format!(
            "value vector has length {} but the model has {} states",
            v.len(),
            mdp.n_states()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("value vector must be finite"));
    }
    let gamma = mdp.discount();
    let out = (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| {
                    let cont: f64 = mdp.row(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
                    -(-mdp.reward(s, a)).exp() + gamma * cont
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(out)
}
