//! Single-decision asset allocation domain.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// Return distribution of one asset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReturnDistribution {
    Normal { mean: f64, std: f64 },
    Pareto { shape: f64, scale: f64 },
}

impl ReturnDistribution {
    fn validate(&self) -> Result<()> {
        match *self {
            ReturnDistribution::Normal { mean, std } if mean.is_finite() && std > 0.0 && std.is_finite() => {
                Ok(())
            }
            ReturnDistribution::Pareto { shape, scale } if shape > 1.0 && scale > 0.0 && scale.is_finite() => {
                Ok(())
            }
            _ => Err(Error::config("assets", format!("invalid return distribution {self:?}"))),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ReturnDistribution::Normal { mean, std } => {
                Normal::new(mean, std).expect("validated").cdf(x)
            }
            ReturnDistribution::Pareto { shape, scale } => {
                if x <= scale {
                    0.0
                } else {
                    1.0 - (scale / x).powf(shape)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ReturnDistribution::Normal { mean, .. } => mean,
            ReturnDistribution::Pareto { shape, scale } => shape * scale / (shape - 1.0),
        }
    }

    /// `E[X; X < b]`.
    fn lower_partial_mean(&self, b: f64) -> f64 {
        match *self {
            ReturnDistribution::Normal { mean, std } => {
                let z = (b - mean) / std;
                mean * self.cdf(b) - std * std_normal_pdf(z)
            }
            ReturnDistribution::Pareto { .. } => self.mean() - self.upper_partial_mean(b),
        }
    }

    /// `E[X; X > b]`.
    fn upper_partial_mean(&self, b: f64) -> f64 {
        match *self {
            ReturnDistribution::Normal { mean, std } => {
                let z = (b - mean) / std;
                mean * (1.0 - self.cdf(b)) + std * std_normal_pdf(z)
            }
            ReturnDistribution::Pareto { shape, scale } => {
                let b = b.max(scale);
                shape * scale.powf(shape) * b.powf(1.0 - shape) / (shape - 1.0)
            }
        }
    }
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssetDomainSpec {
    pub assets: [ReturnDistribution; 3],
    /// Number of interior bins between `lower` and `upper`.
    pub bins: usize,
    pub lower: f64,
    pub upper: f64,
    pub discount: f64,
}

impl Default for AssetDomainSpec {
    fn default() -> Self {
        Self {
            assets: [
                ReturnDistribution::Normal { mean: 0.0, std: 1.0 },
                ReturnDistribution::Normal { mean: 4.0, std: 6.0 },
                ReturnDistribution::Pareto { shape: 1.5, scale: 1.0 },
            ],
            bins: 41,
            lower: -20.0,
            upper: 30.0,
            discount: 0.99,
        }
    }
}

impl AssetDomainSpec {
    pub fn validate(&self) -> Result<()> {
        for a in &self.assets {
            a.validate()?;
        }
        if self.bins == 0 {
            return Err(Error::config("bins", "must be at least 1"));
        }
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::config("lower", "bin range must satisfy lower < upper"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::config("discount", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = (self.upper - self.lower) / self.bins as f64;
        (0..=self.bins).map(|i| self.lower + w * i as f64).collect()
    }

    /// Number of outcome states: interior bins plus two overflow bins.
    pub fn n_outcomes(&self) -> usize {
        self.bins + 2
    }

    /// States: decision, outcomes, terminal.
    pub fn n_states(&self) -> usize {
        self.n_outcomes() + 2
    }
}

/// Discretized outcome distributions, exported for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetMetadata {
    pub edges: Vec<f64>,
    /// Reward of each outcome state, lower overflow first and upper overflow last.
    pub outcome_values: Vec<f64>,
    /// Per asset, probability of each outcome.
    pub outcome_probabilities: Vec<Vec<f64>>,
    pub decision_state: usize,
    pub first_outcome_state: usize,
    pub terminal_state: usize,
}

impl AssetMetadata {
    pub fn expected_return(&self, asset: usize) -> f64 {
        self.outcome_probabilities[asset]
            .iter()
            .zip(&self.outcome_values)
            .map(|(p, v)| p * v)
            .sum()
    }
}

/// Builds the asset MDP.
///
/// State 0 chooses an asset, the next state is the outcome bin and pays its
/// value, after which the process sits in a zero-reward absorbing state.
/// Overflow bins pay the conditional mean of the tail they absorb, pooled over
/// the assets.
pub fn make_asset_env(spec: &AssetDomainSpec) -> Result<(TabularMdp, AssetMetadata)> {
    spec.validate()?;
    let edges = spec.edges();
    let k = spec.n_outcomes();
    let n = spec.n_states();
    let terminal = n - 1;

    let mut probs = Vec::with_capacity(3);
    for dist in &spec.assets {
        let mut row = Vec::with_capacity(k);
        row.push(dist.cdf(edges[0]));
        for w in edges.windows(2) {
            row.push((dist.cdf(w[1]) - dist.cdf(w[0])).max(0.0));
        }
        row.push(1.0 - dist.cdf(edges[spec.bins]));
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
        probs.push(row);
    }

    let width = edges[1] - edges[0];
    let mut values = Vec::with_capacity(k);
    let (low_mass, low_partial) = spec.assets.iter().fold((0.0, 0.0), |(m, e), d| {
        (m + d.cdf(spec.lower), e + d.lower_partial_mean(spec.lower))
    });
    values.push(if low_mass > 1e-300 { low_partial / low_mass } else { spec.lower - width / 2.0 });
    values.extend(edges.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let (high_mass, high_partial) = spec.assets.iter().fold((0.0, 0.0), |(m, e), d| {
        (m + 1.0 - d.cdf(spec.upper), e + d.upper_partial_mean(spec.upper))
    });
    values.push(if high_mass > 1e-300 { high_partial / high_mass } else { spec.upper + width / 2.0 });

    let mut rewards = vec![0.0; n * 3];
    let mut transitions = vec![0.0; n * 3 * n];
    for a in 0..3 {
        transitions[a * n + 1..a * n + 1 + k].copy_from_slice(&probs[a]);
    }
    for j in 0..k {
        let s = 1 + j;
        for a in 0..3 {
            rewards[s * 3 + a] = values[j];
            transitions[(s * 3 + a) * n + terminal] = 1.0;
        }
    }
    for a in 0..3 {
        transitions[(terminal * 3 + a) * n + terminal] = 1.0;
    }
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;

    let mdp = TabularMdp::new(n, 3, rewards, transitions, spec.discount, initial)?;
    let meta = AssetMetadata {
        edges,
        outcome_values: values,
        outcome_probabilities: probs,
        decision_state: 0,
        first_outcome_state: 1,
        terminal_state: terminal,
    };
    Ok((mdp, meta))
}
