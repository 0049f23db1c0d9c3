//! Tabular softmax policies.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::sample_index;

/// Logits are clipped to this magnitude so no action probability reaches zero.
pub const LOGIT_CLIP: f64 = 50.0;

/// `pi(a|s) = exp(theta[s,a]) / sum_b exp(theta[s,b])` with one logit per state-action pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    n_states: usize,
    n_actions: usize,
    logits: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            logits: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_logits(n_states: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("policy needs at least one state and action"));
        }
        if logits.len() != n_states * n_actions {
            return Err(Error::invalid(format!(
                "expected {} logits, got {}",
                n_states * n_actions,
                logits.len()
            )));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("logits must be finite"));
        }
        let mut p = Self {
            n_states,
            n_actions,
            logits,
        };
        p.clip();
        Ok(p)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of parameters, `S * A`.
    pub fn dim(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Euclidean norm of the parameter vector.
    pub fn norm(&self) -> f64 {
        self.logits.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `theta += step * direction`, then clip.
    pub fn apply_update(&mut self, direction: &[f64], step: f64) {
        debug_assert_eq!(direction.len(), self.logits.len());
        for (l, d) in self.logits.iter_mut().zip(direction) {
            *l += step * d;
        }
        self.clip();
    }

    fn clip(&mut self) {
        for l in &mut self.logits {
            if l.is_nan() {
                *l = 0.0;
            }
            *l = l.clamp(-LOGIT_CLIP, LOGIT_CLIP);
        }
    }

    fn state_logits(&self, s: usize) -> &[f64] {
        &self.logits[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Max-shifted softmax over the logits of state `s`.
    pub fn action_probabilities(&self, s: usize) -> Vec<f64> {
        let logits = self.state_logits(s);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    /// `grad_theta log pi(a|s)` as a dense vector.
    pub fn score(&self, s: usize, a: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.add_score(s, a, 1.0, &mut g);
        g
    }

    /// `out += scale * grad_theta log pi(a|s)`; only the block of state `s` is touched.
    pub fn add_score(&self, s: usize, a: usize, scale: f64, out: &mut [f64]) {
        let probs = self.action_probabilities(s);
        let block = &mut out[s * self.n_actions..(s + 1) * self.n_actions];
        for (b, (o, p)) in block.iter_mut().zip(&probs).enumerate() {
            let indicator = if b == a { 1.0 } else { 0.0 };
            *o += scale * (indicator - p);
        }
    }

    /// Inverse-CDF draw from `pi(.|s)`.
    pub fn sample_action<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_index(&self.action_probabilities(s), rng.random())
    }
}
