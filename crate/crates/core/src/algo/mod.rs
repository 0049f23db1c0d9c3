//! Training loops: trajectory policy gradient and incremental actor-critic.
//!
//! Both loops sample `M` models from the belief every episode, roll the current
//! policy out in each, and apply one simultaneous update of `(theta, lambda[, w])`
//! from accumulators computed against the pre-update parameters.

mod actor_critic;
mod policy_gradient;

pub use actor_critic::{accumulate_actor_critic, run_actor_critic, ActorCriticStep, StepAccumulators};
pub use policy_gradient::run_policy_gradient;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::PenaltySign;
use crate::policy::SoftmaxPolicy;
use crate::risk::{entropic_risk_of, RiskConfig};

/// `zeta(k) = base / (1 + k)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub base: f64,
    pub exponent: f64,
}

impl StepSchedule {
    pub fn new(base: f64, exponent: f64) -> Result<Self> {
        let s = Self { base, exponent };
        s.validate("step")?;
        Ok(s)
    }

    /// A schedule that never moves its parameter.
    pub fn zero() -> Self {
        Self {
            base: 0.0,
            exponent: 1.0,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.base.is_finite() && self.base >= 0.0) {
            return Err(Error::config(field, format!("base must be >= 0, got {}", self.base)));
        }
        if !(self.exponent > 0.5 && self.exponent <= 1.0) {
            return Err(Error::config(
                field,
                format!("exponent must lie in (0.5, 1], got {}", self.exponent),
            ));
        }
        Ok(())
    }

    pub fn at(&self, k: usize) -> f64 {
        step_size(self, k)
    }
}

pub fn step_size(schedule: &StepSchedule, k: usize) -> f64 {
    schedule.base / (1.0 + k as f64).powf(schedule.exponent)
}

/// Which temporal-difference error drives the actor-critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TdMode {
    /// `rho(r) + v(s) - v(s')`, undiscounted and with the value difference reversed.
    Paper,
    /// `rho(r) + gamma v(s') - v(s)`.
    #[default]
    Standard,
}

impl std::str::FromStr for TdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(TdMode::Paper),
            "standard" => Ok(TdMode::Standard),
            other => Err(Error::config("td_mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// One-step TD error. The entropic risk of the single observed reward is the reward.
pub fn td_error(r: f64, v_s: f64, v_next: f64, _alpha: f64, gamma: f64, mode: TdMode) -> f64 {
    match mode {
        TdMode::Paper => r + v_s - v_next,
        TdMode::Standard => r + gamma * v_next - v_s,
    }
}

/// Per-state feature vectors for the linear critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureMap {
    /// `phi(s) = e_s`.
    OneHot { n_states: usize },
    /// Row-major `n_states x dim` feature matrix.
    Dense { dim: usize, rows: Vec<f64> },
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::OneHot { n_states } => *n_states,
            FeatureMap::Dense { dim, .. } => *dim,
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            FeatureMap::OneHot { n_states } => *n_states,
            FeatureMap::Dense { dim, rows } => rows.len() / dim,
        }
    }
}

/// `v_hat(s, w) = <w, phi(s)>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCritic {
    pub features: FeatureMap,
    pub weights: Vec<f64>,
}

impl LinearCritic {
    pub fn new(features: FeatureMap) -> Self {
        let weights = vec![0.0; features.dim()];
        Self { features, weights }
    }

    pub fn one_hot(n_states: usize) -> Self {
        Self::new(FeatureMap::OneHot { n_states })
    }

    pub fn value(&self, s: usize) -> f64 {
        match &self.features {
            FeatureMap::OneHot { .. } => self.weights[s],
            FeatureMap::Dense { dim, rows } => rows[s * dim..(s + 1) * dim]
                .iter()
                .zip(&self.weights)
                .map(|(f, w)| f * w)
                .sum(),
        }
    }

    /// `out += scale * phi(s)`, the semi-gradient of `v_hat(s, w)`.
    pub fn add_gradient(&self, s: usize, scale: f64, out: &mut [f64]) {
        match &self.features {
            FeatureMap::OneHot { .. } => out[s] += scale,
            FeatureMap::Dense { dim, rows } => {
                for (o, f) in out.iter_mut().zip(&rows[s * dim..(s + 1) * dim]) {
                    *o += scale * f;
                }
            }
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.features.n_states()).map(|s| self.value(s)).collect()
    }
}

/// Hyper-parameters shared by both training loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub risk: RiskConfig,
    pub episodes: usize,
    /// Models sampled from the belief per episode (`M`).
    pub models_per_episode: usize,
    /// Rollout length (`T`).
    pub horizon: usize,
    /// Trajectories per sampled model in the policy-gradient loop.
    pub trajectories_per_model: usize,
    /// Actor schedule `zeta_2`.
    pub actor_step: StepSchedule,
    /// Multiplier schedule `zeta_1`.
    pub multiplier_step: StepSchedule,
    /// Critic schedule `zeta_3`.
    pub critic_step: StepSchedule,
    pub lambda_init: f64,
    pub lambda_max: f64,
    pub penalty_sign: PenaltySign,
    pub td_mode: TdMode,
    /// Rescale the averaged actor direction to at most this norm.
    pub max_grad_norm: Option<f64>,
    /// Record `pi(.|s)` at this state after every episode.
    pub track_state: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            risk: RiskConfig::default(),
            episodes: 500,
            models_per_episode: 20,
            horizon: 100,
            trajectories_per_model: 10,
            actor_step: StepSchedule { base: 0.05, exponent: 0.8 },
            multiplier_step: StepSchedule { base: 0.01, exponent: 1.0 },
            critic_step: StepSchedule { base: 0.1, exponent: 0.6 },
            lambda_init: 0.0,
            lambda_max: 100.0,
            penalty_sign: PenaltySign::default(),
            td_mode: TdMode::default(),
            max_grad_norm: None,
            track_state: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.risk.validate()?;
        if self.models_per_episode == 0 {
            return Err(Error::config("models", "need at least one model per episode"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.trajectories_per_model == 0 {
            return Err(Error::config("trajectories_per_model", "must be at least 1"));
        }
        self.actor_step.validate("actor_step")?;
        self.multiplier_step.validate("multiplier_step")?;
        self.critic_step.validate("critic_step")?;
        if !(self.lambda_max.is_finite() && self.lambda_max >= 0.0) {
            return Err(Error::config("lambda_max", "must be finite and >= 0"));
        }
        if !(self.lambda_init >= 0.0 && self.lambda_init <= self.lambda_max) {
            return Err(Error::config("lambda_init", "must lie in [0, lambda_max]"));
        }
        if let Some(c) = self.max_grad_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::config("max_grad_norm", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Same configuration with the multiplier pinned at zero.
    pub fn risk_neutral(&self) -> Self {
        Self {
            lambda_init: 0.0,
            multiplier_step: StepSchedule::zero(),
            ..self.clone()
        }
    }

    fn project_lambda(&self, lambda: f64) -> f64 {
        lambda.clamp(0.0, self.lambda_max)
    }
}

/// Per-episode diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode: usize,
    /// Multiplier after the update.
    pub lambda: f64,
    /// Entropic risk of the per-model returns, uniform over the sampled models.
    pub constraint_estimate: f64,
    pub mean_return: f64,
    pub min_return: f64,
    /// Return estimate for each sampled model, in sampling order.
    pub model_returns: Vec<f64>,
    /// Norm of the policy parameters after the update.
    pub theta_norm: f64,
    /// `pi(.|track_state)` after the update.
    pub action_probs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub policy: SoftmaxPolicy,
    pub lambda: f64,
    pub critic: Option<LinearCritic>,
    pub traces: Vec<EpisodeTrace>,
}

fn episode_trace(
    cfg: &TrainConfig,
    episode: usize,
    lambda: f64,
    policy: &SoftmaxPolicy,
    model_returns: Vec<f64>,
) -> Result<EpisodeTrace> {
    let m = model_returns.len() as f64;
    let weights = vec![1.0 / m; model_returns.len()];
    Ok(EpisodeTrace {
        episode,
        lambda,
        constraint_estimate: entropic_risk_of(&model_returns, &weights, cfg.risk.alpha)?,
        mean_return: model_returns.iter().sum::<f64>() / m,
        min_return: model_returns.iter().copied().fold(f64::INFINITY, f64::min),
        model_returns,
        theta_norm: policy.norm(),
        action_probs: cfg.track_state.map(|s| policy.action_probabilities(s)),
    })
}

fn clip_norm(direction: &mut [f64], max_norm: Option<f64>) {
    let Some(max) = max_norm else { return };
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max {
        let scale = max / norm;
        direction.iter_mut().for_each(|x| *x *= scale);
    }
}

/// Model and trajectory seeds for each of the `M` rollouts of one episode.
fn episode_seeds<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Vec<(u64, ChaCha8Rng)> {
    (0..m)
        .map(|_| {
            let model_seed = rng.random();
            (model_seed, ChaCha8Rng::seed_from_u64(rng.random()))
        })
        .collect()
}

fn check_dims(policy_states: usize, policy_actions: usize, states: usize, actions: usize) -> Result<()> {
    if policy_states != states || policy_actions != actions {
        return Err(Error::invalid(format!(
            "policy is {policy_states}x{policy_actions} but the model is {states}x{actions}"
        )));
    }
    Ok(())
}
