//! Soft-robust objective, its Lagrangian relaxation and gradient estimators.
//!
//! With `F_m` the expected `T`-step return of the policy under model `m`,
//!
//! ```text
//! L(theta, lambda) = sum_m P(m) F_m + sigma * lambda * (sum_m P(m) exp(-alpha F_m) - exp(-alpha beta))
//! ```
//!
//! where `sigma = +1` reproduces the printed form of the relaxation and
//! `sigma = -1` is the sign that penalizes constraint violation under `max_theta`.
//! The exact routines enumerate trajectories and serve as oracles for the
//! sampled estimators used in training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{enumerate_trajectories, TabularMdp, Trajectory};
use crate::policy::SoftmaxPolicy;
use crate::risk::{entropic_risk_of, neg_exp, RiskConfig};

/// Sign of the multiplier term in the Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PenaltySign {
    /// `+lambda * (E exp(-alpha F) - exp(-alpha beta))`.
    Paper,
    /// `-lambda * (E exp(-alpha F) - exp(-alpha beta))`.
    #[default]
    Robust,
}

impl PenaltySign {
    pub fn sigma(self) -> f64 {
        match self {
            PenaltySign::Paper => 1.0,
            PenaltySign::Robust => -1.0,
        }
    }
}

impl std::str::FromStr for PenaltySign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(PenaltySign::Paper),
            "robust" => Ok(PenaltySign::Robust),
            other => Err(Error::config("penalty_sign", format!("unknown mode `{other}`"))),
        }
    }
}

/// A finite set of models with probabilities `P(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEnsemble {
    models: Vec<TabularMdp>,
    weights: Vec<f64>,
}

impl ModelEnsemble {
    pub fn new(models: Vec<TabularMdp>, weights: Vec<f64>) -> Result<Self> {
        if models.is_empty() || models.len() != weights.len() {
            return Err(Error::invalid("ensemble needs one weight per model"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("ensemble weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("ensemble weights sum to {total}")));
        }
        let (s, a) = (models[0].n_states(), models[0].n_actions());
        if models.iter().any(|m| m.n_states() != s || m.n_actions() != a) {
            return Err(Error::invalid("ensemble models differ in shape"));
        }
        Ok(Self { models, weights })
    }

    /// Equal weight `1/M` on every model.
    pub fn uniform(models: Vec<TabularMdp>) -> Result<Self> {
        let m = models.len();
        Self::new(models, vec![1.0 / m as f64; m])
    }

    pub fn models(&self) -> &[TabularMdp] {
        &self.models
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Multiplier, risk configuration and horizon; the policy carries `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianState {
    pub lambda: f64,
    pub risk: RiskConfig,
    pub horizon: usize,
    pub penalty_sign: PenaltySign,
}

impl LagrangianState {
    pub fn new(lambda: f64, risk: RiskConfig, horizon: usize, penalty_sign: PenaltySign) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        risk.validate()?;
        Ok(Self {
            lambda,
            risk,
            horizon,
            penalty_sign,
        })
    }

    /// Per-model weight on the return in the theta-gradient:
    /// `1 - sigma * alpha * lambda * exp(-alpha F)`.
    pub fn return_weight(&self, f: f64) -> f64 {
        let alpha = self.risk.alpha;
        1.0 - self.penalty_sign.sigma() * alpha * self.lambda * neg_exp(alpha, f)
    }
}

/// `F_m = sum_xi P_{theta,m}(xi) * G(xi)` for every model, by enumeration.
pub fn expected_return_per_model(
    ensemble: &ModelEnsemble,
    policy: &SoftmaxPolicy,
    horizon: usize,
    cap: f64,
) -> Result<Vec<f64>> {
    ensemble
        .models
        .iter()
        .map(|mdp| {
            let gamma = mdp.discount();
            Ok(enumerate_trajectories(mdp, policy, horizon, cap)?
                .iter()
                .map(|(t, p)| p * t.discounted_return(gamma))
                .sum())
        })
        .collect()
}

/// Certainty equivalent of the model returns, `-(1/alpha) ln sum_m P(m) exp(-alpha F_m)`.
pub fn constraint_value(
    ensemble: &ModelEnsemble,
    policy: &SoftmaxPolicy,
    state: &LagrangianState,
    cap: f64,
) -> Result<f64> {
    let f = expected_return_per_model(ensemble, policy, state.horizon, cap)?;
    entropic_risk_of(&f, &ensemble.weights, state.risk.alpha)
}

fn model_average_utility(returns: &[f64], weights: &[f64], alpha: f64) -> f64 {
    returns.iter().zip(weights).map(|(f, w)| w * neg_exp(alpha, *f)).sum()
}

/// Lagrangian evaluated from per-model returns.
pub fn lagrangian_from_returns(returns: &[f64], weights: &[f64], state: &LagrangianState) -> f64 {
    let mean: f64 = returns.iter().zip(weights).map(|(f, w)| w * f).sum();
    let slack = model_average_utility(returns, weights, state.risk.alpha) - state.risk.threshold();
    mean + state.penalty_sign.sigma() * state.lambda * slack
}

pub fn lagrangian_value(
    ensemble: &ModelEnsemble,
    policy: &SoftmaxPolicy,
    state: &LagrangianState,
    cap: f64,
) -> Result<f64> {
    let f = expected_return_per_model(ensemble, policy, state.horizon, cap)?;
    Ok(lagrangian_from_returns(&f, &ensemble.weights, state))
}

/// Exact theta-gradient of the Lagrangian by trajectory enumeration:
/// `sum_m P(m) sum_xi G(xi) P(xi) (1 - sigma alpha lambda e^{-alpha F_m}) sum_k score(s_k, a_k)`.
pub fn grad_theta_exact(
    ensemble: &ModelEnsemble,
    policy: &SoftmaxPolicy,
    state: &LagrangianState,
    cap: f64,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; policy.dim()];
    for (mdp, weight) in ensemble.models.iter().zip(&ensemble.weights) {
        let gamma = mdp.discount();
        let paths = enumerate_trajectories(mdp, policy, state.horizon, cap)?;
        let f: f64 = paths.iter().map(|(t, p)| p * t.discounted_return(gamma)).sum();
        let coef = weight * state.return_weight(f);
        for (traj, prob) in &paths {
            let scale = coef * prob * traj.discounted_return(gamma);
            add_path_score(policy, traj, scale, &mut grad);
        }
    }
    Ok(grad)
}

/// Exact lambda-gradient: `sigma * (sum_m P(m) exp(-alpha F_m) - exp(-alpha beta))`.
pub fn grad_lambda_exact(
    ensemble: &ModelEnsemble,
    policy: &SoftmaxPolicy,
    state: &LagrangianState,
    cap: f64,
) -> Result<f64> {
    let f = expected_return_per_model(ensemble, policy, state.horizon, cap)?;
    Ok(lambda_gradient_from_returns(&f, &ensemble.weights, state))
}

fn lambda_gradient_from_returns(returns: &[f64], weights: &[f64], state: &LagrangianState) -> f64 {
    let slack = model_average_utility(returns, weights, state.risk.alpha) - state.risk.threshold();
    state.penalty_sign.sigma() * slack
}

fn add_path_score(policy: &SoftmaxPolicy, traj: &Trajectory, scale: f64, out: &mut [f64]) {
    if scale == 0.0 {
        return;
    }
    for step in &traj.steps {
        policy.add_score(step.state, step.action, scale, out);
    }
}

/// Gradient estimates from sampled trajectory batches, one batch per sampled model.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGradients {
    pub theta: Vec<f64>,
    pub lambda: f64,
    /// Empirical mean return `F_hat_m` of each batch.
    pub model_returns: Vec<f64>,
}

/// Averages the per-model gradient forms over models with weight `1/M`.
///
/// Each trajectory in a batch carries the empirical weight `1/N`, and the batch
/// mean `F_hat_m` inside the exponent comes from the same batch.
pub fn grad_estimates_sampled(
    batches: &[Vec<Trajectory>],
    gamma: f64,
    policy: &SoftmaxPolicy,
    state: &LagrangianState,
) -> Result<SampledGradients> {
    if batches.is_empty() {
        return Err(Error::invalid("no trajectory batches"));
    }
    if batches.iter().any(|b| b.is_empty()) {
        return Err(Error::invalid("empty trajectory batch"));
    }
    let m = batches.len() as f64;
    let mut theta = vec![0.0; policy.dim()];
    let mut model_returns = Vec::with_capacity(batches.len());
    for batch in batches {
        let returns: Vec<f64> = batch.iter().map(|t| t.discounted_return(gamma)).collect();
        let f_hat = returns.iter().sum::<f64>() / returns.len() as f64;
        let coef = state.return_weight(f_hat) / (m * batch.len() as f64);
        for (traj, g) in batch.iter().zip(&returns) {
            add_path_score(policy, traj, coef * g, &mut theta);
        }
        model_returns.push(f_hat);
    }
    let weights = vec![1.0 / m; batches.len()];
    let lambda = lambda_gradient_from_returns(&model_returns, &weights, state);
    Ok(SampledGradients {
        theta,
        lambda,
        model_returns,
    })
}
