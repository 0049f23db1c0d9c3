use rand::Rng;
use rayon::prelude::*;

use super::{
    check_dims, clip_norm, episode_seeds, episode_trace, td_error, LinearCritic, TdMode, TrainConfig,
    TrainResult,
};
use crate::error::{Error, Result};
use crate::lagrangian::PenaltySign;
use crate::mdp::{simulate, Trajectory};
use crate::policy::SoftmaxPolicy;
use crate::posterior::ModelSampler;
use crate::risk::{neg_exp, RiskConfig};

/// Fixed quantities of one actor-critic accumulation pass.
#[derive(Debug, Clone, Copy)]
pub struct ActorCriticStep {
    pub risk: RiskConfig,
    pub gamma: f64,
    pub lambda: f64,
    pub td_mode: TdMode,
    pub penalty_sign: PenaltySign,
}

/// Raw per-trajectory sums (not yet divided by `T`).
#[derive(Debug, Clone, PartialEq)]
pub struct StepAccumulators {
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub critic: Vec<f64>,
    /// TD error of every step, in order.
    pub td_errors: Vec<f64>,
}

/// Runs the inner loop over one recorded trajectory:
///
/// ```text
/// delta      = td(r_t, v(s_t), v(s_{t+1}))
/// theta_hat += delta * (1 - sigma alpha lambda e^{-alpha delta}) * score(s_t, a_t)
/// lambda_hat += sigma * (e^{-alpha delta} - e^{-alpha beta})
/// w_hat     += delta * phi(s_t)
/// ```
pub fn accumulate_actor_critic(
    traj: &Trajectory,
    policy: &SoftmaxPolicy,
    critic: &LinearCritic,
    step: &ActorCriticStep,
) -> Result<StepAccumulators> {
    let alpha = step.risk.alpha;
    let sigma = step.penalty_sign.sigma();
    let threshold = step.risk.threshold();
    let mut acc = StepAccumulators {
        theta: vec![0.0; policy.dim()],
        lambda: 0.0,
        critic: vec![0.0; critic.weights.len()],
        td_errors: Vec::with_capacity(traj.horizon()),
    };
    for (t, st) in traj.steps.iter().enumerate() {
        let next = traj
            .next_state(t)
            .ok_or_else(|| Error::invalid("trajectory lacks its final successor state"))?;
        let delta = td_error(
            st.reward,
            critic.value(st.state),
            critic.value(next),
            alpha,
            step.gamma,
            step.td_mode,
        );
        let utility = neg_exp(alpha, delta);
        let weight = delta * (1.0 - sigma * alpha * step.lambda * utility);
        policy.add_score(st.state, st.action, weight, &mut acc.theta);
        acc.lambda += sigma * (utility - threshold);
        critic.add_gradient(st.state, delta, &mut acc.critic);
        acc.td_errors.push(delta);
    }
    Ok(acc)
}

/// Incremental soft-robust actor-critic with a linear critic.
///
/// Per episode and per sampled model one `T`-step trajectory is rolled out; the
/// accumulators are divided by `T`, averaged over models and applied with
/// `zeta_1` (multiplier), `zeta_2` (actor) and `zeta_3` (critic).
pub fn run_actor_critic<S, R>(
    cfg: &TrainConfig,
    sampler: &S,
    initial: SoftmaxPolicy,
    critic: LinearCritic,
    rng: &mut R,
) -> Result<TrainResult>
where
    S: ModelSampler,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let sk = sampler.skeleton();
    check_dims(initial.n_states(), initial.n_actions(), sk.n_states, sk.n_actions)?;
    if critic.features.n_states() != sk.n_states {
        return Err(Error::invalid("critic features do not cover every state"));
    }
    let gamma = sk.discount;
    let horizon = cfg.horizon as f64;
    let m = cfg.models_per_episode as f64;
    let mut policy = initial;
    let mut critic = critic;
    let mut lambda = cfg.lambda_init;
    let mut traces = Vec::with_capacity(cfg.episodes);

    for k in 0..cfg.episodes {
        let step = ActorCriticStep {
            risk: cfg.risk,
            gamma,
            lambda,
            td_mode: cfg.td_mode,
            penalty_sign: cfg.penalty_sign,
        };
        let seeds = episode_seeds(rng, cfg.models_per_episode);
        let rollouts = seeds
            .into_par_iter()
            .map(|(model_seed, mut traj_rng)| {
                let mut model = sampler.draw(model_seed);
                let traj = simulate(&mut model, &policy, cfg.horizon, &mut traj_rng)?;
                let acc = accumulate_actor_critic(&traj, &policy, &critic, &step)?;
                Ok((traj.discounted_return(gamma), acc))
            })
            .collect::<Result<Vec<_>>>()?;

        // Fixed-order reduction over models.
        let mut theta_bar = vec![0.0; policy.dim()];
        let mut lambda_bar = 0.0;
        let mut w_bar = vec![0.0; critic.weights.len()];
        let mut returns = Vec::with_capacity(rollouts.len());
        for (ret, acc) in rollouts {
            for (b, x) in theta_bar.iter_mut().zip(&acc.theta) {
                *b += x / horizon;
            }
            lambda_bar += acc.lambda / horizon;
            for (b, x) in w_bar.iter_mut().zip(&acc.critic) {
                *b += x / horizon;
            }
            returns.push(ret);
        }
        theta_bar.iter_mut().for_each(|x| *x /= m);
        clip_norm(&mut theta_bar, cfg.max_grad_norm);

        lambda = cfg.project_lambda(lambda - cfg.multiplier_step.at(k) * lambda_bar / m);
        policy.apply_update(&theta_bar, cfg.actor_step.at(k));
        let zeta3 = cfg.critic_step.at(k);
        for (w, g) in critic.weights.iter_mut().zip(&w_bar) {
            *w += zeta3 * g / m;
        }

        traces.push(episode_trace(cfg, k, lambda, &policy, returns)?);
    }

    Ok(TrainResult {
        policy,
        lambda,
        critic: Some(critic),
        traces,
    })
}
