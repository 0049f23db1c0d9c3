use rand::Rng;
use rayon::prelude::*;

use super::{check_dims, clip_norm, episode_seeds, episode_trace, TrainConfig, TrainResult};
use crate::error::Result;
use crate::lagrangian::{grad_estimates_sampled, LagrangianState};
use crate::mdp::{simulate, Trajectory};
use crate::policy::SoftmaxPolicy;
use crate::posterior::ModelSampler;

/// Trajectory-based soft-robust policy gradient.
///
/// Each episode samples `M` models, draws `N` trajectories per model under the
/// current policy, and takes `theta += zeta_2(k) * theta_hat / M` and
/// `lambda -= zeta_1(k) * lambda_hat / M` with `lambda` projected to `[0, lambda_max]`.
pub fn run_policy_gradient<S, R>(
    cfg: &TrainConfig,
    sampler: &S,
    initial: SoftmaxPolicy,
    rng: &mut R,
) -> Result<TrainResult>
where
    S: ModelSampler,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let sk = sampler.skeleton();
    check_dims(initial.n_states(), initial.n_actions(), sk.n_states, sk.n_actions)?;
    let gamma = sk.discount;
    let mut policy = initial;
    let mut lambda = cfg.lambda_init;
    let mut traces = Vec::with_capacity(cfg.episodes);

    for k in 0..cfg.episodes {
        let seeds = episode_seeds(rng, cfg.models_per_episode);
        let batches = seeds
            .into_par_iter()
            .map(|(model_seed, mut traj_rng)| {
                let mut model = sampler.draw(model_seed);
                (0..cfg.trajectories_per_model)
                    .map(|_| simulate(&mut model, &policy, cfg.horizon, &mut traj_rng))
                    .collect::<Result<Vec<Trajectory>>>()
            })
            .collect::<Result<Vec<_>>>()?;

        let state = LagrangianState::new(lambda, cfg.risk, cfg.horizon, cfg.penalty_sign)?;
        let mut est = grad_estimates_sampled(&batches, gamma, &policy, &state)?;
        clip_norm(&mut est.theta, cfg.max_grad_norm);
        policy.apply_update(&est.theta, cfg.actor_step.at(k));
        lambda = cfg.project_lambda(lambda - cfg.multiplier_step.at(k) * est.lambda);

        traces.push(episode_trace(cfg, k, lambda, &policy, est.model_returns)?);
    }

    Ok(TrainResult {
        policy,
        lambda,
        critic: None,
        traces,
    })
}
