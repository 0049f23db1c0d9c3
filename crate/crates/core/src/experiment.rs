//! End-to-end runs: environment, baseline data, posterior, training, evaluation.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algo::{run_actor_critic, run_policy_gradient, LinearCritic, StepSchedule, TdMode, TrainConfig, TrainResult};
use crate::envs::{
    generate_baseline_data, make_asset_env, make_cartpole_env, make_inventory_env, AssetDomainSpec,
    AssetMetadata, CartPoleDomainSpec, CartPoleModel, InventoryDomainSpec,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_models, evaluate_trajectories, EvalMode};
use crate::lagrangian::PenaltySign;
use crate::mdp::TabularMdp;
use crate::policy::SoftmaxPolicy;
use crate::posterior::{DirichletPosterior, FixedModel, ModelSampler, TransitionLog};
use crate::risk::RiskConfig;

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident, $field:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::config($field, format!("unknown value `{s}`"))),
                }
            }
        }
    };
}

named_enum!(Domain, "domain" { Asset => "asset", Inventory => "inventory", Cartpole => "cartpole" });
named_enum!(Algo, "algo" { Pg => "pg", Ac => "ac" });
named_enum!(
    /// Which objective a run optimizes.
    Variant, "variant" {
        SoftRobust => "soft-robust",
        RiskAverse => "risk-averse",
        RiskNeutral => "risk-neutral",
    }
);

/// Every knob of a run. Serialized as the run directory's config snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain: Domain,
    pub algo: Algo,
    pub variant: Variant,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub episodes: usize,
    /// Models sampled per episode.
    pub models: usize,
    pub horizon: usize,
    /// Trajectories per sampled model (policy gradient only).
    pub trajectories: usize,
    pub actor_step: StepSchedule,
    pub multiplier_step: StepSchedule,
    pub critic_step: StepSchedule,
    pub lambda_init: f64,
    pub lambda_max: f64,
    pub penalty_sign: PenaltySign,
    pub td_mode: TdMode,
    pub max_grad_norm: Option<f64>,
    /// Dirichlet prior concentration per transition entry.
    pub prior: f64,
    /// Weight of each logged transition in the posterior counts.
    pub evidence_weight: f64,
    pub baseline_samples: usize,
    pub eval_models: usize,
    pub eval_mode: EvalMode,
    pub eval_trajectories: usize,
    /// Transition log to build the posterior from instead of fresh baseline data.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub asset: AssetDomainSpec,
    pub inventory: InventoryDomainSpec,
    pub cartpole: CartPoleDomainSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_domain(Domain::Asset)
    }
}

impl RunConfig {
    /// Defaults tuned per domain.
    pub fn for_domain(domain: Domain) -> Self {
        let base = Self {
            domain,
            algo: Algo::Pg,
            variant: Variant::SoftRobust,
            seed: 0,
            alpha: 0.9,
            beta: 1.0,
            episodes: 500,
            models: 20,
            horizon: 100,
            trajectories: 10,
            actor_step: StepSchedule { base: 0.05, exponent: 0.8 },
            multiplier_step: StepSchedule { base: 0.01, exponent: 1.0 },
            critic_step: StepSchedule { base: 0.1, exponent: 0.6 },
            lambda_init: 0.0,
            lambda_max: 100.0,
            penalty_sign: PenaltySign::Robust,
            td_mode: TdMode::Standard,
            max_grad_norm: None,
            prior: 1.0,
            evidence_weight: 1.0,
            baseline_samples: 10_000,
            eval_models: 200,
            eval_mode: EvalMode::Epistemic,
            eval_trajectories: 1000,
            data: None,
            out: None,
            asset: AssetDomainSpec::default(),
            inventory: InventoryDomainSpec::default(),
            cartpole: CartPoleDomainSpec::default(),
        };
        match domain {
            Domain::Asset => Self {
                horizon: 2,
                episodes: 400,
                models: 20,
                trajectories: 10,
                actor_step: StepSchedule { base: 0.5, exponent: 0.6 },
                multiplier_step: StepSchedule { base: 5.0, exponent: 0.6 },
                max_grad_norm: Some(5.0),
                prior: 1e-3,
                evidence_weight: 3e-4,
                baseline_samples: 30_000,
                ..base
            },
            Domain::Inventory => Self {
                algo: Algo::Ac,
                horizon: base.inventory.horizon,
                episodes: 1000,
                multiplier_step: StepSchedule { base: 1.0, exponent: 1.0 },
                critic_step: StepSchedule { base: 2.0, exponent: 0.6 },
                max_grad_norm: Some(10.0),
                prior: 0.1,
                baseline_samples: 2000,
                ..base
            },
            Domain::Cartpole => Self {
                algo: Algo::Ac,
                horizon: 100,
                episodes: 4000,
                actor_step: StepSchedule { base: 100.0, exponent: 0.8 },
                multiplier_step: StepSchedule { base: 1.0, exponent: 1.0 },
                critic_step: StepSchedule { base: 1000.0, exponent: 0.55 },
                max_grad_norm: Some(0.05),
                prior: 0.01,
                baseline_samples: 20_000,
                ..base
            },
        }
    }

    pub fn risk(&self) -> Result<RiskConfig> {
        RiskConfig::new(self.alpha, self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config()?.validate()?;
        if !(self.prior.is_finite() && self.prior >= 0.0) {
            return Err(Error::config("prior", "must be finite and >= 0"));
        }
        if !(self.evidence_weight.is_finite() && self.evidence_weight >= 0.0) {
            return Err(Error::config("evidence_weight", "must be finite and >= 0"));
        }
        if self.baseline_samples == 0 {
            return Err(Error::config("baseline_samples", "must be at least 1"));
        }
        if self.eval_models == 0 {
            return Err(Error::config("eval_models", "must be at least 1"));
        }
        if self.eval_trajectories == 0 {
            return Err(Error::config("eval_trajectories", "must be at least 1"));
        }
        match self.domain {
            Domain::Asset => self.asset.validate(),
            Domain::Inventory => self.inventory.validate(),
            Domain::Cartpole => self.cartpole.validate(),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            risk: self.risk()?,
            episodes: self.episodes,
            models_per_episode: self.models,
            horizon: self.horizon,
            trajectories_per_model: self.trajectories,
            actor_step: self.actor_step,
            multiplier_step: self.multiplier_step,
            critic_step: self.critic_step,
            lambda_init: self.lambda_init,
            lambda_max: self.lambda_max,
            penalty_sign: self.penalty_sign,
            td_mode: self.td_mode,
            max_grad_norm: self.max_grad_norm,
            track_state: (self.domain == Domain::Asset).then_some(0),
        };
        Ok(match self.variant {
            Variant::RiskNeutral => cfg.risk_neutral(),
            _ => cfg,
        })
    }
}

/// Independent random streams of one run.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Environment = 0,
    Data = 1,
    Train = 2,
    Eval = 3,
}

pub fn rng_stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// The true model of a domain plus domain-specific metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub mdp: TabularMdp,
    pub asset: Option<AssetMetadata>,
    pub cartpole: Option<CartPoleModel>,
}

pub fn build_environment(cfg: &RunConfig) -> Result<Environment> {
    Ok(match cfg.domain {
        Domain::Asset => {
            let (mdp, meta) = make_asset_env(&cfg.asset)?;
            Environment { mdp, asset: Some(meta), cartpole: None }
        }
        Domain::Inventory => Environment {
            mdp: make_inventory_env(&cfg.inventory)?,
            asset: None,
            cartpole: None,
        },
        Domain::Cartpole => {
            let mut rng = rng_stream(cfg.seed, Stream::Environment);
            let (mdp, model) = make_cartpole_env(&cfg.cartpole, &mut rng)?;
            Environment { mdp, asset: None, cartpole: Some(model) }
        }
    })
}

/// Uniform-random baseline rollouts on the true model.
pub fn generate_data(cfg: &RunConfig, env: &Environment) -> Result<TransitionLog> {
    let mut rng = rng_stream(cfg.seed, Stream::Data);
    let policy = SoftmaxPolicy::uniform(env.mdp.n_states(), env.mdp.n_actions());
    generate_baseline_data(&env.mdp, &policy, cfg.baseline_samples, cfg.horizon, &mut rng)
}

pub fn build_posterior(cfg: &RunConfig, env: &Environment, log: &TransitionLog) -> Result<DirichletPosterior> {
    if log.n_states != env.mdp.n_states() || log.n_actions != env.mdp.n_actions() {
        return Err(Error::invalid(format!(
            "transition log is {}x{} but the domain is {}x{}",
            log.n_states,
            log.n_actions,
            env.mdp.n_states(),
            env.mdp.n_actions()
        )));
    }
    DirichletPosterior::from_weighted_data(cfg.prior, cfg.evidence_weight, log, &env.mdp.skeleton())
}

/// Trains the configured variant from the uniform policy.
pub fn train(cfg: &RunConfig, posterior: &DirichletPosterior) -> Result<TrainResult> {
    let tc = cfg.train_config()?;
    let mut rng = rng_stream(cfg.seed, Stream::Train);
    match cfg.variant {
        Variant::RiskAverse => train_with(cfg, &tc, &FixedModel::new(posterior.mean_model()), &mut rng),
        _ => train_with(cfg, &tc, posterior, &mut rng),
    }
}

fn train_with<S: ModelSampler>(
    cfg: &RunConfig,
    tc: &TrainConfig,
    sampler: &S,
    rng: &mut ChaCha8Rng,
) -> Result<TrainResult> {
    let sk = sampler.skeleton();
    let initial = SoftmaxPolicy::uniform(sk.n_states, sk.n_actions);
    match cfg.algo {
        Algo::Pg => run_policy_gradient(tc, sampler, initial, rng),
        Algo::Ac => run_actor_critic(tc, sampler, initial, LinearCritic::one_hot(sk.n_states), rng),
    }
}

/// Returns of `policy` across posterior models (or trajectories, in aleatoric mode).
pub fn evaluate(cfg: &RunConfig, posterior: &DirichletPosterior, policy: &SoftmaxPolicy) -> Result<Vec<f64>> {
    let mut rng = rng_stream(cfg.seed, Stream::Eval);
    match cfg.eval_mode {
        EvalMode::Epistemic => evaluate_models(posterior, policy, cfg.horizon, cfg.eval_models, &mut rng),
        EvalMode::Aleatoric => evaluate_trajectories(posterior, policy, cfg.horizon, cfg.eval_trajectories, &mut rng),
    }
}

/// Everything one in-memory run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub env: Environment,
    pub log: TransitionLog,
    pub posterior: DirichletPosterior,
    pub result: TrainResult,
    pub returns: Vec<f64>,
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let env = build_environment(cfg)?;
    let log = generate_data(cfg, &env)?;
    let posterior = build_posterior(cfg, &env, &log)?;
    let result = train(cfg, &posterior)?;
    let returns = evaluate(cfg, &posterior, &result.policy)?;
    Ok(RunOutput { env, log, posterior, result, returns })
}
