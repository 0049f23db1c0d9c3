//! Soft-robust risk-sensitive policy optimization over posterior MDP ensembles.

pub mod algo;
pub mod envs;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod lagrangian;
pub mod mdp;
pub mod policy;
pub mod posterior;
pub mod risk;

pub use algo::{
    run_actor_critic, run_policy_gradient, EpisodeTrace, FeatureMap, LinearCritic, StepSchedule, TdMode,
    TrainConfig, TrainResult,
};
pub use error::{Error, Result};
pub use eval::{EvalMode, ReturnSummary};
pub use experiment::{Algo, Domain, RunConfig, Variant};
pub use lagrangian::{LagrangianState, ModelEnsemble, PenaltySign};
pub use mdp::{Dynamics, ModelSkeleton, TabularMdp, Trajectory};
pub use policy::SoftmaxPolicy;
pub use posterior::{DirichletPosterior, FixedModel, ModelSampler, TransitionLog};
pub use risk::{entropic_risk, RiskConfig, WeightedSamples};
