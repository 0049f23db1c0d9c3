//! Tabular MDPs, trajectories, simulation and exact evaluation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::SoftmaxPolicy;

/// Default cap on `(S*A)^T` for exhaustive trajectory enumeration.
pub const DEFAULT_ENUMERATION_CAP: f64 = 1e6;

const ROW_TOLERANCE: f64 = 1e-9;

/// Finite MDP with state-action rewards.
///
/// Rewards are stored row-major as `S x A`, transitions as `S x A x S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    rewards: Vec<f64>,
    transitions: Vec<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
}

/// On-disk layout, field for field.
#[derive(Serialize, Deserialize)]
struct MdpFile {
    n_states: usize,
    n_actions: usize,
    rewards: Vec<f64>,
    transitions: Vec<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Self> {
        TabularMdp::new(
            f.n_states,
            f.n_actions,
            f.rewards,
            f.transitions,
            f.discount,
            f.initial_dist,
        )
    }
}

impl From<TabularMdp> for MdpFile {
    fn from(m: TabularMdp) -> Self {
        MdpFile {
            n_states: m.n_states,
            n_actions: m.n_actions,
            rewards: m.rewards,
            transitions: m.transitions,
            discount: m.discount,
            initial_dist: m.initial_dist,
        }
    }
}

/// One failed invariant, with the offending `(state, action)` row when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub row: Option<(usize, usize)>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.row {
            Some((s, a)) => write!(f, "(s={s}, a={a}): {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Rewards, discount and start distribution: everything but the transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSkeleton {
    pub n_states: usize,
    pub n_actions: usize,
    pub rewards: Vec<f64>,
    pub discount: f64,
    pub initial_dist: Vec<f64>,
}

impl TabularMdp {
    /// Builds a model, failing with every violated invariant listed.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
        discount: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self {
            n_states,
            n_actions,
            rewards,
            transitions,
            discount,
            initial_dist,
        };
        let violations = mdp.validate();
        if violations.is_empty() {
            Ok(mdp)
        } else {
            let msg = violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidModel(msg))
        }
    }

    /// Builds a model from a skeleton and a transition tensor.
    pub fn from_skeleton(skeleton: &ModelSkeleton, transitions: Vec<f64>) -> Result<Self> {
        Self::new(
            skeleton.n_states,
            skeleton.n_actions,
            skeleton.rewards.clone(),
            transitions,
            skeleton.discount,
            skeleton.initial_dist.clone(),
        )
    }

    /// Reports every invariant violation; empty means the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (s_n, a_n) = (self.n_states, self.n_actions);
        let global = |m: String| Violation { row: None, message: m };
        if s_n == 0 || a_n == 0 {
            out.push(global("model needs at least one state and one action".into()));
            return out;
        }
        if !(self.discount >= 0.0 && self.discount < 1.0) {
            out.push(global(format!("discount {} outside [0, 1)", self.discount)));
        }
        if self.rewards.len() != s_n * a_n {
            out.push(global(format!(
                "rewards has {} entries, expected {}",
                self.rewards.len(),
                s_n * a_n
            )));
        } else if self.rewards.iter().any(|r| !r.is_finite()) {
            out.push(global("rewards must be finite".into()));
        }
        if self.initial_dist.len() != s_n {
            out.push(global(format!(
                "initial_dist has {} entries, expected {s_n}",
                self.initial_dist.len()
            )));
        } else {
            let sum: f64 = self.initial_dist.iter().sum();
            if self.initial_dist.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > ROW_TOLERANCE {
                out.push(global(format!("initial_dist is not a distribution (sum {sum})")));
            }
        }
        if self.transitions.len() != s_n * a_n * s_n {
            out.push(global(format!(
                "transitions has {} entries, expected {}",
                self.transitions.len(),
                s_n * a_n * s_n
            )));
            return out;
        }
        for s in 0..s_n {
            for a in 0..a_n {
                let row = self.row(s, a);
                if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                    out.push(Violation {
                        row: Some((s, a)),
                        message: "negative or non-finite probability".into(),
                    });
                    continue;
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_TOLERANCE {
                    out.push(Violation {
                        row: Some((s, a)),
                        message: format!("row sums to {sum}"),
                    });
                }
            }
        }
        out
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// `P(. | s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    pub fn skeleton(&self) -> ModelSkeleton {
        ModelSkeleton {
            n_states: self.n_states,
            n_actions: self.n_actions,
            rewards: self.rewards.clone(),
            discount: self.discount,
            initial_dist: self.initial_dist.clone(),
        }
    }

    /// Copy with every reward shifted by `c`.
    pub fn with_reward_shift(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.rewards.iter_mut().for_each(|r| *r += c);
        out
    }

    fn check_policy(&self, policy: &SoftmaxPolicy) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(Error::invalid(format!(
                "policy is {}x{} but model is {}x{}",
                policy.n_states(),
                policy.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }

    /// Policy-averaged rewards and transition matrix.
    fn policy_kernel(&self, policy: &SoftmaxPolicy) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_states;
        let mut r_pi = vec![0.0; n];
        let mut p_pi = vec![0.0; n * n];
        for s in 0..n {
            let probs = policy.action_probabilities(s);
            for (a, pa) in probs.iter().enumerate() {
                r_pi[s] += pa * self.reward(s, a);
                for (t, p) in self.row(s, a).iter().enumerate() {
                    p_pi[s * n + t] += pa * p;
                }
            }
        }
        (r_pi, p_pi)
    }
}

/// Anything a policy can be rolled out in.
///
/// Sampling takes `&mut self` so lazily materialized models can cache rows.
pub trait Dynamics {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn discount(&self) -> f64;
    fn reward(&self, s: usize, a: usize) -> f64;
    fn sample_initial<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize;
    fn sample_next<R: Rng + ?Sized>(&mut self, s: usize, a: usize, rng: &mut R) -> usize;
}

impl Dynamics for TabularMdp {
    fn n_states(&self) -> usize {
        self.n_states
    }
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn discount(&self) -> f64 {
        self.discount
    }
    fn reward(&self, s: usize, a: usize) -> f64 {
        TabularMdp::reward(self, s, a)
    }
    fn sample_initial<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        sample_index(&self.initial_dist, rng.random())
    }
    fn sample_next<R: Rng + ?Sized>(&mut self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_index(self.row(s, a), rng.random())
    }
}

impl<D: Dynamics> Dynamics for &mut D {
    fn n_states(&self) -> usize {
        (**self).n_states()
    }
    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }
    fn discount(&self) -> f64 {
        (**self).discount()
    }
    fn reward(&self, s: usize, a: usize) -> f64 {
        (**self).reward(s, a)
    }
    fn sample_initial<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        (**self).sample_initial(rng)
    }
    fn sample_next<R: Rng + ?Sized>(&mut self, s: usize, a: usize, rng: &mut R) -> usize {
        (**self).sample_next(s, a, rng)
    }
}

/// Inverse-CDF draw from `probs` given `u` in `[0, 1)`.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // u landed in the rounding gap above the accumulated mass.
    last_positive
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// A finite path `s_0, a_0, r_0, ..., s_{T-1}, a_{T-1}, r_{T-1}`.
///
/// Simulated paths also record the state reached after the last action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_state: Option<usize>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Successor of step `t`, if known.
    pub fn next_state(&self, t: usize) -> Option<usize> {
        match self.steps.get(t + 1) {
            Some(step) => Some(step.state),
            None => self.final_state,
        }
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        discounted_return(self, gamma)
    }
}

/// `sum_t gamma^t r_t` over the recorded steps.
pub fn discounted_return(traj: &Trajectory, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut factor = 1.0;
    for step in &traj.steps {
        total += factor * step.reward;
        factor *= gamma;
    }
    total
}

/// Rolls out `policy` for `horizon` steps.
pub fn simulate<D, R>(
    model: &mut D,
    policy: &SoftmaxPolicy,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory>
where
    D: Dynamics + ?Sized,
    R: Rng + ?Sized,
{
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if policy.n_states() != model.n_states() || policy.n_actions() != model.n_actions() {
        return Err(Error::invalid("policy and model dimensions differ"));
    }
    let mut steps = Vec::with_capacity(horizon);
    let mut s = model.sample_initial(rng);
    for _ in 0..horizon {
        let a = policy.sample_action(s, rng);
        let reward = model.reward(s, a);
        steps.push(Step { state: s, action: a, reward });
        s = model.sample_next(s, a, rng);
    }
    Ok(Trajectory {
        steps,
        final_state: Some(s),
    })
}

/// Infinite-horizon discounted value of `policy`, by a direct linear solve.
pub fn exact_policy_value(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states;
    let (r_pi, p_pi) = mdp.policy_kernel(policy);
    let gamma = mdp.discount;
    let system = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - gamma * p_pi[i * n + j]
    });
    let rhs = DVector::from_vec(r_pi.clone());
    let v = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular policy-evaluation system".into()))?;
    let v: Vec<f64> = v.iter().copied().collect();
    let residual = (0..n)
        .map(|i| {
            let pv: f64 = (0..n).map(|j| p_pi[i * n + j] * v[j]).sum();
            (v[i] - r_pi[i] - gamma * pv).abs()
        })
        .fold(0.0, f64::max);
    let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    if !(residual < 1e-8 * scale) {
        return Err(Error::Numerical(format!("policy evaluation residual {residual:e}")));
    }
    Ok(v)
}

/// Expected `T`-step discounted return from every start state, by backward induction.
///
/// Equal to the enumeration sum over all `T`-step paths, without the enumeration.
pub fn finite_horizon_value(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    horizon: usize,
) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states;
    let (r_pi, p_pi) = mdp.policy_kernel(policy);
    let mut v = vec![0.0; n];
    for _ in 0..horizon {
        v = (0..n)
            .map(|s| {
                let cont: f64 = p_pi[s * n..(s + 1) * n].iter().zip(&v).map(|(p, x)| p * x).sum();
                r_pi[s] + mdp.discount * cont
            })
            .collect();
    }
    Ok(v)
}

/// Expected `T`-step return under the start distribution.
pub fn expected_start_return(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    horizon: usize,
) -> Result<f64> {
    let v = finite_horizon_value(mdp, policy, horizon)?;
    Ok(mdp.initial_dist.iter().zip(&v).map(|(p, x)| p * x).sum())
}

/// `p0(s_0) * prod_k pi(a_k|s_k) * prod_k P(s_{k+1}|s_k,a_k)` over the recorded steps.
pub fn trajectory_probability(mdp: &TabularMdp, policy: &SoftmaxPolicy, traj: &Trajectory) -> f64 {
    let Some(first) = traj.steps.first() else {
        return 0.0;
    };
    let mut prob = mdp.initial_dist[first.state];
    for (k, step) in traj.steps.iter().enumerate() {
        prob *= policy.action_probabilities(step.state)[step.action];
        if let Some(next) = traj.steps.get(k + 1) {
            prob *= mdp.row(step.state, step.action)[next.state];
        }
        if prob == 0.0 {
            return 0.0;
        }
    }
    prob
}

/// Every positive-probability `T`-step path with its probability.
///
/// Fails when `(S*A)^T` exceeds `cap`.
pub fn enumerate_trajectories(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    horizon: usize,
    cap: f64,
) -> Result<Vec<(Trajectory, f64)>> {
    mdp.check_policy(policy)?;
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let branches = ((mdp.n_states * mdp.n_actions) as f64).powi(horizon as i32);
    if branches > cap {
        return Err(Error::ResourceLimit(format!(
            "(S*A)^T = {branches:e} exceeds enumeration cap {cap:e}"
        )));
    }
    let probs: Vec<Vec<f64>> = (0..mdp.n_states)
        .map(|s| policy.action_probabilities(s))
        .collect();
    let mut out = Vec::new();
    let mut path = Vec::with_capacity(horizon);
    for (s0, p0) in mdp.initial_dist.iter().enumerate() {
        if *p0 > 0.0 {
            extend_paths(mdp, &probs, horizon, s0, *p0, &mut path, &mut out);
        }
    }
    Ok(out)
}

fn extend_paths(
    mdp: &TabularMdp,
    probs: &[Vec<f64>],
    horizon: usize,
    s: usize,
    prob: f64,
    path: &mut Vec<Step>,
    out: &mut Vec<(Trajectory, f64)>,
) {
    for (a, pa) in probs[s].iter().enumerate() {
        let p = prob * pa;
        if p == 0.0 {
            continue;
        }
        path.push(Step {
            state: s,
            action: a,
            reward: mdp.reward(s, a),
        });
        if path.len() == horizon {
            out.push((
                Trajectory {
                    steps: path.clone(),
                    final_state: None,
                },
                p,
            ));
        } else {
            for (next, pt) in mdp.row(s, a).iter().enumerate() {
                if *pt > 0.0 {
                    extend_paths(mdp, probs, horizon, next, p * pt, path, out);
                }
            }
        }
        path.pop();
    }
}
