//! Fixtures shared by the kernel benchmarks.

use erpo_core::mdp::TabularMdp;
use erpo_core::posterior::{DirichletPosterior, TransitionLog};
use erpo_core::policy::SoftmaxPolicy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense random MDP with rewards in `[-1, 1]`.
pub fn random_mdp(n_states: usize, n_actions: usize, seed: u64) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewards = (0..n_states * n_actions).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let row: Vec<f64> = (0..n_states).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = row.iter().sum();
        transitions.extend(row.iter().map(|x| x / total));
    }
    let initial = vec![1.0 / n_states as f64; n_states];
    TabularMdp::new(n_states, n_actions, rewards, transitions, 0.95, initial).expect("valid by construction")
}

pub fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> SoftmaxPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = (0..n_states * n_actions).map(|_| rng.random_range(-2.0..2.0)).collect();
    SoftmaxPolicy::from_logits(n_states, n_actions, logits).expect("finite logits")
}

/// Posterior from a uniform-prior and `samples` uniformly random transitions of `mdp`.
pub fn posterior_for(mdp: &TabularMdp, samples: usize, seed: u64) -> DirichletPosterior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = TransitionLog::new(mdp.n_states(), mdp.n_actions());
    for _ in 0..samples {
        let s = rng.random_range(0..mdp.n_states());
        let a = rng.random_range(0..mdp.n_actions());
        let t = erpo_core::mdp::sample_index(mdp.row(s, a), rng.random());
        log.push(s, a, t).expect("in range");
    }
    DirichletPosterior::from_data(1.0, &log, &mdp.skeleton()).expect("valid prior")
}
