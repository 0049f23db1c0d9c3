//! Experiment domains and baseline data collection.

pub mod asset;
pub mod cartpole;
pub mod inventory;

pub use asset::{make_asset_env, AssetDomainSpec, AssetMetadata, ReturnDistribution};
pub use cartpole::{make_cartpole_env, CartPoleDomainSpec, CartPoleModel, CartPolePhysics};
pub use inventory::{make_inventory_env, InventoryDomainSpec};

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{simulate, TabularMdp};
use crate::policy::SoftmaxPolicy;
use crate::posterior::TransitionLog;

/// Logs `n_transitions` transitions from episodes of `episode_len` steps under `policy`.
pub fn generate_baseline_data<R: Rng + ?Sized>(
    true_mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    n_transitions: usize,
    episode_len: usize,
    rng: &mut R,
) -> Result<TransitionLog> {
    if n_transitions == 0 {
        return Err(Error::config("baseline_samples", "must be at least 1"));
    }
    if episode_len == 0 {
        return Err(Error::invalid("episode length must be at least 1"));
    }
    let mut model = true_mdp.clone();
    let mut log = TransitionLog::new(true_mdp.n_states(), true_mdp.n_actions());
    while log.len() < n_transitions {
        let len = episode_len.min(n_transitions - log.len());
        let traj = simulate(&mut model, policy, len, rng)?;
        for (t, step) in traj.steps.iter().enumerate() {
            let next = traj.next_state(t).expect("simulated paths record their successor");
            log.push(step.state, step.action, next)?;
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_transitions_rejected() {
        let mdp = TabularMdp::new(1, 1, vec![0.0], vec![1.0], 0.5, vec![1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_baseline_data(&mdp, &SoftmaxPolicy::uniform(1, 1), 0, 5, &mut rng).is_err());
    }

    #[test]
    fn deterministic_chain_stays_on_path() {
        // 0 -> 1 -> 2 -> 2 regardless of action.
        let n = 3;
        let mut t = vec![0.0; n * 2 * n];
        for s in 0..n {
            for a in 0..2 {
                t[(s * 2 + a) * n + (s + 1).min(n - 1)] = 1.0;
            }
        }
        let mdp = TabularMdp::new(n, 2, vec![0.0; 6], t, 0.9, vec![1.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let log = generate_baseline_data(&mdp, &SoftmaxPolicy::uniform(n, 2), 50, 4, &mut rng).unwrap();
        assert_eq!(log.len(), 50);
        assert!(log.records.iter().all(|(s, _, t)| *t == (*s + 1).min(2)));
    }

    #[test]
    fn empirical_counts_match_rows() {
        let t = vec![0.2, 0.8, 0.6, 0.4, 0.5, 0.5, 0.9, 0.1];
        let mdp = TabularMdp::new(2, 2, vec![0.0; 4], t, 0.9, vec![0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let log =
            generate_baseline_data(&mdp, &SoftmaxPolicy::uniform(2, 2), 100_000, 20, &mut rng).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                let visits: Vec<usize> =
                    log.records.iter().filter(|r| r.0 == s && r.1 == a).map(|r| r.2).collect();
                let n = visits.len() as f64;
                let p = mdp.row(s, a)[1];
                let freq = visits.iter().filter(|t| **t == 1).count() as f64 / n;
                assert!((freq - p).abs() < 3.0 * (p * (1.0 - p) / n).sqrt(), "({s},{a}) {freq} vs {p}");
            }
        }
    }

    #[test]
    fn seed_determinism() {
        let mdp = make_inventory_env(&InventoryDomainSpec::default()).unwrap();
        let policy = SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions());
        let a = generate_baseline_data(&mdp, &policy, 500, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = generate_baseline_data(&mdp, &policy, 500, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }
}
