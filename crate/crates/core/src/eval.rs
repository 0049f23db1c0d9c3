//! Policy evaluation across sampled models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{expected_start_return, simulate};
use crate::policy::SoftmaxPolicy;
use crate::posterior::ModelSampler;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSummary {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator; 0 for one sample).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub count: usize,
}

impl ReturnSummary {
    pub fn from_returns(returns: &[f64]) -> Result<Self> {
        if returns.is_empty() {
            return Err(Error::invalid("cannot summarize an empty return sample"));
        }
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::Numerical("non-finite return".into()));
        }
        let mut sorted = returns.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        Ok(Self {
            mean,
            std: sample_variance(&sorted).sqrt(),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            p05: percentile(&sorted, 5.0),
            p25: percentile(&sorted, 25.0),
            p50: percentile(&sorted, 50.0),
            p75: percentile(&sorted, 75.0),
            p95: percentile(&sorted, 95.0),
            count: sorted.len(),
        })
    }

    pub fn variance(&self) -> f64 {
        self.std * self.std
    }
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Linear interpolation between closest ranks of an ascending sample.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Exact expected return of each sampled model.
    #[default]
    Epistemic,
    /// Monte-Carlo trajectory returns under the posterior mean model.
    Aleatoric,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epistemic" => Ok(EvalMode::Epistemic),
            "aleatoric" => Ok(EvalMode::Aleatoric),
            _ => Err(Error::config("eval_mode", format!("unknown mode `{s}`"))),
        }
    }
}

/// Expected `horizon`-step return from the initial distribution in each of
/// `n_models` models drawn from `sampler`. Results are in draw order.
pub fn evaluate_models<S, R>(
    sampler: &S,
    policy: &SoftmaxPolicy,
    horizon: usize,
    n_models: usize,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    S: ModelSampler,
    R: Rng + ?Sized,
{
    check_policy(sampler, policy)?;
    let seeds: Vec<u64> = (0..n_models).map(|_| rng.random()).collect();
    seeds
        .into_par_iter()
        .map(|seed| expected_start_return(&sampler.draw_full(seed), policy, horizon))
        .collect()
}

/// Discounted returns of `n_trajectories` rollouts in the sampler's mean model.
pub fn evaluate_trajectories<S, R>(
    sampler: &S,
    policy: &SoftmaxPolicy,
    horizon: usize,
    n_trajectories: usize,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    S: ModelSampler,
    R: Rng + ?Sized,
{
    check_policy(sampler, policy)?;
    let model = sampler.mean_model();
    let gamma = model.discount();
    let seeds: Vec<u64> = (0..n_trajectories).map(|_| rng.random()).collect();
    seeds
        .into_par_iter()
        .map(|seed| {
            let mut m = model.clone();
            let mut traj_rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(simulate(&mut m, policy, horizon, &mut traj_rng)?.discounted_return(gamma))
        })
        .collect()
}

fn check_policy<S: ModelSampler>(sampler: &S, policy: &SoftmaxPolicy) -> Result<()> {
    let sk = sampler.skeleton();
    if policy.n_states() != sk.n_states || policy.n_actions() != sk.n_actions {
        return Err(Error::invalid(format!(
            "policy is {}x{} but the domain is {}x{}",
            policy.n_states(),
            policy.n_actions(),
            sk.n_states,
            sk.n_actions
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TabularMdp;
    use crate::posterior::FixedModel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn three_returns() {
        let s = ReturnSummary::from_returns(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.min, s.max, s.p50, s.count), (2.0, 1.0, 3.0, 2.0, 3));
        assert_abs_diff_eq!(s.std, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_rejected() {
        assert!(ReturnSummary::from_returns(&[]).is_err());
    }

    #[test]
    fn single_model_returns_identical() {
        let mdp = TabularMdp::new(2, 1, vec![1.0, 0.0], vec![0.3, 0.7, 0.0, 1.0], 0.9, vec![1.0, 0.0]).unwrap();
        let sampler = FixedModel::new(mdp);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = evaluate_models(&sampler, &SoftmaxPolicy::uniform(2, 1), 5, 50, &mut rng).unwrap();
        assert_eq!(r.len(), 50);
        assert!(r.iter().all(|x| *x == r[0]));
        // 1 + 0.9 * 0.3 + 0.81 * 0.09 + ...
        let oracle: f64 = (0..5).map(|t| (0.9f64 * 0.3).powi(t)).sum();
        assert_abs_diff_eq!(r[0], oracle, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.9, vec![1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = evaluate_models(&FixedModel::new(mdp), &SoftmaxPolicy::uniform(2, 1), 3, 2, &mut rng);
        assert!(err.is_err());
    }

    #[test]
    fn aleatoric_mean_matches_exact() {
        let mdp = TabularMdp::new(2, 1, vec![1.0, 0.0], vec![0.3, 0.7, 0.0, 1.0], 0.9, vec![1.0, 0.0]).unwrap();
        let sampler = FixedModel::new(mdp.clone());
        let pi = SoftmaxPolicy::uniform(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = evaluate_trajectories(&sampler, &pi, 5, 20_000, &mut rng).unwrap();
        let s = ReturnSummary::from_returns(&r).unwrap();
        let exact = expected_start_return(&mdp, &pi, 5).unwrap();
        assert!((s.mean - exact).abs() < 4.0 * s.std / (r.len() as f64).sqrt());
    }

    fn sort_oracle(xs: &[f64], q: f64) -> f64 {
        let mut v = xs.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (v.len() - 1) as f64 * q;
        let i = h as usize;
        if i + 1 < v.len() {
            v[i] * (1.0 - (h - i as f64)) + v[i + 1] * (h - i as f64)
        } else {
            v[i]
        }
    }

    proptest! {
        #[test]
        fn percentiles_match_sort_oracle(xs in prop::collection::vec(-1e3f64..1e3, 1..60)) {
            let s = ReturnSummary::from_returns(&xs).unwrap();
            let got = [s.p05, s.p25, s.p50, s.p75, s.p95];
            for (g, q) in got.iter().zip([0.05, 0.25, 0.5, 0.75, 0.95]) {
                prop_assert!((g - sort_oracle(&xs, q)).abs() < 1e-12);
            }
            prop_assert!(s.min <= s.p05 && s.p95 <= s.max);
            prop_assert!(got.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
