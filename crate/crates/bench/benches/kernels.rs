use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use erpo_bench::{posterior_for, random_mdp, random_policy};
use erpo_core::lagrangian::{grad_theta_exact, LagrangianState, ModelEnsemble, PenaltySign};
use erpo_core::mdp::{exact_policy_value, simulate};
use erpo_core::posterior::ModelSampler;
use erpo_core::risk::{entropic_bellman, entropic_risk_of, RiskConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn risk(c: &mut Criterion) {
    let values: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.01).sin() * 5.0).collect();
    let weights = vec![1.0; values.len()];
    c.bench_function("entropic_risk_10k", |b| {
        b.iter(|| entropic_risk_of(black_box(&values), black_box(&weights), 0.9).unwrap())
    });
}

fn bellman(c: &mut Criterion) {
    let mdp = random_mdp(200, 4, 1);
    let v = vec![0.5; 200];
    c.bench_function("entropic_bellman_200x4", |b| b.iter(|| entropic_bellman(&mdp, black_box(&v)).unwrap()));
    let policy = random_policy(200, 4, 2);
    c.bench_function("exact_policy_value_200x4", |b| b.iter(|| exact_policy_value(&mdp, &policy).unwrap()));
}

fn rollouts(c: &mut Criterion) {
    let mdp = random_mdp(200, 2, 3);
    let policy = random_policy(200, 2, 4);
    let posterior = posterior_for(&mdp, 20_000, 5);
    c.bench_function("lazy_model_rollout_T100", |b| {
        b.iter_batched(
            || ChaCha8Rng::seed_from_u64(6),
            |mut rng| {
                let mut model = posterior.draw(7);
                simulate(&mut model, &policy, 100, &mut rng).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
    c.bench_function("full_model_draw_200x2", |b| b.iter(|| posterior.draw_full(black_box(8))));
}

fn gradients(c: &mut Criterion) {
    let models = (0..2).map(|i| random_mdp(2, 2, 10 + i)).collect();
    let ensemble = ModelEnsemble::uniform(models).unwrap();
    let policy = random_policy(2, 2, 12);
    let state = LagrangianState::new(0.5, RiskConfig::default(), 6, PenaltySign::Robust).unwrap();
    c.bench_function("grad_theta_exact_T6", |b| {
        b.iter(|| grad_theta_exact(&ensemble, &policy, &state, 1e6).unwrap())
    });
}

criterion_group!(benches, risk, bellman, rollouts, gradients);
criterion_main!(benches);
