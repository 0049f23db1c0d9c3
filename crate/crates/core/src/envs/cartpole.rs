//! Cart-pole aggregated into a tabular MDP through a fitted linear model.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

pub type CartState = [f64; 4];

/// Observed `(state, action, next state)` triple.
pub type Transition = (CartState, usize, CartState);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartPolePhysics {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force: f64,
    pub tau: f64,
    pub angle_limit: f64,
    pub position_limit: f64,
}

impl Default for CartPolePhysics {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force: 10.0,
            tau: 0.02,
            angle_limit: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
            position_limit: 2.4,
        }
    }
}

impl CartPolePhysics {
    /// One Euler step; action 1 pushes right, 0 pushes left.
    pub fn step(&self, s: CartState, action: usize) -> CartState {
        let [x, x_dot, theta, theta_dot] = s;
        let force = if action == 1 { self.force } else { -self.force };
        let total = self.cart_mass + self.pole_mass;
        let pml = self.pole_mass * self.half_length;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + pml * theta_dot * theta_dot * sin) / total;
        let theta_acc =
            (self.gravity * sin - cos * temp) / (self.half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total));
        let x_acc = temp - pml * theta_acc * cos / total;
        [
            x + self.tau * x_dot,
            x_dot + self.tau * x_acc,
            theta + self.tau * theta_dot,
            theta_dot + self.tau * theta_acc,
        ]
    }

    pub fn failed(&self, s: &CartState) -> bool {
        s[0].abs() > self.position_limit || s[2].abs() > self.angle_limit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartPoleDomainSpec {
    pub physics: CartPolePhysics,
    /// Transitions simulated under random actions for the linear fit.
    pub real_samples: usize,
    /// Transitions drawn from the fitted model for aggregation.
    pub synthetic_samples: usize,
    pub resolution: usize,
    pub discount: f64,
    pub kmeans_iterations: usize,
    pub aggregation_seed: u64,
    /// Half-widths of the box synthetic states are drawn from.
    pub sample_box: CartState,
    /// Half-width of the uniform start-state box.
    pub start_spread: f64,
    pub start_samples: usize,
}

impl Default for CartPoleDomainSpec {
    fn default() -> Self {
        Self {
            physics: CartPolePhysics::default(),
            real_samples: 2000,
            synthetic_samples: 40_000,
            resolution: 200,
            discount: 0.99,
            kmeans_iterations: 15,
            aggregation_seed: 17,
            sample_box: [2.4, 2.0, 0.21, 2.5],
            start_spread: 0.05,
            start_samples: 5000,
        }
    }
}

impl CartPoleDomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::config("resolution", "must be at least 2"));
        }
        if self.synthetic_samples < self.resolution {
            return Err(Error::config("synthetic_samples", "must be at least the resolution"));
        }
        if self.start_samples == 0 {
            return Err(Error::config("start_samples", "must be at least 1"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::config("discount", "must lie in (0, 1)"));
        }
        if self.sample_box.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::config("sample_box", "half-widths must be positive"));
        }
        if !(self.start_spread.is_finite() && self.start_spread >= 0.0) {
            return Err(Error::config("start_spread", "must be non-negative"));
        }
        Ok(())
    }
}

/// `s' = W^T [s, u, 1]` with `u = ±1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDynamics {
    /// 6 x 4, row-major.
    pub weights: Vec<f64>,
}

const N_INPUTS: usize = 6;

fn inputs(s: &CartState, a: usize) -> [f64; N_INPUTS] {
    [s[0], s[1], s[2], s[3], if a == 1 { 1.0 } else { -1.0 }, 1.0]
}

impl LinearDynamics {
    pub fn predict(&self, s: &CartState, a: usize) -> CartState {
        let z = inputs(s, a);
        let mut out = [0.0; 4];
        for (i, zi) in z.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += zi * self.weights[i * 4 + j];
            }
        }
        out
    }

    /// Mean squared one-step prediction error.
    pub fn residual(&self, data: &[Transition]) -> f64 {
        mean_squared_error(data, |s, a| self.predict(s, a))
    }
}

pub fn mean_squared_error(data: &[Transition], f: impl Fn(&CartState, usize) -> CartState) -> f64 {
    let total: f64 = data
        .iter()
        .map(|(s, a, t)| f(s, *a).iter().zip(t).map(|(p, y)| (p - y).powi(2)).sum::<f64>())
        .sum();
    total / data.len().max(1) as f64
}

/// Random-action episodes from near-upright starts, restarted on failure.
pub fn collect_transitions<R: Rng + ?Sized>(
    physics: &CartPolePhysics,
    n: usize,
    start_spread: f64,
    rng: &mut R,
) -> Vec<Transition> {
    let mut out = Vec::with_capacity(n);
    let mut s = start_state(start_spread, rng);
    while out.len() < n {
        let a = rng.random_range(0..2);
        let next = physics.step(s, a);
        out.push((s, a, next));
        s = if physics.failed(&next) { start_state(start_spread, rng) } else { next };
    }
    out
}

fn start_state<R: Rng + ?Sized>(spread: f64, rng: &mut R) -> CartState {
    std::array::from_fn(|_| if spread > 0.0 { rng.random_range(-spread..spread) } else { 0.0 })
}

/// Least-squares fit of the linear model.
pub fn fit_linear_dynamics(data: &[Transition]) -> Result<LinearDynamics> {
    if data.len() < N_INPUTS {
        return Err(Error::invalid(format!(
            "linear fit needs at least {N_INPUTS} samples, got {}",
            data.len()
        )));
    }
    let x = DMatrix::from_fn(data.len(), N_INPUTS, |r, c| inputs(&data[r].0, data[r].1)[c]);
    let y = DMatrix::from_fn(data.len(), 4, |r, c| data[r].2[c]);
    let w = x
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?;
    let weights = (0..N_INPUTS).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| w[(i, j)]).collect();
    Ok(LinearDynamics { weights })
}

/// Fitted dynamics plus the aggregation used to build the tabular model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartPoleModel {
    pub physics: CartPolePhysics,
    pub dynamics: LinearDynamics,
    /// Centroids of the non-failure states, in raw coordinates.
    pub centroids: Vec<CartState>,
    pub scale: CartState,
    pub failure_state: usize,
}

impl CartPoleModel {
    pub fn n_states(&self) -> usize {
        self.centroids.len() + 1
    }

    pub fn assign(&self, s: &CartState) -> usize {
        if self.physics.failed(s) {
            return self.failure_state;
        }
        nearest(&self.centroids, &self.scale, s)
    }
}

fn scaled_dist2(a: &CartState, b: &CartState, scale: &CartState) -> f64 {
    (0..4).map(|i| ((a[i] - b[i]) / scale[i]).powi(2)).sum()
}

fn nearest(centroids: &[CartState], scale: &CartState, s: &CartState) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = scaled_dist2(c, s, scale);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// k-means++ seeding followed by Lloyd iterations, in scaled coordinates.
fn kmeans(points: &[CartState], k: usize, scale: &CartState, iterations: usize, seed: u64) -> Vec<CartState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| scaled_dist2(p, &centroids[0], scale)).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(scaled_dist2(p, &c, scale));
        }
        centroids.push(c);
    }
    for _ in 0..iterations {
        let mut sums = vec![[0.0; 4]; k];
        let mut counts = vec![0usize; k];
        for p in points {
            let j = nearest(&centroids, scale, p);
            counts[j] += 1;
            for i in 0..4 {
                sums[j][i] += p[i];
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].map(|x| x / counts[j] as f64);
            }
        }
    }
    centroids
}

/// Builds the aggregated cart-pole MDP.
///
/// The last state is the absorbing failure state with reward 0; every other
/// state pays 1. Rows never visited by the synthetic samples fall back to the
/// fitted model applied at the centroid.
pub fn make_cartpole_env<R: Rng + ?Sized>(
    spec: &CartPoleDomainSpec,
    rng: &mut R,
) -> Result<(TabularMdp, CartPoleModel)> {
    spec.validate()?;
    let real = collect_transitions(&spec.physics, spec.real_samples, spec.start_spread, rng);
    let dynamics = fit_linear_dynamics(&real)?;

    let synthetic: Vec<Transition> = (0..spec.synthetic_samples)
        .map(|_| {
            let s: CartState = std::array::from_fn(|i| rng.random_range(-spec.sample_box[i]..spec.sample_box[i]));
            let a = rng.random_range(0..2);
            (s, a, dynamics.predict(&s, a))
        })
        .collect();
    let live: Vec<CartState> =
        synthetic.iter().map(|t| t.0).filter(|s| !spec.physics.failed(s)).collect();
    let k = spec.resolution - 1;
    if live.len() < k {
        return Err(Error::invalid("too few non-failure synthetic states for the requested resolution"));
    }
    let centroids = kmeans(&live, k, &spec.sample_box, spec.kmeans_iterations, spec.aggregation_seed);
    let model = CartPoleModel {
        physics: spec.physics,
        dynamics,
        centroids,
        scale: spec.sample_box,
        failure_state: k,
    };

    let n = spec.resolution;
    let mut counts = vec![0.0; n * 2 * n];
    for (s, a, t) in &synthetic {
        let i = model.assign(s);
        if i == model.failure_state {
            continue;
        }
        counts[(i * 2 + a) * n + model.assign(t)] += 1.0;
    }
    for i in 0..k {
        for a in 0..2 {
            let row = &mut counts[(i * 2 + a) * n..(i * 2 + a + 1) * n];
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|c| *c /= total);
            } else {
                row[model.assign(&model.dynamics.predict(&model.centroids[i], a))] = 1.0;
            }
        }
    }
    for a in 0..2 {
        counts[(k * 2 + a) * n + k] = 1.0;
    }

    let mut rewards = vec![1.0; n * 2];
    rewards[k * 2] = 0.0;
    rewards[k * 2 + 1] = 0.0;

    let mut initial = vec![0.0; n];
    for _ in 0..spec.start_samples {
        initial[model.assign(&start_state(spec.start_spread, rng))] += 1.0;
    }
    initial.iter_mut().for_each(|p| *p /= spec.start_samples as f64);

    let mdp = TabularMdp::new(n, 2, rewards, counts, spec.discount, initial)?;
    Ok((mdp, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> CartPoleDomainSpec {
        CartPoleDomainSpec { synthetic_samples: 20_000, kmeans_iterations: 5, ..Default::default() }
    }

    #[test]
    fn shape_and_validity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (mdp, model) = make_cartpole_env(&small_spec(), &mut rng).unwrap();
        assert_eq!((mdp.n_states(), mdp.n_actions()), (200, 2));
        assert!(mdp.validate().is_empty());
        assert_eq!(model.n_states(), 200);
        assert_eq!(mdp.row(199, 0)[199], 1.0);
        assert_eq!(mdp.reward(199, 1), 0.0);
        assert_eq!(mdp.reward(3, 1), 1.0);
        assert_eq!(mdp.initial_dist()[199], 0.0);
    }

    #[test]
    fn linear_fit_beats_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let physics = CartPolePhysics::default();
        let data = collect_transitions(&physics, 1000, 0.05, &mut rng);
        let fit = fit_linear_dynamics(&data).unwrap();
        let identity = mean_squared_error(&data, |s, _| *s);
        let zero = mean_squared_error(&data, |_, _| [0.0; 4]);
        assert!(fit.residual(&data) < identity, "{} vs {identity}", fit.residual(&data));
        assert!(fit.residual(&data) < zero);
    }

    #[test]
    fn linear_fit_recovers_exact_linear_system() {
        let w: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        let truth = LinearDynamics { weights: w.clone() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<Transition> = (0..50)
            .map(|_| {
                let s: CartState = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let a = rng.random_range(0..2);
                (s, a, truth.predict(&s, a))
            })
            .collect();
        let fit = fit_linear_dynamics(&data).unwrap();
        for (a, b) in fit.weights.iter().zip(&w) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_samples_for_fit() {
        let s = [0.0; 4];
        let data = vec![(s, 0, s); 5];
        assert!(fit_linear_dynamics(&data).is_err());
    }

    #[test]
    fn physics_pushes_the_right_way() {
        let p = CartPolePhysics::default();
        let right = p.step([0.0; 4], 1);
        let left = p.step([0.0; 4], 0);
        assert!(right[1] > 0.0 && left[1] < 0.0);
        assert!(right[3] < 0.0);
        assert!(p.failed(&[2.5, 0.0, 0.0, 0.0]));
        assert!(!p.failed(&[0.0, 5.0, 0.2, 5.0]));
    }

    #[test]
    fn seeded_construction_is_deterministic() {
        let spec = CartPoleDomainSpec { synthetic_samples: 5000, resolution: 30, ..Default::default() };
        let a = make_cartpole_env(&spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = make_cartpole_env(&spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }
}
