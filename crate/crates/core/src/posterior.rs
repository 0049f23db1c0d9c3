//! Dirichlet-categorical belief over transition rows.
//!
//! Rewards, discount and the start distribution are known; each `(s, a)` row of
//! the transition tensor carries an independent Dirichlet whose concentration is
//! `prior + weight * count(s, a, s')`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{sample_index, Dynamics, ModelSkeleton, TabularMdp};

/// Observed `(state, action, next_state)` transitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionLog {
    pub n_states: usize,
    pub n_actions: usize,
    pub records: Vec<(usize, usize, usize)>,
}

impl TransitionLog {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, s: usize, a: usize, next: usize) -> Result<()> {
        self.check(s, a, next)?;
        self.records.push((s, a, next));
        Ok(())
    }

    fn check(&self, s: usize, a: usize, next: usize) -> Result<()> {
        if s >= self.n_states || next >= self.n_states || a >= self.n_actions {
            return Err(Error::invalid(format!(
                "record ({s}, {a}, {next}) out of range for S={}, A={}",
                self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Plain-text form: comment line, `S A` header, then one `s a s'` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(16 * self.records.len() + 64);
        out.push_str("# transition log: header `n_states n_actions`, then `state action next_state`\n");
        let _ = writeln!(out, "{} {}", self.n_states, self.n_actions);
        for (s, a, t) in &self.records {
            let _ = writeln!(out, "{s} {a} {t}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut log: Option<TransitionLog> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            let nums = fields
                .iter()
                .map(|f| f.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(format!("{e} in `{line}`")))?;
            match &mut log {
                None => {
                    let [s, a] = nums[..] else {
                        return Err(parse_err("header must be `n_states n_actions`".into()));
                    };
                    if s == 0 || a == 0 {
                        return Err(parse_err("header declares an empty space".into()));
                    }
                    log = Some(TransitionLog::new(s, a));
                }
                Some(log) => {
                    let [s, a, t] = nums[..] else {
                        return Err(parse_err("record must be `state action next_state`".into()));
                    };
                    log.push(s, a, t).map_err(|e| parse_err(e.to_string()))?;
                }
            }
        }
        log.ok_or(Error::Parse {
            line: 0,
            message: "missing header".into(),
        })
    }
}

/// Source of transition models: a posterior, or a single fixed model.
pub trait ModelSampler: Sync {
    type Model<'a>: Dynamics
    where
        Self: 'a;

    fn skeleton(&self) -> &ModelSkeleton;

    /// A model whose rows are materialized on first use, fully determined by `seed`.
    fn draw(&self, seed: u64) -> Self::Model<'_>;

    /// The same model as [`ModelSampler::draw`] with every row materialized.
    fn draw_full(&self, seed: u64) -> TabularMdp;

    /// Expected transitions under the belief.
    fn mean_model(&self) -> TabularMdp;
}

/// Independent Dirichlet per transition row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletPosterior {
    skeleton: ModelSkeleton,
    concentrations: Vec<f64>,
}

impl DirichletPosterior {
    /// Builds a posterior from an explicit concentration tensor (`S x A x S`).
    pub fn new(skeleton: ModelSkeleton, concentrations: Vec<f64>) -> Result<Self> {
        let n = skeleton.n_states;
        if concentrations.len() != n * skeleton.n_actions * n {
            return Err(Error::invalid("concentration tensor has the wrong size"));
        }
        if concentrations.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::invalid("concentrations must be positive and finite"));
        }
        Ok(Self {
            skeleton,
            concentrations,
        })
    }

    /// Conjugate update: `prior + count(s, a, s')`.
    pub fn from_data(prior: f64, log: &TransitionLog, skeleton: &ModelSkeleton) -> Result<Self> {
        Self::from_weighted_data(prior, 1.0, log, skeleton)
    }

    /// Tempered update: `prior + weight * count(s, a, s')`.
    ///
    /// `weight = 1` is the ordinary posterior; smaller weights keep the posterior
    /// mean close to the data while widening the spread over models.
    pub fn from_weighted_data(
        prior: f64,
        weight: f64,
        log: &TransitionLog,
        skeleton: &ModelSkeleton,
    ) -> Result<Self> {
        if !(prior.is_finite() && prior > 0.0) {
            return Err(Error::config("prior_concentration", format!("must be > 0, got {prior}")));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::config("evidence_weight", format!("must be > 0, got {weight}")));
        }
        if log.n_states != skeleton.n_states || log.n_actions != skeleton.n_actions {
            return Err(Error::invalid(format!(
                "log is {}x{} but the model is {}x{}",
                log.n_states, log.n_actions, skeleton.n_states, skeleton.n_actions
            )));
        }
        let n = skeleton.n_states;
        let mut conc = vec![prior; n * skeleton.n_actions * n];
        for &(s, a, t) in &log.records {
            log.check(s, a, t)?;
            conc[(s * skeleton.n_actions + a) * n + t] += weight;
        }
        Self::new(skeleton.clone(), conc)
    }

    pub fn n_states(&self) -> usize {
        self.skeleton.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.skeleton.n_actions
    }

    pub fn concentrations(&self) -> &[f64] {
        &self.concentrations
    }

    pub fn concentration_row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.n_states();
        let start = (s * self.n_actions() + a) * n;
        &self.concentrations[start..start + n]
    }

    /// Draws one full model.
    pub fn sample_model<R: Rng + ?Sized>(&self, rng: &mut R) -> TabularMdp {
        self.draw_full(rng.random())
    }

    /// One Dirichlet draw for row `(s, a)` of the model identified by `seed`.
    fn sample_row(&self, seed: u64, s: usize, a: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((s * self.n_actions() + a) as u64);
        dirichlet_row(self.concentration_row(s, a), &mut rng)
    }
}

/// Normalized independent `Gamma(c_i, 1)` draws.
///
/// With tiny concentrations every gamma draw can underflow to zero; the row then
/// falls back to a point mass on the largest concentration.
pub fn dirichlet_row<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Vec<f64> {
    let mut row: Vec<f64> = concentration
        .iter()
        .map(|&c| Gamma::new(c, 1.0).map(|g| g.sample(rng)).unwrap_or(0.0))
        .collect();
    let total: f64 = row.iter().sum();
    if total > 0.0 && total.is_finite() {
        row.iter_mut().for_each(|x| *x /= total);
    } else {
        let best = concentration
            .iter()
            .enumerate()
            .fold(0, |best, (i, c)| if *c > concentration[best] { i } else { best });
        row.iter_mut().for_each(|x| *x = 0.0);
        row[best] = 1.0;
    }
    row
}

impl ModelSampler for DirichletPosterior {
    type Model<'a> = LazyModel<'a>;

    fn skeleton(&self) -> &ModelSkeleton {
        &self.skeleton
    }

    fn draw(&self, seed: u64) -> LazyModel<'_> {
        LazyModel {
            posterior: self,
            seed,
            rows: vec![None; self.n_states() * self.n_actions()],
        }
    }

    fn draw_full(&self, seed: u64) -> TabularMdp {
        let mut transitions = Vec::with_capacity(self.concentrations.len());
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                transitions.extend(self.sample_row(seed, s, a));
            }
        }
        TabularMdp::from_skeleton(&self.skeleton, transitions)
            .expect("normalized Dirichlet rows form a valid model")
    }

    fn mean_model(&self) -> TabularMdp {
        let n = self.n_states();
        let mut transitions = self.concentrations.clone();
        for row in transitions.chunks_mut(n) {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|c| *c /= total);
        }
        TabularMdp::from_skeleton(&self.skeleton, transitions)
            .expect("normalized concentrations form a valid model")
    }
}

/// A posterior sample whose rows are drawn when first visited.
#[derive(Debug, Clone)]
pub struct LazyModel<'a> {
    posterior: &'a DirichletPosterior,
    seed: u64,
    rows: Vec<Option<Vec<f64>>>,
}

impl LazyModel<'_> {
    fn row(&mut self, s: usize, a: usize) -> &[f64] {
        let idx = s * self.posterior.n_actions() + a;
        let (posterior, seed) = (self.posterior, self.seed);
        self.rows[idx].get_or_insert_with(|| posterior.sample_row(seed, s, a))
    }
}

impl Dynamics for LazyModel<'_> {
    fn n_states(&self) -> usize {
        self.posterior.n_states()
    }
    fn n_actions(&self) -> usize {
        self.posterior.n_actions()
    }
    fn discount(&self) -> f64 {
        self.posterior.skeleton.discount
    }
    fn reward(&self, s: usize, a: usize) -> f64 {
        self.posterior.skeleton.rewards[s * self.posterior.n_actions() + a]
    }
    fn sample_initial<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        sample_index(&self.posterior.skeleton.initial_dist, rng.random())
    }
    fn sample_next<R: Rng + ?Sized>(&mut self, s: usize, a: usize, rng: &mut R) -> usize {
        let u = rng.random();
        sample_index(self.row(s, a), u)
    }
}

/// A point-mass belief: every draw is the same model.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedModel {
    mdp: TabularMdp,
    skeleton: ModelSkeleton,
}

impl FixedModel {
    pub fn new(mdp: TabularMdp) -> Self {
        let skeleton = mdp.skeleton();
        Self { mdp, skeleton }
    }

    pub fn model(&self) -> &TabularMdp {
        &self.mdp
    }
}

impl ModelSampler for FixedModel {
    type Model<'a> = TabularMdp;

    fn skeleton(&self) -> &ModelSkeleton {
        &self.skeleton
    }

    fn draw(&self, _seed: u64) -> TabularMdp {
        self.mdp.clone()
    }

    fn draw_full(&self, _seed: u64) -> TabularMdp {
        self.mdp.clone()
    }

    fn mean_model(&self) -> TabularMdp {
        self.mdp.clone()
    }
}
