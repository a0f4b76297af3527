//! k-step model rollouts with correlated Gaussian noise.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corr::CorrelationMatrix;
use crate::dataset::{Dataset, Provenance};
use crate::env::{Environment, Policy};
use crate::error::{Error, Result};
use crate::models::DynamicsModel;
use crate::rng::RngStream;
use crate::state::{ActionId, StateVec, TransitionRecord};

/// Draws `e ~ N(0, Γ)` through a cached factor `L Lᵀ = Γ`.
#[derive(Debug, Clone)]
pub struct CorrelatedSampler {
    factor: DMatrix<f64>,
}

impl CorrelatedSampler {
    pub fn new(corr: &CorrelationMatrix) -> Result<Self> {
        Ok(Self { factor: corr.factor()? })
    }

    pub fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        let n = self.factor.nrows();
        let z: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..n).map(|k| self.factor[(i, k)] * z[k]).sum();
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut out = vec![0.0; self.factor.nrows()];
        self.sample_into(rng, &mut out);
        out
    }
}

pub fn sample_correlated(corr: &CorrelationMatrix, rng: &mut RngStream) -> Result<StateVec> {
    StateVec::new(CorrelatedSampler::new(corr)?.sample(rng))
}

/// A model bound to a factor of its correlation matrix.
#[derive(Debug, Clone)]
pub struct ModelSampler<'a> {
    model: &'a DynamicsModel,
    noise: CorrelatedSampler,
}

impl<'a> ModelSampler<'a> {
    pub fn new(model: &'a DynamicsModel) -> Result<Self> {
        Ok(Self { model, noise: CorrelatedSampler::new(model.corr())? })
    }

    /// `μ + D e` with `e ~ N(0, Γ)`, so the next state has covariance `D Γ D`.
    pub fn step(&self, s: &StateVec, a: ActionId, rng: &mut RngStream) -> Result<StateVec> {
        let pred = self.model.predict(s, a)?;
        let e = self.noise.sample(rng);
        let next: Vec<f64> = pred
            .mean
            .iter()
            .zip(pred.scales.iter().zip(&e))
            .map(|(m, (d, e))| m + d * e)
            .collect();
        StateVec::new(next)
    }
}

pub fn step_model(model: &DynamicsModel, s: &StateVec, a: ActionId, rng: &mut RngStream) -> Result<StateVec> {
    ModelSampler::new(model)?.step(s, a, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub k: usize,
    pub n_starts: usize,
    pub branch: usize,
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n_starts == 0 || self.branch == 0 {
            return Err(Error::InvalidParams("rollout k, n_starts and branch must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutReport {
    pub branches: usize,
    pub records: usize,
    /// Branches cut short by a non-finite model state.
    pub non_finite: usize,
    /// Branches ended early by a terminal state.
    pub terminated: usize,
}

/// Scores a model transition as `(reward, terminal)`.
pub trait TransitionScorer: Sync {
    fn score(&self, s: &StateVec, a: ActionId, next: &StateVec) -> (f64, bool);
}

impl<F> TransitionScorer for F
where
    F: Fn(&StateVec, ActionId, &StateVec) -> (f64, bool) + Sync,
{
    fn score(&self, s: &StateVec, a: ActionId, next: &StateVec) -> (f64, bool) {
        self(s, a, next)
    }
}

/// Uses an environment's reward and termination rules.
pub struct EnvScorer<'a, E: ?Sized>(pub &'a E);

impl<E: Environment + ?Sized> TransitionScorer for EnvScorer<'_, E> {
    fn score(&self, s: &StateVec, a: ActionId, next: &StateVec) -> (f64, bool) {
        (self.0.reward(s, a, next), self.0.is_terminal(next))
    }
}

/// Roll the model `cfg.k` steps from each of the first `cfg.n_starts`
/// starts (cycling if fewer are given), `cfg.branch` times each. Branch `b`
/// of start `i` uses the child stream `start/i` then `branch/b`; records are
/// merged in start, then branch order.
pub fn rollout<P, S>(
    model: &DynamicsModel,
    policy: &P,
    starts: &[StateVec],
    cfg: &RolloutConfig,
    scorer: &S,
    rng: &RngStream,
) -> Result<(Dataset, RolloutReport)>
where
    P: Policy + Sync + ?Sized,
    S: TransitionScorer + ?Sized,
{
    cfg.validate()?;
    if starts.is_empty() {
        return Err(Error::InvalidParams("rollout needs at least one start state".into()));
    }
    let sampler = ModelSampler::new(model)?;
    let branches: Vec<(Vec<TransitionRecord>, bool, bool)> = (0..cfg.n_starts * cfg.branch)
        .into_par_iter()
        .map(|job| {
            let (i, b) = (job / cfg.branch, job % cfg.branch);
            let mut r = rng.split_indexed("start", i).split_indexed("branch", b);
            run_branch(&sampler, policy, starts[i % starts.len()].clone(), cfg.k, scorer, &mut r)
        })
        .collect();
    let mut ds = Dataset::new(Provenance::Model);
    let mut report = RolloutReport { branches: branches.len(), ..Default::default() };
    for (records, non_finite, terminated) in branches {
        report.non_finite += non_finite as usize;
        report.terminated += terminated as usize;
        report.records += records.len();
        for rec in records {
            ds.push(rec)?;
        }
    }
    Ok((ds, report))
}

fn run_branch<P, S>(
    sampler: &ModelSampler<'_>,
    policy: &P,
    mut s: StateVec,
    k: usize,
    scorer: &S,
    rng: &mut RngStream,
) -> (Vec<TransitionRecord>, bool, bool)
where
    P: Policy + ?Sized,
    S: TransitionScorer + ?Sized,
{
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let a = policy.act(&s, rng);
        let next = match sampler.step(&s, a, rng) {
            Ok(n) => n,
            Err(_) => return (out, true, false),
        };
        let (reward, terminal) = scorer.score(&s, a, &next);
        out.push(TransitionRecord { state: s, action: a, next_state: next.clone(), reward, terminal });
        if terminal {
            return (out, false, true);
        }
        s = next;
    }
    (out, false, false)
}
