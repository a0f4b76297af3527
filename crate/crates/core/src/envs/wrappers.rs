//! State-proportional correlated noise injection and pairwise reward
//! augmentation, applicable to any [`Environment`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corr::CorrelationMatrix;
use crate::env::{Environment, Policy, RandomPolicy};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::state::{ActionId, StateVec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseInjectConfig {
    pub r_noise: f64,
    pub pair_corr: f64,
    /// Dimension pairs whose noises are correlated with `pair_corr`.
    /// Pairs must be disjoint.
    #[serde(default)]
    pub pairs: Vec<(usize, usize)>,
}

impl NoiseInjectConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.r_noise >= 0.0) || !self.r_noise.is_finite() {
            return Err(Error::InvalidParams("r_noise must be nonnegative".into()));
        }
        if !(self.pair_corr.abs() < 1.0) {
            return Err(Error::InvalidParams("|pair_corr| must be < 1".into()));
        }
        let mut seen = vec![false; dim];
        for &(i, j) in &self.pairs {
            if i >= dim || j >= dim || i == j || seen[i] || seen[j] {
                return Err(Error::InvalidParams(format!(
                    "noise pair ({i},{j}) invalid or overlapping for dimension {dim}"
                )));
            }
            seen[i] = true;
            seen[j] = true;
        }
        Ok(())
    }

    pub fn correlation(&self, dim: usize) -> Result<CorrelationMatrix> {
        self.validate(dim)?;
        let pairs: Vec<_> = self.pairs.iter().map(|&(i, j)| (i, j, self.pair_corr)).collect();
        CorrelationMatrix::with_pairs(dim, &pairs)
    }
}

/// Adds `e ~ N(0, D Γ D)` with `D_ii² = r_noise·|base_next_i - prev_i|`.
#[derive(Debug, Clone)]
pub struct NoiseInjector {
    cfg: NoiseInjectConfig,
    factor: DMatrix<f64>,
}

impl NoiseInjector {
    pub fn new(cfg: NoiseInjectConfig, dim: usize) -> Result<Self> {
        let factor = cfg.correlation(dim)?.factor()?;
        Ok(Self { cfg, factor })
    }

    pub fn config(&self) -> &NoiseInjectConfig {
        &self.cfg
    }

    /// The injected noise for one step, given the noiseless step delta.
    pub fn noise(&self, base_next: &[f64], prev: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let n = base_next.len();
        let z: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        (0..n)
            .map(|i| {
                let scale = (self.cfg.r_noise * (base_next[i] - prev[i]).abs()).sqrt();
                let corr_z: f64 = (0..n).map(|k| self.factor[(i, k)] * z[k]).sum();
                scale * corr_z
            })
            .collect()
    }

    pub fn inject(&self, base_next: &StateVec, prev: &StateVec, rng: &mut RngStream) -> StateVec {
        let e = self.noise(base_next.as_slice(), prev.as_slice(), rng);
        let out: Vec<f64> = base_next.iter().zip(&e).map(|(b, e)| b + e).collect();
        StateVec::new(out).unwrap_or_else(|_| base_next.clone())
    }
}

/// One-shot form of [`NoiseInjector::inject`].
pub fn wrap_noise_inject(
    base_next: &StateVec,
    prev: &StateVec,
    cfg: &NoiseInjectConfig,
    rng: &mut RngStream,
) -> Result<StateVec> {
    if base_next.dim() != prev.dim() {
        return Err(Error::DimensionMismatch {
            expected: prev.dim(),
            got: base_next.dim(),
        });
    }
    Ok(NoiseInjector::new(cfg.clone(), base_next.dim())?.inject(base_next, prev, rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardAugmentConfig {
    pub r_reward: f64,
    pub pairs: Vec<(usize, usize)>,
    /// Per-pair `(lo, hi)` bounds of `(s_i + s_j)²` used by `Norm`.
    pub norm_bounds: Vec<(f64, f64)>,
}

impl RewardAugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pairs.len() != self.norm_bounds.len() {
            return Err(Error::InvalidParams("one norm bound per pair required".into()));
        }
        if self.norm_bounds.iter().any(|&(lo, hi)| !(hi > lo)) {
            return Err(Error::InvalidParams("norm bounds need hi > lo".into()));
        }
        Ok(())
    }

    /// `(1/N_d) Σ Norm((s_i + s_j)²)`, in `[0, 1]`.
    pub fn mean_norm(&self, s: &[f64]) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .pairs
            .iter()
            .zip(&self.norm_bounds)
            .map(|(&(i, j), &(lo, hi))| normalize((s[i] + s[j]).powi(2), lo, hi))
            .sum();
        total / self.pairs.len() as f64
    }
}

/// `clamp((q - lo) / (hi - lo), 0, 1)`.
pub fn normalize(q: f64, lo: f64, hi: f64) -> f64 {
    ((q - lo) / (hi - lo)).clamp(0.0, 1.0)
}

pub fn wrap_reward_augment(base_r: f64, s_next: &StateVec, cfg: &RewardAugmentConfig) -> f64 {
    base_r + cfg.r_reward * cfg.mean_norm(s_next.as_slice())
}

/// 1st / 99th percentiles of each `(s_i + s_j)²` (or `s_i²` for `i == j`)
/// along a uniform-random-policy rollout of `steps` transitions.
pub fn calibrate_norm_bounds<E: Environment + ?Sized>(
    env: &E,
    pairs: &[(usize, usize)],
    steps: usize,
    rng: &mut RngStream,
) -> Vec<(f64, f64)> {
    let policy = RandomPolicy { n_actions: env.n_actions() };
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(steps); pairs.len()];
    let mut state = env.reset(rng);
    let mut t = 0;
    for _ in 0..steps {
        let a = policy.act(&state, rng);
        let step = env.step(&state, a, rng);
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let q = if i == j { step.next[i].powi(2) } else { (step.next[i] + step.next[j]).powi(2) };
            samples[k].push(q);
        }
        t += 1;
        state = step.next;
        if step.terminal || t >= env.max_steps() {
            state = env.reset(rng);
            t = 0;
        }
    }
    samples
        .into_iter()
        .map(|mut v| {
            v.sort_by(|a, b| a.total_cmp(b));
            let lo = percentile(&v, 0.01);
            let hi = percentile(&v, 0.99);
            if hi > lo {
                (lo, hi)
            } else {
                (lo, lo + 1.0)
            }
        })
        .collect()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Environment whose next states carry injected correlated noise.
#[derive(Debug, Clone)]
pub struct NoiseInjected<E> {
    pub inner: E,
    injector: NoiseInjector,
}

impl<E: Environment> NoiseInjected<E> {
    pub fn new(inner: E, cfg: NoiseInjectConfig) -> Result<Self> {
        let injector = NoiseInjector::new(cfg, inner.state_dim())?;
        Ok(Self { inner, injector })
    }

    pub fn config(&self) -> &NoiseInjectConfig {
        self.injector.config()
    }
}

impl<E: Environment> Environment for NoiseInjected<E> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }
    fn max_steps(&self) -> usize {
        self.inner.max_steps()
    }
    fn discount(&self) -> f64 {
        self.inner.discount()
    }
    fn reset(&self, rng: &mut RngStream) -> StateVec {
        self.inner.reset(rng)
    }
    fn sample_next(&self, state: &StateVec, action: ActionId, rng: &mut RngStream) -> StateVec {
        let base = self.inner.sample_next(state, action, rng);
        self.injector.inject(&base, state, rng)
    }
    fn reward(&self, state: &StateVec, action: ActionId, next: &StateVec) -> f64 {
        self.inner.reward(state, action, next)
    }
    fn is_terminal(&self, next: &StateVec) -> bool {
        self.inner.is_terminal(next)
    }
    fn arrival_reward(&self, next: &StateVec) -> f64 {
        self.inner.arrival_reward(next)
    }
}

/// Environment with `r_reward · mean Norm((s'_i + s'_j)²)` added to every reward.
#[derive(Debug, Clone)]
pub struct RewardAugmented<E> {
    pub inner: E,
    cfg: RewardAugmentConfig,
}

impl<E: Environment> RewardAugmented<E> {
    pub fn new(inner: E, cfg: RewardAugmentConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.pairs.iter().any(|&(i, j)| i >= inner.state_dim() || j >= inner.state_dim()) {
            return Err(Error::InvalidParams("reward pair index out of range".into()));
        }
        Ok(Self { inner, cfg })
    }

    pub fn config(&self) -> &RewardAugmentConfig {
        &self.cfg
    }
}

impl<E: Environment> Environment for RewardAugmented<E> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }
    fn max_steps(&self) -> usize {
        self.inner.max_steps()
    }
    fn discount(&self) -> f64 {
        self.inner.discount()
    }
    fn reset(&self, rng: &mut RngStream) -> StateVec {
        self.inner.reset(rng)
    }
    fn sample_next(&self, state: &StateVec, action: ActionId, rng: &mut RngStream) -> StateVec {
        self.inner.sample_next(state, action, rng)
    }
    fn reward(&self, state: &StateVec, action: ActionId, next: &StateVec) -> f64 {
        wrap_reward_augment(self.inner.reward(state, action, next), next, &self.cfg)
    }
    fn is_terminal(&self, next: &StateVec) -> bool {
        self.inner.is_terminal(next)
    }
    fn arrival_reward(&self, next: &StateVec) -> f64 {
        self.inner.arrival_reward(next) + self.cfg.r_reward * self.cfg.mean_norm(next.as_slice())
    }
}
