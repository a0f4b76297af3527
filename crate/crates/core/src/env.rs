//! Environment and policy interfaces shared by every module.

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::state::{ActionId, StateVec, TransitionRecord};

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next: StateVec,
    pub reward: f64,
    pub terminal: bool,
}

/// A stochastic environment with a finite action set.
///
/// Stepping is split into sampling the next state and scoring the
/// transition, so learned models can reuse the true reward and termination
/// rules. The step reward must decompose as an outcome-independent part plus
/// `arrival_reward(next)`; tabular discretization relies on this to keep
/// next-state-dependent rewards attached to next states.
pub trait Environment: Send + Sync {
    fn state_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Episode step budget.
    fn max_steps(&self) -> usize;
    fn discount(&self) -> f64;
    fn reset(&self, rng: &mut RngStream) -> StateVec;
    fn sample_next(&self, state: &StateVec, action: ActionId, rng: &mut RngStream) -> StateVec;
    fn reward(&self, state: &StateVec, action: ActionId, next: &StateVec) -> f64;
    /// Whether arriving in `next` ends the episode.
    fn is_terminal(&self, next: &StateVec) -> bool;

    fn arrival_reward(&self, _next: &StateVec) -> f64 {
        0.0
    }

    fn step(&self, state: &StateVec, action: ActionId, rng: &mut RngStream) -> Step {
        let next = self.sample_next(state, action, rng);
        let reward = self.reward(state, action, &next);
        let terminal = self.is_terminal(&next);
        Step { next, reward, terminal }
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }
    fn max_steps(&self) -> usize {
        (**self).max_steps()
    }
    fn discount(&self) -> f64 {
        (**self).discount()
    }
    fn reset(&self, rng: &mut RngStream) -> StateVec {
        (**self).reset(rng)
    }
    fn sample_next(&self, state: &StateVec, action: ActionId, rng: &mut RngStream) -> StateVec {
        (**self).sample_next(state, action, rng)
    }
    fn reward(&self, state: &StateVec, action: ActionId, next: &StateVec) -> f64 {
        (**self).reward(state, action, next)
    }
    fn is_terminal(&self, next: &StateVec) -> bool {
        (**self).is_terminal(next)
    }
    fn arrival_reward(&self, next: &StateVec) -> f64 {
        (**self).arrival_reward(next)
    }
}

pub trait Policy {
    fn act(&self, state: &StateVec, rng: &mut RngStream) -> ActionId;
}

impl<F> Policy for F
where
    F: Fn(&StateVec, &mut RngStream) -> ActionId,
{
    fn act(&self, state: &StateVec, rng: &mut RngStream) -> ActionId {
        self(state, rng)
    }
}

/// Uniform over the action set.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy {
    pub n_actions: usize,
}

impl Policy for RandomPolicy {
    fn act(&self, _state: &StateVec, rng: &mut RngStream) -> ActionId {
        ActionId(rng.index(self.n_actions))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub discounted_return: f64,
    pub length: usize,
    pub final_state: StateVec,
    /// Ended by a terminal state rather than the step budget.
    pub reached_terminal: bool,
}

/// Run one episode from `env.reset`, truncating at the step budget.
pub fn run_episode<E, P>(env: &E, policy: &P, gamma: f64, rng: &mut RngStream) -> Episode
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let start = env.reset(rng);
    run_episode_from(env, policy, start, gamma, rng, |_| {})
}

/// Run one episode from a given start, calling `on_step` with every transition.
pub fn run_episode_from<E, P>(
    env: &E,
    policy: &P,
    start: StateVec,
    gamma: f64,
    rng: &mut RngStream,
    mut on_step: impl FnMut(&TransitionRecord),
) -> Episode
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let mut state = start;
    let mut ret = 0.0;
    let mut discount = 1.0;
    let mut length = 0;
    let mut reached_terminal = false;
    while length < env.max_steps() {
        let action = policy.act(&state, rng);
        let step = env.step(&state, action, rng);
        ret += discount * step.reward;
        discount *= gamma;
        length += 1;
        let rec = TransitionRecord {
            state: state.clone(),
            action,
            next_state: step.next.clone(),
            reward: step.reward,
            terminal: step.terminal,
        };
        on_step(&rec);
        state = step.next;
        if step.terminal {
            reached_terminal = true;
            break;
        }
    }
    Episode {
        discounted_return: ret,
        length,
        final_state: state,
        reached_terminal,
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }

    pub fn std_err(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }
}

/// Run `n_episodes` episodes, episode `i` on the child stream `episode/i`.
/// Two policies evaluated with the same stream see common random numbers.
pub fn run_episodes<E, P>(env: &E, policy: &P, n_episodes: usize, gamma: f64, rng: &RngStream) -> Vec<Episode>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    (0..n_episodes)
        .map(|i| run_episode(env, policy, gamma, &mut rng.split_indexed("episode", i)))
        .collect()
}

/// Monte Carlo estimate of the discounted return `J(π)`.
pub fn policy_return<E, P>(env: &E, policy: &P, n_episodes: usize, gamma: f64, rng: &RngStream) -> MeanStd
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    assert!(n_episodes >= 1);
    let returns: Vec<f64> = run_episodes(env, policy, n_episodes, gamma, rng)
        .iter()
        .map(|e| e.discounted_return)
        .collect();
    MeanStd::of(&returns)
}
