//! Finite MDPs with sparse or per-dimension-factored transition rows.

use serde::{Deserialize, Serialize};

use crate::env::Policy;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng::RngStream;
use crate::state::{ActionId, StateVec};

/// Next-state distribution of one `(state, action)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TransitionRow {
    /// Sparse `(next, probability)` list.
    Joint(Vec<(usize, f64)>),
    /// Independent per-dimension `(coordinate, probability)` lists; the
    /// joint is their product over the MDP's product shape.
    Product(Vec<Vec<(usize, f64)>>),
}

/// `⟨S, A, P, R, γ⟩` with rewards split into an immediate part `R[s][a]`
/// and a part `arrival[s']` collected on entering `s'`. Entering a terminal
/// state ends the episode: its continuation value is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMDP {
    n_states: usize,
    n_actions: usize,
    rows: Vec<TransitionRow>,
    reward: Vec<f64>,
    arrival: Vec<f64>,
    terminal: Vec<bool>,
    gamma: f64,
    /// Per-dimension cell counts when states index a row-major product grid.
    shape: Option<Vec<usize>>,
}

impl TabularMDP {
    /// `rows` and `reward` are indexed `s * n_actions + a`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        rows: Vec<TransitionRow>,
        reward: Vec<f64>,
        arrival: Vec<f64>,
        terminal: Vec<bool>,
        gamma: f64,
        shape: Option<Vec<usize>>,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidMdp(m));
        if n_states == 0 || n_actions == 0 {
            return bad("empty state or action set".into());
        }
        let pairs = n_states * n_actions;
        if rows.len() != pairs || reward.len() != pairs || arrival.len() != n_states || terminal.len() != n_states {
            return bad("table sizes do not match n_states × n_actions".into());
        }
        if !(0.0..=1.0).contains(&gamma) {
            return bad(format!("gamma {gamma} outside [0, 1]"));
        }
        if let Some(shape) = &shape {
            if shape.iter().product::<usize>() != n_states {
                return bad("product shape does not match n_states".into());
            }
        }
        if reward.iter().chain(&arrival).any(|r| !r.is_finite()) {
            return bad("non-finite reward".into());
        }
        let mdp = Self { n_states, n_actions, rows, reward, arrival, terminal, gamma, shape };
        for k in 0..pairs {
            mdp.check_row(k)?;
        }
        Ok(mdp)
    }

    fn check_row(&self, k: usize) -> Result<()> {
        let check = |entries: &[(usize, f64)], bound: usize| -> Result<()> {
            let total: f64 = entries.iter().map(|e| e.1).sum();
            if entries.iter().any(|&(i, p)| i >= bound || !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidMdp(format!(
                    "row (s={}, a={}) is not a distribution (sum {total})",
                    k / self.n_actions,
                    k % self.n_actions
                )));
            }
            Ok(())
        };
        match &self.rows[k] {
            TransitionRow::Joint(e) => check(e, self.n_states),
            TransitionRow::Product(dims) => {
                let shape = self
                    .shape
                    .as_ref()
                    .ok_or_else(|| Error::NotProductSpace("product row without a product shape".into()))?;
                if dims.len() != shape.len() {
                    return Err(Error::InvalidMdp("product row has the wrong number of factors".into()));
                }
                dims.iter().zip(shape).try_for_each(|(d, &n)| check(d, n))
            }
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn shape(&self) -> Option<&[usize]> {
        self.shape.as_deref()
    }
    pub fn row(&self, s: usize, a: usize) -> &TransitionRow {
        &self.rows[s * self.n_actions + a]
    }
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }
    pub fn arrival(&self, s: usize) -> f64 {
        self.arrival[s]
    }
    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// Same transitions, different rewards.
    pub fn with_rewards(&self, reward: Vec<f64>, arrival: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.rows.clone(),
            reward,
            arrival,
            self.terminal.clone(),
            self.gamma,
            self.shape.clone(),
        )
    }

    /// Same rewards, different transitions.
    pub fn with_rows(&self, rows: Vec<TransitionRow>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            rows,
            self.reward.clone(),
            self.arrival.clone(),
            self.terminal.clone(),
            self.gamma,
            self.shape.clone(),
        )
    }

    pub fn strides(&self) -> Option<Vec<usize>> {
        self.shape.as_ref().map(|shape| {
            let mut strides = vec![1; shape.len()];
            for d in (0..shape.len().saturating_sub(1)).rev() {
                strides[d] = strides[d + 1] * shape[d + 1];
            }
            strides
        })
    }

    /// Visit every `(next, probability)` with positive probability.
    pub fn for_each_next(&self, s: usize, a: usize, mut f: impl FnMut(usize, f64)) {
        match self.row(s, a) {
            TransitionRow::Joint(e) => e.iter().filter(|e| e.1 > 0.0).for_each(|&(i, p)| f(i, p)),
            TransitionRow::Product(dims) => {
                let strides = self.strides().expect("validated product shape");
                product_walk(dims, &strides, 0, 0, 1.0, &mut f);
            }
        }
    }

    /// `Σ_{s'} P(s'|s,a) w[s']`.
    pub fn expect(&self, s: usize, a: usize, w: &[f64]) -> f64 {
        match self.row(s, a) {
            TransitionRow::Joint(e) => e.iter().map(|&(i, p)| p * w[i]).sum(),
            TransitionRow::Product(dims) => {
                let strides = self.strides().expect("validated product shape");
                product_expect(dims, &strides, 0, 0, w)
            }
        }
    }

    /// `arrival[s'] + γ (1 - terminal[s']) V[s']` for every `s'`.
    pub fn backup_targets(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| self.arrival[s] + if self.terminal[s] { 0.0 } else { self.gamma * v[s] })
            .collect()
    }

    pub fn q_from_targets(&self, s: usize, a: usize, targets: &[f64]) -> f64 {
        self.reward(s, a) + self.expect(s, a, targets)
    }

    /// Dense joint distribution of one row (for tests and small MDPs).
    pub fn dense_row(&self, s: usize, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        self.for_each_next(s, a, |i, p| out[i] += p);
        out
    }
}

fn product_walk(
    dims: &[Vec<(usize, f64)>],
    strides: &[usize],
    d: usize,
    base: usize,
    prob: f64,
    f: &mut impl FnMut(usize, f64),
) {
    if d == dims.len() {
        f(base, prob);
        return;
    }
    for &(c, p) in &dims[d] {
        if p > 0.0 {
            product_walk(dims, strides, d + 1, base + c * strides[d], prob * p, f);
        }
    }
}

fn product_expect(dims: &[Vec<(usize, f64)>], strides: &[usize], d: usize, base: usize, w: &[f64]) -> f64 {
    if d + 1 == dims.len() {
        return dims[d].iter().map(|&(c, p)| p * w[base + c * strides[d]]).sum();
    }
    dims[d]
        .iter()
        .filter(|e| e.1 > 0.0)
        .map(|&(c, p)| p * product_expect(dims, strides, d + 1, base + c * strides[d], w))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub n_actions: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self { n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.values.len() / self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, q: f64) {
        self.values[s * self.n_actions + a] = q;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Greedy action, lowest index on ties.
    pub fn greedy(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.n_states()).map(|s| self.greedy(s)).collect()
    }
}

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// A deterministic table of actions, acting on continuous states through a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub actions: Vec<usize>,
    pub grid: Grid,
}

impl TabularPolicy {
    pub fn new(actions: Vec<usize>, grid: Grid) -> Result<Self> {
        if actions.len() != grid.n_cells() {
            return Err(Error::DimensionMismatch { expected: grid.n_cells(), got: actions.len() });
        }
        Ok(Self { actions, grid })
    }

    pub fn action_at(&self, x: &[f64]) -> usize {
        self.actions[self.grid.cell_of(x)]
    }
}

impl Policy for TabularPolicy {
    fn act(&self, state: &StateVec, _rng: &mut RngStream) -> ActionId {
        ActionId(self.action_at(state.as_slice()))
    }
}
