use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real state vector with at least one finite component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StateVec(Vec<f64>);

impl StateVec {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyState);
        }
        if let Some((index, &value)) = components.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteState { index, value });
        }
        Ok(Self(components))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0);
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl Index<usize> for StateVec {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for StateVec {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        StateVec::new(v)
    }
}

impl From<StateVec> for Vec<f64> {
    fn from(s: StateVec) -> Vec<f64> {
        s.0
    }
}

/// Index into a finite action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn checked(index: usize, n_actions: usize) -> Result<Self> {
        if index < n_actions {
            Ok(ActionId(index))
        } else {
            Err(Error::ActionOutOfRange { action: index, n_actions })
        }
    }
}

/// One `(s, a, s', r, done)` sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub state: StateVec,
    pub action: ActionId,
    pub next_state: StateVec,
    pub reward: f64,
    pub terminal: bool,
}

impl TransitionRecord {
    pub fn new(
        state: StateVec,
        action: ActionId,
        next_state: StateVec,
        reward: f64,
        terminal: bool,
    ) -> Result<Self> {
        if state.dim() != next_state.dim() {
            return Err(Error::DimensionMismatch {
                expected: state.dim(),
                got: next_state.dim(),
            });
        }
        Ok(Self {
            state,
            action,
            next_state,
            reward,
            terminal,
        })
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }
}
