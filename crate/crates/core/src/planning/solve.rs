//! Value iteration, exact policy evaluation and the lagged (marginal-product)
//! counterpart of an MDP.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::mdp::{QTable, TabularMDP, TransitionRow};
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub q: QTable,
    pub v: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
}

fn q_sweep(mdp: &TabularMDP, v: &[f64], q: &mut QTable) {
    let targets = mdp.backup_targets(v);
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            q.set(s, a, mdp.q_from_targets(s, a, &targets));
        }
    }
}

/// Jacobi value iteration until the sup-norm Bellman residual is below `tol`.
pub fn value_iteration(mdp: &TabularMDP, tol: f64) -> Result<Solution> {
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut q = QTable::zeros(n, mdp.n_actions());
    for it in 1..=MAX_ITERATIONS {
        q_sweep(mdp, &v, &mut q);
        let mut residual = 0.0_f64;
        for (s, vs) in v.iter_mut().enumerate() {
            let new = q.max(s);
            residual = residual.max((new - *vs).abs());
            *vs = new;
        }
        if residual < tol {
            // One more sweep so Q is consistent with the returned V.
            q_sweep(mdp, &v, &mut q);
            let policy = q.greedy_policy();
            return Ok(Solution { q, v, policy, iterations: it, residual });
        }
        if !residual.is_finite() {
            return Err(Error::NotConverged { iterations: it, residual });
        }
        if it == MAX_ITERATIONS {
            return Err(Error::NotConverged { iterations: it, residual });
        }
    }
    unreachable!()
}

/// `V^π` by iterative evaluation to sup-norm change below `tol`.
pub fn evaluate_policy(mdp: &TabularMDP, policy: &[usize], tol: f64) -> Result<Vec<f64>> {
    if policy.len() != mdp.n_states() {
        return Err(Error::DimensionMismatch { expected: mdp.n_states(), got: policy.len() });
    }
    let mut v = vec![0.0; mdp.n_states()];
    for it in 1..=MAX_ITERATIONS {
        let targets = mdp.backup_targets(&v);
        let mut residual = 0.0_f64;
        for s in 0..mdp.n_states() {
            let new = mdp.q_from_targets(s, policy[s], &targets);
            residual = residual.max((new - v[s]).abs());
            v[s] = new;
        }
        if residual < tol {
            return Ok(v);
        }
        if !residual.is_finite() || it == MAX_ITERATIONS {
            return Err(Error::NotConverged { iterations: it, residual });
        }
    }
    unreachable!()
}

/// `Q^π(s, a)` from `V^π`.
pub fn q_of(mdp: &TabularMDP, v: &[f64], s: usize, a: usize) -> f64 {
    mdp.q_from_targets(s, a, &mdp.backup_targets(v))
}

/// Per-dimension marginals of every row, as `(coordinate, probability)`
/// lists sorted by coordinate.
pub fn row_marginals(mdp: &TabularMDP, s: usize, a: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    let shape = mdp
        .shape()
        .ok_or_else(|| Error::NotProductSpace("MDP states are not a product grid".into()))?;
    if let TransitionRow::Product(dims) = mdp.row(s, a) {
        return Ok(dims.clone());
    }
    let strides = mdp.strides().expect("shape present");
    let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); shape.len()];
    mdp.for_each_next(s, a, |i, p| {
        for (d, map) in maps.iter_mut().enumerate() {
            *map.entry((i / strides[d]) % shape[d]).or_insert(0.0) += p;
        }
    });
    Ok(maps.into_iter().map(|m| m.into_iter().collect()).collect())
}

/// The lagged counterpart `P̂`: every row replaced by the product of its
/// per-dimension marginals. Rewards, terminals and `γ` are unchanged.
pub fn laggedize(mdp: &TabularMDP) -> Result<TabularMDP> {
    let mut rows = Vec::with_capacity(mdp.n_states() * mdp.n_actions());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            rows.push(TransitionRow::Product(row_marginals(mdp, s, a)?));
        }
    }
    mdp.with_rows(rows)
}
