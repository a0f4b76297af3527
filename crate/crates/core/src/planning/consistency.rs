//! States where a lagged model's optimal action provably loses to the true one.

use serde::{Deserialize, Serialize};

use super::mdp::TabularMDP;
use super::solve::{evaluate_policy, value_iteration, Solution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub state: usize,
    /// True-optimal action.
    pub a0: usize,
    /// Lagged-optimal action.
    pub a1: usize,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub witnesses: Vec<Witness>,
    pub visited: Vec<usize>,
    pub true_policy: Vec<usize>,
    pub lagged_policy: Vec<usize>,
    /// `J(π*_true) - J(π*_lagged)` under the true dynamics, averaged over the starts.
    pub return_gap: f64,
}

/// States reachable with positive probability from `starts` under `policy`,
/// never expanding past terminal states. Starts are always included.
pub fn reachable(mdp: &TabularMDP, policy: &[usize], starts: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; mdp.n_states()];
    let mut stack: Vec<usize> = starts.to_vec();
    for &s in starts {
        seen[s] = true;
    }
    while let Some(s) = stack.pop() {
        mdp.for_each_next(s, policy[s], |n, _| {
            if !seen[n] && !mdp.is_terminal(n) {
                seen[n] = true;
                stack.push(n);
            }
        });
    }
    (0..mdp.n_states()).filter(|&s| seen[s]).collect()
}

/// Witnesses `(s, a0, a1)` visited by `π*_true` where `π*_true(s) = a0`,
/// `π*_lagged(s) = a1 ≠ a0`, `Q*_true(s,a0) > Q*_true(s,a1)` and
/// `Q*_lagged(s,a1) > Q*_lagged(s,a0)`.
pub fn consistency_check(
    mdp_true: &TabularMDP,
    mdp_lagged: &TabularMDP,
    starts: &[usize],
    tol: f64,
) -> Result<ConsistencyReport> {
    if mdp_true.n_states() != mdp_lagged.n_states() || mdp_true.n_actions() != mdp_lagged.n_actions() {
        return Err(Error::InvalidMdp("true and lagged MDPs differ in shape".into()));
    }
    if starts.is_empty() || starts.iter().any(|&s| s >= mdp_true.n_states()) {
        return Err(Error::InvalidParams("start states must be nonempty and in range".into()));
    }
    let t: Solution = value_iteration(mdp_true, tol)?;
    let l: Solution = value_iteration(mdp_lagged, tol)?;
    let visited = reachable(mdp_true, &t.policy, starts);
    let witnesses = visited
        .iter()
        .filter_map(|&s| {
            let (a0, a1) = (t.policy[s], l.policy[s]);
            if a0 == a1 {
                return None;
            }
            let alpha = t.q.get(s, a0) - t.q.get(s, a1);
            let beta = (l.q.get(s, a0) - l.q.get(s, a1)) - alpha;
            (alpha > 0.0 && alpha < -beta).then_some(Witness { state: s, a0, a1, alpha, beta })
        })
        .collect();
    let v_true = evaluate_policy(mdp_true, &t.policy, tol)?;
    let v_lag = evaluate_policy(mdp_true, &l.policy, tol)?;
    let return_gap = starts.iter().map(|&s| v_true[s] - v_lag[s]).sum::<f64>() / starts.len() as f64;
    Ok(ConsistencyReport { witnesses, visited, true_policy: t.policy, lagged_policy: l.policy, return_gap })
}
