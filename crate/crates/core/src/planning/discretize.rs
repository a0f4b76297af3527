//! Monte Carlo tabulation of a continuous environment on a product grid.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mdp::{TabularMDP, TransitionRow};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng::RngStream;
use crate::state::{ActionId, StateVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Every state is terminal: Q is the expected one-step reward.
    SingleStep,
    /// Terminal states come from the environment.
    Episodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizeConfig {
    pub n_mc: usize,
    pub horizon: Horizon,
    pub gamma: f64,
    /// Cells whose transitions are sampled; every other cell becomes an
    /// absorbing terminal. `None` samples every cell.
    pub source_cells: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscretizeReport {
    pub samples: usize,
    /// Sampled next states that fell outside the grid and were clamped.
    pub clamped: usize,
}

/// Tabulate `env` on `grid`: `P[s][a]` from `n_mc` steps out of the cell
/// center, `R[s][a]` the mean outcome-independent reward
/// `reward - arrival_reward(next)` and `arrival[s']` the arrival reward of
/// the center of `s'`. Every action of cell `s` replays the same child
/// stream `cell/s`, so action comparisons use common random numbers.
pub fn discretize<E: Environment + ?Sized>(
    env: &E,
    grid: &Grid,
    cfg: &DiscretizeConfig,
    rng: &RngStream,
) -> Result<(TabularMDP, DiscretizeReport)> {
    if cfg.n_mc == 0 {
        return Err(Error::InvalidParams("n_mc must be at least 1".into()));
    }
    if grid.dim() != env.state_dim() {
        return Err(Error::DimensionMismatch { expected: env.state_dim(), got: grid.dim() });
    }
    let n = grid.n_cells();
    let n_actions = env.n_actions();
    let mut is_source = vec![cfg.source_cells.is_none(); n];
    for &c in cfg.source_cells.iter().flatten() {
        if c >= n {
            return Err(Error::InvalidParams(format!("source cell {c} outside grid")));
        }
        is_source[c] = true;
    }
    let centers: Vec<StateVec> = (0..n)
        .map(|c| StateVec::new(grid.center(c)).expect("grid centers are finite"))
        .collect();

    let sampled: Vec<(TransitionRow, f64, usize)> = (0..n * n_actions)
        .into_par_iter()
        .map(|k| {
            let (c, a) = (k / n_actions, k % n_actions);
            if !is_source[c] {
                return (TransitionRow::Joint(vec![(c, 1.0)]), 0.0, 0);
            }
            let mut r = rng.split_indexed("cell", c);
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            let mut reward = 0.0;
            let mut clamped = 0;
            for _ in 0..cfg.n_mc {
                let next = env.sample_next(&centers[c], ActionId(a), &mut r);
                reward += env.reward(&centers[c], ActionId(a), &next) - env.arrival_reward(&next);
                let (cell, was_clamped) = grid.locate(next.as_slice());
                clamped += was_clamped as usize;
                *counts.entry(cell).or_insert(0) += 1;
            }
            let row = counts
                .into_iter()
                .map(|(i, m)| (i, m as f64 / cfg.n_mc as f64))
                .collect();
            (TransitionRow::Joint(row), reward / cfg.n_mc as f64, clamped)
        })
        .collect();

    let mut report = DiscretizeReport::default();
    let mut rows = Vec::with_capacity(n * n_actions);
    let mut reward = Vec::with_capacity(n * n_actions);
    for (row, r, clamped) in sampled {
        rows.push(row);
        reward.push(r);
        report.clamped += clamped;
    }
    report.samples = cfg.n_mc * n_actions * is_source.iter().filter(|&&s| s).count();
    let arrival = centers.iter().map(|c| env.arrival_reward(c)).collect();
    let terminal = (0..n)
        .map(|c| match cfg.horizon {
            Horizon::SingleStep => true,
            Horizon::Episodic => !is_source[c] || env.is_terminal(&centers[c]),
        })
        .collect();
    let shape = grid.axes().iter().map(|a| a.n).collect();
    let mdp = TabularMDP::new(n, n_actions, rows, reward, arrival, terminal, cfg.gamma, Some(shape))?;
    Ok((mdp, report))
}

/// Cells of `outer` whose centers fall inside `window`'s bounds.
pub fn cells_within(outer: &Grid, window: &Grid) -> Vec<usize> {
    (0..outer.n_cells())
        .filter(|&c| {
            outer
                .center(c)
                .iter()
                .zip(window.axes())
                .all(|(x, a)| *x > a.lo && *x < a.hi)
        })
        .collect()
}
