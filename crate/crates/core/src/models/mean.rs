//! Mean predictors: per-action linear least squares and per-cell tabular means.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::state::ActionId;

/// Ridge used when the least-squares design is rank deficient.
pub const RIDGE_LAMBDA: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeanKind {
    LinearLeastSquares,
    /// Mean state change per `(cell, action)`.
    TabularConditional { grid: Grid },
}

/// Counts tabular predictions served by a neighbouring cell.
#[derive(Debug, Default)]
pub struct MissCounter(AtomicUsize);

impl MissCounter {
    pub fn get(&self) -> usize {
        self.0.load(Ordering::Relaxed)
    }
    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
}

impl Clone for MissCounter {
    fn clone(&self) -> Self {
        Self(AtomicUsize::new(self.get()))
    }
}

impl PartialEq for MissCounter {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeanPredictor {
    /// `weights[a]` is `(n+1) × n`, stored as rows: `μ = Wᵀ [s, 1]`.
    LinearLeastSquares { weights: Vec<Vec<Vec<f64>>> },
    TabularConditional {
        grid: Grid,
        n_actions: usize,
        /// Mean `s' - s` per `cell * n_actions + a`; `None` where unseen.
        deltas: Vec<Option<Vec<f64>>>,
        #[serde(skip)]
        misses: MissCounter,
    },
}

impl MeanPredictor {
    pub fn fit(ds: &Dataset, kind: &MeanKind, n_actions: usize) -> Result<Self> {
        let dim = ds
            .dim()
            .ok_or_else(|| Error::InsufficientData("cannot fit a model on an empty dataset".into()))?;
        match kind {
            MeanKind::LinearLeastSquares => fit_linear(ds, dim, n_actions),
            MeanKind::TabularConditional { grid } => fit_tabular(ds, dim, n_actions, grid),
        }
    }

    pub fn predict(&self, s: &[f64], a: ActionId) -> Vec<f64> {
        match self {
            MeanPredictor::LinearLeastSquares { weights } => {
                let w = &weights[a.0];
                let n = s.len();
                (0..n)
                    .map(|j| w[n][j] + (0..n).map(|i| s[i] * w[i][j]).sum::<f64>())
                    .collect()
            }
            MeanPredictor::TabularConditional { grid, n_actions, deltas, misses } => {
                let (cell, _) = grid.locate(s);
                let delta = match &deltas[cell * n_actions + a.0] {
                    Some(d) => d,
                    None => {
                        misses.bump();
                        nearest_delta(grid, *n_actions, deltas, cell, a.0)
                    }
                };
                s.iter().zip(delta).map(|(x, d)| x + d).collect()
            }
        }
    }

    /// Tabular predictions answered by a neighbouring cell so far.
    pub fn miss_count(&self) -> usize {
        match self {
            MeanPredictor::TabularConditional { misses, .. } => misses.get(),
            _ => 0,
        }
    }
}

fn fit_linear(ds: &Dataset, dim: usize, n_actions: usize) -> Result<MeanPredictor> {
    let min_records = dim + 2;
    if ds.len() < min_records {
        return Err(Error::InsufficientData(format!(
            "linear fit needs at least {min_records} records, got {}",
            ds.len()
        )));
    }
    let pooled = solve_least_squares(ds.iter().map(|r| (r.state.as_slice(), r.next_state.as_slice())), dim);
    let weights = (0..n_actions)
        .map(|a| {
            let rows: Vec<_> = ds
                .iter()
                .filter(|r| r.action.0 == a)
                .map(|r| (r.state.as_slice(), r.next_state.as_slice()))
                .collect();
            if rows.len() >= min_records {
                solve_least_squares(rows.into_iter(), dim)
            } else {
                pooled.clone()
            }
        })
        .collect();
    Ok(MeanPredictor::LinearLeastSquares { weights })
}

fn solve_least_squares<'a>(rows: impl Iterator<Item = (&'a [f64], &'a [f64])>, dim: usize) -> Vec<Vec<f64>> {
    let p = dim + 1;
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DMatrix::<f64>::zeros(p, dim);
    let mut x = vec![1.0; p];
    for (s, next) in rows {
        x[..dim].copy_from_slice(s);
        for i in 0..p {
            for j in 0..p {
                xtx[(i, j)] += x[i] * x[j];
            }
            for j in 0..dim {
                xty[(i, j)] += x[i] * next[j];
            }
        }
    }
    let eig = xtx.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let system = if lo > 1e-12 * hi.max(1e-300) {
        xtx
    } else {
        xtx + DMatrix::identity(p, p) * RIDGE_LAMBDA
    };
    let w = match system.clone().cholesky() {
        Some(c) => c.solve(&xty),
        None => system
            .svd(true, true)
            .solve(&xty, 1e-14)
            .unwrap_or_else(|_| DMatrix::zeros(p, dim)),
    };
    (0..p).map(|i| w.row(i).iter().copied().collect()).collect()
}

fn fit_tabular(ds: &Dataset, dim: usize, n_actions: usize, grid: &Grid) -> Result<MeanPredictor> {
    if grid.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: grid.dim() });
    }
    let slots = grid.n_cells() * n_actions;
    let mut sums = vec![vec![0.0; dim]; slots];
    let mut counts = vec![0usize; slots];
    for r in ds.iter() {
        let k = grid.cell_of(r.state.as_slice()) * n_actions + r.action.0;
        counts[k] += 1;
        for i in 0..dim {
            sums[k][i] += r.next_state[i] - r.state[i];
        }
    }
    for a in 0..n_actions {
        if !(0..grid.n_cells()).any(|c| counts[c * n_actions + a] > 0) {
            return Err(Error::InsufficientData(format!("no records for action {a}")));
        }
    }
    let deltas = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s.into_iter().map(|x| x / c as f64).collect()))
        .collect();
    Ok(MeanPredictor::TabularConditional {
        grid: grid.clone(),
        n_actions,
        deltas,
        misses: MissCounter::default(),
    })
}

fn nearest_delta<'a>(grid: &Grid, n_actions: usize, deltas: &'a [Option<Vec<f64>>], cell: usize, a: usize) -> &'a [f64] {
    let target = grid.coords(cell);
    let mut best: Option<(usize, &[f64])> = None;
    for c in 0..grid.n_cells() {
        if let Some(d) = &deltas[c * n_actions + a] {
            let dist: usize = grid
                .coords(c)
                .iter()
                .zip(&target)
                .map(|(x, y)| x.abs_diff(*y).pow(2))
                .sum();
            if best.is_none_or(|(b, _)| dist < b) {
                best = Some((dist, d));
            }
        }
    }
    best.expect("fit guarantees every action has a populated cell").1
}
