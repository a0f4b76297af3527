//! Product grids mapping continuous states to cell indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || n < 2 {
            return Err(Error::InvalidParams(format!("axis needs lo < hi and n ≥ 2, got ({lo}, {hi}, {n})")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    /// Cell containing `x` and whether `x` was outside `[lo, hi]`.
    pub fn locate(&self, x: f64) -> (usize, bool) {
        let clamped = !(x >= self.lo && x <= self.hi);
        let raw = ((x - self.lo) / self.width()).floor();
        let i = if raw.is_nan() || raw < 0.0 {
            0
        } else {
            (raw as usize).min(self.n - 1)
        };
        (i, clamped)
    }
}

/// Row-major product grid; the last dimension varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Axis>", into = "Vec<Axis>")]
pub struct Grid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidParams("grid needs at least one axis".into()));
        }
        for a in &axes {
            Axis::new(a.lo, a.hi, a.n)?;
        }
        let mut strides = vec![1; axes.len()];
        for d in (0..axes.len() - 1).rev() {
            strides[d] = strides[d + 1] * axes[d + 1].n;
        }
        Ok(Self { axes, strides })
    }

    pub fn uniform(bounds: &[(f64, f64)], n: usize) -> Result<Self> {
        Self::new(bounds.iter().map(|&(lo, hi)| Axis { lo, hi, n }).collect())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, d: usize) -> &Axis {
        &self.axes[d]
    }

    pub fn n_cells(&self) -> usize {
        self.strides[0] * self.axes[0].n
    }

    pub fn index_of_coords(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    pub fn coords(&self, index: usize) -> Vec<usize> {
        self.axes
            .iter()
            .zip(&self.strides)
            .map(|(a, s)| (index / s) % a.n)
            .collect()
    }

    pub fn center(&self, index: usize) -> Vec<f64> {
        self.coords(index)
            .iter()
            .zip(&self.axes)
            .map(|(&c, a)| a.center(c))
            .collect()
    }

    /// Cell index of `x` and whether any coordinate was clamped to an edge cell.
    pub fn locate(&self, x: &[f64]) -> (usize, bool) {
        let mut index = 0;
        let mut clamped = false;
        for ((a, s), &v) in self.axes.iter().zip(&self.strides).zip(x) {
            let (i, c) = a.locate(v);
            index += i * s;
            clamped |= c;
        }
        (index, clamped)
    }

    pub fn cell_of(&self, x: &[f64]) -> usize {
        self.locate(x).0
    }

    /// Same cell size, extended by `pad[d]` cells on both sides of axis `d`.
    pub fn padded(&self, pad: &[usize]) -> Result<Self> {
        Self::new(
            self.axes
                .iter()
                .zip(pad)
                .map(|(a, &p)| {
                    let w = a.width();
                    Axis { lo: a.lo - p as f64 * w, hi: a.hi + p as f64 * w, n: a.n + 2 * p }
                })
                .collect(),
        )
    }
}

impl TryFrom<Vec<Axis>> for Grid {
    type Error = Error;
    fn try_from(axes: Vec<Axis>) -> Result<Self> {
        Grid::new(axes)
    }
}

impl From<Grid> for Vec<Axis> {
    fn from(g: Grid) -> Self {
        g.axes
    }
}
