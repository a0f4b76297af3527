//! Closed-form band where lagged and true one-step Driving policies disagree,
//! and grid renderings of policies.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::discretize::{cells_within, discretize, DiscretizeConfig, DiscretizeReport, Horizon};
use super::solve::{laggedize, value_iteration};
use crate::envs::{Driving, DrivingParams};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng::RngStream;
use crate::state::ActionId;

/// Bounds on `p/Δt + 2v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionBounds {
    pub lower: f64,
    pub upper: f64,
}

impl RegionBounds {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower < x && x < self.upper
    }
}

/// The coordinate the band is expressed in.
pub fn region_coordinate(p: f64, v: f64, dt: f64) -> f64 {
    p / dt + 2.0 * v
}

/// Under the product reward `p'v' - pv` the true one-step advantage of `A₁`
/// over `A₀`, divided by `Δt (Δv₁ - Δv₀)`, is
/// `x + Δv₁ + Δv₀ + σ_v² (g₁² - g₀²) / (Δv₁ - Δv₀)`; the lagged model drops
/// the last term because it ignores `cov(p', v') = Δt g² σ_v²`.
pub fn driving_region(params: &DrivingParams) -> Result<RegionBounds> {
    let (dv0, dv1) = (params.dv[0], params.dv[1]);
    let (g0, g1) = (params.g(ActionId(0)), params.g(ActionId(1)));
    if !(dv1 > dv0) || g1 < g0 {
        return Err(Error::InvalidParams("region needs Δv(A₁) > Δv(A₀) and g(A₁) ≥ g(A₀)".into()));
    }
    let upper = -(dv1 + dv0);
    let lower = upper - params.sigma_v.powi(2) * (g1 * g1 - g0 * g0) / (dv1 - dv0);
    Ok(RegionBounds { lower, upper })
}

/// Actions at the centers of a 2-D grid; `cells[i][j]` is axis-0 cell `i`,
/// axis-1 cell `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyMap {
    pub cells: Vec<Vec<usize>>,
}

pub fn policy_map(policy: impl Fn(&[f64]) -> usize, grid: &Grid) -> Result<PolicyMap> {
    if grid.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: grid.dim() });
    }
    let (n0, n1) = (grid.axis(0).n, grid.axis(1).n);
    let cells = (0..n0)
        .map(|i| (0..n1).map(|j| policy(&grid.center(grid.index_of_coords(&[i, j])))).collect())
        .collect();
    Ok(PolicyMap { cells })
}

impl PolicyMap {
    /// One CSV line per axis-0 cell, no header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in &self.cells {
            let line: Vec<String> = row.iter().map(|a| a.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// `(i, j)` where the two maps disagree.
    pub fn differences(&self, other: &PolicyMap) -> Vec<(usize, usize)> {
        let mut out = vec![];
        for (i, (a, b)) in self.cells.iter().zip(&other.cells).enumerate() {
            for (j, (x, y)) in a.iter().zip(b).enumerate() {
                if x != y {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerMaps {
    pub true_map: PolicyMap,
    pub lagged_map: PolicyMap,
    pub bounds: RegionBounds,
    pub report: DiscretizeReport,
}

/// One-step optimal policies of Driving under the true and the lagged
/// tabulated dynamics, rendered on `window`. Transitions are tabulated on
/// `window` padded with cells of the same size far enough out that next
/// states are not clamped.
pub fn planner_policy_maps(params: &DrivingParams, window: &Grid, n_mc: usize, rng: &RngStream) -> Result<PlannerMaps> {
    let env = Driving::new(params.clone())?;
    if window.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: window.dim() });
    }
    let (ap, av) = (window.axis(0), window.axis(1));
    let g_max = params.g(ActionId(0)).max(params.g(ActionId(1)));
    let dv_max = params.dv[0].abs().max(params.dv[1].abs());
    let v_reach = dv_max + 5.0 * g_max * params.sigma_v;
    let v_abs = av.lo.abs().max(av.hi.abs());
    let p_reach = (v_abs + v_reach) * params.dt + 5.0 * params.sigma_p;
    let pad_p = (p_reach / ap.width()).ceil() as usize + 1;
    let pad_v = (v_reach / av.width()).ceil() as usize + 1;
    let lattice = window.padded(&[pad_p, pad_v])?;
    let cfg = DiscretizeConfig {
        n_mc,
        horizon: Horizon::SingleStep,
        gamma: 0.0,
        source_cells: Some(cells_within(&lattice, window)),
    };
    let (mdp, report) = discretize(&env, &lattice, &cfg, rng)?;
    let lagged = laggedize(&mdp)?;
    let t = value_iteration(&mdp, 1e-12)?;
    let l = value_iteration(&lagged, 1e-12)?;
    let true_map = policy_map(|x| t.policy[lattice.cell_of(x)], window)?;
    let lagged_map = policy_map(|x| l.policy[lattice.cell_of(x)], window)?;
    Ok(PlannerMaps { true_map, lagged_map, bounds: driving_region(params)?, report })
}
