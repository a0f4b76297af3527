//! `α`/`β` action-gap analysis of true versus lagged tabular MDPs, and the
//! construction of rewards under which the lagged model misranks actions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planning::{laggedize, value_iteration, TabularMDP, TransitionRow};
use crate::rng::RngStream;

/// `α = Q*_P(s,a0) - Q*_P(s,a1)`; `β = [Q*_P̂(s,a0) - Q*_P̂(s,a1)] - α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
    pub state: usize,
    pub a0: usize,
    pub a1: usize,
}

impl AlphaBeta {
    /// `0 < α < -β`: `a0` is truly better yet the lagged model prefers `a1`.
    pub fn in_dr(&self) -> bool {
        0.0 < self.alpha && self.alpha < -self.beta
    }
}

pub const SOLVE_TOL: f64 = 1e-12;

pub fn alpha_beta(mdp_true: &TabularMDP, mdp_lagged: &TabularMDP, s: usize, a0: usize, a1: usize) -> Result<AlphaBeta> {
    let t = value_iteration(mdp_true, SOLVE_TOL)?;
    let l = value_iteration(mdp_lagged, SOLVE_TOL)?;
    let alpha = t.q.get(s, a0) - t.q.get(s, a1);
    let beta = (l.q.get(s, a0) - l.q.get(s, a1)) - alpha;
    Ok(AlphaBeta { alpha, beta, state: s, a0, a1 })
}

/// Both MDPs with zero immediate reward and arrival reward `r`.
fn with_arrival(mdp: &TabularMDP, r: &[f64]) -> Result<TabularMDP> {
    mdp.with_rewards(vec![0.0; mdp.n_states() * mdp.n_actions()], r.to_vec())
}

/// `α`/`β` when the reward is `r(s')` collected on arrival.
pub fn alpha_beta_for(
    mdp_true: &TabularMDP,
    mdp_lagged: &TabularMDP,
    s: usize,
    a0: usize,
    a1: usize,
    r: &[f64],
) -> Result<AlphaBeta> {
    alpha_beta(&with_arrival(mdp_true, r)?, &with_arrival(mdp_lagged, r)?, s, a0, a1)
}

fn require_single_step(mdp: &TabularMDP) -> Result<()> {
    if (0..mdp.n_states()).all(|s| mdp.is_terminal(s)) {
        Ok(())
    } else {
        Err(Error::InvalidMdp("this check needs a single-step MDP (all states terminal)".into()))
    }
}

/// Reward vector `f(coords(s'))` over a product-shaped state space.
pub fn coordinate_reward(shape: &[usize], f: impl Fn(&[usize]) -> f64) -> Vec<f64> {
    let n: usize = shape.iter().product();
    let mut coords = vec![0; shape.len()];
    (0..n)
        .map(|idx| {
            let mut rem = idx;
            for d in (0..shape.len()).rev() {
                coords[d] = rem % shape[d];
                rem /= shape[d];
            }
            f(&coords)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub beta: f64,
    pub beta_negated: f64,
    /// Largest `|β(R + f(s_i)) - β(R)|` over the random shifts.
    pub max_shift_change: f64,
    pub holds: bool,
}

/// `β(-R) = -β(R)` and `β(R + f(s_i)) = β(R)` for 10 random single-dimension `f`.
pub fn beta_symmetry_check(
    mdp_true: &TabularMDP,
    mdp_lagged: &TabularMDP,
    s: usize,
    a0: usize,
    a1: usize,
    r: &[f64],
    rng: &mut RngStream,
) -> Result<SymmetryReport> {
    require_single_step(mdp_true)?;
    let shape = mdp_true
        .shape()
        .ok_or_else(|| Error::NotProductSpace("shift check needs a product state space".into()))?
        .to_vec();
    let beta = alpha_beta_for(mdp_true, mdp_lagged, s, a0, a1, r)?.beta;
    let neg: Vec<f64> = r.iter().map(|x| -x).collect();
    let beta_negated = alpha_beta_for(mdp_true, mdp_lagged, s, a0, a1, &neg)?.beta;
    let mut max_shift_change = 0.0_f64;
    for _ in 0..10 {
        let dim = rng.index(shape.len());
        let table: Vec<f64> = (0..shape[dim]).map(|_| rng.uniform_range(-10.0, 10.0)).collect();
        let shift = coordinate_reward(&shape, |c| table[c[dim]]);
        let shifted: Vec<f64> = r.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let b = alpha_beta_for(mdp_true, mdp_lagged, s, a0, a1, &shifted)?.beta;
        max_shift_change = max_shift_change.max((b - beta).abs());
    }
    let holds = (beta + beta_negated).abs() <= 1e-12 && max_shift_change <= 1e-12;
    Ok(SymmetryReport { beta, beta_negated, max_shift_change, holds })
}

/// Coordinate projections `s_i` and per-dimension indicator bins `1{s_i = c}`.
pub fn default_f_basis(shape: &[usize]) -> Vec<Vec<f64>> {
    let mut out = vec![];
    for d in 0..shape.len() {
        out.push(coordinate_reward(shape, |c| c[d] as f64));
    }
    for d in 0..shape.len() {
        for v in 0..shape[d] {
            out.push(coordinate_reward(shape, |c| (c[d] == v) as u8 as f64));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrReward {
    /// `R1 = σ R0 + x f`.
    pub reward: Vec<f64>,
    pub x: f64,
    /// `K = E_{a0}[f] - E_{a1}[f]` after orienting `f` so that `K > 0`.
    pub k: f64,
    /// `σ = -1` when `R0` was negated to make `β < 0`.
    pub r0_sign: f64,
    pub r0_index: usize,
    pub f_index: usize,
    pub f_sign: f64,
    /// Open interval of valid `x`.
    pub interval: (f64, f64),
    pub certified: AlphaBeta,
}

/// Builds a reward in `D_R` at `(s, a0, a1)` on a single-step MDP.
///
/// Take the first `R0` with `β(R0) ≠ 0` and orient it so `β < 0`; take the
/// first `f(s_i)` with `K ≠ 0` and orient it so `K > 0`. Adding `x f` shifts
/// `α` by `x K` and leaves `β` unchanged, so any `x` in
/// `(-α/K, -(α+β)/K)` gives `0 < α < -β`. The midpoint is returned after
/// recomputing `α`, `β` from scratch.
pub fn construct_dr_reward(
    mdp_true: &TabularMDP,
    mdp_lagged: &TabularMDP,
    s: usize,
    a0: usize,
    a1: usize,
    r0_basis: &[Vec<f64>],
    f_basis: &[Vec<f64>],
) -> Result<DrReward> {
    require_single_step(mdp_true)?;
    const ZERO: f64 = 1e-12;
    let mut chosen = None;
    for (i, r0) in r0_basis.iter().enumerate() {
        let ab = alpha_beta_for(mdp_true, mdp_lagged, s, a0, a1, r0)?;
        if ab.beta.abs() > ZERO {
            chosen = Some((i, r0, ab));
            break;
        }
    }
    let (r0_index, r0, ab0) = chosen.ok_or(Error::NoInstantaneousDependence)?;
    let r0_sign = if ab0.beta > 0.0 { -1.0 } else { 1.0 };
    let (alpha, beta) = (r0_sign * ab0.alpha, r0_sign * ab0.beta);

    let mut chosen_f = None;
    for (i, f) in f_basis.iter().enumerate() {
        let k = alpha_beta_for(mdp_true, mdp_lagged, s, a0, a1, f)?.alpha;
        if k.abs() > ZERO {
            chosen_f = Some((i, f, k));
            break;
        }
    }
    let (f_index, f, k_raw) = chosen_f.ok_or(Error::IdenticalActionMarginals)?;
    let f_sign = k_raw.signum();
    let k = k_raw.abs();

    let interval = (-alpha / k, -(alpha + beta) / k);
    let x = 0.5 * (interval.0 + interval.1);
    let reward: Vec<f64> = r0.iter().zip(f).map(|(r, fv)| r0_sign * r + x * f_sign * fv).collect();
    let certified = alpha_beta_for(mdp_true, mdp_lagged, s, a0, a1, &reward)?;
    if !certified.in_dr() {
        return Err(Error::CertificationFailed { alpha: certified.alpha, beta: certified.beta });
    }
    Ok(DrReward { reward, x, k, r0_sign, r0_index, f_index, f_sign, interval, certified })
}

/// `max |β|` over every state and ordered action pair of `mdp` against its
/// lagged counterpart.
pub fn verify_beta_zero(mdp: &TabularMDP) -> Result<f64> {
    let lagged = laggedize(mdp)?;
    let t = value_iteration(mdp, SOLVE_TOL)?;
    let l = value_iteration(&lagged, SOLVE_TOL)?;
    let mut worst = 0.0_f64;
    for s in 0..mdp.n_states() {
        for a0 in 0..mdp.n_actions() {
            for a1 in 0..mdp.n_actions() {
                let alpha = t.q.get(s, a0) - t.q.get(s, a1);
                let beta = l.q.get(s, a0) - l.q.get(s, a1) - alpha;
                worst = worst.max(beta.abs());
            }
        }
    }
    Ok(worst)
}

/// Single-step MDP on two bits `(s₁, s₂)`, state index `2 s₁ + s₂`, start 0.
/// Action 0 sets `s₁ = s₂` with `P(s₁ = 1) = 0.6`; action 1 draws two
/// independent fair bits. Rewards are zero.
pub fn two_bit_mdp() -> TabularMDP {
    let a0 = TransitionRow::Joint(vec![(0, 0.4), (3, 0.6)]);
    let a1 = TransitionRow::Joint(vec![(0, 0.25), (1, 0.25), (2, 0.25), (3, 0.25)]);
    let rows = (0..4).flat_map(|_| [a0.clone(), a1.clone()]).collect();
    TabularMDP::new(4, 2, rows, vec![0.0; 8], vec![0.0; 4], vec![true; 4], 0.0, Some(vec![2, 2]))
        .expect("two-bit MDP is valid")
}

/// Quantile coupling of two discrete distributions.
pub fn comonotone_coupling(p: &[f64], q: &[f64]) -> Vec<((usize, usize), f64)> {
    let (mut i, mut j) = (0, 0);
    let (mut rp, mut rq) = (p[0], q[0]);
    let mut out = vec![];
    loop {
        let m = rp.min(rq);
        if m > 0.0 {
            out.push(((i, j), m));
        }
        rp -= m;
        rq -= m;
        if rp <= 1e-15 {
            i += 1;
            if i == p.len() {
                break;
            }
            rp = p[i];
        }
        if rq <= 1e-15 {
            j += 1;
            if j == q.len() {
                break;
            }
            rq = q[j];
        }
    }
    let total: f64 = out.iter().map(|e| e.1).sum();
    out.into_iter().map(|(c, m)| (c, m / total)).collect()
}

/// Two-dimensional MDP with `n` values per dimension and product actions
/// `a = 2 a₁ + a₂`. Dimension `i`'s next value depends only on `(s_i, a_i)`
/// through a random kernel; the joint mixes the comonotone coupling of the
/// two marginals (weight `coupling`) with their product, so the noises are
/// dependent while every marginal has a single causal parent. No terminals.
pub fn factored_coupled_mdp(n: usize, coupling: f64, gamma: f64, rng: &mut RngStream) -> Result<TabularMDP> {
    if n < 2 || !(0.0..=1.0).contains(&coupling) {
        return Err(Error::InvalidParams("need n ≥ 2 and coupling in [0, 1]".into()));
    }
    let mut kernel = || -> Vec<Vec<Vec<f64>>> {
        (0..n)
            .map(|_| {
                (0..2)
                    .map(|_| {
                        let w: Vec<f64> = (0..n).map(|_| rng.uniform() + 0.05).collect();
                        let t: f64 = w.iter().sum();
                        w.into_iter().map(|x| x / t).collect()
                    })
                    .collect()
            })
            .collect()
    };
    let k1 = kernel();
    let k2 = kernel();
    let mut rows = Vec::with_capacity(n * n * 4);
    for s1 in 0..n {
        for s2 in 0..n {
            for a in 0..4 {
                let (m1, m2) = (&k1[s1][a / 2], &k2[s2][a % 2]);
                let mut dense = vec![0.0; n * n];
                for ((i, j), m) in comonotone_coupling(m1, m2) {
                    dense[i * n + j] += coupling * m;
                }
                for i in 0..n {
                    for j in 0..n {
                        dense[i * n + j] += (1.0 - coupling) * m1[i] * m2[j];
                    }
                }
                rows.push(TransitionRow::Joint(dense.into_iter().enumerate().filter(|e| e.1 > 0.0).collect()));
            }
        }
    }
    TabularMDP::new(
        n * n,
        4,
        rows,
        vec![0.0; n * n * 4],
        vec![0.0; n * n],
        vec![false; n * n],
        gamma,
        Some(vec![n, n]),
    )
}
