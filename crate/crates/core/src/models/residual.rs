//! Residual-based correlation estimation and the Gaussian likelihood loss.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::DynamicsModel;
use crate::corr::{CorrelationMatrix, GaussianPrediction};
use crate::error::{Error, Result};
use crate::state::{ActionId, StateVec};

/// Smallest variance used by [`likelihood_loss`].
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// FIFO of standardized prediction errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualWindow {
    capacity: usize,
    residuals: VecDeque<Vec<f64>>,
}

impl ResidualWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self { capacity, residuals: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn push(&mut self, e: Vec<f64>) {
        if self.residuals.len() == self.capacity {
            self.residuals.pop_front();
        }
        self.residuals.push_back(e);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.residuals.iter()
    }
}

/// `(s' - μ) / scale` per dimension, 0 where the predicted scale is 0.
pub fn standardized_residual(model: &DynamicsModel, s: &StateVec, a: ActionId, next: &StateVec) -> Result<Vec<f64>> {
    let pred = model.predict(s, a)?;
    Ok(next
        .iter()
        .zip(pred.mean.iter().zip(&pred.scales))
        .map(|(x, (m, sd))| if *sd > 0.0 { (x - m) / sd } else { 0.0 })
        .collect())
}

/// Pearson correlation of the window, shrunk toward the identity and
/// repaired. Returns `current` until the window holds `2·dim` residuals.
pub fn update_corr(window: &ResidualWindow, current: &CorrelationMatrix, shrink: f64) -> Result<CorrelationMatrix> {
    if !(0.0..=1.0).contains(&shrink) {
        return Err(Error::InvalidParams(format!("shrink {shrink} outside [0, 1]")));
    }
    let n = current.dim();
    if window.len() < 2 * n {
        return Ok(current.clone());
    }
    if let Some(e) = window.iter().find(|e| e.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: e.len() });
    }
    let m = window.len() as f64;
    let mut mean = vec![0.0; n];
    for e in window.iter() {
        for i in 0..n {
            mean[i] += e[i] / m;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for e in window.iter() {
        for i in 0..n {
            for j in 0..=i {
                cov[(i, j)] += (e[i] - mean[i]) * (e[j] - mean[j]);
            }
        }
    }
    let mut raw = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let denom = (cov[(i, i)] * cov[(j, j)]).sqrt();
            let r = if denom > 1e-12 * m { (cov[(i, j)] / denom).clamp(-1.0, 1.0) } else { 0.0 };
            raw[(i, j)] = (1.0 - shrink) * r;
            raw[(j, i)] = raw[(i, j)];
        }
    }
    CorrelationMatrix::repair(&raw)
}

/// `log|Σ| + (x-μ)ᵀ Σ⁻¹ (x-μ) + n log 2π` with `Σ = D Γ D`, and whether any
/// variance had to be floored at [`VARIANCE_FLOOR`].
pub fn likelihood_loss_flagged(pred: &GaussianPrediction, x: &StateVec) -> (f64, bool) {
    let n = pred.dim();
    let mut floored = false;
    let scales: Vec<f64> = pred
        .scales
        .iter()
        .map(|s| {
            if s * s < VARIANCE_FLOOR {
                floored = true;
                VARIANCE_FLOOR.sqrt()
            } else {
                *s
            }
        })
        .collect();
    let d = DMatrix::from_diagonal(&DVector::from_vec(scales));
    let mut sigma = &d * pred.corr.matrix() * &d;
    let chol = loop {
        match sigma.clone().cholesky() {
            Some(c) => break c,
            None => {
                floored = true;
                for i in 0..n {
                    sigma[(i, i)] += VARIANCE_FLOOR;
                }
            }
        }
    };
    let r = DVector::from_iterator(n, x.iter().zip(pred.mean.iter()).map(|(a, b)| a - b));
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = r.dot(&chol.solve(&r));
    (log_det + quad + n as f64 * (2.0 * std::f64::consts::PI).ln(), floored)
}

pub fn likelihood_loss(pred: &GaussianPrediction, x: &StateVec) -> f64 {
    likelihood_loss_flagged(pred, x).0
}

/// One-dimensional loss of each marginal `N(μ_i, σ_i²)` at `x_i`.
pub fn marginal_losses(pred: &GaussianPrediction, x: &StateVec) -> Vec<f64> {
    let log2pi = (2.0 * std::f64::consts::PI).ln();
    pred.scales
        .iter()
        .zip(pred.mean.iter().zip(x.iter()))
        .map(|(s, (m, v))| {
            let var = (s * s).max(VARIANCE_FLOOR);
            var.ln() + (v - m).powi(2) / var + log2pi
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(mean: &[f64], scales: &[f64], rho: f64) -> GaussianPrediction {
        GaussianPrediction::new(
            StateVec::new(mean.to_vec()).unwrap(),
            scales.to_vec(),
            CorrelationMatrix::with_pairs(2, &[(0, 1, rho)]).unwrap(),
        )
        .unwrap()
    }

    fn sv(v: &[f64]) -> StateVec {
        StateVec::new(v.to_vec()).unwrap()
    }

    #[test]
    fn likelihood_identity_cases() {
        let l2pi = 2.0 * (2.0 * std::f64::consts::PI).ln();
        let p = pred(&[0.0, 0.0], &[1.0, 1.0], 0.0);
        assert!((likelihood_loss(&p, &sv(&[0.0, 0.0])) - l2pi).abs() < 1e-12);
        assert!((likelihood_loss(&p, &sv(&[1.0, 0.0])) - (1.0 + l2pi)).abs() < 1e-12);
        assert!((l2pi - 3.67576).abs() < 1e-5);
    }

    #[test]
    fn likelihood_correlated_matches_hand_inverse() {
        let rho: f64 = 0.9;
        let p = pred(&[0.0, 0.0], &[1.0, 1.0], rho);
        // [1 ρ; ρ 1]⁻¹ = [1 -ρ; -ρ 1] / (1-ρ²), so (1,1) gives 2(1-ρ)/(1-ρ²) = 2/(1+ρ).
        let expected = (1.0 - rho * rho).ln() + 2.0 / (1.0 + rho) + 2.0 * (2.0 * std::f64::consts::PI).ln();
        assert!((likelihood_loss(&p, &sv(&[1.0, 1.0])) - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_scale_is_floored_and_flagged() {
        let p = pred(&[0.0, 0.0], &[0.0, 1.0], 0.0);
        let (v, flagged) = likelihood_loss_flagged(&p, &sv(&[0.0, 0.0]));
        assert!(flagged && v.is_finite());
    }

    #[test]
    fn shrink_one_gives_identity() {
        let mut w = ResidualWindow::new(100);
        for i in 0..50 {
            let x = i as f64;
            w.push(vec![x, x + 1.0]);
        }
        let g = update_corr(&w, &CorrelationMatrix::identity(2), 1.0).unwrap();
        assert!(g.is_identity());
    }

    #[test]
    fn constant_dimension_gets_identity_row() {
        let mut w = ResidualWindow::new(100);
        for i in 0..50 {
            let x = (i as f64).sin();
            w.push(vec![3.0, x, 2.0 * x]);
        }
        let g = update_corr(&w, &CorrelationMatrix::identity(3), 0.0).unwrap();
        assert_eq!(g.get(0, 1), 0.0);
        assert_eq!(g.get(0, 2), 0.0);
        assert!(g.get(1, 2) > 0.99);
    }

    #[test]
    fn small_window_keeps_current() {
        let mut w = ResidualWindow::new(10);
        w.push(vec![1.0, 2.0]);
        let cur = CorrelationMatrix::with_pairs(2, &[(0, 1, 0.3)]).unwrap();
        assert_eq!(update_corr(&w, &cur, 0.0).unwrap(), cur);
    }

    #[test]
    fn window_is_fifo() {
        let mut w = ResidualWindow::new(2);
        for i in 0..3 {
            w.push(vec![i as f64]);
        }
        assert_eq!(w.iter().map(|e| e[0]).collect::<Vec<_>>(), vec![1.0, 2.0]);
    }
}
