//! Monte Carlo estimates of `∫ (P - P̂) F` for a fixed `(s, a)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::quadratic::{g_decompose, gaussian_expectation, DepStructure, QuadraticFunction};
use crate::corr::{CorrelationMatrix, GaussianPrediction};
use crate::error::Result;
use crate::rng::RngStream;
use crate::rollout::CorrelatedSampler;

/// Draws next-state vectors for one fixed `(s, a)`.
pub trait NextStateSampler {
    fn sample(&self, rng: &mut RngStream) -> Vec<f64>;
}

/// `N(μ, D Γ D)` sampled as `μ + D L z`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    pred: GaussianPrediction,
    noise: CorrelatedSampler,
}

impl GaussianSampler {
    pub fn new(pred: GaussianPrediction) -> Result<Self> {
        let noise = CorrelatedSampler::new(&pred.corr)?;
        Ok(Self { pred, noise })
    }

    /// Same mean and scales with `Γ = I`.
    pub fn lagged(&self) -> Self {
        let mut pred = self.pred.clone();
        pred.corr = CorrelationMatrix::identity(pred.dim());
        Self::new(pred).expect("identity factors")
    }

    pub fn mean(&self) -> DVector<f64> {
        DVector::from_column_slice(self.pred.mean.as_slice())
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.pred.covariance()
    }
}

impl NextStateSampler for GaussianSampler {
    fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        let e = self.noise.sample(rng);
        self.pred
            .mean
            .iter()
            .zip(self.pred.scales.iter().zip(e))
            .map(|(m, (d, e))| m + d * e)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub estimate: f64,
    pub std_err: f64,
}

impl GapEstimate {
    /// `|estimate - target| ≤ k · std_err`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.estimate - target).abs() <= k * self.std_err
    }
}

/// Mean of `F(x) - F(x̂)` over `n_mc` paired draws; both samplers read
/// copies of the same stream (common random numbers).
pub fn mc_integral_gap(
    p: &dyn NextStateSampler,
    p_hat: &dyn NextStateSampler,
    f: &dyn Fn(&[f64]) -> f64,
    n_mc: usize,
    rng: &RngStream,
) -> GapEstimate {
    assert!(n_mc >= 2, "need at least two draws for a standard error");
    let mut r1 = rng.clone();
    let mut r2 = rng.clone();
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n_mc {
        let d = f(&p.sample(&mut r1)) - f(&p_hat.sample(&mut r2));
        sum += d;
        sq += d * d;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
    GapEstimate { estimate: mean, std_err: (var / n).sqrt() }
}

/// `∫ (P - P̂) F` in closed form for Gaussians sharing their mean.
pub fn closed_form_gap(p: &GaussianSampler, p_hat: &GaussianSampler, f: &QuadraticFunction) -> f64 {
    gaussian_expectation(f, &p.mean(), &p.covariance()) - gaussian_expectation(f, &p_hat.mean(), &p_hat.covariance())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GvCheck {
    pub lhs: GapEstimate,
    pub rhs: GapEstimate,
    pub lhs_closed: f64,
    pub rhs_closed: f64,
    /// `|lhs - rhs| ≤ 4 · sqrt(se_lhs² + se_rhs²)` and closed forms equal to 1e-9.
    pub agree: bool,
}

/// Compares the gap of `F` with the gap of `G_F` alone.
pub fn gv_gap_check(
    p: &GaussianSampler,
    p_hat: &GaussianSampler,
    f: &QuadraticFunction,
    dep: &DepStructure,
    n_mc: usize,
    rng: &RngStream,
) -> GvCheck {
    let g = g_decompose(f, dep).g_function();
    let lhs = mc_integral_gap(p, p_hat, &|x| f.eval(x), n_mc, rng);
    let rhs = mc_integral_gap(p, p_hat, &|x| g.eval(x), n_mc, rng);
    let lhs_closed = closed_form_gap(p, p_hat, f);
    let rhs_closed = closed_form_gap(p, p_hat, &g);
    let se = (lhs.std_err.powi(2) + rhs.std_err.powi(2)).sqrt();
    let agree = (lhs.estimate - rhs.estimate).abs() <= 4.0 * se && (lhs_closed - rhs_closed).abs() < 1e-9;
    GvCheck { lhs, rhs, lhs_closed, rhs_closed, agree }
}
