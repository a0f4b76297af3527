//! Linear-Gaussian processes `s' = A s + ε` observed at a coarser time
//! resolution, by subsampling or by aggregation.

use nalgebra::{DMatrix, DVector};

use crate::corr::factor_psd;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::state::{ActionId, StateVec};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianSpec {
    pub a: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
    pub k: usize,
}

impl LinearGaussianSpec {
    pub fn new(a: DMatrix<f64>, noise_cov: DMatrix<f64>, k: usize) -> Result<Self> {
        let spec = Self { a, noise_cov, k };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if n == 0 || !self.a.is_square() || self.noise_cov.shape() != (n, n) {
            return Err(Error::InvalidParams("A and noise_cov must be n×n".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidParams("k must be positive".into()));
        }
        if (&self.noise_cov - self.noise_cov.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidParams("noise_cov must be symmetric".into()));
        }
        let min_eig = self.noise_cov.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-9 {
            return Err(Error::InvalidParams(format!("noise_cov not PSD (min eigenvalue {min_eig})")));
        }
        let rho = spectral_radius(&self.a);
        if rho > 1.0 + 1e-9 {
            return Err(Error::InvalidParams(format!("spectral radius {rho} exceeds 1")));
        }
        Ok(())
    }

    fn powers(&self) -> Vec<DMatrix<f64>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(self.k + 1);
        out.push(DMatrix::identity(n, n));
        for l in 1..=self.k {
            out.push(&self.a * &out[l - 1]);
        }
        out
    }
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `Σ_{l<k} Aˡ Σ_ε (Aˡ)ᵀ`: covariance of the noise between observations
/// taken every `k` fine steps.
pub fn subsampled_noise_cov(spec: &LinearGaussianSpec) -> DMatrix<f64> {
    let pw = spec.powers();
    let mut out = DMatrix::zeros(spec.dim(), spec.dim());
    for p in pw.iter().take(spec.k) {
        out += p * &spec.noise_cov * p.transpose();
    }
    out
}

/// Covariance of `x̄₂ - Aᵏ x̄₁` for consecutive block means of `k` fine
/// states: `(1/k²)[Σ_{m<k} B_m Σ_ε B_mᵀ + Σ_{1≤m<k} C_m Σ_ε C_mᵀ]` with
/// `B_m = Σ_{n≤m} Aⁿ` and `C_m = Σ_{m≤n<k} Aⁿ`.
pub fn aggregated_noise_cov(spec: &LinearGaussianSpec) -> DMatrix<f64> {
    let n = spec.dim();
    let k = spec.k;
    let pw = spec.powers();
    let mut out = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for m in 0..k {
        b += &pw[m];
        out += &b * &spec.noise_cov * b.transpose();
    }
    for m in 1..k {
        let c: DMatrix<f64> = (m..k).fold(DMatrix::zeros(n, n), |acc, l| acc + &pw[l]);
        out += &c * &spec.noise_cov * c.transpose();
    }
    out / (k * k) as f64
}

struct FineProcess<'a> {
    spec: &'a LinearGaussianSpec,
    factor: DMatrix<f64>,
}

impl<'a> FineProcess<'a> {
    fn new(spec: &'a LinearGaussianSpec) -> Result<Self> {
        Ok(Self { spec, factor: factor_psd(&spec.noise_cov)? })
    }

    fn noise(&self, rng: &mut RngStream) -> DVector<f64> {
        let z = DVector::from_fn(self.spec.dim(), |_, _| rng.standard_normal());
        &self.factor * z
    }

    fn step(&self, s: &DVector<f64>, rng: &mut RngStream) -> DVector<f64> {
        &self.spec.a * s + self.noise(rng)
    }
}

/// Compound-noise draws `s_k - Aᵏ s_0` from simulating `k` fine steps.
pub fn simulate_subsampled_noise(
    spec: &LinearGaussianSpec,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<Vec<DVector<f64>>> {
    spec.validate()?;
    let fine = FineProcess::new(spec)?;
    let zero = DVector::zeros(spec.dim());
    Ok((0..n_samples)
        .map(|_| (0..spec.k).fold(zero.clone(), |s, _| fine.step(&s, rng)))
        .collect())
}

/// Compound-noise draws `x̄₂ - Aᵏ x̄₁` from simulating two consecutive blocks
/// of `k` fine states and averaging each block.
pub fn simulate_aggregated_noise(
    spec: &LinearGaussianSpec,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<Vec<DVector<f64>>> {
    spec.validate()?;
    let fine = FineProcess::new(spec)?;
    let k = spec.k;
    let a_k = spec.powers().swap_remove(k);
    Ok((0..n_samples)
        .map(|_| {
            let mut s = DVector::zeros(spec.dim());
            let mut m1 = s.clone();
            let mut m2 = DVector::zeros(spec.dim());
            for t in 1..2 * k {
                s = fine.step(&s, rng);
                if t < k {
                    m1 += &s;
                } else {
                    m2 += &s;
                }
            }
            (m2 - &a_k * m1) / k as f64
        })
        .collect())
}

/// Random `A` rescaled to spectral radius `radius`.
pub fn random_stable_matrix(n: usize, radius: f64, rng: &mut RngStream) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
    let rho = spectral_radius(&raw);
    if rho > 0.0 {
        raw * (radius / rho)
    } else {
        raw
    }
}

/// Random SPD matrix `M Mᵀ / n + 0.1 I`.
pub fn random_spd_matrix(n: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
    &m * m.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1
}

/// A controlled linear-Gaussian system seen every `k` fine steps:
/// each fine step applies `s ← A s + u_a + ε`; reward is `-|s'|²`.
#[derive(Debug, Clone)]
pub struct SubsampledLinearGaussian {
    spec: LinearGaussianSpec,
    controls: Vec<DVector<f64>>,
    factor: DMatrix<f64>,
    max_steps: usize,
    discount: f64,
}

impl SubsampledLinearGaussian {
    pub fn new(spec: LinearGaussianSpec, controls: Vec<DVector<f64>>, max_steps: usize, discount: f64) -> Result<Self> {
        spec.validate()?;
        if controls.is_empty() || controls.iter().any(|u| u.len() != spec.dim()) {
            return Err(Error::InvalidParams("controls must be nonempty and n-dimensional".into()));
        }
        let factor = factor_psd(&spec.noise_cov)?;
        Ok(Self { spec, controls, factor, max_steps, discount })
    }

    pub fn spec(&self) -> &LinearGaussianSpec {
        &self.spec
    }
}

impl Environment for SubsampledLinearGaussian {
    fn state_dim(&self) -> usize {
        self.spec.dim()
    }
    fn n_actions(&self) -> usize {
        self.controls.len()
    }
    fn max_steps(&self) -> usize {
        self.max_steps
    }
    fn discount(&self) -> f64 {
        self.discount
    }
    fn reset(&self, rng: &mut RngStream) -> StateVec {
        StateVec::new((0..self.spec.dim()).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).expect("finite")
    }
    fn sample_next(&self, state: &StateVec, action: ActionId, rng: &mut RngStream) -> StateVec {
        let n = self.spec.dim();
        let mut s = DVector::from_column_slice(state.as_slice());
        for _ in 0..self.spec.k {
            let z = DVector::from_fn(n, |_, _| rng.standard_normal());
            s = &self.spec.a * s + &self.controls[action.0] + &self.factor * z;
        }
        StateVec::new(s.iter().copied().collect()).unwrap_or_else(|_| state.clone())
    }
    fn reward(&self, _state: &StateVec, _action: ActionId, next: &StateVec) -> f64 {
        self.arrival_reward(next)
    }
    fn is_terminal(&self, _next: &StateVec) -> bool {
        false
    }
    fn arrival_reward(&self, next: &StateVec) -> f64 {
        -next.iter().map(|x| x * x).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(a: DMatrix<f64>, k: usize) -> LinearGaussianSpec {
        let n = a.nrows();
        LinearGaussianSpec::new(a, DMatrix::identity(n, n), k).unwrap()
    }

    #[test]
    fn k_one_is_identity_map() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let s = LinearGaussianSpec::new(a, DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]), 1).unwrap();
        assert_eq!(subsampled_noise_cov(&s), s.noise_cov);
        assert!((aggregated_noise_cov(&s) - &s.noise_cov).amax() < 1e-15);
    }

    #[test]
    fn subsampled_examples() {
        assert_eq!(subsampled_noise_cov(&spec(DMatrix::identity(2, 2), 3)), DMatrix::identity(2, 2) * 3.0);
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(
            subsampled_noise_cov(&spec(nil, 2)),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])
        );
    }

    #[test]
    fn aggregated_zero_dynamics() {
        // B_0 = B_1 = I and C_1 = A = 0, so (I + I) / 4.
        let got = aggregated_noise_cov(&spec(DMatrix::zeros(2, 2), 2));
        assert!((got - DMatrix::identity(2, 2) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn unstable_rejected() {
        let a = DMatrix::identity(2, 2) * 1.1;
        assert!(LinearGaussianSpec::new(a, DMatrix::identity(2, 2), 2).is_err());
    }
}
