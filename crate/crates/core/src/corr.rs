//! Correlation matrices and Gaussian predictive distributions.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::StateVec;

const SYMMETRY_TOL: f64 = 1e-12;
const DIAGONAL_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-9;
const CHOLESKY_JITTER: f64 = 1e-10;

/// A validated correlation matrix: symmetric, unit diagonal, entries in
/// `[-1, 1]`, positive semidefinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn identity(n: usize) -> Self {
        assert!(n > 0);
        Self {
            entries: DMatrix::identity(n, n),
        }
    }

    /// Validate raw entries; fails with a diagnostic on any violated invariant.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::InvalidCorrelation(format!(
                "expected a nonempty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidCorrelation("non-finite entry".into()));
        }
        for i in 0..n {
            if (entries[(i, i)] - 1.0).abs() >= DIAGONAL_TOL {
                return Err(Error::InvalidCorrelation(format!(
                    "diagonal entry ({i},{i}) = {} is not 1",
                    entries[(i, i)]
                )));
            }
            for j in (i + 1)..n {
                if (entries[(i, j)] - entries[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidCorrelation(format!("not symmetric at ({i},{j})")));
                }
                if entries[(i, j)].abs() > 1.0 {
                    return Err(Error::InvalidCorrelation(format!(
                        "entry ({i},{j}) = {} outside [-1, 1]",
                        entries[(i, j)]
                    )));
                }
            }
        }
        let min_eig = min_eigenvalue(&entries);
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidCorrelation(format!(
                "not positive semidefinite (smallest eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidCorrelation("rows must form a square matrix".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Identity with the given off-diagonal pairs set to their coefficients.
    pub fn with_pairs(n: usize, pairs: &[(usize, usize, f64)]) -> Result<Self> {
        let mut m = DMatrix::identity(n, n);
        for &(i, j, rho) in pairs {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidCorrelation(format!("bad pair ({i},{j}) for dimension {n}")));
            }
            m[(i, j)] = rho;
            m[(j, i)] = rho;
        }
        Self::new(m)
    }

    /// Project a nearly-valid matrix onto the correlation set: symmetrize,
    /// clip negative eigenvalues to zero, rescale to unit diagonal.
    /// Rows with no remaining variance become identity rows.
    pub fn repair(raw: &DMatrix<f64>) -> Result<Self> {
        let n = raw.nrows();
        if n == 0 || raw.ncols() != n || raw.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidCorrelation("cannot repair a non-square or non-finite matrix".into()));
        }
        let sym = (raw + raw.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let psd = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let d: Vec<f64> = (0..n).map(|i| psd[(i, i)]).collect();
        let mut out = DMatrix::identity(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if d[i] > 1e-15 && d[j] > 1e-15 {
                    let v = (psd[(i, j)] / (d[i] * d[j]).sqrt()).clamp(-1.0, 1.0);
                    out[(i, j)] = v;
                    out[(j, i)] = v;
                }
            }
        }
        // Rescaling keeps PSD in exact arithmetic; pull rounding residue back
        // with a minimal blend toward the identity.
        let lmin = min_eigenvalue(&out);
        if lmin < 0.0 {
            let t = (-lmin / (1.0 - lmin)) * (1.0 + 1e-9) + 1e-15;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        out[(i, j)] *= 1.0 - t;
                    }
                }
            }
        }
        Self::new(out)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn is_identity(&self) -> bool {
        self.entries == DMatrix::identity(self.dim(), self.dim())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.entries)
    }

    /// Lower factor `L` with `L Lᵀ = Γ`: plain Cholesky, then Cholesky with
    /// a `1e-10` jitter, then an eigen-factorization `V sqrt(Λ₊)`.
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        factor_psd(&self.entries)
    }
}

impl TryFrom<Vec<Vec<f64>>> for CorrelationMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<CorrelationMatrix> for Vec<Vec<f64>> {
    fn from(c: CorrelationMatrix) -> Self {
        let n = c.dim();
        (0..n).map(|i| (0..n).map(|j| c.entries[(i, j)]).collect()).collect()
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Factor a symmetric PSD matrix as `L Lᵀ`.
pub fn factor_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.l());
    }
    let n = m.nrows();
    if let Some(ch) = (m + DMatrix::identity(n, n) * CHOLESKY_JITTER).cholesky() {
        return Ok(ch.l());
    }
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| l < -PSD_TOL || !l.is_finite()) {
        return Err(Error::Factorization(format!("matrix is not PSD: {m}")));
    }
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let l = &eig.eigenvectors * DMatrix::from_diagonal(&root);
    if l.iter().any(|x| !x.is_finite()) {
        return Err(Error::Factorization(format!("eigen factor not finite for {m}")));
    }
    Ok(l)
}

/// Per-step predictive distribution: mean, per-dimension scales and a
/// correlation matrix. The implied covariance is `D Γ D`, `D = diag(scales)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mean: StateVec,
    pub scales: Vec<f64>,
    pub corr: CorrelationMatrix,
}

impl GaussianPrediction {
    pub fn new(mean: StateVec, scales: Vec<f64>, corr: CorrelationMatrix) -> Result<Self> {
        let n = mean.dim();
        if scales.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: scales.len() });
        }
        if corr.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: corr.dim() });
        }
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidParams("scales must be finite and nonnegative".into()));
        }
        Ok(Self { mean, scales, corr })
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.scales[i] * self.corr.get(i, j) * self.scales[j])
    }
}
