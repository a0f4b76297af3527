//! Quadratic functions split into single-dimension, independent-pair and
//! dependent-pair parts.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `F(s) = sᵀ A s + bᵀ s + c` with `A` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFunction {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl QuadraticFunction {
    /// `A` is replaced by `(A + Aᵀ)/2`.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() || a.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.len() });
        }
        let sym = (&a + a.transpose()) * 0.5;
        Ok(Self { a: sym, b, c })
    }

    pub fn zero(n: usize) -> Self {
        Self { a: DMatrix::zeros(n, n), b: DVector::zeros(n), c: 0.0 }
    }

    /// `coef · (s_i + s_j)²`.
    pub fn pair_square(n: usize, i: usize, j: usize, coef: f64) -> Self {
        let mut a = DMatrix::zeros(n, n);
        a[(i, i)] += coef;
        a[(j, j)] += coef;
        a[(i, j)] += coef;
        a[(j, i)] += coef;
        Self { a, b: DVector::zeros(n), c: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        let x = DVector::from_column_slice(s);
        x.dot(&(&self.a * &x)) + self.b.dot(&x) + self.c
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { a: &self.a + &other.a, b: &self.b + &other.b, c: self.c + other.c }
    }

    pub fn scale(&self, k: f64) -> Self {
        Self { a: &self.a * k, b: &self.b * k, c: self.c * k }
    }
}

/// Unordered pairs of dimensions whose next-state noises are dependent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepStructure {
    pairs: BTreeSet<(usize, usize)>,
}

impl DepStructure {
    pub fn new(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(i, j) in pairs {
            if i == j || i >= n || j >= n {
                return Err(Error::InvalidParams(format!("bad dependent pair ({i},{j}) for n = {n}")));
            }
            if !set.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidParams(format!("duplicate dependent pair ({i},{j})")));
            }
        }
        Ok(Self { pairs: set })
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pairs.contains(&(i.min(j), i.max(j)))
    }

    pub fn pairs(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.pairs.iter()
    }
}

/// `F = constant + Σ_i singles_i(s_i) + Σ indep_terms + Σ dep_terms`, where
/// `singles[i] = (A_ii, b_i)` stands for `A_ii s_i² + b_i s_i` and each pair
/// term `((i, j), k)` stands for `k s_i s_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GDecomposition {
    pub constant: f64,
    pub singles: Vec<(f64, f64)>,
    pub dep_terms: Vec<((usize, usize), f64)>,
    pub indep_terms: Vec<((usize, usize), f64)>,
}

impl GDecomposition {
    pub fn eval(&self, s: &[f64]) -> f64 {
        self.constant
            + self.singles.iter().zip(s).map(|((q, l), x)| q * x * x + l * x).sum::<f64>()
            + self.g(s)
            + self.indep_terms.iter().map(|&((i, j), k)| k * s[i] * s[j]).sum::<f64>()
    }

    /// `G_F(s)`: the dependent cross terms only.
    pub fn g(&self, s: &[f64]) -> f64 {
        self.dep_terms.iter().map(|&((i, j), k)| k * s[i] * s[j]).sum()
    }

    pub fn g_is_zero(&self) -> bool {
        self.dep_terms.is_empty()
    }

    /// `G_F` as a quadratic function.
    pub fn g_function(&self) -> QuadraticFunction {
        let n = self.singles.len();
        let mut a = DMatrix::zeros(n, n);
        for &((i, j), k) in &self.dep_terms {
            a[(i, j)] += k / 2.0;
            a[(j, i)] += k / 2.0;
        }
        QuadraticFunction { a, b: DVector::zeros(n), c: 0.0 }
    }
}

/// Exact split of `F`; `G_F ≡ 0` iff `A_ij = 0` on every dependent pair.
pub fn g_decompose(f: &QuadraticFunction, dep: &DepStructure) -> GDecomposition {
    let n = f.dim();
    let singles = (0..n).map(|i| (f.a[(i, i)], f.b[i])).collect();
    let mut dep_terms = vec![];
    let mut indep_terms = vec![];
    for i in 0..n {
        for j in (i + 1)..n {
            let k = 2.0 * f.a[(i, j)];
            if k == 0.0 {
                continue;
            }
            if dep.contains(i, j) {
                dep_terms.push(((i, j), k));
            } else {
                indep_terms.push(((i, j), k));
            }
        }
    }
    GDecomposition { constant: f.c, singles, dep_terms, indep_terms }
}

/// `E[xᵀ A x] = μᵀ A μ + tr(A Σ)` for `x ~ N(μ, Σ)`.
pub fn gaussian_quadratic_expectation(mu: &DVector<f64>, cov: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    mu.dot(&(a * mu)) + (a * cov).trace()
}

/// `E[F(x)]` for `x ~ N(μ, Σ)`.
pub fn gaussian_expectation(f: &QuadraticFunction, mu: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    gaussian_quadratic_expectation(mu, cov, &f.a) + f.b.dot(mu) + f.c
}
