//! Tridiagonal matrices acting on the interior unknowns of a grid.

use crate::error::{Error, Result};

/// A tridiagonal matrix stored by diagonals.
///
/// `lower[i]` is the entry at `(i, i - 1)` and `upper[i]` the entry at
/// `(i, i + 1)`; `lower[0]` and `upper[n - 1]` are ignored and kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiag {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![1.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `out = self * x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        if n == 0 {
            return;
        }
        if n == 1 {
            out[0] = self.diag[0] * x[0];
            return;
        }
        out[0] = self.diag[0] * x[0] + self.upper[0] * x[1];
        for i in 1..n - 1 {
            out[i] = self.lower[i] * x[i - 1] + self.diag[i] * x[i] + self.upper[i] * x[i + 1];
        }
        out[n - 1] = self.lower[n - 1] * x[n - 2] + self.diag[n - 1] * x[n - 1];
    }

    pub fn transpose(&self) -> Self {
        let n = self.len();
        let mut t = Self::zeros(n);
        t.diag.copy_from_slice(&self.diag);
        for i in 1..n {
            t.lower[i] = self.upper[i - 1];
            t.upper[i - 1] = self.lower[i];
        }
        t
    }

    /// Returns `I + scale * self`.
    pub fn identity_plus(&self, scale: f64) -> Self {
        let n = self.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.diag[i] = 1.0 + scale * self.diag[i];
            if i > 0 {
                m.lower[i] = scale * self.lower[i];
            }
            if i + 1 < n {
                m.upper[i] = scale * self.upper[i];
            }
        }
        m
    }

    /// Dense row-major copy, for tests and small diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            d[i][i] = self.diag[i];
            if i > 0 {
                d[i][i - 1] = self.lower[i];
            }
            if i + 1 < n {
                d[i][i + 1] = self.upper[i];
            }
        }
        d
    }

    /// Thomas factorization without pivoting.
    pub fn factorize(&self) -> Result<TridiagLu> {
        let n = self.len();
        let mut c_prime = vec![0.0; n];
        let mut inv_denom = vec![0.0; n];
        let scale = self
            .diag
            .iter()
            .chain(&self.lower)
            .chain(&self.upper)
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let threshold = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
        for i in 0..n {
            let denom = if i == 0 {
                self.diag[0]
            } else {
                self.diag[i] - self.lower[i] * c_prime[i - 1]
            };
            if !denom.is_finite() || denom.abs() <= threshold {
                return Err(Error::SingularSystem { row: i, pivot: denom });
            }
            inv_denom[i] = 1.0 / denom;
            c_prime[i] = if i + 1 < n { self.upper[i] * inv_denom[i] } else { 0.0 };
        }
        Ok(TridiagLu {
            lower: self.lower.clone(),
            c_prime,
            inv_denom,
        })
    }
}

/// Factorized tridiagonal system, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagLu {
    lower: Vec<f64>,
    c_prime: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl TridiagLu {
    pub fn len(&self) -> usize {
        self.inv_denom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_denom.is_empty()
    }

    /// Solves in place: on return `rhs` holds the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        if n == 0 {
            return;
        }
        rhs[0] *= self.inv_denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }
}
