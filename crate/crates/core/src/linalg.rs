//! Tridiagonal systems.
//!
//! Every implicit solve in this crate reduces to a tridiagonal system on the
//! nodal values (the ghost nodes are eliminated into the boundary rows).

use crate::error::{Error, Result};

/// Row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`;
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.upper[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Thomas algorithm (no pivoting).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SingularSystem { row: 0 });
        }
        c[0] = self.upper[0] / denom;
        d[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.lower[i] * c[i - 1];
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::SingularSystem { row: i });
            }
            c[i] = if i + 1 < n { self.upper[i] / denom } else { 0.0 };
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / denom;
        }
        let mut x = d;
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(x)
    }

    /// Nonsingular M-matrix test for an irreducible tridiagonal Z-matrix:
    /// off-diagonals nonpositive and every elimination pivot positive.
    pub fn is_m_matrix(&self) -> bool {
        let n = self.len();
        let offdiag_ok = (1..n).all(|i| self.lower[i] <= 0.0) && (0..n.saturating_sub(1)).all(|i| self.upper[i] <= 0.0);
        if !offdiag_ok {
            return false;
        }
        let mut pivot = self.diag[0];
        if pivot <= 0.0 {
            return false;
        }
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i] * self.upper[i - 1] / pivot;
            if pivot <= 0.0 || !pivot.is_finite() {
                return false;
            }
        }
        true
    }
}
