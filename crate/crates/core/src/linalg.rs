//! Tridiagonal and cyclic tridiagonal systems.
//!
//! Non-periodic systems use the Thomas algorithm; periodic ones add the two
//! corner entries and are reduced to two tridiagonal solves with the
//! Sherman-Morrison formula. Neither pivots, which is fine for the diagonally
//! dominant / SPD matrices produced by the finite element assembly.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::abs;

/// Pivots smaller than this fraction of their row scale are treated as zero.
const PIVOT_RTOL: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    /// `sub[i] = A[i+1][i]`
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    /// `sup[i] = A[i][i+1]`
    pub sup: Vec<f64>,
    /// `A[0][n-1]`, periodic only.
    pub top_right: f64,
    /// `A[n-1][0]`, periodic only.
    pub bottom_left: f64,
    pub cyclic: bool,
}

impl Tridiagonal {
    pub fn zeros(n: usize, cyclic: bool) -> Self {
        assert!(n >= 1, "empty system");
        assert!(!cyclic || n >= 3, "cyclic systems need at least 3 unknowns");
        Self {
            sub: vec![0.0; n - 1],
            diag: vec![0.0; n],
            sup: vec![0.0; n - 1],
            top_right: 0.0,
            bottom_left: 0.0,
            cyclic,
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `A[i][j] += v`. Panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let n = self.len();
        if i == j {
            self.diag[i] += v;
        } else if j == i + 1 {
            self.sup[i] += v;
        } else if i == j + 1 {
            self.sub[j] += v;
        } else if self.cyclic && i == 0 && j == n - 1 {
            self.top_right += v;
        } else if self.cyclic && i == n - 1 && j == 0 {
            self.bottom_left += v;
        } else {
            panic!("entry ({i}, {j}) outside the tridiagonal band");
        }
    }

    /// Replaces row `i` by the identity row.
    pub fn set_identity_row(&mut self, i: usize) {
        let n = self.len();
        self.diag[i] = 1.0;
        if i + 1 < n {
            self.sup[i] = 0.0;
        }
        if i > 0 {
            self.sub[i - 1] = 0.0;
        }
        if self.cyclic && i == 0 {
            self.top_right = 0.0;
        }
        if self.cyclic && i == n - 1 {
            self.bottom_left = 0.0;
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            sub: self.sup.clone(),
            diag: self.diag.clone(),
            sup: self.sub.clone(),
            top_right: self.bottom_left,
            bottom_left: self.top_right,
            cyclic: self.cyclic,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.sub == self.sup && self.top_right == self.bottom_left
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(x.len(), n);
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for i in 0..n - 1 {
            y[i] += self.sup[i] * x[i + 1];
            y[i + 1] += self.sub[i] * x[i];
        }
        if self.cyclic {
            y[0] += self.top_right * x[n - 1];
            y[n - 1] += self.bottom_left * x[0];
        }
        y
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        if !self.cyclic {
            return thomas(&self.sub, &self.diag, &self.sup, rhs);
        }
        // A = T + u v^T with u = (g, 0, .., bl), v = (1, 0, .., tr / g)
        let g = -self.diag[0];
        if g == 0.0 {
            return Err(Error::Singular { row: 0 });
        }
        let mut diag = self.diag.clone();
        diag[0] -= g;
        diag[n - 1] -= self.top_right * self.bottom_left / g;
        let y = thomas(&self.sub, &diag, &self.sup, rhs)?;
        let mut u = vec![0.0; n];
        u[0] = g;
        u[n - 1] = self.bottom_left;
        let z = thomas(&self.sub, &diag, &self.sup, &u)?;
        let vy = y[0] + self.top_right / g * y[n - 1];
        let vz = z[0] + self.top_right / g * z[n - 1];
        let denom = 1.0 + vz;
        if !(abs(denom) > PIVOT_RTOL * (1.0 + abs(vz))) {
            return Err(Error::Singular { row: n - 1 });
        }
        let f = vy / denom;
        Ok(y.iter().zip(&z).map(|(a, b)| a - f * b).collect())
    }
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let row_scale = |i: usize| {
        let mut s = abs(diag[i]);
        if i > 0 {
            s = s.max(abs(sub[i - 1]));
        }
        if i + 1 < n {
            s = s.max(abs(sup[i]));
        }
        s
    };
    let mut pivot = diag[0];
    if !(abs(pivot) > PIVOT_RTOL * row_scale(0)) || !pivot.is_finite() {
        return Err(Error::Singular { row: 0 });
    }
    if n > 1 {
        c[0] = sup[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i - 1] * c[i - 1];
        if !(abs(pivot) > PIVOT_RTOL * row_scale(i)) || !pivot.is_finite() {
            return Err(Error::Singular { row: i });
        }
        if i + 1 < n {
            c[i] = sup[i] / pivot;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}
