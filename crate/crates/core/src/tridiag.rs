//! Tridiagonal matrices and an LU factorization with partial pivoting.
//!
//! Every matrix appearing in the piecewise-linear Galerkin discretization
//! (mass, stiffness, advection, and the θ-scheme step matrices built from
//! them) is tridiagonal, so the whole time loop runs on O(n) kernels.  The
//! factorization follows the classic three-band elimination with row
//! swaps (the LAPACK `gttrf`/`gttrs` scheme): pivoting costs one extra
//! superdiagonal and keeps the elimination stable for the advection-dominated
//! step matrices, which are not symmetric and not always diagonally dominant.

use crate::error::{Error, Result};

/// Tridiagonal matrix in banded storage.
///
/// `sub[i]` is entry (i+1, i), `diag[i]` is (i, i), `sup[i]` is (i, i+1).
#[derive(Clone, Debug)]
pub struct Tridiag {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiag {
    /// Zero matrix of dimension `n`.
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 2, "tridiagonal matrix needs n >= 2");
        Tridiag {
            sub: vec![0.0; n - 1],
            diag: vec![0.0; n],
            sup: vec![0.0; n - 1],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        y[0] = self.diag[0] * x[0] + self.sup[0] * x[1];
        for i in 1..n - 1 {
            y[i] = self.sub[i - 1] * x[i - 1] + self.diag[i] * x[i] + self.sup[i] * x[i + 1];
        }
        y[n - 1] = self.sub[n - 2] * x[n - 2] + self.diag[n - 1] * x[n - 1];
    }

    /// Quadratic form x^T A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.n();
        let mut acc = 0.0;
        acc += x[0] * (self.diag[0] * y[0] + self.sup[0] * y[1]);
        for i in 1..n - 1 {
            acc += x[i] * (self.sub[i - 1] * y[i - 1] + self.diag[i] * y[i] + self.sup[i] * y[i + 1]);
        }
        acc += x[n - 1] * (self.sub[n - 2] * y[n - 2] + self.diag[n - 1] * y[n - 1]);
        acc
    }

    /// Transposed matrix (sub and super diagonals swap).
    pub fn transpose(&self) -> Tridiag {
        Tridiag {
            sub: self.sup.clone(),
            diag: self.diag.clone(),
            sup: self.sub.clone(),
        }
    }

    /// self + scale * other, entrywise on the three bands.
    pub fn add_scaled(&self, other: &Tridiag, scale: f64) -> Tridiag {
        assert_eq!(self.n(), other.n());
        let comb = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + scale * y).collect()
        };
        Tridiag {
            sub: comb(&self.sub, &other.sub),
            diag: comb(&self.diag, &other.diag),
            sup: comb(&self.sup, &other.sup),
        }
    }

    /// LU factorization with partial pivoting.
    pub fn factor(&self) -> Result<TriFactor> {
        TriFactor::new(self)
    }
}

/// LU factorization of a tridiagonal matrix with partial pivoting.
///
/// Row swaps during elimination fill one extra superdiagonal (`sup2`);
/// `swapped[i]` records whether rows i and i+1 were exchanged at step i.
#[derive(Clone, Debug)]
pub struct TriFactor {
    low: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    sup2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TriFactor {
    fn new(a: &Tridiag) -> Result<Self> {
        let n = a.n();
        let mut low = a.sub.clone();
        let mut diag = a.diag.clone();
        let mut sup = a.sup.clone();
        let mut sup2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n - 1];

        for i in 0..n - 1 {
            if diag[i].abs() >= low[i].abs() {
                // No row interchange.
                if diag[i] == 0.0 {
                    return Err(Error::Singular(format!("zero pivot at row {i}")));
                }
                let fact = low[i] / diag[i];
                low[i] = fact;
                diag[i + 1] -= fact * sup[i];
            } else {
                // Interchange rows i and i+1.
                let fact = diag[i] / low[i];
                diag[i] = low[i];
                low[i] = fact;
                let temp = sup[i];
                sup[i] = diag[i + 1];
                diag[i + 1] = temp - fact * diag[i + 1];
                if i + 2 < n {
                    sup2[i] = sup[i + 1];
                    sup[i + 1] = -fact * sup[i + 1];
                }
                swapped[i] = true;
            }
        }
        if diag[n - 1] == 0.0 {
            return Err(Error::Singular(format!("zero pivot at row {}", n - 1)));
        }
        Ok(TriFactor { low, diag, sup, sup2, swapped })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Solve A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n();
        debug_assert_eq!(b.len(), n);
        // Apply the recorded eliminations to the right-hand side.
        for i in 0..n - 1 {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.low[i] * b[i];
            } else {
                b[i + 1] -= self.low[i] * b[i];
            }
        }
        // Back substitution on the three stored bands.
        b[n - 1] /= self.diag[n - 1];
        if n >= 2 {
            b[n - 2] = (b[n - 2] - self.sup[n - 2] * b[n - 1]) / self.diag[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.sup[i] * b[i + 1] - self.sup2[i] * b[i + 2]) / self.diag[i];
        }
    }
}
