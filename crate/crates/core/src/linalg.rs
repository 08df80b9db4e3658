//! Packed symmetric matrices and Cholesky solves.
//!
//! Normal-equation systems here are small to mid sized (up to ~1000
//! unknowns for third-order tensor splines) and are factored once and
//! reused across backfitting sweeps, so storage is packed lower-triangular.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
pub struct NotPositiveDefinite {
    pub pivot: usize,
    pub value: f64,
}

/// Symmetric `n x n` matrix stored as its packed lower triangle, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn packed(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * (n + 1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.data[packed(i, j)]
        } else {
            self.data[packed(j, i)]
        }
    }

    /// Add `v` at `(i, j)` with `j <= i`.
    #[inline]
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        self.data[packed(i, j)] += v;
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.data[packed(i, i)] += v;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[packed(i, i)]).collect()
    }
}

/// `L` with `A = L L^T`, packed lower-triangular.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &SymMatrix) -> Result<Self, NotPositiveDefinite> {
        let n = a.n;
        let mut l = a.data.clone();
        // Relative pivot floor: entries far below the matrix scale are
        // treated as rank deficiency rather than accepted as tiny pivots.
        let scale = (0..n).map(|i| a.data[packed(i, i)].abs()).fold(0.0, f64::max);
        let floor = scale * 1e-14;
        for i in 0..n {
            let row_i = packed(i, 0);
            for j in 0..=i {
                let row_j = packed(j, 0);
                let mut s = l[row_i + j];
                for k in 0..j {
                    s -= l[row_i + k] * l[row_j + k];
                }
                if i == j {
                    if !(s.is_finite() && s > floor) {
                        return Err(NotPositiveDefinite { pivot: i, value: s });
                    }
                    l[row_i + i] = s.sqrt();
                } else {
                    l[row_i + j] = s / l[row_j + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        for i in 0..n {
            let row = packed(i, 0);
            let s = b[i] - (0..i).map(|k| self.l[row + k] * b[k]).sum::<f64>();
            b[i] = s / self.l[row + i];
        }
        for i in (0..n).rev() {
            let s = b[i] - (i + 1..n).map(|k| self.l[packed(k, i)] * b[k]).sum::<f64>();
            b[i] = s / self.l[packed(i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
