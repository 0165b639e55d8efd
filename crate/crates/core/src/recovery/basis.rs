use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::sensing::SensingMatrix;

/// An orthonormal sparsifying transform: `analyze` maps a time-domain vector
/// to coefficients (`Phi * v`), `synthesize` maps back (`Phi^T * c`).
pub trait SparsifyingBasis: Sync {
    fn dim(&self) -> usize;

    fn analyze(&self, v: &[f64]) -> Vec<f64>;

    fn synthesize(&self, coeffs: &[f64]) -> Vec<f64>;

    /// `A * Phi^T`: row `m` is `Phi * a_m`.
    fn effective_matrix(&self, a: &SensingMatrix) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(a.rows(), self.dim());
        for m in 0..a.rows() {
            let row: Vec<f64> = a.row(m).iter().map(|&v| v as f64).collect();
            for (k, v) in self.analyze(&row).into_iter().enumerate() {
                out[(m, k)] = v;
            }
        }
        out
    }
}

/// Orthonormal DCT-II matrix:
/// `Phi[i][j] = sqrt((2 - delta_{i,0}) / N) * cos(pi * i * (2j + 1) / (2N))` (0-based).
#[derive(Clone, Debug)]
pub struct DctBasis {
    n: usize,
    // row-major; row i is the i-th basis vector
    phi: Vec<f64>,
    // row-major N x (N + 1); prefix[i][j] = sum_{l < j} phi[i][l]
    prefix: Vec<f64>,
}

impl DctBasis {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "DCT dimension must be positive");
        let nf = n as f64;
        let mut phi = vec![0.0; n * n];
        for i in 0..n {
            let scale = if i == 0 {
                (1.0 / nf).sqrt()
            } else {
                (2.0 / nf).sqrt()
            };
            for j in 0..n {
                // reduce the angle argument exactly in integers before scaling
                let arg = (i * (2 * j + 1)) % (4 * n);
                phi[i * n + j] = scale * (PI * arg as f64 / (2.0 * nf)).cos();
            }
        }
        let mut prefix = vec![0.0; n * (n + 1)];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += phi[i * n + j];
                prefix[i * (n + 1) + j + 1] = acc;
            }
        }
        Self { n, phi, prefix }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.phi[i * self.n + j]
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.phi)
    }
}

impl SparsifyingBasis for DctBasis {
    fn dim(&self) -> usize {
        self.n
    }

    fn analyze(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        self.phi
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (row, &c) in self.phi.chunks_exact(self.n).zip(coeffs) {
            if c != 0.0 {
                for (o, p) in out.iter_mut().zip(row) {
                    *o += c * p;
                }
            }
        }
        out
    }

    /// Piecewise-constant rows reduce to signed segment sums of each basis vector.
    fn effective_matrix(&self, a: &SensingMatrix) -> DMatrix<f64> {
        assert_eq!(a.cols(), self.n);
        let stride = self.n + 1;
        let mut out = DMatrix::zeros(a.rows(), self.n);
        for (m, sched) in a.schedules().iter().enumerate() {
            let segments: Vec<_> = sched.segments().collect();
            for k in 0..self.n {
                let p = &self.prefix[k * stride..(k + 1) * stride];
                out[(m, k)] = segments
                    .iter()
                    .map(|&(s, e, sign)| sign as f64 * (p[e] - p[s]))
                    .sum();
            }
        }
        out
    }
}

/// The trivial basis; sensing in it is sensing the time samples directly.
#[derive(Clone, Copy, Debug)]
pub struct IdentityBasis(pub usize);

impl SparsifyingBasis for IdentityBasis {
    fn dim(&self) -> usize {
        self.0
    }

    fn analyze(&self, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        coeffs.to_vec()
    }
}
