//! Small dense/iterative linear-algebra kit.
//!
//! Hand-rolled on purpose: the sizes here (a few thousand rows at most)
//! do not warrant an external BLAS/LAPACK binding, and keeping the
//! factorisations local makes the deterministic-output guarantee easy to
//! audit.

mod cmat;
mod krylov;
mod sym;

pub use cmat::{expm, CMat};
pub use krylov::{cg_solve, lanczos_largest, CgOptions};
pub use sym::{cholesky_in_place, cholesky_solve, symmetric_eigen, SymEigen};

/// Dense row-major real matrix.
#[derive(Clone, Debug)]
pub struct DMat {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl DMat {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.n_cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for (yi, row) in y.iter_mut().zip(self.data.chunks_exact(self.n_cols)) {
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.iter()) {
                acc += a * b;
            }
            *yi = acc;
        }
        y
    }

    /// Largest absolute entry difference from the transpose.
    pub fn symmetry_defect(&self) -> f64 {
        assert_eq!(self.n_rows, self.n_cols);
        let n = self.n_rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.at(i, j) - self.at(j, i)).abs());
            }
        }
        worst
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
