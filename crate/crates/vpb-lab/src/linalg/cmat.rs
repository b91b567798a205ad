//! Dense complex matrices, a blocked matmul, LU solve, and the scaling
//! and squaring matrix exponential (Pade order 13, Higham 2005).

use crate::error::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;

/// Dense row-major complex matrix.
#[derive(Clone, Debug)]
pub struct CMat {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }

    pub fn scale(&mut self, s: Complex64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn add_scaled_identity(&mut self, s: Complex64) {
        let n = self.n;
        for i in 0..n {
            self.data[i * n + i] += s;
        }
    }

    pub fn add(&mut self, other: &CMat, factor: Complex64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(x.len(), n);
        self.data
            .chunks_exact(n)
            .map(|row| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, b) in row.iter().zip(x) {
                    acc += a * b;
                }
                acc
            })
            .collect()
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let n = self.n;
        let mut sums = vec![0.0f64; n];
        for row in self.data.chunks_exact(n) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v.norm();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// `self * other`. The factors are split into planar real/imaginary
    /// parts so the inner loops are plain fused multiply-add streams the
    /// compiler vectorises; rows are distributed over the worker pool.
    pub fn matmul(&self, other: &CMat) -> CMat {
        let n = self.n;
        assert_eq!(n, other.n);
        let b_re: Vec<f64> = other.data.iter().map(|z| z.re).collect();
        let b_im: Vec<f64> = other.data.iter().map(|z| z.im).collect();
        let mut out = CMat::zeros(n);
        out.data
            .par_chunks_mut(n)
            .zip(self.data.par_chunks(n))
            .for_each(|(out_row, a_row)| {
                let mut acc_re = vec![0.0f64; n];
                let mut acc_im = vec![0.0f64; n];
                for (k, aik) in a_row.iter().enumerate() {
                    let (ar, ai) = (aik.re, aik.im);
                    if ar == 0.0 && ai == 0.0 {
                        continue;
                    }
                    let br = &b_re[k * n..(k + 1) * n];
                    let bi = &b_im[k * n..(k + 1) * n];
                    if ai == 0.0 {
                        for j in 0..n {
                            acc_re[j] += ar * br[j];
                            acc_im[j] += ar * bi[j];
                        }
                    } else {
                        for j in 0..n {
                            acc_re[j] += ar * br[j] - ai * bi[j];
                            acc_im[j] += ar * bi[j] + ai * br[j];
                        }
                    }
                }
                for (o, (re, im)) in out_row.iter_mut().zip(acc_re.iter().zip(&acc_im)) {
                    *o = Complex64::new(*re, *im);
                }
            });
        out
    }
}

/// LU factorisation with partial pivoting; solves `A X = B` in place of a
/// copy of `B` (both dense square).
fn lu_solve_matrix(a: &CMat, b: &CMat) -> Result<CMat> {
    let n = a.n;
    let mut lu = a.clone();
    let mut x = b.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    for col in 0..n {
        // Pivot search.
        let mut best = col;
        let mut best_mag = lu.at(col, col).norm();
        for r in (col + 1)..n {
            let mag = lu.at(r, col).norm();
            if mag > best_mag {
                best = r;
                best_mag = mag;
            }
        }
        if best_mag == 0.0 {
            return Err(Error::SolveFailure("singular matrix in LU".into()));
        }
        if best != col {
            for j in 0..n {
                let tmp = lu.at(col, j);
                *lu.at_mut(col, j) = lu.at(best, j);
                *lu.at_mut(best, j) = tmp;
            }
            piv.swap(col, best);
            for j in 0..n {
                let tmp = x.at(col, j);
                *x.at_mut(col, j) = x.at(best, j);
                *x.at_mut(best, j) = tmp;
            }
        }
        let inv = Complex64::new(1.0, 0.0) / lu.at(col, col);
        // The trailing update is row-independent; split the buffers at
        // the pivot row and fan the rows out over the pool.
        let pivot_row: Vec<Complex64> = lu.data[col * n + col + 1..(col + 1) * n].to_vec();
        let pivot_rhs: Vec<Complex64> = x.data[col * n..(col + 1) * n].to_vec();
        let (_, lu_tail) = lu.data.split_at_mut((col + 1) * n);
        let (_, x_tail) = x.data.split_at_mut((col + 1) * n);
        lu_tail
            .par_chunks_mut(n)
            .zip(x_tail.par_chunks_mut(n))
            .for_each(|(lu_row, x_row)| {
                let factor = lu_row[col] * inv;
                lu_row[col] = factor;
                if factor.re == 0.0 && factor.im == 0.0 {
                    return;
                }
                for (v, p) in lu_row[col + 1..].iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
                for (v, p) in x_row.iter_mut().zip(&pivot_rhs) {
                    *v -= factor * p;
                }
            });
    }
    // Back substitution.
    for col in (0..n).rev() {
        let inv = Complex64::new(1.0, 0.0) / lu.at(col, col);
        for j in 0..n {
            let v = x.at(col, j) * inv;
            *x.at_mut(col, j) = v;
        }
        for r in 0..col {
            let factor = lu.at(r, col);
            if factor.re == 0.0 && factor.im == 0.0 {
                continue;
            }
            for j in 0..n {
                let val = x.at(col, j);
                *x.at_mut(r, j) -= factor * val;
            }
        }
    }
    Ok(x)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Matrix exponential by Pade(13) with scaling and squaring.
pub fn expm(a: &CMat) -> Result<CMat> {
    let n = a.n;
    let theta13 = 5.371920351148152;
    let norm = a.one_norm();
    let s = if norm > theta13 {
        ((norm / theta13).log2().ceil() as i32).max(0)
    } else {
        0
    };
    let mut a_scaled = a.clone();
    if s > 0 {
        a_scaled.scale(Complex64::new((0.5f64).powi(s), 0.0));
    }

    let a2 = a_scaled.matmul(&a_scaled);
    let a4 = a2.matmul(&a2);
    let a6 = a2.matmul(&a4);

    let b = |k: usize| Complex64::new(PADE13[k], 0.0);

    // U = A (A6 (b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I)
    let mut w1 = a6.clone();
    w1.scale(b(13));
    w1.add(&a4, b(11));
    w1.add(&a2, b(9));
    let mut u_inner = a6.matmul(&w1);
    u_inner.add(&a6, b(7));
    u_inner.add(&a4, b(5));
    u_inner.add(&a2, b(3));
    u_inner.add_scaled_identity(b(1));
    let u = a_scaled.matmul(&u_inner);

    // V = A6 (b12 A6 + b10 A4 + b8 A2) + b6 A6 + b4 A4 + b2 A2 + b0 I
    let mut w2 = a6.clone();
    w2.scale(b(12));
    w2.add(&a4, b(10));
    w2.add(&a2, b(8));
    let mut v = a6.matmul(&w2);
    v.add(&a6, b(6));
    v.add(&a4, b(4));
    v.add(&a2, b(2));
    v.add_scaled_identity(b(0));

    // (V - U) R = (V + U)
    let mut vm = v.clone();
    vm.add(&u, Complex64::new(-1.0, 0.0));
    let mut vp = v;
    vp.add(&u, Complex64::new(1.0, 0.0));
    let mut r = lu_solve_matrix(&vm, &vp)?;
    for _ in 0..s {
        r = r.matmul(&r);
    }
    debug_assert_eq!(r.n, n);
    Ok(r)
}
