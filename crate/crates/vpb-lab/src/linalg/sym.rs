//! Symmetric dense factorisations: Cholesky and the classic
//! Householder-tridiagonalisation + implicit-shift QL eigensolver
//! (EISPACK tred2/tql2 lineage).

use super::DMat;
use crate::error::{Error, Result};
use rayon::prelude::*;

/// In-place lower Cholesky factorisation of a symmetric positive-definite
/// matrix. On success the lower triangle of `a` holds `L` with
/// `L L^T = A`; the strict upper triangle is left untouched. Left-looking
/// column updates run in parallel over the trailing rows.
pub fn cholesky_in_place(a: &mut DMat) -> Result<()> {
    let n = a.n_rows;
    assert_eq!(n, a.n_cols);
    for j in 0..n {
        let mut d = a.at(j, j);
        for k in 0..j {
            let l = a.at(j, k);
            d -= l * l;
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::SolveFailure(format!(
                "Cholesky pivot {d:.3e} at column {j}; matrix not positive definite"
            )));
        }
        let d = d.sqrt();
        *a.at_mut(j, j) = d;
        let (head, tail) = a.data.split_at_mut((j + 1) * n);
        let row_j = &head[j * n..j * n + j];
        tail.par_chunks_mut(n).for_each(|row_i| {
            let mut s = row_i[j];
            for (x, y) in row_i[..j].iter().zip(row_j) {
                s -= x * y;
            }
            row_i[j] = s / d;
        });
    }
    Ok(())
}

/// Solve `A x = b` given the Cholesky factor produced by
/// [`cholesky_in_place`].
pub fn cholesky_solve(chol: &DMat, b: &[f64]) -> Vec<f64> {
    let n = chol.n_rows;
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= chol.at(i, k) * x[k];
        }
        x[i] = s / chol.at(i, i);
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= chol.at(k, i) * x[k];
        }
        x[i] = s / chol.at(i, i);
    }
    x
}

/// Eigendecomposition of a real symmetric matrix.
pub struct SymEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Row-major matrix whose columns are the matching orthonormal
    /// eigenvectors.
    pub vectors: DMat,
}

/// Full symmetric eigendecomposition (tred2 + tql2). Intended for
/// moderate sizes (up to a couple of thousand rows).
pub fn symmetric_eigen(a: &DMat) -> Result<SymEigen> {
    let n = a.n_rows;
    assert_eq!(n, a.n_cols);
    let mut z = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut z, &mut d, &mut e);
    tql2(&mut z, &mut d, &mut e)?;

    // Sort ascending, carrying eigenvector columns.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMat::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        values.push(d[old_col]);
        for r in 0..n {
            *vectors.at_mut(r, new_col) = z.at(r, old_col);
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Householder reduction to tridiagonal form with accumulated transform.
fn tred2(a: &mut DMat, d: &mut [f64], e: &mut [f64]) {
    let n = a.n_rows;
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += a.at(i, k).abs();
            }
            if scale == 0.0 {
                e[i] = a.at(i, l);
            } else {
                for k in 0..=l {
                    *a.at_mut(i, k) /= scale;
                    h += a.at(i, k) * a.at(i, k);
                }
                let f = a.at(i, l);
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                *a.at_mut(i, l) = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    *a.at_mut(j, i) = a.at(i, j) / h;
                    let mut g_acc = 0.0;
                    for k in 0..=j {
                        g_acc += a.at(j, k) * a.at(i, k);
                    }
                    for k in (j + 1)..=l {
                        g_acc += a.at(k, j) * a.at(i, k);
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * a.at(i, j);
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = a.at(i, j);
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        *a.at_mut(j, k) -= f * e[k] + g * a.at(i, k);
                    }
                }
            }
        } else {
            e[i] = a.at(i, l);
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += a.at(i, k) * a.at(k, j);
                }
                for k in 0..i {
                    *a.at_mut(k, j) -= g * a.at(k, i);
                }
            }
        }
        d[i] = a.at(i, i);
        *a.at_mut(i, i) = 1.0;
        for j in 0..i {
            *a.at_mut(j, i) = 0.0;
            *a.at_mut(i, j) = 0.0;
        }
    }
}

/// Implicit-shift QL iteration on the tridiagonal produced by `tred2`,
/// accumulating eigenvectors into `z`.
fn tql2(z: &mut DMat, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::SolveFailure(
                    "QL iteration failed to converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0, 1.0);
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z.at(k, i + 1);
                    *z.at_mut(k, i + 1) = s * z.at(k, i) + c * f;
                    *z.at_mut(k, i) = c * z.at(k, i) - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DMat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                *a.at_mut(i, j) = v;
                *a.at_mut(j, i) = v;
            }
        }
        a
    }

    #[test]
    fn eigen_reconstructs_2x2() {
        let mut a = DMat::zeros(2, 2);
        *a.at_mut(0, 0) = 2.0;
        *a.at_mut(0, 1) = 1.0;
        *a.at_mut(1, 0) = 1.0;
        *a.at_mut(1, 1) = 2.0;
        let eig = symmetric_eigen(&a).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        assert!((eig.values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_residuals_random() {
        let n = 60;
        let a = random_symmetric(n, 7);
        let eig = symmetric_eigen(&a).unwrap();
        for idx in 0..n {
            let v: Vec<f64> = (0..n).map(|r| eig.vectors.at(r, idx)).collect();
            let av = a.matvec(&v);
            let mut resid = 0.0f64;
            for r in 0..n {
                resid = resid.max((av[r] - eig.values[idx] * v[r]).abs());
            }
            assert!(resid < 1e-10, "residual {resid} at eigenpair {idx}");
        }
        // Orthonormality spot check.
        let v0: Vec<f64> = (0..n).map(|r| eig.vectors.at(r, 0)).collect();
        let v1: Vec<f64> = (0..n).map(|r| eig.vectors.at(r, 1)).collect();
        assert!((super::super::dot(&v0, &v0) - 1.0).abs() < 1e-12);
        assert!(super::super::dot(&v0, &v1).abs() < 1e-12);
    }

    #[test]
    fn cholesky_solves() {
        let n = 40;
        let b = random_symmetric(n, 3);
        // A = B B^T + n I is SPD.
        let mut a = DMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += b.at(i, k) * b.at(j, k);
                }
                *a.at_mut(i, j) = s + if i == j { n as f64 } else { 0.0 };
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut chol = a.clone();
        cholesky_in_place(&mut chol).unwrap();
        let x = cholesky_solve(&chol, &rhs);
        let ax = a.matvec(&x);
        for i in 0..n {
            assert!((ax[i] - rhs[i]).abs() < 1e-9);
        }
    }
}
