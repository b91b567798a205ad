//! Conjugate gradients and Lanczos iteration on caller-supplied operators.

use super::{axpy, dot, norm2};
use crate::error::{Error, Result};

pub struct CgOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            rel_tol: 1e-12,
        }
    }
}

/// Preconditioned conjugate gradients for a symmetric positive-definite
/// operator given as a closure. `precond` applies an SPD preconditioner
/// (pass the identity for none); `project` is applied to the initial
/// residual and every operator output, which keeps the iteration inside
/// an invariant subspace (used for the micro-subspace inversion).
pub fn cg_solve(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    project: impl Fn(&mut [f64]),
    b: &[f64],
    opts: &CgOptions,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    project(&mut r);
    let b_norm = norm2(&r).max(f64::MIN_POSITIVE);
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..opts.max_iters {
        if norm2(&r) <= opts.rel_tol * b_norm {
            return Ok(x);
        }
        let mut ap = apply(&p);
        project(&mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::SolveFailure(format!(
                "CG curvature {pap:.3e}; operator not positive definite on the subspace"
            )));
        }
        let alpha = rz / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm2(&r) <= opts.rel_tol.max(1e-10) * b_norm * 10.0 {
        return Ok(x);
    }
    Err(Error::SolveFailure(format!(
        "CG stalled at relative residual {:.3e}",
        norm2(&r) / b_norm
    )))
}

/// Largest eigenvalue of a symmetric operator by Lanczos iteration with
/// full reorthogonalisation. Returns `(eigenvalue, ritz_residual)`.
///
/// `start` seeds the Krylov space; it is orthogonalised against nothing
/// here, so the caller deflates unwanted directions inside `apply`.
pub fn lanczos_largest(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    start: &[f64],
    max_iters: usize,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    let n = start.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut q = start.to_vec();
    let q0 = norm2(&q);
    if q0 == 0.0 {
        return Err(Error::SolveFailure("Lanczos started from zero vector".into()));
    }
    q.iter_mut().for_each(|v| *v /= q0);
    basis.push(q);

    let mut previous_theta = f64::NEG_INFINITY;
    for iter in 0..max_iters {
        let qk = basis.last().unwrap().clone();
        let mut w = apply(&qk);
        let alpha = dot(&w, &qk);
        alphas.push(alpha);
        axpy(&mut w, -alpha, &qk);
        if basis.len() > 1 {
            let beta_prev = betas[basis.len() - 2];
            axpy(&mut w, -beta_prev, &basis[basis.len() - 2]);
        }
        // Full reorthogonalisation, twice for good measure.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                axpy(&mut w, -c, b);
            }
        }
        let beta = norm2(&w);
        // Ritz values of the current tridiagonal.
        let k = alphas.len();
        let (theta, bottom) = tridiag_extreme(&alphas, &betas);
        let resid = beta * bottom.abs();
        if k > 4
            && resid <= rel_tol * theta.abs().max(1e-300)
            && (theta - previous_theta).abs() <= rel_tol * theta.abs().max(1e-300)
        {
            return Ok((theta, resid));
        }
        previous_theta = theta;
        if beta <= 1e-14 * alpha.abs().max(1.0) {
            // Invariant subspace found.
            return Ok((theta, resid));
        }
        if iter + 1 == max_iters {
            return Ok((theta, resid));
        }
        w.iter_mut().for_each(|v| *v /= beta);
        betas.push(beta);
        basis.push(w);
        let _ = n;
    }
    unreachable!()
}

/// Largest eigenvalue (and bottom component of its eigenvector) of the
/// symmetric tridiagonal with diagonal `alphas`, off-diagonal `betas`.
fn tridiag_extreme(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let k = alphas.len();
    let mut t = super::DMat::zeros(k, k);
    for i in 0..k {
        *t.at_mut(i, i) = alphas[i];
        if i + 1 < k {
            *t.at_mut(i, i + 1) = betas[i];
            *t.at_mut(i + 1, i) = betas[i];
        }
    }
    let eig = super::symmetric_eigen(&t).expect("tridiagonal eigen");
    let theta = eig.values[k - 1];
    let bottom = eig.vectors.at(k - 1, k - 1);
    (theta, bottom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DMat;

    #[test]
    fn cg_solves_diagonal() {
        let d = [4.0, 3.0, 2.0, 1.0, 0.5];
        let b = [1.0, 1.0, 1.0, 1.0, 1.0];
        let x = cg_solve(
            |v| v.iter().zip(d).map(|(vi, di)| vi * di).collect(),
            |v| v.to_vec(),
            |_| {},
            &b,
            &CgOptions::default(),
        )
        .unwrap();
        for i in 0..5 {
            assert!((x[i] - 1.0 / d[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn lanczos_finds_top_of_spectrum() {
        let n = 50;
        let mut a = DMat::zeros(n, n);
        for i in 0..n {
            *a.at_mut(i, i) = 1.0 + i as f64;
            if i + 1 < n {
                *a.at_mut(i, i + 1) = 0.3;
                *a.at_mut(i + 1, i) = 0.3;
            }
        }
        let start: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).cos()).collect();
        let (theta, _) = lanczos_largest(|v| a.matvec(v), &start, 200, 1e-12).unwrap();
        let eig = crate::linalg::symmetric_eigen(&a).unwrap();
        assert!((theta - eig.values[n - 1]).abs() < 1e-8);
    }
}
