//! Periodic spatial grids and spectral operations: FFT transforms,
//! derivatives, the Poisson solve, and the Leray projection.

use crate::error::{Error, Result};
use crate::tolerances::TOL_CONS;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpatialDim {
    One,
    Three,
}

/// Uniform periodic grid on `[0, L)^dim`; unresolved directions are
/// constant.
#[derive(Clone)]
pub struct SpatialGrid {
    pub per_axis_count: usize,
    pub box_length: f64,
    pub dim: SpatialDim,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    /// Signed wavenumbers per axis index (Nyquist treated as zero for
    /// derivatives and phases so real fields stay real).
    pub wavenumbers: Vec<f64>,
}

impl std::fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpatialGrid")
            .field("per_axis_count", &self.per_axis_count)
            .field("box_length", &self.box_length)
            .field("dim", &self.dim)
            .finish()
    }
}

impl SpatialGrid {
    pub fn new(per_axis_count: usize, box_length: f64, dim: SpatialDim) -> Result<Self> {
        if per_axis_count < 8 || !per_axis_count.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "spatial per-axis count {per_axis_count} must be a power of two at least 8"
            )));
        }
        if !(box_length > 0.0) {
            return Err(Error::InvalidParameter("box length must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(per_axis_count);
        let fft_inv = planner.plan_fft_inverse(per_axis_count);
        let base = 2.0 * std::f64::consts::PI / box_length;
        let n = per_axis_count;
        let wavenumbers: Vec<f64> = (0..n)
            .map(|m| {
                if m <= n / 2 - 1 {
                    base * m as f64
                } else if m == n / 2 {
                    0.0 // Nyquist dropped from derivatives
                } else {
                    base * (m as f64 - n as f64)
                }
            })
            .collect();
        Ok(Self {
            per_axis_count,
            box_length,
            dim,
            fft_fwd,
            fft_inv,
            wavenumbers,
        })
    }

    pub fn cell_count(&self) -> usize {
        match self.dim {
            SpatialDim::One => self.per_axis_count,
            SpatialDim::Three => self.per_axis_count.pow(3),
        }
    }

    pub fn axes(&self) -> usize {
        match self.dim {
            SpatialDim::One => 1,
            SpatialDim::Three => 3,
        }
    }

    pub fn cell_volume(&self) -> f64 {
        let h = self.box_length / self.per_axis_count as f64;
        match self.dim {
            SpatialDim::One => h,
            SpatialDim::Three => h * h * h,
        }
    }

    /// Cell coordinates (resolved axes only; zeros elsewhere).
    pub fn cell_position(&self, cell: usize) -> [f64; 3] {
        let h = self.box_length / self.per_axis_count as f64;
        match self.dim {
            SpatialDim::One => [cell as f64 * h, 0.0, 0.0],
            SpatialDim::Three => {
                let n = self.per_axis_count;
                let ix = cell / (n * n);
                let iy = (cell / n) % n;
                let iz = cell % n;
                [ix as f64 * h, iy as f64 * h, iz as f64 * h]
            }
        }
    }

    /// Forward transform to Fourier coefficients (normalised so that
    /// `f(x) = sum fhat_m exp(i k_m . x)`).
    pub fn forward(&self, field: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut data);
        data
    }

    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        let n = self.per_axis_count;
        match self.dim {
            SpatialDim::One => self.fft_fwd.process(data),
            SpatialDim::Three => {
                // z lines are contiguous.
                for line in data.chunks_exact_mut(n) {
                    self.fft_fwd.process(line);
                }
                let mut scratch = vec![Complex64::new(0.0, 0.0); n];
                for ix in 0..n {
                    for iz in 0..n {
                        for iy in 0..n {
                            scratch[iy] = data[(ix * n + iy) * n + iz];
                        }
                        self.fft_fwd.process(&mut scratch);
                        for iy in 0..n {
                            data[(ix * n + iy) * n + iz] = scratch[iy];
                        }
                    }
                }
                for iy in 0..n {
                    for iz in 0..n {
                        for ix in 0..n {
                            scratch[ix] = data[(ix * n + iy) * n + iz];
                        }
                        self.fft_fwd.process(&mut scratch);
                        for ix in 0..n {
                            data[(ix * n + iy) * n + iz] = scratch[ix];
                        }
                    }
                }
            }
        }
        let scale = 1.0 / self.cell_count() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        self.inverse_in_place(&mut data);
        data.iter().map(|c| c.re).collect()
    }

    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        let n = self.per_axis_count;
        match self.dim {
            SpatialDim::One => self.fft_inv.process(data),
            SpatialDim::Three => {
                for line in data.chunks_exact_mut(n) {
                    self.fft_inv.process(line);
                }
                let mut scratch = vec![Complex64::new(0.0, 0.0); n];
                for ix in 0..n {
                    for iz in 0..n {
                        for iy in 0..n {
                            scratch[iy] = data[(ix * n + iy) * n + iz];
                        }
                        self.fft_inv.process(&mut scratch);
                        for iy in 0..n {
                            data[(ix * n + iy) * n + iz] = scratch[iy];
                        }
                    }
                }
                for iy in 0..n {
                    for iz in 0..n {
                        for ix in 0..n {
                            scratch[ix] = data[(ix * n + iy) * n + iz];
                        }
                        self.fft_inv.process(&mut scratch);
                        for ix in 0..n {
                            data[(ix * n + iy) * n + iz] = scratch[ix];
                        }
                    }
                }
            }
        }
    }

    /// Per-cell wavenumber vector of a flattened Fourier index.
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        match self.dim {
            SpatialDim::One => [self.wavenumbers[idx], 0.0, 0.0],
            SpatialDim::Three => {
                let n = self.per_axis_count;
                let ix = idx / (n * n);
                let iy = (idx / n) % n;
                let iz = idx % n;
                [
                    self.wavenumbers[ix],
                    self.wavenumbers[iy],
                    self.wavenumbers[iz],
                ]
            }
        }
    }

    pub fn mean(&self, field: &[f64]) -> f64 {
        field.iter().sum::<f64>() / field.len() as f64
    }

    /// Discrete L2 norm with the cell volume.
    pub fn l2_norm(&self, field: &[f64]) -> f64 {
        (field.iter().map(|v| v * v).sum::<f64>() * self.cell_volume()).sqrt()
    }

    /// Spectral partial derivative along a resolved axis.
    pub fn derivative(&self, field: &[f64], axis: usize) -> Vec<f64> {
        let mut coeffs = self.forward(field);
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let k = self.wavevector(idx)[axis];
            *c *= Complex64::new(0.0, k);
        }
        self.inverse(&coeffs)
    }

    pub fn gradient(&self, field: &[f64]) -> [Vec<f64>; 3] {
        let coeffs = self.forward(field);
        let mut out: [Vec<f64>; 3] = [
            vec![0.0; field.len()],
            vec![0.0; field.len()],
            vec![0.0; field.len()],
        ];
        for (axis, out_axis) in out.iter_mut().enumerate().take(self.axes()) {
            let mut c = coeffs.clone();
            for (idx, v) in c.iter_mut().enumerate() {
                let k = self.wavevector(idx)[axis];
                *v *= Complex64::new(0.0, k);
            }
            *out_axis = self.inverse(&c);
        }
        out
    }

    /// Solve `-laplace(phi) = a` for zero-mean `a`; `phi` zero-mean.
    pub fn poisson_solve(&self, a: &[f64]) -> Result<Vec<f64>> {
        // Root-mean-square density sets the neutrality scale.
        let rms = (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt();
        let mean = self.mean(a);
        if mean.abs() > TOL_CONS * rms.max(1e-12) {
            return Err(Error::InvalidParameter(format!(
                "Poisson right-hand side has nonzero mean {mean:.3e}; no periodic solution (neutrality violated)"
            )));
        }
        let mut coeffs = self.forward(a);
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let k = self.wavevector(idx);
            let ksq = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if ksq == 0.0 {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c /= ksq;
            }
        }
        Ok(self.inverse(&coeffs))
    }

    /// Divergence of a vector field.
    pub fn divergence(&self, u: &[Vec<f64>; 3]) -> Vec<f64> {
        let mut out = vec![0.0; u[0].len()];
        for axis in 0..self.axes() {
            let d = self.derivative(&u[axis], axis);
            for (o, v) in out.iter_mut().zip(d) {
                *o += v;
            }
        }
        out
    }

    /// Leray projection onto divergence-free fields: `u - grad
    /// laplace^{-1} div u`; the zero mode is untouched.
    pub fn leray_project(&self, u: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
        let coeffs: Vec<Vec<Complex64>> = (0..3).map(|a| self.forward(&u[a])).collect();
        let n_cells = u[0].len();
        let mut out_coeffs = coeffs.clone();
        for idx in 0..n_cells {
            let k = self.wavevector(idx);
            let ksq = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if ksq == 0.0 {
                continue;
            }
            let kdotu = k[0] * coeffs[0][idx] + k[1] * coeffs[1][idx] + k[2] * coeffs[2][idx];
            for axis in 0..3 {
                out_coeffs[axis][idx] -= k[axis] * kdotu / ksq;
            }
        }
        [
            self.inverse(&out_coeffs[0]),
            self.inverse(&out_coeffs[1]),
            self.inverse(&out_coeffs[2]),
        ]
    }

    /// Evaluate a field spectrally at an arbitrary (periodically wrapped)
    /// point, together with gradient and Hessian. Used by the
    /// characteristics tracer.
    pub fn eval_with_derivatives(
        &self,
        coeffs: &[Complex64],
        x: [f64; 3],
    ) -> (f64, [f64; 3], [[f64; 3]; 3]) {
        let mut value = 0.0;
        let mut grad = [0.0; 3];
        let mut hess = [[0.0; 3]; 3];
        for (idx, c) in coeffs.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let k = self.wavevector(idx);
            let phase = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
            let e = Complex64::from_polar(1.0, phase);
            let term = c * e;
            value += term.re;
            for a in 0..3 {
                grad[a] += (term * Complex64::new(0.0, k[a])).re;
                for b in 0..3 {
                    hess[a][b] -= (term * k[a] * k[b]).re;
                }
            }
        }
        (value, grad, hess)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_single_mode() {
        let grid = SpatialGrid::new(64, 2.0 * std::f64::consts::PI, SpatialDim::One).unwrap();
        let a: Vec<f64> = (0..64)
            .map(|j| (grid.cell_position(j)[0]).sin())
            .collect();
        let phi = grid.poisson_solve(&a).unwrap();
        for (p, x) in phi.iter().zip(a.iter()) {
            assert!((p - x).abs() < 1e-12);
        }
        // Residual check: -laplace(phi) = a.
        let lap = {
            let d1 = grid.derivative(&phi, 0);
            grid.derivative(&d1, 0)
        };
        let resid: Vec<f64> = lap.iter().zip(&a).map(|(l, av)| -l - av).collect();
        assert!(grid.l2_norm(&resid) <= 1e-12 * grid.l2_norm(&a));

        let zero = vec![0.0; 64];
        let phi0 = grid.poisson_solve(&zero).unwrap();
        assert!(grid.l2_norm(&phi0) == 0.0);

        let ones = vec![1.0; 64];
        assert!(grid.poisson_solve(&ones).is_err());
    }

    #[test]
    fn leray_annihilates_gradients_and_is_idempotent() {
        let grid = SpatialGrid::new(16, 2.0 * std::f64::consts::PI, SpatialDim::Three).unwrap();
        let n = grid.cell_count();
        // Gradient field of psi = sin(x) cos(y).
        let psi: Vec<f64> = (0..n)
            .map(|c| {
                let p = grid.cell_position(c);
                p[0].sin() * p[1].cos()
            })
            .collect();
        let g = grid.gradient(&psi);
        let projected = grid.leray_project(&g);
        for axis in 0..3 {
            assert!(grid.l2_norm(&projected[axis]) < 1e-12);
        }
        // Shear mode is untouched; double application is identity.
        let shear: [Vec<f64>; 3] = [
            (0..n).map(|c| grid.cell_position(c)[1].sin()).collect(),
            vec![0.0; n],
            vec![0.0; n],
        ];
        let once = grid.leray_project(&shear);
        let twice = grid.leray_project(&once);
        for axis in 0..3 {
            for i in 0..n {
                assert!((once[axis][i] - shear[axis][i]).abs() < 1e-12);
                assert!((twice[axis][i] - once[axis][i]).abs() < 1e-12);
            }
        }
        let div = grid.divergence(&once);
        assert!(grid.l2_norm(&div) < 1e-12);
    }

    #[test]
    fn spectral_eval_matches_gridpoints() {
        let grid = SpatialGrid::new(32, 2.0 * std::f64::consts::PI, SpatialDim::One).unwrap();
        let field: Vec<f64> = (0..32)
            .map(|j| {
                let x = grid.cell_position(j)[0];
                0.3 * x.sin() + 0.1 * (2.0 * x).cos()
            })
            .collect();
        let coeffs = grid.forward(&field);
        for j in [0usize, 5, 17] {
            let x = grid.cell_position(j);
            let (val, grad, hess) = grid.eval_with_derivatives(&coeffs, x);
            assert!((val - field[j]).abs() < 1e-12);
            let expect_grad = 0.3 * x[0].cos() - 0.2 * (2.0 * x[0]).sin();
            assert!((grad[0] - expect_grad).abs() < 1e-10);
            let expect_hess = -0.3 * x[0].sin() - 0.4 * (2.0 * x[0]).cos();
            assert!((hess[0][0] - expect_hess).abs() < 1e-10);
        }
    }
}
