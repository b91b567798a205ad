//! Backward characteristics of the transport-field flow,
//! `dX/dtau = V / eps`, `dV/dtau = -grad phi(tau, X)`, integrated by RK4
//! together with the variational system for `dX/dv` so the Jacobian
//! bracket of the trace can be checked pointwise.

use crate::error::{Error, Result};
use crate::spatial::SpatialGrid;
use num_complex::Complex64;

/// Potential supplied to the tracer: absent, frozen in time, or a
/// recorded history (linear interpolation in time, spectral in space).
pub enum PotentialField<'a> {
    Zero,
    Frozen {
        grid: &'a SpatialGrid,
        coeffs: Vec<Complex64>,
    },
    Recorded {
        grid: &'a SpatialGrid,
        times: Vec<f64>,
        coeffs: Vec<Vec<Complex64>>,
    },
}

impl<'a> PotentialField<'a> {
    pub fn frozen(grid: &'a SpatialGrid, phi: &[f64]) -> Self {
        Self::Frozen {
            grid,
            coeffs: grid.forward(phi),
        }
    }

    pub fn recorded(grid: &'a SpatialGrid, times: Vec<f64>, phis: &[Vec<f64>]) -> Result<Self> {
        if times.len() != phis.len() || times.len() < 2 {
            return Err(Error::DimensionMismatch(
                "recorded field needs matching times and at least two snapshots".into(),
            ));
        }
        Ok(Self::Recorded {
            grid,
            times,
            coeffs: phis.iter().map(|p| grid.forward(p)).collect(),
        })
    }

    fn grad_hess(&self, t: f64, x: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        match self {
            PotentialField::Zero => ([0.0; 3], [[0.0; 3]; 3]),
            PotentialField::Frozen { grid, coeffs } => {
                let (_, g, h) = grid.eval_with_derivatives(coeffs, wrap(grid, x));
                (g, h)
            }
            PotentialField::Recorded {
                grid,
                times,
                coeffs,
            } => {
                let xw = wrap(grid, x);
                let t_clamped = t.clamp(times[0], *times.last().unwrap());
                let hi = times
                    .iter()
                    .position(|&tt| tt >= t_clamped)
                    .unwrap_or(times.len() - 1)
                    .max(1);
                let lo = hi - 1;
                let w = if times[hi] > times[lo] {
                    (t_clamped - times[lo]) / (times[hi] - times[lo])
                } else {
                    0.0
                };
                let (_, g0, h0) = grid.eval_with_derivatives(&coeffs[lo], xw);
                let (_, g1, h1) = grid.eval_with_derivatives(&coeffs[hi], xw);
                let mut g = [0.0; 3];
                let mut h = [[0.0; 3]; 3];
                for a in 0..3 {
                    g[a] = (1.0 - w) * g0[a] + w * g1[a];
                    for b in 0..3 {
                        h[a][b] = (1.0 - w) * h0[a][b] + w * h1[a][b];
                    }
                }
                (g, h)
            }
        }
    }

    fn box_length(&self) -> Option<f64> {
        match self {
            PotentialField::Zero => None,
            PotentialField::Frozen { grid, .. } => Some(grid.box_length),
            PotentialField::Recorded { grid, .. } => Some(grid.box_length),
        }
    }
}

fn wrap(grid: &SpatialGrid, x: [f64; 3]) -> [f64; 3] {
    let l = grid.box_length;
    [x[0].rem_euclid(l), x[1].rem_euclid(l), x[2].rem_euclid(l)]
}

/// Backward trace through `(t, x, v)` with the Jacobian determinant of
/// `dX/dv` sampled along the way.
#[derive(Clone, Debug)]
pub struct CharacteristicPath {
    /// Sample times, decreasing from `t` to 0.
    pub taus: Vec<f64>,
    pub x: Vec<[f64; 3]>,
    pub v: Vec<[f64; 3]>,
    pub jac_det: Vec<f64>,
}

struct TraceState {
    x: [f64; 3],
    v: [f64; 3],
    /// dX/dv and dV/dv.
    jx: [[f64; 3]; 3],
    jv: [[f64; 3]; 3],
}

fn derivative(field: &PotentialField, eps: f64, tau: f64, s: &TraceState) -> TraceState {
    let (g, h) = field.grad_hess(tau, s.x);
    let mut djx = [[0.0; 3]; 3];
    let mut djv = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            djx[a][b] = s.jv[a][b] / eps;
            let mut acc = 0.0;
            for c in 0..3 {
                acc += h[a][c] * s.jx[c][b];
            }
            djv[a][b] = -acc;
        }
    }
    TraceState {
        x: [s.v[0] / eps, s.v[1] / eps, s.v[2] / eps],
        v: [-g[0], -g[1], -g[2]],
        jx: djx,
        jv: djv,
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn trace_characteristics(
    field: &PotentialField,
    eps: f64,
    t: f64,
    x: [f64; 3],
    v: [f64; 3],
    n_steps: usize,
) -> Result<CharacteristicPath> {
    if !(t >= 0.0) || n_steps == 0 {
        return Err(Error::InvalidParameter(
            "trace needs t >= 0 and at least one step".into(),
        ));
    }
    let dtau = -t / n_steps as f64;
    let mut s = TraceState {
        x,
        v,
        jx: [[0.0; 3]; 3],
        jv: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };
    let mut path = CharacteristicPath {
        taus: vec![t],
        x: vec![store_x(field, x)],
        v: vec![v],
        jac_det: vec![0.0],
    };
    let mut tau = t;
    for step in 0..n_steps {
        let k1 = derivative(field, eps, tau, &s);
        let s2 = advance(&s, &k1, 0.5 * dtau);
        let k2 = derivative(field, eps, tau + 0.5 * dtau, &s2);
        let s3 = advance(&s, &k2, 0.5 * dtau);
        let k3 = derivative(field, eps, tau + 0.5 * dtau, &s3);
        let s4 = advance(&s, &k3, dtau);
        let k4 = derivative(field, eps, tau + dtau, &s4);
        s = combine(&s, [&k1, &k2, &k3, &k4], dtau);
        tau += dtau;
        let jx_norm = s
            .jx
            .iter()
            .flatten()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max);
        let jv_norm = s
            .jv
            .iter()
            .flatten()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max);
        if !jx_norm.is_finite() || !jv_norm.is_finite() || jx_norm.max(jv_norm) > 1e12 {
            return Err(Error::SolveFailure(format!(
                "variational matrix conditioning exploded at step {step} (|dX/dv| ~ {jx_norm:.3e})"
            )));
        }
        path.taus.push(tau);
        path.x.push(store_x(field, s.x));
        path.v.push(s.v);
        path.jac_det.push(det3(&s.jx).abs());
    }
    Ok(path)
}

fn store_x(field: &PotentialField, x: [f64; 3]) -> [f64; 3] {
    match field.box_length() {
        Some(l) => [x[0].rem_euclid(l), x[1].rem_euclid(l), x[2].rem_euclid(l)],
        None => x,
    }
}

fn advance(s: &TraceState, k: &TraceState, h: f64) -> TraceState {
    let mut out = TraceState {
        x: [0.0; 3],
        v: [0.0; 3],
        jx: [[0.0; 3]; 3],
        jv: [[0.0; 3]; 3],
    };
    for a in 0..3 {
        out.x[a] = s.x[a] + h * k.x[a];
        out.v[a] = s.v[a] + h * k.v[a];
        for b in 0..3 {
            out.jx[a][b] = s.jx[a][b] + h * k.jx[a][b];
            out.jv[a][b] = s.jv[a][b] + h * k.jv[a][b];
        }
    }
    out
}

fn combine(s: &TraceState, k: [&TraceState; 4], h: f64) -> TraceState {
    let mut out = TraceState {
        x: [0.0; 3],
        v: [0.0; 3],
        jx: [[0.0; 3]; 3],
        jv: [[0.0; 3]; 3],
    };
    let w = [1.0, 2.0, 2.0, 1.0];
    for a in 0..3 {
        let mut dx = 0.0;
        let mut dv = 0.0;
        for (ki, wi) in k.iter().zip(w) {
            dx += wi * ki.x[a];
            dv += wi * ki.v[a];
        }
        out.x[a] = s.x[a] + h / 6.0 * dx;
        out.v[a] = s.v[a] + h / 6.0 * dv;
        for b in 0..3 {
            let mut djx = 0.0;
            let mut djv = 0.0;
            for (ki, wi) in k.iter().zip(w) {
                djx += wi * ki.jx[a][b];
                djv += wi * ki.jv[a][b];
            }
            out.jx[a][b] = s.jx[a][b] + h / 6.0 * djx;
            out.jv[a][b] = s.jv[a][b] + h / 6.0 * djv;
        }
    }
    out
}

/// The factor-2 bracket `(1/2)|t - tau|^3 / eps^3 <= |det dX/dv|
/// <= 2 |t - tau|^3 / eps^3`, skipped at `tau = t` where both sides
/// vanish.
pub fn jacobian_bracket_holds(path: &CharacteristicPath, eps: f64, t: f64) -> bool {
    for (tau, det) in path.taus.iter().zip(&path.jac_det) {
        let gap = (t - tau).abs();
        if gap == 0.0 {
            continue;
        }
        let free = gap.powi(3) / eps.powi(3);
        if *det < 0.5 * free || *det > 2.0 * free {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{SpatialDim, SpatialGrid};

    #[test]
    fn free_streaming_is_exact() {
        let field = PotentialField::Zero;
        let eps = 0.5;
        let t = 0.8;
        let x = [1.0, 2.0, 3.0];
        let v = [0.3, -0.2, 0.1];
        let path = trace_characteristics(&field, eps, t, x, v, 32).unwrap();
        for (i, tau) in path.taus.iter().enumerate() {
            for a in 0..3 {
                let expect = x[a] - v[a] * (t - tau) / eps;
                assert!((path.x[i][a] - expect).abs() < 1e-12);
                assert!((path.v[i][a] - v[a]).abs() < 1e-15);
            }
            let expect_det = ((t - tau) / eps).powi(3);
            assert!((path.jac_det[i] - expect_det).abs() <= 1e-12 * expect_det.max(1e-12));
        }
        assert!(jacobian_bracket_holds(&path, eps, t));
    }

    #[test]
    fn small_frozen_field_keeps_bracket() {
        let grid = SpatialGrid::new(32, 2.0 * std::f64::consts::PI, SpatialDim::One).unwrap();
        let n = grid.cell_count();
        // |hess phi| <= 1e-2.
        let phi: Vec<f64> = (0..n)
            .map(|j| 1e-2 * grid.cell_position(j)[0].sin())
            .collect();
        let field = PotentialField::frozen(&grid, &phi);
        for eps in [1.0f64, 0.5, 0.25] {
            let t = eps.sqrt() * 0.1;
            let path = trace_characteristics(
                &field,
                eps,
                t,
                [0.7, 0.0, 0.0],
                [1.0, 0.5, -0.2],
                64,
            )
            .unwrap();
            assert!(jacobian_bracket_holds(&path, eps, t), "eps = {eps}");
        }
    }
}
