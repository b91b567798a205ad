//! Kinetic-vs-fluid comparison: sup-in-time L2 errors of the moment
//! trajectories against the NSFP reference, the fitted order in the
//! Knudsen number, and the time-integrated micro energy.

use crate::error::{Error, Result};
use crate::nsfp::FluidRun;
use crate::solver::RecordedRun;
use crate::spatial::SpatialGrid;

#[derive(Clone, Copy, Debug)]
pub struct HydroLimitRow {
    pub eps: f64,
    pub err_rho: f64,
    pub err_u: f64,
    pub err_theta: f64,
    pub err_grad_phi: f64,
    pub err_total: f64,
}

#[derive(Clone, Debug)]
pub struct HydroLimitTable {
    pub rows: Vec<HydroLimitRow>,
    /// Least-squares slope of `ln err_total` against `ln eps`.
    pub fitted_order: f64,
}

/// Sup-over-recorded-times L2_x errors of the kinetic moments against
/// the fluid reference, for each run in the eps list.
pub fn hydro_limit_error(
    kinetic_runs: &[&RecordedRun],
    fluid: &FluidRun,
    grid_x: &SpatialGrid,
) -> Result<HydroLimitTable> {
    if kinetic_runs.is_empty() {
        return Err(Error::Diagnostics("empty eps list".into()));
    }
    let nc = fluid.records[0].rho.len();
    let mut rows = Vec::new();
    for run in kinetic_runs {
        if run.records[0].a.len() != nc {
            return Err(Error::DimensionMismatch(
                "kinetic and fluid runs use different spatial grids".into(),
            ));
        }
        if run.records.len() != fluid.records.len() {
            return Err(Error::DimensionMismatch(format!(
                "record counts differ ({} kinetic vs {} fluid)",
                run.records.len(),
                fluid.records.len()
            )));
        }
        let mut err_rho = 0.0f64;
        let mut err_u = 0.0f64;
        let mut err_theta = 0.0f64;
        let mut err_phi = 0.0f64;
        for (kin, fl) in run.records.iter().zip(&fluid.records) {
            if (kin.time - fl.time).abs() > 1e-9 * (1.0 + fl.time.abs()) {
                return Err(Error::DimensionMismatch(format!(
                    "record times differ ({} vs {})",
                    kin.time, fl.time
                )));
            }
            let d_rho: Vec<f64> = kin.a.iter().zip(&fl.rho).map(|(a, r)| a - r).collect();
            err_rho = err_rho.max(grid_x.l2_norm(&d_rho));
            let mut u_sq = vec![0.0; nc];
            for axis in 0..3 {
                for i in 0..nc {
                    let d = kin.b[axis][i] - fl.u[axis][i];
                    u_sq[i] += d * d;
                }
            }
            let u_norm = (u_sq.iter().sum::<f64>() * grid_x.cell_volume()).sqrt();
            err_u = err_u.max(u_norm);
            let d_theta: Vec<f64> = kin.c.iter().zip(&fl.theta).map(|(c, t)| c - t).collect();
            err_theta = err_theta.max(grid_x.l2_norm(&d_theta));
            let gk = grid_x.gradient(&kin.phi);
            let gf = grid_x.gradient(&fl.phi);
            let mut p_sq = 0.0;
            for axis in 0..grid_x.axes() {
                for i in 0..nc {
                    let d = gk[axis][i] - gf[axis][i];
                    p_sq += d * d;
                }
            }
            err_phi = err_phi.max((p_sq * grid_x.cell_volume()).sqrt());
        }
        let total =
            (err_rho * err_rho + err_u * err_u + err_theta * err_theta + err_phi * err_phi)
                .sqrt();
        rows.push(HydroLimitRow {
            eps: run.eps,
            err_rho,
            err_u,
            err_theta,
            err_grad_phi: err_phi,
            err_total: total,
        });
    }
    // Fit the order on runs with nonzero error (self-comparisons yield
    // exact zeros and carry no slope information).
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.err_total > 0.0)
        .map(|r| (r.eps.ln(), r.err_total.ln()))
        .collect();
    let fitted_order = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        0.0
    };
    Ok(HydroLimitTable { rows, fitted_order })
}

/// Trapezoidal time integral of the recorded squared micro norm,
/// `(eps, int_0^T |(I-P) f|^2 dt)`.
pub fn micro_part_smallness(run: &RecordedRun) -> (f64, f64) {
    let mut acc = 0.0;
    for w in run.records.windows(2) {
        acc += 0.5 * (w[1].time - w[0].time) * (w[0].micro_l2_sq + w[1].micro_l2_sq);
    }
    (run.eps, acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nsfp::{FluidRecord, FluidRun};
    use crate::operator::bgk_surrogate;
    use crate::solver::{run_scenario, KineticState, Scheme, SolverConfig, SolverContext};
    use crate::spatial::SpatialDim;
    use crate::velocity::VelocityGrid;

    #[test]
    fn self_comparison_is_zero() {
        let gx = SpatialGrid::new(16, 2.0 * std::f64::consts::PI, SpatialDim::One).unwrap();
        let gv = VelocityGrid::build_with_tolerance(8, 6.0, 2e-2).unwrap();
        let op = bgk_surrogate(1.0, &gv).unwrap();
        let ctx = SolverContext {
            grid_x: &gx,
            grid_v: &gv,
            op: &op,
            model: None,
            angular: None,
        };
        let nc = gx.cell_count();
        let a: Vec<f64> = (0..nc).map(|j| 1e-3 * gx.cell_position(j)[0].sin()).collect();
        let state =
            KineticState::from_macro(0.5, &ctx, &a, &vec![[0.0; 3]; nc], &vec![0.0; nc])
                .unwrap();
        let run = run_scenario(
            state,
            &SolverConfig {
                dt: 1e-3,
                scheme: Scheme::Strang,
                t_end: 0.05,
                record_every: 10,
                include_gamma: false,
                snapshot_stride: None,
            },
            &ctx,
        )
        .unwrap();
        // Fluid run fabricated from the kinetic moments themselves.
        let fluid = FluidRun {
            records: run
                .records
                .iter()
                .map(|r| FluidRecord {
                    time: r.time,
                    rho: r.a.clone(),
                    theta: r.c.clone(),
                    u: r.b.clone(),
                    phi: r.phi.clone(),
                })
                .collect(),
            dt: run.dt,
            record_dt: run.record_dt,
            max_constraint_residual: 0.0,
            max_divergence: 0.0,
        };
        let table = hydro_limit_error(&[&run], &fluid, &gx).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert!(table.rows[0].err_total == 0.0);
    }

    #[test]
    fn micro_integral_zero_for_macro_only_transportless_run() {
        let gx = SpatialGrid::new(16, 2.0 * std::f64::consts::PI, SpatialDim::One).unwrap();
        let gv = VelocityGrid::build_with_tolerance(8, 6.0, 2e-2).unwrap();
        let op = bgk_surrogate(1.0, &gv).unwrap();
        let ctx = SolverContext {
            grid_x: &gx,
            grid_v: &gv,
            op: &op,
            model: None,
            angular: None,
        };
        // Spatially constant (hence transport-free) macro data.
        let nc = gx.cell_count();
        let state = KineticState::from_macro(
            0.5,
            &ctx,
            &vec![0.0; nc],
            &vec![[1e-3, 0.0, 0.0]; nc],
            &vec![0.0; nc],
        )
        .unwrap();
        let run = run_scenario(
            state,
            &SolverConfig {
                dt: 1e-3,
                scheme: Scheme::Strang,
                t_end: 0.05,
                record_every: 10,
                include_gamma: false,
                snapshot_stride: None,
            },
            &ctx,
        )
        .unwrap();
        let (eps, integral) = micro_part_smallness(&run);
        assert_eq!(eps, 0.5);
        assert!(integral < 1e-24, "integral {integral:.3e}");
    }
}
