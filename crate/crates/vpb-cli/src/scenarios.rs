//! The experiment drivers behind each subcommand. Every scenario writes
//! its artifacts through the sink and returns whether its acceptance
//! gates (if any) passed.

use crate::artifacts::ArtifactSink;
use crate::config::ScenarioConfig;
use anyhow::{anyhow, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use vpb_lab::diagnostics::{
    hydro_limit_error, jacobian_bracket_holds, micro_part_smallness, nu_tilde_bound_check,
    trace_characteristics, NuTildeSamples, PotentialField,
};
use vpb_lab::nsfp::{
    compute_transport_coefficients, nsfp_run, FluidRunConfig, FluidState, TransportCoefficients,
};
use vpb_lab::operator::{assemble_linearized_with_radius, bgk_surrogate, kernel_audit};
use vpb_lab::rates::fit_decay_exponent;
use vpb_lab::solver::{
    conservation_report, run_scenario, KineticState, RecordedRun, Scheme, SolverConfig,
    SolverContext,
};
use vpb_lab::spatial::{SpatialDim, SpatialGrid};
use vpb_lab::spectral::{
    assemble_mode_operator, evolve_mode, isotropic_macro_initial, mode_energy,
    synthesize_whole_space_norms, RadialKGrid,
};
use vpb_lab::velocity::{AngularQuadrature, VelocityGrid};
use vpb_lab::{LinearizedOperator, PotentialModel, WeightSpec};

pub struct Outcome {
    pub gates_passed: bool,
    pub summary: Vec<String>,
}

fn model_from(cfg: &ScenarioConfig) -> Result<PotentialModel> {
    Ok(PotentialModel::new(
        cfg.model.gamma,
        cfg.model.angular_amplitude,
    )?)
}

fn velocity_grid_from(cfg: &ScenarioConfig) -> Result<VelocityGrid> {
    Ok(match cfg.velocity_grid.moment_tol {
        Some(tol) => VelocityGrid::build_with_tolerance(
            cfg.velocity_grid.per_axis,
            cfg.velocity_grid.radius,
            tol,
        )?,
        None => VelocityGrid::build(cfg.velocity_grid.per_axis, cfg.velocity_grid.radius)?,
    })
}

fn angular_from(cfg: &ScenarioConfig) -> Result<AngularQuadrature> {
    Ok(AngularQuadrature::product(
        cfg.angular.polar,
        cfg.angular.azimuth,
    )?)
}

fn spatial_from(cfg: &ScenarioConfig) -> Result<SpatialGrid> {
    let dim = if cfg.spatial_grid.dim == 1 {
        SpatialDim::One
    } else {
        SpatialDim::Three
    };
    Ok(SpatialGrid::new(
        cfg.spatial_grid.per_axis,
        cfg.spatial_grid.box_length,
        dim,
    )?)
}

fn operator_from(
    cfg: &ScenarioConfig,
    model: &PotentialModel,
    grid: &VelocityGrid,
    angular: &AngularQuadrature,
) -> Result<LinearizedOperator> {
    Ok(if cfg.solver.collision_mode == "bgk" {
        bgk_surrogate(cfg.solver.bgk_nu0, grid)?
    } else {
        match cfg.velocity_grid.active_radius {
            Some(r) => assemble_linearized_with_radius(model, grid, angular, r)?,
            None => vpb_lab::operator::assemble_linearized(model, grid, angular)?,
        }
    })
}

/// Macro initial fields for the configured preset.
fn initial_fields(
    cfg: &ScenarioConfig,
    grid_x: &SpatialGrid,
) -> (Vec<f64>, Vec<[f64; 3]>, Vec<f64>) {
    let nc = grid_x.cell_count();
    let amp = cfg.initial.amplitude;
    let base = 2.0 * std::f64::consts::PI / grid_x.box_length;
    match cfg.initial.preset.as_str() {
        "zero" => (vec![0.0; nc], vec![[0.0; 3]; nc], vec![0.0; nc]),
        "shear" => {
            let b: Vec<[f64; 3]> = (0..nc)
                .map(|j| [0.0, amp * (base * grid_x.cell_position(j)[0]).sin(), 0.0])
                .collect();
            (vec![0.0; nc], b, vec![0.0; nc])
        }
        "well_prepared" => well_prepared_fields(grid_x, amp),
        // "macro_sine": density and temperature waves plus a shear lane.
        _ => {
            let a: Vec<f64> = (0..nc)
                .map(|j| amp * (base * grid_x.cell_position(j)[0]).sin())
                .collect();
            let b: Vec<[f64; 3]> = (0..nc)
                .map(|j| [0.0, 0.5 * amp * (base * grid_x.cell_position(j)[0]).sin(), 0.0])
                .collect();
            let c: Vec<f64> = (0..nc)
                .map(|j| -0.5 * amp * (base * grid_x.cell_position(j)[0]).cos())
                .collect();
            (a, b, c)
        }
    }
}

/// Well-prepared data: divergence-free shear velocity plus a
/// temperature wave whose density partner satisfies the elliptic
/// constraint, so the stiff force cancels at leading order and the
/// kinetic runs sit on the fluid manifold from the start.
fn well_prepared_fields(grid_x: &SpatialGrid, amp: f64) -> (Vec<f64>, Vec<[f64; 3]>, Vec<f64>) {
    let nc = grid_x.cell_count();
    let base = 2.0 * std::f64::consts::PI / grid_x.box_length;
    // theta = amp cos(kx); constraint at |k| = base: rho_hat =
    // -theta_hat k^2/(1+k^2).
    let ksq = base * base;
    let rho_factor = -ksq / (1.0 + ksq);
    let mut a = vec![0.0; nc];
    let mut c = vec![0.0; nc];
    let mut b = vec![[0.0; 3]; nc];
    for j in 0..nc {
        let x = grid_x.cell_position(j)[0];
        c[j] = amp * (base * x).cos();
        a[j] = rho_factor * c[j];
        b[j][1] = amp * (base * x).sin();
    }
    (a, b, c)
}

fn scheme_from(cfg: &ScenarioConfig) -> Scheme {
    if cfg.solver.scheme == "lie" {
        Scheme::Lie
    } else {
        Scheme::Strang
    }
}

// ---------------------------------------------------------------------
// operator-audit
// ---------------------------------------------------------------------

pub fn operator_audit(cfg: &ScenarioConfig, sink: &mut ArtifactSink) -> Result<Outcome> {
    let model = model_from(cfg)?;
    let angular = angular_from(cfg)?;
    let grid = velocity_grid_from(cfg)?;
    let op = operator_from(cfg, &model, &grid, &angular)?;
    let audit = kernel_audit(&op, &grid)?;
    let nu_max = op.nu.iter().cloned().fold(0.0f64, f64::max);

    // Random-profile semidefiniteness probe.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut min_quadratic = f64::INFINITY;
    for _ in 0..100 {
        let f: Vec<f64> = (0..grid.node_count())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let lf = op.apply_l(&grid, &f);
        min_quadratic = min_quadratic.min(grid.inner(&lf, &f) / grid.inner(&f, &f));
    }

    // Refinement stability of the gap estimate.
    let fine_grid = VelocityGrid::build(cfg.audit.refine_to, cfg.velocity_grid.radius)?;
    let fine_op = operator_from(cfg, &model, &fine_grid, &angular)?;
    let gap_shift = (op.sigma0_estimate - fine_op.sigma0_estimate).abs()
        / op.sigma0_estimate.abs().max(1e-300);

    let gate_sym = op.symmetry_defect <= op.tol_sym_abs();
    let gate_kernel = audit.kernel_dimension_is_five;
    let gate_gap = op.sigma0_estimate > 0.0 && gap_shift <= 0.20;
    let gate_psd = min_quadratic >= -1e-9;
    let passed = gate_sym && gate_kernel && gate_gap && gate_psd;

    let entries = vec![
        ("grid".into(), format!("{}x{}^3, R = {}", grid.per_axis_count, grid.per_axis_count, grid.truncation_radius)),
        ("gamma".into(), format!("{}", model.gamma)),
        ("symmetry_defect".into(), format!("{:.6e}", op.symmetry_defect)),
        ("symmetry_tolerance".into(), format!("{:.6e}", op.tol_sym_abs())),
        ("kernel_defect".into(), format!("{:.6e}", op.kernel_defect)),
        ("kernel_dimension".into(), if gate_kernel { "5".into() } else { "not 5".to_string() }),
        ("lambda_5_bound".into(), format!("{:.6e}", audit.lambda_5_bound)),
        ("lambda_6".into(), format!("{:.6e}", audit.lambda_6)),
        ("kernel_threshold".into(), format!("{:.6e}", audit.threshold)),
        ("nu_max".into(), format!("{:.6e}", nu_max)),
        ("sigma0_estimate".into(), format!("{:.6e}", op.sigma0_estimate)),
        ("sigma0_refined".into(), format!("{:.6e}", fine_op.sigma0_estimate)),
        ("sigma0_relative_shift".into(), format!("{:.4e}", gap_shift)),
        ("min_random_quadratic_form".into(), format!("{:.4e}", min_quadratic)),
        ("gates_passed".into(), format!("{passed}")),
    ];
    sink.write_report("operator_audit.txt", &entries)?;
    Ok(Outcome {
        gates_passed: passed,
        summary: vec![
            format!("kernel dimension five: {gate_kernel}"),
            format!(
                "sigma0 = {:.4} (refined {:.4}, shift {:.1}%)",
                op.sigma0_estimate,
                fine_op.sigma0_estimate,
                100.0 * gap_shift
            ),
        ],
    })
}

// ---------------------------------------------------------------------
// linear-decay
// ---------------------------------------------------------------------

pub fn linear_decay(cfg: &ScenarioConfig, sink: &mut ArtifactSink) -> Result<Outcome> {
    let model = model_from(cfg)?;
    let angular = angular_from(cfg)?;
    let lin = &cfg.linear;
    let grid = VelocityGrid::build_with_tolerance(
        lin.reduced_per_axis,
        lin.reduced_radius,
        lin.reduced_tol,
    )?;
    let op = if cfg.solver.collision_mode == "bgk" {
        bgk_surrogate(cfg.solver.bgk_nu0, &grid)?
    } else {
        vpb_lab::operator::assemble_linearized(&model, &grid, &angular)?
    };
    let kgrid = RadialKGrid::log_spaced(lin.k_min, lin.k_max, lin.k_count)?;
    let n_t = (lin.t_end / lin.dt_record).round() as usize;
    let t_grid: Vec<f64> = (0..=n_t).map(|i| i as f64 * lin.dt_record).collect();
    let eps = lin.eps;
    let decay = synthesize_whole_space_norms(
        &kgrid,
        isotropic_macro_initial(&grid, lin.k_cut),
        |k| assemble_mode_operator(&op, &grid, [k, 0.0, 0.0], eps),
        &op,
        &grid,
        &t_grid,
    )?;

    let mut rows = Vec::with_capacity(t_grid.len());
    for (i, &t) in t_grid.iter().enumerate() {
        rows.push(vec![
            t,
            decay.l2.values[i],
            decay.grad_x.values[i],
            decay.potential.values[i],
        ]);
    }
    sink.write_timeseries("decay.csv", &["t", "l2_sq", "grad_x_sq", "grad_phi_sq"], &rows)?;

    // Per-step dissipation margin over a fresh mode sweep.
    let worst_energy_increase = mode_energy_sweep(&op, &grid, eps, lin.mode_count)?;

    let fit_l2 = fit_decay_exponent(&decay.l2.times, &decay.l2.sqrt_values(), lin.fit_window)?;
    let fit_grad =
        fit_decay_exponent(&decay.grad_x.times, &decay.grad_x.sqrt_values(), lin.fit_window)?;
    let fit_pot = fit_decay_exponent(
        &decay.potential.times,
        &decay.potential.sqrt_values(),
        lin.fit_window,
    )?;

    let gate_l2 = fit_l2.exponent >= -0.9 && fit_l2.exponent <= -0.6;
    let gate_grad = fit_grad.exponent >= -1.45 && fit_grad.exponent <= -1.05;
    let gate_pot = fit_pot.exponent <= -1.0;
    let gate_mono = worst_energy_increase <= 1e-8;
    let passed = gate_l2 && gate_grad && gate_pot && gate_mono;

    let mut entries = vec![
        ("reduced_grid".into(), format!("{}^3, R = {}", grid.per_axis_count, grid.truncation_radius)),
        ("eps".into(), format!("{eps}")),
        ("k_nodes".into(), format!("{}", kgrid.nodes.len())),
        ("fit_window".into(), format!("[{}, {}]", lin.fit_window[0], lin.fit_window[1])),
        ("l2_exponent".into(), format!("{:.6}", fit_l2.exponent)),
        ("l2_residual".into(), format!("{:.3e}", fit_l2.residual)),
        ("grad_x_exponent".into(), format!("{:.6}", fit_grad.exponent)),
        ("grad_x_residual".into(), format!("{:.3e}", fit_grad.residual)),
        ("grad_phi_exponent".into(), format!("{:.6}", fit_pot.exponent)),
        ("grad_phi_residual".into(), format!("{:.3e}", fit_pot.residual)),
        ("mode_sweep_count".into(), format!("{}", lin.mode_count)),
        ("worst_energy_increase_per_step".into(), format!("{worst_energy_increase:.3e}")),
        ("gates_passed".into(), format!("{passed}")),
    ];
    for (i, wmsg) in decay.warnings.iter().enumerate() {
        entries.push((format!("warning_{i}"), wmsg.clone()));
    }
    sink.write_report("linear_decay.txt", &entries)?;
    Ok(Outcome {
        gates_passed: passed,
        summary: vec![format!(
            "exponents: L2 {:.3} (target -0.75), grad {:.3} (target -1.25), field {:.3} (<= -1)",
            fit_l2.exponent, fit_grad.exponent, fit_pot.exponent
        )],
    })
}

// ---------------------------------------------------------------------
// nonlinear-run
// ---------------------------------------------------------------------

fn kinetic_run(
    cfg: &ScenarioConfig,
    eps: f64,
    grid_x: &SpatialGrid,
    grid_v: &VelocityGrid,
    op: &LinearizedOperator,
    model: &PotentialModel,
    angular: &AngularQuadrature,
) -> Result<RecordedRun> {
    let ctx = SolverContext {
        grid_x,
        grid_v,
        op,
        model: Some(model),
        angular: Some(angular),
    };
    let (a, b, c) = initial_fields(cfg, grid_x);
    let state = if cfg.initial.preset == "well_prepared" {
        let kappa = if op.is_bgk() {
            1.0 / cfg.solver.bgk_nu0
        } else {
            compute_transport_coefficients(op, grid_v)?.kappa
        };
        KineticState::from_macro_prepared(eps, &ctx, &a, &b, &c, kappa)?
    } else {
        KineticState::from_macro(eps, &ctx, &a, &b, &c)?
    };
    let config = SolverConfig {
        dt: cfg.solver.dt,
        scheme: scheme_from(cfg),
        t_end: cfg.solver.t_end,
        record_every: cfg.solver.record_every,
        include_gamma: cfg.solver.include_gamma,
        snapshot_stride: None,
    };
    Ok(run_scenario(state, &config, &ctx)?)
}

pub fn nonlinear_run(cfg: &ScenarioConfig, sink: &mut ArtifactSink) -> Result<Outcome> {
    let model = model_from(cfg)?;
    let angular = angular_from(cfg)?;
    let grid_v = velocity_grid_from(cfg)?;
    let grid_x = spatial_from(cfg)?;
    let op = operator_from(cfg, &model, &grid_v, &angular)?;
    let run = kinetic_run(cfg, cfg.solver.eps, &grid_x, &grid_v, &op, &model, &angular)?;
    let report = conservation_report(&run, &grid_x);

    let mut rows = Vec::new();
    for (i, rec) in run.records.iter().enumerate() {
        rows.push(vec![
            rec.time,
            report.mass[i],
            report.momentum[0][i],
            report.momentum[1][i],
            report.momentum[2][i],
            report.thermal_energy[i],
            report.field_energy[i],
            report.total_energy[i],
            rec.micro_l2_sq,
        ]);
    }
    sink.write_timeseries(
        "conservation.csv",
        &[
            "t",
            "mass",
            "momentum_x",
            "momentum_y",
            "momentum_z",
            "thermal_energy",
            "field_energy",
            "total_energy",
            "micro_l2_sq",
        ],
        &rows,
    )?;
    let (_, integral) = micro_part_smallness(&run);
    let ctx = SolverContext {
        grid_x: &grid_x,
        grid_v: &grid_v,
        op: &op,
        model: Some(&model),
        angular: Some(&angular),
    };
    let (_, last_state) = run.snapshots.last().ok_or_else(|| anyhow!("no snapshots"))?;
    let entries = vec![
        ("eps".into(), format!("{}", run.eps)),
        ("records".into(), format!("{}", run.records.len())),
        ("mass_drift_rate".into(), format!("{:.4e}", report.mass_drift_rate)),
        ("mass_scale".into(), format!("{:.4e}", report.mass_scale)),
        ("momentum_drift_rate".into(), format!("{:.4e}", report.momentum_drift_rate)),
        ("energy_drift_rate".into(), format!("{:.4e}", report.energy_drift_rate)),
        ("neutrality_max".into(), format!("{:.4e}", report.neutrality)),
        ("poisson_residual_final".into(), format!("{:.4e}", last_state.poisson_residual(&ctx))),
        ("micro_l2_sq_time_integral".into(), format!("{:.6e}", integral)),
    ];
    sink.write_report("run_summary.txt", &entries)?;
    Ok(Outcome {
        gates_passed: true,
        summary: vec![format!(
            "mass drift {:.2e}/t (scale {:.2e}), neutrality {:.2e}",
            report.mass_drift_rate, report.mass_scale, report.neutrality
        )],
    })
}

// ---------------------------------------------------------------------
// nsfp-run
// ---------------------------------------------------------------------

pub fn nsfp_run_cmd(cfg: &ScenarioConfig, sink: &mut ArtifactSink) -> Result<Outcome> {
    let grid_x = spatial_from(cfg)?;
    let coeffs = nsfp_coefficients(cfg)?;
    let (a, b, c) = initial_fields(cfg, &grid_x);
    let nc = grid_x.cell_count();
    let u0: [Vec<f64>; 3] = std::array::from_fn(|axis| (0..nc).map(|j| b[j][axis]).collect());
    let state = FluidState::initial(&grid_x, &a, &u0, &c)?;
    let run = nsfp_run(
        state,
        &coeffs,
        &grid_x,
        &FluidRunConfig {
            dt: cfg.solver.dt,
            t_end: cfg.solver.t_end,
            record_every: cfg.solver.record_every,
        },
    )?;
    let mut rows = Vec::new();
    for rec in &run.records {
        let kinetic: f64 = rec
            .u
            .iter()
            .map(|comp| comp.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            * 0.5
            * grid_x.cell_volume();
        rows.push(vec![
            rec.time,
            kinetic,
            grid_x.l2_norm(&rec.theta).powi(2),
            grid_x.l2_norm(&rec.rho).powi(2),
        ]);
    }
    sink.write_timeseries(
        "fluid.csv",
        &["t", "kinetic_energy", "theta_l2_sq", "rho_l2_sq"],
        &rows,
    )?;
    let entries = vec![
        ("lambda".into(), format!("{}", coeffs.lambda)),
        ("kappa".into(), format!("{}", coeffs.kappa)),
        ("max_constraint_residual".into(), format!("{:.4e}", run.max_constraint_residual)),
        ("max_divergence".into(), format!("{:.4e}", run.max_divergence)),
    ];
    sink.write_report("fluid_summary.txt", &entries)?;
    let passed = run.max_constraint_residual <= 1e-12 && run.max_divergence <= 1e-10;
    Ok(Outcome {
        gates_passed: passed,
        summary: vec![format!(
            "constraint residual {:.2e}, divergence {:.2e}",
            run.max_constraint_residual, run.max_divergence
        )],
    })
}

fn nsfp_coefficients(cfg: &ScenarioConfig) -> Result<TransportCoefficients> {
    if cfg.solver.collision_mode == "bgk" {
        // Matched to the surrogate; the closed form is 1/nu0.
        Ok(TransportCoefficients {
            lambda: 1.0 / cfg.solver.bgk_nu0,
            kappa: 1.0 / cfg.solver.bgk_nu0,
        })
    } else {
        let model = model_from(cfg)?;
        let angular = angular_from(cfg)?;
        let grid = velocity_grid_from(cfg)?;
        let op = operator_from(cfg, &model, &grid, &angular)?;
        Ok(compute_transport_coefficients(&op, &grid)?)
    }
}

// ---------------------------------------------------------------------
// hydro-limit
// ---------------------------------------------------------------------

pub fn hydro_limit(cfg: &ScenarioConfig, sink: &mut ArtifactSink) -> Result<Outcome> {
    let model = model_from(cfg)?;
    let angular = angular_from(cfg)?;
    let grid_v = velocity_grid_from(cfg)?;
    let grid_x = spatial_from(cfg)?;
    let op = operator_from(cfg, &model, &grid_v, &angular)?;
    let coeffs = nsfp_coefficients(cfg)?;

    // The comparison requires data on the fluid manifold: divergence-free
    // velocity and a density/temperature pair satisfying the elliptic
    // constraint, so no order-one acoustic layer contaminates the limit.
    let mut prepared = cfg.clone();
    prepared.initial.preset = "well_prepared".into();
    let cfg = &prepared;
    let mut runs = Vec::new();
    for &eps in &cfg.solver.eps_list {
        runs.push(kinetic_run(cfg, eps, &grid_x, &grid_v, &op, &model, &angular)?);
    }
    let (a, b, c) = initial_fields(cfg, &grid_x);
    let nc = grid_x.cell_count();
    let u0: [Vec<f64>; 3] = std::array::from_fn(|axis| (0..nc).map(|j| b[j][axis]).collect());
    let fluid = nsfp_run(
        FluidState::initial(&grid_x, &a, &u0, &c)?,
        &coeffs,
        &grid_x,
        &FluidRunConfig {
            dt: cfg.solver.dt,
            t_end: cfg.solver.t_end,
            record_every: cfg.solver.record_every,
        },
    )?;
    let refs: Vec<&RecordedRun> = runs.iter().collect();
    let table = hydro_limit_error(&refs, &fluid, &grid_x)?;

    let mut rows = Vec::new();
    for row in &table.rows {
        rows.push(vec![
            row.eps,
            row.err_rho,
            row.err_u,
            row.err_theta,
            row.err_grad_phi,
            row.err_total,
        ]);
    }
    sink.write_timeseries(
        "hydro_limit.csv",
        &["eps", "err_rho", "err_u", "err_theta", "err_grad_phi", "err_total"],
        &rows,
    )?;
    let mut decreasing = true;
    for w in table.rows.windows(2) {
        if !(w[1].err_total < w[0].err_total) {
            decreasing = false;
        }
    }
    let passed = decreasing && table.fitted_order >= 0.8;
    let entries = vec![
        ("lambda".into(), format!("{}", coeffs.lambda)),
        ("kappa".into(), format!("{}", coeffs.kappa)),
        ("fitted_order".into(), format!("{:.4}", table.fitted_order)),
        ("errors_strictly_decreasing".into(), format!("{decreasing}")),
        ("gates_passed".into(), format!("{passed}")),
    ];
    sink.write_report("hydro_limit.txt", &entries)?;
    Ok(Outcome {
        gates_passed: passed,
        summary: vec![format!(
            "fitted order {:.3}, errors decreasing: {decreasing}",
            table.fitted_order
        )],
    })
}

// ---------------------------------------------------------------------
// characteristics
// ---------------------------------------------------------------------

pub fn characteristics_cmd(cfg: &ScenarioConfig, sink: &mut ArtifactSink) -> Result<Outcome> {
    let grid_x = spatial_from(cfg)?;
    let nc = grid_x.cell_count();
    let base = 2.0 * std::f64::consts::PI / grid_x.box_length;
    let phi: Vec<f64> = (0..nc)
        .map(|j| {
            cfg.characteristics.field_amplitude / (base * base)
                * (base * grid_x.cell_position(j)[0]).sin()
        })
        .collect();
    // |hess phi| = field_amplitude by construction.
    let frozen = PotentialField::frozen(&grid_x, &phi);
    let free = PotentialField::Zero;

    let x0 = [0.7, 0.0, 0.0];
    let v0 = [1.0, 0.5, -0.2];
    let mut passed = true;
    let mut entries = Vec::new();
    let mut path_rows = Vec::new();
    for &eps in &cfg.characteristics.eps_list {
        let t = eps.sqrt() * cfg.characteristics.t_factor;
        // Free streaming: |det| = |t - tau|^3 / eps^3 exactly.
        let free_path =
            trace_characteristics(&free, eps, t, x0, v0, cfg.characteristics.n_steps)?;
        let mut worst_free = 0.0f64;
        for (tau, det) in free_path.taus.iter().zip(&free_path.jac_det) {
            let expect = ((t - tau).abs() / eps).powi(3);
            worst_free = worst_free.max((det - expect).abs() / expect.max(1e-300));
        }
        let frozen_path =
            trace_characteristics(&frozen, eps, t, x0, v0, cfg.characteristics.n_steps)?;
        let bracket = jacobian_bracket_holds(&frozen_path, eps, t);
        passed &= bracket && worst_free <= 1e-10;
        entries.push((
            format!("eps_{eps}.free_streaming_det_error"),
            format!("{worst_free:.3e}"),
        ));
        entries.push((format!("eps_{eps}.bracket_holds"), format!("{bracket}")));
        if (eps - cfg.characteristics.eps_list[0]).abs() < 1e-12 {
            for i in 0..frozen_path.taus.len() {
                path_rows.push(vec![
                    frozen_path.taus[i],
                    frozen_path.x[i][0],
                    frozen_path.v[i][0],
                    frozen_path.jac_det[i],
                ]);
            }
        }
    }
    sink.write_timeseries("characteristic_path.csv", &["tau", "x1", "v1", "jac_det"], &path_rows)?;
    entries.push(("gates_passed".into(), format!("{passed}")));
    sink.write_report("characteristics.txt", &entries)?;
    Ok(Outcome {
        gates_passed: passed,
        summary: vec![format!("Jacobian bracket holds: {passed}")],
    })
}

// ---------------------------------------------------------------------
// nu-tilde-check
// ---------------------------------------------------------------------

pub fn nu_tilde_check(cfg: &ScenarioConfig, sink: &mut ArtifactSink) -> Result<Outcome> {
    let angular = angular_from(cfg)?;
    let grid = velocity_grid_from(cfg)?;
    let spec = WeightSpec::new(
        cfg.weights.vartheta,
        cfg.weights.sigma,
        cfg.weights.ell,
        cfg.weights.ell0,
    )?;
    let delta = cfg.nu_tilde.delta_field;
    let field = |t: f64| delta * (1.0 + t).powf(-1.25);
    let samples = NuTildeSamples::default_set();
    let mut entries = Vec::new();
    let mut passed = true;
    for &gamma in &cfg.nu_tilde.gamma_list {
        let model = PotentialModel::soft(gamma)?;
        let check = nu_tilde_bound_check(
            &spec,
            &model,
            &grid,
            &angular,
            cfg.nu_tilde.eps,
            field,
            &samples,
        )?;
        let fine = nu_tilde_bound_check(
            &spec,
            &model,
            &grid,
            &angular,
            cfg.nu_tilde.eps,
            field,
            &samples.refined(),
        )?;
        let shift = (check.min_ratio - fine.min_ratio).abs() / check.min_ratio.abs().max(1e-300);
        let ok = check.min_ratio > 0.0 && shift < 0.05;
        passed &= ok;
        entries.push((format!("gamma_{gamma}.varrho"), format!("{:.6}", check.varrho)));
        entries.push((format!("gamma_{gamma}.min_ratio"), format!("{:.6e}", check.min_ratio)));
        entries.push((
            format!("gamma_{gamma}.worst_point"),
            format!(
                "t = {:.4}, v = ({:.3}, {:.3}, {:.3})",
                check.worst_point.0,
                check.worst_point.1[0],
                check.worst_point.1[1],
                check.worst_point.1[2]
            ),
        ));
        entries.push((
            format!("gamma_{gamma}.refinement_shift"),
            format!("{shift:.4e}"),
        ));
    }
    entries.push(("gates_passed".into(), format!("{passed}")));
    sink.write_report("nu_tilde.txt", &entries)?;
    Ok(Outcome {
        gates_passed: passed,
        summary: vec![format!("lower-bound ratio positive and stable: {passed}")],
    })
}

// ---------------------------------------------------------------------
// mode-energy sweep used by the dissipation check of linear-decay
// ---------------------------------------------------------------------

/// Evolve `mode_count` wavenumbers and report the worst per-step energy
/// increase (relative to the initial energy). Exposed for the audit
/// path of `linear-decay`.
pub fn mode_energy_sweep(
    op: &LinearizedOperator,
    grid: &VelocityGrid,
    eps: f64,
    mode_count: usize,
) -> Result<f64> {
    let mut worst: f64 = f64::NEG_INFINITY;
    let t_grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
    for m in 0..mode_count {
        let k_mag = 1e-2 * (8.0 / 1e-2f64).powf(m as f64 / (mode_count - 1) as f64);
        let mop = assemble_mode_operator(op, grid, [k_mag, 0.0, 0.0], eps)?;
        let fhat0: Vec<vpb_lab::num_complex::Complex64> = grid
            .sqrt_mu
            .iter()
            .map(|s| vpb_lab::num_complex::Complex64::new(*s, 0.0))
            .collect();
        // evolve_mode errors out if monotonicity fails; track the margin.
        let traj = evolve_mode(&mop, op, grid, &fhat0, &t_grid)?;
        let energies: Vec<f64> = traj.iter().map(|f| mode_energy(grid, mop.k, f)).collect();
        for w in energies.windows(2) {
            worst = worst.max((w[1] - w[0]) / energies[0]);
        }
    }
    Ok(worst)
}
