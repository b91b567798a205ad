//! Temporal energy and dissipation functionals and the weighted sup
//! norms. Spatial derivatives are spectral, velocity derivatives are
//! second-order finite differences; every `H^m` norm is the explicit
//! discrete sum standing in for the equivalence class in the analysis.

use crate::error::{Error, Result};
use crate::model::PotentialModel;
use crate::solver::{KineticState, SolverContext};
use crate::velocity::{project_p, v_derivative, VelocityGrid};
use crate::weights::{weight_w, weight_w_theta, WeightSpec};

/// Evaluated functional components at one time.
#[derive(Clone, Debug, Default)]
pub struct EnergyReport {
    pub time: f64,
    /// Triple norm: `|f|_{H2_{x,v}} + |grad phi|_{H2_x} + |w f|_{H1_x L2_v}`
    /// (degree 1).
    pub e_hard: f64,
    /// High-order squared energy (degree 2).
    pub etilde_hard: f64,
    /// Soft-potential triple norm with the `w^{|beta| - ell}` weights
    /// (degree 1).
    pub e_soft_ell: f64,
    /// Hard dissipation rate (degree 2).
    pub d_hard: f64,
    /// Soft dissipation rate (degree 2).
    pub d_soft_ell: f64,
    /// Labelled breakdown of every term.
    pub components: Vec<(String, f64)>,
}

/// Multi-indices over `dim` axes with total order at most `max`.
fn multi_indices(dim: usize, max: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for i in 0..=max {
        for j in 0..=max {
            for k in 0..=max {
                if i + j + k <= max
                    && (dim >= 2 || (j == 0 && k == 0))
                    && (dim >= 3 || k == 0)
                {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out.sort();
    out
}

/// Spectral x-derivative of a phase-space field along one resolved axis,
/// applied node-wise.
fn x_derivative(f: &[f64], ctx: &SolverContext, axis: usize) -> Vec<f64> {
    let nc = ctx.grid_x.cell_count();
    let nv = ctx.grid_v.node_count();
    let mut out = vec![0.0; f.len()];
    let mut series = vec![0.0; nc];
    for node in 0..nv {
        for cell in 0..nc {
            series[cell] = f[cell * nv + node];
        }
        let d = ctx.grid_x.derivative(&series, axis);
        for cell in 0..nc {
            out[cell * nv + node] = d[cell];
        }
    }
    out
}

fn apply_mixed_derivative(
    f: &[f64],
    ctx: &SolverContext,
    alpha: [usize; 3],
    beta: [usize; 3],
) -> Vec<f64> {
    let nv = ctx.grid_v.node_count();
    let mut field = f.to_vec();
    for (axis, &order) in alpha.iter().enumerate() {
        for _ in 0..order {
            field = x_derivative(&field, ctx, axis);
        }
    }
    for (axis, &order) in beta.iter().enumerate() {
        for _ in 0..order {
            let mut next = vec![0.0; field.len()];
            for (cell, chunk) in field.chunks(nv).enumerate() {
                let d = v_derivative(ctx.grid_v, chunk, axis);
                next[cell * nv..(cell + 1) * nv].copy_from_slice(&d);
            }
            field = next;
        }
    }
    field
}

/// Squared phase-space norm with a velocity weight (and optionally the
/// collision frequency).
fn weighted_norm_sq(
    field: &[f64],
    ctx: &SolverContext,
    weight: impl Fn(usize) -> f64,
) -> f64 {
    let nv = ctx.grid_v.node_count();
    let wv = ctx.grid_v.cell_weight;
    let vol = ctx.grid_x.cell_volume();
    let mut acc = 0.0;
    for chunk in field.chunks(nv) {
        for (node, val) in chunk.iter().enumerate() {
            let w = weight(node);
            acc += w * w * val * val;
        }
    }
    acc * wv * vol
}

fn micro_part(state: &KineticState, ctx: &SolverContext) -> Vec<f64> {
    let nv = ctx.grid_v.node_count();
    let mut out = vec![0.0; state.f.len()];
    for (cell, chunk) in state.f.chunks(nv).enumerate() {
        let (_, pf) = project_p(chunk, ctx.grid_v, &ctx.op.invariant_basis);
        for node in 0..nv {
            out[cell * nv + node] = chunk[node] - pf[node];
        }
    }
    out
}

fn macro_part(state: &KineticState, ctx: &SolverContext) -> Vec<f64> {
    let nv = ctx.grid_v.node_count();
    let mut out = vec![0.0; state.f.len()];
    for (cell, chunk) in state.f.chunks(nv).enumerate() {
        let (_, pf) = project_p(chunk, ctx.grid_v, &ctx.op.invariant_basis);
        out[cell * nv..(cell + 1) * nv].copy_from_slice(&pf);
    }
    out
}

/// Sum of squared mixed-derivative norms over `|alpha| + |beta| <= 2`
/// with a per-node weight that may depend on the derivative orders.
fn h2_mixed_sum(
    field: &[f64],
    ctx: &SolverContext,
    weight_for: impl Fn(usize, usize, usize) -> f64,
) -> f64 {
    let xdim = ctx.grid_x.axes();
    let mut acc = 0.0;
    for alpha in multi_indices(xdim, 2) {
        let na: usize = alpha.iter().sum();
        for beta in multi_indices(3, 2 - na) {
            let nb: usize = beta.iter().sum();
            let d = apply_mixed_derivative(field, ctx, alpha, beta);
            acc += weighted_norm_sq(&d, ctx, |node| weight_for(na, nb, node));
        }
    }
    acc
}

/// Squared `H^m_x` norm of a spatial field.
fn hx_norm_sq(field: &[f64], ctx: &SolverContext, max_order: usize) -> f64 {
    let xdim = ctx.grid_x.axes();
    let mut acc = 0.0;
    for alpha in multi_indices(xdim, max_order) {
        let mut d = field.to_vec();
        for (axis, &order) in alpha.iter().enumerate() {
            for _ in 0..order {
                d = ctx.grid_x.derivative(&d, axis);
            }
        }
        acc += d.iter().map(|v| v * v).sum::<f64>() * ctx.grid_x.cell_volume();
    }
    acc
}

/// Hard-potential energy functionals.
pub fn energy_hard(
    state: &KineticState,
    ctx: &SolverContext,
    model: &PotentialModel,
) -> Result<EnergyReport> {
    if !model.is_hard() {
        return Err(Error::InvalidParameter(
            "energy_hard requires a hard potential".into(),
        ));
    }
    let grid_v = ctx.grid_v;
    let w_poly: Vec<f64> = grid_v
        .nodes
        .iter()
        .map(|&v| weight_w(model, v))
        .collect();

    let f_h2_sq = h2_mixed_sum(&state.f, ctx, |_, _, _| 1.0);
    let grad_phi = ctx.grid_x.gradient(&state.phi);
    let mut grad_phi_h2_sq = 0.0;
    for axis_field in grad_phi.iter().take(ctx.grid_x.axes()) {
        grad_phi_h2_sq += hx_norm_sq(axis_field, ctx, 2);
    }
    // |w f|_{H1_x L2_v}: x-derivatives only.
    let mut wf_h1l2_sq = 0.0;
    {
        let xdim = ctx.grid_x.axes();
        for alpha in multi_indices(xdim, 1) {
            let d = apply_mixed_derivative(&state.f, ctx, alpha, [0, 0, 0]);
            wf_h1l2_sq += weighted_norm_sq(&d, ctx, |node| w_poly[node]);
        }
    }
    let e_hard = f_h2_sq.sqrt() + grad_phi_h2_sq.sqrt() + wf_h1l2_sq.sqrt();

    // High-order squared energy on the micro part.
    let micro = micro_part(state, ctx);
    let mut etilde = 0.0;
    {
        let xdim = ctx.grid_x.axes();
        for alpha in multi_indices(xdim, 2) {
            let na: usize = alpha.iter().sum();
            if na >= 1 {
                let d = apply_mixed_derivative(&state.f, ctx, alpha, [0, 0, 0]);
                etilde += weighted_norm_sq(&d, ctx, |_| 1.0);
                let mut dphi = state.phi.clone();
                for (axis, &order) in alpha.iter().enumerate() {
                    for _ in 0..order {
                        dphi = ctx.grid_x.derivative(&dphi, axis);
                    }
                }
                for axis_field in ctx.grid_x.gradient(&dphi).iter().take(xdim) {
                    etilde += axis_field.iter().map(|v| v * v).sum::<f64>()
                        * ctx.grid_x.cell_volume();
                }
            }
        }
        etilde += h2_mixed_sum(&micro, ctx, |_, _, _| 1.0);
        for alpha in multi_indices(xdim, 1) {
            let d = apply_mixed_derivative(&micro, ctx, alpha, [0, 0, 0]);
            etilde += weighted_norm_sq(&d, ctx, |node| w_poly[node]);
        }
    }

    // Dissipation rate.
    let eps = state.eps;
    let nu = &ctx.op.nu;
    let mut d_hard = 0.0;
    {
        let inv_eps2 = 1.0 / (eps * eps);
        let xdim = ctx.grid_x.axes();
        // (1/eps^2) |(I-P) f|^2_{H2(nu)}.
        for alpha in multi_indices(xdim, 2) {
            let na: usize = alpha.iter().sum();
            for beta in multi_indices(3, 2 - na) {
                let d = apply_mixed_derivative(&micro, ctx, alpha, beta);
                d_hard += inv_eps2 * weighted_norm_sq(&d, ctx, |n| nu[n].sqrt());
            }
        }
        // (1/eps^2) |w (I-P) f|^2_{H1_x L2_v (nu)}.
        for alpha in multi_indices(xdim, 1) {
            let d = apply_mixed_derivative(&micro, ctx, alpha, [0, 0, 0]);
            d_hard += inv_eps2 * weighted_norm_sq(&d, ctx, |n| w_poly[n] * nu[n].sqrt());
        }
        // |grad_x P f|^2_{H1_{x,v}}.
        let pf = macro_part(state, ctx);
        for axis in 0..xdim {
            let g = x_derivative(&pf, ctx, axis);
            d_hard += h2_mixed_sum_order1(&g, ctx);
        }
        // |grad^2 phi|^2_{H1_x}.
        for axis in 0..xdim {
            let g = ctx.grid_x.derivative(&state.phi, axis);
            for axis2 in 0..xdim {
                let gg = ctx.grid_x.derivative(&g, axis2);
                d_hard += hx_norm_sq(&gg, ctx, 1);
            }
        }
    }

    Ok(EnergyReport {
        time: state.time,
        e_hard,
        etilde_hard: etilde,
        d_hard,
        components: vec![
            ("f_h2".into(), f_h2_sq.sqrt()),
            ("grad_phi_h2".into(), grad_phi_h2_sq.sqrt()),
            ("wf_h1xl2v".into(), wf_h1l2_sq.sqrt()),
        ],
        ..Default::default()
    })
}

/// `H^1_{x,v}` squared norm (orders <= 1 in each of x and v jointly).
fn h2_mixed_sum_order1(field: &[f64], ctx: &SolverContext) -> f64 {
    let xdim = ctx.grid_x.axes();
    let mut acc = 0.0;
    for alpha in multi_indices(xdim, 1) {
        let na: usize = alpha.iter().sum();
        for beta in multi_indices(3, 1 - na) {
            let d = apply_mixed_derivative(field, ctx, alpha, beta);
            acc += weighted_norm_sq(&d, ctx, |_| 1.0);
        }
    }
    acc
}

/// Soft-potential energy functional with the order-dependent weights
/// `w^{|beta|}` and `w^{|beta| - ell}`.
pub fn energy_soft(
    state: &KineticState,
    ctx: &SolverContext,
    model: &PotentialModel,
    spec: &WeightSpec,
) -> Result<EnergyReport> {
    if model.is_hard() {
        return Err(Error::InvalidParameter(
            "energy_soft requires a soft potential".into(),
        ));
    }
    let w_pow = weight_powers(ctx.grid_v, model);
    let ell = spec.ell;
    let eps = state.eps;

    let mut sum_weighted = 0.0; // sum over |a|+|b|<=2 of |w^{|b|} d f|
    let mut sum_low = 0.0; // 0 <= |a| <= 1 part with w^{|b|-ell}
    let xdim = ctx.grid_x.axes();
    for alpha in multi_indices(xdim, 2) {
        let na: usize = alpha.iter().sum();
        for beta in multi_indices(3, 2 - na) {
            let nb: usize = beta.iter().sum();
            let d = apply_mixed_derivative(&state.f, ctx, alpha, beta);
            sum_weighted +=
                weighted_norm_sq(&d, ctx, |n| w_pow(nb as f64)[n]).sqrt();
            if na <= 1 {
                sum_low +=
                    weighted_norm_sq(&d, ctx, |n| w_pow(nb as f64 - ell)[n]).sqrt();
            }
        }
    }
    let grad_phi = ctx.grid_x.gradient(&state.phi);
    let mut grad_phi_h2_sq = 0.0;
    for axis_field in grad_phi.iter().take(xdim) {
        grad_phi_h2_sq += hx_norm_sq(axis_field, ctx, 2);
    }
    // eps^{1/2} |w^{-ell} grad_x^2 f|.
    let mut second = 0.0;
    for alpha in multi_indices(xdim, 2) {
        let na: usize = alpha.iter().sum();
        if na == 2 {
            let d = apply_mixed_derivative(&state.f, ctx, alpha, [0, 0, 0]);
            second += weighted_norm_sq(&d, ctx, |n| w_pow(-ell)[n]);
        }
    }
    let e_soft = sum_weighted + grad_phi_h2_sq.sqrt() + sum_low + eps.sqrt() * second.sqrt();

    Ok(EnergyReport {
        time: state.time,
        e_soft_ell: e_soft,
        components: vec![
            ("weighted_h2_sum".into(), sum_weighted),
            ("grad_phi_h2".into(), grad_phi_h2_sq.sqrt()),
            ("low_order_w_ell".into(), sum_low),
            ("eps_half_second".into(), eps.sqrt() * second.sqrt()),
        ],
        ..Default::default()
    })
}

/// Soft dissipation rate: nu-weighted micro norms with the `1/eps^2` and
/// `1/eps` scalings plus the macroscopic gradient terms.
pub fn dissipation_soft(
    state: &KineticState,
    ctx: &SolverContext,
    model: &PotentialModel,
    spec: &WeightSpec,
) -> Result<EnergyReport> {
    if model.is_hard() {
        return Err(Error::InvalidParameter(
            "dissipation_soft requires a soft potential".into(),
        ));
    }
    let w_pow = weight_powers(ctx.grid_v, model);
    let nu = &ctx.op.nu;
    let ell = spec.ell;
    let eps = state.eps;
    let inv_eps2 = 1.0 / (eps * eps);
    let micro = micro_part(state, ctx);
    let xdim = ctx.grid_x.axes();

    let mut micro_weighted = 0.0;
    let mut micro_low = 0.0;
    let mut micro_second = 0.0;
    for alpha in multi_indices(xdim, 2) {
        let na: usize = alpha.iter().sum();
        for beta in multi_indices(3, 2 - na) {
            let nb: usize = beta.iter().sum();
            let d = apply_mixed_derivative(&micro, ctx, alpha, beta);
            micro_weighted += inv_eps2
                * weighted_norm_sq(&d, ctx, |n| w_pow(nb as f64)[n] * nu[n].sqrt());
            if na <= 1 {
                micro_low += inv_eps2
                    * weighted_norm_sq(&d, ctx, |n| {
                        w_pow(nb as f64 - ell)[n] * nu[n].sqrt()
                    });
            }
            if na == 2 && nb == 0 {
                micro_second += (1.0 / eps)
                    * weighted_norm_sq(&d, ctx, |n| w_pow(-ell)[n] * nu[n].sqrt());
            }
        }
    }
    let pf = macro_part(state, ctx);
    let mut macro_grad = 0.0;
    for axis in 0..xdim {
        let g = x_derivative(&pf, ctx, axis);
        macro_grad += h2_mixed_sum_order1(&g, ctx);
    }
    let mut phi_second = 0.0;
    for axis in 0..xdim {
        let g = ctx.grid_x.derivative(&state.phi, axis);
        for axis2 in 0..xdim {
            let gg = ctx.grid_x.derivative(&g, axis2);
            phi_second += hx_norm_sq(&gg, ctx, 1);
        }
    }
    let d_soft = macro_grad + phi_second + micro_weighted + micro_low + micro_second;
    Ok(EnergyReport {
        time: state.time,
        d_soft_ell: d_soft,
        components: vec![
            ("macro_grad_h1".into(), macro_grad),
            ("grad2_phi_h1".into(), phi_second),
            ("micro_weighted".into(), micro_weighted),
            ("micro_low_order".into(), micro_low),
            ("micro_second".into(), micro_second),
        ],
        ..Default::default()
    })
}

/// Tabulated powers of the polynomial weight; returns a closure-friendly
/// lookup builder.
fn weight_powers<'a>(
    grid: &'a VelocityGrid,
    model: &'a PotentialModel,
) -> impl Fn(f64) -> Vec<f64> + 'a {
    move |power: f64| {
        grid.nodes
            .iter()
            .map(|&v| weight_w(model, v).powf(power))
            .collect()
    }
}

/// `max |w_theta d^alpha_beta f|` over the grid for all
/// `|alpha| + |beta| <= m`.
pub fn weighted_sup_norm(
    state: &KineticState,
    ctx: &SolverContext,
    spec: &WeightSpec,
    m: usize,
) -> f64 {
    let nv = ctx.grid_v.node_count();
    let w_exp: Vec<f64> = ctx
        .grid_v
        .nodes
        .iter()
        .map(|&v| weight_w_theta(spec, state.time, v))
        .collect();
    let xdim = ctx.grid_x.axes();
    let mut worst = 0.0f64;
    for alpha in multi_indices(xdim, m) {
        let na: usize = alpha.iter().sum();
        for beta in multi_indices(3, m - na) {
            let d = apply_mixed_derivative(&state.f, ctx, alpha, beta);
            for chunk in d.chunks(nv) {
                for (node, val) in chunk.iter().enumerate() {
                    worst = worst.max((w_exp[node] * val).abs());
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::bgk_surrogate;
    use crate::spatial::{SpatialDim, SpatialGrid};

    fn setup() -> (SpatialGrid, VelocityGrid) {
        (
            SpatialGrid::new(16, 2.0 * std::f64::consts::PI, SpatialDim::One).unwrap(),
            VelocityGrid::build_with_tolerance(8, 6.0, 2e-2).unwrap(),
        )
    }

    #[test]
    fn zero_state_gives_zero_reports() {
        let (gx, gv) = setup();
        let op = bgk_surrogate(1.0, &gv).unwrap();
        let ctx = SolverContext {
            grid_x: &gx,
            grid_v: &gv,
            op: &op,
            model: None,
            angular: None,
        };
        let state = KineticState::zero(1.0, &ctx);
        let hard = PotentialModel::hard_sphere();
        let rep = energy_hard(&state, &ctx, &hard).unwrap();
        assert_eq!(rep.e_hard, 0.0);
        assert_eq!(rep.etilde_hard, 0.0);
        assert_eq!(rep.d_hard, 0.0);
        let soft = PotentialModel::soft(-1.0).unwrap();
        let spec = WeightSpec::new(0.01, 1.0 / 24.0, 2.5, 1.0).unwrap();
        assert_eq!(energy_soft(&state, &ctx, &soft, &spec).unwrap().e_soft_ell, 0.0);
        assert_eq!(
            dissipation_soft(&state, &ctx, &soft, &spec).unwrap().d_soft_ell,
            0.0
        );
        assert_eq!(weighted_sup_norm(&state, &ctx, &spec, 2), 0.0);
    }

    #[test]
    fn hard_energy_closed_form_single_mode() {
        // f = sqrt(mu) sin(x): the x-norms reduce to norms of sin/cos and
        // the discrete velocity mass.
        let (gx, gv) = setup();
        let op = bgk_surrogate(1.0, &gv).unwrap();
        let ctx = SolverContext {
            grid_x: &gx,
            grid_v: &gv,
            op: &op,
            model: None,
            angular: None,
        };
        let nc = gx.cell_count();
        let a: Vec<f64> = (0..nc).map(|j| gx.cell_position(j)[0].sin()).collect();
        let b = vec![[0.0; 3]; nc];
        let c = vec![0.0; nc];
        let state = KineticState::from_macro(1.0, &ctx, &a, &b, &c).unwrap();
        let hard = PotentialModel::hard_sphere();
        let rep = energy_hard(&state, &ctx, &hard).unwrap();
        // |f|_{L2}^2 = pi * mass_v; the f_h2 component includes H2_{x,v}
        // sums, so compare the plain L2 piece via a direct oracle.
        let mass_v = gv.discrete_mass();
        let l2_sq = gx.l2_norm(&a).powi(2) * mass_v;
        // Oracle: |sin|_{L2}^2 = pi on [0, 2 pi).
        assert!((gx.l2_norm(&a).powi(2) - std::f64::consts::PI).abs() < 1e-8);
        assert!(rep.e_hard > l2_sq.sqrt());
        // Scaling degree 1 in f (phi scales along).
        let mut scaled = state.clone();
        scaled.f.iter_mut().for_each(|v| *v *= 2.0);
        scaled.phi.iter_mut().for_each(|v| *v *= 2.0);
        let rep2 = energy_hard(&scaled, &ctx, &hard).unwrap();
        assert!((rep2.e_hard - 2.0 * rep.e_hard).abs() < 1e-9 * rep.e_hard);
        assert!((rep2.etilde_hard - 4.0 * rep.etilde_hard).abs() < 1e-9 * rep.etilde_hard);
        assert!((rep2.d_hard - 4.0 * rep.d_hard).abs() < 1e-9 * rep.d_hard.max(1e-30));
        // The weight w >= 1 never decreases the weighted piece.
        let f_h2 = rep.components[0].1;
        let wf = rep.components[2].1;
        let f_h1_sq: f64 = {
            // H1_x L2_v without weight for comparison.
            let d0 = state.f.clone();
            let d1 = super::x_derivative(&state.f, &ctx, 0);
            (super::weighted_norm_sq(&d0, &ctx, |_| 1.0)
                + super::weighted_norm_sq(&d1, &ctx, |_| 1.0))
            .sqrt()
        };
        assert!(wf >= f_h1_sq - 1e-12);
        let _ = f_h2;
    }

    #[test]
    fn soft_weights_reduce_to_unweighted_at_zero_ell() {
        let (gx, gv) = setup();
        let op = bgk_surrogate(1.0, &gv).unwrap();
        let ctx = SolverContext {
            grid_x: &gx,
            grid_v: &gv,
            op: &op,
            model: None,
            angular: None,
        };
        let nc = gx.cell_count();
        let a: Vec<f64> = (0..nc).map(|j| 0.1 * gx.cell_position(j)[0].sin()).collect();
        let state = KineticState::from_macro(
            1.0,
            &ctx,
            &a,
            &vec![[0.0; 3]; nc],
            &vec![0.0; nc],
        )
        .unwrap();
        // gamma -> 0^- makes w = <v>^gamma -> 1; with ell = 0 the soft
        // norms lose their weights entirely.
        let nearly_hard = PotentialModel::soft(-1e-12).unwrap();
        let spec = WeightSpec::new(0.01, 1.0 / 24.0, 0.0, 1.0).unwrap();
        let soft = energy_soft(&state, &ctx, &nearly_hard, &spec).unwrap();
        // Unweighted recomputation oracle: H2 sum + grad phi + low sum +
        // second-derivative piece, all with unit weights.
        let mut h2_sum = 0.0;
        let mut low = 0.0;
        let mut second = 0.0;
        for alpha in super::multi_indices(1, 2) {
            let na: usize = alpha.iter().sum();
            for beta in super::multi_indices(3, 2 - na) {
                let d = super::apply_mixed_derivative(&state.f, &ctx, alpha, beta);
                let nrm = super::weighted_norm_sq(&d, &ctx, |_| 1.0).sqrt();
                h2_sum += nrm;
                if na <= 1 {
                    low += nrm;
                }
                if na == 2 && beta == [0, 0, 0] {
                    second += nrm;
                }
            }
        }
        let grad_phi = super::hx_norm_sq(&gx.gradient(&state.phi)[0], &ctx, 2).sqrt();
        let expect = h2_sum + grad_phi + low + second;
        assert!(
            (soft.e_soft_ell - expect).abs() <= 1e-12 * expect,
            "{} vs {}",
            soft.e_soft_ell,
            expect
        );
    }

    #[test]
    fn macro_state_has_zero_micro_dissipation_terms() {
        let (gx, gv) = setup();
        let op = bgk_surrogate(1.0, &gv).unwrap();
        let ctx = SolverContext {
            grid_x: &gx,
            grid_v: &gv,
            op: &op,
            model: None,
            angular: None,
        };
        let nc = gx.cell_count();
        let a: Vec<f64> = (0..nc).map(|j| 0.1 * gx.cell_position(j)[0].sin()).collect();
        let state = KineticState::from_macro(
            0.5,
            &ctx,
            &a,
            &vec![[0.0; 3]; nc],
            &vec![0.0; nc],
        )
        .unwrap();
        let soft = PotentialModel::soft(-1.0).unwrap();
        let spec = WeightSpec::new(0.01, 1.0 / 24.0, 2.5, 1.0).unwrap();
        let rep = dissipation_soft(&state, &ctx, &soft, &spec).unwrap();
        for (name, val) in &rep.components {
            if name.starts_with("micro") {
                assert!(*val < 1e-16, "{name} = {val}");
            }
        }
    }

    #[test]
    fn weighted_sup_norm_monotone_in_order_and_closed_form() {
        let (gx, gv) = setup();
        let op = bgk_surrogate(1.0, &gv).unwrap();
        let ctx = SolverContext {
            grid_x: &gx,
            grid_v: &gv,
            op: &op,
            model: None,
            angular: None,
        };
        // f = sqrt(mu), t = 0, small vartheta: the closed form is the
        // maximum of exp(2 vartheta |v|^2) sqrt(mu(v)), attained at v = 0
        // because 2 vartheta < 1/4: value (2 pi)^(-3/4).
        let nc = gx.cell_count();
        let nv = gv.node_count();
        let mut state = KineticState::zero(1.0, &ctx);
        for cell in 0..nc {
            for node in 0..nv {
                state.f[cell * nv + node] = gv.sqrt_mu[node];
            }
        }
        let spec = WeightSpec::new(0.01, 0.1, 2.0, 1.0).unwrap();
        let m0 = weighted_sup_norm(&state, &ctx, &spec, 0);
        let closed = (2.0 * std::f64::consts::PI).powf(-0.75);
        // Cell-centered nodes: compare against the max over actual nodes.
        let oracle = gv
            .nodes
            .iter()
            .zip(&gv.sqrt_mu)
            .map(|(&v, s)| {
                (2.0 * spec.vartheta * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).exp() * s
            })
            .fold(0.0f64, f64::max);
        assert!((m0 - oracle).abs() <= 1e-14);
        assert!(m0 <= closed);
        let m1 = weighted_sup_norm(&state, &ctx, &spec, 1);
        assert!(m1 >= m0);
    }
}
