//! Collision-operator quadrature.
//!
//! The linearised operator is assembled from the symmetrised (H-form)
//! quadratic form of the collision integral,
//!
//! ```text
//! <L f, g> = 1/4 iiint B(|v-v*|, theta) mu mu* [F + F* - F' - F*'] [G + G* - G' - G*']
//! ```
//!
//! with `F = f / sqrt(mu)`. Evaluated on velocity-node pairs and a
//! sphere rule aligned with the relative velocity, with post-collision
//! ratios interpolated by tensor cubic Lagrange stencils, this form is
//! symmetric and positive semidefinite by construction, and it
//! annihilates the five collision invariants exactly: the interpolation
//! reproduces cubics, and `1, v, |v|^2` are conserved tuple by tuple.
//!
//! Collisions are restricted to an active ball `|v| <= S`; outside the
//! ball the operator is completed by the relaxation term
//! `(I - P) diag(nu) (I - P)`, which keeps the kernel and the sign
//! structure intact while the Gaussian tail carries no weight anyway.
//! The bilinear operator `Gamma` uses the same quadrature in gain/loss
//! form followed by a conservative projection of the invariant moments.

use crate::linalg::DMat;
use crate::model::PotentialModel;
use crate::velocity::{AngularQuadrature, Profile, VelocityGrid};
use rayon::prelude::*;

/// Integral of the angular kernel `q0` over the sphere under the product
/// rule; equals `2 pi C` to rounding because the split Gauss-Legendre
/// panels integrate `|cos theta|` exactly.
pub fn angular_cutoff_integral(model: &PotentialModel, angular: &AngularQuadrature) -> f64 {
    let mut acc = 0.0;
    for ((c, _), w) in angular
        .directions
        .iter()
        .map(|d| (d[2], ()))
        .zip(&angular.weights)
    {
        acc += w * c.abs();
    }
    model.angular_amplitude * acc
}

/// Collision frequency `nu(v)` by quadrature of
/// `iint |v - v*|^gamma q0(theta) mu(v*) domega dv*`. The singular node
/// is excluded for soft potentials (integrable singularity).
pub fn collision_frequency(
    model: &PotentialModel,
    grid: &VelocityGrid,
    angular: &AngularQuadrature,
    v: [f64; 3],
) -> f64 {
    let ang = angular_cutoff_integral(model, angular);
    let mut acc = 0.0;
    for (node, mu) in grid.nodes.iter().zip(&grid.mu) {
        let dx = v[0] - node[0];
        let dy = v[1] - node[1];
        let dz = v[2] - node[2];
        let r2 = dx * dx + dy * dy + dz * dz;
        if r2 == 0.0 {
            if model.gamma < 0.0 {
                continue; // excluded-node treatment of the singularity
            }
            if model.gamma > 0.0 {
                continue; // |v - v*|^gamma vanishes there anyway
            }
            acc += mu; // gamma == 0
            continue;
        }
        acc += r2.powf(0.5 * model.gamma) * mu;
    }
    ang * grid.cell_weight * acc
}

/// `nu` tabulated on all grid nodes.
pub fn collision_frequency_profile(
    model: &PotentialModel,
    grid: &VelocityGrid,
    angular: &AngularQuadrature,
) -> Vec<f64> {
    let nodes: Vec<[f64; 3]> = grid.nodes.clone();
    nodes
        .par_iter()
        .map(|&v| collision_frequency(model, grid, angular, v))
        .collect()
}

/// Default active-ball radius for collision quadrature on a given grid.
pub fn default_active_radius(grid: &VelocityGrid) -> f64 {
    (grid.truncation_radius - grid.spacing).min(5.0)
}

/// Cubic Lagrange stencil along the three axes for one off-grid point.
#[derive(Clone, Copy)]
struct Stencil {
    base: [usize; 3],
    w: [[f64; 4]; 3],
}

#[inline]
fn axis_weights(u: f64, n: usize) -> (usize, [f64; 4]) {
    // Node i sits at local coordinate u = i; pick four consecutive nodes.
    let center = u.floor() as isize;
    let base = (center - 1).clamp(0, n as isize - 4) as usize;
    let t = u - base as f64;
    let w0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
    let w1 = t * (t - 2.0) * (t - 3.0) / 2.0;
    let w2 = -t * (t - 1.0) * (t - 3.0) / 2.0;
    let w3 = t * (t - 1.0) * (t - 2.0) / 6.0;
    (base, [w0, w1, w2, w3])
}

impl Stencil {
    #[inline]
    fn build(grid: &VelocityGrid, p: [f64; 3]) -> Self {
        let n = grid.per_axis_count;
        let r = grid.truncation_radius;
        let h = grid.spacing;
        let mut base = [0usize; 3];
        let mut w = [[0.0; 4]; 3];
        for axis in 0..3 {
            let u = (p[axis] + r) / h - 0.5;
            let (b, wa) = axis_weights(u, n);
            base[axis] = b;
            w[axis] = wa;
        }
        Self { base, w }
    }

    /// Interpolate the ratio `f / sqrt(mu)` at the stencil target.
    #[inline]
    fn gather_ratio(&self, grid: &VelocityGrid, ratio: &[f64]) -> f64 {
        let n = grid.per_axis_count;
        let mut acc = 0.0;
        for (dx, wx) in self.w[0].iter().enumerate() {
            let ox = (self.base[0] + dx) * n;
            for (dy, wy) in self.w[1].iter().enumerate() {
                let oy = (ox + self.base[1] + dy) * n;
                let wxy = wx * wy;
                let row = &ratio[oy + self.base[2]..oy + self.base[2] + 4];
                let mut inner = 0.0;
                for (wz, val) in self.w[2].iter().zip(row) {
                    inner += wz * val;
                }
                acc += wxy * inner;
            }
        }
        acc
    }

    /// Append `(flat index, weight)` pairs scaled by `scale`.
    #[inline]
    fn push_entries(&self, grid: &VelocityGrid, scale: f64, out: &mut Vec<(u32, f64)>) {
        let n = grid.per_axis_count;
        for (dx, wx) in self.w[0].iter().enumerate() {
            let ox = (self.base[0] + dx) * n;
            for (dy, wy) in self.w[1].iter().enumerate() {
                let oy = (ox + self.base[1] + dy) * n;
                let wxy = scale * wx * wy;
                for (dz, wz) in self.w[2].iter().enumerate() {
                    out.push(((oy + self.base[2] + dz) as u32, wxy * wz));
                }
            }
        }
    }
}

/// Orthonormal frame completing the unit vector `n`.
///
/// The reference-axis rule (least `|n_c|`, ties by smaller signed
/// component) commutes with the signed axis permutations of the grid, so
/// the assembled operator inherits the grid's exact cubic symmetry; the
/// remaining exact ties are self-symmetric and land on azimuth
/// reflections the uniform rule is closed under.
#[inline]
fn orthonormal_frame(n: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let abs = [n[0].abs(), n[1].abs(), n[2].abs()];
    let mut axis = 0usize;
    for c in 1..3 {
        if abs[c] < abs[axis] - 1e-14
            || ((abs[c] - abs[axis]).abs() <= 1e-14 && n[c] < n[axis])
        {
            axis = c;
        }
    }
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let mut t1 = [
        n[1] * e[2] - n[2] * e[1],
        n[2] * e[0] - n[0] * e[2],
        n[0] * e[1] - n[1] * e[0],
    ];
    let norm = (t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]).sqrt();
    t1 = [t1[0] / norm, t1[1] / norm, t1[2] / norm];
    let t2 = [
        n[1] * t1[2] - n[2] * t1[1],
        n[2] * t1[0] - n[0] * t1[2],
        n[0] * t1[1] - n[1] * t1[0],
    ];
    (t1, t2)
}

pub struct DirichletAssembly {
    /// Dense `L` on the full grid (collision part plus tail relaxation is
    /// added by the caller; this is the collision part embedded).
    pub l_matrix: DMat,
    /// Indices inside the active ball.
    pub core: Vec<u32>,
    pub active_radius: f64,
}

/// Assemble the collision part of `L` from the H-form quadrature.
pub fn assemble_dirichlet(
    model: &PotentialModel,
    grid: &VelocityGrid,
    angular: &AngularQuadrature,
    active_radius: f64,
) -> DirichletAssembly {
    let n_total = grid.node_count();
    let _n = grid.per_axis_count;
    let h = grid.spacing;
    let s2 = active_radius * active_radius;

    // Active core and cubic halo reachable by stencils.
    let halo_extent = active_radius + 2.5 * h;
    let mut halo_of_full = vec![-1i32; n_total];
    let mut halo: Vec<u32> = Vec::new();
    for (idx, v) in grid.nodes.iter().enumerate() {
        if v[0].abs() <= halo_extent && v[1].abs() <= halo_extent && v[2].abs() <= halo_extent {
            halo_of_full[idx] = halo.len() as i32;
            halo.push(idx as u32);
        }
    }
    let n_halo = halo.len();
    let core: Vec<u32> = grid
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, v)| v[0] * v[0] + v[1] * v[1] + v[2] * v[2] <= s2)
        .map(|(i, _)| i as u32)
        .collect();

    let inv_sqrt_mu: Vec<f64> = grid.sqrt_mu.iter().map(|s| 1.0 / s).collect();

    // Unordered core pairs, processed in fixed chunks for deterministic
    // summation independent of the worker count.
    let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(core.len() * (core.len() - 1) / 2);
    for (a, &i) in core.iter().enumerate() {
        for &j in core.iter().skip(a + 1) {
            pairs.push((i, j));
        }
    }
    let n_chunks = 4usize;
    let chunk_len = pairs.len().div_ceil(n_chunks);
    let amplitude = model.angular_amplitude;
    let gamma = model.gamma;

    let partials: Vec<Vec<f64>> = pairs
        .par_chunks(chunk_len.max(1))
        .map(|chunk| {
            let mut a_local = vec![0.0f64; n_halo * n_halo];
            let mut entries: Vec<(u32, f64)> = Vec::with_capacity(140);
            for &(i, j) in chunk {
                let (i, j) = (i as usize, j as usize);
                let vi = grid.nodes[i];
                let vj = grid.nodes[j];
                let d = [vi[0] - vj[0], vi[1] - vj[1], vi[2] - vj[2]];
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                let r = r2.sqrt();
                let nhat = [d[0] / r, d[1] / r, d[2] / r];
                let (t1, t2) = orthonormal_frame(nhat);
                // Factor 2 for the (j, i) order; 1/4 from the H-form.
                let pair_coeff = 0.5
                    * h
                    * h
                    * h
                    * amplitude
                    * r2.powf(0.5 * gamma)
                    * grid.mu[i]
                    * grid.mu[j];
                for &(cos_t, w_pol) in &angular.half_polar {
                    let alpha = r * cos_t; // (v - v*) . omega
                    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
                    for &phi in &angular.azimuth {
                        let (sp, cp) = phi.sin_cos();
                        let omega = [
                            cos_t * nhat[0] + sin_t * (cp * t1[0] + sp * t2[0]),
                            cos_t * nhat[1] + sin_t * (cp * t1[1] + sp * t2[1]),
                            cos_t * nhat[2] + sin_t * (cp * t1[2] + sp * t2[2]),
                        ];
                        let vp = [
                            vi[0] - alpha * omega[0],
                            vi[1] - alpha * omega[1],
                            vi[2] - alpha * omega[2],
                        ];
                        let vsp = [
                            vj[0] + alpha * omega[0],
                            vj[1] + alpha * omega[1],
                            vj[2] + alpha * omega[2],
                        ];
                        if vp[0] * vp[0] + vp[1] * vp[1] + vp[2] * vp[2] > s2
                            || vsp[0] * vsp[0] + vsp[1] * vsp[1] + vsp[2] * vsp[2] > s2
                        {
                            continue;
                        }
                        let tuple_coeff =
                            pair_coeff * w_pol * angular.azimuth_weight * cos_t;
                        entries.clear();
                        entries.push((i as u32, inv_sqrt_mu[i]));
                        entries.push((j as u32, inv_sqrt_mu[j]));
                        let sp_stencil = Stencil::build(grid, vp);
                        let ssp_stencil = Stencil::build(grid, vsp);
                        sp_stencil.push_entries(grid, -1.0, &mut entries);
                        ssp_stencil.push_entries(grid, -1.0, &mut entries);
                        // Map to halo indices and fold in 1/sqrt(mu) for
                        // the interpolated nodes (the first two carry it
                        // already).
                        let m = entries.len();
                        for e in entries[2..m].iter_mut() {
                            e.1 *= inv_sqrt_mu[e.0 as usize];
                        }
                        for e in entries.iter_mut() {
                            e.0 = halo_of_full[e.0 as usize] as u32;
                        }
                        for a in 0..m {
                            let (ia, va) = entries[a];
                            let row = &mut a_local
                                [ia as usize * n_halo..(ia as usize + 1) * n_halo];
                            let ca = tuple_coeff * va;
                            for &(ib, vb) in &entries[..m] {
                                row[ib as usize] += ca * vb;
                            }
                        }
                    }
                }
            }
            a_local
        })
        .collect();

    // Deterministic fixed-order reduction, then embed into the full grid.
    let mut a_halo = vec![0.0f64; n_halo * n_halo];
    for part in &partials {
        for (acc, v) in a_halo.iter_mut().zip(part) {
            *acc += v;
        }
    }
    let inv_w = 1.0 / grid.cell_weight;
    let mut l_full = DMat::zeros(n_total, n_total);
    for (ha, &fa) in halo.iter().enumerate() {
        let src = &a_halo[ha * n_halo..(ha + 1) * n_halo];
        let dst =
            &mut l_full.data[fa as usize * n_total..(fa as usize + 1) * n_total];
        for (hb, &fb) in halo.iter().enumerate() {
            dst[fb as usize] = src[hb] * inv_w;
        }
    }

    DirichletAssembly {
        l_matrix: l_full,
        core,
        active_radius,
    }
}

/// Bilinear collision operator `Gamma(f, g)` for several kernel
/// exponents sharing one geometry sweep. Returns the raw (unprojected)
/// values; conservation is enforced by the caller's invariant
/// projection.
pub fn gamma_bilinear_raw_multi(
    models: &[PotentialModel],
    grid: &VelocityGrid,
    angular: &AngularQuadrature,
    f: &[f64],
    g: &[f64],
    active_radius: f64,
) -> Vec<Profile> {
    let n_total = grid.node_count();
    let n_models = models.len();
    let s2 = active_radius * active_radius;
    let core: Vec<u32> = grid
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, v)| v[0] * v[0] + v[1] * v[1] + v[2] * v[2] <= s2)
        .map(|(i, _)| i as u32)
        .collect();
    let ratio_f: Vec<f64> = f
        .iter()
        .zip(&grid.sqrt_mu)
        .map(|(x, s)| x / s)
        .collect();
    let ratio_g: Vec<f64> = g
        .iter()
        .zip(&grid.sqrt_mu)
        .map(|(x, s)| x / s)
        .collect();
    let h3 = grid.cell_weight;
    let gammas: Vec<f64> = models.iter().map(|m| m.gamma).collect();
    let amps: Vec<f64> = models.iter().map(|m| m.angular_amplitude).collect();

    // One output row per core node, all models at once.
    let rows: Vec<(u32, Vec<f64>)> = core
        .par_iter()
        .map(|&i_u| {
            let i = i_u as usize;
            let vi = grid.nodes[i];
            let fi = ratio_f[i];
            let mut acc = vec![0.0f64; n_models];
            for &j_u in &core {
                let j = j_u as usize;
                if j == i {
                    continue;
                }
                let vj = grid.nodes[j];
                let d = [vi[0] - vj[0], vi[1] - vj[1], vi[2] - vj[2]];
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                let r = r2.sqrt();
                let nhat = [d[0] / r, d[1] / r, d[2] / r];
                let (t1, t2) = orthonormal_frame(nhat);
                let loss = fi * ratio_g[j];
                let mut ang_acc = 0.0f64;
                for &(cos_t, w_pol) in &angular.half_polar {
                    let alpha = r * cos_t;
                    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
                    for &phi in &angular.azimuth {
                        let (sp, cp) = phi.sin_cos();
                        let omega = [
                            cos_t * nhat[0] + sin_t * (cp * t1[0] + sp * t2[0]),
                            cos_t * nhat[1] + sin_t * (cp * t1[1] + sp * t2[1]),
                            cos_t * nhat[2] + sin_t * (cp * t1[2] + sp * t2[2]),
                        ];
                        let vp = [
                            vi[0] - alpha * omega[0],
                            vi[1] - alpha * omega[1],
                            vi[2] - alpha * omega[2],
                        ];
                        let vsp = [
                            vj[0] + alpha * omega[0],
                            vj[1] + alpha * omega[1],
                            vj[2] + alpha * omega[2],
                        ];
                        if vp[0] * vp[0] + vp[1] * vp[1] + vp[2] * vp[2] > s2
                            || vsp[0] * vsp[0] + vsp[1] * vsp[1] + vsp[2] * vsp[2] > s2
                        {
                            continue;
                        }
                        ang_acc += w_pol
                            * angular.azimuth_weight
                            * cos_t
                            * (Stencil::build(grid, vp).gather_ratio(grid, &ratio_f)
                                * Stencil::build(grid, vsp).gather_ratio(grid, &ratio_g)
                                - loss);
                    }
                }
                let base = h3 * grid.mu[j] * ang_acc;
                for (m, acc_m) in acc.iter_mut().enumerate() {
                    *acc_m += base * amps[m] * r2.powf(0.5 * gammas[m]);
                }
            }
            let smu = grid.sqrt_mu[i];
            for a in acc.iter_mut() {
                *a *= smu;
            }
            (i_u, acc)
        })
        .collect();

    let mut out = vec![vec![0.0f64; n_total]; n_models];
    for (i, vals) in rows {
        for (m, v) in vals.iter().enumerate() {
            out[m][i as usize] = *v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity::VelocityGrid;

    fn setup() -> (VelocityGrid, AngularQuadrature) {
        let grid = VelocityGrid::build(12, 6.0).unwrap();
        let angular = AngularQuadrature::product(6, 8).unwrap();
        (grid, angular)
    }

    #[test]
    fn nu_maxwell_constant() {
        // gamma = 0 removes the velocity dependence: nu = 2 pi C * mass.
        let (grid, angular) = setup();
        let model = PotentialModel::maxwell();
        let v0 = collision_frequency(&model, &grid, &angular, [0.0, 0.0, 0.0]);
        let v1 = collision_frequency(&model, &grid, &angular, [2.0, -1.0, 0.5]);
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!((v0 - two_pi).abs() < 1e-5, "nu(0) = {v0}");
        assert!((v1 - two_pi).abs() < 1e-5);
    }

    #[test]
    fn nu_hard_sphere_at_origin() {
        // nu(0) = 2 pi E|v*| = 2 pi * 2 sqrt(2/pi); the radial oracle is
        // evaluated by high-resolution Simpson quadrature.
        let (grid, angular) = setup();
        let model = PotentialModel::hard_sphere();
        let nu0 = collision_frequency(&model, &grid, &angular, [0.0, 0.0, 0.0]);
        let m = 40_000usize;
        let rmax = 12.0;
        let dr = rmax / m as f64;
        let radial = |r: f64| {
            r * r * r * (-0.5 * r * r).exp()
        };
        let mut simpson = radial(0.0) + radial(rmax);
        for k in 1..m {
            simpson += radial(k as f64 * dr) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        simpson *= dr / 3.0;
        let mean_speed = simpson * 4.0 * std::f64::consts::PI
            * (2.0 * std::f64::consts::PI).powf(-1.5);
        let expect = 2.0 * std::f64::consts::PI * mean_speed;
        assert!((mean_speed - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-10);
        assert!((nu0 - expect).abs() < 5e-2, "nu(0) = {nu0}, oracle {expect}");
        assert!((nu0 - 10.027).abs() < 5e-2);
    }

    #[test]
    fn nu_comparable_to_bracket_power() {
        // nu(v) ~ <v>^gamma uniformly on the grid.
        let (grid, angular) = setup();
        for gamma in [1.0, 0.0, -1.0, -2.0] {
            let model = PotentialModel::new(gamma, 1.0).unwrap();
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for idx in (0..grid.node_count()).step_by(97) {
                let v = grid.nodes[idx];
                let nu = collision_frequency(&model, &grid, &angular, v);
                let bracket = (1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
                    .powf(0.5 * gamma);
                let ratio = nu / bracket;
                lo = lo.min(ratio);
                hi = hi.max(ratio);
                assert!(nu > 0.0);
            }
            assert!(lo > 0.0 && hi.is_finite());
            assert!(hi / lo < 12.0, "gamma {gamma}: ratio spread {}", hi / lo);
        }
    }

    #[test]
    fn nu_refines_with_quadrature() {
        // Grid and angular refinement leave nu nearly unchanged (Cauchy).
        let model = PotentialModel::hard_sphere();
        let coarse_grid = VelocityGrid::build(12, 6.0).unwrap();
        let fine_grid = VelocityGrid::build(16, 6.0).unwrap();
        let coarse_ang = AngularQuadrature::product(4, 6).unwrap();
        let fine_ang = AngularQuadrature::product(8, 12).unwrap();
        let v = [1.3, -0.4, 0.7];
        let a = collision_frequency(&model, &coarse_grid, &coarse_ang, v);
        let b = collision_frequency(&model, &fine_grid, &fine_ang, v);
        assert!((a - b).abs() / b < 1e-3, "nu coarse {a}, fine {b}");
    }
}
