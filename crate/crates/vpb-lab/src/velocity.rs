//! Velocity-space discretisation: the global Maxwellian, truncated
//! cell-centered tensor grids, the product angular rule on the collision
//! sphere, and the micro-macro projection onto the five collision
//! invariants.

use crate::error::{Error, Result};
use crate::tolerances::TOL_MOMENT;

/// Global Maxwellian `(2 pi)^(-3/2) exp(-|v|^2 / 2)`.
#[inline]
pub fn maxwellian(v: [f64; 3]) -> f64 {
    let vsq = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    (2.0 * std::f64::consts::PI).powf(-1.5) * (-0.5 * vsq).exp()
}

#[inline]
pub fn sqrt_maxwellian(v: [f64; 3]) -> f64 {
    maxwellian(v).sqrt()
}

/// Nodal values over the velocity grid.
pub type Profile = Vec<f64>;

/// Cell-centered uniform tensor grid on `[-R, R]^3`.
///
/// Nodes sit at cell midpoints `-R + (i + 1/2) h` with `h = 2R/n`, so the
/// quadrature weight is the uniform cell volume `h^3`. On Gaussian-type
/// integrands the midpoint rule shares the spectral accuracy of the
/// trapezoidal rule and, unlike the endpoint-node variant, keeps the
/// discrete second moment inside the acceptance window on the default
/// grids.
#[derive(Clone, Debug)]
pub struct VelocityGrid {
    pub per_axis_count: usize,
    pub truncation_radius: f64,
    /// Cell width.
    pub spacing: f64,
    /// Per-axis node coordinates (length `per_axis_count`).
    pub axis: Vec<f64>,
    /// Flattened nodes, index `(ix * n + iy) * n + iz`.
    pub nodes: Vec<[f64; 3]>,
    /// Uniform quadrature weight per node (`h^3`).
    pub cell_weight: f64,
    /// Maxwellian and its square root tabulated on the nodes.
    pub mu: Vec<f64>,
    pub sqrt_mu: Vec<f64>,
    /// Moment tolerance this grid was accepted under.
    pub accepted_tol: f64,
}

impl VelocityGrid {
    /// Build a grid and enforce the acceptance invariants at the default
    /// moment tolerance: `per_axis_count >= 4` even, radius `>= 6`,
    /// discrete Maxwellian mass within `TOL_MOMENT` of 1 and second
    /// moment within `100 * TOL_MOMENT` of 3.
    pub fn build(per_axis_count: usize, truncation_radius: f64) -> Result<Self> {
        if truncation_radius < 6.0 {
            return Err(Error::GridRejected(format!(
                "truncation radius {truncation_radius} below 6"
            )));
        }
        Self::build_with_tolerance(per_axis_count, truncation_radius, TOL_MOMENT)
    }

    /// Build with a caller-chosen moment tolerance. Radii down to 4 are
    /// admitted here; reduced grids for dense semigroup work document
    /// their tolerance through `accepted_tol`.
    pub fn build_with_tolerance(
        per_axis_count: usize,
        truncation_radius: f64,
        tol: f64,
    ) -> Result<Self> {
        if per_axis_count < 4 || per_axis_count % 2 != 0 {
            return Err(Error::GridRejected(format!(
                "per-axis count {per_axis_count} must be even and at least 4"
            )));
        }
        if truncation_radius < 4.0 {
            return Err(Error::GridRejected(format!(
                "truncation radius {truncation_radius} below 4"
            )));
        }
        let n = per_axis_count;
        let r = truncation_radius;
        let h = 2.0 * r / n as f64;
        let axis: Vec<f64> = (0..n).map(|i| -r + (i as f64 + 0.5) * h).collect();
        let mut nodes = Vec::with_capacity(n * n * n);
        for &vx in &axis {
            for &vy in &axis {
                for &vz in &axis {
                    nodes.push([vx, vy, vz]);
                }
            }
        }
        let mu: Vec<f64> = nodes.iter().map(|&v| maxwellian(v)).collect();
        let sqrt_mu: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
        let grid = Self {
            per_axis_count: n,
            truncation_radius: r,
            spacing: h,
            axis,
            nodes,
            cell_weight: h * h * h,
            mu,
            sqrt_mu,
            accepted_tol: tol,
        };
        let mass = grid.discrete_mass();
        if (mass - 1.0).abs() > tol {
            return Err(Error::GridRejected(format!(
                "Maxwellian mass {mass:.9} deviates from 1 by {:.3e} (tol {tol:.1e}); grid under-resolved",
                (mass - 1.0).abs()
            )));
        }
        let m2 = grid.discrete_second_moment();
        let m2_tol = if tol == TOL_MOMENT { 100.0 * tol } else { tol };
        if (m2 - 3.0).abs() > m2_tol {
            return Err(Error::GridRejected(format!(
                "Maxwellian second moment {m2:.9} deviates from 3 by {:.3e} (tol {m2_tol:.1e})",
                (m2 - 3.0).abs()
            )));
        }
        Ok(grid)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn flat_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.per_axis_count + iy) * self.per_axis_count + iz
    }

    pub fn discrete_mass(&self) -> f64 {
        self.cell_weight * self.mu.iter().sum::<f64>()
    }

    pub fn discrete_second_moment(&self) -> f64 {
        self.cell_weight
            * self
                .nodes
                .iter()
                .zip(&self.mu)
                .map(|(v, m)| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) * m)
                .sum::<f64>()
    }

    /// Discrete inner product `sum_i w f_i g_i`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.node_count());
        self.cell_weight * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    /// `sum_i w nu_i f_i g_i`: the collision-frequency weighted product.
    pub fn weighted_inner(&self, nu: &[f64], f: &[f64], g: &[f64]) -> f64 {
        self.cell_weight
            * nu.iter()
                .zip(f.iter().zip(g))
                .map(|(n, (a, b))| n * a * b)
                .sum::<f64>()
    }

    /// Profile of `sqrt(mu)` as a vector.
    pub fn sqrt_mu_profile(&self) -> Profile {
        self.sqrt_mu.clone()
    }
}

/// Quadrature on the unit sphere: product of Gauss-Legendre panels in
/// `cos theta` (split at the equator so the cutoff factor `|cos theta|`
/// stays analytic per panel) and a uniform rule in azimuth. The node set
/// is symmetric under `omega -> -omega` and the weights sum to `4 pi`.
#[derive(Clone, Debug)]
pub struct AngularQuadrature {
    pub directions: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Positive-hemisphere polar nodes `(cos theta, weight)` with weights
    /// doubled, exploiting the antipodal symmetry of the collision map.
    pub half_polar: Vec<(f64, f64)>,
    pub azimuth: Vec<f64>,
    pub azimuth_weight: f64,
}

impl AngularQuadrature {
    /// `n_polar` even Gauss-Legendre nodes in `cos theta` (half per
    /// hemisphere), `n_azimuth` even uniform azimuthal nodes.
    pub fn product(n_polar: usize, n_azimuth: usize) -> Result<Self> {
        if n_polar < 2 || n_polar % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "polar count {n_polar} must be even and at least 2"
            )));
        }
        if n_azimuth < 2 || n_azimuth % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "azimuth count {n_azimuth} must be even and at least 2"
            )));
        }
        let half = n_polar / 2;
        let (gl_nodes, gl_weights) = legendre_rule(half);
        // Map from [-1, 1] to [0, 1]; mirror for the lower hemisphere.
        let mut cos_nodes = Vec::with_capacity(n_polar);
        for (x, w) in gl_nodes.iter().zip(&gl_weights) {
            cos_nodes.push((0.5 * (x + 1.0), 0.5 * w));
        }
        let mut polar: Vec<(f64, f64)> = Vec::with_capacity(n_polar);
        for &(c, w) in &cos_nodes {
            polar.push((c, w));
            polar.push((-c, w));
        }
        let azimuth: Vec<f64> = (0..n_azimuth)
            .map(|k| 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n_azimuth as f64)
            .collect();
        let azimuth_weight = 2.0 * std::f64::consts::PI / n_azimuth as f64;

        let mut directions = Vec::with_capacity(n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(n_polar * n_azimuth);
        for &(c, wp) in &polar {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for &phi in &azimuth {
                directions.push([s * phi.cos(), s * phi.sin(), c]);
                weights.push(wp * azimuth_weight);
            }
        }
        let half_polar: Vec<(f64, f64)> = cos_nodes.iter().map(|&(c, w)| (c, 2.0 * w)).collect();
        Ok(Self {
            directions,
            weights,
            half_polar,
            azimuth,
            azimuth_weight,
        })
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the Legendre recurrence.
pub fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            if n == 1 {
                p1 = x;
            }
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Hydrodynamic moments `(a, b, c)` of a perturbation profile: density,
/// velocity and temperature fluctuations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FluidMoments {
    pub a: f64,
    pub b: [f64; 3],
    pub c: f64,
}

/// Orthonormal basis of the discrete invariant subspace
/// `span{sqrt(mu), v sqrt(mu), (|v|^2 - 3)/2 sqrt(mu)}`, built by
/// modified Gram-Schmidt under the grid inner product.
pub fn invariant_basis(grid: &VelocityGrid) -> [Profile; 5] {
    let n = grid.node_count();
    let mut raw: Vec<Profile> = Vec::with_capacity(5);
    raw.push(grid.sqrt_mu.clone());
    for axis in 0..3 {
        raw.push(
            (0..n)
                .map(|i| grid.nodes[i][axis] * grid.sqrt_mu[i])
                .collect(),
        );
    }
    raw.push(
        (0..n)
            .map(|i| {
                let v = grid.nodes[i];
                0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - 3.0) * grid.sqrt_mu[i]
            })
            .collect(),
    );
    let mut basis: Vec<Profile> = Vec::with_capacity(5);
    for mut cand in raw {
        for b in &basis {
            let c = grid.inner(&cand, b);
            for (x, y) in cand.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        let nrm = grid.norm(&cand);
        cand.iter_mut().for_each(|x| *x /= nrm);
        basis.push(cand);
    }
    basis.try_into().expect("five basis vectors")
}

/// Micro-macro split: returns the moments `(a, b, c)` and the macro part
/// `P f` on the nodes. The residual `f - Pf` is orthogonal to the
/// invariant basis to rounding accuracy.
pub fn project_p(f: &[f64], grid: &VelocityGrid, basis: &[Profile; 5]) -> (FluidMoments, Profile) {
    let n = grid.node_count();
    debug_assert_eq!(f.len(), n);
    let mut pf = vec![0.0; n];
    for b in basis {
        let coeff = grid.inner(f, b);
        for (p, bv) in pf.iter_mut().zip(b) {
            *p += coeff * bv;
        }
    }
    let mut m = FluidMoments::default();
    let w = grid.cell_weight;
    let mut a = 0.0;
    let mut b = [0.0; 3];
    let mut c = 0.0;
    for i in 0..n {
        let s = grid.sqrt_mu[i] * f[i];
        let v = grid.nodes[i];
        let vsq = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        a += s;
        b[0] += v[0] * s;
        b[1] += v[1] * s;
        b[2] += v[2] * s;
        c += (vsq / 3.0 - 1.0) * s;
    }
    m.a = w * a;
    m.b = [w * b[0], w * b[1], w * b[2]];
    m.c = w * c;
    (m, pf)
}

/// Node-index maps of the 48 signed axis permutations (the cubic
/// symmetry group of the grid). `maps[g][i]` is the node that `g` sends
/// node `i` to.
pub fn signed_permutation_maps(grid: &VelocityGrid) -> Vec<Vec<u32>> {
    let n = grid.per_axis_count;
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut maps = Vec::with_capacity(48);
    for perm in perms {
        for flips in 0..8usize {
            let flip = [flips & 1 != 0, flips & 2 != 0, flips & 4 != 0];
            let mut map = vec![0u32; grid.node_count()];
            for ix in 0..n {
                for iy in 0..n {
                    for iz in 0..n {
                        let src = [ix, iy, iz];
                        let mut dst = [0usize; 3];
                        for axis in 0..3 {
                            let s = src[perm[axis]];
                            dst[axis] = if flip[axis] { n - 1 - s } else { s };
                        }
                        map[grid.flat_index(ix, iy, iz)] =
                            grid.flat_index(dst[0], dst[1], dst[2]) as u32;
                    }
                }
            }
            maps.push(map);
        }
    }
    maps
}

/// Centered second-order velocity derivative along one axis, one-sided
/// (still second order) at the truncation boundary.
pub fn v_derivative(grid: &VelocityGrid, profile: &[f64], axis: usize) -> Profile {
    let n = grid.per_axis_count;
    let h = grid.spacing;
    let stride = match axis {
        0 => n * n,
        1 => n,
        _ => 1,
    };
    let mut out = vec![0.0; profile.len()];
    let idx = |ix: usize, iy: usize, iz: usize| (ix * n + iy) * n + iz;
    for ix in 0..n {
        for iy in 0..n {
            for iz in 0..n {
                let pos = [ix, iy, iz][axis];
                let i = idx(ix, iy, iz);
                out[i] = if pos == 0 {
                    (-3.0 * profile[i] + 4.0 * profile[i + stride] - profile[i + 2 * stride])
                        / (2.0 * h)
                } else if pos == n - 1 {
                    (3.0 * profile[i] - 4.0 * profile[i - stride] + profile[i - 2 * stride])
                        / (2.0 * h)
                } else {
                    (profile[i + stride] - profile[i - stride]) / (2.0 * h)
                };
            }
        }
    }
    out
}

/// Macro profile `(a + b . v + c (|v|^2 - 3)/2) sqrt(mu)`.
pub fn reconstruct_macro(m: &FluidMoments, grid: &VelocityGrid) -> Profile {
    grid.nodes
        .iter()
        .zip(&grid.sqrt_mu)
        .map(|(v, s)| {
            let vsq = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            (m.a + m.b[0] * v[0] + m.b[1] * v[1] + m.b[2] * v[2] + m.c * 0.5 * (vsq - 3.0)) * s
        })
        .collect()
}
