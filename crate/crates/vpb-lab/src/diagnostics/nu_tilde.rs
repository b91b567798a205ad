//! The effective collision frequency entering the weighted sup-norm
//! analysis,
//!
//! ```text
//! nu_tilde = nu + eps^2 [ (v/2) . grad phi + 2 theta(t) v . grad phi
//!                         + vartheta sigma |v|^2 / (1+t)^{1+sigma} ]
//! ```
//!
//! and the check that `(1/eps^2) nu_tilde` stays above the algebraic
//! envelope `eps^{-4/5} (1+t)^{varrho - 1}` with
//! `varrho = (sigma gamma + 2) / (2 - gamma)`.

use crate::collision::collision_frequency;
use crate::error::{Error, Result};
use crate::model::PotentialModel;
use crate::velocity::{AngularQuadrature, VelocityGrid};
use crate::weights::WeightSpec;

pub fn nu_tilde(
    spec: &WeightSpec,
    model: &PotentialModel,
    grid: &VelocityGrid,
    angular: &AngularQuadrature,
    eps: f64,
    t: f64,
    v: [f64; 3],
    grad_phi: [f64; 3],
) -> f64 {
    let nu = collision_frequency(model, grid, angular, v);
    nu_tilde_from_nu(spec, nu, eps, t, v, grad_phi)
}

pub fn nu_tilde_from_nu(
    spec: &WeightSpec,
    nu: f64,
    eps: f64,
    t: f64,
    v: [f64; 3],
    grad_phi: [f64; 3],
) -> f64 {
    let vdotg = v[0] * grad_phi[0] + v[1] * grad_phi[1] + v[2] * grad_phi[2];
    let vsq = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let theta = spec.theta_tilde(t);
    nu + eps
        * eps
        * (0.5 * vdotg
            + 2.0 * theta * vdotg
            + spec.vartheta * spec.sigma_exp * vsq / (1.0 + t).powf(1.0 + spec.sigma_exp))
}

/// `varrho = (sigma gamma + 2) / (2 - gamma)`.
pub fn varrho(spec: &WeightSpec, model: &PotentialModel) -> f64 {
    (spec.sigma_exp * model.gamma + 2.0) / (2.0 - model.gamma)
}

/// Declared sample set for the lower-bound check.
#[derive(Clone, Debug)]
pub struct NuTildeSamples {
    pub times: Vec<f64>,
    /// Every `node_stride`-th grid node is sampled.
    pub node_stride: usize,
}

impl NuTildeSamples {
    pub fn default_set() -> Self {
        Self {
            times: (0..24).map(|i| ((i as f64 * 0.35).exp() - 1.0) * 0.1).collect(),
            node_stride: 7,
        }
    }

    /// Doubled sample density in both time and velocity.
    pub fn refined(&self) -> Self {
        let mut times = Vec::with_capacity(self.times.len() * 2);
        for w in self.times.windows(2) {
            times.push(w[0]);
            times.push(0.5 * (w[0] + w[1]));
        }
        times.push(*self.times.last().unwrap());
        Self {
            times,
            node_stride: (self.node_stride / 2).max(1),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NuTildeCheck {
    /// Minimum over the sample set of
    /// `(nu_tilde / eps^2) / (eps^{-4/5} (1+t)^{varrho-1})`.
    pub min_ratio: f64,
    pub worst_point: (f64, [f64; 3]),
    pub varrho: f64,
}

/// Evaluate the bound with the field samples from `field_bound_fn`
/// (a `(1+t)^{-5/4}`-type sup-norm profile); the field direction is
/// taken adversarially anti-parallel to `v`.
pub fn nu_tilde_bound_check(
    spec: &WeightSpec,
    model: &PotentialModel,
    grid: &VelocityGrid,
    angular: &AngularQuadrature,
    eps: f64,
    field_bound_fn: impl Fn(f64) -> f64,
    samples: &NuTildeSamples,
) -> Result<NuTildeCheck> {
    if model.is_hard() {
        return Err(Error::InvalidParameter(
            "the algebraic envelope is a soft-potential statement".into(),
        ));
    }
    if spec.sigma_exp > 1.0 / 24.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "the envelope requires sigma <= 1/24 (got {})",
            spec.sigma_exp
        )));
    }
    let rho = varrho(spec, model);
    let mut min_ratio = f64::INFINITY;
    let mut worst = (0.0, [0.0; 3]);
    let nodes: Vec<[f64; 3]> = grid
        .nodes
        .iter()
        .cloned()
        .step_by(samples.node_stride)
        .collect();
    let nus: Vec<f64> = nodes
        .iter()
        .map(|&v| collision_frequency(model, grid, angular, v))
        .collect();
    for &t in &samples.times {
        let bound = field_bound_fn(t);
        let envelope = eps.powf(-0.8) * (1.0 + t).powf(rho - 1.0);
        for (v, nu) in nodes.iter().zip(&nus) {
            let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            // Anti-parallel field: v . grad phi = -|v| |grad phi|.
            let grad = if speed > 0.0 {
                [
                    -bound * v[0] / speed,
                    -bound * v[1] / speed,
                    -bound * v[2] / speed,
                ]
            } else {
                [0.0; 3]
            };
            let nt = nu_tilde_from_nu(spec, *nu, eps, t, *v, grad);
            let ratio = (nt / (eps * eps)) / envelope;
            if ratio < min_ratio {
                min_ratio = ratio;
                worst = (t, *v);
            }
        }
    }
    Ok(NuTildeCheck {
        min_ratio,
        worst_point: worst,
        varrho: rho,
    })
}
