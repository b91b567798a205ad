//! Velocity weight families: the polynomial weight `w(v)` attached to the
//! potential, and the time-velocity exponential weight
//! `w_theta(t, v) = exp(theta(t) |v|^2)` with
//! `theta(t) = vartheta (1 + (1+t)^(-sigma))`.

use crate::error::{Error, Result};
use crate::model::PotentialModel;

/// Default cap on the exponential weight strength `vartheta`.
pub const DEFAULT_VARTHETA_CAP: f64 = 0.05;

/// Parameters of the time-velocity weight and of the soft-potential
/// energy functionals.
#[derive(Clone, Copy, Debug)]
pub struct WeightSpec {
    /// Exponential strength, `0 < vartheta <= cap`.
    pub vartheta: f64,
    /// Temporal decay exponent `sigma` in `(0, 1/4]`.
    pub sigma_exp: f64,
    /// Polynomial weight order `ell` for the soft energy functional.
    pub ell: f64,
    /// Auxiliary order `ell0 > 3/4`.
    pub ell0: f64,
}

impl WeightSpec {
    pub fn new(vartheta: f64, sigma_exp: f64, ell: f64, ell0: f64) -> Result<Self> {
        Self::with_cap(vartheta, sigma_exp, ell, ell0, DEFAULT_VARTHETA_CAP)
    }

    pub fn with_cap(
        vartheta: f64,
        sigma_exp: f64,
        ell: f64,
        ell0: f64,
        cap: f64,
    ) -> Result<Self> {
        if !(vartheta > 0.0 && vartheta <= cap) {
            return Err(Error::InvalidParameter(format!(
                "vartheta = {vartheta} outside (0, {cap}]"
            )));
        }
        if !(sigma_exp > 0.0 && sigma_exp <= 0.25) {
            return Err(Error::InvalidParameter(format!(
                "sigma = {sigma_exp} outside (0, 1/4]"
            )));
        }
        if !(ell0 > 0.75) {
            return Err(Error::InvalidParameter(format!(
                "ell0 = {ell0} must exceed 3/4"
            )));
        }
        Ok(Self {
            vartheta,
            sigma_exp,
            ell,
            ell0,
        })
    }

    /// `theta(t) = vartheta (1 + (1+t)^(-sigma))`; sits in
    /// `[vartheta, 2 vartheta]` for all `t >= 0`.
    pub fn theta_tilde(&self, t: f64) -> f64 {
        self.vartheta * (1.0 + (1.0 + t).powf(-self.sigma_exp))
    }

    /// Smallest `ell` admitted by the soft-potential theory for a given
    /// exponent: `max(1, -1/gamma) + 1/2 + ell0`.
    pub fn minimal_ell(gamma: f64, ell0: f64) -> f64 {
        (1.0f64).max(-1.0 / gamma) + 0.5 + ell0
    }
}

/// Polynomial velocity weight: `<v>` for hard potentials, `<v>^gamma` for
/// soft ones, where `<v> = (1 + |v|^2)^(1/2)`.
pub fn weight_w(model: &PotentialModel, v: [f64; 3]) -> f64 {
    let bracket_sq = 1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    if model.is_hard() {
        bracket_sq.sqrt()
    } else {
        bracket_sq.powf(model.gamma / 2.0)
    }
}

/// Exponential time-velocity weight `exp(theta(t) |v|^2)`.
pub fn weight_w_theta(spec: &WeightSpec, t: f64, v: [f64; 3]) -> f64 {
    let vsq = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    (spec.theta_tilde(t) * vsq).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hard_weight_at_origin_is_one() {
        let m = PotentialModel::hard_sphere();
        assert_eq!(weight_w(&m, [0.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn soft_weight_example() {
        // gamma = -1 and |v|^2 = 3 gives <v>^2 = 4, so w = 1/2.
        let m = PotentialModel::soft(-1.0).unwrap();
        let v = [1.0, 1.0, 1.0];
        assert!((weight_w(&m, v) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn theta_tilde_limits() {
        let spec = WeightSpec::new(0.01, 0.25, 2.0, 1.0).unwrap();
        assert!((spec.theta_tilde(0.0) - 0.02).abs() < 1e-15);
        assert!(spec.theta_tilde(1e9) < 0.0101);
    }

    #[test]
    fn spec_rejects_bad_ranges() {
        assert!(WeightSpec::new(0.0, 0.1, 2.0, 1.0).is_err());
        assert!(WeightSpec::new(0.2, 0.1, 2.0, 1.0).is_err());
        assert!(WeightSpec::new(0.01, 0.3, 2.0, 1.0).is_err());
        assert!(WeightSpec::new(0.01, 0.1, 2.0, 0.5).is_err());
    }

    proptest! {
        // theta(t) in [vartheta, 2 vartheta] and w_theta non-increasing in t.
        #[test]
        fn weight_monotone_in_time(
            t1 in 0.0f64..500.0,
            dt in 0.0f64..500.0,
            vx in -8.0f64..8.0,
            vy in -8.0f64..8.0,
            vz in -8.0f64..8.0,
        ) {
            let spec = WeightSpec::new(0.02, 1.0 / 24.0, 2.0, 1.0).unwrap();
            let v = [vx, vy, vz];
            let w1 = weight_w_theta(&spec, t1, v);
            let w2 = weight_w_theta(&spec, t1 + dt, v);
            prop_assert!(w2 <= w1 * (1.0 + 1e-12));
            let th = spec.theta_tilde(t1);
            prop_assert!(th >= spec.vartheta && th <= 2.0 * spec.vartheta);
        }
    }
}
