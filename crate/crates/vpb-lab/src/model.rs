//! Collision kernel parameters: `|v - v*|^gamma q0(theta)` with the Grad
//! angular cutoff `q0(theta) = C |cos theta|`.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Hard,
    Soft,
}

/// Power-law intermolecular potential with angular cutoff.
#[derive(Clone, Copy, Debug)]
pub struct PotentialModel {
    /// Kernel exponent, `-3 < gamma <= 1`.
    pub gamma: f64,
    /// Amplitude `C > 0` in `q0(theta) = C |cos theta|`.
    pub angular_amplitude: f64,
    pub classification: Classification,
}

impl PotentialModel {
    pub fn new(gamma: f64, angular_amplitude: f64) -> Result<Self> {
        if !(gamma > -3.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {gamma} outside (-3, 1]"
            )));
        }
        if !(angular_amplitude > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "angular amplitude {angular_amplitude} must be positive"
            )));
        }
        let classification = if gamma >= 0.0 {
            Classification::Hard
        } else {
            Classification::Soft
        };
        Ok(Self {
            gamma,
            angular_amplitude,
            classification,
        })
    }

    /// Hard sphere: `gamma = 1`, unit amplitude.
    pub fn hard_sphere() -> Self {
        Self::new(1.0, 1.0).expect("hard sphere parameters are valid")
    }

    /// Maxwell molecules: `gamma = 0`, unit amplitude.
    pub fn maxwell() -> Self {
        Self::new(0.0, 1.0).expect("maxwell parameters are valid")
    }

    pub fn soft(gamma: f64) -> Result<Self> {
        let m = Self::new(gamma, 1.0)?;
        if m.classification != Classification::Soft {
            return Err(Error::InvalidParameter(format!(
                "gamma = {gamma} is not a soft potential"
            )));
        }
        Ok(m)
    }

    pub fn is_hard(&self) -> bool {
        self.classification == Classification::Hard
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_follows_gamma() {
        assert!(PotentialModel::new(1.0, 1.0).unwrap().is_hard());
        assert!(PotentialModel::new(0.0, 1.0).unwrap().is_hard());
        assert!(!PotentialModel::new(-1.0, 1.0).unwrap().is_hard());
    }

    #[test]
    fn range_enforced() {
        assert!(PotentialModel::new(-3.0, 1.0).is_err());
        assert!(PotentialModel::new(1.5, 1.0).is_err());
        assert!(PotentialModel::new(1.0, 0.0).is_err());
    }
}
