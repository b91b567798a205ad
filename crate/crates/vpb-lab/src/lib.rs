//! Desk-scale numerical laboratory for the scaled Vlasov-Poisson-Boltzmann
//! (VPB) system in the incompressible diffusive regime, together with its
//! Navier-Stokes-Fourier-Poisson (NSFP) limit.
//!
//! The crate is organised around the pieces of the problem:
//!
//! * [`model`], [`velocity`], [`weights`] - collision kernel parameters,
//!   velocity-space discretisation and the velocity weight families.
//! * [`collision`], [`operator`] - quadrature of the collision frequency,
//!   the bilinear collision operator, and the dense linearised operator
//!   `L = nu - K` with its five-dimensional invariant subspace.
//! * [`spectral`] - per-wavenumber linearised semigroup, whole-space norm
//!   synthesis and algebraic decay fits.
//! * [`spatial`], [`solver`] - periodic spatial grids and the split-step
//!   integrator for the full perturbation system.
//! * [`nsfp`] - reference solver for the incompressible NSFP system with
//!   transport coefficients computed from the kinetic operator.
//! * [`diagnostics`] - energy/dissipation functionals, balance-law
//!   residuals, weighted sup norms, characteristics and limit errors.
//!
//! Everything is deterministic: given the same inputs (and seeds where
//! randomness is requested) all routines reproduce bit-identical results
//! independently of the worker-thread count.

pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod model;
pub mod nsfp;
pub mod operator;
pub mod collision;
pub mod rates;
pub mod solver;
pub mod spatial;
pub mod spectral;
pub mod tolerances;
pub mod velocity;
pub mod weights;

pub use error::{Error, Result};
pub use num_complex;
pub use model::PotentialModel;
pub use operator::LinearizedOperator;
pub use velocity::{AngularQuadrature, VelocityGrid};
pub use weights::WeightSpec;
