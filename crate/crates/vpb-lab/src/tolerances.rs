//! Named tolerances shared across the crate.
//!
//! These sit far above double-precision rounding noise but below the
//! discretisation error of any grid this laboratory accepts, so a failure
//! indicates a broken scheme rather than floating-point jitter.

/// Relative symmetry tolerance for assembled operators, measured against
/// the norm of the collision-frequency diagonal.
pub const TOL_SYM: f64 = 1e-9;

/// Absolute tolerance on quadrature moments of the Maxwellian (grid
/// acceptance: mass and second moment).
pub const TOL_MOMENT: f64 = 1e-6;

/// Relative tolerance on collision-invariant moments of the bilinear
/// collision operator.
pub const TOL_CONS: f64 = 1e-6;

/// Relative residual tolerance for linear solves (micro inversion,
/// implicit collision steps, Poisson consistency).
pub const TOL_SOLVE: f64 = 1e-8;

/// Relative per-step tolerance for mode-energy monotonicity.
pub const TOL_MONO: f64 = 1e-8;

/// Kernel test threshold: eigenvalues of `L` below this multiple of
/// `max nu` count as null directions.
pub const TOL_KERNEL: f64 = 1e-8;
