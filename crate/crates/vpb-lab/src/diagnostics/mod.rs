//! Evaluation of the analysis-side functionals on computed data: energy
//! and dissipation functionals, weighted sup norms, macroscopic balance
//! residuals, the effective collision frequency bound, characteristic
//! traces with Jacobian brackets, and kinetic-vs-fluid limit errors.

mod balance;
mod characteristics;
mod energy;
mod limits;
mod nu_tilde;

pub use balance::{macro_balance_residual, BalanceResiduals};
pub use characteristics::{
    jacobian_bracket_holds, trace_characteristics, CharacteristicPath, PotentialField,
};
pub use energy::{
    dissipation_soft, energy_hard, energy_soft, weighted_sup_norm, EnergyReport,
};
pub use limits::{hydro_limit_error, micro_part_smallness, HydroLimitRow, HydroLimitTable};
pub use nu_tilde::{nu_tilde, nu_tilde_bound_check, varrho, NuTildeCheck, NuTildeSamples};
