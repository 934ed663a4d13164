//! Special functions used by the kernel and bound computations.
//!
//! Everything here is self-contained and works in double precision; Bessel
//! functions are handled in the log domain so that concentrations far beyond
//! the `exp` range stay finite.

mod bessel;
mod beta;
mod gamma;
mod gegenbauer;

pub use bessel::{bessel_ratio, log_bessel_i, log_bessel_i_scaled, BesselOrder};
pub use beta::{reg_inc_beta, reg_inc_beta_split};
pub use gamma::log_gamma;
pub use gegenbauer::gegenbauer;
