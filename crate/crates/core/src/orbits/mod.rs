//! Periodic orbits: multiple-shooting closure of near-return segments,
//! time reparametrization and shadowing checks, and Floquet-type spectra
//! of the scaled linear Poincare flow.

mod closing;
mod monodromy;
mod shadowing;

pub use closing::{close_orbit, ClosingConfig, PeriodicOrbit};
pub use monodromy::{is_hyperbolic, monodromy, periodic_spectrum, Monodromy};
pub use shadowing::{
    fit_reparametrization, validate_shadowing, ReparamOptions, Reparametrization, ShadowingReport,
};
