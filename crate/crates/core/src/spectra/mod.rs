//! Lyapunov spectra of `psi*_T` cocycles, finite-time Oseledec splittings,
//! domination and cone tests, exterior powers.

mod cocycle;
mod domination;
mod exterior;
mod lyapunov;
mod oseledec;

pub use cocycle::{build_cocycle, build_cocycle_with, CocycleKind, CocycleMeta, CocycleSequence};
pub use domination::{
    check_cone_invariance, check_domination, find_invariant_cone, ConeParams, DominationReport,
    DEFAULT_CONE_SAMPLES,
};
pub use exterior::{exterior_power, exterior_spectrum};
pub use lyapunov::{
    benettin_spectrum, index_of, perturbation_margin, time_reversal_spectrum, ExponentGroup,
    LyapunovSpectrum, GROUPING_FLOOR,
};
pub use oseledec::{oseledec_filtration, oseledec_filtration_with, SplittingEstimate};
