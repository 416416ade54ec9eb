//! Linear Poincare flow cocycles of vector fields:
//! Lyapunov spectra, Oseledec splittings, domination, Pesin blocks,
//! quasi-hyperbolic strings and periodic orbits closed from near returns.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod field;
pub mod flow;
pub mod linalg;
pub mod measures;
pub mod orbits;
pub mod pesin;
pub mod poincare;
pub mod spectra;

pub use error::{Error, ErrorKind, Result};
