//! Pesin blocks, quasi-hyperbolic strings and near returns along sampled
//! orbits.

mod block;
mod returns;
mod scan;

pub use block::{block_members, pesin_block_test, PesinBlockParams, PesinReport};
pub use returns::{near_return_detect, near_return_detect_with, ReturnCandidate, ReturnOptions};
pub use scan::{quasi_hyperbolic_scan, quasi_hyperbolic_scan_with, ScanOptions, StringCertificate};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{mininorm, renormalize, spectral_norm};
use crate::spectra::{CocycleSequence, SplittingEstimate};

/// Tolerance on log inequalities that hold with equality in exact arithmetic.
pub(crate) const LOG_SLACK: f64 = 1e-9;

/// Number of cocycle blocks in one gap of length `t`.
pub(crate) fn blocks_per_gap(c: &CocycleSequence, t: f64) -> Result<usize> {
    let g = (t / c.step).round();
    if !(g >= 1.0) || (g * c.step - t).abs() > 1e-9 * t.max(c.step) {
        return Err(Error::Config(format!(
            "gap time {t} is not a positive multiple of the block time {}",
            c.step
        )));
    }
    Ok(g as usize)
}

/// `(log |P|E|, log m(P|F))` for `P` the product of `g` blocks from sample
/// `s`, with `E` the first `stable` groups of the splitting and `F` the rest.
pub(crate) fn gap_logs(
    c: &CocycleSequence,
    split: &SplittingEstimate,
    stable: usize,
    s: usize,
    g: usize,
) -> (f64, f64) {
    let k = split.groups();
    let mut e = split.sum(s, 0..stable);
    let mut f = split.sum(s, stable..k);
    let (mut le, mut lf) = (0.0, 0.0);
    for a in &c.blocks[s..s + g] {
        e = a * e;
        f = a * f;
        le += renormalize(&mut e);
        lf += renormalize(&mut f);
    }
    (le + spectral_norm(&e).ln(), lf + mininorm(&f).ln())
}

/// The same quantities through an explicit product, for re-verification,
/// with a forward rounding bound on the entries of `P v` for unit `v`.
pub(crate) fn direct_gap_norms(
    c: &CocycleSequence,
    split: &SplittingEstimate,
    stable: usize,
    s: usize,
    g: usize,
) -> (f64, f64, f64) {
    let p: DMatrix<f64> = c.product(s, s + g);
    let e = &p * split.sum(s, 0..stable);
    let f = &p * split.sum(s, stable..split.groups());
    let d = p.nrows() as f64;
    let growth: f64 = c.blocks[s..s + g].iter().map(|a| a.norm()).product();
    let rounding = 4.0 * (g as f64 + 1.0) * d * f64::EPSILON * growth;
    (spectral_norm(&e), mininorm(&f), rounding)
}

pub(crate) fn check_stable_groups(split: &SplittingEstimate, stable: usize) -> Result<()> {
    if stable == 0 || stable >= split.groups() {
        return Err(Error::Config(format!(
            "stable group count {stable} must lie in 1..{}",
            split.groups()
        )));
    }
    Ok(())
}
