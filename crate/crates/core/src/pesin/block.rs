use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{blocks_per_gap, check_stable_groups, direct_gap_norms, gap_logs, LOG_SLACK};
use crate::error::{Error, Result};
use crate::spectra::{CocycleSequence, SplittingEstimate};

/// Pesin block `Lambda^T_eta(C)`: products over `J` blocks of length `T`
/// stay below `C e^{-J eta}` on `E^s` and above `C^{-1} e^{J eta}` on `E^u`,
/// and the base point keeps distance `1/C` from the singularities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PesinBlockParams {
    /// Block time `T` (a multiple of the cocycle step).
    pub step: f64,
    /// Rate per block.
    pub eta: f64,
    pub c: f64,
    /// Number of splitting groups forming `E^s`.
    #[serde(default = "default_stable")]
    pub stable_groups: usize,
    /// Largest `J` checked.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_stable() -> usize {
    1
}

fn default_horizon() -> usize {
    100
}

impl PesinBlockParams {
    pub fn new(step: f64, eta: f64, c: f64) -> Result<Self> {
        let p = Self {
            step,
            eta,
            c,
            stable_groups: 1,
            horizon: default_horizon(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.eta > 0.0) || !(self.c >= 1.0) || self.horizon == 0 {
            return Err(Error::Config(
                "Pesin block needs T > 0, eta > 0, C >= 1, horizon >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn clearance(&self) -> f64 {
        1.0 / self.c
    }
}

/// Outcome of a block-membership test with per-`J` log slacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PesinReport {
    pub member: bool,
    /// Number of products checked.
    pub horizon: usize,
    /// `log C - J eta - log prod |psi*|E^s|` for `J = 1..=horizon`.
    pub stable_slack: Vec<f64>,
    /// `log prod m(psi*|E^u) - J eta + log C`.
    pub unstable_slack: Vec<f64>,
    pub clearance: f64,
    pub clearance_ok: bool,
}

impl PesinReport {
    pub fn worst_stable(&self) -> f64 {
        self.stable_slack
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn worst_unstable(&self) -> f64 {
        self.unstable_slack
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Direct evaluation of the block conditions for the base point `start`.
pub fn pesin_block_test(
    c: &CocycleSequence,
    split: &SplittingEstimate,
    p: &PesinBlockParams,
    start: usize,
) -> Result<PesinReport> {
    p.validate()?;
    check_stable_groups(split, p.stable_groups)?;
    let g = blocks_per_gap(c, p.step)?;
    let available = c.len().saturating_sub(start) / g;
    let horizon = available.min(p.horizon);
    if horizon == 0 {
        return Err(Error::InsufficientData(format!(
            "no full block of length {} after sample {start}",
            p.step
        )));
    }
    let log_c = p.c.ln();
    let (mut ls, mut lu) = (0.0, 0.0);
    let mut stable_slack = Vec::with_capacity(horizon);
    let mut unstable_slack = Vec::with_capacity(horizon);
    for j in 0..horizon {
        let (ns, mu, _) = direct_gap_norms(c, split, p.stable_groups, start + j * g, g);
        ls += ns.ln();
        lu += mu.ln();
        let jj = (j + 1) as f64;
        stable_slack.push(log_c - jj * p.eta - ls);
        unstable_slack.push(lu - jj * p.eta + log_c);
    }
    let clearance = c.clearance(start);
    let clearance_ok = clearance >= p.clearance();
    let member = clearance_ok
        && stable_slack.iter().all(|&s| s >= -LOG_SLACK)
        && unstable_slack.iter().all(|&s| s >= -LOG_SLACK);
    Ok(PesinReport {
        member,
        horizon,
        stable_slack,
        unstable_slack,
        clearance,
        clearance_ok,
    })
}

/// Samples of the cocycle lying in the block, checked over the full horizon
/// (samples too close to the end are excluded).
pub fn block_members(
    c: &CocycleSequence,
    split: &SplittingEstimate,
    p: &PesinBlockParams,
) -> Result<Vec<usize>> {
    p.validate()?;
    check_stable_groups(split, p.stable_groups)?;
    let g = blocks_per_gap(c, p.step)?;
    let n = c.len();
    if n < g * p.horizon {
        return Ok(Vec::new());
    }
    let logs: Vec<(f64, f64)> = (0..=n - g)
        .into_par_iter()
        .map(|s| gap_logs(c, split, p.stable_groups, s, g))
        .collect();
    let log_c = p.c.ln();
    let last = n - g * p.horizon;
    let members = (0..=last)
        .into_par_iter()
        .filter(|&s| {
            if c.clearance(s) < p.clearance() {
                return false;
            }
            let (mut ls, mut lu) = (0.0, 0.0);
            for j in 0..p.horizon {
                let (a, b) = logs[s + j * g];
                ls += a;
                lu += b;
                let bound = (j + 1) as f64 * p.eta - log_c;
                if -ls < bound - LOG_SLACK || lu < bound - LOG_SLACK {
                    return false;
                }
            }
            true
        })
        .collect();
    Ok(members)
}
