use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{blocks_per_gap, check_stable_groups, direct_gap_norms, gap_logs, LOG_SLACK};
use crate::error::{Error, Result};
use crate::spectra::{CocycleSequence, SplittingEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Upper bound on the number of gaps in one string.
    pub max_gaps: usize,
    /// Number of splitting groups forming `E`.
    pub stable_groups: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            max_gaps: 1000,
            stable_groups: 1,
        }
    }
}

/// An `(eta, T)`-quasi-hyperbolic orbit segment on the uniform partition
/// `t_n = n T`, with the data needed to re-check it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringCertificate {
    /// Sample index of `x = phi_0`.
    pub start: usize,
    /// Cocycle blocks per gap.
    pub gap_blocks: usize,
    /// Gap length `T`.
    pub gap: f64,
    /// Rate per unit time.
    pub eta: f64,
    pub stable_groups: usize,
    /// Partition `0 = t_0 < ... < t_k`.
    pub times: Vec<f64>,
    /// `|psi*_T|E(x_n)|` per gap.
    pub e_norms: Vec<f64>,
    /// `m(psi*_T|F(x_n))` per gap.
    pub f_conorms: Vec<f64>,
    /// `-eta t_n - sum_{i<n} log|E_i|`, `n = 0..k-1`.
    pub contraction: Vec<f64>,
    /// `sum_{i>=n} log m(F_i) - eta (t_k - t_n)`.
    pub expansion: Vec<f64>,
    /// `-eta T - log(|E_n| / m(F_n))`.
    pub ratio: Vec<f64>,
}

impl StringCertificate {
    pub fn gaps(&self) -> usize {
        self.e_norms.len()
    }

    /// Sample index of the segment end.
    pub fn end(&self) -> usize {
        self.start + self.gaps() * self.gap_blocks
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Recomputes every norm from explicit block products and re-checks the
    /// three inequality families.
    pub fn verify(&self, c: &CocycleSequence, split: &SplittingEstimate) -> bool {
        let k = self.gaps();
        if k < 2 || self.times.len() != k + 1 || self.end() > c.len() {
            return false;
        }
        if self.stable_groups == 0 || self.stable_groups >= split.groups() {
            return false;
        }
        let close = |a: f64, b: f64, err: f64| (a - b).abs() <= 1e-8 * a.abs().max(b.abs()) + err;
        let mut e = Vec::with_capacity(k);
        let mut f = Vec::with_capacity(k);
        for n in 0..k {
            let (ne, mf, err) = direct_gap_norms(
                c,
                split,
                self.stable_groups,
                self.start + n * self.gap_blocks,
                self.gap_blocks,
            );
            if !close(ne, self.e_norms[n], err) || !close(mf, self.f_conorms[n], err) {
                return false;
            }
            e.push(ne.ln());
            f.push(mf.ln());
        }
        let t = self.gap;
        for n in 0..k {
            if (self.times[n] - n as f64 * t).abs() > 1e-9 * t * k as f64 {
                return false;
            }
            let head: f64 = e[..n].iter().sum();
            if head > -self.eta * n as f64 * t + LOG_SLACK {
                return false;
            }
            let tail: f64 = f[n..].iter().sum();
            if tail < self.eta * (k - n) as f64 * t - LOG_SLACK {
                return false;
            }
            if e[n] - f[n] > -self.eta * t + LOG_SLACK {
                return false;
            }
        }
        true
    }
}

/// Quasi-hyperbolic strings with uniform gaps `t`, using default options.
pub fn quasi_hyperbolic_scan(
    c: &CocycleSequence,
    split: &SplittingEstimate,
    eta: f64,
    t: f64,
) -> Result<Vec<StringCertificate>> {
    quasi_hyperbolic_scan_with(c, split, eta, t, &ScanOptions::default())
}

/// Scans every start sample, extends the partition while the head and
/// per-gap conditions hold, then keeps the longest prefix whose tail
/// condition holds. Strings are reported greedily by start, skipping every
/// start that lies inside an already reported string.
pub fn quasi_hyperbolic_scan_with(
    c: &CocycleSequence,
    split: &SplittingEstimate,
    eta: f64,
    t: f64,
    opts: &ScanOptions,
) -> Result<Vec<StringCertificate>> {
    if !(eta > 0.0) {
        return Err(Error::Config("eta must be positive".into()));
    }
    check_stable_groups(split, opts.stable_groups)?;
    let g = blocks_per_gap(c, t)?;
    let reliable = split.reliable();
    let lo = reliable.start.min(c.len());
    let hi = reliable.end.min(c.len() + 1).saturating_sub(1).max(lo);
    if hi - lo < 2 * g {
        return Ok(Vec::new());
    }
    let logs: Vec<(f64, f64)> = (lo..=hi - g)
        .into_par_iter()
        .map(|s| gap_logs(c, split, opts.stable_groups, s, g))
        .collect();
    let at = |s: usize| logs[s - lo];
    let step = eta * t;

    let ends: Vec<Option<usize>> = (lo..=hi - 2 * g)
        .into_par_iter()
        .map(|s| {
            // prefix conditions
            let mut head = 0.0;
            let mut k = 0;
            while k < opts.max_gaps && s + (k + 1) * g <= hi {
                let (le, lf) = at(s + k * g);
                if head > -step * k as f64 + LOG_SLACK || le - lf > -step + LOG_SLACK {
                    break;
                }
                head += le;
                k += 1;
            }
            // tail condition: P_m - P_n >= 0 for all n < m, P = sum (log m(F) - eta T)
            let mut best = None;
            let mut p = 0.0;
            let mut running_max = 0.0f64;
            for m in 1..=k {
                p += at(s + (m - 1) * g).1 - step;
                if m >= 2 && p >= running_max - LOG_SLACK {
                    best = Some(m);
                }
                running_max = running_max.max(p);
            }
            best
        })
        .collect();

    let mut out = Vec::new();
    let mut furthest = 0;
    for (offset, k) in ends.into_iter().enumerate() {
        let Some(k) = k else { continue };
        let s = lo + offset;
        let end = s + k * g;
        if s < furthest {
            continue;
        }
        furthest = end;
        out.push(certificate(s, k, g, t, eta, opts.stable_groups, &|i| at(i)));
    }
    Ok(out)
}

fn certificate(
    start: usize,
    k: usize,
    g: usize,
    t: f64,
    eta: f64,
    stable_groups: usize,
    at: &dyn Fn(usize) -> (f64, f64),
) -> StringCertificate {
    let logs: Vec<(f64, f64)> = (0..k).map(|n| at(start + n * g)).collect();
    let total_f: f64 = logs.iter().map(|l| l.1).sum();
    let mut contraction = Vec::with_capacity(k);
    let mut expansion = Vec::with_capacity(k);
    let mut ratio = Vec::with_capacity(k);
    let (mut head, mut used_f) = (0.0, 0.0);
    for (n, &(le, lf)) in logs.iter().enumerate() {
        contraction.push(-eta * n as f64 * t - head);
        expansion.push(total_f - used_f - eta * (k - n) as f64 * t);
        ratio.push(-eta * t - (le - lf));
        head += le;
        used_f += lf;
    }
    StringCertificate {
        start,
        gap_blocks: g,
        gap: t,
        eta,
        stable_groups,
        times: (0..=k).map(|n| n as f64 * t).collect(),
        e_norms: logs.iter().map(|l| l.0.exp()).collect(),
        f_conorms: logs.iter().map(|l| l.1.exp()).collect(),
        contraction,
        expansion,
        ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn constant(diag: [f64; 2], t: f64, n: usize) -> (CocycleSequence, SplittingEstimate) {
        let a = DMatrix::from_diagonal(&DVector::from_vec(diag.to_vec()));
        (
            CocycleSequence::constant(a, t, n).unwrap(),
            SplittingEstimate::axes(&[1, 1]).unwrap(),
        )
    }

    #[test]
    fn hyperbolic_spans_window() {
        let t: f64 = 0.5;
        let (c, split) = constant([(-2.0 * t).exp(), (2.0 * t).exp()], t, 40);
        let certs = quasi_hyperbolic_scan(&c, &split, 2.0, t).unwrap();
        assert_eq!(certs.len(), 1);
        assert_eq!(certs[0].start, 0);
        assert_eq!(certs[0].end(), 40);
        assert!((certs[0].duration() - 20.0).abs() < 1e-12);
        assert!(certs[0].verify(&c, &split));
        // the ratio condition fails for a faster rate
        assert!(quasi_hyperbolic_scan(&c, &split, 2.5, t)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn neutral_cocycle_has_no_strings() {
        let (c, split) = constant([1.0, 1.0], 1.0, 30);
        assert!(quasi_hyperbolic_scan(&c, &split, 0.1, 1.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn tampered_certificate_fails() {
        let (c, split) = constant([0.5, 3.0], 1.0, 20);
        let mut cert = quasi_hyperbolic_scan(&c, &split, 0.5, 2.0)
            .unwrap()
            .remove(0);
        assert_eq!(cert.gap_blocks, 2);
        assert!(cert.verify(&c, &split));
        cert.e_norms[1] *= 1.01;
        assert!(!cert.verify(&c, &split));
        let mut cert = quasi_hyperbolic_scan(&c, &split, 0.5, 2.0)
            .unwrap()
            .remove(0);
        cert.eta = 2.0;
        assert!(!cert.verify(&c, &split));
    }

    #[test]
    fn tail_condition_cuts_segment() {
        // expansion collapses in the second half
        let t = 1.0;
        let good = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 2.0]));
        let weak = DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.5]));
        let mut blocks = vec![good; 10];
        blocks.extend(vec![weak; 10]);
        let c = CocycleSequence::new(t, blocks).unwrap();
        let split = SplittingEstimate::axes(&[1, 1]).unwrap();
        let certs = quasi_hyperbolic_scan(&c, &split, 0.2, t).unwrap();
        assert!(!certs.is_empty());
        for cert in &certs {
            assert!(cert.verify(&c, &split));
            assert!(cert.expansion.iter().all(|&m| m >= -1e-9));
        }
        assert_eq!(certs[0].start, 0);
        assert!(certs[0].end() <= 14);
    }
}
