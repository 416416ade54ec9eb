use nalgebra::DMatrix;

use super::PeriodicOrbit;
use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::linalg::generic_orthogonal;
use crate::poincare::{poincare_step, NormalFrame, PoincareConfig};
use crate::spectra::{CocycleKind, LyapunovSpectrum};

/// Longest single block when splitting a period.
const MAX_BLOCK: f64 = 0.5;
const WARMUP_CYCLES: usize = 200;
const MEASURE_CYCLES: usize = 200;

/// One-period linear Poincare flow around a closed orbit, expressed in the
/// frame at `p`.
#[derive(Debug, Clone)]
pub struct Monodromy {
    /// Blocks over one period, each ending with the change to the frame at
    /// the next orbit point.
    pub blocks: Vec<DMatrix<f64>>,
    /// Product of the blocks.
    pub matrix: DMatrix<f64>,
}

/// `psi_Pi` (unscaled) or `psi*_Pi` (scaled) at the base point of the orbit.
///
/// Each block restarts from the stored orbit point at its start time, so
/// the instability of the orbit cannot push the integration off it.
pub fn monodromy(
    spec: &VectorFieldSpec,
    orbit: &PeriodicOrbit,
    cfg: &PoincareConfig,
    kind: CocycleKind,
) -> Result<Monodromy> {
    let f0 = NormalFrame::at(spec, &orbit.point, cfg)?;
    let k = (orbit.period / MAX_BLOCK).ceil().max(1.0) as usize;
    let h = orbit.period / k as f64;
    let mut frame = f0.clone();
    let mut blocks = Vec::with_capacity(k);
    for i in 0..k {
        let s = poincare_step(spec, &frame, h, cfg)?;
        let next = if i + 1 == k {
            f0.clone()
        } else {
            s.frame_out
                .moved_to(spec, &orbit.state_at(h * (i + 1) as f64), cfg)?
        };
        let change = next.basis.transpose() * &s.frame_out.basis;
        blocks.push(match kind {
            CocycleKind::Scaled => change * s.scaled(),
            CocycleKind::Unscaled => change * &s.lpf,
        });
        frame = next;
    }
    let m = f0.basis.ncols();
    let matrix = blocks
        .iter()
        .fold(DMatrix::identity(m, m), |acc, b| b * acc);
    Ok(Monodromy { blocks, matrix })
}

/// Exponents `log|nu_i| / Pi` of the `psi*` monodromy, computed by
/// orthogonal iteration over the periodic block sequence so that strongly
/// contracting multipliers keep full relative accuracy.
pub fn periodic_spectrum(
    spec: &VectorFieldSpec,
    orbit: &PeriodicOrbit,
    cfg: &PoincareConfig,
) -> Result<LyapunovSpectrum> {
    let mono = monodromy(spec, orbit, cfg, CocycleKind::Scaled)?;
    let m = mono.matrix.nrows();
    let mut q = generic_orthogonal(m, 0x0a0b);
    let mut sums = vec![0.0; m];
    for cycle in 0..WARMUP_CYCLES + MEASURE_CYCLES {
        for b in &mono.blocks {
            let (qn, r) = (b * &q).qr().unpack();
            if cycle >= WARMUP_CYCLES {
                for (j, s) in sums.iter_mut().enumerate() {
                    let l = r[(j, j)].abs().ln();
                    if !l.is_finite() {
                        return Err(Error::Numerical("singular monodromy block".into()));
                    }
                    *s += l;
                }
            }
            q = qn;
        }
    }
    let time = MEASURE_CYCLES as f64 * orbit.period;
    let mut exps: Vec<f64> = sums.iter().map(|s| s / time).collect();
    exps.sort_by(f64::total_cmp);
    let moduli = eigen_moduli(&mono.matrix)?;
    // complex pairs share a modulus; their separate QR diagonals only agree on average
    let mut i = 0;
    while i < m {
        let mut j = i + 1;
        while j < m && (moduli[j] / moduli[i]).ln().abs() < 1e-6 {
            j += 1;
        }
        if j - i > 1 {
            let mean = exps[i..j].iter().sum::<f64>() / (j - i) as f64;
            exps[i..j].iter_mut().for_each(|v| *v = mean);
        }
        i = j;
    }
    LyapunovSpectrum::from_exponents(exps)
}

/// Ascending eigenvalue moduli of a monodromy matrix.
fn eigen_moduli(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let scale = m.amax();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Numerical("degenerate monodromy matrix".into()));
    }
    let ev = (m / scale).complex_eigenvalues();
    let mut out: Vec<f64> = ev.iter().map(|z| z.norm() * scale).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigenvalue computation failed".into()));
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// All exponents bounded away from zero by the grouping tolerance.
pub fn is_hyperbolic(s: &LyapunovSpectrum) -> bool {
    s.exponents.iter().all(|v| v.abs() > s.tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::WorkingBox;
    use crate::flow::IntegratorConfig;
    use crate::spectra::index_of;
    use nalgebra::DVector;
    use std::f64::consts::PI;

    fn tight(d: usize) -> IntegratorConfig {
        IntegratorConfig::new(WorkingBox::cube(d, 10.0)).with_tolerances(1e-12, 1e-12)
    }

    #[test]
    fn hopf_floquet() {
        let spec = VectorFieldSpec::hopf_cylinder();
        let ic = tight(3);
        let pc = PoincareConfig::new(&spec, ic.clone());
        let orbit =
            PeriodicOrbit::from_point(&spec, DVector::from_vec(vec![1.0, 0.0, 0.0]), 2.0 * PI, &ic)
                .unwrap();
        let s = periodic_spectrum(&spec, &orbit, &pc).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s.exponents[0] + 2.0).abs() < 1e-3);
        assert!((s.exponents[1] + 1.0).abs() < 1e-3);
        assert!(is_hyperbolic(&s));
        assert_eq!(index_of(&s), 2);
        let rotated = orbit.rephased(&spec, 1.3, &ic).unwrap();
        let r = periodic_spectrum(&spec, &rotated, &pc).unwrap();
        for (a, b) in s.exponents.iter().zip(&r.exponents) {
            assert!((a - b).abs() < 1e-6);
        }
        let scaled = monodromy(&spec, &orbit, &pc, CocycleKind::Scaled)
            .unwrap()
            .matrix;
        let plain = monodromy(&spec, &orbit, &pc, CocycleKind::Unscaled)
            .unwrap()
            .matrix;
        assert!((&scaled - &plain).norm() <= 1e-10 * plain.norm());
    }

    #[test]
    fn planar_limit_cycle() {
        let spec = VectorFieldSpec::planar_limit_cycle();
        let ic = tight(2);
        let pc = PoincareConfig::new(&spec, ic.clone());
        let orbit =
            PeriodicOrbit::from_point(&spec, DVector::from_vec(vec![1.0, 0.0]), 2.0 * PI, &ic)
                .unwrap();
        let s = periodic_spectrum(&spec, &orbit, &pc).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.exponents[0] + 2.0).abs() < 1e-3);
    }
}
