use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::CocycleSequence;
use crate::error::{Error, Result};
use crate::linalg::{generic_orthogonal, qr_log_diag, singular_values};

/// Smallest grouping tolerance; larger when the estimate is noisier.
pub const GROUPING_FLOOR: f64 = 1e-3;

const STANDARD_ERROR_FACTOR: f64 = 5.0;
const BATCHES: usize = 20;
const INITIAL_FRAME_SEED: u64 = 0x4c59_4150;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentGroup {
    pub value: f64,
    pub multiplicity: usize,
}

/// Ascending exponents per unit time, grouped into distinct values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpectrum {
    pub exponents: Vec<f64>,
    /// Batch-means standard error of each exponent (zeros when unknown).
    pub std_errors: Vec<f64>,
    pub groups: Vec<ExponentGroup>,
    /// Exponents closer than this were merged.
    pub tolerance: f64,
}

impl LyapunovSpectrum {
    /// Sorts and groups with tolerance `max(GROUPING_FLOOR, 5 * max(std_errors))`.
    pub fn new(mut exponents: Vec<f64>, std_errors: Vec<f64>) -> Result<Self> {
        if exponents.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite Lyapunov exponent".into()));
        }
        let mut order: Vec<usize> = (0..exponents.len()).collect();
        order.sort_by(|&a, &b| exponents[a].total_cmp(&exponents[b]));
        let errs = if std_errors.len() == exponents.len() {
            order.iter().map(|&i| std_errors[i]).collect()
        } else {
            vec![0.0; exponents.len()]
        };
        exponents = order.iter().map(|&i| exponents[i]).collect();
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        let tol = GROUPING_FLOOR.max(STANDARD_ERROR_FACTOR * worst);
        Ok(Self::with_tolerance(exponents, errs, tol))
    }

    /// Exponents known exactly (e.g. from a monodromy matrix).
    pub fn from_exponents(exponents: Vec<f64>) -> Result<Self> {
        Self::new(exponents, Vec::new())
    }

    fn with_tolerance(exponents: Vec<f64>, std_errors: Vec<f64>, tolerance: f64) -> Self {
        let mut groups: Vec<(f64, usize)> = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for &v in &exponents {
            match groups.last_mut() {
                Some((sum, count)) if v - last <= tolerance => {
                    *sum += v;
                    *count += 1;
                }
                _ => groups.push((v, 1)),
            }
            last = v;
        }
        let groups = groups
            .into_iter()
            .map(|(sum, count)| ExponentGroup {
                value: sum / count as f64,
                multiplicity: count,
            })
            .collect();
        Self {
            exponents,
            std_errors,
            groups,
            tolerance,
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Smallest gap between distinct grouped values (`+inf` for one group).
    pub fn gap_min(&self) -> f64 {
        self.groups
            .windows(2)
            .map(|w| w[1].value - w[0].value)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.multiplicity).collect()
    }

    pub fn largest(&self) -> f64 {
        self.exponents.last().copied().unwrap_or(f64::NAN)
    }

    pub fn smallest(&self) -> f64 {
        self.exponents.first().copied().unwrap_or(f64::NAN)
    }

    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }
}

/// Benettin QR estimate: push an orthonormal frame through the blocks,
/// re-factor every block and average `log|diag R|`. The first tenth of the
/// blocks is used only to align the frame.
pub fn benettin_spectrum(c: &CocycleSequence) -> Result<LyapunovSpectrum> {
    let n = c.len();
    if n == 0 {
        return Err(Error::InsufficientData("cocycle has no blocks".into()));
    }
    let m = c.dimension();
    let burn = n / 10;
    let used = n - burn;
    let batches = BATCHES.min(used);
    let mut q: DMatrix<f64> = generic_orthogonal(m, INITIAL_FRAME_SEED);
    let mut totals = vec![0.0; m];
    let mut batch_sums = vec![vec![0.0; m]; batches];
    let mut w: DMatrix<f64> = DMatrix::zeros(m, m);
    let mut logs = vec![0.0; m];
    for (i, block) in c.blocks.iter().enumerate() {
        w.gemm(1.0, block, &q, 0.0);
        if !qr_log_diag(&mut w, &mut logs) {
            return Err(Error::Numerical(format!(
                "degenerate QR factor at block {i}"
            )));
        }
        std::mem::swap(&mut q, &mut w);
        if i >= burn {
            let batch = &mut batch_sums[(i - burn) * batches / used];
            for (j, &l) in logs.iter().enumerate() {
                totals[j] += l;
                batch[j] += l;
            }
        }
    }
    let time = used as f64 * c.step;
    let exponents: Vec<f64> = totals.iter().map(|s| s / time).collect();
    let std_errors = if batches >= 2 {
        let sizes: Vec<usize> = (0..batches)
            .map(|b| ((b + 1) * used).div_ceil(batches) - (b * used).div_ceil(batches))
            .collect();
        (0..m)
            .map(|j| {
                let means: Vec<f64> = batch_sums
                    .iter()
                    .zip(&sizes)
                    .map(|(s, &k)| s[j] / (k as f64 * c.step))
                    .collect();
                let mu = means.iter().sum::<f64>() / batches as f64;
                let var =
                    means.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (batches - 1) as f64;
                (var / batches as f64).sqrt()
            })
            .collect()
    } else {
        vec![0.0; m]
    };
    LyapunovSpectrum::new(exponents, std_errors)
}

/// `{-lambda_{d-i}}` ascending, with groups reversed.
pub fn time_reversal_spectrum(s: &LyapunovSpectrum) -> LyapunovSpectrum {
    LyapunovSpectrum {
        exponents: s.exponents.iter().rev().map(|v| -v).collect(),
        std_errors: s.std_errors.iter().rev().cloned().collect(),
        groups: s
            .groups
            .iter()
            .rev()
            .map(|g| ExponentGroup {
                value: -g.value,
                multiplicity: g.multiplicity,
            })
            .collect(),
        tolerance: s.tolerance,
    }
}

/// Number of negative exponents counted with multiplicity.
pub fn index_of(s: &LyapunovSpectrum) -> usize {
    s.groups
        .iter()
        .filter(|g| g.value < 0.0)
        .map(|g| g.multiplicity)
        .sum()
}

/// Radius `sigma_3` of the ball around the identity on which
/// `|ABv| >= e^{-eps1}|Av|` is guaranteed.
pub fn perturbation_margin(a: &DMatrix<f64>, eps1: f64) -> Result<f64> {
    if !(eps1 > 0.0) {
        return Err(Error::Config("eps1 must be positive".into()));
    }
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::Config(
            "perturbation_margin needs a square matrix".into(),
        ));
    }
    let s = singular_values(a);
    let hi = s.iter().cloned().fold(0.0, f64::max);
    let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(lo > 0.0) || !(hi / lo).is_finite() || lo / hi < f64::EPSILON {
        return Err(Error::Numerical("matrix is not invertible".into()));
    }
    Ok(lo / hi * (1.0 - (-eps1).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(a: DMatrix<f64>, n: usize) -> CocycleSequence {
        CocycleSequence::constant(a, 1.0, n).unwrap()
    }

    fn rotation(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    #[test]
    fn diagonal_and_rotation() {
        let s = benettin_spectrum(&constant(
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.5])),
            1000,
        ))
        .unwrap();
        assert!((s.exponents[0] + 2f64.ln()).abs() < 1e-12);
        assert!((s.exponents[1] - 2f64.ln()).abs() < 1e-12);
        assert_eq!(s.multiplicities(), vec![1, 1]);
        let r = benettin_spectrum(&constant(rotation(0.7), 1000)).unwrap();
        assert!(r.exponents.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(r.multiplicities(), vec![2]);
        assert_eq!(r.gap_min(), f64::INFINITY);
    }

    #[test]
    fn triangular_cocycle_uses_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = DMatrix::zeros(3, 3);
        let diag = [0.5, 1.5, 3.0];
        for i in 0..3 {
            a[(i, i)] = diag[i];
            for j in i + 1..3 {
                a[(i, j)] = rng.gen_range(-2.0..2.0);
            }
        }
        let s = benettin_spectrum(&constant(a, 10_000)).unwrap();
        for (e, d) in s.exponents.iter().zip(diag) {
            assert!((e - f64::ln(d)).abs() < 1e-6, "{e} vs {}", f64::ln(d));
        }
    }

    #[test]
    fn exponents_are_per_unit_time() {
        let c = CocycleSequence::constant(
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.5])),
            0.5,
            100,
        )
        .unwrap();
        let s = benettin_spectrum(&c).unwrap();
        assert!((s.largest() - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn grouping_merges_close_values() {
        let s = LyapunovSpectrum::new(vec![0.3, -1.0, 0.3005, 2.0], vec![]).unwrap();
        assert_eq!(s.exponents, vec![-1.0, 0.3, 0.3005, 2.0]);
        assert_eq!(s.multiplicities(), vec![1, 2, 1]);
        assert!((s.groups[1].value - 0.30025).abs() < 1e-12);
        let noisy = LyapunovSpectrum::new(vec![0.0, 0.04], vec![0.01, 0.01]).unwrap();
        assert_eq!(noisy.tolerance, 0.05);
        assert_eq!(noisy.multiplicities(), vec![2]);
    }

    #[test]
    fn reversal_and_index() {
        let s = LyapunovSpectrum::from_exponents(vec![-2.0, -1.0, 3.0]).unwrap();
        let r = time_reversal_spectrum(&s);
        assert_eq!(r.exponents, vec![-3.0, 1.0, 2.0]);
        assert_eq!(time_reversal_spectrum(&r), s);
        assert_eq!(index_of(&s), 2);
        assert_eq!(
            index_of(&LyapunovSpectrum::from_exponents(vec![0.1, 2.0]).unwrap()),
            0
        );
        let m = LyapunovSpectrum::from_exponents(vec![-1.0, -1.0, 0.5]).unwrap();
        assert_eq!(time_reversal_spectrum(&m).multiplicities(), vec![1, 2]);
    }

    #[test]
    fn inverse_reversed_cocycle_matches() {
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 1.0, -0.3, 0.0, 1.5, 0.7, 0.0, 0.0, 3.0]);
        let c = constant(a, 10_000);
        let forward = benettin_spectrum(&c).unwrap();
        let backward = benettin_spectrum(&c.time_reversed().unwrap()).unwrap();
        let expected = time_reversal_spectrum(&forward);
        for (x, y) in backward.exponents.iter().zip(&expected.exponents) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn margin_examples() {
        let eps = 0.3;
        let id = perturbation_margin(&DMatrix::identity(3, 3), eps).unwrap();
        assert!((id - (1.0 - (-eps).exp())).abs() < 1e-15);
        let d = perturbation_margin(
            &DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0])),
            0.1,
        )
        .unwrap();
        assert!((d - 0.5 * (1.0 - (-0.1f64).exp())).abs() < 1e-15);
        assert!((d - 0.04758).abs() < 1e-5);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(perturbation_margin(&singular, 0.1).is_err());
    }

    #[test]
    fn margin_guarantee_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let m = rng.gen_range(2..5);
            let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
            let eps = rng.gen_range(0.01..1.0);
            let Ok(sigma) = perturbation_margin(&a, eps) else {
                continue;
            };
            let e = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
            let e = &e * (sigma * rng.gen_range(0.0..1.0) / crate::linalg::spectral_norm(&e));
            let b = DMatrix::identity(m, m) + e;
            let v = nalgebra::DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0)).normalize();
            assert!((&a * &b * &v).norm() >= (-eps).exp() * (&a * &v).norm() * (1.0 - 1e-12));
        }
    }

    fn normal_matrix(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
        let q = generic_orthogonal(m, rng.gen());
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(m, |_, _| {
            rng.gen_range(0.3..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
        }));
        &q * d * q.transpose()
    }

    #[test]
    fn matches_log_singular_values_of_powers() {
        // for normal blocks sigma(A^n) = sigma(A)^n
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let a = normal_matrix(&mut rng, 3);
            let mut expected: Vec<f64> = singular_values(&a).iter().map(|s| s.ln()).collect();
            expected.sort_by(f64::total_cmp);
            let s = benettin_spectrum(&constant(a, 10_000)).unwrap();
            for (x, y) in s.exponents.iter().zip(&expected) {
                assert!((x - y).abs() < 1e-6, "{x} {y}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn reversal_is_involution(v in proptest::collection::vec(-5.0f64..5.0, 1..6)) {
            let s = LyapunovSpectrum::from_exponents(v).unwrap();
            prop_assert_eq!(time_reversal_spectrum(&time_reversal_spectrum(&s)), s.clone());
            prop_assert_eq!(index_of(&s) + index_of(&time_reversal_spectrum(&s))
                + s.groups.iter().filter(|g| g.value == 0.0).map(|g| g.multiplicity).sum::<usize>(), s.len());
        }

        #[test]
        fn multiplicities_sum_to_dimension(v in proptest::collection::vec(-1.0f64..1.0, 1..8)) {
            let s = LyapunovSpectrum::from_exponents(v.clone()).unwrap();
            prop_assert_eq!(s.multiplicities().iter().sum::<usize>(), v.len());
            prop_assert!(s.exponents.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
