use itertools::Itertools;
use nalgebra::DMatrix;

use super::{benettin_spectrum, CocycleSequence, LyapunovSpectrum};
use crate::error::{Error, Result};

/// Compound matrix of `n x n` minors over lexicographically ordered index sets.
pub fn exterior_power(a: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    if !a.is_square() {
        return Err(Error::Config("exterior_power needs a square matrix".into()));
    }
    if n == 0 || n > m {
        return Err(Error::Config(format!(
            "exterior power {n} out of range 1..={m}"
        )));
    }
    let sets: Vec<Vec<usize>> = (0..m).combinations(n).collect();
    let k = sets.len();
    let mut out = DMatrix::zeros(k, k);
    for (r, rows) in sets.iter().enumerate() {
        for (c, cols) in sets.iter().enumerate() {
            let sub = DMatrix::from_fn(n, n, |i, j| a[(rows[i], cols[j])]);
            out[(r, c)] = sub.determinant();
        }
    }
    Ok(out)
}

/// Spectrum of the compound cocycle `{wedge^n A_i}`.
pub fn exterior_spectrum(c: &CocycleSequence, n: usize) -> Result<LyapunovSpectrum> {
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(c.len());
    for (i, b) in c.blocks.iter().enumerate() {
        let w = match i {
            // constant stretches reuse the previous compound
            i if i > 0 && c.blocks[i - 1] == *b => blocks[i - 1].clone(),
            _ => exterior_power(b, n)?,
        };
        blocks.push(w);
    }
    let compound = CocycleSequence::new(c.step, blocks)?;
    benettin_spectrum(&compound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_cases() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, -1.0, 3.0, 2.0, 0.0, 1.0, 4.0]);
        assert_eq!(exterior_power(&a, 1).unwrap(), a);
        let top = exterior_power(&a, 3).unwrap();
        assert_eq!(top.shape(), (1, 1));
        assert!((top[(0, 0)] - a.determinant()).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let w = exterior_power(&d, 2).unwrap();
        assert_eq!(
            w,
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![6.0, 3.0, 2.0]))
        );
        assert!(exterior_power(&a, 0).is_err());
        assert!(exterior_power(&a, 4).is_err());
    }

    #[test]
    fn multiplicative_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let a = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
            let b = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
            for n in 1..=5 {
                let lhs = exterior_power(&(&a * &b), n).unwrap();
                let rhs = exterior_power(&a, n).unwrap() * exterior_power(&b, n).unwrap();
                assert!(
                    (&lhs - &rhs).norm() <= 1e-10 * lhs.norm().max(1e-300),
                    "n={n}"
                );
            }
        }
    }

    #[test]
    fn sums_of_base_exponents() {
        let c = CocycleSequence::constant(
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0])),
            1.0,
            2000,
        )
        .unwrap();
        let s = exterior_spectrum(&c, 2).unwrap();
        let expected = [2f64.ln(), 3f64.ln(), 6f64.ln()];
        for (x, y) in s.exponents.iter().zip(expected) {
            assert!((x - y).abs() < 1e-10);
        }
        let top = exterior_spectrum(&c, 3).unwrap();
        assert_eq!(top.len(), 1);
        assert!((top.exponents[0] - 6f64.ln()).abs() < 1e-12);
    }
}
