#![allow(dead_code)]

use lpflow::cli::RunConfig;
use lpflow::field::{VectorFieldSpec, WorkingBox};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// The Lorenz run used by the end-to-end checks.
pub fn lorenz_config() -> RunConfig {
    let mut cfg = RunConfig::new(
        VectorFieldSpec::lorenz(10.0, 28.0, 8.0 / 3.0),
        WorkingBox::cube(3, 100.0),
    );
    cfg.seed = 7;
    cfg.initial_state = Some(vec![1.0, 1.0, 20.0]);
    cfg.cocycle.blocks = 100_000;
    cfg.scan.d_rel = 0.05;
    cfg.closing.eps = 0.1;
    cfg.compare.period_tiers = vec![3.0, 6.0, 10.0];
    cfg
}

/// `S diag(signs * e^{lambda T}) S^-1` with a random well-conditioned `S`.
pub fn conjugated(rng: &mut ChaCha8Rng, lambdas: &[f64], t: f64) -> DMatrix<f64> {
    let m = lambdas.len();
    loop {
        let s = DMatrix::from_fn(
            m,
            m,
            |i, j| if i == j { 2.0 } else { 0.0 } + rng.gen_range(-1.0..1.0),
        );
        let sv = s.singular_values();
        if sv.min() < 0.3 * sv.max() {
            continue;
        }
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            m,
            lambdas
                .iter()
                .map(|l| (l * t).exp() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }),
        ));
        return &s * d * s.clone().try_inverse().unwrap();
    }
}

/// Ascending exponents with consecutive gaps in `[min_gap, min_gap + 1)`.
pub fn separated_exponents(rng: &mut ChaCha8Rng, m: usize, min_gap: f64) -> Vec<f64> {
    let mut v = vec![rng.gen_range(-2.0..0.0)];
    for _ in 1..m {
        let last = *v.last().unwrap();
        v.push(last + min_gap + rng.gen_range(0.0..1.0));
    }
    v
}
