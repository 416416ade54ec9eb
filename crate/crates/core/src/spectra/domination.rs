use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CocycleSequence, SplittingEstimate};
use crate::linalg::{mininorm, spectral_norm};

/// Boundary samples per block in cone tests.
pub const DEFAULT_CONE_SAMPLES: usize = 1000;

const MAX_WINDOWS: usize = 40;
const MAX_WINDOW_BLOCKS: usize = 1000;
const MAX_STARTS: usize = 512;
const SLACK: f64 = 1.1;
const MIN_RATE: f64 = 1e-8;

/// Fitted domination margins for a pair `E < F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub satisfied: bool,
    /// Least-squares rate `lambda`.
    pub lambda: f64,
    /// Constant of the least-squares fit.
    pub c_fit: f64,
    /// Smallest `C` with `|P|E| |P^{-1}|F| <= C e^{-lambda t}` on every window.
    pub c_min: f64,
    /// Smallest `C` for the relaxed rate `lambda / 1.1`.
    pub c_relaxed: f64,
    /// `ln(2 C_relaxed) / (lambda / 1.1)`: time after which the ratio is below 1/2.
    pub halving_time: f64,
    /// `(t, worst log ratio)` per window length.
    pub windows: Vec<(f64, f64)>,
}

/// Tests `|psi_t|E(x)| * |psi_{-t}|F(phi_t x)| <= C e^{-lambda t}` on windows
/// `t = jT`, with `E` the sum of the groups below `boundary` and `F` the rest.
///
/// `lambda` comes from a least-squares fit to the worst log ratio of each
/// window length and `C` is the envelope constant at the rate `lambda / 1.1`.
/// The pair counts as dominated when the rate is positive and the bound
/// falls below 1/2 within the first quarter of the longest window.
pub fn check_domination(
    c: &CocycleSequence,
    split: &SplittingEstimate,
    boundary: usize,
) -> DominationReport {
    let unsatisfied = |windows| DominationReport {
        satisfied: false,
        lambda: 0.0,
        c_fit: f64::INFINITY,
        c_min: f64::INFINITY,
        c_relaxed: f64::INFINITY,
        halving_time: f64::INFINITY,
        windows,
    };
    let k = split.groups();
    if boundary == 0 || boundary >= k || c.is_empty() {
        return unsatisfied(Vec::new());
    }
    let n = c.len();
    let reliable = split.reliable();
    let lo = reliable.start.min(n - 1);
    let hi = reliable.end.min(n).max(lo + 1);
    let span = hi - lo;
    let max_window = span.clamp(1, MAX_WINDOW_BLOCKS);
    let lengths = window_lengths(max_window);
    let stride = (span / MAX_STARTS).max(1);

    let mut worst = vec![f64::NEG_INFINITY; lengths.len()];
    for i in (lo..hi).step_by(stride) {
        let mut e = split.sum(i, 0..boundary);
        let mut f = split.sum(i, boundary..k);
        let (mut le, mut lf) = (0.0, 0.0);
        let mut next = 0;
        for j in 1..=lengths[lengths.len() - 1] {
            if i + j > hi {
                break;
            }
            let a = &c.blocks[i + j - 1];
            // re-project so rounding errors cannot feed the dominant directions
            e = split.project(i + j, 0..boundary, &(a * e));
            f = split.project(i + j, boundary..k, &(a * f));
            le += crate::linalg::renormalize(&mut e);
            lf += crate::linalg::renormalize(&mut f);
            if j == lengths[next] {
                let l = le + spectral_norm(&e).ln() - lf - mininorm(&f).ln();
                worst[next] = worst[next].max(l);
                next += 1;
                if next == lengths.len() {
                    break;
                }
            }
        }
    }
    let windows: Vec<(f64, f64)> = lengths
        .iter()
        .zip(&worst)
        .filter(|(_, l)| l.is_finite())
        .map(|(&j, &l)| (j as f64 * c.step, l))
        .collect();
    if windows.is_empty() {
        return unsatisfied(windows);
    }
    let (lambda, log_c) = fit_line(&windows);
    let envelope = |rate: f64| {
        windows
            .iter()
            .map(|(t, l)| l + rate * t)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let log_c_min = envelope(lambda);
    let log_c_relaxed = envelope(lambda / SLACK);
    let t_max = windows[windows.len() - 1].0;
    let halving_time = if lambda > MIN_RATE {
        ((2f64.ln() + log_c_relaxed) / (lambda / SLACK)).max(0.0)
    } else {
        f64::INFINITY
    };
    DominationReport {
        satisfied: lambda > MIN_RATE && halving_time <= 0.25 * t_max,
        lambda,
        c_fit: log_c.exp(),
        c_min: log_c_min.exp(),
        c_relaxed: log_c_relaxed.exp(),
        halving_time,
        windows,
    }
}

fn window_lengths(max: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    if max <= MAX_WINDOWS {
        return (1..=max).collect();
    }
    let ratio = (max as f64).powf(1.0 / (MAX_WINDOWS - 1) as f64);
    let mut x = 1.0f64;
    for _ in 0..MAX_WINDOWS {
        let j = (x.round() as usize).clamp(1, max);
        if out.last() != Some(&j) {
            out.push(j);
        }
        x *= ratio;
    }
    if out.last() != Some(&max) {
        out.push(max);
    }
    out
}

/// Least squares `l = log C - lambda t`; returns `(lambda, log C)`.
fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = points.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if stt == 0.0 {
        // a single window: the line through the origin
        let (t, l) = points[0];
        return (-l / t, 0.0);
    }
    let stl: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let slope = stl / stt;
    (-slope, ml - slope * mt)
}

/// Cone `C_rho = {|v_k| >= rho |v_j|, j < k}` around the top group of a
/// splitting, with the contraction parameter `gamma`.
#[derive(Debug, Clone)]
pub struct ConeParams {
    pub rho: f64,
    pub gamma: f64,
    pub split: SplittingEstimate,
    pub samples: usize,
    pub seed: u64,
}

impl ConeParams {
    pub fn new(rho: f64, gamma: f64, split: SplittingEstimate) -> crate::Result<Self> {
        if !(rho > 1.0) || !(gamma > 0.0 && gamma < 1.0) || !(gamma * rho > 1.0) {
            return Err(crate::Error::Config(format!(
                "cone needs rho > 1, 0 < gamma < 1 and gamma*rho > 1 (got rho={rho}, gamma={gamma})"
            )));
        }
        Ok(Self {
            rho,
            gamma,
            split,
            samples: DEFAULT_CONE_SAMPLES,
            seed: 0,
        })
    }

    pub fn with_sampling(mut self, samples: usize, seed: u64) -> Self {
        self.samples = samples;
        self.seed = seed;
        self
    }
}

/// Whether sampled boundary vectors of `C_{gamma rho}(x_i)` are mapped into
/// `C_rho(x_{i+1})` by every block, in the max-block norm.
pub fn check_cone_invariance(c: &CocycleSequence, cone: &ConeParams) -> bool {
    let split = &cone.split;
    let k = split.groups();
    if k < 2 {
        return true;
    }
    let range = split.reliable();
    let end = range.end.min(c.len());
    let blocks: Vec<usize> = if split.is_constant() && is_constant(c) {
        vec![0]
    } else {
        (range.start..end).collect()
    };
    let dims = split.dimensions();
    let inner = cone.gamma * cone.rho;
    for i in blocks {
        let mut rng =
            ChaCha8Rng::seed_from_u64(cone.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let a = &c.blocks[i];
        for _ in 0..cone.samples {
            let anchor = rng.gen_range(0..k - 1);
            let mut v = DVector::zeros(c.dimension());
            for (g, &dim) in dims.iter().enumerate() {
                let dir = random_unit(&mut rng, dim);
                let len = if g == k - 1 {
                    inner
                } else if g == anchor {
                    1.0
                } else {
                    rng.gen_range(0.0..=1.0)
                };
                v += split.basis(i, g) * (dir * len);
            }
            let w = a * v;
            let parts = split.decompose(i + 1, &w);
            let top = parts[k - 1].norm();
            let side = parts[..k - 1].iter().map(|p| p.norm()).fold(0.0, f64::max);
            if top < cone.rho * side * (1.0 - 1e-12) {
                return false;
            }
        }
    }
    true
}

fn is_constant(c: &CocycleSequence) -> bool {
    c.blocks.windows(2).all(|w| w[0] == w[1])
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Searches a fixed grid of `(gamma, rho)` for an invariant cone.
pub fn find_invariant_cone(
    c: &CocycleSequence,
    split: &SplittingEstimate,
    samples: usize,
    seed: u64,
) -> Option<ConeParams> {
    const GAMMAS: [f64; 8] = [0.95, 0.9, 0.8, 0.7, 0.5, 0.3, 0.2, 0.1];
    const RHO_FACTORS: [f64; 5] = [1.05, 2.0, 4.0, 10.0, 100.0];
    for gamma in GAMMAS {
        for f in RHO_FACTORS {
            let rho = f / gamma;
            let cone = ConeParams::new(rho, gamma, split.clone())
                .ok()?
                .with_sampling(samples, seed);
            if check_cone_invariance(c, &cone) {
                return Some(cone);
            }
        }
    }
    None
}
