use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::PeriodicOrbit;
use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::flow::Trajectory;
use crate::poincare::refine_root;

const WINDOW_PROBES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReparamOptions {
    /// Block time setting the sampling grid and the matching window.
    pub block: f64,
    /// Grid points per block time (at least 10).
    pub samples_per_block: usize,
    /// Half-width of the matching window, in block times.
    pub window: f64,
}

impl Default for ReparamOptions {
    fn default() -> Self {
        Self {
            block: 1.0,
            samples_per_block: 10,
            window: 0.5,
        }
    }
}

/// Monotone time change `theta` with `theta(0) = 0`, matched against the
/// orbit rephased so that `phase` is the orbit time of `phi_0(x)`'s match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reparametrization {
    pub phase: f64,
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    pub min_slope: f64,
    pub max_slope: f64,
}

impl Reparametrization {
    /// Piecewise-linear `theta(t)`, clamped to the fitted range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.theta[0];
        }
        if t >= self.times[n - 1] {
            return self.theta[n - 1];
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.theta[k] + w * (self.theta[k + 1] - self.theta[k])
    }

    /// The identity on a grid, for comparing an orbit with itself.
    pub fn identity(duration: f64, step: f64) -> Self {
        let n = (duration / step).ceil().max(1.0) as usize;
        let times: Vec<f64> = (0..=n).map(|i| (i as f64 * step).min(duration)).collect();
        Self {
            phase: 0.0,
            theta: times.clone(),
            times,
            min_slope: 1.0,
            max_slope: 1.0,
        }
    }
}

/// Outcome of the shadowing check: `d(phi_t x, phi_theta(t) p) < eps |X(phi_t x)|`
/// and `1 - eps < theta' < 1 + eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowingReport {
    pub max_rel_distance: f64,
    pub min_slope: f64,
    pub max_slope: f64,
    pub eps: f64,
    pub samples: usize,
    pub distance_ok: bool,
    pub slope_ok: bool,
    pub pass: bool,
}

/// Fits `theta` by matching every grid time `t` with the orbit time whose
/// point is closest to `phi_t(x)`, searched in a window around the previous
/// match advanced by the grid step.
pub fn fit_reparametrization(
    spec: &VectorFieldSpec,
    segment: &Trajectory,
    orbit: &PeriodicOrbit,
    opts: &ReparamOptions,
) -> Result<Reparametrization> {
    if !(opts.block > 0.0) || opts.samples_per_block < 10 || !(opts.window > 0.0) {
        return Err(Error::Config(
            "reparametrization needs block > 0, >= 10 samples per block, window > 0".into(),
        ));
    }
    let t0 = segment.start_time();
    let duration = segment.duration();
    let x0 = segment.first().clone();
    let phase = nearest_phase(spec, orbit, &x0)?;
    let g = |target: &DVector<f64>, s: f64| {
        let y = orbit.state_at(phase + s);
        (&y - target).dot(&spec.eval(&y))
    };

    let h = opts.block / opts.samples_per_block as f64;
    let n = (duration / h - 1e-9).ceil().max(1.0) as usize;
    let times: Vec<f64> = (0..=n).map(|i| (i as f64 * h).min(duration)).collect();
    let w = opts.window * opts.block;
    let mut theta = vec![0.0];
    for k in 1..times.len() {
        let x = segment.state_at(t0 + times[k]);
        let prev = theta[k - 1];
        let guess = prev + (times[k] - times[k - 1]);
        let lo = prev.max(guess - w);
        let hi = guess + w;
        let f = |s: f64| g(&x, s);
        let probes: Vec<(f64, f64)> = (0..=WINDOW_PROBES)
            .map(|i| {
                let s = lo + (hi - lo) * i as f64 / WINDOW_PROBES as f64;
                (s, f(s))
            })
            .collect();
        let mut best: Option<f64> = None;
        for pair in probes.windows(2) {
            let ((a, ga), (b, gb)) = (pair[0], pair[1]);
            if ga < 0.0 && gb >= 0.0 {
                let root = refine_root(&f, a, b, ga, gb, 1e-13);
                if best.is_none_or(|r| (root - guess).abs() < (r - guess).abs()) {
                    best = Some(root);
                }
            }
        }
        match best {
            Some(s) if s > prev => theta.push(s),
            _ => {
                return Err(Error::FitFailure(format!(
                    "no monotone match for t = {:.4} in [{lo:.4}, {hi:.4}]",
                    times[k]
                )))
            }
        }
    }
    let slopes: Vec<f64> = theta
        .windows(2)
        .zip(times.windows(2))
        .filter(|(_, t)| t[1] > t[0])
        .map(|(th, t)| (th[1] - th[0]) / (t[1] - t[0]))
        .collect();
    let min_slope = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_slope = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(Reparametrization {
        phase,
        times,
        theta,
        min_slope,
        max_slope,
    })
}

/// Orbit time of the point closest to `x`.
fn nearest_phase(spec: &VectorFieldSpec, orbit: &PeriodicOrbit, x: &DVector<f64>) -> Result<f64> {
    let times = orbit.samples.times();
    let states = orbit.samples.states();
    let (k, _) = states
        .iter()
        .enumerate()
        .map(|(k, y)| (k, (y - x).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::FitFailure("orbit has no samples".into()))?;
    let f = |s: f64| {
        let y = orbit.state_at(s);
        (&y - x).dot(&spec.eval(&y))
    };
    let a = if k > 0 {
        times[k - 1]
    } else {
        times[times.len() - 2] - orbit.period
    };
    let b = if k + 1 < times.len() {
        times[k + 1]
    } else {
        orbit.period + times[1]
    };
    let (ga, gb) = (f(a), f(b));
    let s = if ga < 0.0 && gb >= 0.0 {
        refine_root(&f, a, b, ga, gb, 1e-13)
    } else {
        times[k]
    };
    Ok(s.rem_euclid(orbit.period))
}

/// Checks the shadowing bounds on the grid of the fitted reparametrization.
pub fn validate_shadowing(
    spec: &VectorFieldSpec,
    segment: &Trajectory,
    orbit: &PeriodicOrbit,
    theta: &Reparametrization,
    eps: f64,
) -> ShadowingReport {
    let t0 = segment.start_time();
    let mut max_rel: f64 = 0.0;
    for (&t, &th) in theta.times.iter().zip(&theta.theta) {
        let x = segment.state_at(t0 + t);
        let y = orbit.state_at(theta.phase + th);
        let speed = spec.eval(&x).norm();
        let rel = (x - y).norm() / speed;
        max_rel = if rel.is_nan() {
            f64::INFINITY
        } else {
            max_rel.max(rel)
        };
    }
    let distance_ok = max_rel < eps;
    let slope_ok = theta.min_slope > 1.0 - eps && theta.max_slope < 1.0 + eps;
    ShadowingReport {
        max_rel_distance: max_rel,
        min_slope: theta.min_slope,
        max_slope: theta.max_slope,
        eps,
        samples: theta.times.len(),
        distance_ok,
        slope_ok,
        pass: distance_ok && slope_ok,
    }
}
