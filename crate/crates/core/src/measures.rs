//! Time-quadrature measures along orbits, a truncated weak* metric, and
//! spectrum comparison reports.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::WorkingBox;
use crate::flow::Trajectory;
use crate::orbits::PeriodicOrbit;
use crate::spectra::LyapunovSpectrum;

/// Default number of test functions.
pub const DEFAULT_FAMILY_SIZE: usize = 20;
/// Default number of uniform time nodes of a periodic measure.
pub const DEFAULT_PERIODIC_NODES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    TrajectoryAverage,
    PeriodicOrbit,
}

/// Weighted points with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub provenance: Provenance,
}

impl EmpiricalMeasure {
    pub fn new(
        points: Vec<DVector<f64>>,
        weights: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Config("measure needs one weight per point".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("measure weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Config("measure weights must not all vanish".into()));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self {
            points,
            weights,
            provenance,
        })
    }

    pub fn dirac(x: DVector<f64>) -> Self {
        Self {
            points: vec![x],
            weights: vec![1.0],
            provenance: Provenance::TrajectoryAverage,
        }
    }

    /// Trapezoidal time weights along a trajectory.
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let t = traj.times();
        let n = t.len();
        let weights = if n == 1 {
            vec![1.0]
        } else {
            let total = t[n - 1] - t[0];
            (0..n)
                .map(|i| {
                    let left = if i > 0 { t[i] - t[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { t[i + 1] - t[i] } else { 0.0 };
                    0.5 * (left + right) / total
                })
                .collect()
        };
        Self {
            points: traj.states().to_vec(),
            weights,
            provenance: Provenance::TrajectoryAverage,
        }
    }

    pub fn integrate(&self, f: impl Fn(&DVector<f64>) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// Time average `(1/T) int_0^T f(phi_t x) dt` by the trapezoid rule on the
/// trajectory samples.
pub fn birkhoff_average(f: impl Fn(&DVector<f64>) -> f64, traj: &Trajectory) -> f64 {
    EmpiricalMeasure::from_trajectory(traj).integrate(f)
}

/// `mu_p = (1/Pi) int delta_{phi_t p} dt`, with uniform weights on
/// [`DEFAULT_PERIODIC_NODES`] equally spaced times.
pub fn periodic_measure(orbit: &PeriodicOrbit) -> EmpiricalMeasure {
    periodic_measure_with(orbit, DEFAULT_PERIODIC_NODES)
}

pub fn periodic_measure_with(orbit: &PeriodicOrbit, nodes: usize) -> EmpiricalMeasure {
    let k = nodes.max(1);
    let points = (0..k)
        .map(|i| orbit.state_at(orbit.period * i as f64 / k as f64))
        .collect();
    EmpiricalMeasure {
        points,
        weights: vec![1.0 / k as f64; k],
        provenance: Provenance::PeriodicOrbit,
    }
}

/// Squashed monomials `tanh(s * m(u))` of the box-normalized coordinates
/// `u in [-1, 1]^d`, degree 1 then 2, cycling through scales `s = 1, 2, 4, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionFamily {
    pub domain: WorkingBox,
    /// `(scale, exponents)` per function.
    pub functions: Vec<(f64, Vec<u32>)>,
    /// Sup norms over the domain.
    pub sup_norms: Vec<f64>,
}

impl TestFunctionFamily {
    pub fn new(domain: WorkingBox, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config(
                "test function family must be nonempty".into(),
            ));
        }
        let d = domain.dimension();
        let mut monomials: Vec<Vec<u32>> = Vec::new();
        for i in 0..d {
            let mut p = vec![0; d];
            p[i] = 1;
            monomials.push(p);
        }
        for i in 0..d {
            for j in i..d {
                let mut p = vec![0; d];
                p[i] += 1;
                p[j] += 1;
                monomials.push(p);
            }
        }
        let mut functions = Vec::with_capacity(n);
        let mut scale = 1.0;
        'fill: loop {
            for m in &monomials {
                if functions.len() == n {
                    break 'fill;
                }
                functions.push((scale, m.clone()));
            }
            scale *= 2.0;
        }
        // every monomial reaches modulus 1 on the box
        let sup_norms = functions.iter().map(|(s, _)| f64::tanh(*s)).collect();
        Ok(Self {
            domain,
            functions,
            sup_norms,
        })
    }

    /// Family on the bounding box of `points`, padded by 5% per side.
    pub fn for_points(points: &[DVector<f64>], n: usize) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Config("no points to bound".into()))?;
        let d = first.len();
        let mut lo = first.as_slice().to_vec();
        let mut hi = lo.clone();
        for p in points {
            for i in 0..d {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        for i in 0..d {
            let pad = 0.05 * (hi[i] - lo[i]).max(1e-9);
            lo[i] -= pad;
            hi[i] += pad;
        }
        Self::new(WorkingBox::new(lo, hi)?, n)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// The first `n` functions.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            domain: self.domain.clone(),
            functions: self.functions[..n].to_vec(),
            sup_norms: self.sup_norms[..n].to_vec(),
        }
    }

    pub fn eval(&self, i: usize, x: &DVector<f64>) -> f64 {
        let (scale, powers) = &self.functions[i];
        let (lo, hi) = (&self.domain.lower, &self.domain.upper);
        let m: f64 = powers
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0)
            .map(|(k, &p)| ((2.0 * x[k] - lo[k] - hi[k]) / (hi[k] - lo[k])).powi(p as i32))
            .product();
        (scale * m).tanh()
    }

    /// `int f_i dmu` for every function of the family.
    pub fn moments(&self, mu: &EmpiricalMeasure) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|i| mu.integrate(|x| self.eval(i, x)))
            .collect()
    }

    /// The weak* distance between measures given by their moments.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.sup_norms)
            .enumerate()
            .map(|(i, ((x, y), norm))| (x - y).abs() / (2f64.powi(i as i32 + 1) * norm))
            .sum()
    }
}

/// `sum_i |int f_i dmu - int f_i dnu| / (2^i |f_i|)`, `i = 1..n`.
pub fn weak_star_distance(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    fam: &TestFunctionFamily,
) -> f64 {
    fam.distance(&fam.moments(mu), &fam.moments(nu))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeExponentReport {
    pub measure: f64,
    pub orbit: f64,
    pub gap: f64,
    pub pass: bool,
}

/// Index-aligned comparison of a measure spectrum with a periodic spectrum,
/// optionally with the weak* distance of the two measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub measure_exponents: Vec<f64>,
    pub orbit_exponents: Vec<f64>,
    pub gaps: Vec<f64>,
    pub eps: f64,
    /// All gaps below `eps`.
    pub spectrum_pass: bool,
    pub largest: ExtremeExponentReport,
    pub smallest: ExtremeExponentReport,
    pub weak_star: Option<f64>,
    pub weak_star_eps: Option<f64>,
    pub weak_star_pass: Option<bool>,
}

impl ComparisonReport {
    pub fn with_weak_star(mut self, distance: f64, eps: f64) -> Self {
        self.weak_star = Some(distance);
        self.weak_star_eps = Some(eps);
        self.weak_star_pass = Some(distance < eps);
        self
    }
}

pub fn compare_spectra(
    mu_spec: &LyapunovSpectrum,
    orbit_spec: &LyapunovSpectrum,
    eps: f64,
) -> Result<ComparisonReport> {
    if mu_spec.len() != orbit_spec.len() || mu_spec.is_empty() {
        return Err(Error::Config(format!(
            "spectra have different lengths ({} vs {})",
            mu_spec.len(),
            orbit_spec.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Config("eps must be positive".into()));
    }
    let gaps: Vec<f64> = mu_spec
        .exponents
        .iter()
        .zip(&orbit_spec.exponents)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let extreme = |a: f64, b: f64| ExtremeExponentReport {
        measure: a,
        orbit: b,
        gap: (a - b).abs(),
        pass: (a - b).abs() < eps,
    };
    Ok(ComparisonReport {
        schema_version: 1,
        measure_exponents: mu_spec.exponents.clone(),
        orbit_exponents: orbit_spec.exponents.clone(),
        spectrum_pass: gaps.iter().all(|g| *g < eps),
        gaps,
        eps,
        largest: extreme(mu_spec.largest(), orbit_spec.largest()),
        smallest: extreme(mu_spec.smallest(), orbit_spec.smallest()),
        weak_star: None,
        weak_star_eps: None,
        weak_star_pass: None,
    })
}
