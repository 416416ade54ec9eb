use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{VectorFieldSpec, WorkingBox};
use crate::flow::{advance, integrate_flow, tangent_flow_with_state, IntegratorConfig, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosingConfig {
    pub integrator: IntegratorConfig,
    /// Shooting nodes; `None` uses `max(8, ceil(T0 / 2))`.
    pub nodes: Option<usize>,
    pub max_iterations: usize,
    /// Convergence threshold on the closure residual, relative to the
    /// diameter of the node set.
    pub tolerance: f64,
    /// Largest accepted `|period / T0 - 1|`.
    pub max_period_drift: f64,
}

impl ClosingConfig {
    /// Tight integrator tolerances (1e-12) and 50 Newton iterations.
    pub fn new(bounds: WorkingBox) -> Self {
        Self {
            integrator: IntegratorConfig::new(bounds).with_tolerances(1e-12, 1e-12),
            nodes: None,
            max_iterations: 50,
            tolerance: 1e-9,
            max_period_drift: 0.2,
        }
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = Some(nodes);
        self
    }
}

/// A closed orbit with base point `p`, period and one period of dense samples.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub point: DVector<f64>,
    pub period: f64,
    pub samples: Trajectory,
    /// Largest shooting mismatch `|phi_{tau_k}(z_k) - z_{k+1}|`.
    pub residual: f64,
    pub diameter: f64,
    /// Euclidean norm of the Newton residual after each accepted step.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
}

#[derive(Serialize, Deserialize)]
struct OrbitDocument {
    schema_version: u32,
    point: Vec<f64>,
    period: f64,
    residual: f64,
    diameter: f64,
    iterations: usize,
}

impl Serialize for PeriodicOrbit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OrbitDocument {
            schema_version: 1,
            point: self.point.as_slice().to_vec(),
            period: self.period,
            residual: self.residual,
            diameter: self.diameter,
            iterations: self.iterations,
        }
        .serialize(s)
    }
}

impl PeriodicOrbit {
    /// Builds the orbit through `point` with the given period, integrating
    /// one period of samples. No closure check is made.
    pub fn from_point(
        spec: &VectorFieldSpec,
        point: DVector<f64>,
        period: f64,
        cfg: &IntegratorConfig,
    ) -> Result<Self> {
        if !(period > 0.0) {
            return Err(Error::Config("period must be positive".into()));
        }
        let samples = integrate_flow(spec, &point, (0.0, period), cfg)?;
        let residual = (samples.last() - &point).norm();
        let diameter = diameter(samples.states());
        Ok(Self {
            point,
            period,
            samples,
            residual,
            diameter,
            residual_history: Vec::new(),
            iterations: 0,
        })
    }

    /// Builds the orbit from shooting nodes `x_k` and flight times `tau_k`,
    /// integrating each leg separately so that samples stay on the orbit to
    /// the local integration accuracy.
    pub fn from_nodes(
        spec: &VectorFieldSpec,
        nodes: &[DVector<f64>],
        taus: &[f64],
        cfg: &IntegratorConfig,
    ) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != taus.len() || taus.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config(
                "need one positive flight time per node".into(),
            ));
        }
        let legs = nodes
            .iter()
            .zip(taus)
            .map(|(x, &tau)| integrate_flow(spec, x, (0.0, tau), cfg))
            .collect::<Result<Vec<_>>>()?;
        let residual = legs
            .iter()
            .enumerate()
            .map(|(k, leg)| (leg.last() - &nodes[(k + 1) % nodes.len()]).norm())
            .fold(0.0, f64::max);
        let samples = Trajectory::concatenate(&legs)?;
        let diameter = diameter(samples.states());
        let point = nodes[0].clone();
        let period = taus.iter().sum();
        Ok(Self {
            point,
            period,
            samples,
            residual,
            diameter,
            residual_history: Vec::new(),
            iterations: 0,
        })
    }

    /// `phi_s(p)` for any real `s`, by periodicity.
    pub fn state_at(&self, s: f64) -> DVector<f64> {
        self.samples.state_at(s.rem_euclid(self.period))
    }

    /// The same orbit with base point `phi_s(p)`.
    pub fn rephased(&self, spec: &VectorFieldSpec, s: f64, cfg: &IntegratorConfig) -> Result<Self> {
        let s = s.rem_euclid(self.period);
        let point = advance(spec, &self.point, s, cfg)?;
        let mut out = Self::from_point(spec, point, self.period, cfg)?;
        out.residual = self.residual;
        out.residual_history = self.residual_history.clone();
        out.iterations = self.iterations;
        Ok(out)
    }

    /// A rigid translate of the orbit samples (no longer an orbit; used to
    /// probe validation).
    pub fn translated(&self, v: &DVector<f64>) -> Result<Self> {
        let states = self.samples.states().iter().map(|x| x + v).collect();
        let samples = Trajectory::from_samples(
            self.samples.times().to_vec(),
            states,
            self.samples.field_norms().to_vec(),
        )?;
        Ok(Self {
            point: &self.point + v,
            samples,
            ..self.clone()
        })
    }

    /// Writes `t,x1..xd,speed` rows for one period.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        self.samples.write_csv(w)
    }
}

fn diameter(points: &[DVector<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for (a, p) in points.iter().enumerate() {
        for q in &points[a + 1..] {
            best = best.max((p - q).norm());
        }
    }
    best
}

struct Shooting<'a> {
    spec: &'a VectorFieldSpec,
    cfg: &'a IntegratorConfig,
    d: usize,
    m: usize,
    /// Phase hyperplanes: point and unit normal.
    anchors: Vec<(DVector<f64>, DVector<f64>)>,
}

impl Shooting<'_> {
    fn unpack(&self, u: &DVector<f64>) -> (Vec<DVector<f64>>, Vec<f64>) {
        let d = self.d;
        let nodes = (0..self.m).map(|k| u.rows(k * d, d).into_owned()).collect();
        let taus = (0..self.m).map(|k| u[self.m * d + k]).collect();
        (nodes, taus)
    }

    fn residual(&self, u: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let (nodes, taus) = self.unpack(u);
        let (d, m) = (self.d, self.m);
        let mut r = DVector::zeros(m * (d + 1));
        let mut closure: f64 = 0.0;
        for k in 0..m {
            if !(taus[k] > 0.0) {
                return Err(Error::ClosingFailure(
                    "flight time became non-positive".into(),
                ));
            }
            let end = advance(self.spec, &nodes[k], taus[k], self.cfg)?;
            let mismatch = end - &nodes[(k + 1) % m];
            closure = closure.max(mismatch.norm());
            r.rows_mut(k * d, d).copy_from(&mismatch);
            let (a, n) = &self.anchors[k];
            r[m * d + k] = (&nodes[k] - a).dot(n);
        }
        Ok((r, closure))
    }

    fn jacobian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (nodes, taus) = self.unpack(u);
        let (d, m) = (self.d, self.m);
        let mut j = DMatrix::zeros(m * (d + 1), m * (d + 1));
        for k in 0..m {
            let (end, phi) = tangent_flow_with_state(self.spec, &nodes[k], taus[k], self.cfg)?;
            j.view_mut((k * d, k * d), (d, d)).copy_from(&phi);
            let next = (k + 1) % m;
            for i in 0..d {
                j[(k * d + i, next * d + i)] -= 1.0;
            }
            j.view_mut((k * d, m * d + k), (d, 1))
                .copy_from(&self.spec.eval(&end));
            let (_, n) = &self.anchors[k];
            j.view_mut((m * d + k, k * d), (1, d))
                .copy_from(&n.transpose());
        }
        Ok(j)
    }
}

/// Closes a near-return segment into a periodic orbit by damped Newton on
/// the multiple-shooting system. Node 0 is held on the hyperplane through
/// the segment start orthogonal to `X`; every other node on the hyperplane
/// through its initial guess.
pub fn close_orbit(
    spec: &VectorFieldSpec,
    segment: &Trajectory,
    cfg: &ClosingConfig,
) -> Result<PeriodicOrbit> {
    cfg.integrator.validate()?;
    let t0 = segment.duration();
    if !(t0 > 0.0) || segment.len() < 2 {
        return Err(Error::Config("segment must have positive duration".into()));
    }
    let d = spec.dimension();
    let m = cfg
        .nodes
        .unwrap_or_else(|| 8.max((t0 / 2.0).ceil() as usize));
    if m < 1 {
        return Err(Error::Config(
            "at least one shooting node is required".into(),
        ));
    }
    let start = segment.start_time();
    let guesses: Vec<DVector<f64>> = (0..m)
        .map(|k| segment.state_at(start + k as f64 * t0 / m as f64))
        .collect();
    let mut anchors = Vec::with_capacity(m);
    for g in &guesses {
        let f = spec.eval(g);
        let s = f.norm();
        if !(s > 0.0) {
            return Err(Error::ClosingFailure(
                "shooting node at a singularity".into(),
            ));
        }
        anchors.push((g.clone(), f / s));
    }
    let sys = Shooting {
        spec,
        cfg: &cfg.integrator,
        d,
        m,
        anchors,
    };
    let mut u = DVector::zeros(m * (d + 1));
    for (k, g) in guesses.iter().enumerate() {
        u.rows_mut(k * d, d).copy_from(g);
        u[m * d + k] = t0 / m as f64;
    }
    let diam = diameter(&guesses).max(
        segment
            .states()
            .iter()
            .map(|x| (x - segment.first()).norm())
            .fold(0.0, f64::max),
    );
    let threshold = cfg.tolerance * diam.max(f64::MIN_POSITIVE);

    let (mut r, mut closure) = sys.residual(&u)?;
    let mut norm = r.norm();
    let mut history = vec![norm];
    let mut iterations = 0;
    let phase_ok = |r: &DVector<f64>| r.rows(m * d, m).amax() <= threshold;
    while !(closure <= threshold && phase_ok(&r)) {
        if iterations == cfg.max_iterations {
            return Err(Error::ClosingFailure(format!(
                "Newton did not converge in {} iterations (residual {closure:.3e})",
                cfg.max_iterations
            )));
        }
        iterations += 1;
        let jac = sys.jacobian(&u)?;
        let step = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| Error::ClosingFailure("singular shooting Jacobian".into()))?;
        let mut alpha = 1.0;
        loop {
            let trial = &u + &step * alpha;
            if let Ok((rt, ct)) = sys.residual(&trial) {
                let nt = rt.norm();
                if nt <= (1.0 - 1e-4 * alpha) * norm {
                    u = trial;
                    r = rt;
                    closure = ct;
                    norm = nt;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                if closure <= 10.0 * threshold {
                    // stalled at the integration accuracy
                    break;
                }
                return Err(Error::ClosingFailure(format!(
                    "line search failed at residual {closure:.3e}"
                )));
            }
        }
        history.push(norm);
        if alpha < 1e-6 {
            break;
        }
    }
    let (nodes, taus) = sys.unpack(&u);
    let period: f64 = taus.iter().sum();
    if ((period / t0) - 1.0).abs() > cfg.max_period_drift {
        return Err(Error::ClosingFailure(format!(
            "period {period} drifted from segment duration {t0}"
        )));
    }
    let mut orbit = PeriodicOrbit::from_nodes(spec, &nodes, &taus, &cfg.integrator)?;
    if orbit.samples.field_norms().iter().any(|&s| !(s > 0.0)) {
        return Err(Error::ClosingFailure("orbit touches a singularity".into()));
    }
    orbit.residual = closure;
    orbit.residual_history = history;
    orbit.iterations = iterations;
    Ok(orbit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg() -> ClosingConfig {
        ClosingConfig::new(WorkingBox::cube(3, 10.0))
    }

    #[test]
    fn orbit_from_nodes() {
        let spec = VectorFieldSpec::hopf_cylinder();
        let c = cfg();
        let nodes: Vec<DVector<f64>> = (0..4)
            .map(|k| {
                DVector::from_vec(vec![
                    (k as f64 * PI / 2.0).cos(),
                    (k as f64 * PI / 2.0).sin(),
                    0.0,
                ])
            })
            .collect();
        let orbit =
            PeriodicOrbit::from_nodes(&spec, &nodes, &[PI / 2.0; 4], &c.integrator).unwrap();
        assert!((orbit.period - 2.0 * PI).abs() < 1e-12);
        assert!(orbit.residual < 1e-9);
        let t = orbit.samples.times();
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!((orbit.samples.duration() - 2.0 * PI).abs() < 1e-12);
        for s in [0.3, 1.7, 3.2, 5.9] {
            let x = orbit.state_at(s);
            assert!((x[0] - s.cos()).abs() < 1e-8 && (x[1] - s.sin()).abs() < 1e-8);
        }
        assert!(PeriodicOrbit::from_nodes(&spec, &nodes, &[1.0; 3], &c.integrator).is_err());
    }

    #[test]
    fn hopf_closes_to_unit_circle() {
        let spec = VectorFieldSpec::hopf_cylinder();
        let c = cfg();
        let x0 = DVector::from_vec(vec![1.05, 0.0, 0.01]);
        let seg = integrate_flow(&spec, &x0, (0.0, 2.0 * PI), &c.integrator).unwrap();
        let orbit = close_orbit(&spec, &seg, &c).unwrap();
        assert!((orbit.period - 2.0 * PI).abs() < 1e-6, "{}", orbit.period);
        for x in orbit.samples.states() {
            assert!(((x[0] * x[0] + x[1] * x[1]).sqrt() - 1.0).abs() < 1e-6);
            assert!(x[2].abs() < 1e-6);
        }
        assert!(orbit.residual <= 1e-8 * orbit.diameter);
        assert!(orbit.residual_history.windows(2).all(|w| w[1] < w[0]));
        let doubled = close_orbit(&spec, &seg, &c.clone().with_nodes(16)).unwrap();
        assert!((doubled.period - orbit.period).abs() < 1e-9 * orbit.period);
    }

    #[test]
    fn exact_orbit_needs_few_iterations() {
        let spec = VectorFieldSpec::hopf_cylinder();
        let c = cfg();
        let p = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let seg = integrate_flow(&spec, &p, (0.0, 2.0 * PI), &c.integrator).unwrap();
        let orbit = close_orbit(&spec, &seg, &c).unwrap();
        assert!(orbit.iterations <= 2);
        assert!((&orbit.point - &p).norm() < 1e-8);
        assert!((orbit.period - 2.0 * PI).abs() < 1e-8);
    }

    #[test]
    fn unclosable_segment_fails() {
        // a linear saddle has no periodic orbits
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let spec = VectorFieldSpec::linear(&a).unwrap();
        let mut c = ClosingConfig::new(WorkingBox::cube(2, 1e6));
        c.max_iterations = 10;
        let seg = integrate_flow(
            &spec,
            &DVector::from_vec(vec![1.0, 1.0]),
            (0.0, 1.0),
            &c.integrator,
        )
        .unwrap();
        let err = close_orbit(&spec, &seg, &c).unwrap_err();
        assert_eq!(err.kind(), crate::error::ErrorKind::Pipeline);
    }
}
