//! The flow `phi_t` and tangent flow `Phi_t = d phi_t`.
//!
//! Backward time is always realized by integrating `-X` forward.

mod integrator;
mod trajectory;

pub use integrator::{IntegratorConfig, Method};
pub use trajectory::{InterpolationOrder, Trajectory};

pub(crate) use integrator::{solve, BaseFlow, StepDense, Variational};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;

/// Dense trajectory of `phi_t(x0)` over `[t_a, t_b]`, one sample per
/// accepted step.
pub fn integrate_flow(
    spec: &VectorFieldSpec,
    x0: &DVector<f64>,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let (ta, tb) = t_span;
    if !(ta <= tb) {
        return Err(Error::Config(format!(
            "t_span must satisfy t_a <= t_b (got [{ta}, {tb}]); integrate the time-reversed field instead"
        )));
    }
    check_point(spec, x0)?;
    let d = spec.dimension();
    let mut times = vec![ta];
    let mut states = vec![x0.clone()];
    let mut norms = vec![spec.eval(x0).norm()];
    let mut coeffs = Vec::new();
    solve(&BaseFlow(spec), x0.as_slice(), ta, tb - ta, cfg, |step| {
        times.push(step.t1);
        states.push(DVector::from_column_slice(step.y1));
        norms.push(step.f1.iter().map(|v| v * v).sum::<f64>().sqrt());
        let c = match step.dense {
            StepDense::Dopri(r3, r4, r5) => [
                DVector::from_column_slice(&r3[..d]),
                DVector::from_column_slice(&r4[..d]),
                DVector::from_column_slice(&r5[..d]),
            ],
            StepDense::Hermite => {
                // express the Hermite cubic in the Dopri basis (r5 = 0)
                let h = step.t1 - step.t0;
                let ydiff: Vec<f64> = (0..d).map(|i| step.y1[i] - step.y0[i]).collect();
                let r3: Vec<f64> = (0..d).map(|i| h * step.f0[i] - ydiff[i]).collect();
                let r4: Vec<f64> = (0..d).map(|i| ydiff[i] - h * step.f1[i] - r3[i]).collect();
                [
                    DVector::from_vec(r3),
                    DVector::from_vec(r4),
                    DVector::zeros(d),
                ]
            }
        };
        coeffs.push(c);
    })?;
    Ok(Trajectory::dopri(times, states, norms, coeffs))
}

/// Samples of `phi_t(x0)` at `t0 + k dt`, `k = 0..=n`, interpolated by cubic
/// Hermite. Memory is proportional to `n`, not to the number of steps.
pub fn integrate_sampled(
    spec: &VectorFieldSpec,
    x0: &DVector<f64>,
    t0: f64,
    dt: f64,
    n: usize,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::Config("sampling step must be positive".into()));
    }
    check_point(spec, x0)?;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut vels = Vec::with_capacity(n + 1);
    let mut norms = Vec::with_capacity(n + 1);
    let mut x = x0.clone();
    for k in 0..=n {
        if k > 0 {
            x = advance(spec, &x, dt, cfg)?;
        }
        let v = spec.eval(&x);
        times.push(t0 + k as f64 * dt);
        norms.push(v.norm());
        vels.push(v);
        states.push(x.clone());
    }
    Trajectory::from_hermite(times, states, vels, norms)
}

/// `phi_t(x0)` for `t >= 0`.
pub fn advance(
    spec: &VectorFieldSpec,
    x0: &DVector<f64>,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<DVector<f64>> {
    if t < 0.0 {
        return advance(&spec.time_reverse(), x0, -t, cfg);
    }
    check_point(spec, x0)?;
    let y = solve(&BaseFlow(spec), x0.as_slice(), 0.0, t, cfg, |_| {})?;
    Ok(DVector::from_vec(y))
}

/// `Phi_t(x0)`, the derivative of the time-`t` map. Negative `t` integrates
/// the variational equation of `-X`.
pub fn tangent_flow(
    spec: &VectorFieldSpec,
    x0: &DVector<f64>,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>> {
    tangent_flow_with_state(spec, x0, t, cfg).map(|(_, m)| m)
}

/// `(phi_t(x0), Phi_t(x0))`.
pub fn tangent_flow_with_state(
    spec: &VectorFieldSpec,
    x0: &DVector<f64>,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    tangent_flow_observed(spec, x0, t, cfg, |_| {})
}

/// As [`tangent_flow_with_state`], reporting the base state after every
/// accepted step.
pub(crate) fn tangent_flow_observed(
    spec: &VectorFieldSpec,
    x0: &DVector<f64>,
    t: f64,
    cfg: &IntegratorConfig,
    mut observe: impl FnMut(&[f64]),
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if t < 0.0 {
        return tangent_flow_observed(&spec.time_reverse(), x0, -t, cfg, observe);
    }
    check_point(spec, x0)?;
    let d = spec.dimension();
    let mut y0 = vec![0.0; d + d * d];
    y0[..d].copy_from_slice(x0.as_slice());
    for i in 0..d {
        y0[d + i * d + i] = 1.0;
    }
    let y = solve(&Variational::new(spec), &y0, 0.0, t, cfg, |step| {
        observe(&step.y1[..d])
    })?;
    let x = DVector::from_column_slice(&y[..d]);
    let m = DMatrix::from_column_slice(d, d, &y[d..]);
    Ok((x, m))
}

/// The field `-X`.
pub fn time_reverse(spec: &VectorFieldSpec) -> VectorFieldSpec {
    spec.time_reverse()
}

/// Normalization step of the unit tangent flow, `v / |v|`.
pub fn unit_tangent(v: &DVector<f64>) -> Result<DVector<f64>> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Degenerate(
            "cannot normalize a zero or non-finite vector".into(),
        ));
    }
    Ok(v / n)
}

fn check_point(spec: &VectorFieldSpec, x: &DVector<f64>) -> Result<()> {
    if x.len() != spec.dimension() {
        return Err(Error::Config(format!(
            "state has dimension {}, field has {}",
            x.len(),
            spec.dimension()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("state must be finite".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::WorkingBox;
    use std::f64::consts::PI;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn cfg(d: usize) -> IntegratorConfig {
        IntegratorConfig::new(WorkingBox::cube(d, 100.0))
    }

    fn diag_field() -> VectorFieldSpec {
        VectorFieldSpec::linear(&DMatrix::from_diagonal(&v(&[-1.0, 2.0]))).unwrap()
    }

    #[test]
    fn zero_span_is_single_sample() {
        let t = integrate_flow(
            &VectorFieldSpec::lorenz_classic(),
            &v(&[1.0, 1.0, 1.0]),
            (0.0, 0.0),
            &cfg(3),
        )
        .unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.first(), &v(&[1.0, 1.0, 1.0]));
    }

    #[test]
    fn linear_closed_form() {
        let t = integrate_flow(&diag_field(), &v(&[1.0, 1.0]), (0.0, 1.0), &cfg(2)).unwrap();
        let expect = v(&[(-1.0f64).exp(), 2.0f64.exp()]);
        assert!((t.last() - &expect).norm() < 1e-8);
        // dense output at interior points
        for s in [0.137f64, 0.5, 0.77] {
            let exact = v(&[(-s).exp(), (2.0 * s).exp()]);
            let err = (t.state_at(s) - exact).norm();
            assert!(err < 1e-8, "{s}: {err}");
        }
    }

    #[test]
    fn rk4_linear() {
        let c = cfg(2).fixed_step(1e-3);
        let t = integrate_flow(&diag_field(), &v(&[1.0, 1.0]), (0.0, 1.0), &c).unwrap();
        let expect = v(&[(-1.0f64).exp(), 2.0f64.exp()]);
        assert!((t.last() - &expect).norm() < 1e-9);
        assert_eq!(t.interpolation_order(), InterpolationOrder::Dopri4);
        assert!((t.state_at(0.5) - v(&[(-0.5f64).exp(), 1.0f64.exp()])).norm() < 1e-9);
    }

    #[test]
    fn hopf_cycle_returns() {
        let t = integrate_flow(
            &VectorFieldSpec::hopf_cylinder(),
            &v(&[1.0, 0.0, 0.0]),
            (0.0, 2.0 * PI),
            &cfg(3),
        )
        .unwrap();
        assert!((t.last() - v(&[1.0, 0.0, 0.0])).norm() < 1e-6);
    }

    #[test]
    fn escape_reports_last_state() {
        let c = IntegratorConfig::new(WorkingBox::cube(2, 3.0));
        match integrate_flow(&diag_field(), &v(&[1.0, 1.0]), (0.0, 5.0), &c) {
            Err(Error::Escape { last_state, time }) => {
                assert!(time > 0.5 && time < 1.0, "{time}");
                assert!(last_state[1] <= 3.0);
            }
            other => panic!("expected escape, got {other:?}"),
        }
    }

    #[test]
    fn budget_error() {
        let mut c = cfg(3);
        c.max_steps = 5;
        let r = advance(
            &VectorFieldSpec::lorenz_classic(),
            &v(&[1.0, 1.0, 1.0]),
            10.0,
            &c,
        );
        assert!(matches!(r, Err(Error::Budget { .. })));
    }

    #[test]
    fn tangent_flow_basics() {
        let c = cfg(2);
        let spec = diag_field();
        assert_eq!(
            tangent_flow(&spec, &v(&[0.3, 0.2]), 0.0, &c).unwrap(),
            DMatrix::identity(2, 2)
        );
        let m = tangent_flow(&spec, &v(&[0.3, 0.2]), 1.0, &c).unwrap();
        let expect = DMatrix::from_diagonal(&v(&[(-1.0f64).exp(), 2.0f64.exp()]));
        assert!((m - expect).norm() < 1e-8);
        // -X forward for time 1 equals X backward
        let back = tangent_flow(&spec.time_reverse(), &v(&[0.3, 0.2]), 1.0, &c).unwrap();
        let expect = DMatrix::from_diagonal(&v(&[1.0f64.exp(), (-2.0f64).exp()]));
        assert!((&back - &expect).norm() < 1e-8);
        let neg = tangent_flow(&spec, &v(&[0.3, 0.2]), -1.0, &c).unwrap();
        assert!((neg - back).norm() < 1e-14);
    }

    #[test]
    fn unit_tangent_cases() {
        let u = unit_tangent(&v(&[3.0, 4.0, 0.0])).unwrap();
        assert!((u - v(&[0.6, 0.8, 0.0])).norm() < 1e-15);
        assert!(unit_tangent(&v(&[0.0, 0.0])).is_err());
        let e = v(&[0.0, 1.0]);
        assert_eq!(unit_tangent(&e).unwrap(), e);
    }

    #[test]
    fn resample_and_slice() {
        let spec = VectorFieldSpec::hopf_cylinder();
        let t = integrate_flow(&spec, &v(&[1.0, 0.0, 0.0]), (0.0, 2.0), &cfg(3)).unwrap();
        let r = t.resample(&spec, 0.01).unwrap();
        assert_eq!(r.len(), 201);
        assert!((r.state_at(1.005) - v(&[1.005f64.cos(), 1.005f64.sin(), 0.0])).norm() < 1e-8);
        let s = t.slice(2, 5).unwrap();
        assert_eq!(s.len(), 4);
        let mid = 0.5 * (s.times()[1] + s.times()[2]);
        assert!((s.state_at(mid) - t.state_at(mid)).norm() < 1e-15);
    }

    #[test]
    fn csv_export() {
        let t = integrate_flow(&diag_field(), &v(&[1.0, 1.0]), (0.0, 0.1), &cfg(2)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,x2,speed\n"));
        assert_eq!(text.lines().count(), t.len() + 1);
    }
}
