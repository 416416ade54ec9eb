//! Explicit Runge-Kutta drivers: fixed-step RK4 and adaptive Dormand-Prince
//! 5(4) with its continuous extension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{VectorFieldSpec, WorkingBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Rk45,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for RK4, initial step guess for RK45.
    pub step: f64,
    pub atol: f64,
    pub rtol: f64,
    pub bounds: WorkingBox,
    pub max_steps: usize,
}

impl IntegratorConfig {
    /// Adaptive RK45 at 1e-10 absolute / 1e-9 relative tolerance.
    pub fn new(bounds: WorkingBox) -> Self {
        Self {
            method: Method::Rk45,
            step: 1e-2,
            atol: 1e-10,
            rtol: 1e-9,
            bounds,
            max_steps: 50_000_000,
        }
    }

    pub fn with_tolerances(mut self, atol: f64, rtol: f64) -> Self {
        self.atol = atol;
        self.rtol = rtol;
        self
    }

    pub fn fixed_step(mut self, step: f64) -> Self {
        self.method = Method::Rk4;
        self.step = step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.atol > 0.0) || !(self.rtol > 0.0) {
            return Err(Error::Config(
                "integrator step and tolerances must be positive".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Right-hand side of an autonomous ODE whose first `base_dim` components
/// are a point of the working box.
pub(crate) trait OdeSystem {
    fn dim(&self) -> usize;
    fn base_dim(&self) -> usize;
    fn rhs(&self, y: &[f64], dy: &mut [f64]);
}

pub(crate) struct BaseFlow<'a>(pub &'a VectorFieldSpec);

impl OdeSystem for BaseFlow<'_> {
    fn dim(&self) -> usize {
        self.0.dimension()
    }
    fn base_dim(&self) -> usize {
        self.0.dimension()
    }
    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        self.0.eval_into(y, dy);
    }
}

/// State `(x, M)` with `M` stored column-major, `M' = DX(x) M`.
pub(crate) struct Variational<'a> {
    spec: &'a VectorFieldSpec,
    jac: std::cell::RefCell<nalgebra::DMatrix<f64>>,
}

impl<'a> Variational<'a> {
    pub fn new(spec: &'a VectorFieldSpec) -> Self {
        let d = spec.dimension();
        Self {
            spec,
            jac: std::cell::RefCell::new(nalgebra::DMatrix::zeros(d, d)),
        }
    }
}

impl OdeSystem for Variational<'_> {
    fn dim(&self) -> usize {
        let d = self.spec.dimension();
        d + d * d
    }
    fn base_dim(&self) -> usize {
        self.spec.dimension()
    }
    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let d = self.spec.dimension();
        let (x, m) = y.split_at(d);
        let (dx, dm) = dy.split_at_mut(d);
        self.spec.eval_into(x, dx);
        let mut jac = self.jac.borrow_mut();
        self.spec.jacobian_into(x, &mut jac);
        for c in 0..d {
            let col = &m[c * d..(c + 1) * d];
            let out = &mut dm[c * d..(c + 1) * d];
            for (r, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += jac[(r, k)] * col[k];
                }
                *o = acc;
            }
        }
    }
}

/// Continuous extension coefficients of one accepted step, covering the full
/// system state.
pub(crate) enum StepDense<'a> {
    /// Cubic Hermite from endpoint derivatives.
    Hermite,
    /// Dormand-Prince `(r3, r4, r5)`; `r1 = y0`, `r2 = y1 - y0`.
    Dopri(&'a [f64], &'a [f64], &'a [f64]),
}

pub(crate) struct StepRecord<'a> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    pub f0: &'a [f64],
    pub f1: &'a [f64],
    pub dense: StepDense<'a>,
}

// Dormand-Prince coefficients
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn check_box(cfg: &IntegratorConfig, base: &[f64], t: f64, last: &[f64]) -> Result<()> {
    if cfg.bounds.contains(base) {
        Ok(())
    } else {
        Err(Error::Escape {
            time: t,
            last_state: last.to_vec(),
        })
    }
}

/// Integrate `sys` forward for `duration >= 0` starting at time `t0`,
/// calling `on_step` after every accepted step. Returns the final state.
pub(crate) fn solve<S: OdeSystem>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    duration: f64,
    cfg: &IntegratorConfig,
    mut on_step: impl FnMut(&StepRecord<'_>),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(duration >= 0.0) {
        return Err(Error::Config(format!(
            "integration span must be nonnegative, got {duration}"
        )));
    }
    let nb = sys.base_dim();
    if cfg.bounds.dimension() != nb {
        return Err(Error::Config(
            "working box dimension does not match the field".into(),
        ));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("initial state must be finite".into()));
    }
    check_box(cfg, &y0[..nb], t0, &y0[..nb])?;
    if duration == 0.0 {
        return Ok(y0.to_vec());
    }
    match cfg.method {
        Method::Rk4 => solve_rk4(sys, y0, t0, duration, cfg, &mut on_step),
        Method::Rk45 => solve_dopri(sys, y0, t0, duration, cfg, &mut on_step),
    }
}

fn solve_rk4<S: OdeSystem>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    duration: f64,
    cfg: &IntegratorConfig,
    on_step: &mut impl FnMut(&StepRecord<'_>),
) -> Result<Vec<f64>> {
    let n = sys.dim();
    let nb = sys.base_dim();
    let steps = (duration / cfg.step).ceil().max(1.0) as usize;
    if steps > cfg.max_steps {
        return Err(Error::Budget {
            max_steps: cfg.max_steps,
            time: t0,
        });
    }
    let h = duration / steps as f64;
    let mut y = y0.to_vec();
    let mut f0 = vec![0.0; n];
    sys.rhs(&y, &mut f0);
    let (mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut f1 = vec![0.0; n];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * f0[i];
        }
        sys.rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        sys.rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        sys.rhs(&tmp, &mut k4);
        for i in 0..n {
            ynew[i] = y[i] + h / 6.0 * (f0[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t1 = if s + 1 == steps { t0 + duration } else { t + h };
        check_box(cfg, &ynew[..nb], t1, &y[..nb])?;
        sys.rhs(&ynew, &mut f1);
        on_step(&StepRecord {
            t0: t,
            t1,
            y0: &y,
            y1: &ynew,
            f0: &f0,
            f1: &f1,
            dense: StepDense::Hermite,
        });
        std::mem::swap(&mut y, &mut ynew);
        std::mem::swap(&mut f0, &mut f1);
    }
    Ok(y)
}

fn solve_dopri<S: OdeSystem>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    duration: f64,
    cfg: &IntegratorConfig,
    on_step: &mut impl FnMut(&StepRecord<'_>),
) -> Result<Vec<f64>> {
    let n = sys.dim();
    let nb = sys.base_dim();
    let t_end = t0 + duration;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    sys.rhs(&y, &mut k1);
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut r3 = vec![0.0; n];
    let mut r4 = vec![0.0; n];
    let mut r5 = vec![0.0; n];

    let mut t = t0;
    let mut h = cfg.step.min(duration);
    let mut steps = 0usize;
    let mut rejected_last = false;
    loop {
        if steps >= cfg.max_steps {
            return Err(Error::Budget {
                max_steps: cfg.max_steps,
                time: t,
            });
        }
        let last = t + h >= t_end - 1e-14 * t_end.abs().max(1.0);
        if last {
            h = t_end - t;
        }
        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(&ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(&ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(&ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(&ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(&ytmp, &mut k6);
        for i in 0..n {
            ynew[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.rhs(&ynew, &mut k7);
        steps += 1;

        let mut err = 0.0;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = cfg.atol + cfg.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Numerical(format!("non-finite state at t = {t}")));
            }
            h *= 0.1;
            rejected_last = true;
            continue;
        }

        let fac = (0.9 * err.powf(-0.2)).clamp(0.2, if rejected_last { 1.0 } else { 5.0 });
        if err <= 1.0 {
            let t1 = if last { t_end } else { t + h };
            check_box(cfg, &ynew[..nb], t1, &y[..nb])?;
            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                r3[i] = bspl;
                r4[i] = ydiff - h * k7[i] - bspl;
                r5[i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            on_step(&StepRecord {
                t0: t,
                t1,
                y0: &y,
                y1: &ynew,
                f0: &k1,
                f1: &k7,
                dense: StepDense::Dopri(&r3, &r4, &r5),
            });
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = t1;
            if last {
                return Ok(y);
            }
            rejected_last = false;
            h *= fac;
        } else {
            rejected_last = true;
            h *= fac.min(1.0);
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Numerical(format!("step size underflow at t = {t}")));
            }
        }
    }
}
