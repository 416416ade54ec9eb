use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;

/// How states between stored samples are reconstructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationOrder {
    Linear,
    CubicHermite,
    /// Fourth-order Dormand-Prince continuous extension.
    Dopri4,
}

#[derive(Debug, Clone)]
enum Interpolant {
    Linear,
    Hermite(Vec<DVector<f64>>),
    Dopri(Vec<[DVector<f64>; 3]>),
}

/// Time-stamped samples of `phi_t(x0)` with an interpolation rule.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    field_norms: Vec<f64>,
    interp: Interpolant,
}

impl Trajectory {
    pub(crate) fn dopri(
        times: Vec<f64>,
        states: Vec<DVector<f64>>,
        field_norms: Vec<f64>,
        coeffs: Vec<[DVector<f64>; 3]>,
    ) -> Self {
        debug_assert_eq!(coeffs.len() + 1, times.len().max(1));
        Self {
            times,
            states,
            field_norms,
            interp: Interpolant::Dopri(coeffs),
        }
    }

    /// Build a trajectory from samples and their velocities (cubic Hermite
    /// interpolation). Times must be strictly increasing.
    pub fn from_hermite(
        times: Vec<f64>,
        states: Vec<DVector<f64>>,
        velocities: Vec<DVector<f64>>,
        field_norms: Vec<f64>,
    ) -> Result<Self> {
        Self::check_samples(&times, &states, &field_norms)?;
        if velocities.len() != times.len() {
            return Err(Error::Config("one velocity per sample required".into()));
        }
        Ok(Self {
            times,
            states,
            field_norms,
            interp: Interpolant::Hermite(velocities),
        })
    }

    /// Piecewise-linear trajectory from bare samples.
    pub fn from_samples(
        times: Vec<f64>,
        states: Vec<DVector<f64>>,
        field_norms: Vec<f64>,
    ) -> Result<Self> {
        Self::check_samples(&times, &states, &field_norms)?;
        Ok(Self {
            times,
            states,
            field_norms,
            interp: Interpolant::Linear,
        })
    }

    fn check_samples(times: &[f64], states: &[DVector<f64>], norms: &[f64]) -> Result<()> {
        if times.is_empty() || times.len() != states.len() || times.len() != norms.len() {
            return Err(Error::Config(
                "trajectory needs matching, nonempty sample lists".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "trajectory times must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.states[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    /// `|X|` at each stored sample.
    pub fn field_norms(&self) -> &[f64] {
        &self.field_norms
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn first(&self) -> &DVector<f64> {
        &self.states[0]
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    pub fn interpolation_order(&self) -> InterpolationOrder {
        match self.interp {
            Interpolant::Linear => InterpolationOrder::Linear,
            Interpolant::Hermite(_) => InterpolationOrder::CubicHermite,
            Interpolant::Dopri(_) => InterpolationOrder::Dopri4,
        }
    }

    /// Interpolated state; `t` is clamped to the covered span.
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let th = (t - t0) / h;
        let y0 = &self.states[i];
        let y1 = &self.states[i + 1];
        match &self.interp {
            Interpolant::Linear => y0 + (y1 - y0) * th,
            Interpolant::Hermite(v) => {
                let th2 = th * th;
                let th3 = th2 * th;
                let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
                let h10 = th3 - 2.0 * th2 + th;
                let h01 = -2.0 * th3 + 3.0 * th2;
                let h11 = th3 - th2;
                y0 * h00 + &v[i] * (h10 * h) + y1 * h01 + &v[i + 1] * (h11 * h)
            }
            Interpolant::Dopri(c) => {
                let [r3, r4, r5] = &c[i];
                let r2 = y1 - y0;
                let th1 = 1.0 - th;
                y0 + (r2 + (r3 + (r4 + r5 * th1) * th) * th1) * th
            }
        }
    }

    /// Samples with index in `[start, end]`, keeping the interpolation data.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end >= self.len() {
            return Err(Error::Config(format!(
                "bad slice [{start}, {end}] of {}",
                self.len()
            )));
        }
        let interp = match &self.interp {
            Interpolant::Linear => Interpolant::Linear,
            Interpolant::Hermite(v) => Interpolant::Hermite(v[start..=end].to_vec()),
            Interpolant::Dopri(c) => Interpolant::Dopri(c[start..end].to_vec()),
        };
        Ok(Self {
            times: self.times[start..=end].to_vec(),
            states: self.states[start..=end].to_vec(),
            field_norms: self.field_norms[start..=end].to_vec(),
            interp,
        })
    }

    /// Joins pieces end to start, shifting each piece in time to begin where
    /// the previous one ends. The first sample of every later piece is
    /// dropped in favour of the last sample of the piece before it.
    pub fn concatenate(parts: &[Trajectory]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("nothing to concatenate".into()))?;
        let mut out = first.clone();
        for part in &parts[1..] {
            let shift = out.end_time() - part.times[0];
            out.times.extend(part.times[1..].iter().map(|t| t + shift));
            out.states.extend_from_slice(&part.states[1..]);
            out.field_norms.extend_from_slice(&part.field_norms[1..]);
            match (&mut out.interp, &part.interp) {
                (Interpolant::Linear, Interpolant::Linear) => {}
                (Interpolant::Hermite(a), Interpolant::Hermite(b)) => a.extend_from_slice(&b[1..]),
                (Interpolant::Dopri(a), Interpolant::Dopri(b)) => a.extend_from_slice(b),
                _ => {
                    return Err(Error::Config(
                        "pieces use different interpolation rules".into(),
                    ))
                }
            }
        }
        if out.times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "concatenated times must be strictly increasing".into(),
            ));
        }
        Ok(out)
    }

    /// Shift all time stamps so the trajectory starts at `t0`.
    pub fn rebased(mut self, t0: f64) -> Self {
        let shift = t0 - self.times[0];
        self.times.iter_mut().for_each(|t| *t += shift);
        self
    }

    /// Uniform resampling at spacing close to `dt` (the span is divided
    /// evenly), with cubic Hermite interpolation built from field values.
    pub fn resample(&self, spec: &VectorFieldSpec, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config("resampling step must be positive".into()));
        }
        if self.len() == 1 {
            return Ok(self.clone());
        }
        let n = (self.duration() / dt).round().max(1.0) as usize;
        let h = self.duration() / n as f64;
        let t0 = self.start_time();
        let mut times = Vec::with_capacity(n + 1);
        let mut states = Vec::with_capacity(n + 1);
        let mut vels = Vec::with_capacity(n + 1);
        let mut norms = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let t = if k == n {
                self.end_time()
            } else {
                t0 + k as f64 * h
            };
            let x = self.state_at(t);
            let v = spec.eval(&x);
            times.push(t);
            norms.push(v.norm());
            vels.push(v);
            states.push(x);
        }
        Self::from_hermite(times, states, vels, norms)
    }

    /// CSV with columns `t, x1..xd, speed`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dimension();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=d).map(|i| format!("x{i}")))
            .chain(std::iter::once("speed".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for ((t, x), s) in self.times.iter().zip(&self.states).zip(&self.field_norms) {
            let mut line = format!("{t:.17e}");
            for v in x.iter() {
                line.push_str(&format!(",{v:.17e}"));
            }
            line.push_str(&format!(",{s:.17e}"));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}
