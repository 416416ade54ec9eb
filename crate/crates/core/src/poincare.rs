//! Normal bundle, linear Poincare flow `psi_t`, its scaled version
//! `psi*_t`, the extended flow `Theta_t`, and sectional Poincare maps.
//!
//! Frames along an orbit are carried by projecting the previous frame onto
//! the new normal space and re-orthonormalizing after every accepted
//! integrator step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::flow::{self, IntegratorConfig};
use crate::linalg;

/// Settings for every operation that needs a regular orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareConfig {
    pub integrator: IntegratorConfig,
    /// Relative section radius: sections at `x` have radius `beta |X(x)|`.
    pub beta: f64,
    /// Target sections of sectional maps use `reach * beta` as their radius.
    pub reach: f64,
    /// Orbit points with `|X|` below this abort with a singularity error.
    pub min_speed: f64,
    /// Root tolerance in time for section crossings.
    pub root_tol: f64,
}

impl PoincareConfig {
    /// Defaults with the singularity floor set to `1e-8 K0`, `K0` sampled on
    /// the integrator's working box.
    pub fn new(spec: &VectorFieldSpec, integrator: IntegratorConfig) -> Self {
        let k0 = spec.field_bound(&integrator.bounds, 10_000);
        Self {
            integrator,
            beta: 0.05,
            reach: 10.0,
            min_speed: 1e-8 * k0,
            root_tol: 1e-10,
        }
    }

    fn check_speed(&self, speed: f64) -> Result<()> {
        if speed < self.min_speed || !speed.is_finite() {
            Err(Error::Singularity {
                speed,
                threshold: self.min_speed,
            })
        } else {
            Ok(())
        }
    }
}

/// Orthonormal basis of `N_x = X(x)^perp`, stored as the columns of a
/// `d x (d-1)` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFrame {
    pub base: DVector<f64>,
    pub field: DVector<f64>,
    pub basis: DMatrix<f64>,
}

impl NormalFrame {
    /// A canonical frame at a regular point.
    pub fn at(spec: &VectorFieldSpec, x: &DVector<f64>, cfg: &PoincareConfig) -> Result<Self> {
        let field = spec.eval(x);
        cfg.check_speed(field.norm())?;
        Self::from_field(x.clone(), field)
    }

    /// Canonical frame from a base point and its (nonzero) field value.
    pub fn from_field(base: DVector<f64>, field: DVector<f64>) -> Result<Self> {
        let d = field.len();
        let speed = field.norm();
        if !(speed > 0.0) {
            return Err(Error::Singularity {
                speed,
                threshold: 0.0,
            });
        }
        let mut m = DMatrix::zeros(d, d + 1);
        m.set_column(0, &(&field / speed));
        for i in 0..d {
            m[(i, i + 1)] = 1.0;
        }
        let q = m.qr().q();
        let basis = q.columns(1, d - 1).into_owned();
        let mut frame = Self { base, field, basis };
        frame.polish();
        Ok(frame)
    }

    /// Adopt a given basis after checking orthonormality and normality.
    pub fn from_basis(
        base: DVector<f64>,
        field: DVector<f64>,
        basis: DMatrix<f64>,
    ) -> Result<Self> {
        let d = field.len();
        if basis.shape() != (d, d - 1) {
            return Err(Error::Config("frame basis must be d x (d-1)".into()));
        }
        let speed = field.norm();
        if !(speed > 0.0) {
            return Err(Error::Singularity {
                speed,
                threshold: 0.0,
            });
        }
        let gram_err = (basis.transpose() * &basis - DMatrix::identity(d - 1, d - 1)).amax();
        let normal_err = (basis.transpose() * &field).amax() / speed;
        if gram_err > 1e-10 || normal_err > 1e-10 {
            return Err(Error::Degenerate(
                "basis is not an orthonormal normal frame".into(),
            ));
        }
        let mut f = Self { base, field, basis };
        f.polish();
        Ok(f)
    }

    pub fn dimension(&self) -> usize {
        self.field.len()
    }

    pub fn speed(&self) -> f64 {
        self.field.norm()
    }

    pub fn direction(&self) -> DVector<f64> {
        &self.field / self.field.norm()
    }

    /// Coordinates of a normal vector.
    pub fn coords(&self, v: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * v
    }

    pub fn vector(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.basis * c
    }

    /// Project this frame onto the normal space at `(base, field)` and
    /// re-orthonormalize.
    pub fn transport(&self, base: DVector<f64>, field: DVector<f64>) -> Result<Self> {
        let speed = field.norm();
        if !(speed > 0.0) {
            return Err(Error::Singularity {
                speed,
                threshold: 0.0,
            });
        }
        let u = &field / speed;
        let projected = &self.basis - &u * (u.transpose() * &self.basis);
        let basis = linalg::gram_schmidt(&projected, 1e-6).ok_or_else(|| {
            Error::Degenerate("flow direction turned too fast for frame transport".into())
        })?;
        let mut f = Self { base, field, basis };
        f.polish();
        Ok(f)
    }

    // one extra pass of projection + Gram-Schmidt brings orthogonality to
    // round-off level
    /// Frame at `x` from this basis projected onto `X(x)^perp`; meant for
    /// points close to `self.base`.
    pub fn moved_to(
        &self,
        spec: &VectorFieldSpec,
        x: &DVector<f64>,
        cfg: &PoincareConfig,
    ) -> Result<Self> {
        let field = spec.eval(x);
        cfg.check_speed(field.norm())?;
        let mut f = Self {
            base: x.clone(),
            field,
            basis: self.basis.clone(),
        };
        f.polish();
        let gram_err = (f.basis.transpose() * &f.basis
            - DMatrix::identity(f.basis.ncols(), f.basis.ncols()))
        .amax();
        if gram_err > 1e-8 {
            return Err(Error::Degenerate(
                "frame does not project onto the new normal plane".into(),
            ));
        }
        Ok(f)
    }

    fn polish(&mut self) {
        let u = &self.field / self.field.norm();
        let projected = &self.basis - &u * (u.transpose() * &self.basis);
        if let Some(b) = linalg::gram_schmidt(&projected, 1e-12) {
            self.basis = b;
        }
    }
}

/// `v - <v, X> X / |X|^2`.
pub fn normal_projection(field: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let s2 = field.norm_squared();
    if !(s2 > 0.0) {
        return Err(Error::Singularity {
            speed: 0.0,
            threshold: 0.0,
        });
    }
    Ok(v - field * (field.dot(v) / s2))
}

/// Everything produced by flowing a frame for time `t`.
#[derive(Debug, Clone)]
pub struct PoincareStep {
    pub end: DVector<f64>,
    pub tangent: DMatrix<f64>,
    /// `psi_t` from the input frame to `frame_out`.
    pub lpf: DMatrix<f64>,
    pub frame_out: NormalFrame,
    pub speed_in: f64,
    pub speed_out: f64,
    /// Smallest `|X|` met at the accepted steps.
    pub min_speed: f64,
}

impl PoincareStep {
    /// `|X(x)| / |X(phi_t x)|`.
    pub fn scale(&self) -> f64 {
        self.speed_in / self.speed_out
    }

    /// `psi*_t`.
    pub fn scaled(&self) -> DMatrix<f64> {
        &self.lpf * self.scale()
    }
}

/// Flow `frame_in` for time `t >= 0`, transporting the frame step by step,
/// and express `psi_t` in the input and transported frames.
pub fn poincare_step(
    spec: &VectorFieldSpec,
    frame_in: &NormalFrame,
    t: f64,
    cfg: &PoincareConfig,
) -> Result<PoincareStep> {
    if t < 0.0 {
        return Err(Error::Config(
            "poincare_step needs t >= 0; use the reversed field".into(),
        ));
    }
    cfg.check_speed(frame_in.speed())?;
    let mut frame = frame_in.clone();
    let mut transport_err = None;
    let mut min_speed = frame_in.speed();
    let (end, tangent) =
        flow::tangent_flow_observed(spec, &frame_in.base, t, &cfg.integrator, |x| {
            if transport_err.is_some() {
                return;
            }
            let x = DVector::from_column_slice(x);
            let f = spec.eval(&x);
            let s = f.norm();
            min_speed = min_speed.min(s);
            if let Err(e) = cfg.check_speed(s) {
                transport_err = Some(e);
                return;
            }
            match frame.transport(x, f) {
                Ok(next) => frame = next,
                Err(e) => transport_err = Some(e),
            }
        })?;
    if let Some(e) = transport_err {
        return Err(e);
    }
    let field_out = spec.eval(&end);
    let frame_out = frame.transport(end.clone(), field_out)?;
    let lpf = project_tangent(&tangent, frame_in, &frame_out)?;
    Ok(PoincareStep {
        speed_in: frame_in.speed(),
        speed_out: frame_out.speed(),
        end,
        tangent,
        lpf,
        frame_out,
        min_speed,
    })
}

/// `P[j, i] = <n_j^out, proj(Phi n_i^in)>`.
pub fn project_tangent(
    tangent: &DMatrix<f64>,
    frame_in: &NormalFrame,
    frame_out: &NormalFrame,
) -> Result<DMatrix<f64>> {
    let d = frame_in.dimension();
    let mut images = DMatrix::zeros(d, d - 1);
    for i in 0..d - 1 {
        let w = tangent * frame_in.basis.column(i);
        images.set_column(i, &normal_projection(&frame_out.field, &w)?);
    }
    Ok(frame_out.basis.transpose() * images)
}

/// `psi_t(x)` between the supplied frames; the output frame must sit at
/// `phi_t(x)`.
pub fn linear_poincare(
    spec: &VectorFieldSpec,
    t: f64,
    frames: (&NormalFrame, &NormalFrame),
    cfg: &PoincareConfig,
) -> Result<DMatrix<f64>> {
    let (fin, fout) = frames;
    cfg.check_speed(fin.speed())?;
    cfg.check_speed(fout.speed())?;
    let step = poincare_step(spec, fin, t, cfg)?;
    let tol = 1e-6 * (1.0 + step.end.norm());
    if (&step.end - &fout.base).norm() > tol {
        return Err(Error::Config(
            "output frame is not based at phi_t(x)".into(),
        ));
    }
    project_tangent(&step.tangent, fin, fout)
}

/// `psi*_t = |X(x)| / |X(phi_t x)| psi_t`.
pub fn scaled_linear_poincare(
    spec: &VectorFieldSpec,
    t: f64,
    frames: (&NormalFrame, &NormalFrame),
    cfg: &PoincareConfig,
) -> Result<DMatrix<f64>> {
    let lpf = linear_poincare(spec, t, frames, cfg)?;
    Ok(lpf * (frames.0.speed() / frames.1.speed()))
}

/// `Theta_t(v1, v2) = (Phi v1, Phi v2 - <Phi v1, Phi v2> / |Phi v1|^2 Phi v1)`.
pub fn extended_lpf(
    spec: &VectorFieldSpec,
    x: &DVector<f64>,
    t: f64,
    v1: &DVector<f64>,
    v2: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if (v1.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::Degenerate(
            "first component must be a unit vector".into(),
        ));
    }
    if v1.dot(v2).abs() > 1e-10 * (1.0 + v2.norm()) {
        return Err(Error::Degenerate("components must be orthogonal".into()));
    }
    let phi = flow::tangent_flow(spec, x, t, cfg)?;
    let w1 = &phi * v1;
    let w2 = &phi * v2;
    let n1 = w1.norm_squared();
    if !(n1.sqrt() > 1e-300) {
        return Err(Error::Degenerate("|Phi_t v1| vanished".into()));
    }
    let second = &w2 - &w1 * (w1.dot(&w2) / n1);
    Ok((w1, second))
}

/// A disc of the hyperplane through `anchor` orthogonal to `X(anchor)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub anchor: DVector<f64>,
    pub radius: f64,
    pub frame: NormalFrame,
}

impl SectionSpec {
    /// Section of radius `beta |X(anchor)|`.
    pub fn new(
        spec: &VectorFieldSpec,
        anchor: &DVector<f64>,
        beta: f64,
        cfg: &PoincareConfig,
    ) -> Result<Self> {
        let frame = NormalFrame::at(spec, anchor, cfg)?;
        Ok(Self::with_frame(frame, beta))
    }

    pub fn with_frame(frame: NormalFrame, beta: f64) -> Self {
        Self {
            anchor: frame.base.clone(),
            radius: beta * frame.speed(),
            frame,
        }
    }

    /// `<z - anchor, X(anchor)/|X(anchor)|>`.
    pub fn signed_distance(&self, z: &DVector<f64>) -> f64 {
        (z - &self.anchor).dot(&self.frame.field) / self.frame.speed()
    }
}

#[derive(Debug, Clone)]
pub struct Crossing {
    pub time: f64,
    pub point: DVector<f64>,
    /// More than one valid crossing was found in the window.
    pub ambiguous: bool,
}

/// First crossing of `section` by `phi_t(y)`, `t in (0, t_max)`, in the flow
/// direction and inside the section disc.
pub fn section_crossing(
    spec: &VectorFieldSpec,
    section: &SectionSpec,
    y: &DVector<f64>,
    t_max: f64,
    cfg: &PoincareConfig,
) -> Result<Crossing> {
    let traj = flow::integrate_flow(spec, y, (0.0, t_max), &cfg.integrator)?;
    let g = |t: f64| section.signed_distance(&traj.state_at(t));
    let times = traj.times();
    let mut found: Vec<(f64, DVector<f64>)> = Vec::new();
    for w in 0..times.len() - 1 {
        let (a, b) = (times[w], times[w + 1]);
        let (ga, gb) = (g(a), g(b));
        if !(ga < 0.0 && gb >= 0.0) {
            continue;
        }
        let t = refine_root(&g, a, b, ga, gb, cfg.root_tol);
        if t <= 0.0 || t >= t_max {
            continue;
        }
        let z = traj.state_at(t);
        if (&z - &section.anchor).norm() <= section.radius {
            found.push((t, z));
        }
    }
    let ambiguous = found.len() > 1;
    let (time, point) = found.into_iter().next().ok_or_else(|| {
        Error::NoCrossing(format!(
            "no crossing of the section disc within (0, {t_max})"
        ))
    })?;
    Ok(Crossing {
        time,
        point,
        ambiguous,
    })
}

/// Return time to the section at `phi_1(x)` for a point `y` with
/// `|y - x| <= beta |X(x)|`; the crossing lies in `(0, 2)`.
pub fn return_time(
    spec: &VectorFieldSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    cfg: &PoincareConfig,
) -> Result<Crossing> {
    let fx = spec.eval(x);
    cfg.check_speed(fx.norm())?;
    if (y - x).norm() > cfg.beta * fx.norm() {
        return Err(Error::Config("y is outside N_x(beta |X(x)|)".into()));
    }
    let anchor = flow::advance(spec, x, 1.0, &cfg.integrator)?;
    let section = SectionSpec::new(spec, &anchor, cfg.beta * cfg.reach, cfg)?;
    section_crossing(spec, &section, y, 2.0, cfg)
}

/// Bracketed secant (Illinois variant) on a sign change `ga < 0 <= gb`.
pub(crate) fn refine_root(
    g: &impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    mut ga: f64,
    mut gb: f64,
    tol: f64,
) -> f64 {
    if gb == 0.0 {
        return b;
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let mut c = (a * gb - b * ga) / (gb - ga);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let gc = g(c);
        if gc == 0.0 || (b - a) < tol {
            return c;
        }
        if (gc < 0.0) == (ga < 0.0) {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
        if (b - a) < tol {
            break;
        }
    }
    0.5 * (a + b)
}

/// Image of a sectional Poincare map.
#[derive(Debug, Clone)]
pub struct SectionalImage {
    /// Offset from `phi_T(x)` in coordinates of `frame_out`.
    pub offset: DVector<f64>,
    pub frame_out: NormalFrame,
    pub time: f64,
}

/// Holonomy `N_x -> N_{phi_T x}`: start at `x + frame * y_offset` and hop
/// across sections through `phi_{k T/m}(x)`, `m = ceil(T)`.
pub fn sectional_poincare_map(
    spec: &VectorFieldSpec,
    frame_in: &NormalFrame,
    big_t: f64,
    y_offset: &DVector<f64>,
    cfg: &PoincareConfig,
) -> Result<SectionalImage> {
    if !(big_t > 0.0) {
        return Err(Error::Config("sectional map needs T > 0".into()));
    }
    if y_offset.norm() > cfg.beta * frame_in.speed() {
        return Err(Error::Config("offset exceeds beta |X(x)|".into()));
    }
    let step = poincare_step(spec, frame_in, big_t, cfg)?;
    let hops = big_t.ceil().max(1.0) as usize;
    let tau = big_t / hops as f64;
    let mut anchor = frame_in.base.clone();
    let mut z = &frame_in.base + frame_in.vector(y_offset);
    let mut elapsed = 0.0;
    for k in 0..hops {
        anchor = if k + 1 == hops {
            step.end.clone()
        } else {
            flow::advance(spec, &anchor, tau, &cfg.integrator)?
        };
        if y_offset.norm() == 0.0 {
            z = anchor.clone();
            elapsed += tau;
            continue;
        }
        let section = SectionSpec::new(spec, &anchor, cfg.beta * cfg.reach, cfg)?;
        let c = section_crossing(spec, &section, &z, 2.0 * tau, cfg)?;
        z = c.point;
        elapsed += c.time;
    }
    let offset = step.frame_out.coords(&(z - &step.end));
    Ok(SectionalImage {
        offset,
        frame_out: step.frame_out,
        time: elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::WorkingBox;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn lorenz_cfg() -> (VectorFieldSpec, PoincareConfig) {
        let spec = VectorFieldSpec::lorenz_classic();
        let cfg = PoincareConfig::new(&spec, IntegratorConfig::new(WorkingBox::cube(3, 200.0)));
        (spec, cfg)
    }

    fn lorenz_point() -> DVector<f64> {
        let (spec, cfg) = lorenz_cfg();
        flow::advance(&spec, &v(&[1.0, 1.0, 20.0]), 20.0, &cfg.integrator).unwrap()
    }

    #[test]
    fn projection_cases() {
        let x = v(&[1.0, 0.0, 0.0]);
        assert_eq!(normal_projection(&x, &x).unwrap().norm(), 0.0);
        assert_eq!(
            normal_projection(&x, &v(&[0.0, 2.0, 3.0])).unwrap(),
            v(&[0.0, 2.0, 3.0])
        );
        assert_eq!(
            normal_projection(&x, &v(&[1.0, 1.0, 0.0])).unwrap(),
            v(&[0.0, 1.0, 0.0])
        );
        assert!(normal_projection(&v(&[0.0, 0.0, 0.0]), &x).is_err());
        let f = v(&[0.3, -1.2, 2.0]);
        let w = v(&[1.0, 2.0, -0.5]);
        let p = normal_projection(&f, &w).unwrap();
        assert!(p.dot(&f).abs() < 1e-12);
        assert!((normal_projection(&f, &p).unwrap() - &p).norm() < 1e-12);
    }

    #[test]
    fn frame_invariants() {
        let f = NormalFrame::from_field(v(&[0.0; 3]), v(&[0.3, -1.2, 2.0])).unwrap();
        let g = f.basis.transpose() * &f.basis;
        assert!((g - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!((f.basis.transpose() * &f.field).amax() < 1e-12);
        let t = f.transport(v(&[0.1; 3]), v(&[0.4, -1.0, 2.1])).unwrap();
        assert!((t.basis.transpose() * &t.field).amax() < 1e-12);
    }

    #[test]
    fn zero_time_is_identity() {
        let (spec, cfg) = lorenz_cfg();
        let x = lorenz_point();
        let f = NormalFrame::at(&spec, &x, &cfg).unwrap();
        let p = linear_poincare(&spec, 0.0, (&f, &f), &cfg).unwrap();
        assert!((p - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn singular_frame_rejected() {
        let (spec, cfg) = lorenz_cfg();
        assert!(matches!(
            NormalFrame::at(&spec, &v(&[0.0, 0.0, 0.0]), &cfg),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn cocycle_property_on_lorenz() {
        let (spec, cfg) = lorenz_cfg();
        let mut x = lorenz_point();
        for (s, t) in [(0.5, 1.0), (1.3, 0.7), (2.0, 2.0)] {
            let f0 = NormalFrame::at(&spec, &x, &cfg).unwrap();
            let a = poincare_step(&spec, &f0, s, &cfg).unwrap();
            let b = poincare_step(&spec, &a.frame_out, t, &cfg).unwrap();
            let composed = &b.lpf * &a.lpf;
            let direct = linear_poincare(&spec, s + t, (&f0, &b.frame_out), &cfg).unwrap();
            let rel = (&direct - &composed).norm() / direct.norm();
            assert!(rel < 1e-5, "rel {rel}");
            x = b.end;
        }
    }

    #[test]
    fn scaled_matches_ratio() {
        let (spec, cfg) = lorenz_cfg();
        let x = lorenz_point();
        let f0 = NormalFrame::at(&spec, &x, &cfg).unwrap();
        let step = poincare_step(&spec, &f0, 1.0, &cfg).unwrap();
        let scaled = scaled_linear_poincare(&spec, 1.0, (&f0, &step.frame_out), &cfg).unwrap();
        let ratio = spec.eval(&x).norm() / spec.eval(&step.end).norm();
        assert!((step.scale() - ratio).abs() <= 1e-10 * ratio);
        assert!((scaled - &step.lpf * ratio).amax() <= 1e-10 * step.lpf.amax());
    }

    #[test]
    fn hopf_floquet_magnitudes() {
        let spec = VectorFieldSpec::hopf_cylinder();
        let cfg = PoincareConfig::new(
            &spec,
            IntegratorConfig::new(WorkingBox::cube(3, 5.0)).with_tolerances(1e-12, 1e-12),
        );
        let p = v(&[1.0, 0.0, 0.0]);
        let f0 = NormalFrame::at(&spec, &p, &cfg).unwrap();
        let step = poincare_step(&spec, &f0, 2.0 * PI, &cfg).unwrap();
        // re-express in the starting frame (holonomy)
        let mono = f0.basis.transpose() * &step.frame_out.basis * &step.lpf;
        let mut mags: Vec<f64> = mono
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .collect();
        mags.sort_by(f64::total_cmp);
        assert!((mags[0] / (-4.0 * PI).exp() - 1.0).abs() < 1e-4, "{mags:?}");
        assert!((mags[1] / (-2.0 * PI).exp() - 1.0).abs() < 1e-4, "{mags:?}");
    }

    #[test]
    fn extended_flow_identities() {
        let (spec, cfg) = lorenz_cfg();
        let x = lorenz_point();
        let f0 = NormalFrame::at(&spec, &x, &cfg).unwrap();
        let v2 = f0.vector(&v(&[0.3, -0.8]));
        let (a, b) = extended_lpf(&spec, &x, 0.0, &f0.direction(), &v2, &cfg.integrator).unwrap();
        assert!((a - f0.direction()).norm() < 1e-15 && (b - &v2).norm() < 1e-15);

        let tight = cfg.integrator.clone().with_tolerances(1e-13, 1e-13);
        let (w1, w2) = extended_lpf(&spec, &x, 0.8, &f0.direction(), &v2, &tight).unwrap();
        let phi = flow::tangent_flow(&spec, &x, 0.8, &tight).unwrap();
        let end = flow::advance(&spec, &x, 0.8, &tight).unwrap();
        let psi_v2 = normal_projection(&spec.eval(&end), &(&phi * &v2)).unwrap();
        let err = (&w2 - &psi_v2).norm() / psi_v2.norm();
        assert!(err <= 1e-8, "{err}");
        assert!(w1.dot(&w2).abs() <= 1e-10 * w1.norm() * w2.norm());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let r1 = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)).normalize();
            let r = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let r2 = &r - &r1 * r1.dot(&r);
            let (a, b) = extended_lpf(&spec, &x, 0.5, &r1, &r2, &cfg.integrator).unwrap();
            assert!(a.dot(&b).abs() <= 1e-10 * a.norm() * b.norm());
        }
        assert!(extended_lpf(
            &spec,
            &x,
            0.5,
            &v(&[2.0, 0.0, 0.0]),
            &v(&[0.0, 1.0, 0.0]),
            &cfg.integrator
        )
        .is_err());
    }

    #[test]
    fn crossing_of_self_is_one() {
        let (spec, cfg) = lorenz_cfg();
        let x = lorenz_point();
        let c = return_time(&spec, &x, &x, &cfg).unwrap();
        assert!((c.time - 1.0).abs() < 1e-9, "{}", c.time);
    }

    #[test]
    fn hopf_crossing_ahead() {
        let spec = VectorFieldSpec::hopf_cylinder();
        let cfg = PoincareConfig::new(&spec, IntegratorConfig::new(WorkingBox::cube(3, 5.0)));
        let x = v(&[1.0, 0.0, 0.0]);
        let y = v(&[0.01f64.cos(), 0.01f64.sin(), 0.0]);
        let c = return_time(&spec, &x, &y, &cfg).unwrap();
        assert!((c.time - 0.99).abs() < 1e-9, "{}", c.time);
    }

    #[test]
    fn no_crossing_reported() {
        let spec = VectorFieldSpec::hopf_cylinder();
        let cfg = PoincareConfig::new(&spec, IntegratorConfig::new(WorkingBox::cube(3, 5.0)));
        let anchor = v(&[0.0, 1.0, 0.0]);
        let section = SectionSpec::new(&spec, &anchor, 0.05, &cfg).unwrap();
        let r = section_crossing(&spec, &section, &v(&[1.0, 0.0, 0.0]), 0.5, &cfg);
        assert!(matches!(r, Err(Error::NoCrossing(_))));
    }

    #[test]
    fn return_time_is_lipschitz() {
        let (spec, cfg) = lorenz_cfg();
        let x = lorenz_point();
        let speed = spec.eval(&x).norm();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sample = |rng: &mut ChaCha8Rng| {
            let dir = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)).normalize();
            let r = rng.gen_range(1e-4..0.01) * speed;
            let y = &x + dir * r;
            let c = return_time(&spec, &x, &y, &cfg).unwrap();
            ((c.time - 1.0).abs(), r)
        };
        let mut kappa: f64 = 0.0;
        for _ in 0..100 {
            let (dt, r) = sample(&mut rng);
            kappa = kappa.max(dt / r);
        }
        let kappa = 2.0 * kappa;
        for _ in 0..100 {
            let (dt, r) = sample(&mut rng);
            assert!(dt <= kappa * r);
        }
    }

    #[test]
    fn sectional_map_zero_offset() {
        let (spec, cfg) = lorenz_cfg();
        let f0 = NormalFrame::at(&spec, &lorenz_point(), &cfg).unwrap();
        let img = sectional_poincare_map(&spec, &f0, 1.5, &v(&[0.0, 0.0]), &cfg).unwrap();
        assert_eq!(img.offset.norm(), 0.0);
    }

    #[test]
    fn sectional_map_differential_is_lpf() {
        let (spec, cfg) = lorenz_cfg();
        let x = lorenz_point();
        let f0 = NormalFrame::at(&spec, &x, &cfg).unwrap();
        let big_t = 1.0;
        let step = poincare_step(&spec, &f0, big_t, &cfg).unwrap();
        let h = 1e-5 * f0.speed();
        let mut fd = DMatrix::zeros(2, 2);
        for i in 0..2 {
            let mut e = DVector::zeros(2);
            e[i] = h;
            let p = sectional_poincare_map(&spec, &f0, big_t, &e, &cfg).unwrap();
            let m = sectional_poincare_map(&spec, &f0, big_t, &(-e), &cfg).unwrap();
            fd.set_column(i, &((p.offset - m.offset) / (2.0 * h)));
        }
        let rel = (&fd - &step.lpf).norm() / step.lpf.norm();
        assert!(rel < 1e-3, "rel {rel}\n{fd}\n{}", step.lpf);
    }

    #[test]
    fn hopf_radial_contraction() {
        let spec = VectorFieldSpec::hopf_cylinder();
        let cfg = PoincareConfig::new(
            &spec,
            IntegratorConfig::new(WorkingBox::cube(3, 5.0)).with_tolerances(1e-13, 1e-13),
        );
        let x = v(&[1.0, 0.0, 0.0]);
        let f0 = NormalFrame::at(&spec, &x, &cfg).unwrap();
        let rho0 = 0.01;
        let offset = f0.coords(&v(&[rho0, 0.0, 0.0]));
        let img = sectional_poincare_map(&spec, &f0, 2.0 * PI, &offset, &cfg).unwrap();
        let radial = img.frame_out.vector(&img.offset)[0];
        // exact solution of r' = r(1 - r^2)
        let r0 = 1.0 + rho0;
        let t = 2.0 * PI;
        let r = (1.0 / (1.0 + (1.0 / (r0 * r0) - 1.0) * (-2.0 * t).exp())).sqrt();
        assert!(
            ((radial) / (r - 1.0) - 1.0).abs() < 1e-3,
            "{radial} vs {}",
            r - 1.0
        );
        assert!((radial / rho0 / (-4.0 * PI).exp() - 1.0).abs() < 0.05);
    }
}
