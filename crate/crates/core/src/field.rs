//! Vector fields: built-in families, user polynomial fields, analytic
//! Jacobians and declared singularities.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singularities must satisfy `|X(x)|` below this.
pub const SINGULARITY_TOLERANCE: f64 = 1e-12;

/// One monomial `coefficient * prod x_k^powers[k]` contributing to a single
/// component of a polynomial field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialTerm {
    pub component: usize,
    pub coefficient: f64,
    pub powers: Vec<u32>,
}

impl PolynomialTerm {
    fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.coefficient;
        for (xi, &p) in x.iter().zip(&self.powers) {
            if p > 0 {
                v *= xi.powi(p as i32);
            }
        }
        v
    }

    fn partial(&self, x: &[f64], k: usize) -> f64 {
        let pk = self.powers[k];
        if pk == 0 {
            return 0.0;
        }
        let mut v = self.coefficient * pk as f64;
        for (l, (xl, &p)) in x.iter().zip(&self.powers).enumerate() {
            let e = if l == k { p - 1 } else { p };
            if e > 0 {
                v *= xl.powi(e as i32);
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    Lorenz {
        sigma: f64,
        rho: f64,
        beta: f64,
    },
    /// `x' = x - y - x r^2`, `y' = x + y - y r^2`, `z' = -z`; unit circle is an
    /// attracting cycle of period `2 pi`.
    HopfCylinder,
    Rossler {
        a: f64,
        b: f64,
        c: f64,
    },
    Polynomial {
        terms: Vec<PolynomialTerm>,
    },
}

impl Family {
    fn name(&self) -> &'static str {
        match self {
            Family::Lorenz { .. } => "lorenz",
            Family::HopfCylinder => "hopf_cylinder",
            Family::Rossler { .. } => "rossler",
            Family::Polynomial { .. } => "polynomial",
        }
    }
}

/// An immutable vector field `X` on a Euclidean working box of `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldDocument", into = "FieldDocument")]
pub struct VectorFieldSpec {
    dimension: usize,
    family: Family,
    singularities: Vec<DVector<f64>>,
    reversed: bool,
}

/// The JSON form of a field spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldDocument {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<PolynomialTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singularities: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reversed: bool,
}

fn param(params: &BTreeMap<String, f64>, name: &str, family: &str) -> Result<f64> {
    params
        .get(name)
        .copied()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config(format!("family `{family}` requires parameter `{name}`")))
}

impl TryFrom<FieldDocument> for VectorFieldSpec {
    type Error = Error;

    fn try_from(doc: FieldDocument) -> Result<Self> {
        let fam = doc.family.to_ascii_lowercase();
        let mut spec = match fam.as_str() {
            "lorenz" => VectorFieldSpec::lorenz(
                param(&doc.params, "sigma", &fam)?,
                param(&doc.params, "rho", &fam)?,
                param(&doc.params, "beta", &fam)?,
            ),
            "hopf_cylinder" | "hopfcylinder" | "hopf" => VectorFieldSpec::hopf_cylinder(),
            "rossler" | "roessler" => VectorFieldSpec::rossler(
                param(&doc.params, "a", &fam)?,
                param(&doc.params, "b", &fam)?,
                param(&doc.params, "c", &fam)?,
            ),
            "polynomial" => {
                let d = doc
                    .dimension
                    .ok_or_else(|| Error::Config("polynomial fields require `dimension`".into()))?;
                let sings = doc
                    .singularities
                    .clone()
                    .unwrap_or_default()
                    .into_iter()
                    .map(DVector::from_vec)
                    .collect();
                return VectorFieldSpec::polynomial(d, doc.terms, sings).map(|s| {
                    if doc.reversed {
                        s.time_reverse()
                    } else {
                        s
                    }
                });
            }
            other => return Err(Error::Config(format!("unknown field family `{other}`"))),
        };
        if let Some(d) = doc.dimension {
            if d != spec.dimension {
                return Err(Error::Config(format!(
                    "family `{fam}` has dimension {}, document says {d}",
                    spec.dimension
                )));
            }
        }
        if let Some(s) = doc.singularities {
            spec = spec.with_singularities(s.into_iter().map(DVector::from_vec).collect())?;
        }
        if doc.reversed {
            spec = spec.time_reverse();
        }
        Ok(spec)
    }
}

impl From<VectorFieldSpec> for FieldDocument {
    fn from(spec: VectorFieldSpec) -> Self {
        let mut params = BTreeMap::new();
        let mut terms = Vec::new();
        match &spec.family {
            Family::Lorenz { sigma, rho, beta } => {
                params.insert("sigma".into(), *sigma);
                params.insert("rho".into(), *rho);
                params.insert("beta".into(), *beta);
            }
            Family::Rossler { a, b, c } => {
                params.insert("a".into(), *a);
                params.insert("b".into(), *b);
                params.insert("c".into(), *c);
            }
            Family::HopfCylinder => {}
            Family::Polynomial { terms: t } => terms = t.clone(),
        }
        FieldDocument {
            family: spec.family.name().into(),
            dimension: Some(spec.dimension),
            params,
            terms,
            singularities: Some(
                spec.singularities
                    .iter()
                    .map(|s| s.as_slice().to_vec())
                    .collect(),
            ),
            reversed: spec.reversed,
        }
    }
}

impl VectorFieldSpec {
    pub fn lorenz(sigma: f64, rho: f64, beta: f64) -> Self {
        let mut singularities = vec![DVector::zeros(3)];
        if rho > 1.0 {
            let r = (beta * (rho - 1.0)).sqrt();
            singularities.push(DVector::from_vec(vec![r, r, rho - 1.0]));
            singularities.push(DVector::from_vec(vec![-r, -r, rho - 1.0]));
        }
        Self {
            dimension: 3,
            family: Family::Lorenz { sigma, rho, beta },
            singularities,
            reversed: false,
        }
    }

    /// Lorenz at the classical parameters (10, 28, 8/3).
    pub fn lorenz_classic() -> Self {
        Self::lorenz(10.0, 28.0, 8.0 / 3.0)
    }

    pub fn hopf_cylinder() -> Self {
        Self {
            dimension: 3,
            family: Family::HopfCylinder,
            singularities: vec![DVector::zeros(3)],
            reversed: false,
        }
    }

    pub fn rossler(a: f64, b: f64, c: f64) -> Self {
        let mut singularities = Vec::new();
        let disc = c * c - 4.0 * a * b;
        if a != 0.0 && disc >= 0.0 {
            for sign in [-1.0, 1.0] {
                let z = (c + sign * disc.sqrt()) / (2.0 * a);
                singularities.push(DVector::from_vec(vec![a * z, -z, z]));
            }
        }
        Self {
            dimension: 3,
            family: Family::Rossler { a, b, c },
            singularities,
            reversed: false,
        }
    }

    /// A user polynomial field. Every declared singularity is checked.
    pub fn polynomial(
        dimension: usize,
        terms: Vec<PolynomialTerm>,
        singularities: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::Config(format!(
                "dimension must be >= 2, got {dimension}"
            )));
        }
        for t in &terms {
            if t.component >= dimension || t.powers.len() != dimension {
                return Err(Error::Config(format!(
                    "polynomial term {t:?} does not match dimension {dimension}"
                )));
            }
            if !t.coefficient.is_finite() {
                return Err(Error::Config("non-finite polynomial coefficient".into()));
            }
        }
        Self {
            dimension,
            family: Family::Polynomial { terms },
            singularities: Vec::new(),
            reversed: false,
        }
        .with_singularities(singularities)
    }

    /// The linear field `X(x) = A x`.
    pub fn linear(a: &DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d {
            return Err(Error::Config("linear field needs a square matrix".into()));
        }
        let mut terms = Vec::new();
        for i in 0..d {
            for j in 0..d {
                if a[(i, j)] != 0.0 {
                    let mut powers = vec![0; d];
                    powers[j] = 1;
                    terms.push(PolynomialTerm {
                        component: i,
                        coefficient: a[(i, j)],
                        powers,
                    });
                }
            }
        }
        Self::polynomial(d, terms, vec![DVector::zeros(d)])
    }

    /// Planar `r' = r(1 - r^2)`, `theta' = 1`.
    pub fn planar_limit_cycle() -> Self {
        let t = |component, coefficient, powers: [u32; 2]| PolynomialTerm {
            component,
            coefficient,
            powers: powers.to_vec(),
        };
        let terms = vec![
            t(0, 1.0, [1, 0]),
            t(0, -1.0, [0, 1]),
            t(0, -1.0, [3, 0]),
            t(0, -1.0, [1, 2]),
            t(1, 1.0, [1, 0]),
            t(1, 1.0, [0, 1]),
            t(1, -1.0, [2, 1]),
            t(1, -1.0, [0, 3]),
        ];
        Self::polynomial(2, terms, vec![DVector::zeros(2)]).expect("valid planar field")
    }

    /// Replace the declared singularity list, checking each point.
    pub fn with_singularities(mut self, singularities: Vec<DVector<f64>>) -> Result<Self> {
        for s in &singularities {
            if s.len() != self.dimension {
                return Err(Error::Config("singularity has wrong dimension".into()));
            }
            let speed = self.eval(s).norm();
            if !(speed < SINGULARITY_TOLERANCE) {
                return Err(Error::Config(format!(
                    "declared singularity {:?} has |X| = {speed:e}",
                    s.as_slice()
                )));
            }
        }
        self.singularities = singularities;
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn family_name(&self) -> &'static str {
        self.family.name()
    }

    pub fn singularities(&self) -> &[DVector<f64>] {
        &self.singularities
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    /// The field `-X`. Singularities are preserved.
    pub fn time_reverse(&self) -> Self {
        let mut out = self.clone();
        out.reversed = !out.reversed;
        out
    }

    /// `X(x)` written into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dimension);
        match &self.family {
            Family::Lorenz { sigma, rho, beta } => {
                out[0] = sigma * (x[1] - x[0]);
                out[1] = x[0] * (rho - x[2]) - x[1];
                out[2] = x[0] * x[1] - beta * x[2];
            }
            Family::HopfCylinder => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                out[0] = x[0] - x[1] - x[0] * r2;
                out[1] = x[0] + x[1] - x[1] * r2;
                out[2] = -x[2];
            }
            Family::Rossler { a, b, c } => {
                out[0] = -x[1] - x[2];
                out[1] = x[0] + a * x[1];
                out[2] = b + x[2] * (x[0] - c);
            }
            Family::Polynomial { terms } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for t in terms {
                    out[t.component] += t.value(x);
                }
            }
        }
        if self.reversed {
            out.iter_mut().for_each(|o| *o = -*o);
        }
    }

    /// `DX(x)` written into `out` (row = component, column = derivative).
    pub fn jacobian_into(&self, x: &[f64], out: &mut DMatrix<f64>) {
        match &self.family {
            Family::Lorenz { sigma, rho, beta } => {
                out.copy_from_slice(&[
                    -sigma,
                    rho - x[2],
                    x[1],
                    *sigma,
                    -1.0,
                    x[0],
                    0.0,
                    -x[0],
                    -beta,
                ]);
            }
            Family::HopfCylinder => {
                let (u, v) = (x[0], x[1]);
                let r2 = u * u + v * v;
                out.fill(0.0);
                out[(0, 0)] = 1.0 - r2 - 2.0 * u * u;
                out[(0, 1)] = -1.0 - 2.0 * u * v;
                out[(1, 0)] = 1.0 - 2.0 * u * v;
                out[(1, 1)] = 1.0 - r2 - 2.0 * v * v;
                out[(2, 2)] = -1.0;
            }
            Family::Rossler { a, c, .. } => {
                out.copy_from_slice(&[0.0, 1.0, x[2], -1.0, *a, 0.0, -1.0, 0.0, x[0] - c]);
            }
            Family::Polynomial { terms } => {
                out.fill(0.0);
                for t in terms {
                    for k in 0..self.dimension {
                        out[(t.component, k)] += t.partial(x, k);
                    }
                }
            }
        }
        if self.reversed {
            out.neg_mut();
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dimension);
        self.eval_into(x.as_slice(), out.as_mut_slice());
        out
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dimension, self.dimension);
        self.jacobian_into(x.as_slice(), &mut out);
        out
    }

    /// Euclidean distance to the nearest declared singularity (`+inf` when
    /// none are declared).
    pub fn singularity_distance(&self, x: &DVector<f64>) -> f64 {
        self.singularities
            .iter()
            .map(|s| (s - x).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Estimate of `K0 = max(|X|, ||DX||)` over the box from `samples`
    /// scrambled Sobol points (plus the box corners' centre).
    pub fn field_bound(&self, bounds: &WorkingBox, samples: u32) -> f64 {
        let d = self.dimension;
        let mut k0: f64 = 0.0;
        let mut x = DVector::zeros(d);
        let mut jac = DMatrix::zeros(d, d);
        let mut fx = vec![0.0; d];
        for i in 0..samples.max(1) {
            for k in 0..d {
                let u = sobol_burley::sample(i, k as u32, 0x5eed) as f64;
                x[k] = bounds.lower[k] + u * (bounds.upper[k] - bounds.lower[k]);
            }
            self.eval_into(x.as_slice(), &mut fx);
            self.jacobian_into(x.as_slice(), &mut jac);
            let speed = fx.iter().map(|v| v * v).sum::<f64>().sqrt();
            k0 = k0.max(speed).max(crate::linalg::spectral_norm(&jac));
        }
        k0
    }
}

/// Axis-aligned box in which all orbits must stay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl WorkingBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Config(
                "working box needs lower < upper componentwise".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    /// `[-half, half]^d`.
    pub fn cube(d: usize, half: f64) -> Self {
        Self {
            lower: vec![-half; d],
            upper: vec![half; d],
        }
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| v.is_finite() && *v >= *l && *v <= *u)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (u - l))
            .collect()
    }
}
