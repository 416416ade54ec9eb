use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::flow::Trajectory;
use crate::poincare::{poincare_step, NormalFrame, PoincareConfig};

pub const COCYCLE_SCHEMA_VERSION: u32 = 1;

/// Where the blocks came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CocycleMeta {
    /// Base points `phi_{iT}(x0)`, `i = 0..=n` (empty for synthetic data).
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub field_norms: Vec<f64>,
    #[serde(default)]
    pub singularity_distances: Vec<f64>,
    /// `true` for `psi*`, `false` for `psi`.
    #[serde(default = "default_true")]
    pub scaled: bool,
}

fn default_true() -> bool {
    true
}

/// Products of `psi*_T` along an orbit, each block expressed between
/// consecutive transported normal frames.
#[derive(Debug, Clone, PartialEq)]
pub struct CocycleSequence {
    pub step: f64,
    pub blocks: Vec<DMatrix<f64>>,
    pub meta: CocycleMeta,
}

#[derive(Serialize, Deserialize)]
struct CocycleDocument {
    #[serde(default)]
    schema_version: u32,
    #[serde(rename = "T")]
    step: f64,
    blocks: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    meta: CocycleMeta,
}

impl Serialize for CocycleSequence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                (0..b.nrows())
                    .map(|r| b.row(r).iter().cloned().collect())
                    .collect()
            })
            .collect();
        CocycleDocument {
            schema_version: COCYCLE_SCHEMA_VERSION,
            step: self.step,
            blocks,
            meta: self.meta.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CocycleSequence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = CocycleDocument::deserialize(d)?;
        let blocks = doc
            .blocks
            .iter()
            .map(|rows| {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(D::Error::custom("cocycle blocks must be square"));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        CocycleSequence::new(doc.step, blocks)
            .map(|c| c.with_meta(doc.meta))
            .map_err(D::Error::custom)
    }
}

impl CocycleSequence {
    /// Checks uniform square shape, finiteness and invertibility.
    pub fn new(step: f64, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::Config("cocycle step T must be positive".into()));
        }
        let m = blocks.first().map(|b| b.nrows()).unwrap_or(0);
        for (i, b) in blocks.iter().enumerate() {
            if i > 0 && blocks[i - 1] == *b {
                continue;
            }
            if b.nrows() != m || b.ncols() != m {
                return Err(Error::Config(
                    "cocycle blocks must share one square shape".into(),
                ));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite cocycle block".into()));
            }
            let s = crate::linalg::singular_values(b);
            let (lo, hi) = s.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            if !(lo > 0.0) || !(hi / lo).is_finite() {
                return Err(Error::Numerical("singular cocycle block".into()));
            }
        }
        Ok(Self {
            step,
            blocks,
            meta: CocycleMeta::default(),
        })
    }

    /// `n` copies of one block.
    pub fn constant(block: DMatrix<f64>, step: f64, n: usize) -> Result<Self> {
        Self::new(step, vec![block; n])
    }

    pub fn with_meta(mut self, meta: CocycleMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Fibre dimension (`d - 1` for Poincare cocycles).
    pub fn dimension(&self) -> usize {
        self.blocks.first().map(|b| b.nrows()).unwrap_or(0)
    }

    /// `A_{j-1} ... A_i`.
    pub fn product(&self, i: usize, j: usize) -> DMatrix<f64> {
        let m = self.dimension();
        let mut p = DMatrix::identity(m, m);
        for b in &self.blocks[i..j] {
            p = b * p;
        }
        p
    }

    /// `{A_{n-1}^{-1}, ..., A_0^{-1}}`, the cocycle of the reversed flow.
    pub fn time_reversed(&self) -> Result<Self> {
        let blocks = self
            .blocks
            .iter()
            .rev()
            .map(|b| {
                b.clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Numerical("block not invertible".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut meta = self.meta.clone();
        meta.points.reverse();
        meta.field_norms.reverse();
        meta.singularity_distances.reverse();
        Ok(Self {
            step: self.step,
            blocks,
            meta,
        })
    }

    /// Singularity clearance of sample `i`, `+inf` when unknown.
    pub fn clearance(&self, i: usize) -> f64 {
        self.meta
            .singularity_distances
            .get(i)
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    pub fn point(&self, i: usize) -> Option<DVector<f64>> {
        self.meta
            .points
            .get(i)
            .map(|p| DVector::from_column_slice(p))
    }

    /// Base points as a piecewise-linear trajectory sampled every `T`.
    pub fn base_trajectory(&self) -> Result<Trajectory> {
        if self.meta.points.is_empty() || self.meta.field_norms.len() != self.meta.points.len() {
            return Err(Error::InsufficientData(
                "cocycle carries no base points".into(),
            ));
        }
        let times = (0..self.meta.points.len())
            .map(|i| i as f64 * self.step)
            .collect();
        let states = self
            .meta
            .points
            .iter()
            .map(|p| DVector::from_column_slice(p))
            .collect();
        Trajectory::from_samples(times, states, self.meta.field_norms.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CocycleKind {
    /// `psi_T`.
    Unscaled,
    /// `psi*_T`.
    Scaled,
}

/// `n` blocks of `psi*_T` along the orbit of `x0`.
pub fn build_cocycle(
    spec: &VectorFieldSpec,
    x0: &DVector<f64>,
    step: f64,
    n: usize,
    cfg: &PoincareConfig,
) -> Result<CocycleSequence> {
    let frame = NormalFrame::at(spec, x0, cfg)?;
    build_cocycle_with(spec, &frame, step, n, cfg, CocycleKind::Scaled).map(|(c, _)| c)
}

/// As [`build_cocycle`], starting from a given frame and returning the final
/// transported frame as well.
pub fn build_cocycle_with(
    spec: &VectorFieldSpec,
    frame: &NormalFrame,
    step: f64,
    n: usize,
    cfg: &PoincareConfig,
    kind: CocycleKind,
) -> Result<(CocycleSequence, NormalFrame)> {
    if !(step > 0.0) {
        return Err(Error::Config("block time T must be positive".into()));
    }
    let mut frame = frame.clone();
    let mut blocks = Vec::with_capacity(n);
    let mut meta = CocycleMeta {
        points: vec![frame.base.as_slice().to_vec()],
        field_norms: vec![frame.speed()],
        singularity_distances: vec![spec.singularity_distance(&frame.base)],
        scaled: kind == CocycleKind::Scaled,
    };
    for _ in 0..n {
        let s = poincare_step(spec, &frame, step, cfg)?;
        blocks.push(match kind {
            CocycleKind::Scaled => s.scaled(),
            CocycleKind::Unscaled => s.lpf.clone(),
        });
        meta.points.push(s.end.as_slice().to_vec());
        meta.field_norms.push(s.speed_out);
        meta.singularity_distances
            .push(spec.singularity_distance(&s.end));
        frame = s.frame_out;
    }
    let c = CocycleSequence::new(step, blocks)?.with_meta(meta);
    Ok((c, frame))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::WorkingBox;
    use crate::flow::IntegratorConfig;
    use std::f64::consts::PI;

    #[test]
    fn json_round_trip() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 3.0]);
        let c = CocycleSequence::constant(a.clone(), 0.25, 3).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"T\":0.25"));
        assert!(text.contains("[[0.5,1.0],[0.0,3.0]]"));
        let back: CocycleSequence = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<CocycleSequence>(r#"{"T":1,"blocks":[[[1,0]]]}"#).is_err());
    }

    #[test]
    fn rejects_singular_blocks() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(CocycleSequence::constant(a, 1.0, 2).is_err());
        assert!(CocycleSequence::constant(DMatrix::identity(2, 2), 0.0, 2).is_err());
    }

    #[test]
    fn composition_matches_single_block() {
        let spec = VectorFieldSpec::lorenz_classic();
        let cfg = PoincareConfig::new(&spec, IntegratorConfig::new(WorkingBox::cube(3, 200.0)));
        let x0 = crate::flow::advance(
            &spec,
            &DVector::from_vec(vec![1.0, 1.0, 20.0]),
            10.0,
            &cfg.integrator,
        )
        .unwrap();
        let f0 = NormalFrame::at(&spec, &x0, &cfg).unwrap();
        let (c, f_end) =
            build_cocycle_with(&spec, &f0, 0.25, 8, &cfg, CocycleKind::Scaled).unwrap();
        assert!(c.meta.field_norms.iter().all(|&s| s > 0.0));
        assert_eq!(c.meta.points.len(), 9);
        let (single, f_single) =
            build_cocycle_with(&spec, &f0, 2.0, 1, &cfg, CocycleKind::Scaled).unwrap();
        // transported frames depend on the step sequence, so compare in one frame
        let change = f_end.basis.transpose() * &f_single.basis;
        let product = c.product(0, 8);
        let rel = (change * &single.blocks[0] - &product).norm() / product.norm();
        assert!(rel < 1e-5, "{rel}");
    }

    #[test]
    fn hopf_single_period_block() {
        let spec = VectorFieldSpec::hopf_cylinder();
        let cfg = PoincareConfig::new(
            &spec,
            IntegratorConfig::new(WorkingBox::cube(3, 5.0)).with_tolerances(1e-12, 1e-12),
        );
        let p = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let f0 = NormalFrame::at(&spec, &p, &cfg).unwrap();
        let (c, f1) =
            build_cocycle_with(&spec, &f0, 2.0 * PI, 1, &cfg, CocycleKind::Scaled).unwrap();
        let mono = f0.basis.transpose() * &f1.basis * &c.blocks[0];
        let mut mags: Vec<f64> = mono
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .collect();
        mags.sort_by(f64::total_cmp);
        assert!((mags[0].ln() + 4.0 * PI).abs() < 1e-4);
        assert!((mags[1].ln() + 2.0 * PI).abs() < 1e-4);
    }
}
