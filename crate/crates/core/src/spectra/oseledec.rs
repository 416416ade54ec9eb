use std::ops::Range;

use nalgebra::DMatrix;

use super::{benettin_spectrum, CocycleSequence, LyapunovSpectrum};
use crate::error::{Error, Result};
use crate::linalg::{generic_orthogonal, orthonormalize, subspace_distance};

const FORWARD_SEED: u64 = 0x0f0f_1111;
const BACKWARD_SEED: u64 = 0x0f0f_2222;
/// Target alignment of the QR frames after the burn-in.
const ALIGNMENT_LOG: f64 = 27.631_021_115_928_547; // ln 1e12
/// Minimal alignment below which the gap counts as unresolved.
const RESOLVED_LOG: f64 = 6.907_755_278_982_137; // ln 1e3

/// Finite-time Oseledec subspaces `E_1, ..., E_k` (ascending exponents) at
/// each base point of a cocycle, in frame coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingEstimate {
    dimensions: Vec<usize>,
    /// `bases[i][g]`: orthonormal basis of `E_g` at sample `i`.
    bases: Vec<Vec<DMatrix<f64>>>,
    constant: bool,
    /// Samples closer than this to either end are not converged.
    pub burn_in: usize,
    /// Largest principal-angle equivariance residual over the reliable range.
    pub residual: f64,
}

impl SplittingEstimate {
    /// The same splitting at every sample; bases are orthonormalized.
    pub fn constant(bases: Vec<DMatrix<f64>>) -> Result<Self> {
        let m = bases.first().map(|b| b.nrows()).unwrap_or(0);
        let total: usize = bases.iter().map(|b| b.ncols()).sum();
        if m == 0 || total != m || bases.iter().any(|b| b.nrows() != m || b.ncols() == 0) {
            return Err(Error::Config(
                "splitting bases must partition the fibre dimension".into(),
            ));
        }
        let all = DMatrix::from_columns(
            &bases
                .iter()
                .flat_map(|b| b.column_iter().map(|c| c.into_owned()))
                .collect::<Vec<_>>(),
        );
        let s = crate::linalg::singular_values(&all);
        let (lo, hi) = s.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        if !(lo > 1e-10 * hi) {
            return Err(Error::Config(
                "splitting subspaces are not transverse".into(),
            ));
        }
        Ok(Self {
            dimensions: bases.iter().map(|b| b.ncols()).collect(),
            bases: vec![bases.iter().map(orthonormalize).collect()],
            constant: true,
            burn_in: 0,
            residual: 0.0,
        })
    }

    /// Coordinate axes grouped by the given dimensions.
    pub fn axes(dimensions: &[usize]) -> Result<Self> {
        let m: usize = dimensions.iter().sum();
        let id = DMatrix::<f64>::identity(m, m);
        let mut start = 0;
        let mut bases = Vec::new();
        for &d in dimensions {
            bases.push(id.columns(start, d).into_owned());
            start += d;
        }
        Self::constant(bases)
    }

    pub fn dimensions(&self) -> &[usize] {
        &self.dimensions
    }

    pub fn groups(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// Number of stored samples (1 for a constant splitting).
    pub fn samples(&self) -> usize {
        self.bases.len()
    }

    /// Samples whose subspaces are converged in both directions.
    pub fn reliable(&self) -> Range<usize> {
        if self.constant {
            return 0..usize::MAX;
        }
        let n = self.bases.len();
        self.burn_in.min(n)..n.saturating_sub(self.burn_in).max(self.burn_in.min(n))
    }

    /// Basis of `E_g` at sample `i`.
    pub fn basis(&self, i: usize, g: usize) -> &DMatrix<f64> {
        let i = if self.constant {
            0
        } else {
            i.min(self.bases.len() - 1)
        };
        &self.bases[i][g]
    }

    /// Orthonormal basis of `E_a + ... + E_{b-1}` at sample `i`.
    pub fn sum(&self, i: usize, groups: Range<usize>) -> DMatrix<f64> {
        let cols: Vec<_> = groups
            .flat_map(|g| {
                self.basis(i, g)
                    .column_iter()
                    .map(|c| c.into_owned())
                    .collect::<Vec<_>>()
            })
            .collect();
        orthonormalize(&DMatrix::from_columns(&cols))
    }

    /// Components `v_g` of `v` along the splitting at sample `i`, as
    /// coefficients in each orthonormal basis.
    pub fn decompose(&self, i: usize, v: &nalgebra::DVector<f64>) -> Vec<nalgebra::DVector<f64>> {
        let cols: Vec<_> = (0..self.groups())
            .flat_map(|g| {
                self.basis(i, g)
                    .column_iter()
                    .map(|c| c.into_owned())
                    .collect::<Vec<_>>()
            })
            .collect();
        let b = DMatrix::from_columns(&cols);
        let coeffs = b
            .lu()
            .solve(v)
            .unwrap_or_else(|| nalgebra::DVector::zeros(v.len()));
        let mut out = Vec::with_capacity(self.groups());
        let mut start = 0;
        for &d in &self.dimensions {
            out.push(coeffs.rows(start, d).into_owned());
            start += d;
        }
        out
    }

    /// Oblique projection of the columns of `m` onto the sum of `groups`
    /// along the remaining groups, at sample `i`.
    pub fn project(&self, i: usize, groups: Range<usize>, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (j, col) in m.column_iter().enumerate() {
            let parts = self.decompose(i, &col.into_owned());
            let mut v = nalgebra::DVector::zeros(m.nrows());
            for g in groups.clone() {
                v += self.basis(i, g) * &parts[g];
            }
            out.set_column(j, &v);
        }
        out
    }

    /// Largest equivariance residual `dist(A_i E_g(x_i), E_g(x_{i+1}))`
    /// over the reliable range.
    pub fn equivariance_residual(&self, c: &CocycleSequence) -> f64 {
        let r = self.reliable();
        let end = r.end.min(c.len());
        let mut worst: f64 = 0.0;
        for i in r.start..end {
            for g in 0..self.groups() {
                let image = orthonormalize(&(&c.blocks[i] * self.basis(i, g)));
                worst = worst.max(subspace_distance(&image, self.basis(i + 1, g)));
            }
        }
        worst
    }
}

/// Oseledec splitting estimated from forward and backward QR passes.
pub fn oseledec_filtration(c: &CocycleSequence) -> Result<SplittingEstimate> {
    let spectrum = benettin_spectrum(c)?;
    oseledec_filtration_with(c, &spectrum)
}

/// As [`oseledec_filtration`] with a precomputed spectrum fixing the group
/// dimensions.
pub fn oseledec_filtration_with(
    c: &CocycleSequence,
    spectrum: &LyapunovSpectrum,
) -> Result<SplittingEstimate> {
    let n = c.len();
    let m = c.dimension();
    if spectrum.len() != m {
        return Err(Error::Config(
            "spectrum size does not match the cocycle".into(),
        ));
    }
    let dims = spectrum.multiplicities();
    let k = dims.len();
    let burn = if k < 2 {
        0
    } else {
        let gap = spectrum.gap_min();
        if !(gap > spectrum.tolerance) {
            return Err(Error::DegenerateSpectrum(format!(
                "exponent gap {gap:.3e} is below the resolution {:.3e}",
                spectrum.tolerance
            )));
        }
        let wanted = (ALIGNMENT_LOG / (gap * c.step)).ceil() as usize;
        let burn = wanted.min(n / 4);
        if gap * c.step * (burn as f64) < RESOLVED_LOG {
            return Err(Error::DegenerateSpectrum(format!(
                "gap {gap:.3e} is not resolved by {n} blocks of length {}",
                c.step
            )));
        }
        burn
    };

    let mut forward = Vec::with_capacity(n + 1);
    forward.push(generic_orthogonal(m, FORWARD_SEED));
    for b in &c.blocks {
        let next = (b * forward.last().unwrap()).qr().q();
        forward.push(next);
    }
    let mut backward = vec![DMatrix::zeros(0, 0); n + 1];
    backward[n] = generic_orthogonal(m, BACKWARD_SEED);
    for i in (0..n).rev() {
        backward[i] = (c.blocks[i].transpose() * &backward[i + 1]).qr().q();
    }

    let mut bases = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut at = Vec::with_capacity(k);
        for g in 0..k {
            let fast: usize = dims[g..].iter().sum();
            let slow: usize = dims[..=g].iter().sum();
            let u = forward[i].columns(0, fast);
            let s = backward[i].columns(m - slow, slow).into_owned();
            at.push(intersect(&u.into_owned(), &s, dims[g]));
        }
        bases.push(at);
    }
    let mut est = SplittingEstimate {
        dimensions: dims,
        bases,
        constant: false,
        burn_in: burn,
        residual: 0.0,
    };
    est.residual = est.equivariance_residual(c);
    Ok(est)
}

/// Basis of the `dim`-dimensional intersection of two spans.
fn intersect(u: &DMatrix<f64>, s: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    if u.ncols() == dim {
        return u.clone();
    }
    if s.ncols() == dim {
        return s.clone();
    }
    let svd = (u.transpose() * s).svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let cols: Vec<_> = order[..dim]
        .iter()
        .map(|&r| s * vt.row(r).transpose())
        .collect();
    orthonormalize(&DMatrix::from_columns(&cols))
}
