//! Small dense linear-algebra helpers shared by the cocycle code.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub(crate) fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

/// Operator (spectral) norm.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().cloned().fold(0.0, f64::max)
}

/// Mininorm `inf |Mv|` over unit `v` in the column space of the input,
/// i.e. the smallest singular value of a tall matrix.
pub fn mininorm(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    if m.nrows() < m.ncols() {
        return 0.0;
    }
    s.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Orthonormal basis of the column span (thin QR). Columns must be
/// linearly independent.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let q = m.clone().qr().q();
    q.columns(0, cols).into_owned()
}

/// Modified Gram-Schmidt; returns `None` when a column collapses below
/// `tol` relative to its original length.
pub fn gram_schmidt(m: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let mut out = m.clone();
    for j in 0..out.ncols() {
        let original = out.column(j).norm();
        for k in 0..j {
            let proj = out.column(k).dot(&out.column(j));
            let ck = out.column(k).into_owned();
            let mut cj = out.column_mut(j);
            cj.axpy(-proj, &ck, 1.0);
        }
        let n = out.column(j).norm();
        if !(n > tol * original.max(f64::MIN_POSITIVE)) {
            return None;
        }
        out.column_mut(j).scale_mut(1.0 / n);
    }
    Some(out)
}

/// Sine of the largest principal angle between the spans of two
/// orthonormal bases of equal dimension.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    let residual = a - b * (b.transpose() * a);
    spectral_norm(&residual).min(1.0)
}

/// Orthonormal basis of the null space of `m`, using singular values below
/// `tol * max(sigma)`.
pub fn null_space(m: &DMatrix<f64>, expected_dim: usize) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    // pad to square so that the full V is available
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let mut basis = DMatrix::zeros(cols, expected_dim);
    for (k, &idx) in order.iter().take(expected_dim).enumerate() {
        basis.set_column(k, &v_t.row(idx).transpose());
    }
    basis
}

/// A fixed, generic orthogonal matrix. Used to start subspace iterations
/// away from invariant coordinate planes.
pub fn generic_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    m.qr().q()
}

/// Rescale so the largest entry has unit magnitude; returns the log of the
/// factor removed.
pub(crate) fn renormalize(m: &mut DMatrix<f64>) -> f64 {
    let s = m.amax();
    if s > 0.0 && s.is_finite() {
        m.scale_mut(1.0 / s);
        s.ln()
    } else {
        0.0
    }
}

/// Replaces the columns of `w` by an orthonormal basis of the same flag and
/// writes `ln |r_jj|` of `w = QR` into `logs`. Gram-Schmidt with a second
/// orthogonalisation pass; returns `false` on a zero column.
pub fn qr_log_diag(w: &mut DMatrix<f64>, logs: &mut [f64]) -> bool {
    let (rows, cols) = w.shape();
    for j in 0..cols {
        for _ in 0..2 {
            for i in 0..j {
                let mut dot = 0.0;
                for r in 0..rows {
                    dot += w[(r, i)] * w[(r, j)];
                }
                for r in 0..rows {
                    let v = w[(r, i)];
                    w[(r, j)] -= dot * v;
                }
            }
        }
        let norm = w.column(j).norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return false;
        }
        w.column_mut(j).unscale_mut(norm);
        logs[j] = norm.ln();
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 0.5, 2.0]));
        assert!((spectral_norm(&m) - 3.0).abs() < 1e-12);
        assert!((mininorm(&m) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn null_space_of_rank_deficient() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let n = null_space(&m, 1);
        assert!((n[(2, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gram_schmidt_rejects_dependent_columns() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        assert!(gram_schmidt(&m, 1e-10).is_none());
    }

    #[test]
    fn subspace_distance_orthogonal_lines() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!((subspace_distance(&a, &b) - 1.0).abs() < 1e-12);
        assert!(subspace_distance(&a, &a) < 1e-12);
    }
}
