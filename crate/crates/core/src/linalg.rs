//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition of `(a + aᵀ)/2`.
pub fn sym_eigen(a: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

pub fn min_max_eigenvalue(a: &DMatrix<f64>) -> (f64, f64) {
    if a.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = sym_eigen(a);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Orthonormal basis of the column span of `a`, dropping singular values
/// below `rel_tol * s_max`.
pub fn column_basis(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let (n, k) = a.shape();
    if n == 0 || k == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let (u, s) = thin_left_svd(a)?;
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len())
        .filter(|&i| s_max > 0.0 && s[i] >= rel_tol * s_max)
        .collect();
    Ok(u.select_columns(keep.iter()))
}

/// Thin SVD returning left singular vectors and singular values, sorted
/// by decreasing singular value.
pub fn thin_left_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (u, s, _) = thin_svd(a)?;
    Ok((u, s))
}

/// Thin SVD `a = U diag(s) Vᵀ` with singular values in decreasing order.
/// Returns `(U, s, V)`.
pub fn thin_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let svd = a.clone().try_svd(true, true, f64::EPSILON, 0).ok_or(Error::Decomposition(
        "singular value decomposition did not converge",
    ))?;
    let u = svd.u.ok_or(Error::Decomposition("missing left singular vectors"))?;
    let v_t = svd
        .v_t
        .ok_or(Error::Decomposition("missing right singular vectors"))?;
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let u = u.select_columns(order.iter());
    let v = v_t.transpose().select_columns(order.iter());
    let s = DVector::from_iterator(order.len(), order.iter().map(|&i| s[i]));
    Ok((u, s, v))
}

/// Largest eigenvalue of `CᵀC` by power iteration, working on `C` only.
pub fn gram_spectral_norm(c: &DMatrix<f64>, max_iters: usize, rel_tol: f64) -> f64 {
    let m = c.ncols();
    if m == 0 || c.nrows() == 0 {
        return 0.0;
    }
    // A deterministic start with no special alignment.
    let mut v = DVector::from_fn(m, |j, _| 1.0 + 0.5 * ((j as f64) * 0.618_033_988_75).fract());
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..max_iters {
        let cv = c * &v;
        let w = c.tr_mul(&cv);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm;
        v = w / norm;
        if (next - estimate).abs() <= rel_tol * next {
            return next;
        }
        estimate = next;
    }
    estimate
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |acc, x| acc.max(x.abs()))
}
