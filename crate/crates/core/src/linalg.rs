//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Singular values below `RANK_TOLERANCE * s_max` count as zero (condition
/// number cap of 1e10).
pub(crate) const RANK_TOLERANCE: f64 = 1e-10;

/// Thin orthonormal basis of the column span of `a`.
///
/// Returns `(u, w, s_max)` with `u` (rows × rank) orthonormal and `w`
/// (cols × rank) such that `a * w == u`; `w = V Σ⁻¹` maps basis coordinates
/// back to minimum-norm column coefficients.
pub(crate) fn column_basis(a: &DMatrix<Complex64>) -> (DMatrix<Complex64>, DMatrix<Complex64>, f64) {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (DMatrix::zeros(m, 0), DMatrix::zeros(n, 0), 0.0);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s_max > 0.0 && s[i] > RANK_TOLERANCE * s_max).collect();
    let mut ub = DMatrix::zeros(m, keep.len());
    let mut wb = DMatrix::zeros(n, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        ub.set_column(k, &u.column(i));
        let inv = 1.0 / s[i];
        for r in 0..n {
            wb[(r, k)] = v_t[(i, r)].conj() * inv;
        }
    }
    (ub, wb, s_max)
}

/// Minimum-norm least-squares solution of `q z ≈ y` and the numerical rank.
pub(crate) fn min_norm_solve(q: &DMatrix<Complex64>, y: &DVector<Complex64>) -> (DVector<Complex64>, usize) {
    let (u, w, _) = column_basis(q);
    let rank = u.ncols();
    let coords = u.adjoint() * y;
    (w * coords, rank)
}

/// Tikhonov solution `argmin ‖q z − y‖² + λ‖z‖²` restricted to the numerical
/// column span, and the numerical rank. `λ = 0` is the minimum-norm solution.
pub(crate) fn ridge_solve(q: &DMatrix<Complex64>, y: &DVector<Complex64>, lambda: f64) -> (DVector<Complex64>, usize) {
    if lambda == 0.0 {
        return min_norm_solve(q, y);
    }
    let (m, n) = q.shape();
    if m == 0 || n == 0 {
        return (DVector::zeros(n), 0);
    }
    let svd = q.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let mut z = DVector::zeros(n);
    let mut rank = 0;
    for i in 0..s.len() {
        if !(s_max > 0.0 && s[i] > RANK_TOLERANCE * s_max) {
            continue;
        }
        rank += 1;
        let c = u.column(i).iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum::<Complex64>() * (s[i] / (s[i] * s[i] + lambda));
        for r in 0..n {
            z[r] += v_t[(i, r)].conj() * c;
        }
    }
    (z, rank)
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}
