//! Small dense linear-algebra helpers used across the crate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Rank threshold used by the structural tests: `maxdim * sigma_max * eps * 64`.
pub fn rank_threshold(nrows: usize, ncols: usize, sigma_max: f64) -> f64 {
    let maxdim = nrows.max(ncols) as f64;
    maxdim * sigma_max * f64::EPSILON * 64.0
}

/// Numerical rank via singular values.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let sigma_max = sv.max();
    if sigma_max == 0.0 {
        return 0;
    }
    let tol = rank_threshold(m.nrows(), m.ncols(), sigma_max);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Moore-Penrose pseudoinverse with the same cutoff as `rank`.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.is_empty() {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let tol = rank_threshold(m.nrows(), m.ncols(), sigma_max);
    let u = svd.u.as_ref().expect("svd requested u");
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let mut sigma_inv = DMatrix::zeros(v_t.nrows(), u.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            sigma_inv[(i, i)] = 1.0 / s;
        }
    }
    v_t.transpose() * sigma_inv * u.transpose()
}

/// Minimum-norm least-squares solution of `a * x = b` via SVD.
///
/// Returns the solution together with the effective rank of `a`.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            operand: "least-squares right-hand side",
            expected: format!("{} rows", a.nrows()),
            found: format!("{} rows", b.nrows()),
        });
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = if sigma_max == 0.0 {
        0.0
    } else {
        rank_threshold(a.nrows(), a.ncols(), sigma_max)
    };
    let eff_rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let u = svd.u.as_ref().expect("svd requested u");
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let mut ut_b = u.transpose() * b;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let scale = if s > tol { 1.0 / s } else { 0.0 };
        ut_b.row_mut(i).scale_mut(scale);
    }
    Ok((v_t.transpose() * ut_b, eff_rank))
}

/// Condition number estimate from singular values (infinite when singular).
pub fn cond(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `a^k * b` accumulated by repeated multiplication; returns the blocks
/// `[b, a*b, ..., a^(s-1)*b]` without forming explicit powers.
pub fn krylov_blocks(a: &DMatrix<f64>, b: &DMatrix<f64>, s: usize) -> Vec<DMatrix<f64>> {
    let mut blocks = Vec::with_capacity(s);
    let mut current = b.clone();
    for _ in 0..s {
        blocks.push(current.clone());
        current = a * &current;
    }
    blocks
}

/// Largest principal angle (radians) between the column spaces of two matrices.
pub fn largest_principal_angle(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let qx = orthonormal_basis(x);
    let qy = orthonormal_basis(y);
    let c = qx.transpose() * qy;
    let sv = c.singular_values();
    // Column spaces of equal dimension: smallest cosine gives the largest angle.
    let min_cos = sv.min().clamp(-1.0, 1.0);
    min_cos.acos()
}

/// Orthonormal basis of the column space (QR, dropping rank-deficient tail).
pub fn orthonormal_basis(x: &DMatrix<f64>) -> DMatrix<f64> {
    let r = rank(x);
    let qr = x.clone().qr();
    let q = qr.q();
    q.columns(0, r.min(q.ncols())).into_owned()
}

/// Spectral radius (largest eigenvalue modulus).
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Entrywise soft threshold, `sign(x) * max(|x| - t, 0)`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Frobenius inner product.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
