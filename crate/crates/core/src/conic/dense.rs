//! Real dense kernels used inside the interior-point engine.
//!
//! The engine runs on `faer` matrices for its eigendecompositions and
//! products; the public API stays on `nalgebra`, so conversion happens at the
//! solver boundary.

use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::numerics::RMat;

pub type FMat = Mat<f64>;

pub fn from_na(a: &RMat) -> FMat {
    FMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub fn to_na(a: &FMat) -> RMat {
    RMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub fn dot(a: &FMat, b: &FMat) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        s += a
            .col_as_slice(j)
            .iter()
            .zip(b.col_as_slice(j))
            .map(|(x, y)| x * y)
            .sum::<f64>();
    }
    s
}

/// `y += a * x`
pub fn axpy(y: &mut FMat, a: f64, x: &FMat) {
    for j in 0..y.ncols() {
        for (t, v) in y.col_as_slice_mut(j).iter_mut().zip(x.col_as_slice(j)) {
            *t += a * v;
        }
    }
}

pub fn scale(x: &mut FMat, a: f64) {
    for j in 0..x.ncols() {
        for t in x.col_as_slice_mut(j) {
            *t *= a;
        }
    }
}

pub fn scaled(x: &FMat, a: f64) -> FMat {
    let mut y = x.clone();
    scale(&mut y, a);
    y
}

pub fn symmetrize(x: &mut FMat) {
    let n = x.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (x[(i, j)] + x[(j, i)]);
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
    }
}

/// `op(a) * op(b)` written into a fresh matrix.
pub fn mul(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> FMat {
    let mut out = FMat::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a, b, 1.0, Par::Seq);
    out
}

/// `out += alpha * a * b`
pub fn mul_add(out: &mut FMat, alpha: f64, a: MatRef<'_, f64>, b: MatRef<'_, f64>) {
    matmul(out.as_mut(), Accum::Add, a, b, alpha, Par::Seq);
}

/// `a * x * a^T`
pub fn congruence(a: &FMat, x: &FMat) -> FMat {
    let ax = mul(a.as_ref(), x.as_ref());
    mul(ax.as_ref(), a.transpose())
}

/// `a^T * x * a`
pub fn congruence_t(a: &FMat, x: &FMat) -> FMat {
    let xa = mul(x.as_ref(), a.as_ref());
    mul(a.transpose(), xa.as_ref())
}

/// Column-wise `sum_k w_k <f_k, g_k>`.
pub fn weighted_col_dots(f: &FMat, g: &FMat, w: &[f64], cols: std::ops::Range<usize>) -> f64 {
    cols.map(|k| {
        w[k] * f
            .col_as_slice(k)
            .iter()
            .zip(g.col_as_slice(k))
            .map(|(x, y)| x * y)
            .sum::<f64>()
    })
    .sum()
}

pub fn cholesky_lower(a: &FMat) -> Option<FMat> {
    let llt = a.llt(Side::Lower).ok()?;
    Some(llt.L().to_owned())
}

pub fn lower_inverse(l: &FMat) -> FMat {
    let mut inv = FMat::identity(l.nrows(), l.ncols());
    solve_lower_triangular_in_place(l.as_ref(), inv.as_mut(), Par::Seq);
    inv
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(a: &FMat) -> Option<(Vec<f64>, FMat)> {
    let eig = a.self_adjoint_eigen(Side::Lower).ok()?;
    let s = eig.S().column_vector();
    let vals = (0..a.nrows()).map(|k| s[k]).collect();
    Some((vals, eig.U().to_owned()))
}

pub fn min_eigenvalue(a: &FMat) -> Option<f64> {
    let vals = a.self_adjoint_eigenvalues(Side::Lower).ok()?;
    Some(vals.into_iter().fold(f64::INFINITY, f64::min))
}
