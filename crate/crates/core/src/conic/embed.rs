//! Real embedding of complex Hermitian matrices.
//!
//! `T(A) = [[Re A, -Im A], [Im A, Re A]]` is real symmetric, `A` is PSD iff
//! `T(A)` is, and `<T(A), T(B)> = 2 tr(AB)`. Coefficient builders here fold
//! that factor of two in, so `<coef, T(V)> = tr(C V)` exactly.

use nalgebra::DVector;

use super::problem::BlockCoef;
use crate::error::{Error, Result};
use crate::numerics::{c64, CMat, HermitianMatrix, LowRankHermitian, RMat};

/// `T(A)` for a Hermitian `A`.
pub fn embed_hermitian(a: &HermitianMatrix) -> RMat {
    embed_matrix(a.as_matrix())
}

/// Checked variant for plain complex matrices.
pub fn embed_checked(a: &CMat) -> Result<RMat> {
    Ok(embed_hermitian(&HermitianMatrix::new(a.clone())?))
}

fn embed_matrix(a: &CMat) -> RMat {
    let n = a.nrows();
    let mut t = RMat::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let z = a[(i, j)];
            t[(i, j)] = z.re;
            t[(i + n, j + n)] = z.re;
            t[(i, j + n)] = -z.im;
            t[(i + n, j)] = z.im;
        }
    }
    t
}

/// Inverse of the embedding after averaging over the block structure:
/// `A = (X11 + X22)/2 + j (X21 - X12)/2`, then Hermitian-symmetrized.
///
/// The feasible sets built from embedded data are invariant under this
/// averaging, so applying it to an optimal real block preserves optimality.
pub fn unembed(x: &RMat) -> Result<HermitianMatrix> {
    if x.nrows() != x.ncols() || x.nrows() % 2 != 0 {
        return Err(Error::Contract(format!(
            "embedded block must be square with even size, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let n = x.nrows() / 2;
    let a = CMat::from_fn(n, n, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
        let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
        c64(re, im)
    });
    Ok(HermitianMatrix::symmetrized(a))
}

/// Coefficient `C'` with `<C', T(V)> = tr(C V)` for dense Hermitian `C`.
pub fn hermitian_dense_coef(c: &HermitianMatrix) -> BlockCoef {
    BlockCoef::Dense(embed_hermitian(c) * 0.5)
}

/// Low-rank coefficient for `C = sum_k w_k u_k u_k^H`.
///
/// `T(u u^H) = p p^T + q q^T` with `p = [Re u; Im u]` and `q = [-Im u; Re u]`,
/// so each complex column becomes two real columns carrying `w_k / 2`.
pub fn hermitian_low_rank_coef(c: &LowRankHermitian) -> BlockCoef {
    let n = c.dim();
    let r = c.rank();
    let mut factor = RMat::zeros(2 * n, 2 * r);
    let mut weights = DVector::zeros(2 * r);
    for k in 0..r {
        for i in 0..n {
            let z = c.factor[(i, k)];
            factor[(i, 2 * k)] = z.re;
            factor[(i + n, 2 * k)] = z.im;
            factor[(i, 2 * k + 1)] = -z.im;
            factor[(i + n, 2 * k + 1)] = z.re;
        }
        weights[2 * k] = 0.5 * c.weights[k];
        weights[2 * k + 1] = 0.5 * c.weights[k];
    }
    BlockCoef::LowRank { factor, weights }
}

/// Coefficient selecting the diagonal entry `V[i,i]` of an `n x n` Hermitian
/// variable.
pub fn hermitian_diag_entry_coef(n: usize, i: usize) -> BlockCoef {
    BlockCoef::sparse(vec![(i, i, 0.5), (i + n, i + n, 0.5)])
}

/// Coefficient for `tr(V)` of an `n x n` Hermitian variable.
pub fn hermitian_trace_coef(n: usize) -> BlockCoef {
    BlockCoef::sparse((0..2 * n).map(|i| (i, i, 0.5)).collect())
}
