//! Homogeneous self-dual primal-dual interior-point method.
//!
//! Internally every [`ConicProblem`] is rewritten in the standard form
//!
//! ```text
//! min  <c, x> + c_f^T u   s.t.  A(x) + A_f u = b,   x in K
//! max  b^T y              s.t.  A^T(y) + s = c,  A_f^T y = c_f,  s in K
//! ```
//!
//! where `K` is a product of PSD blocks and one nonnegative orthant holding
//! the inequality slacks, and `u` are the free scalars. The homogeneous
//! embedding adds `tau, kappa >= 0`; search directions use Nesterov-Todd
//! scaling with a Mehrotra predictor-corrector. Each Newton system is reduced
//! to the `m x m` Schur complement `A W A^T`, assembled with dedicated paths
//! for dense, sparse and low-rank coefficient matrices.

use std::ops::Range;

use nalgebra::{Cholesky, LU};

use super::dense::{self, FMat};

use super::problem::{BlockCoef, ConicProblem, ConicSolution, Relation, Sense, Status};
use crate::numerics::{RMat, RVec};

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    /// Relative primal/dual residual tolerance.
    pub feasibility_tol: f64,
    /// Relative duality gap tolerance.
    pub gap_tol: f64,
    pub max_iterations: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Print one progress line per iteration to stderr.
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-6,
            gap_tol: 1e-7,
            max_iterations: 200,
            step_fraction: 0.99,
            verbose: std::env::var_os("ISAC_SOLVER_TRACE").is_some(),
        }
    }
}

/// Solves `p` with default settings.
pub fn solve(p: &ConicProblem) -> crate::error::Result<ConicSolution> {
    solve_with(p, &SolverSettings::default())
}

pub fn solve_with(p: &ConicProblem, settings: &SolverSettings) -> crate::error::Result<ConicSolution> {
    p.validate()?;
    let std = StandardForm::build(p);
    let mut sol = match std.trivial.clone() {
        Some(t) => t,
        None => Engine::new(&std, settings).run(),
    };
    sol.finish(p, &std);
    Ok(sol.into_solution(p))
}

// ---------------------------------------------------------------------------
// standard form

#[derive(Debug, Clone)]
struct BlockData {
    n: usize,
    dense: Vec<(usize, FMat)>,
    sparse: Vec<(usize, Vec<(usize, usize, f64)>)>,
    lr_rows: Vec<usize>,
    lr_ranges: Vec<Range<usize>>,
    lr_factor: FMat,
    lr_weights: Vec<f64>,
    lr_pending: Vec<f64>,
    objective: Option<FMat>,
}

impl BlockData {
    fn new(n: usize) -> Self {
        Self {
            n,
            dense: Vec::new(),
            sparse: Vec::new(),
            lr_rows: Vec::new(),
            lr_ranges: Vec::new(),
            lr_factor: FMat::zeros(n, 0),
            lr_weights: Vec::new(),
            lr_pending: Vec::new(),
            objective: None,
        }
    }

    fn push(&mut self, row: usize, coef: &BlockCoef, scale: f64) {
        match coef {
            BlockCoef::Dense(a) => self.dense.push((row, dense::scaled(&dense::from_na(a), scale))),
            BlockCoef::Sparse(e) => self
                .sparse
                .push((row, e.iter().map(|&(i, j, v)| (i, j, v * scale)).collect())),
            BlockCoef::LowRank { factor, weights } => {
                let start = self.lr_weights.len();
                let r = factor.ncols();
                self.lr_pending.extend(factor.iter());
                self.lr_weights.extend(weights.iter().map(|w| w * scale));
                self.lr_rows.push(row);
                self.lr_ranges.push(start..start + r);
            }
        }
    }

    /// Moves the collected low-rank columns into one contiguous factor.
    fn seal(&mut self) {
        let n = self.n;
        let cols = self.lr_weights.len();
        let buf = std::mem::take(&mut self.lr_pending);
        self.lr_factor = FMat::from_fn(n, cols, |i, j| buf[j * n + i]);
    }

    /// Adds `<A_i, X>` into `out[i]` for every term of this block.
    fn apply(&self, x: &FMat, out: &mut RVec) {
        for (row, a) in &self.dense {
            out[*row] += dense::dot(a, x);
        }
        for (row, e) in &self.sparse {
            out[*row] += sparse_inner(e, x);
        }
        if !self.lr_rows.is_empty() {
            let xf = dense::mul(x.as_ref(), self.lr_factor.as_ref());
            for (row, range) in self.lr_rows.iter().zip(&self.lr_ranges) {
                out[*row] +=
                    dense::weighted_col_dots(&self.lr_factor, &xf, &self.lr_weights, range.clone());
            }
        }
    }

    /// `sum_i y_i A_i` restricted to this block.
    fn adjoint(&self, y: &RVec) -> FMat {
        let mut out = FMat::zeros(self.n, self.n);
        for (row, a) in &self.dense {
            dense::axpy(&mut out, y[*row], a);
        }
        for (row, e) in &self.sparse {
            let s = y[*row];
            for &(i, j, v) in e {
                out[(i, j)] += s * v;
                if i != j {
                    out[(j, i)] += s * v;
                }
            }
        }
        if !self.lr_rows.is_empty() {
            let mut scaled = self.lr_factor.clone();
            for (row, range) in self.lr_rows.iter().zip(&self.lr_ranges) {
                for k in range.clone() {
                    let s = self.lr_weights[k] * y[*row];
                    for t in scaled.col_as_slice_mut(k) {
                        *t *= s;
                    }
                }
            }
            dense::mul_add(&mut out, 1.0, scaled.as_ref(), self.lr_factor.transpose());
        }
        out
    }

    /// Adds `<A_i, W A_j W>` for all term pairs into the Schur matrix.
    fn schur(&self, w: &FMat, m: &mut RMat) {
        let has_lr = !self.lr_rows.is_empty();
        let p = if has_lr {
            dense::mul(w.as_ref(), self.lr_factor.as_ref())
        } else {
            FMat::zeros(self.n, 0)
        };
        let total = self.lr_weights.len();

        // low-rank x low-rank
        for (a, ra) in self.lr_ranges.iter().enumerate() {
            let tail = ra.start;
            let z = dense::mul(
                self.lr_factor.as_ref().subcols(ra.start, ra.len()).transpose(),
                p.as_ref().subcols(tail, total - tail),
            );
            for (b, rb) in self.lr_ranges.iter().enumerate().skip(a) {
                let mut acc = 0.0;
                for (zi, i) in ra.clone().enumerate() {
                    let wi = self.lr_weights[i];
                    for j in rb.clone() {
                        let v = z[(zi, j - tail)];
                        acc += wi * self.lr_weights[j] * v * v;
                    }
                }
                let (r1, r2) = (self.lr_rows[a], self.lr_rows[b]);
                m[(r1, r2)] += acc;
                if a != b {
                    m[(r2, r1)] += acc;
                }
            }
        }

        // dense x everything
        for (jdx, (rj, aj)) in self.dense.iter().enumerate() {
            let waw = dense::congruence(w, aj);
            for (idx, (ri, ai)) in self.dense.iter().take(jdx + 1).enumerate() {
                let v = dense::dot(ai, &waw);
                m[(*ri, *rj)] += v;
                if idx != jdx {
                    m[(*rj, *ri)] += v;
                }
            }
            for (ri, e) in &self.sparse {
                let v = sparse_inner(e, &waw);
                m[(*ri, *rj)] += v;
                m[(*rj, *ri)] += v;
            }
            if has_lr {
                let wf = dense::mul(waw.as_ref(), self.lr_factor.as_ref());
                for (ri, range) in self.lr_rows.iter().zip(&self.lr_ranges) {
                    let acc =
                        dense::weighted_col_dots(&self.lr_factor, &wf, &self.lr_weights, range.clone());
                    m[(*ri, *rj)] += acc;
                    m[(*rj, *ri)] += acc;
                }
            }
        }

        // sparse x sparse, sparse x low-rank
        for (jdx, (rj, ej)) in self.sparse.iter().enumerate() {
            for (idx, (ri, ei)) in self.sparse.iter().take(jdx + 1).enumerate() {
                let mut acc = 0.0;
                for &(p_, q, u) in ei {
                    let mult_pq = if p_ == q { 1.0 } else { 2.0 };
                    let mut val = 0.0;
                    for &(r, s, v) in ej {
                        if r == s {
                            val += v * w[(p_, r)] * w[(r, q)];
                        } else {
                            val += v * (w[(p_, r)] * w[(s, q)] + w[(p_, s)] * w[(r, q)]);
                        }
                    }
                    acc += u * mult_pq * val;
                }
                m[(*ri, *rj)] += acc;
                if idx != jdx {
                    m[(*rj, *ri)] += acc;
                }
            }
            for (ra, range) in self.lr_rows.iter().zip(&self.lr_ranges) {
                let mut acc = 0.0;
                for &(r, s, v) in ej {
                    let mult = if r == s { 1.0 } else { 2.0 };
                    let mut val = 0.0;
                    for k in range.clone() {
                        val += self.lr_weights[k] * p[(r, k)] * p[(s, k)];
                    }
                    acc += v * mult * val;
                }
                m[(*ra, *rj)] += acc;
                m[(*rj, *ra)] += acc;
            }
        }
    }
}

fn sparse_inner(e: &[(usize, usize, f64)], x: &FMat) -> f64 {
    e.iter()
        .map(|&(i, j, v)| if i == j { v * x[(i, i)] } else { 2.0 * v * x[(i, j)] })
        .sum()
}

#[derive(Debug, Clone)]
struct StandardForm {
    m: usize,
    blocks: Vec<BlockData>,
    /// slack k sits in row `lp_rows[k]` with coefficient `lp_coef[k]`.
    lp_rows: Vec<usize>,
    lp_coef: Vec<f64>,
    n_free: usize,
    a_free: RMat,
    b: RVec,
    c_free: RVec,
    /// internal row `i` came from constraint `row_origin[i]`.
    row_origin: Vec<usize>,
    row_scale: Vec<f64>,
    obj_scale: f64,
    objective_sign: f64,
    trivial: Option<RawResult>,
}

impl StandardForm {
    fn build(p: &ConicProblem) -> Self {
        let objective_sign = match p.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut blocks: Vec<BlockData> = p.psd_blocks.iter().map(|&n| BlockData::new(n)).collect();

        // objective
        let mut c_blocks: Vec<Option<RMat>> = vec![None; p.psd_blocks.len()];
        for (k, coef) in &p.objective.blocks {
            let n = p.psd_blocks[*k];
            let d = c_blocks[*k].get_or_insert_with(|| RMat::zeros(n, n));
            coef.add_to(objective_sign, d);
        }
        let mut c_free = RVec::zeros(p.free_scalars);
        for &(k, c) in &p.objective.free {
            c_free[k] += objective_sign * c;
        }
        let c_norm = (c_blocks
            .iter()
            .flatten()
            .map(|c| c.norm_squared())
            .sum::<f64>()
            + c_free.norm_squared())
        .sqrt();
        let obj_scale = if c_norm > 0.0 { c_norm } else { 1.0 };
        for (blk, c) in blocks.iter_mut().zip(c_blocks) {
            blk.objective = c
                .filter(|c| c.norm() > 0.0)
                .map(|c| dense::from_na(&(c / obj_scale)));
        }
        c_free /= obj_scale;

        // constraints
        let mut row_origin = Vec::new();
        let mut row_scale = Vec::new();
        let mut b = Vec::new();
        let mut lp_rows = Vec::new();
        let mut lp_coef = Vec::new();
        let mut free_entries = Vec::new();
        let mut trivial_violation: Option<f64> = None;
        for (ci, con) in p.constraints.iter().enumerate() {
            let f = &con.functional;
            let norm = (f.blocks.iter().map(|(_, c)| c.frobenius_sq()).sum::<f64>()
                + f.free.iter().map(|&(_, c)| c * c).sum::<f64>())
            .sqrt();
            if norm == 0.0 {
                let ok = match con.relation {
                    Relation::Le => 0.0 <= con.bound,
                    Relation::Ge => 0.0 >= con.bound,
                    Relation::Eq => con.bound == 0.0,
                };
                if !ok {
                    let v = con.bound.abs();
                    trivial_violation = Some(trivial_violation.map_or(v, |t: f64| t.max(v)));
                }
                continue;
            }
            let row = row_origin.len();
            row_origin.push(ci);
            row_scale.push(norm);
            b.push(con.bound / norm);
            for (k, coef) in &f.blocks {
                blocks[*k].push(row, coef, 1.0 / norm);
            }
            for &(k, c) in &f.free {
                free_entries.push((row, k, c / norm));
            }
            match con.relation {
                Relation::Le => {
                    lp_rows.push(row);
                    lp_coef.push(1.0);
                }
                Relation::Ge => {
                    lp_rows.push(row);
                    lp_coef.push(-1.0);
                }
                Relation::Eq => {}
            }
        }
        for blk in &mut blocks {
            blk.seal();
        }
        let m = row_origin.len();
        let mut a_free = RMat::zeros(m, p.free_scalars);
        for (row, k, c) in free_entries {
            a_free[(row, k)] += c;
        }

        let mut std = Self {
            m,
            blocks,
            lp_rows,
            lp_coef,
            n_free: p.free_scalars,
            a_free,
            b: RVec::from_vec(b),
            c_free,
            row_origin,
            row_scale,
            obj_scale,
            objective_sign,
            trivial: None,
        };
        if let Some(v) = trivial_violation {
            std.trivial = Some(RawResult::infeasible_trivial(&std, v));
        } else if m == 0 {
            std.trivial = Some(RawResult::unconstrained(&std));
        }
        std
    }

    fn n_lp(&self) -> usize {
        self.lp_rows.len()
    }

    fn degree(&self) -> f64 {
        (self.blocks.iter().map(|b| b.n).sum::<usize>() + self.n_lp()) as f64
    }

    fn apply(&self, x: &ConeVec) -> RVec {
        let mut out = RVec::zeros(self.m);
        for (blk, xb) in self.blocks.iter().zip(&x.psd) {
            blk.apply(xb, &mut out);
        }
        for (k, (&row, &c)) in self.lp_rows.iter().zip(&self.lp_coef).enumerate() {
            out[row] += c * x.lp[k];
        }
        out
    }

    fn adjoint(&self, y: &RVec) -> ConeVec {
        let psd = self.blocks.iter().map(|b| b.adjoint(y)).collect();
        let lp = RVec::from_iterator(
            self.n_lp(),
            self.lp_rows.iter().zip(&self.lp_coef).map(|(&r, &c)| c * y[r]),
        );
        ConeVec { psd, lp }
    }

    fn c_cone(&self) -> ConeVec {
        ConeVec {
            psd: self
                .blocks
                .iter()
                .map(|b| b.objective.clone().unwrap_or_else(|| FMat::zeros(b.n, b.n)))
                .collect(),
            lp: RVec::zeros(self.n_lp()),
        }
    }
}

// ---------------------------------------------------------------------------
// cone vectors and scaling

#[derive(Debug, Clone)]
struct ConeVec {
    psd: Vec<FMat>,
    lp: RVec,
}

impl ConeVec {
    fn identity(std: &StandardForm) -> Self {
        Self {
            psd: std.blocks.iter().map(|b| FMat::identity(b.n, b.n)).collect(),
            lp: RVec::from_element(std.n_lp(), 1.0),
        }
    }

    fn dot(&self, o: &ConeVec) -> f64 {
        self.psd.iter().zip(&o.psd).map(|(a, b)| dense::dot(a, b)).sum::<f64>() + self.lp.dot(&o.lp)
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, a: f64, o: &ConeVec) {
        for (x, y) in self.psd.iter_mut().zip(&o.psd) {
            dense::axpy(x, a, y);
        }
        self.lp.axpy(a, &o.lp, 1.0);
    }

    fn scaled(&self, a: f64) -> ConeVec {
        ConeVec {
            psd: self.psd.iter().map(|x| dense::scaled(x, a)).collect(),
            lp: &self.lp * a,
        }
    }

    fn symmetrize(&mut self) {
        for x in &mut self.psd {
            dense::symmetrize(x);
        }
    }
}

struct PsdScaling {
    g: FMat,
    ginv: FMat,
    w: FMat,
    lambda: Vec<f64>,
}

struct Scaling {
    psd: Vec<PsdScaling>,
    lp_g: RVec,
    lp_lambda: RVec,
}

impl Scaling {
    fn compute(x: &ConeVec, s: &ConeVec) -> Option<Self> {
        let mut psd = Vec::with_capacity(x.psd.len());
        for (xb, sb) in x.psd.iter().zip(&s.psd) {
            let l = dense::cholesky_lower(xb)?;
            let mut t = dense::congruence_t(&l, sb);
            dense::symmetrize(&mut t);
            let (vals, vecs) = dense::sym_eigen(&t)?;
            if vals.iter().any(|&d| !(d > 0.0)) {
                return None;
            }
            let lambda: Vec<f64> = vals.iter().map(|d| d.sqrt()).collect();
            let quarter: Vec<f64> = vals.iter().map(|d| d.sqrt().sqrt()).collect();
            let mut g = dense::mul(l.as_ref(), vecs.as_ref());
            for (k, q) in quarter.iter().enumerate() {
                for t in g.col_as_slice_mut(k) {
                    *t /= q;
                }
            }
            let linv = dense::lower_inverse(&l);
            let mut ginv = dense::mul(vecs.transpose(), linv.as_ref());
            for j in 0..ginv.ncols() {
                for (t, q) in ginv.col_as_slice_mut(j).iter_mut().zip(&quarter) {
                    *t *= q;
                }
            }
            let w = dense::mul(g.as_ref(), g.transpose());
            psd.push(PsdScaling { g, ginv, w, lambda });
        }
        if x.lp.iter().chain(s.lp.iter()).any(|&v| !(v > 0.0)) {
            return None;
        }
        let lp_g = x.lp.zip_map(&s.lp, |a, b| (a / b).sqrt());
        let lp_lambda = x.lp.zip_map(&s.lp, |a, b| (a * b).sqrt());
        Some(Self {
            psd,
            lp_g,
            lp_lambda,
        })
    }

    fn map_psd(&self, v: &ConeVec, f: impl Fn(&PsdScaling, &FMat) -> FMat, lp: RVec) -> ConeVec {
        ConeVec {
            psd: self.psd.iter().zip(&v.psd).map(|(sc, vb)| f(sc, vb)).collect(),
            lp,
        }
    }

    /// `W V W` per PSD block, `(x/s) v` on the orthant.
    fn apply_w(&self, v: &ConeVec) -> ConeVec {
        let lp = v.lp.component_mul(&self.lp_g.map(|g| g * g));
        self.map_psd(v, |sc, vb| dense::congruence(&sc.w, vb), lp)
    }

    /// `G Z G^T` / `g z`: maps scaled-space vectors back to x-space.
    fn unscale(&self, z: &ConeVec) -> ConeVec {
        let lp = z.lp.component_mul(&self.lp_g);
        self.map_psd(z, |sc, zb| dense::congruence(&sc.g, zb), lp)
    }

    fn scale_x(&self, dx: &ConeVec) -> ConeVec {
        let lp = dx.lp.component_div(&self.lp_g);
        self.map_psd(dx, |sc, d| dense::congruence(&sc.ginv, d), lp)
    }

    fn scale_s(&self, ds: &ConeVec) -> ConeVec {
        let lp = ds.lp.component_mul(&self.lp_g);
        self.map_psd(ds, |sc, d| dense::congruence_t(&sc.g, d), lp)
    }

    /// Largest `alpha` keeping `Lambda + alpha * d` in the cone.
    fn max_step(&self, d: &ConeVec) -> f64 {
        let mut alpha = f64::INFINITY;
        for (sc, db) in self.psd.iter().zip(&d.psd) {
            let n = db.nrows();
            let inv_sqrt: Vec<f64> = sc.lambda.iter().map(|l| 1.0 / l.sqrt()).collect();
            let m = FMat::from_fn(n, n, |i, j| {
                0.5 * (db[(i, j)] + db[(j, i)]) * inv_sqrt[i] * inv_sqrt[j]
            });
            let min = dense::min_eigenvalue(&m).unwrap_or(f64::NEG_INFINITY);
            if min < 0.0 {
                alpha = alpha.min(-1.0 / min);
            }
        }
        for (l, dv) in self.lp_lambda.iter().zip(d.lp.iter()) {
            if *dv < 0.0 {
                alpha = alpha.min(-l / dv);
            }
        }
        alpha
    }

    /// Solves `Lambda o Z = R` for `Z` (`o` the symmetrized product).
    fn lyapunov(&self, r: &ConeVec) -> ConeVec {
        let lp = r.lp.component_div(&self.lp_lambda);
        self.map_psd(
            r,
            |sc, rb| {
                FMat::from_fn(rb.nrows(), rb.ncols(), |i, j| {
                    2.0 * rb[(i, j)] / (sc.lambda[i] + sc.lambda[j])
                })
            },
            lp,
        )
    }

    fn lambda_sq_neg(&self) -> ConeVec {
        ConeVec {
            psd: self
                .psd
                .iter()
                .map(|sc| {
                    let n = sc.lambda.len();
                    FMat::from_fn(n, n, |i, j| if i == j { -sc.lambda[i] * sc.lambda[i] } else { 0.0 })
                })
                .collect(),
            lp: self.lp_lambda.map(|l| -l * l),
        }
    }
}

// ---------------------------------------------------------------------------
// Newton system

struct Kkt {
    m: RMat,
    chol: Cholesky<f64, nalgebra::Dyn>,
    /// `M^{-1} A_f`
    m_inv_af: RMat,
    /// LU of `A_f^T M^{-1} A_f`
    free_lu: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Kkt {
    fn factor(mut m: RMat, a_free: &RMat) -> Option<Self> {
        let sym = (&m + m.transpose()) * 0.5;
        m = sym;
        let diag_max = m.diagonal().iter().fold(0.0_f64, |a, &b| a.max(b.abs())).max(1e-300);
        let mut reg = 0.0;
        let chol = loop {
            let mut mm = m.clone();
            if reg > 0.0 {
                for i in 0..mm.nrows() {
                    mm[(i, i)] += reg;
                }
            }
            if let Some(c) = Cholesky::new(mm) {
                break c;
            }
            reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
            if reg > 1e-4 * diag_max {
                return None;
            }
        };
        let (m_inv_af, free_lu) = if a_free.ncols() > 0 {
            let y = chol.solve(a_free);
            let s = a_free.tr_mul(&y);
            (y, Some(LU::new(s)))
        } else {
            (RMat::zeros(m.nrows(), 0), None)
        };
        Some(Self {
            m,
            chol,
            m_inv_af,
            free_lu,
        })
    }

    /// Solves `[M A_f; A_f^T 0] [y; u] = [r1; r2]` with one step of
    /// iterative refinement against the unregularized `M`.
    fn solve(&self, a_free: &RMat, r1: &RVec, r2: &RVec) -> Option<(RVec, RVec)> {
        let (mut y, mut u) = self.solve_once(a_free, r1, r2)?;
        let e1 = r1 - &self.m * &y - a_free * &u;
        let e2 = r2 - a_free.transpose() * &y;
        let (dy, du) = self.solve_once(a_free, &e1, &e2)?;
        y += dy;
        u += du;
        Some((y, u))
    }

    fn solve_once(&self, a_free: &RMat, r1: &RVec, r2: &RVec) -> Option<(RVec, RVec)> {
        let z = self.chol.solve(r1);
        match &self.free_lu {
            None => Some((z, RVec::zeros(0))),
            Some(lu) => {
                let rhs = a_free.tr_mul(&z) - r2;
                let u = lu.solve(&rhs)?;
                let y = z - &self.m_inv_af * &u;
                Some((y, u))
            }
        }
    }
}

struct Direction {
    dx: ConeVec,
    aty: ConeVec,
    ds: ConeVec,
    dy: RVec,
    du: RVec,
    dtau: f64,
    dkappa: f64,
    dx_scaled: ConeVec,
    ds_scaled: ConeVec,
}

struct Residuals {
    rp: RVec,
    rd: ConeVec,
    rf: RVec,
    rg: f64,
}

// ---------------------------------------------------------------------------
// iteration

#[derive(Debug, Clone)]
struct RawResult {
    status: Status,
    x: ConeVec,
    u: RVec,
    y: RVec,
    iterations: usize,
    certificate: Option<f64>,
    // filled by `finish`
    blocks: Vec<RMat>,
    free: Vec<f64>,
    duals: Vec<f64>,
    objective: f64,
    dual_objective: f64,
    max_violation: f64,
    relative_gap: f64,
}

impl RawResult {
    fn new(status: Status, x: ConeVec, u: RVec, y: RVec, iterations: usize) -> Self {
        Self {
            status,
            x,
            u,
            y,
            iterations,
            certificate: None,
            blocks: Vec::new(),
            free: Vec::new(),
            duals: Vec::new(),
            objective: f64::NAN,
            dual_objective: f64::NAN,
            max_violation: f64::NAN,
            relative_gap: f64::NAN,
        }
    }

    fn zero_point(std: &StandardForm) -> (ConeVec, RVec, RVec) {
        let x = ConeVec {
            psd: std.blocks.iter().map(|b| FMat::zeros(b.n, b.n)).collect(),
            lp: RVec::zeros(std.n_lp()),
        };
        (x, RVec::zeros(std.n_free), RVec::zeros(std.m))
    }

    fn infeasible_trivial(std: &StandardForm, violation: f64) -> Self {
        let (x, u, y) = Self::zero_point(std);
        let mut r = Self::new(Status::Infeasible, x, u, y, 0);
        r.certificate = Some(violation);
        r
    }

    /// No constraints: the optimum is 0 at the origin when `c` lies in the
    /// dual cone, otherwise the problem is unbounded.
    fn unconstrained(std: &StandardForm) -> Self {
        let (x, u, y) = Self::zero_point(std);
        let bounded = std.c_free.iter().all(|&c| c == 0.0)
            && std.blocks.iter().all(|b| {
                b.objective
                    .as_ref()
                    .map_or(true, |c| dense::min_eigenvalue(c).is_some_and(|v| v >= -1e-12))
            });
        let status = if bounded { Status::Optimal } else { Status::Unbounded };
        Self::new(status, x, u, y, 0)
    }

    fn finish(&mut self, p: &ConicProblem, std: &StandardForm) {
        self.blocks = self.x.psd.iter().map(dense::to_na).collect();
        self.free = self.u.iter().copied().collect();
        let mut duals = vec![0.0; p.constraints.len()];
        for (row, &ci) in std.row_origin.iter().enumerate() {
            duals[ci] = std.obj_scale * self.y[row] / std.row_scale[row];
        }
        self.duals = duals;
        self.objective = p.objective.evaluate(&self.blocks, &self.free);
        let internal_dual: f64 = std.b.dot(&self.y) * std.obj_scale;
        self.dual_objective = std.objective_sign * internal_dual;
        self.max_violation = p.max_violation(&self.blocks, &self.free);
        self.relative_gap = (self.objective - self.dual_objective).abs()
            / (1.0 + self.objective.abs() + self.dual_objective.abs());
    }

    fn into_solution(self, _p: &ConicProblem) -> ConicSolution {
        ConicSolution {
            status: self.status,
            blocks: self.blocks,
            free: self.free,
            objective: self.objective,
            dual_objective: self.dual_objective,
            max_violation: self.max_violation,
            relative_gap: self.relative_gap,
            duals: self.duals,
            iterations: self.iterations,
            certificate: self.certificate,
        }
    }
}

struct Engine<'a> {
    std: &'a StandardForm,
    settings: &'a SolverSettings,
    c: ConeVec,
    x: ConeVec,
    s: ConeVec,
    y: RVec,
    u: RVec,
    tau: f64,
    kappa: f64,
    aty: ConeVec,
}

impl<'a> Engine<'a> {
    fn new(std: &'a StandardForm, settings: &'a SolverSettings) -> Self {
        let x = ConeVec::identity(std);
        let s = ConeVec::identity(std);
        let aty = std.adjoint(&RVec::zeros(std.m));
        Self {
            std,
            settings,
            c: std.c_cone(),
            x,
            s,
            y: RVec::zeros(std.m),
            u: RVec::zeros(std.n_free),
            tau: 1.0,
            kappa: 1.0,
            aty,
        }
    }

    fn residuals(&self) -> Residuals {
        let std = self.std;
        let rp = std.apply(&self.x) + &std.a_free * &self.u - &std.b * self.tau;
        let mut rd = self.c.scaled(self.tau);
        rd.axpy(-1.0, &self.aty);
        rd.axpy(-1.0, &self.s);
        let rf = &std.c_free * self.tau - std.a_free.tr_mul(&self.y);
        let rg = std.b.dot(&self.y) - self.c.dot(&self.x) - std.c_free.dot(&self.u) - self.kappa;
        Residuals { rp, rd, rf, rg }
    }

    fn result(&self, status: Status, iterations: usize) -> RawResult {
        let t = if self.tau > 0.0 { self.tau } else { 1.0 };
        RawResult::new(
            status,
            self.x.scaled(1.0 / t),
            &self.u / t,
            &self.y / t,
            iterations,
        )
    }

    fn run(mut self) -> RawResult {
        let std = self.std;
        let tol = self.settings;
        let nu = std.degree();
        let b_norm = std.b.norm();
        let c_norm = (self.c.norm().powi(2) + std.c_free.norm_squared()).sqrt();
        let mut last_alpha = 1.0;

        for it in 0..tol.max_iterations {
            let res = self.residuals();
            let tau = self.tau;
            let pres = res.rp.norm() / tau / (1.0 + b_norm);
            let dres = (res.rd.norm().powi(2) + res.rf.norm_squared()).sqrt() / tau / (1.0 + c_norm);
            let pobj = (self.c.dot(&self.x) + std.c_free.dot(&self.u)) / tau;
            let dobj = std.b.dot(&self.y) / tau;
            let gap = self.x.dot(&self.s) / (tau * tau);
            let relgap = gap.max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());

            if tol.verbose {
                eprintln!(
                    "{it:3} pres {pres:.2e} dres {dres:.2e} gap {relgap:.2e} pobj {pobj:+.6e} dobj {dobj:+.6e} tau {:.2e} kappa {:.2e} alpha {last_alpha:.3}",
                    self.tau, self.kappa
                );
            }
            if pres <= tol.feasibility_tol && dres <= tol.feasibility_tol && relgap <= tol.gap_tol {
                return self.result(Status::Optimal, it);
            }

            // improving rays
            let bty = std.b.dot(&self.y);
            if bty > 0.0 {
                let mut ray = self.aty.clone();
                ray.axpy(1.0, &self.s);
                let pinf = (ray.norm().powi(2) + std.a_free.tr_mul(&self.y).norm_squared()).sqrt()
                    / bty;
                if pinf <= tol.feasibility_tol {
                    let cert = bty / self.y.norm();
                    if cert > tol.feasibility_tol {
                        let mut r = self.result(Status::Infeasible, it);
                        r.x = self.x.clone();
                        r.y = &self.y / bty;
                        r.certificate = Some(cert);
                        return r;
                    }
                }
            }
            let cx = self.c.dot(&self.x) + std.c_free.dot(&self.u);
            if cx < 0.0 {
                let ax = &res.rp + &std.b * self.tau;
                if ax.norm() / (-cx) <= tol.feasibility_tol {
                    let mut r = self.result(Status::Unbounded, it);
                    r.x = self.x.scaled(1.0 / -cx);
                    r.u = &self.u / -cx;
                    return r;
                }
            }
            if last_alpha < 1e-10 {
                return self.result(Status::NumericalFailure, it);
            }

            let Some(scaling) = Scaling::compute(&self.x, &self.s) else {
                return self.result(Status::NumericalFailure, it);
            };
            let mut m = RMat::zeros(std.m, std.m);
            for (blk, sc) in std.blocks.iter().zip(&scaling.psd) {
                blk.schur(&sc.w, &mut m);
            }
            for (k, (&row, &coef)) in std.lp_rows.iter().zip(&std.lp_coef).enumerate() {
                let g = scaling.lp_g[k];
                m[(row, row)] += coef * coef * g * g;
            }
            let Some(kkt) = Kkt::factor(m, &std.a_free) else {
                return self.result(Status::NumericalFailure, it);
            };

            let mu = (self.x.dot(&self.s) + self.tau * self.kappa) / (nu + 1.0);
            let w_rd = scaling.apply_w(&res.rd);

            // direction for the tau column, shared by predictor and corrector
            let wc = scaling.apply_w(&self.c);
            let rhs2 = &std.b + std.apply(&wc);
            let Some((y2, u2)) = kkt.solve(&std.a_free, &rhs2, &std.c_free) else {
                return self.result(Status::NumericalFailure, it);
            };
            let aty2 = std.adjoint(&y2);
            let mut x2 = scaling.apply_w(&aty2);
            x2.axpy(-1.0, &wc);
            let den = std.b.dot(&y2) - self.c.dot(&x2) - std.c_free.dot(&u2) + self.kappa / self.tau;

            let shared = Shared {
                scaling: &scaling,
                kkt: &kkt,
                res: &res,
                w_rd: &w_rd,
                y2: &y2,
                u2: &u2,
                aty2: &aty2,
                x2: &x2,
                den,
            };

            // predictor
            let z_aff = scaling.lyapunov(&scaling.lambda_sq_neg());
            let Some(aff) = self.direction(&shared, 1.0, &z_aff, -self.tau * self.kappa) else {
                return self.result(Status::NumericalFailure, it);
            };
            let alpha_aff = self.step_length(&scaling, &aff).min(1.0);
            let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

            // corrector
            let mut rc = scaling.lambda_sq_neg();
            for ((rb, dxa), dsa) in rc.psd.iter_mut().zip(&aff.dx_scaled.psd).zip(&aff.ds_scaled.psd) {
                let mut prod = dense::mul(dxa.as_ref(), dsa.as_ref());
                dense::symmetrize(&mut prod);
                dense::axpy(rb, -1.0, &prod);
                for i in 0..rb.nrows() {
                    rb[(i, i)] += sigma * mu;
                }
            }
            for k in 0..rc.lp.len() {
                rc.lp[k] += sigma * mu - aff.dx_scaled.lp[k] * aff.ds_scaled.lp[k];
            }
            let z_cc = scaling.lyapunov(&rc);
            let dk = -self.tau * self.kappa - aff.dtau * aff.dkappa + sigma * mu;
            let Some(dir) = self.direction(&shared, 1.0 - sigma, &z_cc, dk) else {
                return self.result(Status::NumericalFailure, it);
            };
            let alpha = (tol.step_fraction * self.step_length(&scaling, &dir)).min(1.0);
            last_alpha = alpha;

            self.x.axpy(alpha, &dir.dx);
            self.s.axpy(alpha, &dir.ds);
            self.x.symmetrize();
            self.s.symmetrize();
            self.y.axpy(alpha, &dir.dy, 1.0);
            self.u.axpy(alpha, &dir.du, 1.0);
            self.tau += alpha * dir.dtau;
            self.kappa += alpha * dir.dkappa;
            self.aty.axpy(alpha, &dir.aty);
        }
        self.result(Status::NumericalFailure, tol.max_iterations)
    }

    fn step_length(&self, scaling: &Scaling, d: &Direction) -> f64 {
        let mut a = scaling.max_step(&d.dx_scaled).min(scaling.max_step(&d.ds_scaled));
        if d.dtau < 0.0 {
            a = a.min(-self.tau / d.dtau);
        }
        if d.dkappa < 0.0 {
            a = a.min(-self.kappa / d.dkappa);
        }
        a
    }

    fn direction(&self, sh: &Shared, eta: f64, z: &ConeVec, d_kappa: f64) -> Option<Direction> {
        let std = self.std;
        let rx = sh.scaling.unscale(z);
        let mut v = rx;
        v.axpy(-eta, sh.w_rd);
        let rhs1 = -(&sh.res.rp * eta) - std.apply(&v);
        let rhs1_f = &sh.res.rf * eta;
        let (y1, u1) = sh.kkt.solve(&std.a_free, &rhs1, &rhs1_f)?;
        let aty1 = std.adjoint(&y1);
        let mut x1 = v;
        x1.axpy(1.0, &sh.scaling.apply_w(&aty1));

        let num = -eta * sh.res.rg - std.b.dot(&y1) + self.c.dot(&x1) + std.c_free.dot(&u1)
            + d_kappa / self.tau;
        let dtau = num / sh.den;
        if !dtau.is_finite() {
            return None;
        }
        let dy = &y1 + sh.y2 * dtau;
        let du = &u1 + sh.u2 * dtau;
        let mut dx = x1;
        dx.axpy(dtau, sh.x2);
        let mut d_aty = aty1;
        d_aty.axpy(dtau, sh.aty2);
        let mut ds = sh.res.rd.scaled(eta);
        ds.axpy(-1.0, &d_aty);
        ds.axpy(dtau, &self.c);
        let dkappa = (d_kappa - self.kappa * dtau) / self.tau;
        let dx_scaled = sh.scaling.scale_x(&dx);
        let ds_scaled = sh.scaling.scale_s(&ds);
        Some(Direction {
            dx,
            aty: d_aty,
            ds,
            dy,
            du,
            dtau,
            dkappa,
            dx_scaled,
            ds_scaled,
        })
    }
}

struct Shared<'s> {
    scaling: &'s Scaling,
    kkt: &'s Kkt,
    res: &'s Residuals,
    w_rd: &'s ConeVec,
    y2: &'s RVec,
    u2: &'s RVec,
    aty2: &'s ConeVec,
    x2: &'s ConeVec,
    den: f64,
}
