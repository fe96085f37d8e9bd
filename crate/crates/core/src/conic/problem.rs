use crate::error::{Error, Result};
use crate::numerics::{RMat, RVec};

/// Coefficient matrix of a linear functional restricted to one real
/// symmetric PSD block.
#[derive(Debug, Clone)]
pub enum BlockCoef {
    /// Full symmetric matrix.
    Dense(RMat),
    /// Entries `(i, j, v)` with `i <= j`, meaning `A[i,j] = A[j,i] = v`.
    Sparse(Vec<(usize, usize, f64)>),
    /// `sum_k weights[k] * f_k f_k^T` for the columns `f_k` of `factor`.
    LowRank { factor: RMat, weights: RVec },
}

impl BlockCoef {
    pub fn sparse(entries: Vec<(usize, usize, f64)>) -> Self {
        let entries = entries
            .into_iter()
            .map(|(i, j, v)| if i <= j { (i, j, v) } else { (j, i, v) })
            .collect();
        BlockCoef::Sparse(entries)
    }

    pub fn low_rank(factor: RMat, weights: RVec) -> Self {
        BlockCoef::LowRank { factor, weights }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        let ok = match self {
            BlockCoef::Dense(m) => m.nrows() == n && m.ncols() == n,
            BlockCoef::Sparse(e) => e.iter().all(|&(i, j, _)| i < n && j < n),
            BlockCoef::LowRank { factor, weights } => {
                factor.nrows() == n && factor.ncols() == weights.len()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "coefficient does not fit a {n}x{n} block"
            )))
        }
    }

    /// `<A, X>` for symmetric `X`.
    pub fn inner(&self, x: &RMat) -> f64 {
        match self {
            BlockCoef::Dense(a) => a.dot(x),
            BlockCoef::Sparse(e) => e
                .iter()
                .map(|&(i, j, v)| if i == j { v * x[(i, i)] } else { 2.0 * v * x[(i, j)] })
                .sum(),
            BlockCoef::LowRank { factor, weights } => {
                let xf = x * factor;
                factor
                    .column_iter()
                    .zip(xf.column_iter())
                    .zip(weights.iter())
                    .map(|((f, g), w)| w * f.dot(&g))
                    .sum()
            }
        }
    }

    /// Adds `s * A` into `target`.
    pub fn add_to(&self, s: f64, target: &mut RMat) {
        match self {
            BlockCoef::Dense(a) => *target += a * s,
            BlockCoef::Sparse(e) => {
                for &(i, j, v) in e {
                    target[(i, j)] += s * v;
                    if i != j {
                        target[(j, i)] += s * v;
                    }
                }
            }
            BlockCoef::LowRank { factor, weights } => {
                let mut scaled = factor.clone();
                for (k, mut col) in scaled.column_iter_mut().enumerate() {
                    col *= s * weights[k];
                }
                target.gemm(1.0, &scaled, &factor.transpose(), 1.0);
            }
        }
    }

    pub fn to_dense(&self, n: usize) -> RMat {
        let mut m = RMat::zeros(n, n);
        self.add_to(1.0, &mut m);
        m
    }

    /// Squared Frobenius norm of the coefficient matrix.
    pub fn frobenius_sq(&self) -> f64 {
        match self {
            BlockCoef::Dense(a) => a.norm_squared(),
            BlockCoef::Sparse(e) => {
                // duplicates must be merged before squaring
                let mut merged: std::collections::BTreeMap<(usize, usize), f64> =
                    Default::default();
                for &(i, j, v) in e {
                    *merged.entry((i, j)).or_default() += v;
                }
                merged
                    .iter()
                    .map(|(&(i, j), v)| if i == j { v * v } else { 2.0 * v * v })
                    .sum()
            }
            BlockCoef::LowRank { factor, weights } => {
                // ||F D F^T||^2 = tr(D G D G) with G = F^T F
                let g = factor.transpose() * factor;
                let mut s = 0.0;
                for a in 0..g.nrows() {
                    for b in 0..g.ncols() {
                        s += weights[a] * weights[b] * g[(a, b)] * g[(a, b)];
                    }
                }
                s.max(0.0)
            }
        }
    }

    pub fn scaled(&self, s: f64) -> BlockCoef {
        match self {
            BlockCoef::Dense(a) => BlockCoef::Dense(a * s),
            BlockCoef::Sparse(e) => {
                BlockCoef::Sparse(e.iter().map(|&(i, j, v)| (i, j, v * s)).collect())
            }
            BlockCoef::LowRank { factor, weights } => BlockCoef::LowRank {
                factor: factor.clone(),
                weights: weights * s,
            },
        }
    }
}

/// `sum_b <A_b, X_b> + sum_k c_k t_k` over PSD blocks `X_b` and free scalars `t_k`.
#[derive(Debug, Clone, Default)]
pub struct LinearFunctional {
    pub blocks: Vec<(usize, BlockCoef)>,
    pub free: Vec<(usize, f64)>,
}

impl LinearFunctional {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn block(mut self, index: usize, coef: BlockCoef) -> Self {
        self.blocks.push((index, coef));
        self
    }

    pub fn free_scalar(mut self, index: usize, coef: f64) -> Self {
        self.free.push((index, coef));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty() && self.free.iter().all(|&(_, c)| c == 0.0)
    }

    pub fn evaluate(&self, blocks: &[RMat], free: &[f64]) -> f64 {
        let b: f64 = self
            .blocks
            .iter()
            .map(|(k, coef)| coef.inner(&blocks[*k]))
            .sum();
        let f: f64 = self.free.iter().map(|&(k, c)| c * free[k]).sum();
        b + f
    }

    pub fn negated(&self) -> LinearFunctional {
        LinearFunctional {
            blocks: self
                .blocks
                .iter()
                .map(|(k, c)| (*k, c.scaled(-1.0)))
                .collect(),
            free: self.free.iter().map(|&(k, c)| (k, -c)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub functional: LinearFunctional,
    pub relation: Relation,
    pub bound: f64,
}

impl Constraint {
    /// Signed violation: positive when the constraint is broken.
    pub fn violation(&self, blocks: &[RMat], free: &[f64]) -> f64 {
        let v = self.functional.evaluate(blocks, free);
        match self.relation {
            Relation::Le => (v - self.bound).max(0.0),
            Relation::Ge => (self.bound - v).max(0.0),
            Relation::Eq => (v - self.bound).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Conic program over real symmetric PSD blocks and free scalars:
///
/// ```text
/// optimize  f_0(X_1..X_p, t)
/// s.t.      f_i(X, t)  {<=, =, >=}  b_i
///           X_b  PSD
/// ```
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub psd_blocks: Vec<usize>,
    pub free_scalars: usize,
    pub sense: Sense,
    pub objective: LinearFunctional,
    pub constraints: Vec<Constraint>,
}

impl ConicProblem {
    pub fn new(psd_blocks: Vec<usize>, free_scalars: usize, sense: Sense) -> Self {
        Self {
            psd_blocks,
            free_scalars,
            sense,
            objective: LinearFunctional::new(),
            constraints: Vec::new(),
        }
    }

    pub fn with_objective(mut self, objective: LinearFunctional) -> Self {
        self.objective = objective;
        self
    }

    pub fn add_constraint(&mut self, functional: LinearFunctional, relation: Relation, bound: f64) {
        self.constraints.push(Constraint {
            functional,
            relation,
            bound,
        });
    }

    fn check_functional(&self, f: &LinearFunctional, what: &str) -> Result<()> {
        for (k, coef) in &f.blocks {
            let n = *self.psd_blocks.get(*k).ok_or_else(|| {
                Error::Contract(format!("{what} references undeclared block {k}"))
            })?;
            coef.check_dim(n)?;
        }
        for &(k, c) in &f.free {
            if k >= self.free_scalars {
                return Err(Error::Contract(format!(
                    "{what} references undeclared free scalar {k}"
                )));
            }
            if !c.is_finite() {
                return Err(Error::Contract(format!("{what} has a non-finite coefficient")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.psd_blocks.iter().any(|&n| n == 0) {
            return Err(Error::Contract("PSD block dimensions must be positive".into()));
        }
        self.check_functional(&self.objective, "objective")?;
        for (i, c) in self.constraints.iter().enumerate() {
            self.check_functional(&c.functional, &format!("constraint {i}"))?;
            if !c.bound.is_finite() {
                return Err(Error::Contract(format!("constraint {i} has a non-finite bound")));
            }
        }
        Ok(())
    }

    /// Largest violation over all constraints, each relative to `1 + |b_i|`.
    pub fn max_violation(&self, blocks: &[RMat], free: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.violation(blocks, free) / (1.0 + c.bound.abs()))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: Status,
    /// Primal value of each PSD block.
    pub blocks: Vec<RMat>,
    pub free: Vec<f64>,
    /// Primal objective in the problem's own sense.
    pub objective: f64,
    /// Dual objective in the problem's own sense.
    pub dual_objective: f64,
    /// Largest constraint violation relative to `1 + |b_i|`.
    pub max_violation: f64,
    /// `|primal - dual| / (1 + |primal| + |dual|)`.
    pub relative_gap: f64,
    /// Dual multipliers, one per constraint.
    pub duals: Vec<f64>,
    pub iterations: usize,
    /// For `Infeasible`: lower bound on the residual norm `||A(x) - b||`
    /// (row-normalized units) that every cone point must incur, certified by
    /// the dual improving ray.
    pub certificate: Option<f64>,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Epigraph reformulation of `max min_l f_l(x)`: appends a free scalar `t`,
/// the constraints `t - f_l(x) <= 0`, and sets the objective to `max t`.
/// Returns the new problem and the index of `t`.
pub fn epigraph_maxmin(
    objectives: &[LinearFunctional],
    base: ConicProblem,
) -> Result<(ConicProblem, usize)> {
    if objectives.is_empty() {
        return Err(Error::Contract("epigraph needs at least one objective".into()));
    }
    let mut p = base;
    let t = p.free_scalars;
    p.free_scalars += 1;
    for f in objectives {
        let mut g = f.negated();
        g.free.push((t, 1.0));
        p.add_constraint(g, Relation::Le, 0.0);
    }
    p.sense = Sense::Maximize;
    p.objective = LinearFunctional::new().free_scalar(t, 1.0);
    p.validate()?;
    Ok((p, t))
}
