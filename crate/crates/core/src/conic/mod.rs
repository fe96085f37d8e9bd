//! Conic (SDP) modelling layer and interior-point solver.

mod dense;
pub mod embed;
pub mod ipm;
pub mod problem;
pub mod sdpa;

pub use embed::{
    embed_checked, embed_hermitian, hermitian_dense_coef, hermitian_diag_entry_coef,
    hermitian_low_rank_coef, hermitian_trace_coef, unembed,
};
pub use ipm::{solve, solve_with, SolverSettings};
pub use problem::{
    epigraph_maxmin, BlockCoef, ConicProblem, ConicSolution, Constraint, LinearFunctional,
    Relation, Sense, Status,
};
