//! Concave quadratic programming: model, sparse linear algebra, ADMM solver
//! and independent optimality checks.

mod admm;
mod kkt;
mod ldl;
mod program;
mod sparse;

pub use admm::{solve_qp, solve_qp_from, QpSolution, SolveStatus, SolverSettings, TraceRecord};
pub use kkt::{check_kkt, check_kkt_with_duals, primal_residual, Duals, KktReport};
pub use ldl::{minimum_degree_order, LdlFactor};
pub use program::{ConstraintBlock, LinearExpr, QpBuilder, QuadraticProgram, RowTag};
pub use sparse::{inf_norm, CsrMatrix};
