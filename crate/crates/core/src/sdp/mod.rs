//! Dense semidefinite programming layer: affine matrix expressions, problem
//! assembly and an interior-point solver for small problems.

mod expr;
mod ipm;
mod linmat;
mod problem;
mod solver;

pub use expr::{eval_expr, AffineMatrixExpr, Assignment, LinExpr, QuadExpr, VarId};
pub use linmat::ExprMatrix;
pub use problem::{quadratic_epigraph, SdpProblem, Variable};
pub use solver::{solve, InfeasibilityCertificate, SolveResult, SolveStatus, SolverOptions};
