//! Optimization machinery for the community pricing program: a solver-agnostic
//! model representation, a bounded-variable simplex, SOS1 branch-and-bound,
//! polyhedral outer handling of cones and quadratics, and a text interchange
//! format for external solvers.

pub mod bnb;
pub mod error;
pub mod interchange;
pub mod model;
pub mod polyhedral;
pub mod simplex;

pub use bnb::{branch_and_bound_sos1, solve_lp_relaxation, BnbOptions, Heuristic, SolveResult, SolveStatus};
pub use error::{Result, SolverError};
pub use model::{ConeRow, ModelIr, QuadLink, Row, Sense, Sos1Set, VarId, Variable};
