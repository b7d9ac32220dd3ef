//! Lower bounds on polynomial optimal control problems via a hierarchy of
//! semidefinite (LMI) relaxations of the occupation-measure linear program.
//!
//! The pipeline: describe an optimal control problem with polynomial data
//! ([`problem::OcpProblem`]), normalize it onto the unit time interval and the
//! unit box ([`problem::canonicalize`]), assemble the order-`r` moment
//! relaxation ([`relaxation`]), and solve it with a conic interior-point
//! backend ([`sdpbackend`]). Solved relaxations yield certified lower bounds
//! on the optimal cost, approximate polynomial value functions from the dual
//! ([`dualcert`]), and uncontrollability certificates from infeasibility.
//! Closed-form minimum-time oracles and a trajectory simulator live in
//! [`oracles`].

// Link against the system BLAS/LAPACK used by the SDP backend.
extern crate openblas_src;

pub mod dualcert;
pub mod export;
pub mod momentstruct;
pub mod oracles;
pub mod polyalg;
pub mod problem;
pub mod relaxation;
pub mod sdpbackend;

pub use polyalg::{MultiIndex, Polynomial, VariableBlock};
pub use problem::{OcpProblem, ScalingRecord, SemialgebraicSet, TargetSet, TimeMode};
pub use relaxation::RelaxationSdp;
pub use sdpbackend::{SolveOutcome, SolveStatus, SolverSettings, Verdict};
