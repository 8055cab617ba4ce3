//! Solver library for the two-membranes problem with compatible convex and
//! concave fully nonlinear operators (`G(X) = -F(-X)`), specialized to the
//! Pucci extremal operators and finite frame-diagonal Bellman families.
//!
//! The constrained pair is produced by driving a smooth penalty coupling to
//! zero scale over a geometric continuation schedule; each penalized system
//! is solved with monotone wide-stencil finite differences. Companion
//! modules certify the discrete system residuals ([`verify`]) and measure
//! the quantities the regularity theory bounds ([`diagnostics`]).

pub mod diagnostics;
pub mod error;
pub mod field_io;
pub mod grid;
pub mod penalty;
pub mod pucci;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{
    build_domain, build_domain_with_width, discrete_hessian, discrete_operator,
    second_difference, Domain, Field, Frame, FrameSet, NodeClass, Shape, DEFAULT_STENCIL_WIDTH,
};
pub use penalty::{beta_eps_eval, beta_eps_prime, beta_eval, PenaltyConfig, PenaltyProfile};
pub use pucci::{
    eigen_sym, operator_eval, pucci_minus, pucci_plus, EigenData, OperatorKind, OperatorSpec,
    PucciParams, SymMatrix,
};
pub use solver::{
    penalized_map, solve_dirichlet, solve_penalized, solve_two_membranes, CouplingMode,
    ProblemSpec, Relaxation, SolutionPair, SolveReport, SolverConfig, StageCount, Sweep,
};
pub use verify::{
    analytic_library, analytic_library_with, barrier_check, nonuniqueness_demo, AnalyticCase,
    BarrierCertificate, ContactRegion, NonuniquenessDemo, ResidualReport,
};
