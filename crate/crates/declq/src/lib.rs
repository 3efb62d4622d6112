//! Decentralized linear-quadratic gain synthesis for discrete-time systems.
//!
//! Two controllers act on a shared linear plant `x(k+1) = A x(k) + B u(k)`,
//! each feeding back only its own slice of the state (or its own output
//! channel `y_i = H_i x_i`), so the joint gain is constrained to be
//! block-diagonal. The library computes a gain schedule `K_1(k), K_2(k)`
//! minimizing the finite-horizon quadratic cost by
//!
//! 1. propagating the second-moment blocks `X_11, X_12, X_22` of the
//!    closed-loop state forward in time,
//! 2. running the value recursion `P(k+1) = Q + K'RK + (A+BK)'P(k)(A+BK)`
//!    forward from the seed `P(0) = delta*I`,
//! 3. vectorizing the coupled stationarity equations into a symmetric
//!    positive-semidefinite linear system and driving its residual to zero
//!    with a damped-Newton inner iteration, warm-started across time steps.
//!
//! A classical centralized finite-horizon LQR ([`baseline`]) provides an
//! optimality lower bound and an oracle for decoupled problems.

pub mod baseline;
pub mod model;
pub mod moments;
pub mod solver;
pub mod stationarity;

pub use baseline::{centralized_lqr, compare, CentralizedSolution, ComparisonReport};
pub use model::{
    assemble_gain, validate_problem, CostWeights, GainPair, OutputMap, PartitionedSystem,
    ValidationReport,
};
pub use moments::{
    assemble_upsilon_m, propagate_moments, riccati_forward_step, seed_moments, MomentState,
    RiccatiState, UpsilonM,
};
pub use solver::{
    eval_cost, g_recursion, inner_solve, solve, FeedbackMode, SolveReport, SolverConfig,
};
pub use stationarity::{
    build_system, kron, residual_gradient, residual_hessian, residual_norm, residual_value,
    unvec, unvec_gains, vec, GainDims, StationaritySystem,
};

/// Errors shared across the solver pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inputs whose shapes do not conform to the declared partition.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A problem instance rejected by [`validate_problem`].
    #[error("validation failed: {0}")]
    Validation(String),
    /// Numerical breakdown (failed factorization, inconsistent cross-check).
    #[error("numerical conditioning: {0}")]
    Numerical(String),
}
