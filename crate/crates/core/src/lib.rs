//! Q-aggregation of ordered linear smoothers.
//!
//! Given a family of smoothers `A_1, …, A_M` (for instance ridge or
//! Tikhonov fits over a grid of tuning parameters), the aggregate
//! `Σ θ̂_j A_j y` picks simplex weights minimizing Mallows' Cp of the
//! combination plus a penalty that favors the vertices. The crate provides
//!
//! - [`spectral`]: Tikhonov families in a shared eigenbasis,
//! - [`smoother`]: ordered-smoother validation, exact risks and the oracle,
//! - [`aggregate`]: the convex program, its KKT certificate and baselines,
//! - [`experiment`]: a seeded Monte Carlo harness measuring regrets.

pub mod aggregate;
pub mod error;
pub mod experiment;
pub mod fits;
pub mod linalg;
pub mod smoother;
pub mod spectral;

pub use aggregate::{
    certify_kkt, cp_criterion, exponential_weights, q_objective, q_objective_penalized,
    deterministic_inequality, select_cp, select_gcv, solve_q_aggregation, GcvSelection, QObjective, SimplexWeights,
    SolveReport, SolverOptions,
};
pub use error::{Error, Result};
pub use fits::{CandidateSet, Fits};
pub use smoother::{check_ordered, exact_risk, oracle_index, pair_distance, FamilyUnion, GroundTruth, OrderedReport};
pub use spectral::{
    apply_member, build_tikhonov_family, degrees_of_freedom, recover_coefficients, DesignProblem,
    SpectralFamily,
};
