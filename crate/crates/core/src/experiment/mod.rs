//! Seeded Monte Carlo harness measuring risks and regrets.
//!
//! A run draws `ε ~ N(0, σ²I)` once per replicate, forms `y = μ + ε`, and
//! evaluates every configured method on the same draw. Regrets are reported
//! against the exact oracle risk `R*`, and per-draw excesses against the
//! oracle member give the paired estimate and the tail quantiles.

mod config;
mod report;
mod run;
mod scenario;
pub mod stats;

pub use config::{
    ladder_exponent, DesignSpec, ExperimentConfig, FamiliesSpec, FamilySpec, GridSpec,
    MeanSpec, Method, PenaltySpec, ScenarioSpec, SweepSpec,
};
pub use report::{write_csv, MethodSummary, RegretReport};
pub use run::{regret_vs_m_sweep, regret_vs_q_sweep, replicate_noise, run_experiment, run_scenario};
pub use scenario::{
    build_candidates, build_design, build_family, calibrate_scale, penalty_matrix, prepare,
    prepare_with_truth, resolve_truth, Scenario, DESIGN_STREAM,
};
