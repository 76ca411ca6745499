//! Numerical toolkit for control barrier value functions (CB-VFs).
//!
//! The crate computes anti-discounted avoid value functions on rectangular
//! grids by explicit level-set marching of the obstacle problem
//! `max{d_T v - H_a(x, v, grad v), v - g} = 0`, checks candidate barrier
//! functions through the time-invariance characterization, and synthesizes
//! new barriers by pointwise maximum and horizon limits.

pub mod classk;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod rng;
pub mod solver;
pub mod synth;
pub mod verify;

pub use classk::{ClassK, ClassKSpec, KappaResult};
pub use controller::{
    sample_hold_rollout, theta_log_csv, GradientMode, GreedyController, SampleHoldController,
    ThetaLogEntry,
};
pub use dynamics::{
    builtin_system, flow, rk4_step, ControlSet, ControlSignal, System, Trajectory,
};
pub use error::{Error, Result};
pub use grid::{discretize, interpolate, upwind_gradients, Grid, ScalarField, ValueSeries};
pub use solver::{
    cbvf_oracle, ham_alpha, ham_max, solve_avoid, solve_avoid_traced, solve_cbvf,
    solve_cbvf_traced, transform_check, OracleParams, SolveTrace, SolverParams,
};
pub use synth::{
    limit_cbvf, limit_history_csv, pointwise_max, sequence_limit_check, LimitOutcome, LimitParams,
};
pub use verify::{
    check_avoid_time_invariance, check_barrier_guarantee, check_classical_cbf,
    check_time_invariance, clamp_nonneg, default_invariance_tol, verify_viscosity_cbf,
    BarrierParams, ControllerKind, InitialStates, Report, Verdict, Witness,
};
