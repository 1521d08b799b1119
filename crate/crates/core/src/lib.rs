//! Finite-horizon solvers for mission-wide chance-constrained optimal
//! control on tabular Markov decision processes.
//!
//! A mission-wide chance constraint bounds the probability that the *entire*
//! closed-loop trajectory stays inside a safe set, as opposed to per-stage
//! constraints on individual states. This crate provides:
//!
//! - a tabular problem model with an absorbing zero-cost fail state, plus a
//!   grid discretizer for one-dimensional Gaussian-affine systems
//!   ([`problem`], [`discretize`]);
//! - three independent evaluators for the mission-wide probability of
//!   safety of a fixed policy ([`safety`]);
//! - a classical state-space DP for affine penalties on that probability,
//!   with a commutation checker explaining exactly when such a DP is sound
//!   ([`penalty`]);
//! - an exact solver for the hard-constrained problem via dynamic
//!   programming on a state augmented with the surviving probability mass,
//!   enumerated as a reachable belief tree ([`augmented`]);
//! - brute-force oracles and a seeded rollout simulator for desk-scale
//!   verification ([`oracle`]);
//! - JSON schemas for problems, policies and reports ([`schema`]), and the
//!   packaged one-dimensional case study ([`casestudy`]).

pub mod augmented;
pub mod casestudy;
pub mod discretize;
pub mod error;
pub mod fixtures;
pub mod oracle;
pub mod penalty;
pub mod problem;
pub mod safety;
pub mod schema;

pub use augmented::{
    enumerate_reachable_beliefs, evaluate_augmented_policy, extract_markov_policy,
    solve_augmented, solve_augmented_with, terminal_penalty, AugmentedPolicy, BeliefNode,
    BeliefTree, Budget, Mode, SolveReport, Verdict,
};
pub use casestudy::{run_case_study, simulate_continuous, CaseStudyConfig, CaseStudyOutcome};
pub use discretize::{discretize, ContinuousSpec, Discretization, Dynamics, GridSpec};
pub use error::{Error, Result};
pub use oracle::{
    brute_force_constrained, enumerate_policies, exact_policy_stats, simulate_rollouts,
    OracleResult, PolicyRow, RolloutSummary, SimTarget,
};
pub use penalty::{
    check_commutation, policy_expected_cost, solve_affine_penalty, solve_penalty_dp,
    sweep_lambda, CommutationReport, PenaltySpec, PenaltyTable, SweepRow,
};
pub use problem::{CostEntry, KernelRow, Policy, Problem, ProblemData, TransitionRow};
pub use safety::{
    monte_carlo_mwps, mwps_backward, mwps_forward, propagate, McEstimate, SafetyTable,
    SurvivalMass,
};

/// Default seed for all seeded subcommands and simulators.
pub const DEFAULT_SEED: u64 = 42;
