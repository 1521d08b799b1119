//! `mwcc` — solvers and verifiers for mission-wide chance-constrained
//! optimal control on tabular problems.
//!
//! Every subcommand reads a JSON problem file (tabular, or continuous with a
//! grid block), writes a deterministic `report.json` plus CSV tables into the
//! output directory, and keeps wall-clock metadata in a separate `meta.json`
//! so repeated runs with the same seed are byte-identical. Exit codes:
//! 0 success, 2 infeasible verdict, 1 error.

mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use mwcc_core::casestudy::{CaseStudyConfig, CaseStudyVariant};
use mwcc_core::oracle::{SimTarget, DEFAULT_POLICY_BUDGET};
use mwcc_core::penalty::sweep_to_csv;
use mwcc_core::schema::{load_policy, load_problem, policy_to_json};
use mwcc_core::{
    brute_force_constrained, monte_carlo_mwps, mwps_backward, mwps_forward, policy_expected_cost,
    simulate_rollouts, solve_affine_penalty, solve_augmented_with, sweep_lambda, Budget,
    GridSpec, Mode, PenaltySpec, Problem, Verdict, DEFAULT_SEED,
};

#[derive(Parser)]
#[command(name = "mwcc", version, about = "Mission-wide chance-constrained optimal control")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory (created if absent).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate a fixed policy's mission-wide probability of safety by the
    /// backward recursion, forward mass propagation and Monte Carlo.
    EvalMwps {
        problem: PathBuf,
        /// Policy file: {"rules": [{state: action, ...}, ...]}.
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        rollouts: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Solve the affine-penalty problem by state-space DP.
    SolvePenalty {
        problem: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        /// Defaults to -lambda, making -lambda a price per unit of failure
        /// probability.
        #[arg(long, allow_hyphen_values = true)]
        delta: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Solve the affine-penalty problem across a grid of lambdas and tabulate
    /// the cost/safety frontier.
    SweepLambda {
        problem: PathBuf,
        /// Comma-separated lambda values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        lambdas: Vec<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Solve the hard chance-constrained problem exactly on the augmented
    /// state (state, surviving mass).
    SolveAugmented {
        problem: PathBuf,
        /// Propagation semantics: joint | literal.
        #[arg(long, default_value = "joint")]
        mode: String,
        /// Override the problem's risk bound.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Maximum decision rules per belief node in joint mode.
        #[arg(long)]
        budget: Option<u128>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Brute-force enumeration of every Markov policy with exact statistics.
    Oracle {
        problem: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Maximum number of enumerated policies.
        #[arg(long)]
        budget: Option<u128>,
        /// Also report the penalized optimum for this lambda (delta defaults
        /// to -lambda).
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        delta: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Seeded closed-loop rollouts of a fixed policy.
    Simulate {
        problem: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        rollouts: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Packaged one-dimensional benchmark: discretize, solve, evaluate the
    /// closed loop and cross-check with continuous Monte Carlo.
    Casestudy {
        /// Risk bound.
        #[arg(long, default_value_t = 0.1)]
        risk: f64,
        /// Scenario: default | risk-active.
        #[arg(long, default_value = "default")]
        variant: String,
        #[arg(long, default_value_t = 401)]
        grid_cells: usize,
        #[arg(long, default_value_t = 21)]
        actions: usize,
        #[arg(long, default_value_t = 100_000)]
        rollouts: u64,
        /// Propagation semantics: joint | literal.
        #[arg(long, default_value = "literal")]
        mode: String,
        #[arg(long)]
        budget: Option<u128>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error[{}]: {err}", err.code());
            ExitCode::from(1)
        }
    }
}

fn parse_mode(s: &str) -> mwcc_core::Result<Mode> {
    s.parse()
        .map_err(mwcc_core::Error::InvalidArgument)
}

fn parse_variant(s: &str) -> mwcc_core::Result<CaseStudyVariant> {
    s.parse()
        .map_err(mwcc_core::Error::InvalidArgument)
}

fn with_epsilon(p: &Problem, epsilon: Option<f64>) -> mwcc_core::Result<Problem> {
    match epsilon {
        Some(eps) => p.with_risk_bound(eps),
        None => Ok(p.clone()),
    }
}

fn run(cmd: Cmd) -> mwcc_core::Result<u8> {
    let started = Instant::now();
    match cmd {
        Cmd::EvalMwps {
            problem,
            policy,
            rollouts,
            seed,
            out,
        } => {
            let loaded = load_problem(&problem)?;
            let p = loaded.problem();
            let pi = load_policy(p, &policy)?;
            let table = mwps_backward(p, &pi)?;
            let backward = table.mwps(p);
            let forward = mwps_forward(p, &pi)?;
            let mc = monte_carlo_mwps(p, &pi, rollouts, seed)?;
            let doc = report::EvalReport {
                schema_version: report::SCHEMA_VERSION,
                command: "eval-mwps",
                backward_mwps: backward,
                forward_mwps: forward,
                route_gap: (backward - forward).abs(),
                monte_carlo: report::McDoc::from(&mc),
                seed,
            };
            report::write_json(&out.out, "report.json", &doc)?;
            report::write_text(&out.out, "value_table.csv", &table.to_csv(p))?;
            report::write_json(&out.out, "value_table.json", &table.to_json_rows(p))?;
            report::write_meta(&out.out, started)?;
            println!(
                "eval-mwps: backward {backward:.12}, forward {forward:.12}, \
                 mc {:.6} +/- {:.6}",
                mc.estimate, mc.std_error
            );
            Ok(0)
        }
        Cmd::SolvePenalty {
            problem,
            lambda,
            delta,
            out,
        } => {
            let loaded = load_problem(&problem)?;
            let p = loaded.problem();
            let delta = delta.unwrap_or(-lambda);
            let (policy, table) = solve_affine_penalty(p, lambda, delta)?;
            let cost = policy_expected_cost(p, &policy)?;
            let mwps = mwps_backward(p, &policy)?.mwps(p);
            let doc = report::PenaltyReport {
                schema_version: report::SCHEMA_VERSION,
                command: "solve-penalty",
                lambda,
                delta,
                optimal_value: table.optimal_value(p),
                policy_cost: cost,
                policy_mwps: mwps,
                policy_id: policy.encode(),
            };
            report::write_json(&out.out, "report.json", &doc)?;
            report::write_text(&out.out, "policy.json", &policy_to_json(p, &policy)?)?;
            report::write_meta(&out.out, started)?;
            println!(
                "solve-penalty: value {:.12}, policy cost {cost:.12}, mwps {mwps:.12}",
                table.optimal_value(p)
            );
            Ok(0)
        }
        Cmd::SweepLambda {
            problem,
            lambdas,
            out,
        } => {
            let loaded = load_problem(&problem)?;
            let p = loaded.problem();
            let rows = sweep_lambda(p, &lambdas)?;
            let doc = report::SweepReport {
                schema_version: report::SCHEMA_VERSION,
                command: "sweep-lambda",
                rows: rows.iter().map(report::SweepRowDoc::from).collect(),
            };
            report::write_json(&out.out, "report.json", &doc)?;
            report::write_text(&out.out, "sweep.csv", &sweep_to_csv(&rows))?;
            report::write_meta(&out.out, started)?;
            for r in &rows {
                println!(
                    "lambda {:>8}: cost {:.6}, mwps {:.6}, policy {}",
                    r.lambda,
                    r.cost,
                    r.mwps,
                    r.policy.encode()
                );
            }
            Ok(0)
        }
        Cmd::SolveAugmented {
            problem,
            mode,
            epsilon,
            budget,
            out,
        } => {
            let loaded = load_problem(&problem)?;
            let p = with_epsilon(loaded.problem(), epsilon)?;
            let mode = parse_mode(&mode)?;
            let budget = Budget {
                max_rules_per_node: budget.unwrap_or(Budget::default().max_rules_per_node),
            };
            let solve = solve_augmented_with(&p, mode, &budget)?;
            let doc = report::augmented_doc(&p, &solve);
            report::write_json(&out.out, "report.json", &doc)?;
            report::write_meta(&out.out, started)?;
            match solve.verdict {
                Verdict::Feasible => {
                    println!(
                        "solve-augmented[{mode}]: value {:.12}, internal mwps {:.12}, \
                         closed-loop mwps {:.12}{}",
                        solve.value.unwrap(),
                        solve.internal_mwps.unwrap(),
                        solve.closed_loop_mwps.unwrap(),
                        if solve.mwps_mismatch {
                            " (internal/closed-loop mismatch)"
                        } else {
                            ""
                        }
                    );
                    Ok(0)
                }
                Verdict::Infeasible => {
                    println!(
                        "solve-augmented[{mode}]: infeasible at risk bound {}",
                        p.risk_bound()
                    );
                    Ok(2)
                }
            }
        }
        Cmd::Oracle {
            problem,
            epsilon,
            budget,
            lambda,
            delta,
            out,
        } => {
            let loaded = load_problem(&problem)?;
            let p = with_epsilon(loaded.problem(), epsilon)?;
            let oracle =
                brute_force_constrained(&p, budget.unwrap_or(DEFAULT_POLICY_BUDGET))?;
            let penalized = lambda.map(|l| {
                let penalty = PenaltySpec::Affine {
                    lambda: l,
                    delta: delta.unwrap_or(-l),
                };
                let (value, row) = oracle
                    .penalized_optimum(&penalty)
                    .expect("affine penalty is finite somewhere");
                report::PenalizedOptimumDoc {
                    lambda: l,
                    delta: delta.unwrap_or(-l),
                    value,
                    policy_id: row.policy.encode(),
                }
            });
            let doc = report::OracleReport {
                schema_version: report::SCHEMA_VERSION,
                command: "oracle",
                n_policies: oracle.rows.len(),
                risk_bound: p.risk_bound(),
                verdict: if oracle.constrained_optimum.is_some() {
                    "feasible"
                } else {
                    "infeasible"
                },
                constrained_optimum: oracle.optimum_row().map(|row| report::OptimumDoc {
                    policy_id: row.policy.encode(),
                    cost: row.cost,
                    mwps: row.mwps,
                }),
                penalized_optimum: penalized,
            };
            report::write_json(&out.out, "report.json", &doc)?;
            report::write_text(&out.out, "oracle.csv", &oracle.to_csv())?;
            report::write_meta(&out.out, started)?;
            match oracle.optimum_row() {
                Some(row) => {
                    println!(
                        "oracle: {} policies, optimum {} cost {:.12} mwps {:.12}",
                        oracle.rows.len(),
                        row.policy.encode(),
                        row.cost,
                        row.mwps
                    );
                    Ok(0)
                }
                None => {
                    println!(
                        "oracle: {} policies, infeasible at risk bound {}",
                        oracle.rows.len(),
                        p.risk_bound()
                    );
                    Ok(2)
                }
            }
        }
        Cmd::Simulate {
            problem,
            policy,
            rollouts,
            seed,
            out,
        } => {
            let loaded = load_problem(&problem)?;
            let p = loaded.problem();
            let pi = load_policy(p, &policy)?;
            let summary = simulate_rollouts(p, SimTarget::Markov(&pi), rollouts, seed)?;
            let doc = report::SimulateReport {
                schema_version: report::SCHEMA_VERSION,
                command: "simulate",
                seed,
                summary: report::RolloutDoc::from(&summary),
            };
            report::write_json(&out.out, "report.json", &doc)?;
            report::write_meta(&out.out, started)?;
            println!(
                "simulate: {} rollouts, mean cost {:.6} +/- {:.6}, safety {:.6} +/- {:.6}",
                summary.rollouts,
                summary.mean_cost,
                summary.cost_std_error,
                summary.safety_fraction,
                summary.safety_std_error
            );
            Ok(0)
        }
        Cmd::Casestudy {
            risk,
            variant,
            grid_cells,
            actions,
            rollouts,
            mode,
            budget,
            seed,
            out,
        } => {
            let cfg = CaseStudyConfig {
                variant: parse_variant(&variant)?,
                risk_bound: risk,
                grid: GridSpec {
                    n_state_cells: grid_cells,
                    n_actions: actions,
                },
                rollouts,
                seed,
                mode: parse_mode(&mode)?,
                budget: Budget {
                    max_rules_per_node: budget.unwrap_or(Budget::default().max_rules_per_node),
                },
            };
            let outcome = mwcc_core::run_case_study(&cfg)?;
            let doc = report::casestudy_doc(&cfg, &outcome);
            report::write_json(&out.out, "report.json", &doc)?;
            report::write_meta(&out.out, started)?;
            match &outcome.detail {
                Some(detail) => {
                    println!(
                        "casestudy[{}]: value {:.9}, discretized mwps {:.9}, mc {:.6} +/- {:.6} \
                         ({}), constraint {}",
                        outcome.variant,
                        outcome.solve.value.unwrap(),
                        detail.discretized_mwps,
                        detail.mc.safety_fraction,
                        detail.mc.safety_std_error,
                        if detail.agrees_3sigma {
                            "3-sigma agreement"
                        } else {
                            "OUTSIDE 3 sigma"
                        },
                        if detail.constraint_active {
                            "active"
                        } else {
                            "inactive"
                        }
                    );
                    Ok(0)
                }
                None => {
                    println!("casestudy[{}]: infeasible at risk bound {risk}", outcome.variant);
                    Ok(2)
                }
            }
        }
    }
}
