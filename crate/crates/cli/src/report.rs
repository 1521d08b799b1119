//! Report documents and writers. `report.json` content is a pure function
//! of inputs and seed; wall-clock data goes to `meta.json` next to it.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use mwcc_core::casestudy::{CaseStudyConfig, CaseStudyOutcome};
use mwcc_core::oracle::RolloutSummary;
use mwcc_core::penalty::SweepRow;
use mwcc_core::{McEstimate, Problem, SolveReport, Verdict};

pub const SCHEMA_VERSION: u32 = 1;

pub fn write_json<T: Serialize>(dir: &Path, name: &str, doc: &T) -> mwcc_core::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> mwcc_core::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

#[derive(Serialize)]
struct Meta {
    generated_unix_ms: u128,
    elapsed_ms: u128,
}

pub fn write_meta(dir: &Path, started: Instant) -> mwcc_core::Result<()> {
    let meta = Meta {
        generated_unix_ms: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_millis(),
        elapsed_ms: started.elapsed().as_millis(),
    };
    write_json(dir, "meta.json", &meta)?;
    Ok(())
}

#[derive(Serialize)]
pub struct McDoc {
    pub estimate: f64,
    pub std_error: f64,
    pub successes: u64,
    pub rollouts: u64,
}

impl From<&McEstimate> for McDoc {
    fn from(m: &McEstimate) -> Self {
        McDoc {
            estimate: m.estimate,
            std_error: m.std_error,
            successes: m.successes,
            rollouts: m.rollouts,
        }
    }
}

#[derive(Serialize)]
pub struct RolloutDoc {
    pub rollouts: u64,
    pub mean_cost: f64,
    pub cost_std_error: f64,
    pub safety_fraction: f64,
    pub safety_std_error: f64,
}

impl From<&RolloutSummary> for RolloutDoc {
    fn from(s: &RolloutSummary) -> Self {
        RolloutDoc {
            rollouts: s.rollouts,
            mean_cost: s.mean_cost,
            cost_std_error: s.cost_std_error,
            safety_fraction: s.safety_fraction,
            safety_std_error: s.safety_std_error,
        }
    }
}

#[derive(Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub backward_mwps: f64,
    pub forward_mwps: f64,
    pub route_gap: f64,
    pub monte_carlo: McDoc,
    pub seed: u64,
}

#[derive(Serialize)]
pub struct PenaltyReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub lambda: f64,
    pub delta: f64,
    pub optimal_value: f64,
    pub policy_cost: f64,
    pub policy_mwps: f64,
    pub policy_id: String,
}

#[derive(Serialize)]
pub struct SweepRowDoc {
    pub lambda: f64,
    pub cost: f64,
    pub mwps: f64,
    pub policy_id: String,
}

impl From<&SweepRow> for SweepRowDoc {
    fn from(r: &SweepRow) -> Self {
        SweepRowDoc {
            lambda: r.lambda,
            cost: r.cost,
            mwps: r.mwps,
            policy_id: r.policy.encode(),
        }
    }
}

#[derive(Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub rows: Vec<SweepRowDoc>,
}

#[derive(Serialize)]
pub struct DecisionDoc {
    pub stage: usize,
    pub node: usize,
    pub state: String,
    pub action: String,
}

#[derive(Serialize)]
pub struct AugmentedReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub mode: String,
    pub verdict: &'static str,
    pub risk_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub internal_mwps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_loop_mwps: Option<f64>,
    pub mwps_mismatch: bool,
    pub node_counts: Vec<usize>,
    pub n_states: usize,
    pub policy: Vec<DecisionDoc>,
}

pub fn augmented_doc(p: &Problem, solve: &SolveReport) -> AugmentedReport {
    let policy = solve
        .policy
        .as_ref()
        .map(|ap| {
            ap.decision_tuples()
                .into_iter()
                .map(|(stage, node, state, action)| DecisionDoc {
                    stage,
                    node,
                    state: p.state_name(state).to_string(),
                    action: p.action_name(action).to_string(),
                })
                .collect()
        })
        .unwrap_or_default();
    AugmentedReport {
        schema_version: SCHEMA_VERSION,
        command: "solve-augmented",
        mode: solve.mode.to_string(),
        verdict: verdict_str(solve.verdict),
        risk_bound: p.risk_bound(),
        value: solve.value,
        internal_mwps: solve.internal_mwps,
        closed_loop_mwps: solve.closed_loop_mwps,
        mwps_mismatch: solve.mwps_mismatch,
        node_counts: solve.node_counts.clone(),
        n_states: solve.n_states,
        policy,
    }
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Feasible => "feasible",
        Verdict::Infeasible => "infeasible",
    }
}

#[derive(Serialize)]
pub struct OptimumDoc {
    pub policy_id: String,
    pub cost: f64,
    pub mwps: f64,
}

#[derive(Serialize)]
pub struct PenalizedOptimumDoc {
    pub lambda: f64,
    pub delta: f64,
    pub value: f64,
    pub policy_id: String,
}

#[derive(Serialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub n_policies: usize,
    pub risk_bound: f64,
    pub verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constrained_optimum: Option<OptimumDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalized_optimum: Option<PenalizedOptimumDoc>,
}

#[derive(Serialize)]
pub struct SimulateReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub seed: u64,
    pub summary: RolloutDoc,
}

#[derive(Serialize)]
pub struct CasestudyReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub variant: String,
    pub risk_bound: f64,
    pub grid_cells: usize,
    pub actions: usize,
    pub mode: String,
    pub seed: u64,
    pub verdict: &'static str,
    pub node_counts: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub internal_mwps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<CasestudyDetailDoc>,
}

#[derive(Serialize)]
pub struct CasestudyDetailDoc {
    pub discretized_mwps: f64,
    pub discretized_cost: f64,
    pub monte_carlo: RolloutDoc,
    pub agrees_3sigma: bool,
    pub unconstrained_cost: f64,
    pub unconstrained_mwps: f64,
    pub constraint_active: bool,
    /// Stage rules as state-name -> action-name maps.
    pub policy: Vec<std::collections::BTreeMap<String, String>>,
}

pub fn casestudy_doc(cfg: &CaseStudyConfig, outcome: &CaseStudyOutcome) -> CasestudyReport {
    CasestudyReport {
        schema_version: SCHEMA_VERSION,
        command: "casestudy",
        variant: outcome.variant.to_string(),
        risk_bound: cfg.risk_bound,
        grid_cells: cfg.grid.n_state_cells,
        actions: cfg.grid.n_actions,
        mode: cfg.mode.to_string(),
        seed: cfg.seed,
        verdict: verdict_str(outcome.solve.verdict),
        node_counts: outcome.solve.node_counts.clone(),
        value: outcome.solve.value,
        internal_mwps: outcome.solve.internal_mwps,
        detail: outcome.detail.as_ref().map(|d| CasestudyDetailDoc {
            discretized_mwps: d.discretized_mwps,
            discretized_cost: d.discretized_cost,
            monte_carlo: RolloutDoc::from(&d.mc),
            agrees_3sigma: d.agrees_3sigma,
            unconstrained_cost: d.unconstrained_cost,
            unconstrained_mwps: d.unconstrained_mwps,
            constraint_active: d.constraint_active,
            policy: d.policy_names.clone(),
        }),
    }
}
