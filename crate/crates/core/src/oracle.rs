//! Independent ground truth at desk scale: exhaustive enumeration over
//! Markov policies with exact per-policy statistics from full trajectory-tree
//! expansion, and a seeded closed-loop rollout simulator. Nothing here shares
//! code with the DP recursions it is used to verify.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augmented::{AugmentedPolicy, Candidates, Mode};
use crate::error::{Error, Result};
use crate::penalty::{PenaltySpec, FEASIBILITY_TOL};
use crate::problem::{Policy, Problem};
use crate::safety::step;

/// Default cap on the number of enumerated policies.
pub const DEFAULT_POLICY_BUDGET: u128 = 10_000_000;
/// Default cap on trajectory-tree size per policy evaluation.
pub const DEFAULT_TRAJECTORY_BUDGET: u128 = 10_000_000;

/// Iterator over all Markov policies in lexicographic order: the (stage 0,
/// state 0) action index is the most significant digit, the last stage and
/// state the fastest.
pub struct PolicyEnumeration<'a> {
    problem: &'a Problem,
    digits: Vec<usize>,
    radices: Vec<usize>,
    exhausted: bool,
    count: u128,
}

impl<'a> PolicyEnumeration<'a> {
    /// Total number of policies this enumeration will yield.
    pub fn total_count(&self) -> u128 {
        self.count
    }
}

impl<'a> Iterator for PolicyEnumeration<'a> {
    type Item = Policy;

    fn next(&mut self) -> Option<Policy> {
        if self.exhausted {
            return None;
        }
        let n = self.problem.n_states();
        let rules: Vec<Vec<usize>> = self
            .digits
            .chunks(n)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .map(|(s, &d)| self.problem.admissible(s)[d])
                    .collect()
            })
            .collect();
        let policy = Policy::new(self.problem, rules).expect("enumerated policy is admissible");
        self.exhausted = true;
        for j in (0..self.digits.len()).rev() {
            self.digits[j] += 1;
            if self.digits[j] < self.radices[j] {
                self.exhausted = false;
                break;
            }
            self.digits[j] = 0;
        }
        Some(policy)
    }
}

/// All Markov policies of `p`, refused when their count exceeds `budget`.
pub fn enumerate_policies(p: &Problem, budget: u128) -> Result<PolicyEnumeration<'_>> {
    let mut count: u128 = 1;
    let mut radices = Vec::with_capacity(p.horizon() * p.n_states());
    for _ in 0..p.horizon() {
        for s in 0..p.n_states() {
            let r = p.admissible(s).len();
            count = count.saturating_mul(r as u128);
            radices.push(r);
        }
    }
    if count > budget {
        return Err(Error::BudgetExceeded {
            what: "Markov policy enumeration".into(),
            required: count,
            budget,
        });
    }
    Ok(PolicyEnumeration {
        problem: p,
        digits: vec![0; radices.len()],
        radices,
        exhausted: false,
        count,
    })
}

/// Exact (expected cost, MWPS) of a fixed policy by expanding the full
/// trajectory tree of the safe-plus-fail chain. Failed trajectories stop
/// accruing cost at the failing transition.
pub fn exact_policy_stats(p: &Problem, pi: &Policy) -> Result<(f64, f64)> {
    if pi.horizon() != p.horizon() {
        return Err(Error::PolicyLength {
            expected: p.horizon(),
            got: pi.horizon(),
        });
    }
    let nodes = ((p.n_states() + 1) as u128).saturating_pow(p.horizon() as u32);
    if nodes > DEFAULT_TRAJECTORY_BUDGET {
        return Err(Error::BudgetExceeded {
            what: "trajectory-tree expansion".into(),
            required: nodes,
            budget: DEFAULT_TRAJECTORY_BUDGET,
        });
    }
    let mut cost = 0.0;
    let mut mwps = 0.0;
    expand(p, pi, 0, p.initial_state(), 1.0, 0.0, &mut cost, &mut mwps);
    Ok((cost, mwps))
}

fn expand(
    p: &Problem,
    pi: &Policy,
    stage: usize,
    s: usize,
    prob: f64,
    acc: f64,
    cost: &mut f64,
    mwps: &mut f64,
) {
    if stage == p.horizon() {
        *cost += prob * (acc + p.terminal_cost(s));
        *mwps += prob;
        return;
    }
    let a = pi.action(stage, s);
    let acc = acc + p.stage_cost(s, a).expect("admissible");
    let row = p.row(s, a).expect("admissible");
    let mut safe = 0.0;
    for (t, &pr) in row.iter().enumerate() {
        if pr > 0.0 {
            expand(p, pi, stage + 1, t, prob * pr, acc, cost, mwps);
            safe += pr;
        }
    }
    // Fail branch: absorbed with zero further cost.
    let fail = 1.0 - safe;
    if fail > 0.0 {
        *cost += prob * fail * acc;
    }
}

/// One enumerated policy with its exact statistics.
#[derive(Debug, Clone)]
pub struct PolicyRow {
    pub policy: Policy,
    pub cost: f64,
    pub mwps: f64,
    pub feasible: bool,
}

/// Exhaustive policy table plus the constrained optimum under the problem's
/// risk bound.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub rows: Vec<PolicyRow>,
    /// Index into `rows` of the cheapest feasible policy (first in
    /// lexicographic order on ties); `None` when no policy is feasible.
    pub constrained_optimum: Option<usize>,
}

impl OracleResult {
    pub fn optimum_row(&self) -> Option<&PolicyRow> {
        self.constrained_optimum.map(|i| &self.rows[i])
    }

    /// Minimum of `cost + zeta(mwps)` over all rows, with the winning row.
    /// Returns `None` only if every row is penalized to infinity.
    pub fn penalized_optimum(&self, penalty: &PenaltySpec) -> Option<(f64, &PolicyRow)> {
        let mut best: Option<(f64, &PolicyRow)> = None;
        for row in &self.rows {
            let z = penalty.apply(row.mwps.clamp(0.0, 1.0));
            if z.is_infinite() {
                continue;
            }
            let v = row.cost + z;
            if best.is_none() || v < best.unwrap().0 {
                best = Some((v, row));
            }
        }
        best
    }

    /// CSV rows `policy,cost,mwps,feasible`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,cost,mwps,feasible\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.policy.encode(),
                r.cost,
                r.mwps,
                r.feasible
            ));
        }
        out
    }
}

/// Brute-force solution of the constrained problem: enumerate every Markov
/// policy, evaluate it exactly, and keep the cheapest one whose MWPS meets
/// `1 - risk_bound` (within the feasibility slack).
pub fn brute_force_constrained(p: &Problem, policy_budget: u128) -> Result<OracleResult> {
    let threshold = 1.0 - p.risk_bound() - FEASIBILITY_TOL;
    let mut rows = Vec::new();
    let mut best: Option<usize> = None;
    for policy in enumerate_policies(p, policy_budget)? {
        let (cost, mwps) = exact_policy_stats(p, &policy)?;
        let feasible = mwps >= threshold;
        let idx = rows.len();
        rows.push(PolicyRow {
            policy,
            cost,
            mwps,
            feasible,
        });
        if feasible && best.map_or(true, |b| cost < rows[b].cost) {
            best = Some(idx);
        }
    }
    Ok(OracleResult {
        rows,
        constrained_optimum: best,
    })
}

/// Rollout statistics with standard errors; exact zeros for deterministic
/// outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutSummary {
    pub rollouts: u64,
    pub mean_cost: f64,
    pub cost_std_error: f64,
    pub safety_fraction: f64,
    pub safety_std_error: f64,
}

/// What to roll out: a Markov policy or an augmented policy (which tracks
/// its belief node alongside the state).
#[derive(Debug, Clone, Copy)]
pub enum SimTarget<'a> {
    Markov(&'a Policy),
    Augmented(&'a AugmentedPolicy),
}

/// Simulates `n` seeded closed-loop trajectories of `p` under the target
/// policy. Rollout `i` uses stream `i` of a generator seeded with `seed`, so
/// the summary is identical for fixed (seed, n) under any schedule.
pub fn simulate_rollouts(
    p: &Problem,
    target: SimTarget<'_>,
    n: u64,
    seed: u64,
) -> Result<RolloutSummary> {
    if n == 0 {
        return Err(Error::InvalidArgument("rollout count must be >= 1".into()));
    }
    if let SimTarget::Markov(pi) = target {
        if pi.horizon() != p.horizon() {
            return Err(Error::PolicyLength {
                expected: p.horizon(),
                got: pi.horizon(),
            });
        }
    }
    let mut costs = Vec::with_capacity(n as usize);
    let mut safe_count = 0u64;
    for i in 0..n {
        let (cost, safe) = rollout(p, target, seed, i)?;
        costs.push(cost);
        safe_count += safe as u64;
    }
    let nf = n as f64;
    let mean_cost = costs.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        costs.iter().map(|c| (c - mean_cost).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    let safety_fraction = safe_count as f64 / nf;
    Ok(RolloutSummary {
        rollouts: n,
        mean_cost,
        cost_std_error: (var / nf).sqrt(),
        safety_fraction,
        safety_std_error: (safety_fraction * (1.0 - safety_fraction) / nf).sqrt(),
    })
}

fn rollout(p: &Problem, target: SimTarget<'_>, seed: u64, i: u64) -> Result<(f64, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    let mut s = p.initial_state();
    let mut cost = 0.0;
    let mut node = match target {
        SimTarget::Augmented(ap) => Some(ap.tree.root()),
        SimTarget::Markov(_) => None,
    };
    for k in 0..p.horizon() {
        let a = match target {
            SimTarget::Markov(pi) => pi.action(k, s),
            SimTarget::Augmented(ap) => {
                let node_id = node.expect("augmented rollout tracks a node");
                ap.decisions[k]
                    .get(&node_id)
                    .and_then(|d| d.action_at(s))
                    .ok_or_else(|| Error::MissingAction {
                        stage: k,
                        state: p.state_name(s).to_string(),
                    })?
            }
        };
        cost += p.stage_cost(s, a)?;
        if let SimTarget::Augmented(ap) = target {
            let node_id = node.expect("augmented rollout tracks a node");
            let tree_node = &ap.tree.nodes[node_id];
            let child = match ap.mode {
                Mode::Joint => {
                    let cand = ap.decisions[k][&node_id]
                        .rule_candidate
                        .expect("joint decision");
                    tree_node.children[cand]
                }
                Mode::Literal => {
                    let cands = match &tree_node.candidates {
                        Candidates::Actions(list) => list,
                        Candidates::Rules { .. } => unreachable!("literal tree stores actions"),
                    };
                    let pos = cands
                        .iter()
                        .position(|&x| x == a)
                        .expect("chosen action is a candidate");
                    tree_node.children[pos]
                }
            };
            node = Some(child);
        }
        match step(p, &mut rng, s, a) {
            Some(t) => s = t,
            None => return Ok((cost, false)),
        }
    }
    cost += p.terminal_cost(s);
    Ok((cost, true))
}
