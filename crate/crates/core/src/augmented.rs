//! Exact DP for the hard mission-wide chance constraint on the augmented
//! state (current state, surviving probability mass), with the 0/infinity
//! penalty applied to the terminal surviving mass.
//!
//! From a fixed initial state the surviving mass evolves deterministically
//! given the applied decisions, so the reachable augmented states form a
//! finite tree of belief nodes per stage. Two propagation semantics are
//! implemented for how a stage decision drives that mass:
//!
//! - **joint**: a node's decision is a full rule over the support of its
//!   mass. The node path is then deterministic, branches correspond exactly
//!   to Markov policies, and the solver is exact against brute-force policy
//!   enumeration. Rule count per node is `prod_s |A(s)|` over the support,
//!   gated by a budget.
//! - **literal**: a node spawns one child per single action, shared across
//!   the support, and values are minimized per (node, state). The policy may
//!   then take different actions at different states while each child's mass
//!   was propagated with one shared action, so the solver's internal safety
//!   accounting can drift from the closed-loop truth; the report flags the
//!   discrepancy. This mirrors reading the mass dynamics with one scalar
//!   action argument.
//!
//! Infeasibility is `f64::INFINITY` and propagates through minima and
//! through weighted sums with positive weight; zero-weight terms are
//! skipped. In joint mode the terminal penalty is applied once per branch
//! (node level), which also rules out branches whose mass dies out entirely.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::penalty::FEASIBILITY_TOL;
use crate::problem::{Policy, Problem};
use crate::safety::{propagate, SurvivalMass};

/// Tolerance for merging numerically identical sibling beliefs.
pub const BELIEF_DEDUP_TOL: f64 = 1e-12;

/// Propagation semantics for the mass dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Joint,
    Literal,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "joint" => Ok(Mode::Joint),
            "literal" => Ok(Mode::Literal),
            other => Err(format!("unknown mode `{other}` (expected joint|literal)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Joint => "joint",
            Mode::Literal => "literal",
        })
    }
}

/// Enumeration budget: joint mode refuses a node whose decision-rule count
/// exceeds `max_rules_per_node`.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub max_rules_per_node: u128,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_rules_per_node: 1_000_000,
        }
    }
}

/// Candidate decisions available at a belief node.
#[derive(Debug, Clone)]
pub enum Candidates {
    /// Joint mode: decision rules over the support, indexed 0..count in
    /// mixed-radix order (first support state most significant, digits in
    /// admissible-list order).
    Rules { count: u64 },
    /// Literal mode: single actions admissible at every supported state.
    Actions(Vec<usize>),
}

/// One reachable belief. The root belief is the unit point mass at the
/// initial state; every child belief equals `propagate` of its parent belief
/// under the generating decision.
#[derive(Debug, Clone)]
pub struct BeliefNode {
    pub id: usize,
    pub stage: usize,
    pub belief: SurvivalMass,
    /// States with strictly positive mass, ascending.
    pub support: Vec<usize>,
    pub parent: Option<usize>,
    /// (state, action) pairs of the decision that generated this node.
    pub parent_decision: Option<Vec<(usize, usize)>>,
    pub candidates: Candidates,
    /// Child node id per candidate index (duplicates collapse onto the same
    /// child when two candidates yield numerically identical beliefs).
    pub children: Vec<usize>,
}

/// Reachable beliefs by stage; node ids index `nodes`.
#[derive(Debug, Clone)]
pub struct BeliefTree {
    pub mode: Mode,
    pub nodes: Vec<BeliefNode>,
    pub stages: Vec<Vec<usize>>,
}

impl BeliefTree {
    pub fn root(&self) -> usize {
        self.stages[0][0]
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.len()).collect()
    }
}

/// The hard terminal penalty on surviving mass: 0 iff the mass meets
/// `1 - epsilon` (non-strict, with absolute slack), infinity otherwise.
pub fn terminal_penalty(total_mass: f64, epsilon: f64) -> f64 {
    debug_assert!(
        (-FEASIBILITY_TOL..=1.0 + 1e-9).contains(&total_mass),
        "total mass {total_mass} outside [0, 1]"
    );
    if total_mass >= 1.0 - epsilon - FEASIBILITY_TOL {
        0.0
    } else {
        f64::INFINITY
    }
}

fn beliefs_match(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .all(|(&x, &y)| (x == 0.0) == (y == 0.0) && (x - y).abs() <= BELIEF_DEDUP_TOL)
}

fn advance_digits(digits: &mut [usize], radices: &[usize]) {
    for j in (0..digits.len()).rev() {
        digits[j] += 1;
        if digits[j] < radices[j] {
            return;
        }
        digits[j] = 0;
    }
}

/// Decodes joint-rule candidate `index` into (state, action) pairs.
fn decode_rule(p: &Problem, support: &[usize], index: u64) -> Vec<(usize, usize)> {
    let mut rem = index;
    let mut digits = vec![0usize; support.len()];
    for j in (0..support.len()).rev() {
        let radix = p.admissible(support[j]).len() as u64;
        digits[j] = (rem % radix) as usize;
        rem /= radix;
    }
    support
        .iter()
        .zip(&digits)
        .map(|(&s, &d)| (s, p.admissible(s)[d]))
        .collect()
}

/// Builds the reachable belief tree from the initial point mass: in joint
/// mode every decision rule over a node's support spawns a child, in literal
/// mode every shared single action does. Sibling beliefs closer than the
/// dedup tolerance collapse into one node.
pub fn enumerate_reachable_beliefs(p: &Problem, mode: Mode, budget: &Budget) -> Result<BeliefTree> {
    let root = BeliefNode {
        id: 0,
        stage: 0,
        belief: SurvivalMass::initial(p),
        support: vec![p.initial_state()],
        parent: None,
        parent_decision: None,
        candidates: Candidates::Rules { count: 0 },
        children: Vec::new(),
    };
    let mut nodes = vec![root];
    let mut stages = vec![vec![0usize]];

    for k in 0..p.horizon() {
        let stage_ids = stages[k].clone();
        let mut next_stage = Vec::new();
        for (pos, &id) in stage_ids.iter().enumerate() {
            let belief = nodes[id].belief.clone();
            let support = nodes[id].support.clone();

            // Candidate decisions and their dense per-state rules.
            enum Plan {
                Joint { radices: Vec<usize>, count: u64 },
                Literal(Vec<usize>),
            }
            let plan = match mode {
                Mode::Joint => {
                    let radices: Vec<usize> =
                        support.iter().map(|&s| p.admissible(s).len()).collect();
                    let mut count: u128 = 1;
                    for &r in &radices {
                        count = count.saturating_mul(r as u128);
                    }
                    if count > budget.max_rules_per_node {
                        return Err(Error::BudgetExceeded {
                            what: format!(
                                "joint decision rules at belief node {pos} of stage {k} \
                                 (support size {})",
                                support.len()
                            ),
                            required: count,
                            budget: budget.max_rules_per_node,
                        });
                    }
                    Plan::Joint {
                        radices,
                        count: count as u64,
                    }
                }
                Mode::Literal => Plan::Literal(
                    (0..p.n_actions())
                        .filter(|a| support.iter().all(|&s| p.admissible(s).contains(a)))
                        .collect(),
                ),
            };

            let mut children = Vec::new();
            let candidates = match plan {
                Plan::Joint { radices, count } => {
                    let mut digits = vec![0usize; support.len()];
                    for _ in 0..count {
                        let pairs: Vec<(usize, usize)> = support
                            .iter()
                            .zip(&digits)
                            .map(|(&s, &d)| (s, p.admissible(s)[d]))
                            .collect();
                        let child = emit_child(
                            p,
                            &mut nodes,
                            &mut next_stage,
                            &children,
                            id,
                            k + 1,
                            &belief,
                            pairs,
                        )?;
                        children.push(child);
                        advance_digits(&mut digits, &radices);
                    }
                    Candidates::Rules { count }
                }
                Plan::Literal(actions) => {
                    for &a in &actions {
                        let pairs: Vec<(usize, usize)> =
                            support.iter().map(|&s| (s, a)).collect();
                        let child = emit_child(
                            p,
                            &mut nodes,
                            &mut next_stage,
                            &children,
                            id,
                            k + 1,
                            &belief,
                            pairs,
                        )?;
                        children.push(child);
                    }
                    Candidates::Actions(actions)
                }
            };
            nodes[id].candidates = candidates;
            nodes[id].children = children;
        }
        stages.push(next_stage);
    }

    Ok(BeliefTree {
        mode,
        nodes,
        stages,
    })
}

/// Propagates one candidate decision and returns the child node id, reusing
/// a sibling whose belief matches within the dedup tolerance.
#[allow(clippy::too_many_arguments)]
fn emit_child(
    p: &Problem,
    nodes: &mut Vec<BeliefNode>,
    next_stage: &mut Vec<usize>,
    siblings: &[usize],
    parent: usize,
    stage: usize,
    parent_belief: &SurvivalMass,
    rule_pairs: Vec<(usize, usize)>,
) -> Result<usize> {
    let mut dense: Vec<Option<usize>> = vec![None; p.n_states()];
    for &(s, a) in &rule_pairs {
        dense[s] = Some(a);
    }
    let child_belief = propagate(p, parent_belief, &dense)?;
    for &existing in siblings {
        if beliefs_match(nodes[existing].belief.mass(), child_belief.mass()) {
            return Ok(existing);
        }
    }
    let child_id = nodes.len();
    let support = child_belief.support();
    nodes.push(BeliefNode {
        id: child_id,
        stage,
        belief: child_belief,
        support,
        parent: Some(parent),
        parent_decision: Some(rule_pairs),
        candidates: Candidates::Rules { count: 0 },
        children: Vec::new(),
    });
    next_stage.push(child_id);
    Ok(child_id)
}

/// Feasible / infeasible verdict of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Feasible,
    Infeasible,
}

/// Chosen decision at one belief node: actions per supported state, plus the
/// candidate index of the generating rule in joint mode.
#[derive(Debug, Clone)]
pub struct NodeDecision {
    pub actions: Vec<(usize, usize)>,
    pub rule_candidate: Option<usize>,
}

impl NodeDecision {
    pub fn action_at(&self, s: usize) -> Option<usize> {
        self.actions
            .iter()
            .find(|&&(state, _)| state == s)
            .map(|&(_, a)| a)
    }
}

/// Optimal augmented policy: per stage, the chosen decision at every belief
/// node that admits a feasible continuation, together with the tree itself.
#[derive(Debug, Clone)]
pub struct AugmentedPolicy {
    pub mode: Mode,
    pub tree: BeliefTree,
    pub decisions: Vec<BTreeMap<usize, NodeDecision>>,
}

impl AugmentedPolicy {
    /// Flat (stage, node id, state, action) tuples, sorted.
    pub fn decision_tuples(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut out = Vec::new();
        for (k, stage) in self.decisions.iter().enumerate() {
            for (&node, dec) in stage {
                for &(s, a) in &dec.actions {
                    out.push((k, node, s, a));
                }
            }
        }
        out
    }
}

/// Solve outcome. `value`, the MWPS fields and `policy` are absent exactly
/// when the verdict is infeasible.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub mode: Mode,
    pub verdict: Verdict,
    /// Optimal value of the penalized objective from the initial state.
    pub value: Option<f64>,
    /// The solver's own safety accounting: terminal surviving mass of the
    /// optimal branch (joint), or the survival-weighted average of terminal
    /// masses over the branches the policy actually follows (literal).
    pub internal_mwps: Option<f64>,
    /// Ground truth from the exact closed-loop sweep.
    pub closed_loop_mwps: Option<f64>,
    /// True when internal and closed-loop MWPS differ by more than 1e-9.
    pub mwps_mismatch: bool,
    /// Belief nodes per stage.
    pub node_counts: Vec<usize>,
    pub n_states: usize,
    pub policy: Option<AugmentedPolicy>,
    pub elapsed: Duration,
}

/// `solve_augmented` with the default budget.
pub fn solve_augmented(p: &Problem, mode: Mode) -> Result<SolveReport> {
    solve_augmented_with(p, mode, &Budget::default())
}

/// Backward induction over the belief tree with the hard terminal penalty.
/// An infinite root value is the infeasibility verdict, not an error.
pub fn solve_augmented_with(p: &Problem, mode: Mode, budget: &Budget) -> Result<SolveReport> {
    let start = Instant::now();
    let tree = enumerate_reachable_beliefs(p, mode, budget)?;
    let n = p.n_states();
    let horizon = p.horizon();

    // Per node: per-state values (NaN off support at interior nodes), the
    // node-level branch value used by the joint recursion, and the decision.
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); tree.nodes.len()];
    let mut branch_value: Vec<f64> = vec![f64::INFINITY; tree.nodes.len()];
    let mut decisions: Vec<Option<NodeDecision>> = vec![None; tree.nodes.len()];

    for &id in &tree.stages[horizon] {
        let node = &tree.nodes[id];
        let pen = terminal_penalty(node.belief.total(), p.risk_bound());
        values[id] = (0..n).map(|s| p.terminal_cost(s) + pen).collect();
        branch_value[id] = if pen.is_infinite() {
            f64::INFINITY
        } else {
            node.support
                .iter()
                .map(|&s| node.belief.mass()[s] * p.terminal_cost(s))
                .sum()
        };
    }

    for k in (0..horizon).rev() {
        let results: Vec<(Vec<f64>, f64, Option<NodeDecision>)> = tree.stages[k]
            .par_iter()
            .map(|&id| {
                let node = &tree.nodes[id];
                match mode {
                    Mode::Joint => joint_backward(p, node, &values, &branch_value),
                    Mode::Literal => literal_backward(p, node, &values),
                }
            })
            .collect();
        for (&id, (vals, w, dec)) in tree.stages[k].iter().zip(results) {
            values[id] = vals;
            branch_value[id] = w;
            decisions[id] = dec;
        }
    }

    let root = tree.root();
    let j0 = values[root][p.initial_state()];
    let node_counts = tree.node_counts();

    if !j0.is_finite() {
        return Ok(SolveReport {
            mode,
            verdict: Verdict::Infeasible,
            value: None,
            internal_mwps: None,
            closed_loop_mwps: None,
            mwps_mismatch: false,
            node_counts,
            n_states: n,
            policy: None,
            elapsed: start.elapsed(),
        });
    }

    let mut per_stage: Vec<BTreeMap<usize, NodeDecision>> = vec![BTreeMap::new(); horizon];
    for (id, dec) in decisions.into_iter().enumerate() {
        if let Some(dec) = dec {
            per_stage[tree.nodes[id].stage].insert(id, dec);
        }
    }
    let policy = AugmentedPolicy {
        mode,
        tree,
        decisions: per_stage,
    };

    let sweep = forward_sweep(p, &policy)?;
    let internal_mwps = match mode {
        Mode::Joint => {
            let mut node = policy.tree.root();
            for k in 0..horizon {
                let dec = &policy.decisions[k][&node];
                let cand = dec.rule_candidate.expect("joint decision");
                node = policy.tree.nodes[node].children[cand];
            }
            policy.tree.nodes[node].belief.total()
        }
        Mode::Literal => {
            if sweep.closed_loop_mwps > 0.0 {
                let weighted: f64 = sweep
                    .terminal_node_mass
                    .iter()
                    .map(|(&node, &w)| w * policy.tree.nodes[node].belief.total())
                    .sum();
                weighted / sweep.closed_loop_mwps
            } else {
                0.0
            }
        }
    };
    let mwps_mismatch = (internal_mwps - sweep.closed_loop_mwps).abs() > 1e-9;

    Ok(SolveReport {
        mode,
        verdict: Verdict::Feasible,
        value: Some(j0),
        internal_mwps: Some(internal_mwps),
        closed_loop_mwps: Some(sweep.closed_loop_mwps),
        mwps_mismatch,
        node_counts,
        n_states: n,
        policy: Some(policy),
        elapsed: start.elapsed(),
    })
}

fn joint_backward(
    p: &Problem,
    node: &BeliefNode,
    values: &[Vec<f64>],
    branch_value: &[f64],
) -> (Vec<f64>, f64, Option<NodeDecision>) {
    let n = p.n_states();
    let mass = node.belief.mass();
    let radices: Vec<usize> = node.support.iter().map(|&s| p.admissible(s).len()).collect();
    let mut digits = vec![0usize; node.support.len()];
    let mut best: (f64, usize) = (f64::INFINITY, usize::MAX);
    for (cand, &child) in node.children.iter().enumerate() {
        let w_child = branch_value[child];
        if w_child.is_finite() {
            let mut stage_part = 0.0;
            for (j, &s) in node.support.iter().enumerate() {
                let a = p.admissible(s)[digits[j]];
                stage_part += mass[s] * p.stage_cost(s, a).expect("admissible");
            }
            let score = stage_part + w_child;
            if score < best.0 {
                best = (score, cand);
            }
        }
        advance_digits(&mut digits, &radices);
    }

    if best.1 == usize::MAX {
        return (vec![f64::INFINITY; n], f64::INFINITY, None);
    }
    let cand = best.1;
    let rule = decode_rule(p, &node.support, cand as u64);
    let child = node.children[cand];
    let mut vals = vec![f64::NAN; n];
    for &(s, a) in &rule {
        let row = p.row(s, a).expect("admissible");
        let mut acc = p.stage_cost(s, a).expect("admissible");
        for (t, &pr) in row.iter().enumerate() {
            if pr > 0.0 {
                acc += pr * values[child][t];
            }
        }
        vals[s] = acc;
    }
    (
        vals,
        best.0,
        Some(NodeDecision {
            actions: rule,
            rule_candidate: Some(cand),
        }),
    )
}

fn literal_backward(
    p: &Problem,
    node: &BeliefNode,
    values: &[Vec<f64>],
) -> (Vec<f64>, f64, Option<NodeDecision>) {
    let n = p.n_states();
    let cands = match &node.candidates {
        Candidates::Actions(list) => list,
        Candidates::Rules { .. } => unreachable!("literal tree stores actions"),
    };
    let mut vals = vec![f64::NAN; n];
    let mut actions = Vec::new();
    let mut branch = 0.0f64;
    for &s in &node.support {
        let mut best: (f64, usize) = (f64::INFINITY, usize::MAX);
        for (ci, &a) in cands.iter().enumerate() {
            let child = node.children[ci];
            let row = p.row(s, a).expect("admissible on support");
            let mut q = p.stage_cost(s, a).expect("admissible on support");
            for (t, &pr) in row.iter().enumerate() {
                if pr > 0.0 {
                    q += pr * values[child][t];
                    if q.is_infinite() {
                        break;
                    }
                }
            }
            if q < best.0 {
                best = (q, ci);
            }
        }
        if best.1 == usize::MAX {
            vals[s] = f64::INFINITY;
            branch = f64::INFINITY;
        } else {
            vals[s] = best.0;
            if branch.is_finite() {
                branch += node.belief.mass()[s] * best.0;
            }
            actions.push((s, cands[best.1]));
        }
    }
    let dec = if actions.is_empty() && !node.support.is_empty() {
        None
    } else {
        Some(NodeDecision {
            actions,
            rule_candidate: None,
        })
    };
    (vals, branch, dec)
}

struct ForwardSweep {
    expected_cost: f64,
    closed_loop_mwps: f64,
    /// Surviving mass arriving at each terminal node.
    terminal_node_mass: BTreeMap<usize, f64>,
    /// Surviving mass per (node, state) at each stage, for policy extraction.
    stage_masses: Vec<BTreeMap<(usize, usize), f64>>,
}

fn forward_sweep(p: &Problem, ap: &AugmentedPolicy) -> Result<ForwardSweep> {
    let horizon = p.horizon();
    let mut masses: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    masses.insert((ap.tree.root(), p.initial_state()), 1.0);
    let mut stage_masses = vec![masses.clone()];
    let mut expected_cost = 0.0;

    for k in 0..horizon {
        let mut next: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (&(node_id, s), &m) in &masses {
            if m == 0.0 {
                continue;
            }
            let node = &ap.tree.nodes[node_id];
            let a = ap.decisions[k]
                .get(&node_id)
                .and_then(|d| d.action_at(s))
                .ok_or_else(|| Error::MissingAction {
                    stage: k,
                    state: p.state_name(s).to_string(),
                })?;
            expected_cost += m * p.stage_cost(s, a)?;
            let child = match ap.mode {
                Mode::Joint => {
                    let cand = ap.decisions[k][&node_id]
                        .rule_candidate
                        .expect("joint decision");
                    node.children[cand]
                }
                Mode::Literal => {
                    let cands = match &node.candidates {
                        Candidates::Actions(list) => list,
                        Candidates::Rules { .. } => unreachable!(),
                    };
                    let pos = cands
                        .iter()
                        .position(|&x| x == a)
                        .expect("chosen action is a candidate");
                    node.children[pos]
                }
            };
            let row = p.row(s, a)?;
            for (t, &pr) in row.iter().enumerate() {
                if pr > 0.0 {
                    *next.entry((child, t)).or_insert(0.0) += m * pr;
                }
            }
        }
        masses = next;
        stage_masses.push(masses.clone());
    }

    let mut closed_loop_mwps = 0.0;
    let mut terminal_node_mass: BTreeMap<usize, f64> = BTreeMap::new();
    for (&(node_id, s), &m) in &masses {
        expected_cost += m * p.terminal_cost(s);
        closed_loop_mwps += m;
        *terminal_node_mass.entry(node_id).or_insert(0.0) += m;
    }
    Ok(ForwardSweep {
        expected_cost,
        closed_loop_mwps,
        terminal_node_mass,
        stage_masses,
    })
}

/// Exact closed-loop evaluation of an augmented policy: expected total cost
/// and the ground-truth mission-wide probability of safety, by a forward
/// sweep over (belief node, state) mass.
pub fn evaluate_augmented_policy(p: &Problem, ap: &AugmentedPolicy) -> Result<(f64, f64)> {
    let sweep = forward_sweep(p, ap)?;
    Ok((sweep.expected_cost, sweep.closed_loop_mwps))
}

/// Collapses an augmented policy to a Markov policy when the closed loop
/// never needs history: at every stage, all belief nodes carrying mass must
/// agree on the action at every state they share. States never reached get
/// the first admissible action.
pub fn extract_markov_policy(p: &Problem, ap: &AugmentedPolicy) -> Result<Policy> {
    let sweep = forward_sweep(p, ap)?;
    let mut rules = Vec::with_capacity(p.horizon());
    for k in 0..p.horizon() {
        let mut rule: Vec<Option<usize>> = vec![None; p.n_states()];
        for (&(node_id, s), &m) in &sweep.stage_masses[k] {
            if m == 0.0 {
                continue;
            }
            let a = ap.decisions[k]
                .get(&node_id)
                .and_then(|d| d.action_at(s))
                .ok_or_else(|| Error::MissingAction {
                    stage: k,
                    state: p.state_name(s).to_string(),
                })?;
            match rule[s] {
                None => rule[s] = Some(a),
                Some(prev) if prev == a => {}
                Some(prev) => {
                    return Err(Error::InvalidArgument(format!(
                        "policy is history-dependent: stage {k}, state `{}` takes `{}` in one \
                         belief node and `{}` in another",
                        p.state_name(s),
                        p.action_name(prev),
                        p.action_name(a)
                    )))
                }
            }
        }
        rules.push(
            rule.into_iter()
                .enumerate()
                .map(|(s, a)| a.unwrap_or(p.admissible(s)[0]))
                .collect(),
        );
    }
    Policy::new(p, rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn terminal_penalty_boundary_is_feasible() {
        assert_eq!(terminal_penalty(0.95, 0.1), 0.0);
        assert!(terminal_penalty(0.85, 0.1).is_infinite());
        assert_eq!(terminal_penalty(0.9, 0.1), 0.0);
    }

    #[test]
    fn chain_tree_has_expected_shape() {
        let p = fixtures::chain_v1();
        let joint = enumerate_reachable_beliefs(&p, Mode::Joint, &Budget::default()).unwrap();
        assert_eq!(joint.node_counts(), vec![1, 2, 4]);
        let stage1: Vec<f64> = joint.stages[1]
            .iter()
            .map(|&id| joint.nodes[id].belief.total())
            .collect();
        assert!((stage1[0] - 0.9).abs() < 1e-15);
        assert!((stage1[1] - 0.99).abs() < 1e-15);

        // Single supported state, so rules coincide with single actions.
        let literal = enumerate_reachable_beliefs(&p, Mode::Literal, &Budget::default()).unwrap();
        assert_eq!(literal.node_counts(), vec![1, 2, 4]);
    }

    #[test]
    fn one_action_problem_has_one_node_per_stage() {
        let mut data = fixtures::chain_v1_data();
        data.actions.truncate(1);
        data.kernel.truncate(1);
        data.stage_cost.truncate(1);
        let p = crate::problem::Problem::build(&data).unwrap();
        let tree = enumerate_reachable_beliefs(&p, Mode::Joint, &Budget::default()).unwrap();
        assert_eq!(tree.node_counts(), vec![1, 1, 1]);
    }

    #[test]
    fn budget_refusal_names_the_node() {
        let p = fixtures::split_v1();
        let err = enumerate_reachable_beliefs(
            &p,
            Mode::Joint,
            &Budget {
                max_rules_per_node: 4,
            },
        )
        .unwrap_err();
        match err {
            Error::BudgetExceeded {
                required, budget, ..
            } => {
                assert_eq!(required, 9, "3 actions at 2 supported states");
                assert_eq!(budget, 4);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn belief_tree_children_match_propagate() {
        let mut rng = fixtures::rng(1234);
        for _ in 0..20 {
            let p = fixtures::random_problem(&mut rng, fixtures::RandomBounds::tiny());
            for mode in [Mode::Joint, Mode::Literal] {
                let tree = enumerate_reachable_beliefs(&p, mode, &Budget::default()).unwrap();
                for node in &tree.nodes {
                    if let (Some(parent), Some(decision)) = (node.parent, &node.parent_decision) {
                        let mut dense: Vec<Option<usize>> = vec![None; p.n_states()];
                        for &(s, a) in decision {
                            dense[s] = Some(a);
                        }
                        let expect = propagate(&p, &tree.nodes[parent].belief, &dense).unwrap();
                        for (a, b) in expect.mass().iter().zip(node.belief.mass()) {
                            assert!((a - b).abs() <= BELIEF_DEDUP_TOL);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn chain_joint_solve_matches_hand_solution() {
        let p = fixtures::chain_v1();
        let report = solve_augmented(&p, Mode::Joint).unwrap();
        assert_eq!(report.verdict, Verdict::Feasible);
        assert!((report.value.unwrap() - 0.9).abs() < 1e-12);
        assert!((report.internal_mwps.unwrap() - 0.891).abs() < 1e-12);
        assert!(!report.mwps_mismatch);

        let ap = report.policy.as_ref().unwrap();
        let root = ap.tree.root();
        assert_eq!(ap.decisions[0][&root].actions, vec![(0, 0)]);
        let stage1_node = ap.tree.nodes[root].children[0];
        assert!((ap.tree.nodes[stage1_node].belief.total() - 0.9).abs() < 1e-15);
        assert_eq!(ap.decisions[1][&stage1_node].actions, vec![(0, 1)]);

        let (cost, mwps) = evaluate_augmented_policy(&p, ap).unwrap();
        assert!((cost - 0.9).abs() < 1e-12);
        assert!((mwps - 0.891).abs() < 1e-12);
    }

    #[test]
    fn chain_tight_risk_bound_is_infeasible() {
        let p = fixtures::chain_v1().with_risk_bound(0.01).unwrap();
        let report = solve_augmented(&p, Mode::Joint).unwrap();
        assert_eq!(report.verdict, Verdict::Infeasible);
        assert!(report.value.is_none());
        assert!(report.policy.is_none());
    }

    #[test]
    fn zero_fail_problem_reduces_to_plain_dp() {
        let mut data = fixtures::chain_v1_data();
        for row in &mut data.kernel {
            row.probs.insert("A".into(), 1.0);
        }
        let p = crate::problem::Problem::build(&data).unwrap();
        let report = solve_augmented(&p, Mode::Joint).unwrap();
        // Unconstrained optimum: always take the free action.
        assert_eq!(report.value.unwrap(), 0.0);
        assert_eq!(report.internal_mwps.unwrap(), 1.0);
    }

    #[test]
    fn literal_mode_overclaims_on_split_fixture() {
        let p = fixtures::split_v1();
        let report = solve_augmented(&p, Mode::Literal).unwrap();
        assert_eq!(report.verdict, Verdict::Feasible);
        assert_eq!(report.value.unwrap(), 0.0);
        let closed = report.closed_loop_mwps.unwrap();
        let internal = report.internal_mwps.unwrap();
        assert!((closed - 0.875).abs() < 1e-12);
        assert!(internal >= 0.9 - 1e-12);
        assert!(
            report.mwps_mismatch,
            "report must flag |{internal} - {closed}| > 1e-9"
        );

        // Joint mode on the same fixture is honest and pays for it.
        let joint = solve_augmented(&p, Mode::Joint).unwrap();
        assert_eq!(joint.verdict, Verdict::Feasible);
        assert!((joint.value.unwrap() - 5.0).abs() < 1e-12);
        assert!(!joint.mwps_mismatch);
        let (cost, mwps) = evaluate_augmented_policy(&p, joint.policy.as_ref().unwrap()).unwrap();
        assert!((cost - 5.0).abs() < 1e-12);
        assert!(mwps >= 0.9 - 1e-9);
    }

    #[test]
    fn extract_markov_from_joint_solution() {
        let p = fixtures::chain_v1();
        let report = solve_augmented(&p, Mode::Joint).unwrap();
        let pi = extract_markov_policy(&p, report.policy.as_ref().unwrap()).unwrap();
        assert_eq!(pi.rules(), &[vec![0], vec![1]]);
        let mwps = crate::safety::mwps_backward(&p, &pi).unwrap().mwps(&p);
        assert!((mwps - report.closed_loop_mwps.unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn epsilon_monotonicity_on_chain() {
        let p = fixtures::chain_v1();
        let mut prev = f64::INFINITY;
        for eps in [0.02, 0.11, 0.15, 0.5, 1.0] {
            let report = solve_augmented(&p.with_risk_bound(eps).unwrap(), Mode::Joint).unwrap();
            if let Some(v) = report.value {
                assert!(v <= prev + 1e-12, "value must not increase with epsilon");
                prev = v;
            } else {
                assert_eq!(prev, f64::INFINITY);
            }
        }
    }
}
