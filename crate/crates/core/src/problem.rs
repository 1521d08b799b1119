//! Tabular problem model: a finite set of safe states, one absorbing fail
//! state, per-state admissible actions, a sub-stochastic transition kernel
//! over the safe states (residual mass goes to fail), stage and terminal
//! costs, a horizon, a risk bound and a fixed initial state.
//!
//! The fail state is zero-cost and absorbing: trajectories that leave the
//! safe set stop accruing cost, which makes the expected total cost and the
//! safe-set-restricted recursions agree exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for row-sum validation: a kernel row over the safe states may
/// sum to at most `1 + ROW_SUM_TOL`; the fail mass is the clamped complement.
pub const ROW_SUM_TOL: f64 = 1e-12;

fn default_fail_name() -> String {
    "fail".to_string()
}

/// One kernel row: transition probabilities from (`state`, `action`) to the
/// safe states listed in `probs`. Safe states absent from `probs` get 0;
/// whatever mass is missing from the row goes to the fail state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelRow {
    pub state: String,
    pub action: String,
    pub probs: BTreeMap<String, f64>,
}

/// One stage-cost entry for a (state, action) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostEntry {
    pub state: String,
    pub action: String,
    pub value: f64,
}

/// Raw problem description, exactly mirroring the JSON problem schema.
/// `Problem::build` validates it and produces the indexed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemData {
    /// Ordered safe-state names.
    pub states: Vec<String>,
    /// Name of the absorbing fail state (must differ from every safe state).
    #[serde(default = "default_fail_name")]
    pub fail: String,
    /// Ordered global action names.
    pub actions: Vec<String>,
    /// Optional per-state admissible action lists; states absent from the map
    /// admit every action.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub admissible: BTreeMap<String, Vec<String>>,
    /// One row per (state, admissible action) pair, each pair exactly once.
    pub kernel: Vec<KernelRow>,
    /// One entry per (state, admissible action) pair.
    pub stage_cost: Vec<CostEntry>,
    /// Terminal cost per safe state (the fail state is fixed to 0).
    pub terminal_cost: BTreeMap<String, f64>,
    pub horizon: usize,
    pub risk_bound: f64,
    /// Name of the initial state; must be a safe state.
    pub initial_state: String,
}

/// A stored kernel row together with its residual fail mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRow<'a> {
    /// Probabilities over the safe states, indexed like `Problem::states`.
    pub safe: &'a [f64],
    /// Residual mass assigned to the fail state, in [0, 1].
    pub fail_mass: f64,
}

/// Validated, index-based problem. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    states: Vec<String>,
    fail: String,
    actions: Vec<String>,
    /// Per state: admissible global action indices, in declaration order.
    admissible: Vec<Vec<usize>>,
    /// rows[s][j][s'] for the j-th admissible action of state s.
    rows: Vec<Vec<Vec<f64>>>,
    /// fail_mass[s][j] = 1 - sum(rows[s][j]), clamped to [0, 1].
    fail_mass: Vec<Vec<f64>>,
    stage_cost: Vec<Vec<f64>>,
    terminal_cost: Vec<f64>,
    horizon: usize,
    risk_bound: f64,
    initial_state: usize,
}

impl Problem {
    /// Validates `data` and builds the indexed problem. Every error names the
    /// offending row or field.
    pub fn build(data: &ProblemData) -> Result<Self> {
        if data.states.is_empty() {
            return Err(Error::Validation("field `states` is empty".into()));
        }
        let mut state_idx = BTreeMap::new();
        for (i, name) in data.states.iter().enumerate() {
            if state_idx.insert(name.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate state `{name}`")));
            }
        }
        if state_idx.contains_key(&data.fail) {
            return Err(Error::Validation(format!(
                "fail state `{}` collides with a safe state",
                data.fail
            )));
        }
        if data.actions.is_empty() {
            return Err(Error::Validation("field `actions` is empty".into()));
        }
        let mut action_idx = BTreeMap::new();
        for (i, name) in data.actions.iter().enumerate() {
            if action_idx.insert(name.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate action `{name}`")));
            }
        }

        let n = data.states.len();
        let mut admissible = Vec::with_capacity(n);
        for (s, name) in data.states.iter().enumerate() {
            let list = match data.admissible.get(name) {
                None => (0..data.actions.len()).collect::<Vec<_>>(),
                Some(names) => {
                    if names.is_empty() {
                        return Err(Error::Validation(format!(
                            "state `{name}` has an empty admissible action list"
                        )));
                    }
                    let mut seen = vec![false; data.actions.len()];
                    let mut list = Vec::with_capacity(names.len());
                    for a in names {
                        let &idx = action_idx.get(a).ok_or_else(|| {
                            Error::Validation(format!(
                                "admissible list of `{name}` names unknown action `{a}`"
                            ))
                        })?;
                        if seen[idx] {
                            return Err(Error::Validation(format!(
                                "admissible list of `{name}` repeats action `{a}`"
                            )));
                        }
                        seen[idx] = true;
                        list.push(idx);
                    }
                    list
                }
            };
            debug_assert_eq!(s, admissible.len());
            admissible.push(list);
        }
        for name in data.admissible.keys() {
            if !state_idx.contains_key(name) {
                return Err(Error::Validation(format!(
                    "admissible map names unknown state `{name}`"
                )));
            }
        }

        // Kernel rows: exactly one per (state, admissible action) pair.
        let mut rows: Vec<Vec<Option<Vec<f64>>>> = (0..n)
            .map(|s| vec![None; admissible[s].len()])
            .collect();
        for row in &data.kernel {
            let (s, j) = locate(&state_idx, &action_idx, &admissible, &row.state, &row.action)
                .map_err(|m| Error::Validation(format!("kernel row ({}, {}): {m}", row.state, row.action)))?;
            if rows[s][j].is_some() {
                return Err(Error::Validation(format!(
                    "duplicate kernel row ({}, {})",
                    row.state, row.action
                )));
            }
            let mut dense = vec![0.0; n];
            let mut sum = 0.0;
            for (target, &p) in &row.probs {
                let &t = state_idx.get(target).ok_or_else(|| {
                    Error::Validation(format!(
                        "kernel row ({}, {}) targets unknown state `{target}`",
                        row.state, row.action
                    ))
                })?;
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::Validation(format!(
                        "kernel row ({}, {}) has negative or non-finite probability {} for `{target}`",
                        row.state, row.action, p
                    )));
                }
                if p > 1.0 + ROW_SUM_TOL {
                    return Err(Error::Validation(format!(
                        "kernel row ({}, {}) has probability {} > 1 for `{target}`",
                        row.state, row.action, p
                    )));
                }
                dense[t] = p;
                sum += p;
            }
            if sum > 1.0 + ROW_SUM_TOL {
                return Err(Error::Validation(format!(
                    "kernel row ({}, {}) sums to {} > 1",
                    row.state, row.action, sum
                )));
            }
            rows[s][j] = Some(dense);
        }
        let mut dense_rows = Vec::with_capacity(n);
        let mut fail_mass = Vec::with_capacity(n);
        for s in 0..n {
            let mut per_state = Vec::with_capacity(admissible[s].len());
            let mut per_state_fail = Vec::with_capacity(admissible[s].len());
            for (j, &a) in admissible[s].iter().enumerate() {
                let row = rows[s][j].take().ok_or_else(|| {
                    Error::Validation(format!(
                        "missing kernel row ({}, {})",
                        data.states[s], data.actions[a]
                    ))
                })?;
                let sum: f64 = row.iter().sum();
                per_state_fail.push((1.0 - sum).clamp(0.0, 1.0));
                per_state.push(row);
            }
            dense_rows.push(per_state);
            fail_mass.push(per_state_fail);
        }

        // Stage costs: same coverage as the kernel.
        let mut stage_cost: Vec<Vec<Option<f64>>> = (0..n)
            .map(|s| vec![None; admissible[s].len()])
            .collect();
        for e in &data.stage_cost {
            let (s, j) = locate(&state_idx, &action_idx, &admissible, &e.state, &e.action)
                .map_err(|m| Error::Validation(format!("stage_cost entry ({}, {}): {m}", e.state, e.action)))?;
            if stage_cost[s][j].is_some() {
                return Err(Error::Validation(format!(
                    "duplicate stage_cost entry ({}, {})",
                    e.state, e.action
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::Validation(format!(
                    "stage_cost entry ({}, {}) is not finite",
                    e.state, e.action
                )));
            }
            stage_cost[s][j] = Some(e.value);
        }
        let stage_cost: Vec<Vec<f64>> = stage_cost
            .into_iter()
            .enumerate()
            .map(|(s, per_state)| {
                per_state
                    .into_iter()
                    .enumerate()
                    .map(|(j, c)| {
                        c.ok_or_else(|| {
                            Error::Validation(format!(
                                "missing stage_cost entry ({}, {})",
                                data.states[s], data.actions[admissible[s][j]]
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;

        let mut terminal_cost = Vec::with_capacity(n);
        for name in &data.states {
            let &v = data.terminal_cost.get(name).ok_or_else(|| {
                Error::Validation(format!("missing terminal_cost for state `{name}`"))
            })?;
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "terminal_cost for `{name}` is not finite"
                )));
            }
            terminal_cost.push(v);
        }
        for name in data.terminal_cost.keys() {
            if !state_idx.contains_key(name) {
                return Err(Error::Validation(format!(
                    "terminal_cost names unknown state `{name}`"
                )));
            }
        }

        if data.horizon == 0 {
            return Err(Error::Validation("field `horizon` must be >= 1".into()));
        }
        if !data.risk_bound.is_finite() || !(0.0..=1.0).contains(&data.risk_bound) {
            return Err(Error::Validation(format!(
                "field `risk_bound` = {} is outside [0, 1]",
                data.risk_bound
            )));
        }
        let &initial_state = state_idx.get(&data.initial_state).ok_or_else(|| {
            Error::Validation(format!(
                "field `initial_state` names unknown state `{}`",
                data.initial_state
            ))
        })?;

        Ok(Problem {
            states: data.states.clone(),
            fail: data.fail.clone(),
            actions: data.actions.clone(),
            admissible,
            rows: dense_rows,
            fail_mass,
            stage_cost,
            terminal_cost,
            horizon: data.horizon,
            risk_bound: data.risk_bound,
            initial_state,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn risk_bound(&self) -> f64 {
        self.risk_bound
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn fail_name(&self) -> &str {
        &self.fail
    }

    pub fn action_name(&self, a: usize) -> &str {
        &self.actions[a]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == name)
    }

    /// Admissible global action indices at state `s`, in declaration order.
    pub fn admissible(&self, s: usize) -> &[usize] {
        &self.admissible[s]
    }

    fn local_action(&self, s: usize, action: usize) -> Result<usize> {
        self.check_state(s)?;
        self.admissible[s]
            .iter()
            .position(|&a| a == action)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "action `{}` is not admissible at state `{}`",
                    self.actions.get(action).map(String::as_str).unwrap_or("?"),
                    self.states[s]
                ))
            })
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.states.len() {
            return Err(Error::InvalidArgument(format!(
                "state index {s} out of range (have {})",
                self.states.len()
            )));
        }
        Ok(())
    }

    /// Kernel row over safe states for (state, global action).
    pub fn row(&self, s: usize, action: usize) -> Result<&[f64]> {
        let j = self.local_action(s, action)?;
        Ok(&self.rows[s][j])
    }

    /// Residual fail mass of (state, global action).
    pub fn fail_mass(&self, s: usize, action: usize) -> Result<f64> {
        let j = self.local_action(s, action)?;
        Ok(self.fail_mass[s][j])
    }

    pub fn stage_cost(&self, s: usize, action: usize) -> Result<f64> {
        let j = self.local_action(s, action)?;
        Ok(self.stage_cost[s][j])
    }

    pub fn terminal_cost(&self, s: usize) -> f64 {
        self.terminal_cost[s]
    }

    /// The stored row plus its fail mass; queries never mutate the kernel.
    pub fn transition_row(&self, s: usize, action: usize) -> Result<TransitionRow<'_>> {
        let j = self.local_action(s, action)?;
        Ok(TransitionRow {
            safe: &self.rows[s][j],
            fail_mass: self.fail_mass[s][j],
        })
    }

    /// Same problem with a different risk bound.
    pub fn with_risk_bound(&self, risk_bound: f64) -> Result<Problem> {
        if !risk_bound.is_finite() || !(0.0..=1.0).contains(&risk_bound) {
            return Err(Error::Validation(format!(
                "field `risk_bound` = {risk_bound} is outside [0, 1]"
            )));
        }
        let mut p = self.clone();
        p.risk_bound = risk_bound;
        Ok(p)
    }

    /// Emits the raw data form, suitable for JSON round-trips. Kernel and
    /// cost arrays come out in canonical (state, action) order.
    pub fn to_data(&self) -> ProblemData {
        let mut kernel = Vec::new();
        let mut stage_cost = Vec::new();
        for s in 0..self.n_states() {
            for (j, &a) in self.admissible[s].iter().enumerate() {
                let probs = self.rows[s][j]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(t, &p)| (self.states[t].clone(), p))
                    .collect();
                kernel.push(KernelRow {
                    state: self.states[s].clone(),
                    action: self.actions[a].clone(),
                    probs,
                });
                stage_cost.push(CostEntry {
                    state: self.states[s].clone(),
                    action: self.actions[a].clone(),
                    value: self.stage_cost[s][j],
                });
            }
        }
        let uniform = self
            .admissible
            .iter()
            .all(|l| l.len() == self.actions.len() && l.iter().enumerate().all(|(i, &a)| i == a));
        let admissible = if uniform {
            BTreeMap::new()
        } else {
            self.states
                .iter()
                .enumerate()
                .map(|(s, name)| {
                    (
                        name.clone(),
                        self.admissible[s]
                            .iter()
                            .map(|&a| self.actions[a].clone())
                            .collect(),
                    )
                })
                .collect()
        };
        ProblemData {
            states: self.states.clone(),
            fail: self.fail.clone(),
            actions: self.actions.clone(),
            admissible,
            kernel,
            stage_cost,
            terminal_cost: self
                .states
                .iter()
                .cloned()
                .zip(self.terminal_cost.iter().copied())
                .collect(),
            horizon: self.horizon,
            risk_bound: self.risk_bound,
            initial_state: self.states[self.initial_state].clone(),
        }
    }
}

fn locate(
    state_idx: &BTreeMap<String, usize>,
    action_idx: &BTreeMap<String, usize>,
    admissible: &[Vec<usize>],
    state: &str,
    action: &str,
) -> std::result::Result<(usize, usize), String> {
    let &s = state_idx
        .get(state)
        .ok_or_else(|| format!("unknown state `{state}`"))?;
    let &a = action_idx
        .get(action)
        .ok_or_else(|| format!("unknown action `{action}`"))?;
    let j = admissible[s]
        .iter()
        .position(|&x| x == a)
        .ok_or_else(|| format!("action `{action}` is not admissible at `{state}`"))?;
    Ok((s, j))
}

/// A deterministic Markov policy: one decision rule per stage, mapping every
/// safe state to a global action index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    rules: Vec<Vec<usize>>,
}

impl Policy {
    /// Validates rule shape and admissibility against `p`.
    pub fn new(p: &Problem, rules: Vec<Vec<usize>>) -> Result<Self> {
        if rules.len() != p.horizon() {
            return Err(Error::PolicyLength {
                expected: p.horizon(),
                got: rules.len(),
            });
        }
        for (k, rule) in rules.iter().enumerate() {
            if rule.len() != p.n_states() {
                return Err(Error::InvalidArgument(format!(
                    "stage {k} rule covers {} states, problem has {}",
                    rule.len(),
                    p.n_states()
                )));
            }
            for (s, &a) in rule.iter().enumerate() {
                if !p.admissible(s).contains(&a) {
                    return Err(Error::InvalidArgument(format!(
                        "stage {k}: action index {a} is not admissible at state `{}`",
                        p.state_name(s)
                    )));
                }
            }
        }
        Ok(Policy { rules })
    }

    /// Builds a policy from per-stage state-name -> action-name maps.
    pub fn from_names(p: &Problem, stages: &[BTreeMap<String, String>]) -> Result<Self> {
        let mut rules = Vec::with_capacity(stages.len());
        for (k, stage) in stages.iter().enumerate() {
            let mut rule = Vec::with_capacity(p.n_states());
            for s in 0..p.n_states() {
                let name = p.state_name(s);
                let action = stage.get(name).ok_or_else(|| {
                    Error::InvalidArgument(format!("stage {k} rule misses state `{name}`"))
                })?;
                let a = p.action_index(action).ok_or_else(|| {
                    Error::InvalidArgument(format!("stage {k}: unknown action `{action}`"))
                })?;
                rule.push(a);
            }
            for name in stage.keys() {
                if p.state_index(name).is_none() {
                    return Err(Error::InvalidArgument(format!(
                        "stage {k} rule names unknown state `{name}`"
                    )));
                }
            }
            rules.push(rule);
        }
        Policy::new(p, rules)
    }

    pub fn rules(&self) -> &[Vec<usize>] {
        &self.rules
    }

    pub fn action(&self, stage: usize, s: usize) -> usize {
        self.rules[stage][s]
    }

    pub fn horizon(&self) -> usize {
        self.rules.len()
    }

    /// Compact stable encoding: action indices joined by `-` within a stage,
    /// stages joined by `|`. Used as the policy id in CSV output.
    pub fn encode(&self) -> String {
        self.rules
            .iter()
            .map(|rule| {
                rule.iter()
                    .map(|a| a.to_string())
                    .collect::<Vec<_>>()
                    .join("-")
            })
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Per-stage state-name -> action-name maps (the policy file format).
    pub fn to_names(&self, p: &Problem) -> Vec<BTreeMap<String, String>> {
        self.rules
            .iter()
            .map(|rule| {
                rule.iter()
                    .enumerate()
                    .map(|(s, &a)| (p.state_name(s).to_string(), p.action_name(a).to_string()))
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn chain_fixture_builds_and_queries() {
        let p = fixtures::chain_v1();
        assert_eq!(p.n_states(), 1);
        assert_eq!(p.horizon(), 2);
        assert_eq!(p.risk_bound(), 0.15);
        let row = p.transition_row(0, 0).unwrap();
        assert_eq!(row.safe, &[0.9]);
        assert!((row.fail_mass - 0.1).abs() < 1e-15);
        let row = p.transition_row(0, 1).unwrap();
        assert_eq!(row.safe, &[0.99]);
        assert!((row.fail_mass - 0.01).abs() < 1e-15);
    }

    #[test]
    fn full_row_has_zero_fail_mass() {
        let mut data = fixtures::chain_v1_data();
        data.kernel[0].probs.insert("A".into(), 1.0);
        let p = Problem::build(&data).unwrap();
        assert_eq!(p.fail_mass(0, 0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_row_sum_above_one() {
        let mut data = fixtures::chain_v1_data();
        data.kernel[0].probs.insert("A".into(), 1.2);
        let err = Problem::build(&data).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("A") && msg.contains("a1"), "message was: {msg}");
    }

    #[test]
    fn rejects_negative_probability() {
        let mut data = fixtures::chain_v1_data();
        data.kernel[1].probs.insert("A".into(), -0.2);
        let err = Problem::build(&data).unwrap_err();
        assert!(err.to_string().contains("a2"));
    }

    #[test]
    fn rejects_risk_bound_outside_unit_interval() {
        let mut data = fixtures::chain_v1_data();
        data.risk_bound = 1.5;
        let err = Problem::build(&data).unwrap_err();
        assert!(err.to_string().contains("risk_bound"));
        data.risk_bound = 0.0;
        assert!(Problem::build(&data).is_ok(), "hard constraint is valid");
    }

    #[test]
    fn rejects_empty_state_set_and_missing_rows() {
        let mut data = fixtures::chain_v1_data();
        data.states.clear();
        assert!(Problem::build(&data).is_err());

        let mut data = fixtures::chain_v1_data();
        data.kernel.pop();
        let err = Problem::build(&data).unwrap_err();
        assert!(err.to_string().contains("missing kernel row"));
    }

    #[test]
    fn row_sums_plus_fail_mass_are_one() {
        let p = fixtures::chain_v1();
        for s in 0..p.n_states() {
            for &a in p.admissible(s) {
                let row = p.transition_row(s, a).unwrap();
                let total: f64 = row.safe.iter().sum::<f64>() + row.fail_mass;
                assert!((total - 1.0).abs() <= ROW_SUM_TOL);
            }
        }
    }

    #[test]
    fn policy_validation() {
        let p = fixtures::chain_v1();
        assert!(Policy::new(&p, vec![vec![0], vec![1]]).is_ok());
        assert!(matches!(
            Policy::new(&p, vec![vec![0]]),
            Err(Error::PolicyLength { .. })
        ));
        assert!(Policy::new(&p, vec![vec![0], vec![7]]).is_err());
    }

    #[test]
    fn transition_row_rejects_out_of_range() {
        let p = fixtures::chain_v1();
        assert!(p.transition_row(3, 0).is_err());
        assert!(p.transition_row(0, 9).is_err());
    }
}
