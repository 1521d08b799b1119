//! Mission-wide probability of safety (MWPS) for a fixed policy, by three
//! independent routes: a backward value recursion over the safe states, a
//! forward propagation of surviving probability mass, and seeded Monte Carlo
//! rollouts. The first two agree to round-off by construction; the rollouts
//! give a statistical cross-check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{Policy, Problem};

/// Per-stage safety probabilities-to-go: `values[k][s]` is the probability
/// that the remaining trajectory from state `s` at stage `k` stays safe.
/// `values[horizon]` is identically 1 on the safe states.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyTable {
    values: Vec<Vec<f64>>,
}

impl SafetyTable {
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn value(&self, stage: usize, s: usize) -> f64 {
        self.values[stage][s]
    }

    /// MWPS of the evaluated policy from the problem's initial state.
    pub fn mwps(&self, p: &Problem) -> f64 {
        self.values[0][p.initial_state()]
    }

    /// CSV rows `stage,state,value`, stages ascending then state order.
    pub fn to_csv(&self, p: &Problem) -> String {
        let mut out = String::from("stage,state,value\n");
        for (k, row) in self.values.iter().enumerate() {
            for (s, v) in row.iter().enumerate() {
                out.push_str(&format!("{k},{},{v}\n", p.state_name(s)));
            }
        }
        out
    }

    pub fn to_json_rows(&self, p: &Problem) -> Vec<ValueRow> {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(k, row)| {
                row.iter().enumerate().map(move |(s, &v)| ValueRow {
                    stage: k,
                    state: p.state_name(s).to_string(),
                    value: v,
                })
            })
            .collect()
    }
}

/// One exported value-table entry.
#[derive(Debug, Clone, Serialize)]
pub struct ValueRow {
    pub stage: usize,
    pub state: String,
    pub value: f64,
}

/// Backward recursion for the safety probability of `pi`:
/// the stage-N values are 1 on the safe states, and each step takes the
/// expectation of the successor values over the transitions that remain in
/// the safe set (the fail branch contributes 0).
pub fn mwps_backward(p: &Problem, pi: &Policy) -> Result<SafetyTable> {
    check_policy(p, pi)?;
    let n = p.n_states();
    let mut values = vec![vec![0.0; n]; p.horizon() + 1];
    values[p.horizon()] = vec![1.0; n];
    for k in (0..p.horizon()).rev() {
        let (head, tail) = values.split_at_mut(k + 1);
        let next = &tail[0];
        head[k] = (0..n)
            .into_par_iter()
            .map(|s| {
                let row = p.row(s, pi.action(k, s)).expect("policy is admissible");
                let v: f64 = row.iter().zip(next).map(|(&pr, &nv)| pr * nv).sum();
                v.clamp(0.0, 1.0)
            })
            .collect();
    }
    Ok(SafetyTable { values })
}

/// Sub-probability mass over the safe states: entry `s` is the probability
/// of having stayed safe so far and sitting at `s` at stage `stage`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalMass {
    mass: Vec<f64>,
    stage: usize,
}

impl SurvivalMass {
    /// Unit point mass at the problem's initial state, stage 0.
    pub fn initial(p: &Problem) -> Self {
        let mut mass = vec![0.0; p.n_states()];
        mass[p.initial_state()] = 1.0;
        SurvivalMass { mass, stage: 0 }
    }

    pub fn from_parts(mass: Vec<f64>, stage: usize) -> Self {
        debug_assert!(mass.iter().all(|&m| m >= 0.0));
        SurvivalMass { mass, stage }
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// States carrying strictly positive mass, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(s, _)| s)
            .collect()
    }
}

/// Pushes surviving mass one stage forward under a decision rule given as a
/// per-state optional action: `out[s'] = sum_s mass[s] * P[s' | s, rule[s]]`.
/// States in the support must have an action; total mass never increases.
pub fn propagate(p: &Problem, f: &SurvivalMass, rule: &[Option<usize>]) -> Result<SurvivalMass> {
    if rule.len() != p.n_states() {
        return Err(Error::InvalidArgument(format!(
            "rule covers {} states, problem has {}",
            rule.len(),
            p.n_states()
        )));
    }
    let mut out = vec![0.0; p.n_states()];
    for (s, &m) in f.mass.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let a = rule[s].ok_or_else(|| Error::MissingAction {
            stage: f.stage,
            state: p.state_name(s).to_string(),
        })?;
        let row = p.row(s, a)?;
        for (o, &pr) in out.iter_mut().zip(row) {
            *o += m * pr;
        }
    }
    Ok(SurvivalMass {
        mass: out,
        stage: f.stage + 1,
    })
}

/// Forward route: propagates the initial point mass through the policy's
/// stage rules and returns the total surviving mass at the horizon. Agrees
/// with `mwps_backward` at the initial state to round-off.
pub fn mwps_forward(p: &Problem, pi: &Policy) -> Result<f64> {
    check_policy(p, pi)?;
    let mut f = SurvivalMass::initial(p);
    for k in 0..p.horizon() {
        let rule: Vec<Option<usize>> = pi.rules()[k].iter().map(|&a| Some(a)).collect();
        f = propagate(p, &f, &rule)?;
    }
    Ok(f.total())
}

/// Monte Carlo estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub successes: u64,
    pub rollouts: u64,
}

/// Estimates the MWPS of `pi` from `n` seeded closed-loop rollouts. Rollout
/// `i` draws from stream `i` of a counter-based generator seeded with `seed`,
/// so the result is identical for a fixed (seed, n) under any parallel
/// schedule.
pub fn monte_carlo_mwps(p: &Problem, pi: &Policy, n: u64, seed: u64) -> Result<McEstimate> {
    check_policy(p, pi)?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "rollout count must be >= 1".into(),
        ));
    }
    let successes: u64 = (0..n)
        .into_par_iter()
        .map(|i| rollout_is_safe(p, pi, seed, i) as u64)
        .sum();
    let estimate = successes as f64 / n as f64;
    let std_error = (estimate * (1.0 - estimate) / n as f64).sqrt();
    Ok(McEstimate {
        estimate,
        std_error,
        successes,
        rollouts: n,
    })
}

fn rollout_is_safe(p: &Problem, pi: &Policy, seed: u64, rollout: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rollout);
    let mut s = p.initial_state();
    for k in 0..p.horizon() {
        match step(p, &mut rng, s, pi.action(k, s)) {
            Some(next) => s = next,
            None => return false,
        }
    }
    true
}

/// Samples a successor from the row of (s, a); `None` is the fail branch.
pub(crate) fn step(p: &Problem, rng: &mut ChaCha8Rng, s: usize, a: usize) -> Option<usize> {
    let row = p.row(s, a).expect("admissible action");
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (t, &pr) in row.iter().enumerate() {
        acc += pr;
        if u < acc {
            return Some(t);
        }
    }
    None
}

fn check_policy(p: &Problem, pi: &Policy) -> Result<()> {
    if pi.horizon() != p.horizon() {
        return Err(Error::PolicyLength {
            expected: p.horizon(),
            got: pi.horizon(),
        });
    }
    Ok(())
}
