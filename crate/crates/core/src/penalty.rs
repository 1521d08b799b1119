//! Classical state-space DP for the penalized objective
//! `E[total cost] + zeta(MWPS)`. A cost-to-go on the state alone exists
//! exactly when `zeta` commutes with the expectation over successor states,
//! which holds for affine `zeta(x) = lambda * x + delta` (and is checked
//! here numerically for arbitrary penalties on finite scenarios).
//!
//! Under an affine penalty the recursion carries `lambda + delta` as a
//! terminal bonus on safe states and `delta` along the fail branch: expanding
//! `zeta(MWPS) = lambda * MWPS + delta` over trajectories gives `lambda +
//! delta` to each fully-safe trajectory and `delta` to each failed one, so
//! this is exact. The hard 0/infinity penalty is rejected up front.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Policy, Problem};
use crate::safety::mwps_backward;

/// Tolerance for the feasibility comparison `x >= 1 - epsilon` and for the
/// commutation check.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Penalty on the mission-wide probability of safety.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PenaltySpec {
    /// `zeta(x) = lambda * x + delta`.
    Affine { lambda: f64, delta: f64 },
    /// `zeta(x) = 0` if `x >= 1 - epsilon`, `+infinity` otherwise.
    Exact { epsilon: f64 },
}

impl PenaltySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltySpec::Affine { lambda, delta } => {
                if !(lambda.is_finite() && delta.is_finite()) {
                    return Err(Error::Validation(
                        "affine penalty parameters must be finite".into(),
                    ));
                }
            }
            PenaltySpec::Exact { epsilon } => {
                if !epsilon.is_finite() || !(0.0..=1.0).contains(&epsilon) {
                    return Err(Error::Validation(format!(
                        "exact penalty epsilon = {epsilon} is outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Evaluates the penalty at a safety probability `x` in [0, 1].
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            PenaltySpec::Affine { lambda, delta } => lambda * x + delta,
            PenaltySpec::Exact { epsilon } => {
                if x >= 1.0 - epsilon - FEASIBILITY_TOL {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Penalized cost-to-go table: `values[k][s]` over safe states, k = 0..=N.
/// The implicit fail-state value is `delta` at every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTable {
    values: Vec<Vec<f64>>,
}

impl PenaltyTable {
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn value(&self, stage: usize, s: usize) -> f64 {
        self.values[stage][s]
    }

    /// Optimal penalized value from the problem's initial state.
    pub fn optimal_value(&self, p: &Problem) -> f64 {
        self.values[0][p.initial_state()]
    }
}

/// Solves the penalized problem by backward induction on the safe states.
/// Only affine penalties are accepted; the greedy argmin breaks ties toward
/// the lowest action index.
pub fn solve_penalty_dp(p: &Problem, penalty: &PenaltySpec) -> Result<(Policy, PenaltyTable)> {
    penalty.validate()?;
    let (lambda, delta) = match *penalty {
        PenaltySpec::Affine { lambda, delta } => (lambda, delta),
        PenaltySpec::Exact { .. } => return Err(Error::ExactPenaltyUnsupported),
    };

    let n = p.n_states();
    let horizon = p.horizon();
    let mut values = vec![vec![0.0; n]; horizon + 1];
    values[horizon] = (0..n)
        .map(|s| p.terminal_cost(s) + lambda + delta)
        .collect();

    let mut rules = vec![vec![0usize; n]; horizon];
    for k in (0..horizon).rev() {
        let (head, tail) = values.split_at_mut(k + 1);
        let next = &tail[0];
        let stage: Vec<(f64, usize)> = (0..n)
            .into_par_iter()
            .map(|s| {
                let mut best = (f64::INFINITY, usize::MAX);
                for &a in p.admissible(s) {
                    let row = p.row(s, a).expect("admissible");
                    let cont: f64 = row.iter().zip(next).map(|(&pr, &v)| pr * v).sum();
                    let q = p.stage_cost(s, a).expect("admissible")
                        + cont
                        + p.fail_mass(s, a).expect("admissible") * delta;
                    if q < best.0 {
                        best = (q, a);
                    }
                }
                best
            })
            .collect();
        for (s, (q, a)) in stage.into_iter().enumerate() {
            head[k][s] = q;
            rules[k][s] = a;
        }
    }

    let policy = Policy::new(p, rules)?;
    Ok((policy, PenaltyTable { values }))
}

/// Convenience wrapper for `zeta(x) = lambda * x + delta`.
pub fn solve_affine_penalty(p: &Problem, lambda: f64, delta: f64) -> Result<(Policy, PenaltyTable)> {
    solve_penalty_dp(p, &PenaltySpec::Affine { lambda, delta })
}

/// Result of a commutation check on one finite scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutationReport {
    /// `zeta(E[V])`.
    pub lhs: f64,
    /// `E[zeta(V)]`, `+infinity` if any positive-probability point maps to it.
    pub rhs: f64,
    pub commutes: bool,
}

/// Checks whether `penalty` commutes with the expectation over a finite
/// scenario of safety-probability values. Infinities compare symbolically:
/// two infinite sides commute, a finite and an infinite side never do.
pub fn check_commutation(
    penalty: &PenaltySpec,
    scenario: &[(f64, f64)],
) -> Result<CommutationReport> {
    penalty.validate()?;
    if scenario.is_empty() {
        return Err(Error::InvalidArgument("scenario is empty".into()));
    }
    let mut total_prob = 0.0;
    for &(v, prob) in scenario {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "scenario value {v} is outside [0, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::InvalidArgument(format!(
                "scenario probability {prob} is outside [0, 1]"
            )));
        }
        total_prob += prob;
    }
    if (total_prob - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "scenario probabilities sum to {total_prob}, expected 1"
        )));
    }

    let mean: f64 = scenario.iter().map(|&(v, prob)| prob * v).sum();
    let lhs = penalty.apply(mean.clamp(0.0, 1.0));
    let mut rhs = 0.0;
    for &(v, prob) in scenario {
        if prob == 0.0 {
            continue;
        }
        let z = penalty.apply(v);
        if z.is_infinite() {
            rhs = f64::INFINITY;
            break;
        }
        rhs += prob * z;
    }
    let commutes = if lhs.is_infinite() || rhs.is_infinite() {
        lhs.is_infinite() && rhs.is_infinite()
    } else {
        (lhs - rhs).abs() <= FEASIBILITY_TOL
    };
    Ok(CommutationReport { lhs, rhs, commutes })
}

/// One row of a lambda sweep: the greedy policy of the penalized DP at this
/// lambda, its true expected cost and its true MWPS.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub cost: f64,
    pub mwps: f64,
    pub policy: Policy,
}

/// Runs `solve_affine_penalty` for each lambda with `delta = -lambda` (so a
/// certainly-safe policy incurs zero penalty and `-lambda` prices a unit of
/// failure probability), then evaluates the greedy policy's plain cost and
/// MWPS. Rows come back sorted by lambda.
pub fn sweep_lambda(p: &Problem, lambdas: &[f64]) -> Result<Vec<SweepRow>> {
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite lambdas"));
    let mut rows = Vec::with_capacity(sorted.len());
    for lambda in sorted {
        if !lambda.is_finite() {
            return Err(Error::Validation(format!("lambda = {lambda} is not finite")));
        }
        let (policy, _) = solve_affine_penalty(p, lambda, -lambda)?;
        let cost = policy_expected_cost(p, &policy)?;
        let mwps = mwps_backward(p, &policy)?.mwps(p);
        rows.push(SweepRow {
            lambda,
            cost,
            mwps,
            policy,
        });
    }
    Ok(rows)
}

/// CSV rows `lambda,cost,mwps,policy_id` for a sweep.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lambda,cost,mwps,policy_id\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.lambda,
            r.cost,
            r.mwps,
            r.policy.encode()
        ));
    }
    out
}

/// Expected total cost of a fixed policy by backward policy evaluation
/// (no penalty; the fail branch contributes nothing).
pub fn policy_expected_cost(p: &Problem, pi: &Policy) -> Result<f64> {
    if pi.horizon() != p.horizon() {
        return Err(Error::PolicyLength {
            expected: p.horizon(),
            got: pi.horizon(),
        });
    }
    let n = p.n_states();
    let mut next: Vec<f64> = (0..n).map(|s| p.terminal_cost(s)).collect();
    for k in (0..p.horizon()).rev() {
        let cur: Vec<f64> = (0..n)
            .map(|s| {
                let a = pi.action(k, s);
                let row = p.row(s, a).expect("admissible");
                p.stage_cost(s, a).expect("admissible")
                    + row.iter().zip(&next).map(|(&pr, &v)| pr * v).sum::<f64>()
            })
            .collect();
        next = cur;
    }
    Ok(next[p.initial_state()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn chain_strong_penalty_picks_constrained_optimum() {
        let p = fixtures::chain_v1();
        let (policy, table) = solve_affine_penalty(&p, -12.0, 12.0).unwrap();
        assert_eq!(policy.rules(), &[vec![0], vec![1]]);
        assert!((table.optimal_value(&p) - 2.208).abs() < 1e-12);
    }

    #[test]
    fn chain_weak_penalty_stays_risky() {
        let p = fixtures::chain_v1();
        let (policy, table) = solve_affine_penalty(&p, -10.0, 10.0).unwrap();
        assert_eq!(policy.rules(), &[vec![0], vec![0]]);
        assert!((table.optimal_value(&p) - 1.9).abs() < 1e-12);
        let mwps = mwps_backward(&p, &policy).unwrap().mwps(&p);
        assert!((mwps - 0.81).abs() < 1e-15);
        assert!(mwps < 0.85, "penalty too weak to enforce the risk bound");
    }

    #[test]
    fn zero_penalty_is_plain_dp() {
        let p = fixtures::chain_v1();
        let (policy, table) = solve_affine_penalty(&p, 0.0, 0.0).unwrap();
        assert_eq!(policy.rules(), &[vec![0], vec![0]]);
        assert_eq!(table.optimal_value(&p), 0.0);
    }

    #[test]
    fn exact_penalty_is_rejected() {
        let p = fixtures::chain_v1();
        let err = solve_penalty_dp(&p, &PenaltySpec::Exact { epsilon: 0.1 }).unwrap_err();
        assert!(matches!(err, Error::ExactPenaltyUnsupported));
        assert!(err.to_string().contains("commute"));
    }

    #[test]
    fn affine_commutes_exact_does_not() {
        let scenario = [(0.8, 0.5), (1.0, 0.5)];
        let affine = PenaltySpec::Affine {
            lambda: -12.0,
            delta: 12.0,
        };
        let r = check_commutation(&affine, &scenario).unwrap();
        assert!(r.commutes);
        assert!((r.lhs - 1.2).abs() < 1e-12);
        assert!((r.rhs - 1.2).abs() < 1e-12);

        let exact = PenaltySpec::Exact { epsilon: 0.1 };
        let r = check_commutation(&exact, &scenario).unwrap();
        assert!(!r.commutes);
        assert_eq!(r.lhs, 0.0, "E[V] = 0.9 sits exactly on the boundary");
        assert!(r.rhs.is_infinite());
    }

    #[test]
    fn point_mass_scenario_always_commutes() {
        for penalty in [
            PenaltySpec::Affine {
                lambda: 3.0,
                delta: -1.0,
            },
            PenaltySpec::Exact { epsilon: 0.3 },
        ] {
            let r = check_commutation(&penalty, &[(0.4, 1.0)]).unwrap();
            assert!(r.commutes);
        }
    }

    #[test]
    fn sweep_reproduces_frontier() {
        let p = fixtures::chain_v1();
        let rows = sweep_lambda(&p, &[-10.0, -100.0, -12.0]).unwrap();
        let mwps: Vec<f64> = rows.iter().map(|r| r.mwps).collect();
        // Sorted by lambda: -100, -12, -10.
        assert!((mwps[0] - 0.9801).abs() < 1e-12);
        assert!((mwps[1] - 0.891).abs() < 1e-12);
        assert!((mwps[2] - 0.81).abs() < 1e-12);
        // Stronger penalty (more negative lambda) never loses safety.
        assert!(mwps[0] >= mwps[1] && mwps[1] >= mwps[2]);

        let unconstrained = sweep_lambda(&p, &[0.0]).unwrap();
        assert!((unconstrained[0].mwps - 0.81).abs() < 1e-12);
    }

    #[test]
    fn sweep_on_zero_fail_problem_is_flat() {
        let mut data = fixtures::chain_v1_data();
        for row in &mut data.kernel {
            row.probs.insert("A".into(), 1.0);
        }
        let p = crate::problem::Problem::build(&data).unwrap();
        for row in sweep_lambda(&p, &[-50.0, -1.0, 0.0]).unwrap() {
            assert_eq!(row.mwps, 1.0);
        }
    }

    #[test]
    fn expected_cost_matches_hand_values() {
        let p = fixtures::chain_v1();
        let pi = crate::problem::Policy::new(&p, vec![vec![0], vec![1]]).unwrap();
        assert!((policy_expected_cost(&p, &pi).unwrap() - 0.9).abs() < 1e-15);
        let pi = crate::problem::Policy::new(&p, vec![vec![1], vec![1]]).unwrap();
        assert!((policy_expected_cost(&p, &pi).unwrap() - 1.99).abs() < 1e-15);
    }
}
