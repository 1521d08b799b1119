//! Deterministic fixtures and seeded random instance generators used by the
//! verification suites (and shipped as JSON next to the CLI).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discretize::{ContinuousSpec, Dynamics, GridSpec};
use crate::problem::{CostEntry, KernelRow, Policy, Problem, ProblemData};

/// Two-action single-state chain: action `a1` is free but risky (0.1 fail
/// mass), `a2` costs 1 and is safer (0.01 fail mass). Horizon 2, risk bound
/// 0.15, so exactly the policies with at most one `a1` step are feasible.
pub fn chain_v1_data() -> ProblemData {
    ProblemData {
        states: vec!["A".into()],
        fail: "X".into(),
        actions: vec!["a1".into(), "a2".into()],
        admissible: BTreeMap::new(),
        kernel: vec![
            KernelRow {
                state: "A".into(),
                action: "a1".into(),
                probs: [("A".to_string(), 0.9)].into_iter().collect(),
            },
            KernelRow {
                state: "A".into(),
                action: "a2".into(),
                probs: [("A".to_string(), 0.99)].into_iter().collect(),
            },
        ],
        stage_cost: vec![
            CostEntry {
                state: "A".into(),
                action: "a1".into(),
                value: 0.0,
            },
            CostEntry {
                state: "A".into(),
                action: "a2".into(),
                value: 1.0,
            },
        ],
        terminal_cost: [("A".to_string(), 0.0)].into_iter().collect(),
        horizon: 2,
        risk_bound: 0.15,
        initial_state: "A".into(),
    }
}

pub fn chain_v1() -> Problem {
    Problem::build(&chain_v1_data()).expect("chain-v1 fixture is valid")
}

/// Three-state fixture on which the literal augmented mode provably
/// overclaims: from `S` every action splits mass evenly onto `L` and `R`,
/// and at stage 1 the cheap action differs between `L` and `R`. Shared-action
/// survivor propagation certifies terminal masses 0.9 and 0.925, while the
/// executed per-state mix only achieves 0.875 < 1 - risk_bound = 0.9.
pub fn split_v1_data() -> ProblemData {
    let mut kernel = Vec::new();
    for a in ["m", "a", "b"] {
        kernel.push(KernelRow {
            state: "S".into(),
            action: a.into(),
            probs: [("L".to_string(), 0.5), ("R".to_string(), 0.5)]
                .into_iter()
                .collect(),
        });
    }
    for (state, action, p) in [
        ("L", "m", 0.5),
        ("L", "a", 0.9),
        ("L", "b", 1.0),
        ("R", "m", 0.5),
        ("R", "a", 0.9),
        ("R", "b", 0.85),
    ] {
        kernel.push(KernelRow {
            state: state.into(),
            action: action.into(),
            probs: [(state.to_string(), p)].into_iter().collect(),
        });
    }
    let mut stage_cost = Vec::new();
    for state in ["S", "L", "R"] {
        for action in ["m", "a", "b"] {
            let value = match (state, action) {
                ("S", _) => 0.0,
                (_, "m") => 5.0,
                ("L", "a") | ("R", "b") => 0.0,
                ("L", "b") | ("R", "a") => 10.0,
                _ => unreachable!(),
            };
            stage_cost.push(CostEntry {
                state: state.into(),
                action: action.into(),
                value,
            });
        }
    }
    ProblemData {
        states: vec!["S".into(), "L".into(), "R".into()],
        fail: "X".into(),
        actions: vec!["m".into(), "a".into(), "b".into()],
        admissible: BTreeMap::new(),
        kernel,
        stage_cost,
        terminal_cost: [("S", 0.0), ("L", 0.0), ("R", 0.0)]
            .into_iter()
            .map(|(s, v)| (s.to_string(), v))
            .collect(),
        horizon: 2,
        risk_bound: 0.1,
        initial_state: "S".into(),
    }
}

pub fn split_v1() -> Problem {
    Problem::build(&split_v1_data()).expect("split-v1 fixture is valid")
}

/// One-dimensional double-integrator-free benchmark: s' = s + a + w with
/// tight actuation, quadratic costs and a [-1, 1] safe corridor over two
/// stages. The noise is so small that the safety constraint is numerically
/// inactive from the default start.
pub fn case_study_spec() -> ContinuousSpec {
    ContinuousSpec {
        dynamics: Dynamics::default(),
        noise_std: 0.01,
        action_interval: [-0.1, 0.1],
        safe_interval: [-1.0, 1.0],
        stage_state_coeff: 1.0,
        stage_action_coeff: 1.0,
        terminal_state_coeff: 1.0,
        horizon: 2,
        risk_bound: 0.1,
        initial_state: 0.5,
    }
}

/// Variant with 5x the noise and a start near the unsafe boundary. Here the
/// zero-cost absorbing fail state makes the unconstrained optimum steer out
/// of the corridor on purpose, so the chance constraint is genuinely active.
pub fn case_study_risk_active_spec() -> ContinuousSpec {
    ContinuousSpec {
        noise_std: 0.05,
        initial_state: 0.9,
        ..case_study_spec()
    }
}

pub fn case_study_grid() -> GridSpec {
    GridSpec {
        n_state_cells: 401,
        n_actions: 21,
    }
}

/// Bounds for the random tabular instances used by the verification suites.
#[derive(Debug, Clone, Copy)]
pub struct RandomBounds {
    pub max_states: usize,
    pub max_actions: usize,
    pub max_horizon: usize,
}

impl RandomBounds {
    /// Sizes small enough for exhaustive policy enumeration.
    pub fn tiny() -> Self {
        RandomBounds {
            max_states: 4,
            max_actions: 3,
            max_horizon: 3,
        }
    }

    /// Sizes for the three-route safety-probability agreement checks.
    pub fn small() -> Self {
        RandomBounds {
            max_states: 6,
            max_actions: 3,
            max_horizon: 4,
        }
    }
}

/// Seeded random tabular problem within `bounds`. All actions are admissible
/// everywhere and all kernel entries are strictly positive, so every state
/// stays reachable and brute-force optima are generically unique. Roughly a
/// fifth of the rows carry no fail mass.
pub fn random_problem(rng: &mut ChaCha8Rng, bounds: RandomBounds) -> Problem {
    let n_states = rng.gen_range(1..=bounds.max_states);
    let n_actions = rng.gen_range(1..=bounds.max_actions);
    let horizon = rng.gen_range(1..=bounds.max_horizon);

    let states: Vec<String> = (0..n_states).map(|i| format!("s{i}")).collect();
    let actions: Vec<String> = (0..n_actions).map(|i| format!("a{i}")).collect();

    let mut kernel = Vec::new();
    let mut stage_cost = Vec::new();
    for s in &states {
        for a in &actions {
            let raw: Vec<f64> = (0..n_states).map(|_| rng.gen_range(0.05..1.0)).collect();
            let raw_sum: f64 = raw.iter().sum();
            let target = if rng.gen_bool(0.2) {
                1.0
            } else {
                rng.gen_range(0.3..0.95)
            };
            let probs = states
                .iter()
                .cloned()
                .zip(raw.iter().map(|v| v * target / raw_sum))
                .collect();
            kernel.push(KernelRow {
                state: s.clone(),
                action: a.clone(),
                probs,
            });
            stage_cost.push(CostEntry {
                state: s.clone(),
                action: a.clone(),
                value: rng.gen_range(0.0..4.0),
            });
        }
    }

    let data = ProblemData {
        states: states.clone(),
        fail: "fail".into(),
        actions,
        admissible: BTreeMap::new(),
        kernel,
        stage_cost,
        terminal_cost: states
            .iter()
            .map(|s| (s.clone(), rng.gen_range(0.0..2.0)))
            .collect(),
        horizon,
        risk_bound: rng.gen_range(0.0..1.0),
        initial_state: states[rng.gen_range(0..n_states)].clone(),
    };
    Problem::build(&data).expect("random instance is valid by construction")
}

/// Uniformly random admissible Markov policy for `p`.
pub fn random_policy(rng: &mut ChaCha8Rng, p: &Problem) -> Policy {
    let rules = (0..p.horizon())
        .map(|_| {
            (0..p.n_states())
                .map(|s| {
                    let adm = p.admissible(s);
                    adm[rng.gen_range(0..adm.len())]
                })
                .collect()
        })
        .collect();
    Policy::new(p, rules).expect("random policy is admissible by construction")
}

/// Convenience seeded generator.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instances_are_valid_and_deterministic() {
        let mut r1 = rng(7);
        let mut r2 = rng(7);
        for _ in 0..50 {
            let a = random_problem(&mut r1, RandomBounds::small());
            let b = random_problem(&mut r2, RandomBounds::small());
            assert_eq!(a, b);
            let pi = random_policy(&mut r1, &a);
            let _ = random_policy(&mut r2, &b);
            assert_eq!(pi.horizon(), a.horizon());
        }
    }

    #[test]
    fn split_fixture_masses() {
        let p = split_v1();
        let s = p.state_index("S").unwrap();
        let l = p.state_index("L").unwrap();
        let r = p.state_index("R").unwrap();
        let a = p.action_index("a").unwrap();
        let b = p.action_index("b").unwrap();
        assert_eq!(p.fail_mass(s, a).unwrap(), 0.0);
        assert!((p.fail_mass(l, a).unwrap() - 0.1).abs() < 1e-15);
        assert!((p.fail_mass(r, b).unwrap() - 0.15).abs() < 1e-15);
    }
}
