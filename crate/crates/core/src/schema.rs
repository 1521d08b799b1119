//! JSON file formats: tabular problems (the `ProblemData` shape), continuous
//! problems under a top-level `"continuous"` key carrying its `"grid"`, and
//! per-stage policy files. Loaders reject unknown keys.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::discretize::{discretize, ContinuousSpec, Discretization, GridSpec};
use crate::error::{Error, Result};
use crate::problem::{Policy, Problem, ProblemData};

/// A loaded problem file: either tabular data or a discretized continuous
/// specification (which keeps its grid geometry for closed-loop simulation).
#[derive(Debug, Clone)]
pub enum LoadedProblem {
    Tabular(Problem),
    Continuous(Box<Discretization>),
}

impl LoadedProblem {
    pub fn problem(&self) -> &Problem {
        match self {
            LoadedProblem::Tabular(p) => p,
            LoadedProblem::Continuous(d) => &d.problem,
        }
    }
}

/// Parses a problem from JSON text. Syntax errors keep serde_json's line
/// and column context; schema violations name the offending key.
pub fn problem_from_str(text: &str) -> Result<LoadedProblem> {
    let value: Value = serde_json::from_str(text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Validation("problem file must be a JSON object".into()))?;
    if obj.contains_key("continuous") {
        let extra: Vec<&String> = obj.keys().filter(|k| *k != "continuous").collect();
        if !extra.is_empty() {
            return Err(Error::Validation(format!(
                "unknown keys next to `continuous`: {extra:?}"
            )));
        }
        let mut block = obj["continuous"]
            .as_object()
            .ok_or_else(|| Error::Validation("`continuous` must be an object".into()))?
            .clone();
        let grid_value = block
            .remove("grid")
            .ok_or_else(|| Error::Validation("`continuous` is missing key `grid`".into()))?;
        let grid: GridSpec = serde_json::from_value(grid_value)?;
        let spec: ContinuousSpec = serde_json::from_value(Value::Object(block))?;
        Ok(LoadedProblem::Continuous(Box::new(discretize(
            &spec, &grid,
        )?)))
    } else {
        let data: ProblemData = serde_json::from_value(value)?;
        Ok(LoadedProblem::Tabular(Problem::build(&data)?))
    }
}

/// Loads and validates a problem file from disk.
pub fn load_problem(path: &Path) -> Result<LoadedProblem> {
    let text = std::fs::read_to_string(path)?;
    problem_from_str(&text)
}

/// Serializes a tabular problem in the file schema, kernel and cost arrays
/// in canonical order.
pub fn problem_to_json(p: &Problem) -> Result<String> {
    Ok(serde_json::to_string_pretty(&p.to_data())?)
}

/// Policy file: one state-name -> action-name map per stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub rules: Vec<BTreeMap<String, String>>,
}

pub fn policy_from_str(p: &Problem, text: &str) -> Result<Policy> {
    let file: PolicyFile = serde_json::from_str(text)?;
    Policy::from_names(p, &file.rules)
}

pub fn load_policy(p: &Problem, path: &Path) -> Result<Policy> {
    let text = std::fs::read_to_string(path)?;
    policy_from_str(p, &text)
}

pub fn policy_to_json(p: &Problem, pi: &Policy) -> Result<String> {
    Ok(serde_json::to_string_pretty(&PolicyFile {
        rules: pi.to_names(p),
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn tabular_round_trip_is_bitwise() {
        let p = fixtures::chain_v1();
        let text = problem_to_json(&p).unwrap();
        let reloaded = problem_from_str(&text).unwrap();
        let q = reloaded.problem();
        assert_eq!(&p, q);
        // Serialize again: identical bytes.
        assert_eq!(text, problem_to_json(q).unwrap());
    }

    #[test]
    fn random_problems_round_trip() {
        let mut rng = fixtures::rng(31);
        for _ in 0..25 {
            let p = fixtures::random_problem(&mut rng, fixtures::RandomBounds::small());
            let text = problem_to_json(&p).unwrap();
            let reloaded = problem_from_str(&text).unwrap();
            assert_eq!(&p, reloaded.problem());
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let p = fixtures::chain_v1();
        let mut v: Value = serde_json::from_str(&problem_to_json(&p).unwrap()).unwrap();
        v.as_object_mut()
            .unwrap()
            .insert("surprise".into(), Value::Null);
        let err = problem_from_str(&serde_json::to_string(&v).unwrap()).unwrap_err();
        assert!(err.to_string().contains("surprise"), "got: {err}");
    }

    #[test]
    fn bad_risk_bound_is_rejected_at_load() {
        let mut data = fixtures::chain_v1_data();
        data.risk_bound = 1.5;
        let text = serde_json::to_string(&data).unwrap();
        let err = problem_from_str(&text).unwrap_err();
        assert!(err.to_string().contains("risk_bound"));
    }

    #[test]
    fn continuous_file_discretizes() {
        let text = r#"{
            "continuous": {
                "noise_std": 0.01,
                "action_interval": [-0.1, 0.1],
                "safe_interval": [-1.0, 1.0],
                "horizon": 2,
                "risk_bound": 0.1,
                "initial_state": 0.5,
                "grid": { "n_state_cells": 401, "n_actions": 21 }
            }
        }"#;
        let loaded = problem_from_str(text).unwrap();
        assert_eq!(loaded.problem().n_states(), 401);
        match loaded {
            LoadedProblem::Continuous(d) => assert_eq!(d.action_values.len(), 21),
            LoadedProblem::Tabular(_) => panic!("expected continuous"),
        }
    }

    #[test]
    fn continuous_file_rejects_unknown_and_sibling_keys() {
        let text = r#"{ "continuous": { "noise_std": 0.01 }, "extra": 1 }"#;
        assert!(problem_from_str(text).is_err());
        let text = r#"{
            "continuous": {
                "noise_std": 0.01,
                "action_interval": [-0.1, 0.1],
                "safe_interval": [-1.0, 1.0],
                "horizon": 2,
                "risk_bound": 0.1,
                "initial_state": 0.5,
                "bogus": true,
                "grid": { "n_state_cells": 41, "n_actions": 5 }
            }
        }"#;
        let err = problem_from_str(text).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn policy_file_round_trip() {
        let p = fixtures::chain_v1();
        let pi = Policy::new(&p, vec![vec![0], vec![1]]).unwrap();
        let text = policy_to_json(&p, &pi).unwrap();
        let back = policy_from_str(&p, &text).unwrap();
        assert_eq!(pi, back);
    }
}
