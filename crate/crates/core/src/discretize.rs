//! Grid discretization of the one-dimensional Gaussian-affine benchmark
//! family: s' = c_s * s + c_a * a + w with w ~ N(0, sigma^2), a safe interval
//! that becomes the tabular safe set, and quadratic costs evaluated at cell
//! midpoints. Kernel entries are exact Gaussian cell masses (CDF differences),
//! so the only discretization error is the midpoint representation itself.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::problem::{CostEntry, KernelRow, Problem, ProblemData};

/// Affine map coefficients of the deterministic part of the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dynamics {
    #[serde(default = "one")]
    pub state_coeff: f64,
    #[serde(default = "one")]
    pub action_coeff: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Dynamics {
            state_coeff: 1.0,
            action_coeff: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Continuous problem description; `discretize` turns it into a `Problem`.
///
/// Stage cost is `stage_state_coeff * s^2 + stage_action_coeff * a^2`,
/// terminal cost is `terminal_state_coeff * s^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousSpec {
    #[serde(default)]
    pub dynamics: Dynamics,
    pub noise_std: f64,
    pub action_interval: [f64; 2],
    pub safe_interval: [f64; 2],
    #[serde(default = "one")]
    pub stage_state_coeff: f64,
    #[serde(default = "one")]
    pub stage_action_coeff: f64,
    #[serde(default = "one")]
    pub terminal_state_coeff: f64,
    pub horizon: usize,
    pub risk_bound: f64,
    pub initial_state: f64,
}

impl ContinuousSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            return Err(Error::Validation(format!(
                "field `noise_std` = {} must be positive",
                self.noise_std
            )));
        }
        let [a_min, a_max] = self.action_interval;
        if !(a_min.is_finite() && a_max.is_finite() && a_min <= a_max) {
            return Err(Error::Validation(format!(
                "field `action_interval` = [{a_min}, {a_max}] must satisfy a_min <= a_max"
            )));
        }
        let [lo, hi] = self.safe_interval;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Validation(format!(
                "field `safe_interval` = [{lo}, {hi}] must satisfy lo < hi"
            )));
        }
        if !(self.initial_state >= lo && self.initial_state <= hi) {
            return Err(Error::Validation(format!(
                "field `initial_state` = {} lies outside the safe interval [{lo}, {hi}]",
                self.initial_state
            )));
        }
        for (name, v) in [
            ("dynamics.state_coeff", self.dynamics.state_coeff),
            ("dynamics.action_coeff", self.dynamics.action_coeff),
            ("stage_state_coeff", self.stage_state_coeff),
            ("stage_action_coeff", self.stage_action_coeff),
            ("terminal_state_coeff", self.terminal_state_coeff),
        ] {
            if !v.is_finite() {
                return Err(Error::Validation(format!("field `{name}` is not finite")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::Validation("field `horizon` must be >= 1".into()));
        }
        if !self.risk_bound.is_finite() || !(0.0..=1.0).contains(&self.risk_bound) {
            return Err(Error::Validation(format!(
                "field `risk_bound` = {} is outside [0, 1]",
                self.risk_bound
            )));
        }
        Ok(())
    }

    pub fn stage_cost(&self, s: f64, a: f64) -> f64 {
        self.stage_state_coeff * s * s + self.stage_action_coeff * a * a
    }

    pub fn terminal_cost(&self, s: f64) -> f64 {
        self.terminal_state_coeff * s * s
    }
}

/// Discretization resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_state_cells: usize,
    pub n_actions: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_state_cells < 2 {
            return Err(Error::Validation(format!(
                "field `n_state_cells` = {} must be >= 2",
                self.n_state_cells
            )));
        }
        if self.n_actions < 2 {
            return Err(Error::Validation(format!(
                "field `n_actions` = {} must be >= 2",
                self.n_actions
            )));
        }
        Ok(())
    }
}

/// A discretized problem plus the geometry needed to map the tabular policy
/// back onto the continuous system.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub problem: Problem,
    pub spec: ContinuousSpec,
    pub grid: GridSpec,
    /// Cell midpoints, ascending.
    pub midpoints: Vec<f64>,
    /// Action values, ascending.
    pub action_values: Vec<f64>,
    pub cell_width: f64,
}

impl Discretization {
    /// Index of the cell containing `x`; `x` must lie in the safe interval.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        let [lo, hi] = self.spec.safe_interval;
        if !(lo..=hi).contains(&x) {
            return None;
        }
        let i = ((x - lo) / self.cell_width) as usize;
        Some(i.min(self.grid.n_state_cells - 1))
    }
}

/// Standard normal CDF. `erfc` keeps the tails accurate.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Gaussian measure of [a, b] under N(mean, std^2).
pub fn gaussian_interval_mass(mean: f64, std: f64, a: f64, b: f64) -> f64 {
    normal_cdf((b - mean) / std) - normal_cdf((a - mean) / std)
}

/// Splits the safe interval into equal cells represented by their midpoints
/// and builds the tabular problem: the kernel entry for (cell i, action a,
/// cell j) is the Gaussian measure of cell j around the pushed-forward
/// midpoint of cell i, mass outside the safe interval goes to fail, and the
/// costs are evaluated at midpoints.
pub fn discretize(spec: &ContinuousSpec, grid: &GridSpec) -> Result<Discretization> {
    spec.validate()?;
    grid.validate()?;

    let [lo, hi] = spec.safe_interval;
    let n = grid.n_state_cells;
    let width = (hi - lo) / n as f64;
    let midpoints: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * width).collect();

    let [a_min, a_max] = spec.action_interval;
    let m = grid.n_actions;
    let action_values: Vec<f64> = (0..m)
        .map(|i| a_min + i as f64 * (a_max - a_min) / (m - 1) as f64)
        .collect();

    let digits = |len: usize| (len as f64).log10().ceil().max(1.0) as usize;
    let sd = digits(n);
    let ad = digits(m);
    let states: Vec<String> = (0..n).map(|i| format!("c{i:0sd$}")).collect();
    let actions: Vec<String> = (0..m).map(|i| format!("a{i:0ad$}")).collect();

    let mut kernel = Vec::with_capacity(n * m);
    let mut stage_cost = Vec::with_capacity(n * m);
    for (i, &mid) in midpoints.iter().enumerate() {
        for (j, &a) in action_values.iter().enumerate() {
            let mean = spec.dynamics.state_coeff * mid + spec.dynamics.action_coeff * a;
            let probs = (0..n)
                .map(|t| {
                    let cell_lo = lo + t as f64 * width;
                    let cell_hi = lo + (t + 1) as f64 * width;
                    let p = gaussian_interval_mass(mean, spec.noise_std, cell_lo, cell_hi);
                    (states[t].clone(), p.max(0.0))
                })
                .filter(|(_, p)| *p > 0.0)
                .collect();
            kernel.push(KernelRow {
                state: states[i].clone(),
                action: actions[j].clone(),
                probs,
            });
            stage_cost.push(CostEntry {
                state: states[i].clone(),
                action: actions[j].clone(),
                value: spec.stage_cost(mid, a),
            });
        }
    }

    let initial_cell = {
        let i = ((spec.initial_state - lo) / width) as usize;
        i.min(n - 1)
    };

    let data = ProblemData {
        states: states.clone(),
        fail: "fail".into(),
        actions,
        admissible: Default::default(),
        kernel,
        stage_cost,
        terminal_cost: states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), spec.terminal_cost(midpoints[i])))
            .collect(),
        horizon: spec.horizon,
        risk_bound: spec.risk_bound,
        initial_state: states[initial_cell].clone(),
    };

    Ok(Discretization {
        problem: Problem::build(&data)?,
        spec: spec.clone(),
        grid: *grid,
        midpoints,
        action_values,
        cell_width: width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn three_cell_spec() -> (ContinuousSpec, GridSpec) {
        // Middle cell is exactly [-0.005, 0.005], half a noise std wide each way.
        let spec = ContinuousSpec {
            dynamics: Dynamics::default(),
            noise_std: 0.01,
            action_interval: [-0.01, 0.01],
            safe_interval: [-0.015, 0.015],
            stage_state_coeff: 1.0,
            stage_action_coeff: 1.0,
            terminal_state_coeff: 1.0,
            horizon: 2,
            risk_bound: 0.1,
            initial_state: 0.0,
        };
        let grid = GridSpec {
            n_state_cells: 3,
            n_actions: 3,
        };
        (spec, grid)
    }

    #[test]
    fn case_study_grid_has_401_states() {
        let d = discretize(&fixtures::case_study_spec(), &fixtures::case_study_grid()).unwrap();
        assert_eq!(d.problem.n_states(), 401);
        assert_eq!(d.problem.n_actions(), 21);
        assert_eq!(d.problem.horizon(), 2);
        assert!((d.problem.risk_bound() - 0.1).abs() < 1e-15);
        // 401 cells put a midpoint exactly at zero.
        assert!(d.midpoints[200].abs() < 1e-12);
        // 21 actions include exactly zero.
        assert!(d.action_values[10].abs() < 1e-15);
    }

    #[test]
    fn center_cell_mass_matches_normal_cdf() {
        let (spec, grid) = three_cell_spec();
        let d = discretize(&spec, &grid).unwrap();
        let center = 1;
        let zero_action = 1;
        assert!(d.midpoints[center].abs() < 1e-15);
        assert!(d.action_values[zero_action].abs() < 1e-15);
        let row = d.problem.row(center, zero_action).unwrap();
        // z = half-width / sigma = 0.5 on each side.
        let expected = normal_cdf(0.5) - normal_cdf(-0.5);
        assert!((row[center] - expected).abs() < 1e-12);
        assert!((row[center] - 0.3829249).abs() < 1e-6);
    }

    #[test]
    fn huge_noise_sends_mass_to_fail() {
        let spec = ContinuousSpec {
            noise_std: 10.0,
            ..fixtures::case_study_spec()
        };
        let grid = GridSpec {
            n_state_cells: 8,
            n_actions: 3,
        };
        let d = discretize(&spec, &grid).unwrap();
        for s in 0..d.problem.n_states() {
            for &a in d.problem.admissible(s) {
                assert!(d.problem.fail_mass(s, a).unwrap() > 0.9);
            }
        }
    }

    #[test]
    fn rows_plus_fail_mass_conserve_probability() {
        let (spec, grid) = three_cell_spec();
        let d = discretize(&spec, &grid).unwrap();
        for s in 0..3 {
            for a in 0..3 {
                let row = d.problem.transition_row(s, a).unwrap();
                let total: f64 = row.safe.iter().sum::<f64>() + row.fail_mass;
                assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn refining_the_grid_halves_the_midpoint_error() {
        // Aggregated transition probability into a fixed target interval vs
        // the exact Gaussian measure from the true source point. The only
        // error is the source-cell midpoint offset; the sources sit at thirds
        // of the interval, where that offset is exactly one sixth of a cell
        // at every dyadic refinement level, so it halves with the grid step.
        let spec = ContinuousSpec {
            noise_std: 0.3,
            action_interval: [-0.1, 0.1],
            ..fixtures::case_study_spec()
        };
        // Targets sit off-center of each pushed-forward mean so the error is
        // first-order in the midpoint offset and the halving is clean.
        let third = 1.0 / 3.0;
        let cases = [
            (third, 0.0, [0.25, 0.75]),
            (-third, 0.1, [-0.125, 0.375]),
            (-2.0 * third, -0.1, [-0.75, -0.375]),
        ];
        for (source, action, target) in cases {
            let exact = gaussian_interval_mass(
                spec.dynamics.state_coeff * source + spec.dynamics.action_coeff * action,
                spec.noise_std,
                target[0],
                target[1],
            );
            let mut errors = Vec::new();
            for n in [32usize, 64, 128, 256] {
                let grid = GridSpec {
                    n_state_cells: n,
                    n_actions: 3,
                };
                let d = discretize(&spec, &grid).unwrap();
                let s = d.cell_of(source).unwrap();
                let a = d
                    .action_values
                    .iter()
                    .position(|&v| (v - action).abs() < 1e-12)
                    .unwrap();
                let row = d.problem.row(s, a).unwrap();
                let aggregated: f64 = (0..n)
                    .filter(|&t| {
                        let lo = -1.0 + t as f64 * d.cell_width;
                        let hi = lo + d.cell_width;
                        lo >= target[0] - 1e-12 && hi <= target[1] + 1e-12
                    })
                    .map(|t| row[t])
                    .sum();
                errors.push((aggregated - exact).abs());
            }
            for w in errors.windows(2) {
                assert!(
                    w[1] <= 0.55 * w[0] + 1e-12,
                    "errors not halving: {errors:?} (source {source}, action {action})"
                );
            }
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut spec = fixtures::case_study_spec();
        spec.noise_std = 0.0;
        assert!(discretize(&spec, &fixtures::case_study_grid()).is_err());

        let mut spec = fixtures::case_study_spec();
        spec.safe_interval = [1.0, -1.0];
        assert!(discretize(&spec, &fixtures::case_study_grid()).is_err());

        let mut spec = fixtures::case_study_spec();
        spec.initial_state = 3.0;
        assert!(discretize(&spec, &fixtures::case_study_grid()).is_err());

        let spec = fixtures::case_study_spec();
        let grid = GridSpec {
            n_state_cells: 1,
            n_actions: 2,
        };
        assert!(discretize(&spec, &grid).is_err());
    }
}
