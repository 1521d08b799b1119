//! The affine-penalty DP must reproduce the brute-force penalized optimum
//! (minimum over every Markov policy of expected cost plus penalty) on
//! random tiny instances, and the lambda frontier must be monotone.

use mwcc_core::fixtures::{self, RandomBounds};
use mwcc_core::oracle::DEFAULT_POLICY_BUDGET;
use mwcc_core::{
    brute_force_constrained, check_commutation, solve_affine_penalty, sweep_lambda, PenaltySpec,
};

use proptest::prelude::*;
use rand::Rng;

#[test]
fn dp_matches_brute_force_penalized_optimum() {
    let mut rng = fixtures::rng(0x9e4a17);
    for round in 0..40 {
        let p = fixtures::random_problem(&mut rng, RandomBounds::tiny());
        let lambda = rng.gen_range(-20.0..5.0);
        let delta = rng.gen_range(-5.0..5.0);
        let (policy, table) = solve_affine_penalty(&p, lambda, delta).unwrap();
        let oracle = brute_force_constrained(&p, DEFAULT_POLICY_BUDGET).unwrap();
        let penalty = PenaltySpec::Affine { lambda, delta };
        let (best_value, best_row) = oracle.penalized_optimum(&penalty).unwrap();
        let dp_value = table.optimal_value(&p);
        assert!(
            (dp_value - best_value).abs() <= 1e-9,
            "round {round}: dp {dp_value} vs oracle {best_value}"
        );

        // Policy comparison only when the optimum is unique by a margin.
        let mut second = f64::INFINITY;
        for row in &oracle.rows {
            let v = row.cost + penalty.apply(row.mwps.clamp(0.0, 1.0));
            if row.policy != best_row.policy && v < second {
                second = v;
            }
        }
        if second - best_value > 1e-9 {
            assert_eq!(
                policy, best_row.policy,
                "round {round}: unique optimum, policies must match"
            );
        }
    }
}

#[test]
fn frontier_is_monotone_in_lambda() {
    let mut rng = fixtures::rng(0xf40);
    for _ in 0..25 {
        let p = fixtures::random_problem(&mut rng, RandomBounds::tiny());
        let lambdas: Vec<f64> = (0..6).map(|_| rng.gen_range(-40.0..0.0)).collect();
        let rows = sweep_lambda(&p, &lambdas).unwrap();
        for w in rows.windows(2) {
            // Rows are sorted by lambda ascending; smaller lambda means a
            // stronger penalty, so MWPS decreases along the sorted order.
            assert!(
                w[0].mwps >= w[1].mwps - 1e-12,
                "mwps must be non-increasing along ascending lambda: {} then {}",
                w[0].mwps,
                w[1].mwps
            );
        }
    }
}

proptest! {
    /// Affine penalties commute with expectations on any finite scenario.
    #[test]
    fn affine_commutes_everywhere(
        lambda in -50.0f64..50.0,
        delta in -50.0f64..50.0,
        raw in proptest::collection::vec((0.0f64..=1.0, 0.01f64..1.0), 1..6)
    ) {
        let total: f64 = raw.iter().map(|&(_, w)| w).sum();
        let scenario: Vec<(f64, f64)> =
            raw.iter().map(|&(v, w)| (v, w / total)).collect();
        let report = check_commutation(
            &PenaltySpec::Affine { lambda, delta },
            &scenario,
        ).unwrap();
        prop_assert!(report.commutes, "lhs {} rhs {}", report.lhs, report.rhs);
    }
}

#[test]
fn exact_penalty_fails_commutation_generically() {
    // Scenarios that straddle the feasibility threshold cannot commute.
    let penalty = PenaltySpec::Exact { epsilon: 0.2 };
    let scenario = [(0.99, 0.9), (0.1, 0.1)];
    let report = check_commutation(&penalty, &scenario).unwrap();
    assert!(!report.commutes);
    assert_eq!(report.lhs, 0.0);
    assert!(report.rhs.is_infinite());
}
