//! The three safety-probability routes (backward recursion, forward mass
//! propagation, exact trajectory enumeration) must agree to round-off on
//! random tabular instances with random policies.

use mwcc_core::fixtures::{self, RandomBounds};
use mwcc_core::{exact_policy_stats, monte_carlo_mwps, mwps_backward, mwps_forward};

use proptest::prelude::*;

#[test]
fn routes_agree_on_random_instances() {
    let mut rng = fixtures::rng(0x5afe);
    for _ in 0..60 {
        let p = fixtures::random_problem(&mut rng, RandomBounds::small());
        let pi = fixtures::random_policy(&mut rng, &p);
        let backward = mwps_backward(&p, &pi).unwrap().mwps(&p);
        let forward = mwps_forward(&p, &pi).unwrap();
        let (_, enumerated) = exact_policy_stats(&p, &pi).unwrap();
        assert!(
            (backward - forward).abs() <= 1e-12,
            "backward {backward} vs forward {forward}"
        );
        assert!(
            (backward - enumerated).abs() <= 1e-12,
            "backward {backward} vs enumeration {enumerated}"
        );
    }
}

#[test]
fn backward_values_stay_in_unit_interval() {
    let mut rng = fixtures::rng(0xbadc0de);
    for _ in 0..40 {
        let p = fixtures::random_problem(&mut rng, RandomBounds::small());
        let pi = fixtures::random_policy(&mut rng, &p);
        let table = mwps_backward(&p, &pi).unwrap();
        for row in table.values() {
            for &v in row {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}

#[test]
fn monte_carlo_sits_near_the_exact_value() {
    let mut rng = fixtures::rng(0x3aed);
    let mut far = 0;
    for seed in 0..10u64 {
        let p = fixtures::random_problem(&mut rng, RandomBounds::small());
        let pi = fixtures::random_policy(&mut rng, &p);
        let exact = mwps_backward(&p, &pi).unwrap().mwps(&p);
        let mc = monte_carlo_mwps(&p, &pi, 40_000, seed).unwrap();
        if (mc.estimate - exact).abs() > 3.0 * mc.std_error + 1e-12 {
            far += 1;
        }
    }
    assert!(far <= 1, "{far} of 10 estimates outside 3 sigma");
}

// proptest-generated single-state chains: survival through `n` stages is
// the product of per-stage stay probabilities on every route.
proptest! {
    #[test]
    fn single_state_chain_routes_agree(
        stay in proptest::collection::vec(0.0f64..=1.0, 1..5)
    ) {
        let mut data = fixtures::chain_v1_data();
        data.horizon = stay.len();
        data.risk_bound = 0.5;
        data.kernel[0].probs.insert("A".into(), stay[0]);
        data.kernel[1].probs.insert("A".into(), stay[0]);
        let p = mwcc_core::Problem::build(&data).unwrap();
        let pi = mwcc_core::Policy::new(&p, vec![vec![0]; stay.len()]).unwrap();
        // All stages share one kernel row here, so the exact answer is a power.
        let expected = stay[0].powi(stay.len() as i32);
        let backward = mwps_backward(&p, &pi).unwrap().mwps(&p);
        let forward = mwps_forward(&p, &pi).unwrap();
        prop_assert!((backward - expected).abs() <= 1e-12);
        prop_assert!((forward - expected).abs() <= 1e-12);
    }
}
