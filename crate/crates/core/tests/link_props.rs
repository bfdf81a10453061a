mod common;

use lorafl::exec::Execution;
use lorafl::linkmodel::{success_probability, AnalyticalParams};
use lorafl::linksim::{estimate_success, InterferenceConfig, LinkEnv};
use lorafl::phy::{RadioConfig, SfTables, SpreadingFactor};
use proptest::prelude::*;

fn env(intensity: f64) -> LinkEnv {
    let interference = InterferenceConfig { intensity_per_m2: intensity, ..Default::default() };
    LinkEnv::new(RadioConfig::default(), SfTables::default(), interference).unwrap()
}

fn sf() -> impl Strategy<Value = SpreadingFactor> {
    (7u8..=12).prop_map(|v| SpreadingFactor::new(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probability_is_bounded_and_decreasing_in_distance(sf in sf(), d in 1.0f64..3000.0, step in 1.0f64..500.0, lambda in 0.0f64..1e-3) {
        let p = AnalyticalParams::from_env(&env(lambda));
        let near = success_probability(sf, d, &p).unwrap();
        let far = success_probability(sf, d + step, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&near));
        prop_assert!(far <= near + 1e-12, "{far} > {near}");
    }

    #[test]
    fn probability_is_decreasing_in_intensity(sf in sf(), d in 1.0f64..1000.0, lambda in 0.0f64..1e-3, factor in 1.0f64..10.0) {
        let low = success_probability(sf, d, &AnalyticalParams::from_env(&env(lambda))).unwrap();
        let high = success_probability(sf, d, &AnalyticalParams::from_env(&env(lambda * factor))).unwrap();
        prop_assert!(high <= low + 1e-12, "{high} > {low}");
    }

    #[test]
    fn interference_free_limit_is_fading_outage(sf in sf(), d in 1.0f64..2000.0) {
        let got = success_probability(sf, d, &AnalyticalParams::from_env(&env(0.0))).unwrap();
        let want = common::fading_only_success(&RadioConfig::default(), &SfTables::default(), sf, d);
        prop_assert!((got - want).abs() <= 1e-6 * want.max(1e-300), "{got} vs {want}");
    }
}

#[test]
fn simulation_tracks_the_analytical_model() {
    let env = env(1e-5);
    let params = AnalyticalParams::from_env(&env);
    for (sf, d) in [(7, 300.0), (10, 500.0)] {
        let sf = SpreadingFactor::new(sf).unwrap();
        let mc = estimate_success(&env, sf, d, 20_000, 9, Execution::Parallel);
        let an = success_probability(sf, d, &params).unwrap();
        // 4 standard errors at 20k frames
        let tol = 4.0 * (an * (1.0 - an) / 20_000.0).sqrt() + 0.002;
        assert!((mc - an).abs() <= tol, "SF{sf} at {d} m: simulated {mc}, analytical {an}");
    }
}

#[test]
fn monte_carlo_is_identical_across_execution_modes() {
    let env = env(1e-4);
    let sf = SpreadingFactor::new(9).unwrap();
    let a = estimate_success(&env, sf, 300.0, 5_000, 4, Execution::Sequential);
    let b = estimate_success(&env, sf, 300.0, 5_000, 4, Execution::Parallel);
    assert_eq!(a.to_bits(), b.to_bits());
}
