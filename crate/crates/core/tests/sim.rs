mod common;

use coordscope::dataset::Probe;
use coordscope::milp::{build_problem, decide, default_epsilon};
use coordscope::sim::{self, AgentSpec, NetworkSpec, Utility};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn probes_follow_the_stated_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut sum = 0.0;
    let draws = 100_000;
    for _ in 0..draws / 2 {
        let p = sim::sample_probe(&mut rng, 2);
        assert!(p.as_slice().iter().all(|a| *a > 0.1 && *a < 1.1));
        sum += p.as_slice().iter().sum::<f64>();
    }
    let mean = sum / draws as f64;
    assert!((mean - 0.6).abs() < 0.01, "{mean}");

    let a: Vec<Probe> = (0..5).map(|_| sim::sample_probe(&mut ChaCha8Rng::seed_from_u64(3), 2)).collect();
    assert!(a.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn allocation_matches_the_grid_oracle() {
    let spec = NetworkSpec::tri_radar();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    let mut above: f64 = 0.0;
    for _ in 0..100 {
        let probe = sim::sample_probe(&mut rng, 2);
        let alloc = sim::allocate(&spec, &probe).unwrap();
        let oracle = common::grid_allocation_oracle(&spec, probe.as_slice());
        worst = worst.max(oracle - alloc.objective);
        above = above.max(alloc.objective - oracle);
        assert!(alloc.objective >= oracle - 1e-6, "{} < {oracle}", alloc.objective);
        let spent: f64 = alloc.bundles.iter().map(|b| probe.price(b)).sum();
        assert!((spent - spec.budget()).abs() <= 1e-7);
    }
    eprintln!("worst shortfall against the grid: {worst:e}, largest excess {above:e}");
}

#[test]
fn random_networks_match_the_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for m in [2, 2, 3] {
        for _ in 0..20 {
            let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
            let weights: Vec<f64> = raw.iter().map(|r| r / raw.iter().sum::<f64>()).collect();
            let agents = (0..m)
                .map(|_| AgentSpec { utility: Utility::PowerProduct(vec![rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)]) })
                .collect();
            let spec = NetworkSpec::new(agents, weights, rng.random_range(0.5..2.0), 2).unwrap();
            let probe = sim::sample_probe(&mut rng, 2);
            let alloc = sim::allocate(&spec, &probe).unwrap();
            let oracle = common::grid_allocation_oracle(&spec, probe.as_slice());
            assert!(alloc.objective >= oracle - 1e-6, "{spec:?} {probe:?}: {} vs {oracle}", alloc.objective);
            let spent: f64 = alloc.bundles.iter().map(|b| probe.price(b)).sum();
            assert!((spent - spec.budget()).abs() <= 1e-7);
        }
    }
}

#[test]
fn sum_utility_buys_the_cheaper_good() {
    let spec = NetworkSpec::new(vec![AgentSpec { utility: Utility::Sum }], vec![1.0], 1.0, 2).unwrap();
    let alloc = sim::allocate(&spec, &Probe::new(vec![1.0, 2.0])).unwrap();
    assert!((alloc.bundles[0][0] - 1.0).abs() < 1e-12 && alloc.bundles[0][1].abs() < 1e-12);
}

#[test]
fn product_utility_has_the_cobb_douglas_demand() {
    let spec = NetworkSpec::new(vec![AgentSpec { utility: Utility::Product }], vec![1.0], 1.0, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let (a1, a2) = (rng.random_range(0.1..1.1), rng.random_range(0.1..1.1));
        let alloc = sim::allocate(&spec, &Probe::new(vec![a1, a2])).unwrap();
        assert!((alloc.bundles[0][0] - 0.5 / a1).abs() <= 1e-9);
        assert!((alloc.bundles[0][1] - 0.5 / a2).abs() <= 1e-9);
    }
}

#[test]
fn observation_scales() {
    let probe = Probe::new(vec![0.5, 0.5]);
    let bundles = vec![vec![0.4, 0.2], vec![0.1, 0.9]];
    let full = sim::observe_with_scales(&probe, &bundles, &[1.0, 1.0]);
    assert_eq!(full.assignable, bundles);
    let low = sim::observe_with_scales(&probe, &bundles, &[0.1, 0.1]);
    assert_eq!(low.assignable[1], vec![0.1 * 0.1, 0.1 * 0.9]);
    assert_eq!(low.aggregate, vec![0.5, 1.1]);
}

#[test]
fn observed_never_exceeds_true() {
    let spec = NetworkSpec::tri_radar();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let probe = sim::sample_probe(&mut rng, 2);
    let alloc = sim::allocate(&spec, &probe).unwrap();
    for _ in 0..10_000 {
        let obs = sim::observe(&probe, &alloc.bundles, &mut rng);
        for (hat, b) in obs.assignable.iter().zip(&alloc.bundles) {
            for (x, y) in hat.iter().zip(b) {
                assert!(*x <= *y && *x >= 0.1 * y - 1e-15);
            }
        }
    }
}

#[test]
fn simulated_data_is_valid_and_deterministic() {
    let spec = NetworkSpec::tri_radar();
    let (d, truth) = sim::simulate(&spec, 10, 8).unwrap();
    assert!(d.validate().is_empty());
    assert!(truth.is_feasible_for(&d));
    assert_eq!(sim::simulate(&spec, 10, 8).unwrap().0, d);
    assert_ne!(sim::simulate(&spec, 10, 9).unwrap().0, d);
    assert_eq!(sim::simulate(&spec, 1, 8).unwrap().0.len(), 1);
    // the group expenditure is the budget
    for t in 0..d.len() {
        assert!((d.group_expenditure(t).unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn independent_data() {
    let d = sim::simulate_independent(3, 2, 10, 4).unwrap();
    assert!(d.validate().is_empty());
    assert_eq!(d, sim::simulate_independent(3, 2, 10, 4).unwrap());
    for o in d.observations() {
        assert!(o.aggregate.iter().all(|v| *v > 0.0 && *v < 3.0));
        assert!(o.assignable.iter().flatten().all(|v| *v >= 0.0 && *v < 1.0));
    }
    assert!(matches!(sim::simulate_independent(3, 2, 0, 4), Err(sim::SimError::NoSteps)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn simulated_networks_coordinate(seed in any::<u64>(), steps in 1usize..=10) {
        let (d, truth) = sim::simulate(&NetworkSpec::tri_radar(), steps, seed).unwrap();
        let v = decide(&build_problem(&d, default_epsilon(&d)).unwrap()).unwrap();
        prop_assert!(v.is_coordinating());
        prop_assert!(common::witness_is_valid(&d, v.witness.as_ref().unwrap()));
        // the hidden responses are a witness of their own
        prop_assert!(common::witness_is_valid(&d, &truth));
    }
}
