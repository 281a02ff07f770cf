mod common;

use common::*;
use proptest::prelude::*;
use tandem_tlc::baseline::{fd_check, finite_difference_gradient, FdMode};
use tandem_tlc::ipa::{estimate_gradient, RateEstimatorConfig};
use tandem_tlc::optimizer::estimate_j;
use tandem_tlc::sim::{integrate_contents, simulate, simulate_cost, Backend, CostKernel, SimConfig};

fn theta_strategy() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(15.0f64..40.0)
}

fn weights_strategy() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(0.0f64..10.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn discrete_paths_keep_structure(theta in theta_strategy(), seed in 0u64..10_000, w in weights_strategy()) {
        let cfg = SimConfig { weights: w, ..discrete(theta, seed, 600.0) };
        let r = simulate(&cfg).unwrap();
        prop_assert_eq!(conservation(&r), Ok(()));
        prop_assert_eq!(tandem_stream(&r), Ok(()));
        prop_assert_eq!(bracketing(&r), Ok(()));
        prop_assert!(xprime_structure(&r, &w).is_ok());
        prop_assert!(r.cost >= 0.0);
    }

    #[test]
    fn fluid_paths_keep_structure(theta in theta_strategy(), seed in 0u64..10_000, w in weights_strategy()) {
        let cfg = SimConfig { weights: w, ..fluid(theta, seed, 600.0) };
        let r = simulate(&cfg).unwrap();
        prop_assert_eq!(tandem_stream(&r), Ok(()));
        prop_assert_eq!(bracketing(&r), Ok(()));
        prop_assert!(xprime_structure(&r, &w).is_ok());
        for n in 0..4 {
            let bal = r.arrived[n] - r.departed[n] - r.trace.final_x[n];
            prop_assert!(bal.abs() < 1e-9 * (1.0 + r.arrived[n]), "queue {}: {}", n + 1, bal);
        }
    }

    #[test]
    fn replay_is_deterministic(theta in theta_strategy(), seed in 0u64..10_000, fl in any::<bool>()) {
        let cfg = if fl { fluid(theta, seed, 400.0) } else { discrete(theta, seed, 400.0) };
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        prop_assert_eq!(&a, &b);
        let rc = RateEstimatorConfig::default();
        let ga = estimate_gradient(&a.trace, &cfg.weights, &rc).unwrap();
        let gb = estimate_gradient(&b.trace, &cfg.weights, &rc).unwrap();
        prop_assert_eq!(ga.gradient.map(f64::to_bits), gb.gradient.map(f64::to_bits));
    }

    #[test]
    fn trace_integration_matches_running_area(theta in theta_strategy(), seed in 0u64..10_000, fl in any::<bool>()) {
        let cfg = if fl { fluid(theta, seed, 500.0) } else { discrete(theta, seed, 500.0) };
        let r = simulate(&cfg).unwrap();
        let again = integrate_contents(&r.trace);
        for n in 0..4 {
            prop_assert!((again[n] - r.area[n]).abs() <= 1e-9 * (1.0 + r.area[n]));
        }
    }

    #[test]
    fn cost_kernel_matches_event_simulation(theta in theta_strategy(), seed in 0u64..10_000, w in weights_strategy()) {
        let cfg = SimConfig { weights: w, ..discrete(theta, seed, 1000.0) };
        let full = simulate(&cfg).unwrap();
        let fast = simulate_cost(&cfg).unwrap();
        prop_assert!((full.cost - fast).abs() <= 1e-10 * (1.0 + full.cost), "{} vs {}", full.cost, fast);
        let kernel = CostKernel::new(&cfg).unwrap();
        let areas = kernel.areas(theta).unwrap();
        for n in 0..4 {
            prop_assert!((areas[n] - full.area[n]).abs() <= 1e-9 * (1.0 + full.area[n]));
        }
    }

    #[test]
    fn fluid_gradient_matches_fd_on_unreordered_components(theta in prop::array::uniform4(16.0f64..39.0), seed in 0u64..10_000) {
        let cfg = fluid(theta, seed, 500.0);
        let r = simulate(&cfg).unwrap();
        let g = estimate_gradient(&r.trace, &cfg.weights, &RateEstimatorConfig::default()).unwrap().gradient;
        let c = fd_check(&cfg, theta, 0.01).unwrap();
        for i in 0..4 {
            if !c.reordered[i] {
                prop_assert!((g[i] - c.gradient[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "component {}: ipa {} fd {}", i + 1, g[i], c.gradient[i]);
            }
        }
    }
}

#[test]
fn single_rep_estimate_is_the_sample_cost() {
    let cfg = discrete([20.0, 25.0, 30.0, 35.0], 17, 1000.0);
    let est = estimate_j(&cfg, cfg.theta, 1).unwrap();
    assert_eq!(est.reps, 1);
    assert!((est.mean - simulate(&cfg).unwrap().cost).abs() < 1e-10);
    assert_eq!(est.stderr, 0.0);
}

#[test]
fn common_randomness_reduces_variance() {
    let theta = [25.0, 30.0, 30.0, 25.0];
    let var = |mode| {
        let gs: Vec<[f64; 4]> = (0..30)
            .map(|s| finite_difference_gradient(&discrete(theta, s, 1000.0), theta, 0.5, mode).unwrap())
            .collect();
        std::array::from_fn::<f64, 4, _>(|i| {
            let m = gs.iter().map(|g| g[i]).sum::<f64>() / 30.0;
            gs.iter().map(|g| (g[i] - m).powi(2)).sum::<f64>() / 29.0
        })
    };
    let crn = var(FdMode::CommonRandomness);
    let ind = var(FdMode::Independent);
    for i in 0..4 {
        assert!(crn[i] < ind[i], "component {}: {} vs {}", i + 1, crn[i], ind[i]);
    }
}

#[test]
fn fluid_backend_kernel_agrees() {
    let cfg = fluid([18.0, 27.0, 33.0, 21.0], 5, 800.0);
    let full = simulate(&cfg).unwrap();
    assert!((simulate_cost(&cfg).unwrap() - full.cost).abs() < 1e-9);
    assert_eq!(cfg.backend, Backend::Fluid);
}
