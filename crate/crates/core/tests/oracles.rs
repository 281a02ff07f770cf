mod common;

use common::*;
use tandem_tlc::baseline::{finite_difference_gradient, grid_search, FdMode, GridSpec};
use tandem_tlc::ipa::{estimate_gradient, estimate_rate, Direction, RateEstimatorConfig, RateQuantity};
use tandem_tlc::model::{Bounds, QueueId};
use tandem_tlc::sim::{simulate, Backend, FluidRateConfig, SimConfig, Trace, TRACE_HEADER};

fn queue2_only() -> SimConfig {
    SimConfig {
        horizon: 35.0,
        arrival: [0.0, 0.25, 0.0],
        theta: [15.0, 20.0, 20.0, 20.0],
        bounds: Bounds::new(1.0, 100.0).unwrap(),
        weights: [0.0, 1.0, 0.0, 0.0],
        backend: Backend::Fluid,
        fluid: FluidRateConfig::constant(),
        ..Default::default()
    }
}

// red build-up a·θ1²/2, then a triangle draining at H − a
fn triangle_area(a: f64, theta1: f64, h: f64) -> f64 {
    a * theta1 * theta1 / 2.0 + (a * theta1).powi(2) / (2.0 * (h - a))
}

fn triangle_slope(a: f64, theta1: f64, h: f64) -> f64 {
    a * theta1 * h / (h - a)
}

#[test]
fn queue2_cost_and_gradient() {
    let cfg = queue2_only();
    let r = simulate(&cfg).unwrap();
    let l = triangle_area(0.25, 15.0, 1.0) / 35.0;
    assert!((r.cost - l).abs() < 1e-9, "{} vs {l}", r.cost);
    assert!((r.cost - 37.5 / 35.0).abs() < 1e-9);
    let g = estimate_gradient(&r.trace, &cfg.weights, &RateEstimatorConfig::default()).unwrap();
    let d1 = triangle_slope(0.25, 15.0, 1.0) / 35.0;
    assert!((g.gradient[0] - d1).abs() < 1e-9, "{:?}", g.gradient);
    assert!((g.gradient[0] - 5.0 / 35.0).abs() < 1e-9);
    assert_eq!(g.gradient[2], 0.0);
    assert_eq!(g.gradient[3], 0.0);
    let fd = finite_difference_gradient(&cfg, cfg.theta, 0.01, FdMode::CommonRandomness).unwrap();
    assert!((fd[0] - 5.0 / 35.0).abs() < 1e-4, "{fd:?}");
}

#[test]
fn zero_arrivals_give_zero_everything() {
    for backend in [Backend::Discrete, Backend::Fluid] {
        let cfg = SimConfig {
            arrival: [0.0; 3],
            backend,
            ..Default::default()
        };
        let r = simulate(&cfg).unwrap();
        assert_eq!(r.cost, 0.0);
        assert!(r.neps.iter().all(Vec::is_empty));
        let g = estimate_gradient(&r.trace, &cfg.weights, &RateEstimatorConfig::default()).unwrap();
        assert_eq!(g.gradient, [0.0; 4]);
        let fd = finite_difference_gradient(&cfg, cfg.theta, 0.01, FdMode::CommonRandomness).unwrap();
        assert_eq!(fd, [0.0; 4]);
        let grid = GridSpec::point(cfg.theta, 3);
        assert_eq!(grid_search(&cfg, &grid).unwrap().best.j.mean, 0.0);
    }
}

/// Forward-Euler integration of the flow equations with constant rates,
/// written from the model definition alone.
fn euler_cost(cfg: &SimConfig, dt: f64) -> f64 {
    let th = cfg.theta;
    let alpha = [cfg.arrival[0], cfg.arrival[1], 0.0, cfg.arrival[2]];
    let h = cfg.service;
    let green = |n: usize, t: f64| {
        let (a, b) = if n < 2 { (th[0], th[1]) } else { (th[2], th[3]) };
        let u = t % (a + b);
        if n % 2 == 0 { u < a } else { u >= a }
    };
    let mut x = [0.0f64; 4];
    let mut area = [0.0; 4];
    let steps = (cfg.horizon / dt).round() as usize;
    for k in 0..steps {
        let t = (k as f64 + 0.5) * dt;
        let mut beta = [0.0; 4];
        let mut inflow = alpha;
        for n in [0, 1, 3, 2] {
            if n == 2 {
                inflow[2] = beta[0];
            }
            beta[n] = if !green(n, t) {
                0.0
            } else if x[n] > 1e-12 {
                h[n]
            } else {
                inflow[n].min(h[n])
            };
        }
        for n in 0..4 {
            let next = (x[n] + (inflow[n] - beta[n]) * dt).max(0.0);
            area[n] += 0.5 * (x[n] + next) * dt;
            x[n] = next;
        }
    }
    (0..4).map(|n| cfg.weights[n] * area[n]).sum::<f64>() / cfg.horizon
}

#[test]
fn fluid_cost_matches_euler_integration() {
    for (theta, arrival, service) in [
        ([15.0, 15.0, 15.0, 15.0], [0.25; 3], [1.0; 4]),
        ([22.0, 31.0, 17.0, 36.0], [0.3, 0.2, 0.35], [0.9, 1.0, 0.8, 1.1]),
        ([38.0, 16.0, 25.0, 25.0], [0.4, 0.1, 0.2], [1.0; 4]),
    ] {
        let cfg = SimConfig {
            horizon: 300.0,
            arrival,
            service,
            theta,
            weights: [1.0, 2.0, 3.0, 4.0],
            backend: Backend::Fluid,
            fluid: FluidRateConfig::constant(),
            ..Default::default()
        };
        let exact = simulate(&cfg).unwrap().cost;
        let approx = euler_cost(&cfg, 1e-3);
        assert!(rel_err(exact, approx) < 2e-3, "{theta:?}: {exact} vs {approx}");
    }
}

fn trace_with_arrivals(times: &[f64], horizon: f64) -> Trace {
    let mut csv = format!("{TRACE_HEADER}\n");
    for t in times {
        csv.push_str(&format!("{t},ARRIVAL,2,0,0,0,0,1,1,0,0,0\n"));
    }
    Trace::read_csv(csv.as_bytes(), Backend::Discrete, horizon, [1.0; 4], [0.0; 4]).unwrap()
}

#[test]
fn windowed_rate_counts() {
    let tr = trace_with_arrivals(&[1.0, 2.0, 3.0], 10.0);
    let cfg = RateEstimatorConfig {
        window: 3.0,
        direction: Direction::Symmetric,
        ..Default::default()
    };
    let q2 = RateQuantity::Arrivals(QueueId::Q2);
    assert_eq!(estimate_rate(&tr, 2.0, q2, &cfg).unwrap(), 1.0);
    assert_eq!(estimate_rate(&tr, 8.0, q2, &cfg).unwrap(), 0.0);
}

#[test]
fn windowed_rate_is_unbiased_for_poisson() {
    let r = simulate(&discrete([25.0; 4], 11, 4000.0)).unwrap();
    let cfg = RateEstimatorConfig {
        window: 20.0,
        direction: Direction::After,
        ..Default::default()
    };
    let mean = (0..200)
        .map(|k| estimate_rate(&r.trace, 20.0 * k as f64, RateQuantity::Arrivals(QueueId::Q4), &cfg).unwrap())
        .sum::<f64>()
        / 200.0;
    assert!((mean - 0.25).abs() < 0.05, "{mean}");
}

#[test]
fn fluid_rates_are_exact() {
    let cfg = queue2_only();
    let r = simulate(&cfg).unwrap();
    let rc = RateEstimatorConfig::default();
    // queue 2 is green and draining at 17
    assert_eq!(estimate_rate(&r.trace, 17.0, RateQuantity::Departures(QueueId::Q2), &rc).unwrap(), 1.0);
    assert_eq!(estimate_rate(&r.trace, 5.0, RateQuantity::Departures(QueueId::Q2), &rc).unwrap(), 0.0);
    assert_eq!(estimate_rate(&r.trace, 5.0, RateQuantity::Arrivals(QueueId::Q2), &rc).unwrap(), 0.25);
}
