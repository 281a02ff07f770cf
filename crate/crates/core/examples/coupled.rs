//! Optimization with fixed cycles θ1 + θ2 = T1 and θ3 + θ4 = T2.

use tandem_tlc::optimizer::{estimate_j, optimize, Coupling, OptimizerConfig};
use tandem_tlc::sim::SimConfig;

fn main() -> tandem_tlc::Result<()> {
    let sim = SimConfig {
        weights: [10.0, 1.0, 1.0, 1.0],
        ..Default::default()
    };
    for (t1, t2) in [(30.0, 30.0), (44.0, 44.0)] {
        let coupling = Coupling { t1, t2 };
        let opt = OptimizerConfig {
            theta0: coupling.expand(t1 / 2.0, t2 / 2.0),
            coupling: Some(coupling),
            ..Default::default()
        };
        let tr = optimize(&sim, &opt, 2)?;
        let j = estimate_j(&sim, tr.theta, 10)?;
        println!(
            "T1 = {t1}, T2 = {t2}: θ* = {:?}, J = {:.3} ± {:.3}",
            tr.theta.map(|v| (v * 100.0).round() / 100.0),
            j.mean,
            j.stderr
        );
    }
    Ok(())
}
