//! Projected SGD driven by IPA gradients, from θ0 = [25, 30, 30, 25].
//!
//! cargo run --release --example optimize -- [w1 w2 w3 w4]

use tandem_tlc::optimizer::{estimate_j, optimize, OptimizerConfig};
use tandem_tlc::sim::SimConfig;

fn main() -> tandem_tlc::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let weights = if args.len() == 4 { [args[0], args[1], args[2], args[3]] } else { [10.0, 1.0, 1.0, 1.0] };
    let sim = SimConfig {
        weights,
        ..Default::default()
    };
    let tr = optimize(&sim, &OptimizerConfig::default(), 1)?;
    for it in tr.iterates.iter().step_by(50) {
        println!(
            "k {:>4}  θ = [{:6.2}, {:6.2}, {:6.2}, {:6.2}]  Ĵ = {:7.3}",
            it.k, it.theta[0], it.theta[1], it.theta[2], it.theta[3], it.j_hat
        );
    }
    let j = estimate_j(&sim, tr.theta, 10)?;
    println!("stopped: {:?} after {} iterates", tr.stop, tr.iterates.len());
    println!("θ* = {:?}", tr.theta.map(|v| (v * 100.0).round() / 100.0));
    println!("J(θ*) = {:.3} ± {:.3}", j.mean, j.stderr);
    Ok(())
}
