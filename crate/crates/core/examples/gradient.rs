//! IPA gradient of one vehicle-level path next to a common-randomness
//! finite difference at the same θ.

use tandem_tlc::baseline::{finite_difference_gradient, FdMode};
use tandem_tlc::ipa::{estimate_gradient, RateEstimatorConfig};
use tandem_tlc::sim::{simulate, SimConfig};

fn main() -> tandem_tlc::Result<()> {
    let cfg = SimConfig {
        theta: [22.0, 27.0, 19.0, 31.0],
        weights: [10.0, 1.0, 1.0, 1.0],
        seed: 3,
        ..Default::default()
    };
    let path = simulate(&cfg)?;
    let g = estimate_gradient(&path.trace, &cfg.weights, &RateEstimatorConfig::default())?;
    let fd = finite_difference_gradient(&cfg, cfg.theta, 0.5, FdMode::CommonRandomness)?;
    println!("L = {:.4}", path.cost);
    println!("IPA  dL/dθ = {:?}", g.gradient.map(|v| (v * 1e4).round() / 1e4));
    println!("FD   dL/dθ = {:?}  (Δ = 0.5 s)", fd.map(|v| (v * 1e4).round() / 1e4));
    println!("{} flow events, {} degenerate", g.n_events, g.n_degenerate);
    Ok(())
}
