//! Fluid IPA against central differences, flagging perturbations that
//! change the order of events.

use tandem_tlc::baseline::fd_check;
use tandem_tlc::ipa::{estimate_gradient, RateEstimatorConfig};
use tandem_tlc::sim::{simulate, Backend, SimConfig};

fn main() -> tandem_tlc::Result<()> {
    for (seed, horizon) in [(1, 300.0), (2, 300.0), (3, 1000.0), (4, 2000.0)] {
        let cfg = SimConfig {
            horizon,
            backend: Backend::Fluid,
            theta: [21.3, 28.9, 17.4, 33.2],
            seed,
            ..Default::default()
        };
        let g = estimate_gradient(&simulate(&cfg)?.trace, &cfg.weights, &RateEstimatorConfig::default())?.gradient;
        let c = fd_check(&cfg, cfg.theta, 0.01)?;
        println!("seed {seed}, T = {horizon}");
        for i in 0..4 {
            println!(
                "  θ{}: ipa {:+.6}  fd {:+.6}  {}",
                i + 1,
                g[i],
                c.gradient[i],
                if c.reordered[i] { "reordered" } else { "same events" }
            );
        }
    }
    Ok(())
}
