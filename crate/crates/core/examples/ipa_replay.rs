//! Walks the estimator over a short fluid path and prints the state
//! derivative matrix after every light switch of intersection 1.

use tandem_tlc::ipa::{replay, RateEstimatorConfig};
use tandem_tlc::model::{EventKind, Intersection};
use tandem_tlc::sim::{simulate, Backend, SimConfig};

fn main() -> tandem_tlc::Result<()> {
    let cfg = SimConfig {
        horizon: 200.0,
        backend: Backend::Fluid,
        theta: [18.0, 24.0, 21.0, 21.0],
        seed: 1,
        ..Default::default()
    };
    let path = simulate(&cfg)?;
    let state = replay(&path.trace, &cfg.weights, &RateEstimatorConfig::default(), |group, s| {
        let first = group[0];
        if first.kind == EventKind::GreenToRed && first.queue.intersection() == Intersection::First {
            println!("t = {:7.2}  G2R{}", first.time, first.queue.get());
            for (n, row) in s.xprime.iter().enumerate() {
                println!("    x'{} = {:?}", n + 1, row.map(|v| (v * 1e3).round() / 1e3));
            }
        }
    })?;
    println!("dL/dθ = {:?}", state.dl);
    println!("G2R counts {:?}, R2G counts {:?}", state.zeta, state.rho);
    Ok(())
}
