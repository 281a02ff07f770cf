//! One sample path on each backend: cost, NEPs and the first trace records.
//!
//! cargo run --example simulate -- [seed]

use tandem_tlc::sim::{simulate, Backend, SimConfig};

fn main() -> tandem_tlc::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    for backend in [Backend::Discrete, Backend::Fluid] {
        let cfg = SimConfig {
            backend,
            seed,
            ..Default::default()
        };
        let r = simulate(&cfg)?;
        println!("{backend:?} backend, θ = {:?}, seed {seed}", cfg.theta);
        println!("  L = {:.4}", r.cost);
        for n in 0..4 {
            println!(
                "  queue {}: mean content {:.3}, {} NEPs, in {:.1}, out {:.1}",
                n + 1,
                r.area[n] / cfg.horizon,
                r.neps[n].len(),
                r.arrived[n],
                r.departed[n]
            );
        }
        let mut out = Vec::new();
        r.trace.write_csv(&mut out)?;
        for line in String::from_utf8_lossy(&out).lines().take(6) {
            println!("  {line}");
        }
        println!();
    }
    Ok(())
}
