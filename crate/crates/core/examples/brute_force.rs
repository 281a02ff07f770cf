//! Grid search on a 5-second grid with a shared seed bank.

use tandem_tlc::baseline::{grid_search, GridSpec};
use tandem_tlc::sim::SimConfig;

fn main() -> tandem_tlc::Result<()> {
    let sim = SimConfig {
        weights: [10.0, 1.0, 1.0, 1.0],
        seed: 42,
        ..Default::default()
    };
    let grid = GridSpec {
        step: [5.0; 4],
        ..Default::default()
    };
    let r = grid_search(&sim, &grid)?;
    let mut rows = r.table.clone();
    rows.sort_by(|a, b| a.j.mean.total_cmp(&b.j.mean));
    println!("{} points, {} reps each", r.table.len(), grid.reps);
    for row in rows.iter().take(8) {
        println!("  θ = {:?}  J = {:.3} ± {:.3}", row.theta, row.j.mean, row.j.stderr);
    }
    println!("best: {:?}", r.best.theta);
    Ok(())
}
