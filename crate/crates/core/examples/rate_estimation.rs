//! Windowed rate estimates from vehicle counts.

use tandem_tlc::ipa::{estimate_rate, Direction, RateEstimatorConfig, RateQuantity};
use tandem_tlc::model::QueueId;
use tandem_tlc::sim::{simulate, SimConfig};

fn main() -> tandem_tlc::Result<()> {
    let cfg = SimConfig {
        horizon: 2000.0,
        seed: 9,
        ..Default::default()
    };
    let path = simulate(&cfg)?;
    for window in [5.0, 20.0, 80.0] {
        let rc = RateEstimatorConfig {
            window,
            direction: Direction::After,
            ..Default::default()
        };
        let est: Vec<f64> = (0..50)
            .map(|k| estimate_rate(&path.trace, 30.0 * k as f64, RateQuantity::Arrivals(QueueId::Q1), &rc))
            .collect::<tandem_tlc::Result<_>>()?;
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt();
        println!("t_w = {window:>4}: α̂1 mean {mean:.3}, sd {sd:.3} (true 0.25)");
    }
    let rc = RateEstimatorConfig::default();
    let t = 500.0;
    println!(
        "queue 1 departures around t = {t}: before {:.3}, after {:.3}",
        estimate_rate(&path.trace, t, RateQuantity::Departures(QueueId::Q1), &RateEstimatorConfig { direction: Direction::Before, ..rc })?,
        estimate_rate(&path.trace, t, RateQuantity::Departures(QueueId::Q1), &RateEstimatorConfig { direction: Direction::After, ..rc })?,
    );
    Ok(())
}
