#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use tandem_tlc::ipa::{replay, RateEstimatorConfig};
use tandem_tlc::model::{EventKind, QueueId};
use tandem_tlc::sim::{Backend, SamplePathResult, SimConfig};

pub fn fluid(theta: [f64; 4], seed: u64, horizon: f64) -> SimConfig {
    SimConfig {
        horizon,
        backend: Backend::Fluid,
        theta,
        seed,
        ..Default::default()
    }
}

pub fn discrete(theta: [f64; 4], seed: u64, horizon: f64) -> SimConfig {
    SimConfig {
        horizon,
        theta,
        seed,
        ..Default::default()
    }
}

/// Fresh scratch directory under the system temp dir.
pub fn scratch(tag: &str) -> PathBuf {
    static N: AtomicUsize = AtomicUsize::new(0);
    let dir = std::env::temp_dir().join(format!(
        "tandem-tlc-{tag}-{}-{}",
        std::process::id(),
        N.fetch_add(1, Ordering::Relaxed)
    ));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Vehicles in = vehicles out + left over, per queue.
pub fn conservation(r: &SamplePathResult) -> Result<(), String> {
    for n in 0..4 {
        if r.arrived[n] != r.departed[n] + r.trace.final_x[n] {
            return Err(format!(
                "queue {}: arrived {} != departed {} + final {}",
                n + 1,
                r.arrived[n],
                r.departed[n],
                r.trace.final_x[n]
            ));
        }
    }
    Ok(())
}

/// Queue 3 is fed by exactly what leaves queue 1.
pub fn tandem_stream(r: &SamplePathResult) -> Result<(), String> {
    if r.arrived[2] != r.departed[0] {
        return Err(format!("alpha3 volume {} != beta1 volume {}", r.arrived[2], r.departed[0]));
    }
    if r.trace.backend == Backend::Discrete {
        let out1 = r.trace.times_of(EventKind::Departure, QueueId::Q1);
        let in3 = r.trace.times_of(EventKind::Arrival, QueueId::Q3);
        if out1 != in3 {
            return Err(format!("{} departures from 1 vs {} arrivals at 3", out1.len(), in3.len()));
        }
    }
    Ok(())
}

/// Start and End alternate per queue, beginning with Start.
pub fn bracketing(r: &SamplePathResult) -> Result<(), String> {
    let mut open = [false; 4];
    for rec in &r.trace.records {
        let i = rec.queue.ix();
        match rec.kind {
            EventKind::Start if open[i] => return Err(format!("S{} at {} inside a NEP", i + 1, rec.time)),
            EventKind::Start => open[i] = true,
            EventKind::End if !open[i] => return Err(format!("E{} at {} without S", i + 1, rec.time)),
            EventKind::End => open[i] = false,
            _ => {}
        }
    }
    for w in r.trace.records.windows(2) {
        if w[1].time < w[0].time {
            return Err(format!("records out of order at {}", w[1].time));
        }
    }
    Ok(())
}

/// Replays the estimator and checks the reset and sparsity structure of
/// `xprime` after every event. Returns the gradient.
pub fn xprime_structure(r: &SamplePathResult, weights: &[f64; 4]) -> Result<[f64; 4], String> {
    let mut err = None;
    let state = replay(&r.trace, weights, &RateEstimatorConfig::default(), |group, s| {
        if err.is_some() {
            return;
        }
        for n in 0..2 {
            if s.xprime[n][2] != 0.0 || s.xprime[n][3] != 0.0 {
                err = Some(format!("row {} has {:?} at {}", n + 1, s.xprime[n], group[0].time));
            }
        }
        for rec in group {
            if rec.kind == EventKind::End && s.row(rec.queue) != [0.0; 4] {
                err = Some(format!("row {} is {:?} after E at {}", rec.queue.get(), s.row(rec.queue), rec.time));
            }
        }
    })
    .map_err(|e| e.to_string())?;
    match err {
        Some(e) => Err(e),
        None => Ok(state.dl),
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}
