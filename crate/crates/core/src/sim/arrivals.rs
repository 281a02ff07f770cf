//! Exogenous input realizations.
//!
//! Every exogenous queue draws from its own ChaCha stream keyed by
//! `(seed, queue)`, so a realization depends only on the seed and that
//! queue's parameters. Perturbed runs with the same seed therefore see the
//! same cars (or the same rate process), which is what common-random-number
//! comparisons need.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::model::QueueId;

use super::Backend;

/// Parameters of the piecewise-constant arrival-rate process used by the
/// fluid backend.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidRateConfig {
    /// Mean exponential holding time of each rate level, in seconds. A
    /// non-positive or infinite value keeps every rate at its nominal level.
    pub mean_holding: f64,
    /// Levels are drawn uniformly from `[lo·ᾱ, hi·ᾱ]`.
    pub level_range: [f64; 2],
}

impl Default for FluidRateConfig {
    fn default() -> Self {
        FluidRateConfig {
            mean_holding: 50.0,
            level_range: [0.0, 2.0],
        }
    }
}

impl FluidRateConfig {
    /// Rates held at their nominal values for the whole horizon.
    pub fn constant() -> Self {
        FluidRateConfig {
            mean_holding: 0.0,
            level_range: [1.0, 1.0],
        }
    }

    pub fn is_constant(&self) -> bool {
        !(self.mean_holding.is_finite() && self.mean_holding > 0.0)
    }
}

/// A right-continuous piecewise-constant rate function on `[0, ∞)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseRate {
    /// Change times, strictly increasing, starting at 0.
    pub times: Vec<f64>,
    pub levels: Vec<f64>,
}

impl PiecewiseRate {
    pub fn constant(level: f64) -> Self {
        PiecewiseRate {
            times: vec![0.0],
            levels: vec![level],
        }
    }

    /// Value on the piece containing `t` (right-continuous).
    pub fn at(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&s| s <= t);
        self.levels[i.saturating_sub(1)]
    }

    /// Value just before `t`.
    pub fn before(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&s| s < t);
        self.levels[i.saturating_sub(1)]
    }
}

/// One queue's exogenous input.
#[derive(Clone, Debug, PartialEq)]
pub enum Realization {
    /// Vehicle arrival instants (discrete backend).
    Arrivals(Vec<f64>),
    /// Arrival-rate function (fluid backend).
    Rate(PiecewiseRate),
}

/// Random stream dedicated to one queue of one replication.
pub fn queue_rng(seed: u64, queue: QueueId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(queue.get() as u64);
    rng
}

/// Draws the exogenous input of `queue` over `[0, horizon)`.
pub fn arrival_process(
    backend: Backend,
    mean_rate: f64,
    queue: QueueId,
    seed: u64,
    horizon: f64,
    fluid: &FluidRateConfig,
) -> Realization {
    let mut rng = queue_rng(seed, queue);
    match backend {
        Backend::Discrete => Realization::Arrivals(poisson_times(&mut rng, mean_rate, horizon)),
        Backend::Fluid => Realization::Rate(rate_process(&mut rng, mean_rate, horizon, fluid)),
    }
}

fn poisson_times(rng: &mut impl Rng, rate: f64, horizon: f64) -> Vec<f64> {
    if rate <= 0.0 {
        return Vec::new();
    }
    let gap = Exp::new(rate).expect("positive rate");
    let mut out = Vec::with_capacity((rate * horizon * 1.2) as usize + 4);
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t >= horizon {
            return out;
        }
        out.push(t);
    }
}

fn rate_process(
    rng: &mut impl Rng,
    mean_rate: f64,
    horizon: f64,
    cfg: &FluidRateConfig,
) -> PiecewiseRate {
    if mean_rate <= 0.0 {
        return PiecewiseRate::constant(0.0);
    }
    if cfg.is_constant() {
        return PiecewiseRate::constant(mean_rate);
    }
    let [lo, hi] = cfg.level_range;
    let hold = Exp::new(1.0 / cfg.mean_holding).expect("positive holding time");
    let level = |u: f64| mean_rate * (lo + (hi - lo) * u);
    let mut times = vec![0.0];
    let mut levels = vec![level(rng.gen())];
    let mut t = 0.0;
    loop {
        t += hold.sample(rng);
        if t >= horizon {
            break;
        }
        times.push(t);
        levels.push(level(rng.gen()));
    }
    PiecewiseRate { times, levels }
}
