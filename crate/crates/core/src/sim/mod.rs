//! Sample-path generation for the two-intersection system.
//!
//! Two backends share one event vocabulary: a vehicle-level discrete-event
//! backend (Poisson arrivals, deterministic headways) and a fluid backend
//! with piecewise-constant arrival rates. Both produce a [`Trace`] that the
//! cost and gradient code consume.

mod arrivals;
mod discrete;
mod fluid;
mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    drifts, Bounds, ClockState, FlowRates, Intersection, QueueId, RateSnapshot, ThetaVector,
};

pub use arrivals::{arrival_process, queue_rng, FluidRateConfig, PiecewiseRate, Realization};
pub use trace::{ModeMark, Nep, Trace, TRACE_HEADER};

/// Emptiness tolerance for fluid contents, in vehicles.
pub const EMPTY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Discrete,
    Fluid,
}

/// Everything needed to generate one sample path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Horizon `T` in seconds.
    pub horizon: f64,
    /// Mean arrival rates of the exogenous queues 1, 2 and 4 (veh/s).
    pub arrival: [f64; 3],
    /// Service rates `H_1..H_4` (veh/s).
    pub service: [f64; 4],
    pub theta: [f64; 4],
    pub bounds: Bounds,
    pub weights: [f64; 4],
    pub backend: Backend,
    pub seed: u64,
    /// Queues holding the green at t = 0, one per intersection.
    pub initial_green: [usize; 2],
    pub fluid: FluidRateConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 1000.0,
            arrival: [0.25; 3],
            service: [1.0; 4],
            theta: [25.0, 30.0, 30.0, 25.0],
            bounds: Bounds::default(),
            weights: [1.0; 4],
            backend: Backend::Discrete,
            seed: 0,
            initial_green: [1, 3],
            fluid: FluidRateConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config("horizon", format!("must be positive, got {}", self.horizon)));
        }
        for (i, &a) in self.arrival.iter().enumerate() {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::config(format!("arrival[{i}]"), format!("rate {a} must be >= 0")));
            }
        }
        for (i, &h) in self.service.iter().enumerate() {
            if !(h.is_finite() && h >= 0.0) {
                return Err(Error::config(format!("service[{i}]"), format!("rate {h} must be >= 0")));
            }
            if self.backend == Backend::Discrete && h == 0.0 {
                return Err(Error::config(
                    format!("service[{i}]"),
                    "discrete backend needs positive service rates",
                ));
            }
        }
        for (i, &w) in self.weights.iter().enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config(format!("weights[{i}]"), format!("weight {w} must be >= 0")));
            }
        }
        Bounds::new(self.bounds.min, self.bounds.max)?;
        self.theta_vector()?;
        self.initial_clock()?;
        let [lo, hi] = self.fluid.level_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::config(
                "fluid.level_range",
                format!("need 0 <= lo <= hi, got [{lo}, {hi}]"),
            ));
        }
        Ok(())
    }

    pub fn theta_vector(&self) -> Result<ThetaVector> {
        ThetaVector::new(self.theta, self.bounds)
    }

    pub fn with_theta(&self, theta: [f64; 4]) -> SimConfig {
        SimConfig {
            theta,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> SimConfig {
        SimConfig {
            seed,
            ..self.clone()
        }
    }

    /// Nominal exogenous rates indexed by queue; the queue-3 slot is 0.
    pub fn nominal_alpha(&self) -> [f64; 4] {
        [self.arrival[0], self.arrival[1], 0.0, self.arrival[2]]
    }

    pub(crate) fn initial_clock(&self) -> Result<ClockState> {
        let [a, b] = self.initial_green;
        ClockState::start(QueueId::new(a)?, QueueId::new(b)?)
    }
}

/// Outcome of one simulated sample path.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePathResult {
    /// Sample cost `L`.
    pub cost: f64,
    pub neps: [Vec<Nep>; 4],
    pub trace: Trace,
    /// Vehicles (or fluid volume) that entered each queue.
    pub arrived: [f64; 4],
    /// Vehicles (or fluid volume) that left each queue.
    pub departed: [f64; 4],
    /// `∫ x_n dt` over the horizon, accumulated during simulation.
    pub area: [f64; 4],
}

/// Generates one sample path. Deterministic in `config`.
pub fn simulate(config: &SimConfig) -> Result<SamplePathResult> {
    config.validate()?;
    let (trace, arrived, departed, area) = match config.backend {
        Backend::Discrete => discrete::run(config, true)?,
        Backend::Fluid => fluid::run(config, true)?,
    };
    let cost = sample_cost(&trace, &config.weights)?;
    Ok(SamplePathResult {
        cost,
        neps: trace.neps(),
        trace,
        arrived,
        departed,
        area,
    })
}

/// The sample cost alone, without materializing a trace. Equal to
/// `simulate(config)?.cost` up to summation order.
pub fn simulate_cost(config: &SimConfig) -> Result<f64> {
    CostKernel::new(config)?.cost(config.theta)
}

/// Sample cost as a function of θ for one fixed realization of the
/// exogenous randomness (one seed). On the discrete backend the arrival
/// streams are drawn once and every evaluation replays them, which is what
/// grid searches and common-random-number differences want.
#[derive(Clone, Debug)]
pub struct CostKernel {
    config: SimConfig,
    arrivals: Option<[Vec<f64>; 4]>,
}

impl CostKernel {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let arrivals = (config.backend == Backend::Discrete).then(|| {
            let nominal = config.nominal_alpha();
            let mut arrivals: [Vec<f64>; 4] = Default::default();
            for q in QueueId::EXOGENOUS {
                if let Realization::Arrivals(v) = arrival_process(
                    config.backend,
                    nominal[q.ix()],
                    q,
                    config.seed,
                    config.horizon,
                    &config.fluid,
                ) {
                    arrivals[q.ix()] = v;
                }
            }
            arrivals
        });
        Ok(CostKernel {
            config: config.clone(),
            arrivals,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Per-queue `∫ x_n dt` at `theta`.
    pub fn areas(&self, theta: [f64; 4]) -> Result<[f64; 4]> {
        ThetaVector::new(theta, self.config.bounds)?;
        match &self.arrivals {
            Some(arrivals) => {
                let mut buf = Vec::with_capacity(arrivals[0].len());
                discrete::areas(&self.config, &theta, arrivals, &mut buf)
            }
            None => Ok(fluid::run(&self.config.with_theta(theta), false)?.3),
        }
    }

    pub fn cost(&self, theta: [f64; 4]) -> Result<f64> {
        let area = self.areas(theta)?;
        Ok(weighted_mean(&area, &self.config.weights, self.config.horizon))
    }
}

fn weighted_mean(area: &[f64; 4], weights: &[f64; 4], horizon: f64) -> f64 {
    area.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() / horizon
}

/// `L = (1/T) Σ_n w_n ∫_0^T x_n dt`, integrated exactly from the records:
/// contents are piecewise linear between records on the fluid backend and
/// piecewise constant on the discrete one.
pub fn sample_cost(trace: &Trace, weights: &[f64; 4]) -> Result<f64> {
    if !trace.complete {
        return Err(Error::Trace("trace does not cover the whole horizon".into()));
    }
    trace.check_order()?;
    Ok(weighted_mean(&integrate_contents(trace), weights, trace.horizon))
}

/// Per-queue `∫_0^T x_n dt` from the records.
pub fn integrate_contents(trace: &Trace) -> [f64; 4] {
    let mut area = [0.0; 4];
    let mut t = 0.0;
    let mut x = trace.initial_x;
    let linear = trace.backend == Backend::Fluid;
    let mut add = |from: f64, to: f64, a: &[f64; 4], b: &[f64; 4]| {
        let dt = to - from;
        for i in 0..4 {
            area[i] += if linear { 0.5 * (a[i] + b[i]) * dt } else { a[i] * dt };
        }
    };
    for r in &trace.records {
        if r.time > t {
            let at = if linear { r.x } else { x };
            add(t, r.time, &x, &at);
            t = r.time;
        }
        x = r.x;
    }
    add(t, trace.horizon, &x, &trace.final_x);
    area
}

/// Light timing shared by both backends. Switch instants are kept as
/// absolute times so simultaneous switches compare exactly.
#[derive(Clone, Debug)]
pub(crate) struct Lights {
    pub clock: ClockState,
    theta: ThetaVector,
    last_switch: [f64; 2],
}

impl Lights {
    pub fn new(clock: ClockState, theta: ThetaVector) -> Self {
        Lights {
            clock,
            theta,
            last_switch: [0.0; 2],
        }
    }

    pub fn due(&self, int: Intersection) -> f64 {
        self.last_switch[int.ix()] + self.theta.get(self.clock.green_queue(int))
    }

    /// Earliest pending switch; the first intersection wins ties.
    pub fn next_due(&self) -> (f64, Intersection) {
        let a = self.due(Intersection::First);
        let b = self.due(Intersection::Second);
        if b < a {
            (b, Intersection::Second)
        } else {
            (a, Intersection::First)
        }
    }

    pub fn advance_to(&mut self, t: f64) {
        for int in Intersection::ALL {
            let g = self.clock.green_queue(int);
            self.clock.z[g.ix()] = t - self.last_switch[int.ix()];
        }
    }

    pub fn switch(&mut self, int: Intersection, t: f64) -> (QueueId, QueueId) {
        self.last_switch[int.ix()] = t;
        self.clock.switch(int)
    }

    pub fn green(&self) -> [bool; 4] {
        self.clock.green_mask()
    }
}

/// Lights, emptiness flags and exogenous rates at one instant.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Modes {
    pub green: [bool; 4],
    pub nonempty: [bool; 4],
    pub alpha: [f64; 4],
    pub h: [f64; 4],
}

impl Modes {
    pub fn rates(&self) -> FlowRates {
        FlowRates::resolve(self.alpha, self.h, self.green, self.nonempty)
    }

    pub fn drifts(&self) -> [f64; 4] {
        drifts(self.alpha, self.h, self.green, self.nonempty)
    }

    pub fn snapshot(q: QueueId, pre: &Modes, post: &Modes) -> RateSnapshot {
        let a = pre.rates();
        let b = post.rates();
        RateSnapshot {
            alpha_minus: a.alpha(q),
            alpha_plus: b.alpha(q),
            beta_minus: a.beta(q),
            beta_plus: b.beta(q),
            h: post.h[q.ix()],
        }
    }
}
