//! Infinitesimal perturbation analysis of the sample cost with respect to
//! the four green-cycle lengths.
//!
//! The estimator replays a trace event by event. Between events the state
//! derivatives `x'_{n,i} = ∂x_n/∂θ_i` are constant; at an event at time τ
//! with event-time derivative τ' every row jumps by
//!
//! ```text
//! x'_n(τ+) = x'_n(τ−) + [f_n(τ−) − f_n(τ+)] · τ'
//! ```
//!
//! where `f_n` is the content drift of queue n on either side of the event.
//! Light switches have τ' given by the switch counters (the k-th switch at an
//! intersection happens at ζ·θ_green + ρ·θ_red), a NEP end has
//! `τ' = −x'_n(τ−)/f_n(τ−)`, and exogenous events (rate changes, NEP starts)
//! have τ' = 0. Instantiating this rule case by case gives the familiar
//! per-event formulas; e.g. a G2R at queue 1 adds `β1(τ−)·(ζ1, ρ1)` to queue
//! 3's row, and an E_1 adds queue 1's row to queue 3's.
//!
//! `dL/dθ_i` is the weighted time integral of the rows divided by the
//! horizon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{drift, EventKind, EventRecord, FlowRates, Intersection, QueueId};
use crate::sim::{Backend, PiecewiseRate, Trace};

/// Which side of an event instant a rate refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Before,
    After,
}

/// Placement of the counting window relative to the query instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `(t − t_w, t]`
    Before,
    /// `(t, t + t_w]`
    After,
    /// `(t − t_w/2, t + t_w/2]`
    Symmetric,
}

/// Windowed rate estimation for vehicle-level traces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateEstimatorConfig {
    /// Window length `t_w` in seconds.
    pub window: f64,
    /// Window placement for arrival-rate estimates.
    pub direction: Direction,
    /// Use the configured service rates instead of estimating them.
    pub known_service: bool,
    /// Estimate the inflow of queue 3 by counting its arrivals (the
    /// departures of queue 1), window before the event for τ− and after it
    /// for τ+, instead of deriving it from queue 1's light and content.
    pub count_departures: bool,
}

impl Default for RateEstimatorConfig {
    fn default() -> Self {
        RateEstimatorConfig {
            window: 20.0,
            direction: Direction::Symmetric,
            known_service: true,
            count_departures: true,
        }
    }
}

impl RateEstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(Error::config("rates.window", format!("must be positive, got {}", self.window)));
        }
        Ok(())
    }
}

/// Rates available to the estimator at event instants.
pub trait RateSource {
    /// Arrival rate of exogenous queue `n` (1, 2 or 4).
    fn alpha(&self, n: QueueId, t: f64, side: Side) -> f64;
    /// Service rate `h_n`.
    fn service(&self, n: QueueId, t: f64, side: Side) -> f64;
    /// Measured inflow of queue 3, when it is measured rather than derived.
    fn inflow3(&self, _t: f64, _side: Side) -> Option<f64> {
        None
    }
}

/// Fixed rates, mostly for tests and analytic scenarios.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantRates {
    pub alpha: [f64; 4],
    pub h: [f64; 4],
}

impl RateSource for ConstantRates {
    fn alpha(&self, n: QueueId, _t: f64, _side: Side) -> f64 {
        self.alpha[n.ix()]
    }
    fn service(&self, n: QueueId, _t: f64, _side: Side) -> f64 {
        self.h[n.ix()]
    }
}

/// Exact rates of a fluid trace, rebuilt from its rate-change records.
#[derive(Clone, Debug)]
pub struct TraceRates {
    alpha: [PiecewiseRate; 4],
    service: [f64; 4],
}

impl TraceRates {
    pub fn from_trace(trace: &Trace) -> Self {
        let mut alpha: [PiecewiseRate; 4] = std::array::from_fn(|_| PiecewiseRate::constant(0.0));
        for q in QueueId::EXOGENOUS {
            let mut times = Vec::new();
            let mut levels = Vec::new();
            for r in trace
                .records
                .iter()
                .filter(|r| r.kind == EventKind::RateChange && r.queue == q)
            {
                if times.last() == Some(&r.time) {
                    *levels.last_mut().unwrap() = r.rates.alpha_plus;
                } else {
                    times.push(r.time);
                    levels.push(r.rates.alpha_plus);
                }
            }
            if times.first().is_some_and(|&t| t > 0.0) {
                times.insert(0, 0.0);
                levels.insert(0, 0.0);
            }
            if !times.is_empty() {
                alpha[q.ix()] = PiecewiseRate { times, levels };
            }
        }
        TraceRates {
            alpha,
            service: trace.service,
        }
    }
}

impl RateSource for TraceRates {
    fn alpha(&self, n: QueueId, t: f64, side: Side) -> f64 {
        let p = &self.alpha[n.ix()];
        match side {
            Side::Before => p.before(t),
            Side::After => p.at(t),
        }
    }
    fn service(&self, n: QueueId, _t: f64, _side: Side) -> f64 {
        self.service[n.ix()]
    }
}

/// Rate estimates from vehicle counts over a time window.
#[derive(Clone, Debug)]
pub struct WindowedRates {
    arrivals: [Vec<f64>; 4],
    departures: [Vec<f64>; 4],
    /// Intervals where each queue is green and non-empty.
    busy: [Vec<(f64, f64)>; 4],
    service: [f64; 4],
    horizon: f64,
    cfg: RateEstimatorConfig,
}

impl WindowedRates {
    pub fn from_trace(trace: &Trace, cfg: RateEstimatorConfig) -> Self {
        let mut arrivals: [Vec<f64>; 4] = Default::default();
        let mut departures: [Vec<f64>; 4] = Default::default();
        let mut busy: [Vec<(f64, f64)>; 4] = Default::default();
        let mut green = trace.initial_green;
        let mut nonempty = trace.initial_x.map(|v| v > 0.0);
        let mut since: [Option<f64>; 4] = std::array::from_fn(|i| (green[i] && nonempty[i]).then_some(0.0));
        for r in &trace.records {
            let i = r.queue.ix();
            match r.kind {
                EventKind::Arrival => arrivals[i].push(r.time),
                EventKind::Departure => departures[i].push(r.time),
                EventKind::Start => nonempty[i] = true,
                EventKind::End => nonempty[i] = false,
                EventKind::GreenToRed => green[i] = false,
                EventKind::RedToGreen => green[i] = true,
                EventKind::RateChange => {}
            }
            let on = green[i] && nonempty[i];
            match (since[i], on) {
                (None, true) => since[i] = Some(r.time),
                (Some(s), false) => {
                    busy[i].push((s, r.time));
                    since[i] = None;
                }
                _ => {}
            }
        }
        for i in 0..4 {
            if let Some(s) = since[i] {
                busy[i].push((s, trace.horizon));
            }
        }
        WindowedRates {
            arrivals,
            departures,
            busy,
            service: trace.service,
            horizon: trace.horizon,
            cfg,
        }
    }

    fn window(&self, t: f64, direction: Direction) -> (f64, f64) {
        let w = self.cfg.window;
        let (a, b) = match direction {
            Direction::Before => (t - w, t),
            Direction::After => (t, t + w),
            Direction::Symmetric => (t - 0.5 * w, t + 0.5 * w),
        };
        (a.max(0.0), b.min(self.horizon))
    }

    fn rate_in(times: &[f64], (a, b): (f64, f64)) -> f64 {
        if b <= a {
            return 0.0;
        }
        count_in(times, a, b) as f64 / (b - a)
    }

    /// Arrival rate of queue `n` counted over a window anchored at `t`.
    pub fn arrival_rate(&self, n: QueueId, t: f64, direction: Direction) -> f64 {
        Self::rate_in(&self.arrivals[n.ix()], self.window(t, direction))
    }

    /// Departure rate of queue `n` counted over a window anchored at `t`.
    pub fn departure_rate(&self, n: QueueId, t: f64, direction: Direction) -> f64 {
        Self::rate_in(&self.departures[n.ix()], self.window(t, direction))
    }

    /// Departures per unit of busy (green, non-empty) time in the window.
    fn busy_service_rate(&self, n: QueueId, t: f64, direction: Direction) -> Option<f64> {
        let (a, b) = self.window(t, direction);
        let busy: f64 = self.busy[n.ix()]
            .iter()
            .map(|&(s, e)| (e.min(b) - s.max(a)).max(0.0))
            .sum();
        // too little service observed to say anything
        let min_busy = (4.0 / self.service[n.ix()]).min(0.5 * (b - a));
        (busy >= min_busy && busy > 0.0).then(|| count_in(&self.departures[n.ix()], a, b) as f64 / busy)
    }
}

fn side_direction(side: Side) -> Direction {
    match side {
        Side::Before => Direction::Before,
        Side::After => Direction::After,
    }
}

impl RateSource for WindowedRates {
    fn alpha(&self, n: QueueId, t: f64, _side: Side) -> f64 {
        self.arrival_rate(n, t, self.cfg.direction)
    }

    fn service(&self, n: QueueId, t: f64, side: Side) -> f64 {
        if self.cfg.known_service {
            return self.service[n.ix()];
        }
        self.busy_service_rate(n, t, side_direction(side))
            .unwrap_or(self.service[n.ix()])
    }

    fn inflow3(&self, t: f64, side: Side) -> Option<f64> {
        self.cfg
            .count_departures
            .then(|| self.departure_rate(QueueId::Q1, t, side_direction(side)))
    }
}

/// Number of entries of the sorted slice in `(a, b]`.
fn count_in(times: &[f64], a: f64, b: f64) -> usize {
    times.partition_point(|&s| s <= b) - times.partition_point(|&s| s <= a)
}

/// What [`estimate_rate`] counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateQuantity {
    Arrivals(QueueId),
    Departures(QueueId),
}

/// Counts vehicles of one stream in the window anchored at `t` and divides
/// by the window length (shortened where it leaves `[0, T]`). Fluid traces
/// return the exact rates instead.
pub fn estimate_rate(trace: &Trace, t: f64, which: RateQuantity, cfg: &RateEstimatorConfig) -> Result<f64> {
    cfg.validate()?;
    match trace.backend {
        Backend::Discrete => {
            let w = WindowedRates::from_trace(trace, *cfg);
            Ok(match which {
                RateQuantity::Arrivals(n) => w.arrival_rate(n, t, cfg.direction),
                RateQuantity::Departures(n) => w.departure_rate(n, t, cfg.direction),
            })
        }
        Backend::Fluid => {
            let exact = TraceRates::from_trace(trace);
            let mut state = IpaState::new([0.0; 4], trace.horizon, trace.initial_green);
            for r in trace.records.iter().filter(|r| r.time <= t) {
                state.apply_lights(r);
                match r.kind {
                    EventKind::Start => state.nonempty[r.queue.ix()] = true,
                    EventKind::End => state.nonempty[r.queue.ix()] = false,
                    _ => {}
                }
            }
            let (alpha, h) = state.rates_at(&exact, t, Side::After);
            let rates = FlowRates::resolve(alpha, h, state.green, state.nonempty);
            Ok(match which {
                RateQuantity::Arrivals(n) => rates.alpha(n),
                RateQuantity::Departures(n) => rates.beta(n),
            })
        }
    }
}

/// Event-time derivative of an event, or a flag that it had to be treated
/// as exogenous because its guard crossing was degenerate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeDerivative {
    Value([f64; 4]),
    Degenerate,
}

impl TimeDerivative {
    pub fn value(self) -> [f64; 4] {
        match self {
            TimeDerivative::Value(v) => v,
            TimeDerivative::Degenerate => [0.0; 4],
        }
    }
}

/// Running state of the estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct IpaState {
    /// `xprime[n][i] = ∂x_{n+1}/∂θ_{i+1}`.
    pub xprime: [[f64; 4]; 4],
    /// G2R counts per queue.
    pub zeta: [u32; 4],
    /// R2G counts per queue.
    pub rho: [u32; 4],
    pub green: [bool; 4],
    /// Non-empty in the flow-model sense. On vehicle traces this ignores
    /// the brief occupancies of a green road that the flow model would
    /// keep empty.
    pub nonempty: [bool; 4],
    /// Gradient accumulated so far.
    pub dl: [f64; 4],
    /// `∫ x'_n dt` over the current NEP of each queue.
    pub nep_acc: [[f64; 4]; 4],
    /// `dL_{n,m}/dθ` of each finished NEP.
    pub nep_derivatives: [Vec<[f64; 4]>; 4],
    pub weights: [f64; 4],
    pub horizon: f64,
    /// Time up to which the gradient has been accumulated.
    pub time: f64,
    pub n_events: u64,
    pub n_degenerate: u64,
}

impl IpaState {
    pub fn new(weights: [f64; 4], horizon: f64, green: [bool; 4]) -> Self {
        IpaState {
            xprime: [[0.0; 4]; 4],
            zeta: [0; 4],
            rho: [0; 4],
            green,
            nonempty: [false; 4],
            dl: [0.0; 4],
            nep_acc: [[0.0; 4]; 4],
            nep_derivatives: Default::default(),
            weights,
            horizon,
            time: 0.0,
            n_events: 0,
            n_degenerate: 0,
        }
    }

    pub fn row(&self, n: QueueId) -> [f64; 4] {
        self.xprime[n.ix()]
    }

    fn rates_at(&self, src: &dyn RateSource, t: f64, side: Side) -> ([f64; 4], [f64; 4]) {
        let mut alpha = [0.0; 4];
        let mut h = [0.0; 4];
        for q in QueueId::ALL {
            if q != QueueId::Q3 {
                alpha[q.ix()] = src.alpha(q, t, side);
            }
            h[q.ix()] = src.service(q, t, side);
        }
        (alpha, h)
    }

    /// Content drifts of all queues on one side of `t` under the current
    /// modes.
    pub fn drifts(&self, src: &dyn RateSource, t: f64, side: Side) -> [f64; 4] {
        let (alpha, h) = self.rates_at(src, t, side);
        let mut rates = FlowRates::resolve(alpha, h, self.green, self.nonempty);
        if let Some(inflow) = src.inflow3(t, side) {
            rates.alpha[2] = inflow;
        }
        std::array::from_fn(|i| drift(self.green[i], self.nonempty[i], rates.alpha[i], h[i]))
    }

    /// Updates lights and switch counters for one record.
    fn apply_lights(&mut self, r: &EventRecord) {
        let i = r.queue.ix();
        match r.kind {
            EventKind::GreenToRed => {
                self.green[i] = false;
                self.zeta[i] += 1;
            }
            EventKind::RedToGreen => {
                self.green[i] = true;
                self.rho[i] += 1;
            }
            _ => {}
        }
    }

    /// Brings the emptiness flags in line with the flow model after the
    /// records of one event: a start that cannot make the content grow is
    /// dropped, and an empty queue with positive drift starts a NEP at once.
    fn settle_modes(&mut self, src: &dyn RateSource, t: f64, was: [bool; 4]) {
        for q in [QueueId::Q1, QueueId::Q2, QueueId::Q4, QueueId::Q3] {
            let i = q.ix();
            let f = self.drifts(src, t, Side::After)[i];
            if self.nonempty[i] && !was[i] && f <= 0.0 {
                self.nonempty[i] = false;
            } else if !self.nonempty[i] && f > 0.0 {
                self.nonempty[i] = true;
            }
        }
    }

    /// τ' of an event whose switch counters have already been updated.
    /// `pre_drift` are the drifts just before the event.
    pub fn event_time_derivative(&self, event: &EventRecord, pre_drift: &[f64; 4]) -> TimeDerivative {
        match event.kind {
            EventKind::GreenToRed | EventKind::RedToGreen => {
                let mut d = [0.0; 4];
                match event.queue.intersection() {
                    Intersection::First => {
                        d[0] = self.zeta[0] as f64;
                        d[1] = self.rho[0] as f64;
                    }
                    Intersection::Second => {
                        d[2] = self.zeta[2] as f64;
                        d[3] = self.rho[2] as f64;
                    }
                }
                TimeDerivative::Value(d)
            }
            EventKind::End => {
                let i = event.queue.ix();
                let f = pre_drift[i];
                if f < 0.0 {
                    TimeDerivative::Value(self.xprime[i].map(|v| -v / f))
                } else if self.xprime[i].iter().all(|&v| v == 0.0) {
                    TimeDerivative::Value([0.0; 4])
                } else {
                    TimeDerivative::Degenerate
                }
            }
            EventKind::Start | EventKind::RateChange | EventKind::Arrival | EventKind::Departure => {
                TimeDerivative::Value([0.0; 4])
            }
        }
    }

    /// Processes one atomic event: a single record, or the two records of a
    /// compound light switch sharing one sequence tag.
    pub fn apply_event(&mut self, group: &[EventRecord], src: &dyn RateSource) -> Result<()> {
        let Some(first) = group.first() else {
            return Ok(());
        };
        if group.iter().any(|r| r.kind.is_vehicle()) {
            return Ok(());
        }
        let t = first.time;
        if t < self.time || group.iter().any(|r| r.time != t || r.seq != first.seq) {
            return Err(Error::Trace(format!(
                "event group at {t} is out of order (state at {})",
                self.time
            )));
        }

        let was = self.nonempty;
        let pre = self.drifts(src, t, Side::Before);
        let mut ended = [false; 4];
        let mut emptied = [false; 4];
        for r in group {
            let i = r.queue.ix();
            self.apply_lights(r);
            match r.kind {
                EventKind::Start => self.nonempty[i] = true,
                // an end the flow model never saw start is ignored
                EventKind::End if was[i] => {
                    ended[i] = true;
                    self.nonempty[i] = false;
                }
                // a vehicle queue can turn green with nobody waiting even
                // though the flow model still holds content
                EventKind::RedToGreen if was[i] && r.x[i] == 0.0 => {
                    emptied[i] = true;
                    self.nonempty[i] = false;
                }
                _ => {}
            }
        }
        self.settle_modes(src, t, was);
        let post = self.drifts(src, t, Side::After);

        let key = group
            .iter()
            .find(|r| r.kind == EventKind::GreenToRed)
            .unwrap_or(first);
        let tau = if key.kind == EventKind::End && !ended[key.queue.ix()] {
            [0.0; 4]
        } else {
            match self.event_time_derivative(key, &pre) {
                TimeDerivative::Value(v) => v,
                TimeDerivative::Degenerate => {
                    self.n_degenerate += 1;
                    [0.0; 4]
                }
            }
        };
        for n in 0..4 {
            let jump = pre[n] - post[n];
            if jump != 0.0 {
                for i in 0..4 {
                    self.xprime[n][i] += jump * tau[i];
                }
            }
        }
        for n in 0..4 {
            if ended[n] {
                self.xprime[n] = [0.0; 4];
            }
            if emptied[n] {
                self.xprime[n] = [0.0; 4];
                self.n_degenerate += 1;
            }
            if !self.nonempty[n] && self.xprime[n].iter().any(|&v| v != 0.0) {
                // an empty period began without an observed NEP end
                self.xprime[n] = [0.0; 4];
                self.n_degenerate += 1;
            }
            if was[n] && !self.nonempty[n] {
                self.nep_derivatives[n].push(self.nep_acc[n]);
                self.nep_acc[n] = [0.0; 4];
            }
        }
        self.n_events += 1;
        Ok(())
    }

    /// Adds the contribution of `[from, to)`, over which no event occurs.
    pub fn accumulate(&mut self, from: f64, to: f64) -> Result<()> {
        let dt = to - from;
        if !(dt >= 0.0) {
            return Err(Error::Trace(format!("negative accumulation interval [{from}, {to})")));
        }
        if dt > 0.0 {
            for n in 0..4 {
                if !self.nonempty[n] {
                    continue;
                }
                for i in 0..4 {
                    let area = self.xprime[n][i] * dt;
                    self.nep_acc[n][i] += area;
                    self.dl[i] += self.weights[n] * area / self.horizon;
                }
            }
        }
        self.time = self.time.max(to);
        Ok(())
    }
}

/// Result of one gradient estimation.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub gradient: [f64; 4],
    pub n_events: u64,
    pub n_degenerate: u64,
}

/// Walks a complete trace, calling `observe` after every processed event.
pub fn replay<F>(trace: &Trace, weights: &[f64; 4], cfg: &RateEstimatorConfig, mut observe: F) -> Result<IpaState>
where
    F: FnMut(&[EventRecord], &IpaState),
{
    if !trace.complete {
        return Err(Error::Trace("trace does not cover the whole horizon".into()));
    }
    cfg.validate()?;
    let src: Box<dyn RateSource> = match trace.backend {
        Backend::Fluid => Box::new(TraceRates::from_trace(trace)),
        Backend::Discrete => Box::new(WindowedRates::from_trace(trace, *cfg)),
    };
    let mut state = IpaState::new(*weights, trace.horizon, trace.initial_green);
    let records = &trace.records;
    let mut i = 0;
    while i < records.len() {
        let seq = records[i].seq;
        let mut j = i + 1;
        while j < records.len() && records[j].seq == seq {
            j += 1;
        }
        let group = &records[i..j];
        i = j;
        if group[0].kind.is_vehicle() {
            continue;
        }
        let from = state.time;
        state.accumulate(from, group[0].time)?;
        state.apply_event(group, src.as_ref())?;
        observe(group, &state);
    }
    let from = state.time;
    state.accumulate(from, trace.horizon)?;
    for n in 0..4 {
        if state.nonempty[n] {
            state.nep_derivatives[n].push(state.nep_acc[n]);
        }
    }
    Ok(state)
}

/// The IPA estimate of `dL/dθ` for one sample path.
pub fn estimate_gradient(trace: &Trace, weights: &[f64; 4], cfg: &RateEstimatorConfig) -> Result<GradientEstimate> {
    let state = replay(trace, weights, cfg, |_, _| {})?;
    Ok(GradientEstimate {
        gradient: state.dl,
        n_events: state.n_events,
        n_degenerate: state.n_degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RateSnapshot;

    fn rec(seq: u64, time: f64, kind: EventKind, q: QueueId) -> EventRecord {
        EventRecord {
            seq,
            time,
            kind,
            queue: q,
            rates: RateSnapshot::default(),
            x: [0.0; 4],
        }
    }

    /// A compound switch recorded with every road occupied.
    fn switch(seq: u64, time: f64, red: QueueId) -> [EventRecord; 2] {
        [
            rec(seq, time, EventKind::GreenToRed, red),
            rec(seq, time, EventKind::RedToGreen, red.perpendicular()),
        ]
        .map(|r| EventRecord { x: [1.0; 4], ..r })
    }

    const UNIT: ConstantRates = ConstantRates {
        alpha: [0.25, 0.25, 0.0, 0.25],
        h: [1.0; 4],
    };

    #[test]
    fn first_g2r1_derivative() {
        let mut s = IpaState::new([1.0; 4], 100.0, [true, false, true, false]);
        let ev = switch(0, 15.0, QueueId::Q1);
        s.apply_event(&ev, &UNIT).unwrap();
        let pre = [0.0; 4];
        assert_eq!(s.event_time_derivative(&ev[0], &pre), TimeDerivative::Value([1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn exogenous_derivative_is_zero() {
        let s = IpaState::new([1.0; 4], 100.0, [true, false, true, false]);
        let ev = rec(0, 3.0, EventKind::RateChange, QueueId::Q2);
        assert_eq!(s.event_time_derivative(&ev, &[0.0; 4]), TimeDerivative::Value([0.0; 4]));
    }

    #[test]
    fn second_r2g3_derivative() {
        let mut s = IpaState::new([1.0; 4], 100.0, [true, false, false, true]);
        s.zeta[2] = 2;
        s.rho[2] = 2;
        let ev = rec(0, 3.0, EventKind::RedToGreen, QueueId::Q3);
        assert_eq!(s.event_time_derivative(&ev, &[0.0; 4]), TimeDerivative::Value([0.0, 0.0, 2.0, 2.0]));
    }

    #[test]
    fn end3_resets_row() {
        let mut s = IpaState::new([1.0; 4], 100.0, [true, false, true, false]);
        s.nonempty = [true, false, true, false];
        s.xprime[2] = [0.4, 0.2, -1.0, -0.5];
        s.apply_event(&[rec(0, 5.0, EventKind::End, QueueId::Q3)], &UNIT).unwrap();
        assert_eq!(s.row(QueueId::Q3), [0.0; 4]);
    }

    #[test]
    fn end1_transfers_row_to_queue3() {
        let mut s = IpaState::new([1.0; 4], 100.0, [true, false, true, false]);
        s.nonempty = [true, false, true, false];
        s.xprime[0] = [-1.0, 0.0, 0.0, 0.0];
        s.xprime[2] = [2.0, 1.0, 0.0, 0.0];
        s.apply_event(&[rec(0, 5.0, EventKind::End, QueueId::Q1)], &UNIT).unwrap();
        assert_eq!(s.row(QueueId::Q3), [1.0, 1.0, 0.0, 0.0]);
        assert_eq!(s.row(QueueId::Q1), [0.0; 4]);
    }

    #[test]
    fn end1_does_not_touch_empty_green_queue3() {
        let mut s = IpaState::new([1.0; 4], 100.0, [true, false, true, false]);
        s.nonempty = [true, false, false, false];
        s.xprime[0] = [-1.0, 0.0, 0.0, 0.0];
        s.apply_event(&[rec(0, 5.0, EventKind::End, QueueId::Q1)], &UNIT).unwrap();
        assert_eq!(s.row(QueueId::Q3), [0.0; 4]);
    }

    #[test]
    fn g2r1_pushes_outflow_into_queue3() {
        let mut s = IpaState::new([1.0; 4], 100.0, [true, false, true, false]);
        s.nonempty = [true, false, true, false];
        s.zeta[0] = 1;
        s.rho[0] = 1;
        s.apply_event(&switch(0, 50.0, QueueId::Q1), &UNIT).unwrap();
        assert_eq!((s.zeta[0], s.rho[0]), (2, 1));
        assert_eq!(s.row(QueueId::Q3), [2.0, 1.0, 0.0, 0.0]);
        // own queue: −h1·(ζ1, ρ1)
        assert_eq!(s.row(QueueId::Q1), [-2.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn g2r1_on_empty_queue1_uses_arrival_rate() {
        let mut s = IpaState::new([1.0; 4], 100.0, [true, false, true, false]);
        s.nonempty = [false, false, true, false];
        s.apply_event(&switch(0, 15.0, QueueId::Q1), &UNIT).unwrap();
        assert_eq!(s.row(QueueId::Q1), [-0.25, 0.0, 0.0, 0.0]);
        assert_eq!(s.row(QueueId::Q3), [0.25, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn g2r3_nonempty_and_empty() {
        let mut s = IpaState::new([1.0; 4], 100.0, [true, false, true, false]);
        s.nonempty = [true, false, true, false];
        s.zeta[2] = 1;
        s.rho[2] = 1;
        s.apply_event(&switch(0, 50.0, QueueId::Q3), &UNIT).unwrap();
        assert_eq!(s.row(QueueId::Q3), [0.0, 0.0, -2.0, -1.0]);

        // empty green queue 3 fed at β1 = h1: jump −β1(τ+)·(ζ3, ρ3)
        let mut s = IpaState::new([1.0; 4], 100.0, [true, false, true, false]);
        s.nonempty = [true, false, false, false];
        s.apply_event(&switch(0, 15.0, QueueId::Q3), &UNIT).unwrap();
        assert_eq!(s.row(QueueId::Q3), [0.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn r2g1_and_r2g3_jumps() {
        let mut s = IpaState::new([1.0; 4], 100.0, [false, true, false, true]);
        s.nonempty = [true, false, true, false];
        s.zeta = [1, 0, 1, 0];
        s.apply_event(&switch(0, 35.0, QueueId::Q2), &UNIT).unwrap();
        // queue 3 red: inflow h1 starts, −β1(τ+)·(ζ1, ρ1)
        assert_eq!(s.row(QueueId::Q3), [-1.0, -1.0, 0.0, 0.0]);
        assert_eq!(s.row(QueueId::Q1), [1.0, 1.0, 0.0, 0.0]);
        s.apply_event(&switch(1, 40.0, QueueId::Q4), &UNIT).unwrap();
        // queue 3 turns green while fed at h1: +h3·(ζ3, ρ3)
        assert_eq!(s.row(QueueId::Q3), [-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn exogenous_start_has_no_jump() {
        let mut s = IpaState::new([1.0; 4], 100.0, [true, false, true, false]);
        s.xprime[1] = [0.0; 4];
        s.apply_event(&[rec(0, 3.0, EventKind::Start, QueueId::Q2)], &UNIT).unwrap();
        assert_eq!(s.xprime, [[0.0; 4]; 4]);
    }

    #[test]
    fn accumulate_examples() {
        let mut s = IpaState::new([0.0, 1.0, 0.0, 0.0], 35.0, [true, false, true, false]);
        s.accumulate(0.0, 10.0).unwrap();
        assert_eq!(s.dl, [0.0; 4]);
        s.nonempty[1] = true;
        s.xprime[1] = [1.0, 0.0, 0.0, 0.0];
        s.accumulate(15.0, 17.0).unwrap();
        s.accumulate(17.0, 20.0).unwrap();
        assert!((s.dl[0] - 5.0 / 35.0).abs() < 1e-15);
        assert!(s.accumulate(20.0, 19.0).is_err());
    }

    #[test]
    fn out_of_order_group_rejected() {
        let mut s = IpaState::new([1.0; 4], 100.0, [true, false, true, false]);
        s.accumulate(0.0, 10.0).unwrap();
        let err = s.apply_event(&[rec(0, 5.0, EventKind::Start, QueueId::Q2)], &UNIT);
        assert!(err.is_err());
    }

    fn trace_with_arrivals(times: &[f64]) -> Trace {
        Trace {
            backend: Backend::Discrete,
            horizon: 10.0,
            service: [1.0; 4],
            initial_green: [true, false, true, false],
            initial_x: [0.0; 4],
            final_x: [0.0; 4],
            records: times
                .iter()
                .enumerate()
                .map(|(k, &t)| rec(k as u64, t, EventKind::Arrival, QueueId::Q2))
                .collect(),
            complete: true,
        }
    }

    #[test]
    fn windowed_count() {
        let tr = trace_with_arrivals(&[1.0, 2.0, 3.0]);
        let cfg = RateEstimatorConfig {
            window: 3.0,
            direction: Direction::Symmetric,
            ..Default::default()
        };
        let r = estimate_rate(&tr, 2.0, RateQuantity::Arrivals(QueueId::Q2), &cfg).unwrap();
        assert_eq!(r, 1.0);
        let none = estimate_rate(&tr, 8.0, RateQuantity::Arrivals(QueueId::Q2), &cfg).unwrap();
        assert_eq!(none, 0.0);
    }

    #[test]
    fn window_truncated_at_horizon() {
        let tr = trace_with_arrivals(&[0.5, 9.5]);
        let cfg = RateEstimatorConfig {
            window: 4.0,
            direction: Direction::After,
            ..Default::default()
        };
        // (8, 10] has length 2 after truncation
        let r = estimate_rate(&tr, 8.0, RateQuantity::Arrivals(QueueId::Q2), &cfg).unwrap();
        assert_eq!(r, 0.5);
        let cfg = RateEstimatorConfig {
            direction: Direction::Before,
            ..cfg
        };
        let r = estimate_rate(&tr, 1.0, RateQuantity::Arrivals(QueueId::Q2), &cfg).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn window_must_be_positive() {
        let tr = trace_with_arrivals(&[]);
        let cfg = RateEstimatorConfig {
            window: 0.0,
            ..Default::default()
        };
        assert!(estimate_rate(&tr, 1.0, RateQuantity::Arrivals(QueueId::Q1), &cfg).is_err());
    }
}
