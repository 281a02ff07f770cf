//! Domain types and the pure flow dynamics of two tandem intersections.
//!
//! Queues are numbered 1..=4 everywhere in the public API. Queues 1 and 2
//! cross at the first intersection, queues 3 and 4 at the second, and the
//! departures of queue 1 feed queue 3.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 1-based queue (road) index.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct QueueId(u8);

impl QueueId {
    pub const Q1: QueueId = QueueId(1);
    pub const Q2: QueueId = QueueId(2);
    pub const Q3: QueueId = QueueId(3);
    pub const Q4: QueueId = QueueId(4);
    pub const ALL: [QueueId; 4] = [Self::Q1, Self::Q2, Self::Q3, Self::Q4];
    /// Queues fed by exogenous traffic.
    pub const EXOGENOUS: [QueueId; 3] = [Self::Q1, Self::Q2, Self::Q4];

    pub fn new(n: usize) -> Result<Self> {
        if (1..=4).contains(&n) {
            Ok(QueueId(n as u8))
        } else {
            Err(Error::QueueIndex(n))
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// Zero-based index for array storage.
    pub fn ix(self) -> usize {
        self.0 as usize - 1
    }

    /// The road crossing this one at the same intersection.
    pub fn perpendicular(self) -> QueueId {
        match self.0 {
            1 => Self::Q2,
            2 => Self::Q1,
            3 => Self::Q4,
            _ => Self::Q3,
        }
    }

    pub fn intersection(self) -> Intersection {
        if self.0 <= 2 {
            Intersection::First
        } else {
            Intersection::Second
        }
    }
}

impl TryFrom<usize> for QueueId {
    type Error = Error;
    fn try_from(n: usize) -> Result<Self> {
        QueueId::new(n)
    }
}

impl From<QueueId> for usize {
    fn from(q: QueueId) -> usize {
        q.get()
    }
}

impl fmt::Debug for QueueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.0)
    }
}

impl fmt::Display for QueueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Intersection {
    First,
    Second,
}

impl Intersection {
    pub const ALL: [Intersection; 2] = [Intersection::First, Intersection::Second];

    pub fn ix(self) -> usize {
        match self {
            Intersection::First => 0,
            Intersection::Second => 1,
        }
    }

    /// The two queues served by this intersection, lower index first.
    pub fn queues(self) -> [QueueId; 2] {
        match self {
            Intersection::First => [QueueId::Q1, QueueId::Q2],
            Intersection::Second => [QueueId::Q3, QueueId::Q4],
        }
    }
}

/// Box constraint on green-cycle lengths, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            min: 15.0,
            max: 40.0,
        }
    }
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min <= 0.0 {
            return Err(Error::config(
                "bounds.min",
                format!("bounds must be finite and positive, got [{min}, {max}]"),
            ));
        }
        if max < min {
            return Err(Error::config(
                "bounds.max",
                format!("bounds.max ({max}) is smaller than bounds.min ({min})"),
            ));
        }
        Ok(Bounds { min, max })
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// Green-cycle lengths θ1..θ4 together with the box they must stay in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaVector {
    values: [f64; 4],
    bounds: Bounds,
}

impl ThetaVector {
    pub fn new(values: [f64; 4], bounds: Bounds) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::config(
                    format!("theta{}", i + 1),
                    format!("must be finite and strictly positive, got {v}"),
                ));
            }
            if !bounds.contains(v) {
                return Err(Error::config(
                    format!("theta{}", i + 1),
                    format!("{v} outside [{}, {}]", bounds.min, bounds.max),
                ));
            }
        }
        Ok(ThetaVector { values, bounds })
    }

    /// Builds a vector after projecting every entry onto the box.
    pub fn clamped(values: [f64; 4], bounds: Bounds) -> Self {
        ThetaVector {
            values: values.map(|v| bounds.clamp(v)),
            bounds,
        }
    }

    pub fn values(&self) -> [f64; 4] {
        self.values
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn get(&self, n: QueueId) -> f64 {
        self.values[n.ix()]
    }

    /// Returns a copy with one entry replaced, checked against the bounds.
    pub fn with(&self, n: QueueId, v: f64) -> Result<Self> {
        let mut values = self.values;
        values[n.ix()] = v;
        ThetaVector::new(values, self.bounds)
    }
}

/// Light clocks z1..z4 plus the currently green queue at each intersection.
///
/// `z[n]` is the time spent green in the current cycle for the green queue
/// and is held at 0 for the red one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClockState {
    pub z: [f64; 4],
    green: [QueueId; 2],
}

impl ClockState {
    /// Clocks at a cycle start with the given queues green.
    pub fn start(green_first: QueueId, green_second: QueueId) -> Result<Self> {
        if green_first.intersection() != Intersection::First
            || green_second.intersection() != Intersection::Second
        {
            return Err(Error::config(
                "initial_green",
                format!("expected one queue of {{1,2}} and one of {{3,4}}, got [{green_first}, {green_second}]"),
            ));
        }
        Ok(ClockState {
            z: [0.0; 4],
            green: [green_first, green_second],
        })
    }

    /// Builds a clock from raw z values, inferring the running queue of each
    /// intersection from the clock predicate. `fallback` decides
    /// intersections where both clocks read 0.
    pub fn from_z(z: [f64; 4], theta: &ThetaVector, fallback: [QueueId; 2]) -> Result<Self> {
        let mut clock = ClockState::start(fallback[0], fallback[1])?;
        clock.z = z;
        for int in Intersection::ALL {
            let [a, b] = int.queues();
            if clock_predicate(&z, theta, a) {
                clock.green[int.ix()] = a;
            } else if clock_predicate(&z, theta, b) {
                clock.green[int.ix()] = b;
            }
        }
        Ok(clock)
    }

    pub fn green_queue(&self, int: Intersection) -> QueueId {
        self.green[int.ix()]
    }

    pub fn green_mask(&self) -> [bool; 4] {
        let mut mask = [false; 4];
        for g in self.green {
            mask[g.ix()] = true;
        }
        mask
    }

    /// Lets `dt` seconds pass on the running clocks.
    pub fn advance(&mut self, dt: f64) {
        for g in self.green {
            self.z[g.ix()] += dt;
        }
    }

    /// Ends the green of the running queue at `int` and hands the green to
    /// the perpendicular road. Returns `(to_red, to_green)`.
    pub fn switch(&mut self, int: Intersection) -> (QueueId, QueueId) {
        let old = self.green[int.ix()];
        let new = old.perpendicular();
        self.z[old.ix()] = 0.0;
        self.z[new.ix()] = 0.0;
        self.green[int.ix()] = new;
        (old, new)
    }
}

/// The clock predicate: `0 < z_n < θ_n` or `z_n̄ = θ_n̄`.
fn clock_predicate(z: &[f64; 4], theta: &ThetaVector, n: QueueId) -> bool {
    let bar = n.perpendicular();
    (z[n.ix()] > 0.0 && z[n.ix()] < theta.get(n)) || z[bar.ix()] == theta.get(bar)
}

/// Whether the light of queue `n` is GREEN.
///
/// Evaluates the clock predicate; at the instants where it is undecided for
/// both roads of an intersection (all clocks at 0, i.e. a cycle start) the
/// stored phase decides.
pub fn is_green(clock: &ClockState, theta: &ThetaVector, n: QueueId) -> bool {
    if clock_predicate(&clock.z, theta, n) {
        return true;
    }
    if clock_predicate(&clock.z, theta, n.perpendicular()) {
        return false;
    }
    clock.green_queue(n.intersection()) == n
}

/// A compound light switch: one road turns red and its crossing road turns
/// green at the same instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LightSwitch {
    pub intersection: Intersection,
    pub to_red: QueueId,
    pub to_green: QueueId,
}

/// Time until the next light switch and which switch it is. Ties between
/// the intersections go to the first one.
pub fn next_light_switch(clock: &ClockState, theta: &ThetaVector) -> (f64, LightSwitch) {
    let mut best: Option<(f64, LightSwitch)> = None;
    for int in Intersection::ALL {
        let g = Intersection::queues(int)
            .into_iter()
            .find(|&q| is_green(clock, theta, q))
            .unwrap_or_else(|| clock.green_queue(int));
        let dt = (theta.get(g) - clock.z[g.ix()]).max(0.0);
        let sw = LightSwitch {
            intersection: int,
            to_red: g,
            to_green: g.perpendicular(),
        };
        if best.map_or(true, |(b, _)| dt < b) {
            best = Some((dt, sw));
        }
    }
    best.expect("two intersections")
}

/// Queue contents and NEP bookkeeping.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueueState {
    pub x: [f64; 4],
    /// Start of the NEP in progress, if any.
    pub nep_start: [Option<f64>; 4],
    /// Number of NEPs started so far.
    pub nep_count: [u32; 4],
}

impl QueueState {
    pub fn with_contents(x: [f64; 4]) -> Self {
        QueueState {
            x,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for q in QueueId::ALL {
            let v = self.x[q.ix()];
            if !(v >= 0.0) {
                return Err(Error::InvalidState(format!("x{q} = {v} is negative")));
            }
        }
        Ok(())
    }
}

/// Departure rate of a road given its light and content: `h` while green
/// and non-empty, the arrival rate (capped by `h`) while green and empty,
/// zero while red.
pub fn departure_rate(green: bool, nonempty: bool, alpha: f64, h: f64) -> f64 {
    match (green, nonempty) {
        (false, _) => 0.0,
        (true, true) => h,
        (true, false) => alpha.min(h),
    }
}

/// Content drift of a single road: `α` on red, 0 on an empty green road
/// that keeps up with its arrivals, `α − β` otherwise.
pub fn drift(green: bool, nonempty: bool, alpha: f64, h: f64) -> f64 {
    if !green {
        return alpha;
    }
    let beta = departure_rate(green, nonempty, alpha, h);
    if !nonempty && alpha <= beta {
        0.0
    } else {
        alpha - beta
    }
}

/// Arrival, service and effective departure rates of the four roads.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlowRates {
    pub alpha: [f64; 4],
    pub h: [f64; 4],
    pub beta: [f64; 4],
}

impl FlowRates {
    /// Resolves effective departure rates and the inflow of queue 3 from the
    /// exogenous arrival rates, service rates, lights and emptiness flags.
    /// `alpha[2]` (queue 3) is ignored on input.
    pub fn resolve(alpha: [f64; 4], h: [f64; 4], green: [bool; 4], nonempty: [bool; 4]) -> Self {
        let mut r = FlowRates {
            alpha,
            h,
            beta: [0.0; 4],
        };
        r.beta[0] = departure_rate(green[0], nonempty[0], alpha[0], h[0]);
        r.alpha[2] = r.beta[0];
        for i in 1..4 {
            r.beta[i] = departure_rate(green[i], nonempty[i], r.alpha[i], h[i]);
        }
        r
    }

    pub fn alpha(&self, n: QueueId) -> f64 {
        self.alpha[n.ix()]
    }

    pub fn beta(&self, n: QueueId) -> f64 {
        self.beta[n.ix()]
    }

    pub fn h(&self, n: QueueId) -> f64 {
        self.h[n.ix()]
    }
}

/// Drifts of all four contents for the given lights, emptiness flags and
/// exogenous rates. Queue 3 receives the departure flow of queue 1.
pub fn drifts(alpha: [f64; 4], h: [f64; 4], green: [bool; 4], nonempty: [bool; 4]) -> [f64; 4] {
    let r = FlowRates::resolve(alpha, h, green, nonempty);
    let mut f = [0.0; 4];
    for i in 0..4 {
        f[i] = drift(green[i], nonempty[i], r.alpha[i], h[i]);
    }
    f
}

/// `dx_n/dt` for queue `n`.
///
/// `rates.alpha[2]` is not consulted: the inflow of queue 3 is always the
/// departure flow of queue 1 evaluated from the current state.
pub fn queue_drift(
    n: QueueId,
    state: &QueueState,
    clock: &ClockState,
    theta: &ThetaVector,
    rates: &FlowRates,
) -> Result<f64> {
    state.validate()?;
    let green = QueueId::ALL.map(|q| is_green(clock, theta, q));
    let nonempty = state.x.map(|v| v > 0.0);
    Ok(drifts(rates.alpha, rates.h, green, nonempty)[n.ix()])
}

/// The six-case table for queue 3 written out explicitly, as a second route
/// to [`queue_drift`] for queue 3. Assumes consistent states: an empty
/// green queue 1 has `α1 ≤ h1` and an empty green queue 3 has inflow at
/// most `h3`.
pub fn queue3_drift_table(
    green3: bool,
    green1: bool,
    x3_positive: bool,
    x1_positive: bool,
    alpha1: f64,
    h1: f64,
    h3: f64,
) -> f64 {
    match (green3, green1, x3_positive, x1_positive) {
        (false, true, _, true) => h1,
        (false, true, _, false) => alpha1,
        (false, false, _, _) | (true, _, false, _) => 0.0,
        (true, true, true, true) => h1 - h3,
        (true, true, true, false) => alpha1 - h3,
        (true, false, true, _) => -h3,
    }
}

/// Kinds of trace records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// A non-empty period starts.
    Start,
    /// A non-empty period ends.
    End,
    RedToGreen,
    GreenToRed,
    /// Exogenous change of the arrival or service rate.
    RateChange,
    /// A single vehicle arrives (discrete backend only).
    Arrival,
    /// A single vehicle departs (discrete backend only).
    Departure,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::Start => "S",
            EventKind::End => "E",
            EventKind::RedToGreen => "R2G",
            EventKind::GreenToRed => "G2R",
            EventKind::RateChange => "RATE_CHANGE",
            EventKind::Arrival => "ARRIVAL",
            EventKind::Departure => "DEPARTURE",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Some(match s {
            "S" => EventKind::Start,
            "E" => EventKind::End,
            "R2G" => EventKind::RedToGreen,
            "G2R" => EventKind::GreenToRed,
            "RATE_CHANGE" => EventKind::RateChange,
            "ARRIVAL" => EventKind::Arrival,
            "DEPARTURE" => EventKind::Departure,
            _ => return None,
        })
    }

    pub fn is_light(self) -> bool {
        matches!(self, EventKind::RedToGreen | EventKind::GreenToRed)
    }

    /// Vehicle-level records carry no flow-model event.
    pub fn is_vehicle(self) -> bool {
        matches!(self, EventKind::Arrival | EventKind::Departure)
    }
}

/// Rates of the affected queue just before and just after an event.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RateSnapshot {
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    pub beta_minus: f64,
    pub beta_plus: f64,
    pub h: f64,
}

/// One timestamped record of a sample path.
///
/// Records produced by one atomic event (a compound light switch) share
/// `seq`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventRecord {
    pub seq: u64,
    pub time: f64,
    pub kind: EventKind,
    pub queue: QueueId,
    pub rates: RateSnapshot,
    /// Contents of all queues right after the record.
    pub x: [f64; 4],
}
