use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{EventKind, EventRecord, QueueId, RateSnapshot};

use super::{Backend, Modes};

/// A materialized sample path over `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub backend: Backend,
    pub horizon: f64,
    /// Configured service rates `H_n`.
    pub service: [f64; 4],
    /// Lights at t = 0.
    pub initial_green: [bool; 4],
    pub initial_x: [f64; 4],
    pub final_x: [f64; 4],
    pub records: Vec<EventRecord>,
    /// False when the run stopped before reaching the horizon.
    pub complete: bool,
}

/// A non-empty period `[start, end)`; `end` is `None` if it is still open at
/// the horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nep {
    pub start: f64,
    pub end: Option<f64>,
}

/// One entry of [`Trace::signature`]. Equality ignores `time`.
#[derive(Clone, Copy, Debug)]
pub struct ModeMark {
    pub time: f64,
    pub kind: EventKind,
    pub occupied: bool,
    pub rates: Option<RateSnapshot>,
}

impl PartialEq for ModeMark {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.occupied == other.occupied && self.rates == other.rates
    }
}

pub const TRACE_HEADER: &str =
    "time,kind,queue,alpha_minus,alpha_plus,beta_minus,beta_plus,h,x1,x2,x3,x4";

impl Trace {
    /// Non-empty periods of each queue, in order.
    pub fn neps(&self) -> [Vec<Nep>; 4] {
        let mut out: [Vec<Nep>; 4] = Default::default();
        for r in &self.records {
            let list = &mut out[r.queue.ix()];
            match r.kind {
                EventKind::Start => list.push(Nep {
                    start: r.time,
                    end: None,
                }),
                EventKind::End => {
                    if let Some(last) = list.last_mut() {
                        last.end = Some(r.time);
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Records of the given kind at queue `q`.
    pub fn times_of(&self, kind: EventKind, q: QueueId) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.kind == kind && r.queue == q)
            .map(|r| r.time)
            .collect()
    }

    /// Per queue, the ordered mode transitions: every light switch with
    /// whether the queue was occupied (and its rates if it was not), and
    /// every NEP start/end with the flow rates on both sides. Perturbed runs with equal signatures lie on
    /// the same smooth piece of the cost; swaps of events that merely add
    /// up (a rate change during a NEP, say) do not show.
    pub fn signature(&self) -> [Vec<ModeMark>; 4] {
        let mut out: [Vec<ModeMark>; 4] = Default::default();
        for r in &self.records {
            let mark = match r.kind {
                EventKind::GreenToRed | EventKind::RedToGreen => {
                    let occupied = r.x[r.queue.ix()] > 0.0;
                    ModeMark {
                        time: r.time,
                        kind: r.kind,
                        occupied,
                        // an empty queue's inflow decides what the switch does
                        rates: (!occupied).then_some(r.rates),
                    }
                }
                EventKind::Start | EventKind::End => ModeMark {
                    time: r.time,
                    kind: r.kind,
                    occupied: r.kind == EventKind::Start,
                    rates: Some(r.rates),
                },
                _ => continue,
            };
            out[r.queue.ix()].push(mark);
        }
        out
    }

    /// Whether `other` went through the same mode transitions.
    pub fn same_modes(&self, other: &Trace) -> bool {
        self.signature() == other.signature()
    }

    /// Writes the trace as CSV with 9 fixed decimals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.records {
            let s = &r.rates;
            writeln!(
                w,
                "{:.9},{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
                r.time,
                r.kind.label(),
                r.queue,
                s.alpha_minus,
                s.alpha_plus,
                s.beta_minus,
                s.beta_plus,
                s.h,
                r.x[0],
                r.x[1],
                r.x[2],
                r.x[3]
            )?;
        }
        Ok(())
    }

    /// Reads records written by [`Trace::write_csv`]. Light records at the
    /// same instant and intersection are regrouped into one atomic switch.
    pub fn read_csv<R: BufRead>(
        r: R,
        backend: Backend,
        horizon: f64,
        service: [f64; 4],
        final_x: [f64; 4],
    ) -> Result<Trace> {
        let mut records: Vec<EventRecord> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                if line.trim() != TRACE_HEADER {
                    return Err(Error::Trace(format!("unexpected header {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Trace(format!("line {}: bad {what}", lineno + 1));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 12 {
                return Err(bad("column count"));
            }
            let num = |i: usize| -> Result<f64> { cols[i].trim().parse().map_err(|_| bad(&TRACE_HEADER.split(',').nth(i).unwrap_or("field").to_string())) };
            let kind = EventKind::from_label(cols[1].trim()).ok_or_else(|| bad("kind"))?;
            let queue = cols[2]
                .trim()
                .parse::<usize>()
                .ok()
                .and_then(|n| QueueId::new(n).ok())
                .ok_or_else(|| bad("queue"))?;
            let time = num(0)?;
            let seq = match records.last() {
                Some(prev)
                    if kind.is_light()
                        && prev.kind.is_light()
                        && prev.time == time
                        && prev.queue.intersection() == queue.intersection()
                        && prev.queue != queue =>
                {
                    prev.seq
                }
                Some(prev) => prev.seq + 1,
                None => 0,
            };
            records.push(EventRecord {
                seq,
                time,
                kind,
                queue,
                rates: RateSnapshot {
                    alpha_minus: num(3)?,
                    alpha_plus: num(4)?,
                    beta_minus: num(5)?,
                    beta_plus: num(6)?,
                    h: num(7)?,
                },
                x: [num(8)?, num(9)?, num(10)?, num(11)?],
            });
        }
        // the first light record at each intersection tells who started green
        let mut initial_green = [true, false, true, false];
        for int in crate::model::Intersection::ALL {
            if let Some(r) = records
                .iter()
                .find(|r| r.kind.is_light() && r.queue.intersection() == int)
            {
                let on = r.kind == EventKind::GreenToRed;
                initial_green[r.queue.ix()] = on;
                initial_green[r.queue.perpendicular().ix()] = !on;
            }
        }
        Ok(Trace {
            backend,
            horizon,
            service,
            initial_green,
            initial_x: [0.0; 4],
            final_x,
            records,
            complete: true,
        })
    }

    pub(crate) fn check_order(&self) -> Result<()> {
        for w in self.records.windows(2) {
            if w[1].time < w[0].time {
                return Err(Error::Trace(format!(
                    "records out of order: {} after {}",
                    w[1].time, w[0].time
                )));
            }
        }
        Ok(())
    }
}

/// Appends records with consistent sequence tags. A disabled recorder
/// drops everything, for runs that only need the cost.
#[derive(Debug)]
pub(crate) struct Recorder {
    pub records: Vec<EventRecord>,
    next_seq: u64,
    pub enabled: bool,
}

impl Recorder {
    pub fn new(enabled: bool) -> Self {
        Recorder {
            records: Vec::new(),
            next_seq: 0,
            enabled,
        }
    }

    pub fn push(&mut self, time: f64, kind: EventKind, queue: QueueId, modes: (&Modes, &Modes), x: [f64; 4]) {
        if !self.enabled {
            return;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.records.push(EventRecord {
            seq,
            time,
            kind,
            queue,
            rates: Modes::snapshot(queue, modes.0, modes.1),
            x,
        });
    }

    /// Records a compound switch: both records share one sequence tag.
    pub fn push_switch(&mut self, time: f64, to_red: QueueId, to_green: QueueId, modes: (&Modes, &Modes), x: [f64; 4]) {
        if !self.enabled {
            return;
        }
        self.push(time, EventKind::GreenToRed, to_red, modes, x);
        self.records.push(EventRecord {
            seq: self.next_seq - 1,
            time,
            kind: EventKind::RedToGreen,
            queue: to_green,
            rates: Modes::snapshot(to_green, modes.0, modes.1),
            x,
        });
    }
}
