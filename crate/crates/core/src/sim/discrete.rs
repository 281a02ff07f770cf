//! Vehicle-level discrete-event backend.
//!
//! Cars arrive as Poisson streams at queues 1, 2 and 4; every departure
//! from queue 1 is an arrival at queue 3 at the same instant. A green,
//! non-empty road releases one car every `1/H_n` seconds, the first one a
//! full headway after service (re)starts. Service in progress at a G2R
//! switch is abandoned.
//!
//! Same-instant ordering: departures (and the NEP ends they cause), then
//! light switches, then arrivals (and the NEP starts they cause).

use crate::error::Result;
use crate::model::{EventKind, QueueId};

use super::trace::Recorder;
use super::{arrival_process, Lights, Modes, Realization, SimConfig, Trace};

type RunOutput = (Trace, [f64; 4], [f64; 4], [f64; 4]);

struct Des {
    t: f64,
    x: [u64; 4],
    next_departure: [Option<f64>; 4],
    alpha: [f64; 4],
    h: [f64; 4],
    lights: Lights,
    rec: Recorder,
    arrived: [f64; 4],
    departed: [f64; 4],
}

impl Des {
    fn modes(&self) -> Modes {
        Modes {
            green: self.lights.green(),
            nonempty: self.x.map(|v| v > 0),
            alpha: self.alpha,
            h: self.h,
        }
    }

    fn xf(&self) -> [f64; 4] {
        self.x.map(|v| v as f64)
    }

    fn headway(&self, q: QueueId) -> f64 {
        1.0 / self.h[q.ix()]
    }

    fn depart(&mut self, q: QueueId) {
        let i = q.ix();
        self.x[i] -= 1;
        self.departed[i] += 1.0;
        if self.rec.enabled {
            let post = self.modes();
            let mut pre = post;
            pre.nonempty[i] = true;
            self.rec.push(self.t, EventKind::Departure, q, (&pre, &post), self.xf());
            if self.x[i] == 0 {
                self.rec.push(self.t, EventKind::End, q, (&pre, &post), self.xf());
            }
        }
        if self.x[i] == 0 {
            self.next_departure[i] = None;
        } else {
            self.next_departure[i] = Some(self.t + self.headway(q));
        }
    }

    fn arrive(&mut self, q: QueueId) {
        let i = q.ix();
        self.x[i] += 1;
        self.arrived[i] += 1.0;
        let post = self.modes();
        if self.rec.enabled {
            let mut pre = post;
            pre.nonempty[i] = self.x[i] > 1;
            self.rec.push(self.t, EventKind::Arrival, q, (&pre, &post), self.xf());
            if self.x[i] == 1 {
                self.rec.push(self.t, EventKind::Start, q, (&pre, &post), self.xf());
            }
        }
        if post.green[i] && self.next_departure[i].is_none() {
            self.next_departure[i] = Some(self.t + self.headway(q));
        }
    }
}

pub(super) fn run(cfg: &SimConfig, record: bool) -> Result<RunOutput> {
    let theta = cfg.theta_vector()?;
    let horizon = cfg.horizon;
    let nominal = cfg.nominal_alpha();

    let mut arrivals: [Vec<f64>; 4] = Default::default();
    for q in QueueId::EXOGENOUS {
        if let Realization::Arrivals(v) =
            arrival_process(cfg.backend, nominal[q.ix()], q, cfg.seed, horizon, &cfg.fluid)
        {
            arrivals[q.ix()] = v;
        }
    }
    let mut cursor = [0usize; 4];

    let mut des = Des {
        t: 0.0,
        x: [0; 4],
        next_departure: [None; 4],
        alpha: nominal,
        h: cfg.service,
        lights: Lights::new(cfg.initial_clock()?, theta),
        rec: Recorder::new(record),
        arrived: [0.0; 4],
        departed: [0.0; 4],
    };
    let mut area = [0.0; 4];

    loop {
        let mut t_next = horizon.min(des.lights.next_due().0);
        for i in 0..4 {
            if let Some(td) = des.next_departure[i] {
                t_next = t_next.min(td);
            }
            if let Some(&ta) = arrivals[i].get(cursor[i]) {
                t_next = t_next.min(ta);
            }
        }
        let dt = t_next - des.t;
        for i in 0..4 {
            area[i] += des.x[i] as f64 * dt;
        }
        des.t = t_next;
        des.lights.advance_to(des.t);
        if des.t >= horizon {
            break;
        }

        let mut transfers = 0;
        for q in QueueId::ALL {
            if des.next_departure[q.ix()].is_some_and(|td| td <= des.t) {
                des.depart(q);
                if q == QueueId::Q1 {
                    transfers += 1;
                }
            }
        }

        loop {
            let (due, int) = des.lights.next_due();
            if due > des.t {
                break;
            }
            let pre = des.modes();
            let (red, green) = des.lights.switch(int, des.t);
            let post = des.modes();
            des.next_departure[red.ix()] = None;
            if des.x[green.ix()] > 0 {
                des.next_departure[green.ix()] = Some(des.t + des.headway(green));
            }
            let x = des.xf();
            des.rec.push_switch(des.t, red, green, (&pre, &post), x);
        }

        for q in QueueId::EXOGENOUS {
            let i = q.ix();
            while arrivals[i].get(cursor[i]).is_some_and(|&ta| ta <= des.t) {
                cursor[i] += 1;
                des.arrive(q);
            }
        }
        for _ in 0..transfers {
            des.arrive(QueueId::Q3);
        }
    }

    let trace = Trace {
        backend: cfg.backend,
        horizon,
        service: cfg.service,
        initial_green: cfg.initial_clock()?.green_mask(),
        initial_x: [0.0; 4],
        final_x: des.xf(),
        records: des.rec.records,
        complete: true,
    };
    Ok((trace, des.arrived, des.departed, area))
}

/// Green windows `[start, end]` of one queue, with switch instants summed
/// exactly as [`Lights`] sums them.
struct Greens {
    start: f64,
    end: f64,
    own: f64,
    other: f64,
}

impl Greens {
    fn new(q: QueueId, initially_green: bool, theta: &[f64; 4]) -> Self {
        let own = theta[q.ix()];
        let other = theta[q.perpendicular().ix()];
        if initially_green {
            Greens { start: 0.0, end: own, own, other }
        } else {
            Greens { start: other, end: other + own, own, other }
        }
    }

    fn next(&mut self) {
        self.start = self.end + self.other;
        self.end = self.start + self.own;
    }
}

/// Departure instants of a FIFO queue fed at `arrivals`, served one car per
/// headway while green. Calls `out(a, d)` per car; `d` may exceed the
/// horizon.
fn walk(arrivals: &[f64], mut greens: Greens, headway: f64, mut out: impl FnMut(f64, f64)) {
    let mut prev = f64::NEG_INFINITY;
    for &a in arrivals {
        let mut s = a.max(prev);
        loop {
            while s >= greens.end {
                greens.next();
            }
            if s < greens.start {
                s = greens.start;
            }
            let d = s + headway;
            if d <= greens.end {
                prev = d;
                break;
            }
            greens.next();
        }
        out(a, prev);
    }
}

/// `∫ x_n dt` for every queue on the vehicle backend, from pre-drawn
/// exogenous arrivals. Equal to the event-driven integration up to
/// summation order.
pub(super) fn areas(
    cfg: &SimConfig,
    theta: &[f64; 4],
    arrivals: &[Vec<f64>; 4],
    q3_buf: &mut Vec<f64>,
) -> Result<[f64; 4]> {
    let horizon = cfg.horizon;
    let green0 = cfg.initial_clock()?.green_mask();
    let mut area = [0.0; 4];
    q3_buf.clear();
    for q in [QueueId::Q1, QueueId::Q2, QueueId::Q4] {
        let i = q.ix();
        let mut sum = 0.0;
        let greens = Greens::new(q, green0[i], theta);
        walk(&arrivals[i], greens, 1.0 / cfg.service[i], |a, d| {
            sum += d.min(horizon) - a;
            if q == QueueId::Q1 && d < horizon {
                q3_buf.push(d);
            }
        });
        area[i] = sum;
    }
    let mut sum = 0.0;
    let greens = Greens::new(QueueId::Q3, green0[2], theta);
    walk(q3_buf, greens, 1.0 / cfg.service[2], |a, d| sum += d.min(horizon) - a);
    area[2] = sum;
    Ok(area)
}
