//! Event-driven integration of the fluid model. Contents move linearly
//! between events, so every step is exact.

use crate::error::Result;
use crate::model::{EventKind, QueueId};

use super::trace::Recorder;
use super::{arrival_process, Lights, Modes, PiecewiseRate, Realization, SimConfig, Trace, EMPTY_TOL};

type RunOutput = (Trace, [f64; 4], [f64; 4], [f64; 4]);

struct Fluid {
    t: f64,
    x: [f64; 4],
    nonempty: [bool; 4],
    alpha: [f64; 4],
    h: [f64; 4],
    lights: Lights,
    rec: Recorder,
}

impl Fluid {
    fn modes(&self) -> Modes {
        Modes {
            green: self.lights.green(),
            nonempty: self.nonempty,
            alpha: self.alpha,
            h: self.h,
        }
    }

    /// Starts a NEP at every empty queue whose drift turned positive.
    fn start_neps(&mut self) {
        loop {
            let pre = self.modes();
            let f = pre.drifts();
            let Some(q) = QueueId::ALL
                .into_iter()
                .find(|q| !self.nonempty[q.ix()] && f[q.ix()] > 0.0)
            else {
                return;
            };
            self.nonempty[q.ix()] = true;
            let post = self.modes();
            self.rec.push(self.t, EventKind::Start, q, (&pre, &post), self.x);
        }
    }
}

pub(super) fn run(cfg: &SimConfig, record: bool) -> Result<RunOutput> {
    let theta = cfg.theta_vector()?;
    let horizon = cfg.horizon;
    let nominal = cfg.nominal_alpha();

    let mut processes: [Option<PiecewiseRate>; 4] = Default::default();
    for q in QueueId::EXOGENOUS {
        let r = arrival_process(cfg.backend, nominal[q.ix()], q, cfg.seed, horizon, &cfg.fluid);
        if let Realization::Rate(p) = r {
            processes[q.ix()] = Some(p);
        }
    }
    let mut cursor = [1usize; 4];
    let mut alpha = [0.0; 4];
    for q in QueueId::EXOGENOUS {
        if let Some(p) = &processes[q.ix()] {
            alpha[q.ix()] = p.levels[0];
        }
    }

    let mut sim = Fluid {
        t: 0.0,
        x: [0.0; 4],
        nonempty: [false; 4],
        alpha,
        h: cfg.service,
        lights: Lights::new(cfg.initial_clock()?, theta),
        rec: Recorder::new(record),
    };
    let mut area = [0.0; 4];
    let mut arrived = [0.0; 4];
    let mut departed = [0.0; 4];

    for q in QueueId::EXOGENOUS {
        let m = sim.modes();
        sim.rec.push(0.0, EventKind::RateChange, q, (&m, &m), sim.x);
    }
    sim.start_neps();

    loop {
        let modes = sim.modes();
        let f = modes.drifts();
        let rates = modes.rates();

        let mut t_next = horizon;
        let (t_switch, _) = sim.lights.next_due();
        t_next = t_next.min(t_switch);
        for q in QueueId::EXOGENOUS {
            if let Some(p) = &processes[q.ix()] {
                if let Some(&tc) = p.times.get(cursor[q.ix()]) {
                    t_next = t_next.min(tc);
                }
            }
        }
        let mut t_empty = [f64::INFINITY; 4];
        for i in 0..4 {
            if sim.nonempty[i] && f[i] < 0.0 {
                t_empty[i] = sim.t + sim.x[i] / -f[i];
                t_next = t_next.min(t_empty[i]);
            }
        }

        let dt = t_next - sim.t;
        for i in 0..4 {
            area[i] += sim.x[i] * dt + 0.5 * f[i] * dt * dt;
            arrived[i] += rates.alpha[i] * dt;
            departed[i] += rates.beta[i] * dt;
            sim.x[i] = (sim.x[i] + f[i] * dt).max(0.0);
        }
        sim.t = t_next;
        sim.lights.advance_to(sim.t);
        if sim.t >= horizon {
            break;
        }

        // ends of NEPs
        for q in QueueId::ALL {
            let i = q.ix();
            if sim.nonempty[i] && f[i] < 0.0 && (sim.x[i] <= EMPTY_TOL || t_empty[i] == sim.t) {
                let pre = sim.modes();
                sim.x[i] = 0.0;
                sim.nonempty[i] = false;
                let post = sim.modes();
                sim.rec.push(sim.t, EventKind::End, q, (&pre, &post), sim.x);
            }
        }

        // light switches
        loop {
            let (due, int) = sim.lights.next_due();
            if due > sim.t {
                break;
            }
            let pre = sim.modes();
            let (red, green) = sim.lights.switch(int, sim.t);
            let post = sim.modes();
            sim.rec.push_switch(sim.t, red, green, (&pre, &post), sim.x);
        }

        // exogenous rate changes
        for q in QueueId::EXOGENOUS {
            let i = q.ix();
            let Some(p) = &processes[i] else { continue };
            while let Some(&tc) = p.times.get(cursor[i]) {
                if tc > sim.t {
                    break;
                }
                let pre = sim.modes();
                sim.alpha[i] = p.levels[cursor[i]];
                cursor[i] += 1;
                let post = sim.modes();
                sim.rec.push(sim.t, EventKind::RateChange, q, (&pre, &post), sim.x);
            }
        }

        sim.start_neps();
    }

    let trace = Trace {
        backend: cfg.backend,
        horizon,
        service: cfg.service,
        initial_green: cfg.initial_clock()?.green_mask(),
        initial_x: [0.0; 4],
        final_x: sim.x,
        records: sim.rec.records,
        complete: true,
    };
    Ok((trace, arrived, departed, area))
}
