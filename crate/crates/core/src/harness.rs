//! Experiment recipes driven by a TOML spec, with CSV outputs and a JSON
//! manifest that re-runs to identical CSVs.
//!
//! A spec file has a few top-level keys and one table per component:
//!
//! ```toml
//! seed = 7
//! eval_reps = 10
//!
//! [sim]
//! horizon = 1000.0
//! weights = [10.0, 1.0, 1.0, 1.0]
//!
//! [optimizer]
//! theta0 = [25.0, 30.0, 30.0, 25.0]
//! ```
//!
//! Every key is optional and unknown keys are rejected.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::baseline::{fd_check, grid_search, seed_bank, FdMode, GridSpec};
use crate::error::{Error, Result};
use crate::ipa::estimate_gradient;
use crate::optimizer::{estimate_j_with_seeds, optimize, CostEstimate, Coupling, OptimizerConfig, StopReason};
use crate::sim::{simulate, SimConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recipe {
    #[default]
    #[serde(rename = "simulate")]
    Simulate,
    #[serde(rename = "gradient")]
    Gradient,
    #[serde(rename = "optimize")]
    Optimize,
    #[serde(rename = "brute-force")]
    BruteForce,
    #[serde(rename = "fd-check")]
    FdCheck,
    #[serde(rename = "sweep-T2")]
    SweepT2,
    #[serde(rename = "sweep-arrival")]
    SweepArrival,
}

impl Recipe {
    pub const ALL: [Recipe; 7] = [
        Recipe::Simulate,
        Recipe::Gradient,
        Recipe::Optimize,
        Recipe::BruteForce,
        Recipe::FdCheck,
        Recipe::SweepT2,
        Recipe::SweepArrival,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::Simulate => "simulate",
            Recipe::Gradient => "gradient",
            Recipe::Optimize => "optimize",
            Recipe::BruteForce => "brute-force",
            Recipe::FdCheck => "fd-check",
            Recipe::SweepT2 => "sweep-T2",
            Recipe::SweepArrival => "sweep-arrival",
        }
    }

    pub fn from_name(s: &str) -> Option<Recipe> {
        Recipe::ALL.into_iter().find(|r| r.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FdSpec {
    pub delta: f64,
    /// Sample paths compared, seeds `seed, seed + 1, …`.
    pub paths: usize,
    pub mode: FdMode,
}

impl Default for FdSpec {
    fn default() -> Self {
        FdSpec {
            delta: 0.01,
            paths: 20,
            mode: FdMode::CommonRandomness,
        }
    }
}

/// Sweep points. `sweep-T2` holds `T1 = t1` and visits every `t2`;
/// `sweep-arrival` holds `T1 = T2 = t1` and sets `ᾱ1 = 1/r` for every `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub t1: f64,
    pub t2: Vec<f64>,
    pub r: Vec<f64>,
    /// Optimizer runs per point, master seeds `seed, seed + 1, …`.
    pub runs: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            t1: 44.0,
            t2: vec![36.0, 40.0, 44.0, 48.0, 52.0],
            r: vec![2.0, 3.0, 4.0, 5.0, 6.0],
            runs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub recipe: Recipe,
    /// Master seed; every random stream of a run derives from it.
    pub seed: u64,
    /// Replications behind every reported `J*`.
    pub eval_reps: usize,
    pub sim: SimConfig,
    pub optimizer: OptimizerConfig,
    pub grid: GridSpec,
    pub fd: FdSpec,
    pub sweep: SweepSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            recipe: Recipe::default(),
            seed: 0,
            eval_reps: 10,
            sim: SimConfig::default(),
            optimizer: OptimizerConfig::default(),
            grid: GridSpec::default(),
            fd: FdSpec::default(),
            sweep: SweepSpec::default(),
        }
    }
}

fn in_section(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidConfig { field, reason } => Error::InvalidConfig {
            field: format!("{section}.{field}"),
            reason,
        },
        other => other,
    }
}

impl ExperimentSpec {
    /// Parses a spec from TOML text. Defaults are filled in but nothing is
    /// checked; see [`ExperimentSpec::normalize`].
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))
    }

    /// Enforces cross-field constraints and fills derived fields.
    pub fn normalize(mut self) -> Result<Self> {
        if self.sim.seed != 0 {
            return Err(Error::config("sim.seed", "set the master seed at top level (`seed = …`)"));
        }
        self.sim.validate().map_err(|e| in_section("sim", e))?;
        let b = self.sim.bounds;
        if self.optimizer.bounds != b {
            if self.optimizer.bounds != OptimizerConfig::default().bounds {
                return Err(Error::config(
                    "optimizer.bounds",
                    format!(
                        "[{}, {}] differs from sim.bounds [{}, {}]; set bounds under [sim] only",
                        self.optimizer.bounds.min, self.optimizer.bounds.max, b.min, b.max
                    ),
                ));
            }
            self.optimizer.bounds = b;
        }
        if let (Some(a), Some(g)) = (self.optimizer.coupling, self.grid.coupling) {
            if a != g {
                return Err(Error::config("grid.coupling", "differs from optimizer.coupling"));
            }
        }
        self.optimizer.validate().map_err(|e| in_section("optimizer", e))?;
        self.grid.validate(b)?;
        if self.eval_reps == 0 {
            return Err(Error::config("eval_reps", "need at least one replication"));
        }
        if !(self.fd.delta.is_finite() && self.fd.delta > 0.0) {
            return Err(Error::config("fd.delta", format!("must be positive, got {}", self.fd.delta)));
        }
        if self.fd.paths == 0 {
            return Err(Error::config("fd.paths", "need at least one path"));
        }
        if self.sweep.runs == 0 {
            return Err(Error::config("sweep.runs", "need at least one run per point"));
        }
        match self.recipe {
            Recipe::SweepT2 => {
                if self.sweep.t2.is_empty() {
                    return Err(Error::config("sweep.t2", "no sweep points"));
                }
                for &t2 in &self.sweep.t2 {
                    Coupling { t1: self.sweep.t1, t2 }
                        .validate(b)
                        .map_err(|e| in_section("sweep", e))?;
                }
            }
            Recipe::SweepArrival => {
                if self.sweep.r.is_empty() {
                    return Err(Error::config("sweep.r", "no sweep points"));
                }
                if let Some(r) = self.sweep.r.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
                    return Err(Error::config("sweep.r", format!("need r > 0, got {r}")));
                }
                let t = self.sweep.t1;
                Coupling { t1: t, t2: t }.validate(b).map_err(|e| in_section("sweep", e))?;
            }
            _ => {}
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Spec(e.to_string()))
    }
}

/// Reads, fills and checks a spec. Accepts a TOML spec or a manifest written
/// by an earlier run, whose embedded spec is replayed.
pub fn validate_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Spec(format!("{}: {e}", path.display())))?;
    let spec = if path.extension().is_some_and(|e| e == "json") {
        let manifest: Value = serde_json::from_str(&text)?;
        let spec = manifest
            .get("spec")
            .ok_or_else(|| Error::Spec(format!("{}: manifest has no `spec`", path.display())))?;
        serde_json::from_value(spec.clone())?
    } else {
        ExperimentSpec::from_toml(&text).map_err(|e| match e {
            Error::Spec(m) => Error::Spec(format!("{}: {m}", path.display())),
            e => e,
        })?
    };
    spec.normalize()
}

/// Independent seed streams of one master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

const EVAL_STREAM: u64 = 2;

/// The seed bank behind every `J*` a run reports.
pub fn eval_bank(spec: &ExperimentSpec) -> Vec<u64> {
    seed_bank(derive_seed(spec.seed, EVAL_STREAM), spec.eval_reps)
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Rayon worker count; `None` keeps the current pool.
    pub workers: Option<usize>,
    /// Names the run; a UTC timestamp when `None`.
    pub stamp: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub dir: PathBuf,
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub summary: Value,
    /// Error that cut the run short; outputs written before it are kept.
    pub error: Option<String>,
}

struct Output {
    suffix: &'static str,
    bytes: Vec<u8>,
}

struct Outcome {
    outputs: Vec<Output>,
    summary: Value,
    error: Option<Error>,
}

impl Outcome {
    fn ok(outputs: Vec<Output>, summary: Value) -> Self {
        Outcome {
            outputs,
            summary,
            error: None,
        }
    }
}

fn csv<F: FnOnce(&mut Vec<u8>) -> Result<()>>(suffix: &'static str, f: F) -> Result<Output> {
    let mut bytes = Vec::new();
    f(&mut bytes)?;
    Ok(Output { suffix, bytes })
}

fn stamp_now() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string()
}

/// Executes the recipe and writes `<out>/<recipe>_<stamp>/` holding the
/// CSV outputs and `manifest.json`.
pub fn run(spec: &ExperimentSpec, opts: &RunOptions) -> Result<RunReport> {
    let spec = spec.clone().normalize()?;
    let outcome = match opts.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?
            .install(|| execute(&spec)),
        None => execute(&spec),
    };

    let stamp = opts.stamp.clone().unwrap_or_else(stamp_now);
    let base = format!("{}_{stamp}", spec.recipe.name());
    let mut dir = opts.out_dir.join(&base);
    let mut n = 1;
    while dir.exists() {
        dir = opts.out_dir.join(format!("{base}-{n}"));
        n += 1;
    }
    fs::create_dir_all(&dir)?;

    let mut outputs = Vec::new();
    let mut files = Vec::new();
    for out in &outcome.outputs {
        let path = dir.join(format!("{base}{}.csv", out.suffix));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        w.write_all(&out.bytes)?;
        w.flush()?;
        files.push(json!({
            "file": path.file_name().map(|f| f.to_string_lossy().into_owned()),
            "sha256": format!("{:x}", Sha256::digest(&out.bytes)),
            "bytes": out.bytes.len(),
        }));
        outputs.push(path);
    }
    let error = outcome.error.as_ref().map(|e| e.to_string());
    let status = match (&error, outputs.is_empty()) {
        (None, _) => "complete",
        (Some(_), false) => "partial",
        (Some(_), true) => "failed",
    };
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "recipe": spec.recipe.name(),
        "seed": spec.seed,
        "workers": opts.workers,
        "stamp": stamp,
        "status": status,
        "error": error,
        "outputs": files,
        "summary": outcome.summary,
        "spec": spec,
    });
    let manifest_path = dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(RunReport {
        dir,
        outputs,
        manifest: manifest_path,
        summary: outcome.summary,
        error,
    })
}

fn execute(spec: &ExperimentSpec) -> Outcome {
    let r = match spec.recipe {
        Recipe::Simulate => run_simulate(spec),
        Recipe::Gradient => run_gradient(spec),
        Recipe::Optimize => run_optimize(spec),
        Recipe::BruteForce => run_brute_force(spec),
        Recipe::FdCheck => run_fd_check(spec),
        Recipe::SweepT2 | Recipe::SweepArrival => return run_sweep(spec),
    };
    r.unwrap_or_else(|e| Outcome {
        outputs: Vec::new(),
        summary: Value::Null,
        error: Some(e),
    })
}

fn sim_of(spec: &ExperimentSpec) -> SimConfig {
    spec.sim.with_seed(spec.seed)
}

fn run_simulate(spec: &ExperimentSpec) -> Result<Outcome> {
    let cfg = sim_of(spec);
    let r = simulate(&cfg)?;
    let t = cfg.theta;
    let mean = r.area.map(|a| a / cfg.horizon);
    let summary_csv = csv("", |w| {
        writeln!(w, "seed,theta1,theta2,theta3,theta4,L,x1_mean,x2_mean,x3_mean,x4_mean,n_records")?;
        writeln!(
            w,
            "{},{},{},{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{}",
            cfg.seed, t[0], t[1], t[2], t[3], r.cost, mean[0], mean[1], mean[2], mean[3],
            r.trace.records.len()
        )?;
        Ok(())
    })?;
    let trace_csv = csv("_trace", |w| r.trace.write_csv(w))?;
    Ok(Outcome::ok(
        vec![summary_csv, trace_csv],
        json!({ "L": r.cost, "arrived": r.arrived, "departed": r.departed, "x_mean": mean }),
    ))
}

fn run_gradient(spec: &ExperimentSpec) -> Result<Outcome> {
    let cfg = sim_of(spec);
    let r = simulate(&cfg)?;
    let g = estimate_gradient(&r.trace, &cfg.weights, &spec.optimizer.rates)?;
    let t = cfg.theta;
    let d = g.gradient;
    let out = csv("", |w| {
        writeln!(w, "theta1,theta2,theta3,theta4,L,dL1,dL2,dL3,dL4,n_events,n_degenerate")?;
        writeln!(
            w,
            "{},{},{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{},{}",
            t[0], t[1], t[2], t[3], r.cost, d[0], d[1], d[2], d[3], g.n_events, g.n_degenerate
        )?;
        Ok(())
    })?;
    Ok(Outcome::ok(
        vec![out],
        json!({ "L": r.cost, "gradient": d, "n_events": g.n_events, "n_degenerate": g.n_degenerate }),
    ))
}

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::Converged => "converged",
        StopReason::MaxIterations => "max_iterations",
    }
}

fn run_optimize(spec: &ExperimentSpec) -> Result<Outcome> {
    let sim = sim_of(spec);
    let tr = optimize(&sim, &spec.optimizer, spec.seed)?;
    let j = estimate_j_with_seeds(&sim, tr.theta, &eval_bank(spec))?;
    let out = csv("", |w| tr.write_csv(w))?;
    Ok(Outcome::ok(
        vec![out],
        json!({
            "theta": tr.theta,
            "J_mean": j.mean,
            "J_stderr": j.stderr,
            "reps": j.reps,
            "iterations": tr.iterates.len(),
            "stop": stop_name(tr.stop),
            "step": tr.step,
        }),
    ))
}

fn run_brute_force(spec: &ExperimentSpec) -> Result<Outcome> {
    let sim = spec.sim.with_seed(derive_seed(spec.seed, EVAL_STREAM));
    let r = grid_search(&sim, &spec.grid)?;
    let out = csv("", |w| r.write_csv(w))?;
    Ok(Outcome::ok(
        vec![out],
        json!({
            "theta": r.best.theta,
            "J_mean": r.best.j.mean,
            "J_stderr": r.best.j.stderr,
            "reps": r.best.j.reps,
            "points": r.table.len(),
        }),
    ))
}

fn run_fd_check(spec: &ExperimentSpec) -> Result<Outcome> {
    let theta = spec.sim.theta;
    let rows: Vec<(u64, [f64; 4], [f64; 4], [bool; 4], u64)> = (0..spec.fd.paths as u64)
        .into_par_iter()
        .map(|p| {
            let cfg = spec.sim.with_seed(spec.seed.wrapping_add(p));
            let path = simulate(&cfg)?;
            let g = estimate_gradient(&path.trace, &cfg.weights, &spec.optimizer.rates)?;
            let (fd, reordered) = match spec.fd.mode {
                FdMode::CommonRandomness => {
                    let c = fd_check(&cfg, theta, spec.fd.delta)?;
                    (c.gradient, c.reordered)
                }
                FdMode::Independent => (
                    crate::baseline::finite_difference_gradient(&cfg, theta, spec.fd.delta, FdMode::Independent)?,
                    [false; 4],
                ),
            };
            Ok((cfg.seed, g.gradient, fd, reordered, g.n_degenerate))
        })
        .collect::<Result<_>>()?;
    let out = csv("", |w| {
        writeln!(
            w,
            "seed,theta1,theta2,theta3,theta4,ipa1,ipa2,ipa3,ipa4,fd1,fd2,fd3,fd4,reordered1,reordered2,reordered3,reordered4,n_degenerate"
        )?;
        for (seed, g, f, re, nd) in &rows {
            let t = theta;
            writeln!(
                w,
                "{seed},{},{},{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{},{},{},{},{nd}",
                t[0], t[1], t[2], t[3], g[0], g[1], g[2], g[3], f[0], f[1], f[2], f[3],
                re[0] as u8, re[1] as u8, re[2] as u8, re[3] as u8
            )?;
        }
        Ok(())
    })?;
    let smooth = rows.iter().filter(|r| !r.3.iter().any(|&x| x)).count();
    Ok(Outcome::ok(
        vec![out],
        json!({ "paths": rows.len(), "unreordered": smooth, "delta": spec.fd.delta }),
    ))
}

/// One optimizer run at one sweep point.
#[derive(Clone, Debug)]
struct SweepRow {
    key: f64,
    alpha1: f64,
    t1: f64,
    t2: f64,
    run: usize,
    theta: [f64; 4],
    j: CostEstimate,
    iterations: usize,
    stop: StopReason,
}

fn sweep_point(spec: &ExperimentSpec, key: f64, run: usize) -> Result<SweepRow> {
    let (t1, t2, mut sim) = match spec.recipe {
        Recipe::SweepT2 => (spec.sweep.t1, key, spec.sim.clone()),
        _ => {
            let mut sim = spec.sim.clone();
            sim.arrival[0] = 1.0 / key;
            (spec.sweep.t1, spec.sweep.t1, sim)
        }
    };
    sim.seed = spec.seed;
    let coupling = Coupling { t1, t2 };
    let opt = OptimizerConfig {
        theta0: coupling.expand(t1 / 2.0, t2 / 2.0),
        coupling: Some(coupling),
        ..spec.optimizer.clone()
    };
    let tr = optimize(&sim, &opt, spec.seed.wrapping_add(run as u64))?;
    let j = estimate_j_with_seeds(&sim, tr.theta, &eval_bank(spec))?;
    Ok(SweepRow {
        key,
        alpha1: sim.arrival[0],
        t1,
        t2,
        run,
        theta: tr.theta,
        j,
        iterations: tr.iterates.len(),
        stop: tr.stop,
    })
}

fn run_sweep(spec: &ExperimentSpec) -> Outcome {
    let keys = match spec.recipe {
        Recipe::SweepT2 => &spec.sweep.t2,
        _ => &spec.sweep.r,
    };
    let jobs: Vec<(f64, usize)> = keys
        .iter()
        .flat_map(|&k| (0..spec.sweep.runs).map(move |r| (k, r)))
        .collect();
    let results: Vec<Result<SweepRow>> = jobs.par_iter().map(|&(k, r)| sweep_point(spec, k, r)).collect();
    let error = results.iter().find_map(|r| r.as_ref().err()).map(|e| Error::Spec(e.to_string()));
    let rows: Vec<SweepRow> = results.into_iter().filter_map(|r| r.ok()).collect();

    let arrival = spec.recipe == Recipe::SweepArrival;
    let bytes = {
        let mut w = Vec::new();
        let lead = if arrival { "r,alpha1," } else { "" };
        let _ = writeln!(
            w,
            "{lead}T1,T2,run,theta1,theta2,theta3,theta4,J_mean,J_stderr,reps,iterations,stop"
        );
        for r in &rows {
            let lead = if arrival {
                format!("{},{:.9},", r.key, r.alpha1)
            } else {
                String::new()
            };
            let t = r.theta;
            let _ = writeln!(
                w,
                "{lead}{},{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{},{},{}",
                r.t1, r.t2, r.run, t[0], t[1], t[2], t[3], r.j.mean, r.j.stderr, r.j.reps,
                r.iterations, stop_name(r.stop)
            );
        }
        w
    };
    let points: Vec<Value> = rows
        .iter()
        .map(|r| json!({ "key": r.key, "run": r.run, "theta": r.theta, "J_mean": r.j.mean }))
        .collect();
    Outcome {
        outputs: vec![Output { suffix: "", bytes }],
        summary: json!({ "points": points }),
        error,
    }
}
