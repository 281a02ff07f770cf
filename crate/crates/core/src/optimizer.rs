//! Projected stochastic gradient descent on the cycle lengths, driven by
//! per-path IPA gradients.
//!
//! `θ_{k+1} = Π[θ_k − γ_k g_k]` with `γ_k = c/(k+1)^p` and Π the box
//! projection. With a coupling `θ1 + θ2 = T1`, `θ3 + θ4 = T2` the free
//! variables are θ1 and θ3, stepped along `g1 − g2` and `g3 − g4`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipa::{estimate_gradient, RateEstimatorConfig};
use crate::model::Bounds;
use crate::sim::{simulate, simulate_cost, SimConfig};

/// Fixed cycle lengths `θ1 + θ2 = t1` and `θ3 + θ4 = t2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    pub t1: f64,
    pub t2: f64,
}

impl Coupling {
    /// Admissible range of the free variable at intersection `j` (0 or 1).
    pub fn free_range(&self, j: usize, bounds: Bounds) -> (f64, f64) {
        let t = if j == 0 { self.t1 } else { self.t2 };
        ((t - bounds.max).max(bounds.min), (t - bounds.min).min(bounds.max))
    }

    pub fn validate(&self, bounds: Bounds) -> Result<()> {
        for (j, name) in [(0, "coupling.t1"), (1, "coupling.t2")] {
            let (lo, hi) = self.free_range(j, bounds);
            if !(lo <= hi) {
                return Err(Error::config(
                    name,
                    format!("no split of this cycle fits in [{}, {}]", bounds.min, bounds.max),
                ));
            }
        }
        Ok(())
    }

    /// Whether `theta` satisfies both sums exactly.
    pub fn holds(&self, theta: &[f64; 4]) -> bool {
        theta[0] + theta[1] == self.t1 && theta[2] + theta[3] == self.t2
    }

    /// Rebuilds θ from the free variables.
    pub fn expand(&self, theta1: f64, theta3: f64) -> [f64; 4] {
        [theta1, self.t1 - theta1, theta3, self.t2 - theta3]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub theta0: [f64; 4],
    pub bounds: Bounds,
    /// Step scale `c`. `None` picks it so the first step moves no
    /// coordinate by more than `first_step` seconds.
    pub step: Option<f64>,
    pub first_step: f64,
    /// Decay exponent `p` of `γ_k = c/(k+1)^p`.
    pub decay: f64,
    pub max_iter: usize,
    /// Stop once `max_i |θ_{k+1,i} − θ_{k,i}| < tolerance` for `patience`
    /// consecutive iterations.
    pub tolerance: f64,
    pub patience: usize,
    /// Sample paths averaged per iteration.
    pub paths: usize,
    pub coupling: Option<Coupling>,
    pub rates: RateEstimatorConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            theta0: [25.0, 30.0, 30.0, 25.0],
            bounds: Bounds::default(),
            step: None,
            first_step: 2.0,
            decay: 0.6,
            max_iter: 1000,
            tolerance: 0.01,
            patience: 5,
            paths: 1,
            coupling: None,
            rates: RateEstimatorConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.step {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::config("step", format!("must be positive, got {c}")));
            }
        }
        if !(self.first_step.is_finite() && self.first_step > 0.0) {
            return Err(Error::config("first_step", "must be positive"));
        }
        if !(self.decay > 0.5 && self.decay <= 1.0) {
            return Err(Error::config("decay", format!("need 0.5 < p <= 1, got {}", self.decay)));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::config("tolerance", "must be positive"));
        }
        if self.paths == 0 {
            return Err(Error::config("paths", "need at least one path per iteration"));
        }
        let bounds = Bounds::new(self.bounds.min, self.bounds.max)?;
        for (i, &v) in self.theta0.iter().enumerate() {
            if !bounds.contains(v) {
                return Err(Error::config(
                    format!("theta0[{i}]"),
                    format!("{v} outside [{}, {}]", bounds.min, bounds.max),
                ));
            }
        }
        if let Some(c) = &self.coupling {
            c.validate(bounds)?;
            if !c.holds(&self.theta0) {
                return Err(Error::config(
                    "theta0",
                    format!(
                        "θ1+θ2 = {} and θ3+θ4 = {} must equal the coupled cycles {} and {}",
                        self.theta0[0] + self.theta0[1],
                        self.theta0[2] + self.theta0[3],
                        c.t1,
                        c.t2
                    ),
                ));
            }
        }
        self.rates.validate()
    }

    pub fn gamma(&self, k: usize, c: f64) -> f64 {
        c / ((k + 1) as f64).powf(self.decay)
    }

    /// The gradient along the free coordinates: the plain gradient, or
    /// `(g1 − g2, −(g1 − g2), g3 − g4, −(g3 − g4))` under coupling.
    pub fn effective_gradient(&self, g: &[f64; 4]) -> [f64; 4] {
        match self.coupling {
            None => *g,
            Some(_) => {
                let a = g[0] - g[1];
                let b = g[2] - g[3];
                [a, -a, b, -b]
            }
        }
    }
}

/// One projected step with `γ_k = c/(k+1)^p`.
pub fn sgd_step(theta: &[f64; 4], g: &[f64; 4], k: usize, c: f64, cfg: &OptimizerConfig) -> Result<[f64; 4]> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient {
            iteration: k,
            gradient: *g,
        });
    }
    let gamma = cfg.gamma(k, c);
    let b = cfg.bounds;
    Ok(match cfg.coupling {
        None => std::array::from_fn(|i| b.clamp(theta[i] - gamma * g[i])),
        Some(cp) => {
            let (lo1, hi1) = cp.free_range(0, b);
            let (lo3, hi3) = cp.free_range(1, b);
            let t1 = (theta[0] - gamma * (g[0] - g[1])).clamp(lo1, hi1);
            let t3 = (theta[2] - gamma * (g[2] - g[3])).clamp(lo3, hi3);
            cp.expand(t1, t3)
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
}

/// The iterate `θ_k`, the cost and gradient estimated there, and the step
/// size used to leave it.
#[derive(Clone, Debug, PartialEq)]
pub struct Iterate {
    pub k: usize,
    pub theta: [f64; 4],
    pub j_hat: f64,
    pub gradient: [f64; 4],
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationTrajectory {
    /// `θ_0, θ_1, …`; the last entry is the point the run stopped at.
    pub iterates: Vec<Iterate>,
    /// The iterate the run stopped at.
    pub theta: [f64; 4],
    pub stop: StopReason,
    /// The resolved step scale `c`.
    pub step: f64,
}

pub const TRAJECTORY_HEADER: &str = "k,theta1,theta2,theta3,theta4,J_hat,g1,g2,g3,g4,gamma_k";

impl OptimizationTrajectory {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
        for it in &self.iterates {
            let t = &it.theta;
            let g = &it.gradient;
            writeln!(
                w,
                "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
                it.k, t[0], t[1], t[2], t[3], it.j_hat, g[0], g[1], g[2], g[3], it.gamma
            )?;
        }
        Ok(())
    }
}

/// Mean cost and gradient over independent paths at one θ.
fn sample_at(sim: &SimConfig, theta: [f64; 4], seeds: &[u64], rates: &RateEstimatorConfig) -> Result<(f64, [f64; 4])> {
    let results: Vec<(f64, [f64; 4])> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = SimConfig {
                theta,
                seed,
                ..sim.clone()
            };
            let path = simulate(&cfg)?;
            let g = estimate_gradient(&path.trace, &cfg.weights, rates)?;
            Ok((path.cost, g.gradient))
        })
        .collect::<Result<_>>()?;
    let n = results.len() as f64;
    let mut j = 0.0;
    let mut g = [0.0; 4];
    for (c, d) in &results {
        j += c / n;
        for i in 0..4 {
            g[i] += d[i] / n;
        }
    }
    Ok((j, g))
}

/// Runs the stochastic approximation from `opt.theta0`. Every path uses a
/// fresh seed drawn from `master_seed`, so the trajectory is reproducible.
pub fn optimize(sim: &SimConfig, opt: &OptimizerConfig, master_seed: u64) -> Result<OptimizationTrajectory> {
    opt.validate()?;
    let sim = SimConfig {
        bounds: opt.bounds,
        ..sim.clone()
    };
    sim.with_theta(opt.theta0).validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let mut theta = opt.theta0;
    let mut c = opt.step;
    let mut iterates = Vec::new();
    let mut calm = 0;
    let mut stop = StopReason::MaxIterations;
    for k in 0..opt.max_iter {
        let seeds: Vec<u64> = (0..opt.paths).map(|_| rng.next_u64()).collect();
        let (j_hat, g) = sample_at(&sim, theta, &seeds, &opt.rates)?;
        let scale = *c.get_or_insert_with(|| {
            let m = opt.effective_gradient(&g).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m > 0.0 {
                opt.first_step / m
            } else {
                opt.first_step
            }
        });
        let next = sgd_step(&theta, &g, k, scale, opt)?;
        iterates.push(Iterate {
            k,
            theta,
            j_hat,
            gradient: g,
            gamma: opt.gamma(k, scale),
        });
        let moved = (0..4).fold(0.0f64, |m, i| m.max((next[i] - theta[i]).abs()));
        theta = next;
        calm = if moved < opt.tolerance { calm + 1 } else { 0 };
        if calm >= opt.patience {
            stop = StopReason::Converged;
            break;
        }
    }
    let step = c.unwrap_or(opt.first_step);
    // the stopping point closes the trajectory with its own estimate
    let k = iterates.len();
    let seeds: Vec<u64> = (0..opt.paths).map(|_| rng.next_u64()).collect();
    let (j_hat, gradient) = sample_at(&sim, theta, &seeds, &opt.rates)?;
    iterates.push(Iterate {
        k,
        theta,
        j_hat,
        gradient,
        gamma: opt.gamma(k, step),
    });
    Ok(OptimizationTrajectory {
        iterates,
        theta,
        stop,
        step,
    })
}

/// Monte-Carlo estimate of `J(θ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    /// Standard error of the mean; 0 for a single replication.
    pub stderr: f64,
    pub reps: usize,
}

/// `J(θ)` over `reps` paths with seeds `sim.seed, sim.seed + 1, …`.
pub fn estimate_j(sim: &SimConfig, theta: [f64; 4], reps: usize) -> Result<CostEstimate> {
    if reps == 0 {
        return Err(Error::config("reps", "need at least one replication"));
    }
    let seeds: Vec<u64> = (0..reps as u64).map(|r| sim.seed.wrapping_add(r)).collect();
    estimate_j_with_seeds(sim, theta, &seeds)
}

/// `J(θ)` over an explicit seed bank, for paired comparisons.
pub fn estimate_j_with_seeds(sim: &SimConfig, theta: [f64; 4], seeds: &[u64]) -> Result<CostEstimate> {
    if seeds.is_empty() {
        return Err(Error::config("reps", "need at least one replication"));
    }
    let costs: Vec<f64> = seeds
        .par_iter()
        .map(|&seed| {
            simulate_cost(&SimConfig {
                theta,
                seed,
                ..sim.clone()
            })
        })
        .collect::<Result<_>>()?;
    Ok(summarize(&costs))
}

pub(crate) fn summarize(xs: &[f64]) -> CostEstimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let stderr = if xs.len() > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    CostEstimate {
        mean,
        stderr,
        reps: xs.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> OptimizerConfig {
        OptimizerConfig {
            theta0: [15.0, 20.0, 20.0, 20.0],
            ..Default::default()
        }
    }

    #[test]
    fn zero_gradient_keeps_theta() {
        let th = [15.0, 20.0, 20.0, 20.0];
        assert_eq!(sgd_step(&th, &[0.0; 4], 3, 5.0, &cfg()).unwrap(), th);
    }

    #[test]
    fn interior_step() {
        // γ_0 = c = 1
        let th = [15.0, 20.0, 20.0, 20.0];
        let next = sgd_step(&th, &[-3.0, 0.0, 0.0, 0.0], 0, 1.0, &cfg()).unwrap();
        assert_eq!(next, [18.0, 20.0, 20.0, 20.0]);
    }

    #[test]
    fn projection_at_lower_bound() {
        let th = [15.0, 20.0, 20.0, 20.0];
        for c in [0.01, 1.0, 100.0] {
            let next = sgd_step(&th, &[5.0, 0.0, 0.0, 0.0], 0, c, &cfg()).unwrap();
            assert_eq!(next[0], 15.0);
        }
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let err = sgd_step(&[20.0; 4], &[f64::NAN, 0.0, 0.0, 0.0], 7, 1.0, &cfg()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { iteration: 7, .. }));
    }

    #[test]
    fn coupled_step_moves_free_variables() {
        let opt = OptimizerConfig {
            theta0: [20.0, 24.0, 22.0, 22.0],
            coupling: Some(Coupling { t1: 44.0, t2: 44.0 }),
            ..Default::default()
        };
        let next = sgd_step(&opt.theta0, &[1.0, 3.0, 0.5, 0.5], 0, 1.0, &opt).unwrap();
        assert_eq!(next, [22.0, 22.0, 22.0, 22.0]);
        // T1 = 30 pins both roads of intersection 1 at 15
        let opt = OptimizerConfig {
            theta0: [15.0, 15.0, 15.0, 15.0],
            coupling: Some(Coupling { t1: 30.0, t2: 30.0 }),
            ..Default::default()
        };
        let next = sgd_step(&opt.theta0, &[-4.0, 4.0, 1.0, -1.0], 0, 1.0, &opt).unwrap();
        assert_eq!(next, [15.0; 4]);
    }

    #[test]
    fn step_size_schedule() {
        let opt = cfg();
        assert_eq!(opt.gamma(0, 2.0), 2.0);
        assert!((opt.gamma(9, 2.0) - 2.0 / 10f64.powf(0.6)).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let bad = OptimizerConfig {
            decay: 0.5,
            ..cfg()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig {
            paths: 0,
            ..cfg()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig {
            coupling: Some(Coupling { t1: 44.0, t2: 44.0 }),
            ..cfg()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig {
            coupling: Some(Coupling { t1: 90.0, t2: 44.0 }),
            theta0: [45.0, 45.0, 22.0, 22.0],
            ..cfg()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn summary_of_one_sample() {
        let s = summarize(&[3.5]);
        assert_eq!((s.mean, s.stderr, s.reps), (3.5, 0.0, 1));
        let s = summarize(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.stderr - 1.0).abs() < 1e-15);
    }
}
