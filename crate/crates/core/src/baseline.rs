//! Exhaustive grid search over θ and finite-difference gradients.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Bounds;
use crate::optimizer::{summarize, CostEstimate, Coupling};
use crate::sim::{simulate, CostKernel, SimConfig};

/// Per-dimension ranges `lo..=hi` in steps of `step`. Under a coupling only
/// dimensions 1 and 3 are searched; θ2 and θ4 follow from the cycle sums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
    pub step: [f64; 4],
    pub reps: usize,
    pub coupling: Option<Coupling>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lo: [15.0; 4],
            hi: [40.0; 4],
            step: [1.0; 4],
            reps: 10,
            coupling: None,
        }
    }
}

/// Grid points per dimension: `lo + k·step` for `k = 0..n`.
fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|k| lo + k as f64 * step).collect()
}

impl GridSpec {
    /// A grid holding the single point `theta`.
    pub fn point(theta: [f64; 4], reps: usize) -> Self {
        GridSpec {
            lo: theta,
            hi: theta,
            step: [1.0; 4],
            reps,
            coupling: None,
        }
    }

    fn searched(&self) -> &'static [usize] {
        if self.coupling.is_some() {
            &[0, 2]
        } else {
            &[0, 1, 2, 3]
        }
    }

    pub fn validate(&self, bounds: Bounds) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::config("grid.reps", "need at least one replication"));
        }
        for &i in self.searched() {
            let n = i + 1;
            if !(self.step[i].is_finite() && self.step[i] > 0.0) {
                return Err(Error::config(format!("grid.step[{i}]"), format!("θ{n} step must be positive")));
            }
            if !(self.lo[i] <= self.hi[i]) {
                return Err(Error::config(
                    format!("grid.lo[{i}]"),
                    format!("θ{n} range [{}, {}] is empty", self.lo[i], self.hi[i]),
                ));
            }
            if !bounds.contains(self.lo[i]) || !bounds.contains(self.hi[i]) {
                return Err(Error::config(
                    format!("grid.hi[{i}]"),
                    format!(
                        "θ{n} range [{}, {}] leaves [{}, {}]",
                        self.lo[i], self.hi[i], bounds.min, bounds.max
                    ),
                ));
            }
        }
        if let Some(c) = &self.coupling {
            c.validate(bounds)?;
            if self.points(bounds).is_empty() {
                return Err(Error::config("grid.coupling", "no grid point satisfies the coupling"));
            }
        }
        Ok(())
    }

    /// All grid points in lexicographic order.
    pub fn points(&self, bounds: Bounds) -> Vec<[f64; 4]> {
        let ax: Vec<Vec<f64>> = (0..4).map(|i| axis(self.lo[i], self.hi[i], self.step[i])).collect();
        match self.coupling {
            Some(c) => {
                let (lo1, hi1) = c.free_range(0, bounds);
                let (lo3, hi3) = c.free_range(1, bounds);
                let mut out = Vec::new();
                for &a in ax[0].iter().filter(|&&v| v >= lo1 && v <= hi1) {
                    for &b in ax[2].iter().filter(|&&v| v >= lo3 && v <= hi3) {
                        out.push(c.expand(a, b));
                    }
                }
                out
            }
            None => {
                let mut out = Vec::with_capacity(ax.iter().map(Vec::len).product());
                for &a in &ax[0] {
                    for &b in &ax[1] {
                        for &c in &ax[2] {
                            for &d in &ax[3] {
                                out.push([a, b, c, d]);
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

/// The seeds `seed, seed + 1, …` shared by every grid point.
pub fn seed_bank(seed: u64, reps: usize) -> Vec<u64> {
    (0..reps as u64).map(|r| seed.wrapping_add(r)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridRow {
    pub theta: [f64; 4],
    pub j: CostEstimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best: GridRow,
    /// Every point, in lexicographic order of θ.
    pub table: Vec<GridRow>,
}

pub const GRID_HEADER: &str = "theta1,theta2,theta3,theta4,J_mean,J_stderr,reps";

impl GridResult {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{GRID_HEADER}")?;
        for r in &self.table {
            let t = &r.theta;
            writeln!(
                w,
                "{},{},{},{},{:.9},{:.9},{}",
                t[0], t[1], t[2], t[3], r.j.mean, r.j.stderr, r.j.reps
            )?;
        }
        Ok(())
    }
}

/// Evaluates `J` at every grid point over the seed bank of `sim.seed` and
/// returns the smallest mean, ties going to the lexicographically first θ.
pub fn grid_search(sim: &SimConfig, grid: &GridSpec) -> Result<GridResult> {
    grid.validate(sim.bounds)?;
    let kernels: Vec<CostKernel> = seed_bank(sim.seed, grid.reps)
        .into_iter()
        .map(|seed| CostKernel::new(&sim.with_seed(seed)))
        .collect::<Result<_>>()?;
    let table: Vec<GridRow> = grid
        .points(sim.bounds)
        .into_par_iter()
        .map(|theta| {
            let costs: Vec<f64> = kernels.iter().map(|k| k.cost(theta)).collect::<Result<_>>()?;
            Ok(GridRow {
                theta,
                j: summarize(&costs),
            })
        })
        .collect::<Result<_>>()?;
    let best = *table
        .iter()
        .reduce(|best, r| if r.j.mean < best.j.mean { r } else { best })
        .expect("validated grid is nonempty");
    Ok(GridResult { best, table })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FdMode {
    /// Every perturbed run replays the base realization.
    CommonRandomness,
    /// Every perturbed run draws a fresh realization.
    Independent,
}

/// Per-coordinate difference stencil: central inside the bounds,
/// one-sided where `θ ± Δ` would leave them.
fn stencil(theta: &[f64; 4], i: usize, delta: f64, bounds: Bounds) -> Result<([f64; 4], [f64; 4])> {
    let mut plus = *theta;
    let mut minus = *theta;
    let up = theta[i] + delta <= bounds.max;
    let down = theta[i] - delta >= bounds.min;
    if up {
        plus[i] += delta;
    }
    if down {
        minus[i] -= delta;
    }
    if !up && !down {
        return Err(Error::config("delta", format!("{delta} does not fit inside the bounds")));
    }
    Ok((plus, minus))
}

fn independent_seeds(seed: u64) -> [u64; 8] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    std::array::from_fn(|_| rng.next_u64())
}

/// Finite-difference estimate of `dL/dθ`.
pub fn finite_difference_gradient(sim: &SimConfig, theta: [f64; 4], delta: f64, mode: FdMode) -> Result<[f64; 4]> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::config("delta", format!("must be positive, got {delta}")));
    }
    sim.with_theta(theta).validate()?;
    let seeds = independent_seeds(sim.seed);
    let crn = match mode {
        FdMode::CommonRandomness => Some(CostKernel::new(sim)?),
        FdMode::Independent => None,
    };
    let mut g = [0.0; 4];
    for i in 0..4 {
        let (plus, minus) = stencil(&theta, i, delta, sim.bounds)?;
        let (a, b) = match &crn {
            Some(k) => (k.cost(plus)?, k.cost(minus)?),
            None => (
                CostKernel::new(&sim.with_seed(seeds[2 * i]))?.cost(plus)?,
                CostKernel::new(&sim.with_seed(seeds[2 * i + 1]))?.cost(minus)?,
            ),
        };
        g[i] = (a - b) / (plus[i] - minus[i]);
    }
    Ok(g)
}

/// A common-randomness difference together with whether each perturbation
/// changed the ordering of events on the path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdCheck {
    pub gradient: [f64; 4],
    /// `reordered[i]`: the run at `θ ± Δe_i` passes through a different
    /// sequence of modes than the run at θ.
    pub reordered: [bool; 4],
}

impl FdCheck {
    pub fn any_reordered(&self) -> bool {
        self.reordered.iter().any(|&r| r)
    }
}

/// Common-randomness central differences with event-order comparison.
pub fn fd_check(sim: &SimConfig, theta: [f64; 4], delta: f64) -> Result<FdCheck> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::config("delta", format!("must be positive, got {delta}")));
    }
    let base = simulate(&sim.with_theta(theta))?;
    let mut out = FdCheck {
        gradient: [0.0; 4],
        reordered: [false; 4],
    };
    for i in 0..4 {
        let (plus, minus) = stencil(&theta, i, delta, sim.bounds)?;
        let a = simulate(&sim.with_theta(plus))?;
        let b = simulate(&sim.with_theta(minus))?;
        out.gradient[i] = (a.cost - b.cost) / (plus[i] - minus[i]);
        out.reordered[i] = !(base.trace.same_modes(&a.trace) && base.trace.same_modes(&b.trace));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::estimate_j;

    fn small() -> SimConfig {
        SimConfig {
            horizon: 200.0,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn axis_includes_both_ends() {
        assert_eq!(axis(15.0, 40.0, 1.0).len(), 26);
        assert_eq!(axis(15.0, 15.0, 1.0), vec![15.0]);
        assert_eq!(axis(15.0, 16.0, 0.1).len(), 11);
    }

    #[test]
    fn grid_is_exhaustive() {
        let grid = GridSpec {
            lo: [15.0, 15.0, 20.0, 30.0],
            hi: [17.0, 16.0, 20.0, 34.0],
            step: [1.0, 1.0, 1.0, 2.0],
            reps: 2,
            coupling: None,
        };
        let r = grid_search(&small(), &grid).unwrap();
        assert_eq!(r.table.len(), 3 * 2 * 1 * 3);
        assert!(r.table.windows(2).all(|w| w[0].theta < w[1].theta));
        assert!(r.table.iter().all(|row| r.best.j.mean <= row.j.mean));
    }

    #[test]
    fn single_point_grid() {
        let theta = [20.0, 25.0, 30.0, 35.0];
        let r = grid_search(&small(), &GridSpec::point(theta, 4)).unwrap();
        assert_eq!(r.table.len(), 1);
        assert_eq!(r.best.theta, theta);
        let direct = estimate_j(&small(), theta, 4).unwrap();
        assert!((r.best.j.mean - direct.mean).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_first_point() {
        let sim = SimConfig {
            arrival: [0.0; 3],
            ..small()
        };
        let r = grid_search(
            &sim,
            &GridSpec {
                lo: [15.0; 4],
                hi: [16.0; 4],
                reps: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.best.theta, [15.0; 4]);
    }

    #[test]
    fn coupled_grid_respects_cycles() {
        let grid = GridSpec {
            coupling: Some(Coupling { t1: 44.0, t2: 36.0 }),
            reps: 1,
            ..Default::default()
        };
        let pts = grid.points(Bounds::default());
        // θ1 ∈ [15, 29], θ3 ∈ [15, 21]
        assert_eq!(pts.len(), 15 * 7);
        assert!(pts.iter().all(|p| p[0] + p[1] == 44.0 && p[2] + p[3] == 36.0));
    }

    #[test]
    fn invalid_grids() {
        let b = Bounds::default();
        let bad = [
            GridSpec { reps: 0, ..Default::default() },
            GridSpec { step: [0.0; 4], ..Default::default() },
            GridSpec { lo: [20.0; 4], hi: [19.0; 4], ..Default::default() },
            GridSpec { hi: [41.0; 4], ..Default::default() },
        ];
        for g in bad {
            assert!(g.validate(b).is_err(), "{g:?}");
        }
    }

    #[test]
    fn zero_arrivals_zero_gradient() {
        let sim = SimConfig {
            arrival: [0.0; 3],
            ..small()
        };
        for mode in [FdMode::CommonRandomness, FdMode::Independent] {
            let g = finite_difference_gradient(&sim, [25.0; 4], 0.5, mode).unwrap();
            assert_eq!(g, [0.0; 4]);
        }
    }

    #[test]
    fn one_sided_at_bounds() {
        let (p, m) = stencil(&[15.0, 40.0, 20.0, 20.0], 0, 1.0, Bounds::default()).unwrap();
        assert_eq!((p[0], m[0]), (16.0, 15.0));
        let (p, m) = stencil(&[15.0, 40.0, 20.0, 20.0], 1, 1.0, Bounds::default()).unwrap();
        assert_eq!((p[1], m[1]), (40.0, 39.0));
        assert!(stencil(&[15.0; 4], 0, 30.0, Bounds::default()).is_err());
    }

    #[test]
    fn crn_matches_fd_check() {
        let sim = small();
        let theta = [22.0, 27.0, 31.0, 24.0];
        let a = finite_difference_gradient(&sim, theta, 1.0, FdMode::CommonRandomness).unwrap();
        let b = fd_check(&sim, theta, 1.0).unwrap();
        for i in 0..4 {
            assert!((a[i] - b.gradient[i]).abs() < 1e-9);
        }
    }
}
