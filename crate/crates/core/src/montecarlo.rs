//! Euler-Maruyama simulation of the diffusion driven by tree-consistent
//! Wiener paths, with first-exit detection at fine mesh points.
//!
//! Coefficients along a path use the tree node active at the coarse step
//! containing the current time, so simulated paths see exactly the
//! coefficient values the grid solvers see. Paths are killed on leaving an
//! absorbing interval; on a truncated line they are never killed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{DomainSpec, Grid, GridFunction};
use crate::paths::{bridge_paths, PathBundle};
use crate::tree::ScenarioTree;

/// Mixed into the path seed for the initial-point draws, so that they are
/// independent of the Wiener increments of the same path.
pub const INIT_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Evaluable integrand `phi(x, t, omega)`.
/// Positions, leaf and exit step of one stored path.
type StoredPath = (Vec<f64>, usize, Option<usize>);

pub type Integrand<'a> = &'a (dyn Fn(f64, f64, &[f64]) -> f64 + Sync);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl EstimatorResult {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                stderr: 0.0,
                count: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            count: n,
        }
    }
}

/// Inverse-CDF sampler for the piecewise-linear interpolant of a
/// nonnegative grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySampler {
    xs: Vec<f64>,
    p: Vec<f64>,
    /// Cumulative mass at each node, normalized to end at one.
    cdf: Vec<f64>,
    mass: f64,
}

impl DensitySampler {
    pub fn new(grid: &Grid, p0: &[f64]) -> Result<Self> {
        grid.check(p0)?;
        if p0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("initial density must be finite and nonnegative".into()));
        }
        let h = grid.dx();
        let mut cdf = vec![0.0; p0.len()];
        for i in 1..p0.len() {
            cdf[i] = cdf[i - 1] + 0.5 * h * (p0[i - 1] + p0[i]);
        }
        let mass = *cdf.last().unwrap();
        if mass <= 0.0 {
            return Err(Error::InvalidParameter("initial density has no mass".into()));
        }
        cdf.iter_mut().for_each(|c| *c /= mass);
        Ok(Self {
            xs: grid.nodes().to_vec(),
            p: p0.iter().map(|v| v / mass).collect(),
            cdf,
            mass,
        })
    }

    /// Mass of the interpolant before normalization.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Point with cumulative probability `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|c| *c <= u).clamp(1, self.xs.len() - 1) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let r = (u - self.cdf[i]).max(0.0);
        let b = self.p[i];
        let a = (self.p[i + 1] - self.p[i]) / (2.0 * h);
        let disc = (b * b + 4.0 * a * r).max(0.0);
        let denom = b + disc.sqrt();
        let s = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        self.xs[i] + s.clamp(0.0, h)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Initial<'a> {
    Point(f64),
    Density(&'a DensitySampler),
}

/// What a simulation needs besides the paths.
#[derive(Debug, Clone, Copy)]
pub struct Simulator<'a> {
    pub coeffs: &'a CoefficientSet,
    pub tree: &'a ScenarioTree,
    pub domain: &'a DomainSpec,
}

/// Stored paths from a start step to exit or the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub dt_mc: f64,
    pub start_step: usize,
    pub n_fine: usize,
    pub substeps: usize,
    pub seed: u64,
    offsets: Vec<usize>,
    values: Vec<f64>,
    exit_step: Vec<Option<usize>>,
    leaf: Vec<usize>,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaf.is_empty()
    }

    pub fn leaf(&self, path: usize) -> usize {
        self.leaf[path]
    }

    pub fn exit_step(&self, path: usize) -> Option<usize> {
        self.exit_step[path]
    }

    /// `tau`, capped at the horizon.
    pub fn tau(&self, path: usize) -> f64 {
        self.exit_step[path].unwrap_or(self.n_fine) as f64 * self.dt_mc
    }

    /// `I_tau(t)`: the path has not exited by fine step `step`.
    pub fn alive(&self, path: usize, step: usize) -> bool {
        self.exit_step[path].is_none_or(|e| step < e)
    }

    /// `y` at fine step `step`, frozen after exit.
    pub fn y(&self, path: usize, step: usize) -> f64 {
        let row = &self.values[self.offsets[path]..self.offsets[path + 1]];
        let k = step.saturating_sub(self.start_step).min(row.len() - 1);
        row[k]
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt_mc
    }
}

fn start_step(bundle: &PathBundle, s: f64) -> Result<usize> {
    let k = (s / bundle.dt_mc()).round();
    if s.is_nan() || s < 0.0 || k > bundle.n_fine() as f64 || (k * bundle.dt_mc() - s).abs() > 1e-9 {
        return Err(Error::IncompatibleStep(format!("start time {s} is not a point of the fine mesh")));
    }
    Ok(k as usize)
}

impl Simulator<'_> {
    fn initial_point(&self, init: Initial, bundle: &PathBundle, index: usize) -> f64 {
        match init {
            Initial::Point(x) => x,
            Initial::Density(sampler) => {
                let mut rng = ChaCha8Rng::seed_from_u64(bundle.seed ^ INIT_SEED_SALT);
                rng.set_stream(index as u64);
                sampler.sample(rng.random::<f64>())
            }
        }
    }

    /// Runs one path; `visit(step, y, level, node)` is called at every fine
    /// step where the path is alive. Returns the leaf, the exit step and
    /// the last position (outside the domain when the path exited).
    fn run_path(
        &self,
        init: Initial,
        start: usize,
        bundle: &PathBundle,
        index: usize,
        buf: &mut Vec<f64>,
        mut visit: impl FnMut(usize, f64, usize, usize),
    ) -> Result<(usize, Option<usize>, f64)> {
        let leaf = bundle.fill(index, buf);
        let d0 = bundle.d0;
        let dt = bundle.dt_mc();
        let absorbing = self.domain.absorbing();
        let mut y = self.initial_point(init, bundle, index);
        let n_fine = bundle.n_fine();
        for k in start..n_fine {
            let level = bundle.coarse_level(k);
            let node = self.tree.ancestor(leaf, level);
            visit(k, y, level, node);
            let t = k as f64 * dt;
            let omega = self.tree.omega(level, node);
            let f = self.coeffs.drift(y, t, omega);
            if !f.is_finite() {
                return Err(Error::NonFiniteCoefficient { x: y, t });
            }
            let mut dy = f * dt;
            for (j, dw) in buf[k * d0..(k + 1) * d0].iter().enumerate() {
                dy += self.coeffs.beta(y, t, omega, j) * dw;
            }
            y += dy;
            if absorbing && !self.domain.contains(y) {
                return Ok((leaf, Some(k + 1), y));
            }
        }
        let level = bundle.coarse_level(n_fine);
        visit(n_fine, y, level, self.tree.ancestor(leaf, level));
        Ok((leaf, None, y))
    }

    fn check(&self, init: Initial, bundle: &PathBundle) -> Result<()> {
        if let Initial::Point(x) = init {
            if !self.domain.contains(x) {
                return Err(Error::InitOutsideDomain(x));
            }
        }
        if bundle.d != self.tree.d() || bundle.d0 != self.coeffs.d0() {
            return Err(Error::ShapeMismatch(format!(
                "paths carry (d, d0) = ({}, {}), coefficients need ({}, {})",
                bundle.d,
                bundle.d0,
                self.tree.d(),
                self.coeffs.d0()
            )));
        }
        Ok(())
    }

    /// Simulates and stores every path of the bundle from time `s`.
    pub fn simulate(&self, init: Initial, s: f64, bundle: &PathBundle) -> Result<TrajectorySet> {
        self.check(init, bundle)?;
        let start = start_step(bundle, s)?;
        let runs: Vec<Result<StoredPath>> = (0..bundle.count)
            .into_par_iter()
            .map_init(Vec::new, |buf, i| {
                let mut ys = Vec::new();
                let (leaf, exit, last) =
                    self.run_path(init, start, bundle, i, buf, |_, y, _, _| ys.push(y))?;
                if exit.is_some() {
                    // The first point outside the domain is the frozen value.
                    ys.push(last);
                }
                Ok((ys, leaf, exit))
            })
            .collect();
        let mut offsets = vec![0];
        let mut values = Vec::new();
        let mut exit_step = Vec::with_capacity(bundle.count);
        let mut leaf = Vec::with_capacity(bundle.count);
        for r in runs {
            let (ys, l, e) = r?;
            values.extend_from_slice(&ys);
            offsets.push(values.len());
            exit_step.push(e);
            leaf.push(l);
        }
        Ok(TrajectorySet {
            dt_mc: bundle.dt_mc(),
            start_step: start,
            n_fine: bundle.n_fine(),
            substeps: bundle.substeps(),
            seed: bundle.seed,
            offsets,
            values,
            exit_step,
            leaf,
        })
    }

    /// `E sum_{s <= t < tau} phi(y(t), t) dt_mc` without storing paths.
    pub fn functional(
        &self,
        init: Initial,
        s: f64,
        bundle: &PathBundle,
        phi: Integrand,
    ) -> Result<EstimatorResult> {
        self.check(init, bundle)?;
        let start = start_step(bundle, s)?;
        let n_fine = bundle.n_fine();
        let dt = bundle.dt_mc();
        let samples: Result<Vec<f64>> = (0..bundle.count)
            .into_par_iter()
            .map_init(Vec::new, |buf, i| {
                let mut acc = 0.0;
                self.run_path(init, start, bundle, i, buf, |k, y, level, node| {
                    if k < n_fine {
                        acc += phi(y, k as f64 * dt, self.tree.omega(level, node)) * dt;
                    }
                })?;
                Ok(acc)
            })
            .collect();
        Ok(EstimatorResult::from_samples(&samples?))
    }

    /// `E[I_tau(t) phi(y(t), t)]` for each `t` in `times`, from time 0.
    pub fn functional_at_times(
        &self,
        init: Initial,
        bundle: &PathBundle,
        phi: Integrand,
        times: &[f64],
    ) -> Result<Vec<EstimatorResult>> {
        self.check(init, bundle)?;
        let steps: Vec<usize> = times
            .iter()
            .map(|&t| start_step(bundle, t))
            .collect::<Result<_>>()?;
        let dt = bundle.dt_mc();
        let rows: Result<Vec<Vec<f64>>> = (0..bundle.count)
            .into_par_iter()
            .map_init(Vec::new, |buf, i| {
                let mut row = vec![0.0; steps.len()];
                self.run_path(init, 0, bundle, i, buf, |k, y, level, node| {
                    for (r, &s) in row.iter_mut().zip(&steps) {
                        if s == k {
                            *r = phi(y, k as f64 * dt, self.tree.omega(level, node));
                        }
                    }
                })?;
                Ok(row)
            })
            .collect();
        let rows = rows?;
        Ok((0..steps.len())
            .map(|c| {
                let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
                EstimatorResult::from_samples(&col)
            })
            .collect())
    }
}

/// Left Riemann sum of `phi` along stored paths up to exit.
pub fn estimate_functional(
    trajs: &TrajectorySet,
    tree: &ScenarioTree,
    phi: Integrand,
) -> EstimatorResult {
    let samples: Vec<f64> = (0..trajs.len())
        .map(|p| {
            let end = trajs.exit_step(p).unwrap_or(trajs.n_fine);
            (trajs.start_step..end)
                .map(|k| {
                    let level = (k / trajs.substeps).min(tree.n_steps());
                    let omega = tree.omega(level, tree.ancestor(trajs.leaf(p), level));
                    phi(trajs.y(p, k), trajs.time(k), omega) * trajs.dt_mc
                })
                .sum()
        })
        .collect();
    EstimatorResult::from_samples(&samples)
}

/// Conditional estimate of `E[I_tau(t) phi(y(t), t) | driving path]` at
/// the given times: the driving components follow `leaf_path`, the free
/// components and the initial point (drawn from `p0`) are averaged over.
#[allow(clippy::too_many_arguments)]
pub fn conditional_functional(
    sim: &Simulator,
    phi: Integrand,
    leaf_path: &[usize],
    times: &[f64],
    count: usize,
    dt_mc: f64,
    p0: &DensitySampler,
    seed: u64,
) -> Result<Vec<EstimatorResult>> {
    let bundle = bridge_paths(sim.tree, leaf_path, count, sim.coeffs.d0(), dt_mc, seed)?;
    sim.functional_at_times(Initial::Density(p0), &bundle, phi, times)
}

/// Histogram of paths alive at time `t`, one cell per grid node, scaled by
/// `1 / (M dx)`. Paths farther than half a cell from the grid are dropped.
pub fn empirical_density(trajs: &TrajectorySet, t: f64, grid: &Grid) -> Result<GridFunction> {
    let step = (t / trajs.dt_mc).round();
    if t.is_nan() || t < 0.0 || step > trajs.n_fine as f64 || (step * trajs.dt_mc - t).abs() > 1e-9 {
        return Err(Error::IncompatibleStep(format!("time {t} is not a point of the fine mesh")));
    }
    let step = step as usize;
    let mut out = grid.zeros();
    let (a, h) = (grid.domain().a, grid.dx());
    let w = 1.0 / (trajs.len() as f64 * h);
    for p in 0..trajs.len() {
        if !trajs.alive(p, step) {
            continue;
        }
        let cell = ((trajs.y(p, step) - a) / h).round();
        if cell >= 0.0 && (cell as usize) < grid.nx() {
            out[cell as usize] += w;
        }
    }
    Ok(out)
}
