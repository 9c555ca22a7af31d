//! Seeded smooth random fields used as test inputs.
//!
//! A probe is a short sine series over the domain whose amplitudes vary
//! smoothly in time and, optionally, with the driving path:
//! `sum_m c_m sin(m pi (x - a) / L) (1 + a_m t / T + e_m tanh(omega))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::SpaceTimeField;
use crate::grid::Grid;
use crate::tree::ScenarioTree;

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    coeffs: Vec<f64>,
    time: Vec<f64>,
    path: Vec<f64>,
    a: f64,
    len: f64,
    horizon: f64,
}

impl Probe {
    /// `modes` sine modes; `random` switches on the path dependence.
    pub fn new(grid: &Grid, modes: usize, random: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = Vec::with_capacity(modes);
        let mut time = Vec::with_capacity(modes);
        let mut path = Vec::with_capacity(modes);
        for m in 1..=modes {
            coeffs.push(rng.random_range(-1.0..1.0) / m as f64);
            time.push(rng.random_range(-0.5..0.5));
            let e = rng.random_range(-0.5..0.5);
            path.push(if random { e } else { 0.0 });
        }
        let d = grid.domain();
        Self {
            coeffs,
            time,
            path,
            a: d.a,
            len: d.b - d.a,
            horizon: d.horizon,
        }
    }

    pub fn eval(&self, x: f64, t: f64, omega: &[f64]) -> f64 {
        let w: f64 = omega.iter().map(|v| v.tanh()).sum::<f64>() / omega.len().max(1) as f64;
        let s = std::f64::consts::PI * (x - self.a) / self.len;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let m = (i + 1) as f64;
                c * (m * s).sin() * (1.0 + self.time[i] * t / self.horizon + self.path[i] * w)
            })
            .sum()
    }

    pub fn field(&self, grid: &Grid, tree: &ScenarioTree) -> SpaceTimeField {
        SpaceTimeField::from_fn(grid, tree, |x, t, w| self.eval(x, t, w))
    }
}

/// Shorthand for a probe field with four modes.
pub fn random_field(grid: &Grid, tree: &ScenarioTree, random: bool, seed: u64) -> SpaceTimeField {
    Probe::new(grid, 4, random, seed).field(grid, tree)
}
