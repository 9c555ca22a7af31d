//! Fine-step Wiener paths consistent with the scenario tree.
//!
//! In bridged modes the first `d` components are Brownian bridges through
//! the increments of a tree leaf path; the remaining `d0 - d` components are
//! free. In Brownian mode every component is free and the leaf is read off
//! the signs of the coarse increments, so the driving path is a genuine
//! Wiener path while coefficients still see tree nodes with the right
//! probabilities. Paths are generated on demand from `(seed, path index)`,
//! so a bundle of any size costs no memory and every path is reproducible
//! on its own.
//!
//! Splitting rule: path `i` draws from `ChaCha8Rng::seed_from_u64(seed)`
//! with stream `i`. In sampled mode it first draws its leaf uniformly; then,
//! for every coarse step, fine step and component in that order, one
//! standard normal. The bridge over a coarse step adds
//! `(dw - sum of fine draws) / m` to each of its `m` fine increments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tree::ScenarioTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driving {
    /// Every path follows this leaf.
    Fixed(usize),
    /// Each path draws its own leaf uniformly.
    Sampled,
    /// Free Wiener path; the leaf follows the signs of the coarse increments
    /// (non-negative maps to `+sqrt(dt)`).
    Brownian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub driving: Driving,
    pub count: usize,
    pub d: usize,
    pub d0: usize,
    pub seed: u64,
    dt_mc: f64,
    substeps: usize,
    n_steps: usize,
    n_leaves: usize,
    branching: usize,
    sqrt_dt: f64,
}

/// One realization: increments `dW[step * d0 + j]` on the fine mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    pub leaf: usize,
    pub increments: Vec<f64>,
}

fn substeps(tree: &ScenarioTree, dt_mc: f64) -> Result<usize> {
    if !(dt_mc.is_finite() && dt_mc > 0.0) {
        return Err(Error::IncompatibleStep(format!("fine step must be positive, got {dt_mc}")));
    }
    let ratio = tree.dt() / dt_mc;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio {
        return Err(Error::IncompatibleStep(format!(
            "fine step {dt_mc} does not divide the tree step {}",
            tree.dt()
        )));
    }
    Ok(m as usize)
}

impl PathBundle {
    fn build(
        tree: &ScenarioTree,
        driving: Driving,
        count: usize,
        d0: usize,
        dt_mc: f64,
        seed: u64,
    ) -> Result<Self> {
        if d0 < tree.d() {
            return Err(Error::InvalidParameter(format!(
                "d0 = {d0} is smaller than the tree dimension {}",
                tree.d()
            )));
        }
        let m = substeps(tree, dt_mc)?;
        Ok(Self {
            driving,
            count,
            d: tree.d(),
            d0,
            seed,
            dt_mc: tree.dt() / m as f64,
            substeps: m,
            n_steps: tree.n_steps(),
            n_leaves: tree.n_leaves(),
            branching: tree.branching(),
            sqrt_dt: tree.dt().sqrt(),
        })
    }

    /// Fine step actually used (`dt / m`).
    pub fn dt_mc(&self) -> f64 {
        self.dt_mc
    }

    /// Fine steps per tree step.
    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn n_fine(&self) -> usize {
        self.substeps * self.n_steps
    }

    /// Tree level whose node is active during fine step `step`.
    pub fn coarse_level(&self, step: usize) -> usize {
        (step / self.substeps).min(self.n_steps)
    }

    /// Generates path `index` into `buf` (resized to `n_fine * d0`) and
    /// returns its leaf.
    pub fn fill(&self, index: usize, buf: &mut Vec<f64>) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let mut leaf = match self.driving {
            Driving::Fixed(leaf) => leaf,
            Driving::Sampled => rng.random_range(0..self.n_leaves),
            Driving::Brownian => 0,
        };
        let bridged = self.driving != Driving::Brownian;
        let m = self.substeps;
        let d0 = self.d0;
        let h = self.dt_mc.sqrt();
        buf.clear();
        buf.resize(self.n_fine() * d0, 0.0);
        let mut sums = vec![0.0; self.d];
        for k in 0..self.n_steps {
            sums.fill(0.0);
            let block = &mut buf[k * m * d0..(k + 1) * m * d0];
            for step in block.chunks_mut(d0) {
                for (j, v) in step.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = z * h;
                    if j < self.d {
                        sums[j] += *v;
                    }
                }
            }
            if !bridged {
                let slot: usize = (0..self.d).filter(|&j| sums[j] < 0.0).map(|j| 1 << j).sum();
                leaf = leaf * self.branching + slot;
                continue;
            }
            let slot = (leaf / self.branching.pow((self.n_steps - k - 1) as u32)) % self.branching;
            for j in 0..self.d {
                let target = if (slot >> j) & 1 == 0 {
                    self.sqrt_dt
                } else {
                    -self.sqrt_dt
                };
                let shift = (target - sums[j]) / m as f64;
                for step in block.chunks_mut(d0) {
                    step[j] += shift;
                }
            }
        }
        leaf
    }

    pub fn path(&self, index: usize) -> WienerPath {
        let mut increments = Vec::new();
        let leaf = self.fill(index, &mut increments);
        WienerPath { leaf, increments }
    }
}

/// `count` paths whose first `d` components bridge the given leaf path.
pub fn bridge_paths(
    tree: &ScenarioTree,
    leaf_path: &[usize],
    count: usize,
    d0: usize,
    dt_mc: f64,
    seed: u64,
) -> Result<PathBundle> {
    let leaf = tree.path_leaf(leaf_path)?;
    PathBundle::build(tree, Driving::Fixed(leaf), count, d0, dt_mc, seed)
}

/// `count` free Wiener paths, each assigned the leaf its increment signs select.
pub fn brownian_paths(
    tree: &ScenarioTree,
    count: usize,
    d0: usize,
    dt_mc: f64,
    seed: u64,
) -> Result<PathBundle> {
    PathBundle::build(tree, Driving::Brownian, count, d0, dt_mc, seed)
}

/// `count` paths, each bridging a uniformly drawn leaf.
pub fn sampled_paths(
    tree: &ScenarioTree,
    count: usize,
    d0: usize,
    dt_mc: f64,
    seed: u64,
) -> Result<PathBundle> {
    PathBundle::build(tree, Driving::Sampled, count, d0, dt_mc, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bridge_hits_tree_values() {
        let tree = ScenarioTree::new(1, 4, 1.0).unwrap();
        let path = tree.leaf_path(11);
        let b = bridge_paths(&tree, &path, 3, 2, 0.025, 5).unwrap();
        assert_eq!(b.substeps(), 10);
        for i in 0..3 {
            let p = b.path(i);
            let mut w = 0.0;
            for (step, inc) in p.increments.chunks(2).enumerate() {
                w += inc[0];
                if (step + 1) % 10 == 0 {
                    let k = (step + 1) / 10;
                    assert!((w - tree.omega(k, path[k])[0]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_paths() {
        let tree = ScenarioTree::new(1, 4, 1.0).unwrap();
        let a = sampled_paths(&tree, 10, 2, 0.05, 9).unwrap();
        let b = sampled_paths(&tree, 10, 2, 0.05, 9).unwrap();
        assert_eq!(a.path(7), b.path(7));
        let c = sampled_paths(&tree, 10, 2, 0.05, 10).unwrap();
        assert_ne!(a.path(7), c.path(7));
    }

    #[test]
    fn brownian_leaf_follows_increment_signs() {
        let tree = ScenarioTree::new(2, 3, 1.0).unwrap();
        let b = brownian_paths(&tree, 20, 3, 1.0 / 30.0, 4).unwrap();
        for i in 0..20 {
            let p = b.path(i);
            let path = tree.leaf_path(p.leaf);
            for k in 0..3 {
                for j in 0..2 {
                    let w: f64 = (0..10).map(|s| p.increments[(k * 10 + s) * 3 + j]).sum();
                    let dw = tree.increment(k + 1, path[k + 1])[j];
                    assert_eq!(w >= 0.0, dw > 0.0);
                }
            }
        }
    }

    #[test]
    fn incompatible_step_is_rejected() {
        let tree = ScenarioTree::new(1, 4, 1.0).unwrap();
        let path = tree.leaf_path(0);
        assert!(matches!(
            bridge_paths(&tree, &path, 1, 2, 0.03, 1),
            Err(Error::IncompatibleStep(_))
        ));
        assert!(bridge_paths(&tree, &path, 1, 0, 0.025, 1).is_err());
    }
}
