//! Adapted space-time fields: one grid function per tree node per level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::tree::ScenarioTree;

/// Which discrete `X^k` space a field is meant to live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regularity {
    XMinus1,
    X0,
    X1,
}

/// Values `F(x_i, t_k, node)` for levels `0..=N`, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    nx: usize,
    offsets: Vec<usize>,
    data: Vec<f64>,
    pub regularity: Regularity,
}

impl SpaceTimeField {
    pub fn zeros(grid: &Grid, tree: &ScenarioTree) -> Self {
        let mut offsets = Vec::with_capacity(tree.n_steps() + 2);
        let mut acc = 0;
        for k in 0..=tree.n_steps() {
            offsets.push(acc);
            acc += tree.level_size(k);
        }
        offsets.push(acc);
        Self {
            nx: grid.nx(),
            offsets,
            data: vec![0.0; acc * grid.nx()],
            regularity: Regularity::X0,
        }
    }

    /// Samples `f(x, t, omega)` on interior nodes; boundary values are zero.
    pub fn from_fn(
        grid: &Grid,
        tree: &ScenarioTree,
        f: impl Fn(f64, f64, &[f64]) -> f64,
    ) -> Self {
        let mut out = Self::zeros(grid, tree);
        let xs = grid.nodes();
        for k in 0..=tree.n_steps() {
            let t = tree.time(k);
            for node in 0..tree.level_size(k) {
                let omega = tree.omega(k, node);
                let row = out.slice_mut(k, node);
                for i in grid.interior() {
                    row[i] = f(xs[i], t, omega);
                }
            }
        }
        out
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn n_steps(&self) -> usize {
        self.offsets.len() - 2
    }

    pub fn level_size(&self, level: usize) -> usize {
        self.offsets[level + 1] - self.offsets[level]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn slice(&self, level: usize, node: usize) -> &[f64] {
        let start = (self.offsets[level] + node) * self.nx;
        &self.data[start..start + self.nx]
    }

    pub fn slice_mut(&mut self, level: usize, node: usize) -> &mut [f64] {
        let start = (self.offsets[level] + node) * self.nx;
        &mut self.data[start..start + self.nx]
    }

    /// All nodes of a level, node-major.
    pub fn level(&self, level: usize) -> &[f64] {
        &self.data[self.offsets[level] * self.nx..self.offsets[level + 1] * self.nx]
    }

    pub fn level_mut(&mut self, level: usize) -> &mut [f64] {
        let nx = self.nx;
        &mut self.data[self.offsets[level] * nx..self.offsets[level + 1] * nx]
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.nx != other.nx || self.offsets != other.offsets {
            return Err(Error::ShapeMismatch("fields live on different grids or trees".into()));
        }
        Ok(())
    }

    pub fn check(&self, grid: &Grid, tree: &ScenarioTree) -> Result<()> {
        let ok = self.nx == grid.nx()
            && self.n_steps() == tree.n_steps()
            && (0..=tree.n_steps()).all(|k| self.level_size(k) == tree.level_size(k));
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("field does not match the grid and tree".into()))
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) -> Result<()> {
        self.same_shape(other)?;
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn vanishes_on_boundary(&self) -> bool {
        self.data
            .chunks(self.nx)
            .all(|row| row[0] == 0.0 && row[self.nx - 1] == 0.0)
    }

    /// Values along the path to `leaf`, one grid function per level.
    pub fn along_leaf<'a>(&'a self, tree: &ScenarioTree, leaf: usize) -> Vec<&'a [f64]> {
        (0..=tree.n_steps())
            .map(|k| self.slice(k, tree.ancestor(leaf, k)))
            .collect()
    }
}

/// `sum_k sum_node prob * dt * <F, G>_{H^0}` over levels `0..=N`.
pub fn inner_x0(
    f: &SpaceTimeField,
    g: &SpaceTimeField,
    grid: &Grid,
    tree: &ScenarioTree,
) -> Result<f64> {
    f.same_shape(g)?;
    f.check(grid, tree)?;
    Ok(weighted_sum(f, grid, tree, |a, b| grid.dot(a, b), Some(g)))
}

pub fn norm_x0(f: &SpaceTimeField, grid: &Grid, tree: &ScenarioTree) -> f64 {
    weighted_sum(f, grid, tree, |a, b| grid.dot(a, b), None).sqrt()
}

pub fn norm_x1(f: &SpaceTimeField, grid: &Grid, tree: &ScenarioTree) -> f64 {
    weighted_sum(f, grid, tree, |a, _| grid.h1_norm_sq(a), None).sqrt()
}

pub fn norm_xm1(f: &SpaceTimeField, grid: &Grid, tree: &ScenarioTree) -> f64 {
    weighted_sum(f, grid, tree, |a, _| grid.hm1_norm_sq(a), None).sqrt()
}

/// `sup_t (E ||F(t)||^2_{H^0})^{1/2}`.
pub fn norm_c0(f: &SpaceTimeField, grid: &Grid, tree: &ScenarioTree) -> f64 {
    (0..=tree.n_steps())
        .map(|k| {
            let e: f64 = (0..tree.level_size(k))
                .map(|node| {
                    let s = f.slice(k, node);
                    grid.dot(s, s)
                })
                .sum::<f64>()
                * tree.prob(k);
            e.sqrt()
        })
        .fold(0.0, f64::max)
}

fn weighted_sum(
    f: &SpaceTimeField,
    grid: &Grid,
    tree: &ScenarioTree,
    term: impl Fn(&[f64], &[f64]) -> f64,
    g: Option<&SpaceTimeField>,
) -> f64 {
    let g = g.unwrap_or(f);
    let nx = grid.nx();
    (0..=tree.n_steps())
        .map(|k| {
            let s: f64 = f
                .level(k)
                .chunks(nx)
                .zip(g.level(k).chunks(nx))
                .map(|(a, b)| term(a, b))
                .sum();
            s * tree.prob(k) * tree.dt()
        })
        .sum()
}
