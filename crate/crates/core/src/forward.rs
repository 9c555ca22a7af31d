//! Forward solvers for the dual problems and the density equation.
//!
//! Every equation here has the form
//! `dp = (A* p + drift) dt + sum_j noise_j dw_j`, `p = 0` on the boundary,
//! and is advanced from a node to each of its children by
//!
//! ```text
//! (I - theta dt A*_k) p_child = (I + (1 - theta) dt A*_k) p + dt drift + sum_j noise_j dw_j
//! ```
//!
//! with `A*_k` taken at the parent node and the sources evaluated at the
//! parent state (explicit in the noise, implicit in `A*`).

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::validate;
use crate::error::{Error, Result};
use crate::field::{Regularity, SpaceTimeField};
use crate::grid::GridFunction;
use crate::model::Model;

/// State of a forward march at one level: a grid function per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    pub level: usize,
    /// Node-major values at `level`.
    pub values: Vec<f64>,
}

impl ForwardState {
    pub fn initial(model: &Model, p0: &[f64]) -> Result<Self> {
        model.grid.check(p0)?;
        let mut values = p0.to_vec();
        let n = values.len();
        values[0] = 0.0;
        values[n - 1] = 0.0;
        Ok(Self { level: 0, values })
    }

    /// Advances every node to its children. `sources(node, state, drift,
    /// noise)` fills the drift source and the `d` noise sources (rows of
    /// `noise`) at a node of the current level.
    pub fn advance<F>(&self, model: &Model, sources: &F) -> Result<Self>
    where
        F: Fn(usize, &[f64], &mut [f64], &mut [f64]) -> Result<()> + Sync,
    {
        let tree = model.tree;
        let k = self.level;
        if k >= tree.n_steps() {
            return Err(Error::LevelOutOfRange {
                level: k + 1,
                n_steps: tree.n_steps(),
            });
        }
        let nx = model.nx();
        let d = model.d();
        let b = tree.branching();
        let dt = model.dt();
        let mut next = vec![0.0; tree.level_size(k + 1) * nx];
        next.par_chunks_mut(b * nx)
            .enumerate()
            .try_for_each(|(i, block)| -> Result<()> {
                let state = &self.values[i * nx..(i + 1) * nx];
                let mut drift = vec![0.0; nx];
                let mut noise = vec![0.0; d * nx];
                sources(i, state, &mut drift, &mut noise)?;
                let ops = model.step_ops(k, i, true)?;
                let mut base = state.to_vec();
                ops.apply_explicit(&mut base);
                for (p, s) in base.iter_mut().zip(&drift) {
                    *p += dt * s;
                }
                for (c, out) in block.chunks_mut(nx).enumerate() {
                    out.copy_from_slice(&base);
                    for (j, dw) in tree.child_increment(c).iter().enumerate() {
                        for (o, s) in out.iter_mut().zip(&noise[j * nx..(j + 1) * nx]) {
                            *o += s * dw;
                        }
                    }
                    ops.solve(out);
                }
                Ok(())
            })?;
        Ok(Self {
            level: k + 1,
            values: next,
        })
    }
}

/// One step of the scheme at a single node, towards the child reached by
/// the increment `dw`.
#[allow(clippy::too_many_arguments)]
pub fn step_forward(
    model: &Model,
    level: usize,
    node: usize,
    p_old: &[f64],
    drift: &[f64],
    noise: &[Vec<f64>],
    dw: &[f64],
) -> Result<GridFunction> {
    model.grid.check(p_old)?;
    model.grid.check(drift)?;
    if noise.len() != model.d() || dw.len() != model.d() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} noise sources and increments",
            model.d()
        )));
    }
    let ops = model.step_ops(level, node, true)?;
    let mut out = p_old.to_vec();
    ops.apply_explicit(&mut out);
    for (i, o) in out.iter_mut().enumerate() {
        *o += model.dt() * drift[i];
        for (s, w) in noise.iter().zip(dw) {
            *o += s[i] * w;
        }
    }
    ops.solve(&mut out);
    Ok(GridFunction(out))
}

/// Runs the march from `p0` over all levels.
fn march<F>(model: &Model, p0: &[f64], sources: F) -> Result<SpaceTimeField>
where
    F: Fn(usize, usize, &[f64], &mut [f64], &mut [f64]) -> Result<()> + Sync,
{
    let mut out = SpaceTimeField::zeros(model.grid, model.tree);
    let mut state = ForwardState::initial(model, p0)?;
    out.level_mut(0).copy_from_slice(&state.values);
    for k in 0..model.tree.n_steps() {
        let at_level = |i: usize, s: &[f64], drift: &mut [f64], noise: &mut [f64]| {
            sources(k, i, s, drift, noise)
        };
        state = state.advance(model, &at_level)?;
        out.level_mut(k + 1).copy_from_slice(&state.values);
    }
    Ok(out)
}

fn check_input(model: &Model, f: &SpaceTimeField) -> Result<()> {
    f.check(model.grid, model.tree)
}

/// Rejects coefficients whose tail block is degenerate or empty.
fn require_superparabolic(model: &Model) -> Result<()> {
    let report = validate(model.coeffs, model.grid, model.tree, true);
    if report.passed {
        Ok(())
    } else {
        Err(Error::Validation(report.failures.join("; ")))
    }
}

/// `T* h = pi`: `d pi = (A* pi + h) dt`.
pub fn solve_t_star(model: &Model, h: &SpaceTimeField) -> Result<SpaceTimeField> {
    check_input(model, h)?;
    let zero = model.grid.zeros();
    march(model, &zero, |k, i, _, drift, _| {
        drift.copy_from_slice(h.slice(k, i));
        Ok(())
    })
}

/// `G_j* h = q`: `dq = A* q dt + h dw_j` (`j` zero-based).
pub fn solve_g_star(model: &Model, j: usize, h: &SpaceTimeField) -> Result<SpaceTimeField> {
    check_input(model, h)?;
    if j >= model.d() {
        return Err(Error::InvalidParameter(format!(
            "component {j} out of range for d = {}",
            model.d()
        )));
    }
    let nx = model.nx();
    let zero = model.grid.zeros();
    march(model, &zero, |k, i, _, _, noise| {
        noise[j * nx..(j + 1) * nx].copy_from_slice(h.slice(k, i));
        Ok(())
    })
}

/// `B* h = z`: `dz = A* z dt + sum_j D(beta_j h) dw_j`.
pub fn solve_b_star(model: &Model, h: &SpaceTimeField) -> Result<SpaceTimeField> {
    check_input(model, h)?;
    let nx = model.nx();
    let zero = model.grid.zeros();
    march(model, &zero, |k, i, _, _, noise| {
        for (j, row) in noise.chunks_mut(nx).enumerate() {
            model.div_beta(k, i, j, h.slice(k, i), row);
        }
        Ok(())
    })
}

/// `R* pi = h = pi - z` with `dz = A* z dt + sum_j D(beta_j (pi - z)) dw_j`.
pub fn solve_r_star(model: &Model, pi: &SpaceTimeField) -> Result<SpaceTimeField> {
    check_input(model, pi)?;
    require_superparabolic(model)?;
    let nx = model.nx();
    let zero = model.grid.zeros();
    let z = march(model, &zero, |k, i, z, _, noise| {
        let h: Vec<f64> = pi.slice(k, i).iter().zip(z).map(|(p, q)| p - q).collect();
        for (j, row) in noise.chunks_mut(nx).enumerate() {
            model.div_beta(k, i, j, &h, row);
        }
        Ok(())
    })?;
    let mut h = pi.clone();
    h.axpy(-1.0, &z)?;
    Ok(h)
}

/// `L* xi = h`: `dh = (A* h + xi) dt - sum_j D(beta_j h) dw_j`.
pub fn solve_l_star(model: &Model, xi: &SpaceTimeField) -> Result<SpaceTimeField> {
    check_input(model, xi)?;
    require_superparabolic(model)?;
    let zero = model.grid.zeros();
    march(model, &zero, |k, i, h, drift, noise| {
        drift.copy_from_slice(xi.slice(k, i));
        density_noise(model, k, i, h, noise);
        Ok(())
    })
}

fn density_noise(model: &Model, k: usize, i: usize, p: &[f64], noise: &mut [f64]) {
    let nx = model.nx();
    for (j, row) in noise.chunks_mut(nx).enumerate() {
        model.div_beta(k, i, j, p, row);
        row.iter_mut().for_each(|v| *v = -*v);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityOptions {
    /// Refuse coefficients without a nondegenerate tail block.
    pub require_superparabolic: bool,
    /// Abort when some node's `H^0` norm exceeds this.
    pub blow_up: f64,
    /// Flag the run when `min p < -negativity * max p`.
    pub negativity: f64,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self {
            require_superparabolic: true,
            blow_up: 1e6,
            negativity: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySolution {
    pub p: SpaceTimeField,
    /// `integral of p` per level, per node.
    pub mass: Vec<Vec<f64>>,
    /// Smallest value of `p` over all nodes of each level.
    pub min_p: Vec<f64>,
    pub max_p: Vec<f64>,
    /// Set when some level dips below `-negativity * max p`.
    pub negativity_flag: bool,
}

/// `dp = A* p dt - sum_j D(beta_j p) dw_j`, `p(0) = p0`.
pub fn solve_density(
    model: &Model,
    p0: &[f64],
    opts: &DensityOptions,
) -> Result<DensitySolution> {
    model.grid.check(p0)?;
    if opts.require_superparabolic {
        require_superparabolic(model)?;
    }
    let (grid, tree) = (model.grid, model.tree);
    let nx = model.nx();
    let mut p = SpaceTimeField::zeros(grid, tree);
    p.regularity = Regularity::X0;
    let mut state = ForwardState::initial(model, p0)?;
    p.level_mut(0).copy_from_slice(&state.values);
    for k in 0..tree.n_steps() {
        let src = |i: usize, s: &[f64], _: &mut [f64], noise: &mut [f64]| {
            density_noise(model, k, i, s, noise);
            Ok(())
        };
        state = state.advance(model, &src)?;
        let worst = state
            .values
            .chunks(nx)
            .map(|row| grid.norm(row))
            .fold(0.0, |m: f64, v| if v.is_nan() { f64::INFINITY } else { m.max(v) });
        if worst > opts.blow_up {
            return Err(Error::BlowUp {
                level: k + 1,
                norm: worst,
            });
        }
        p.level_mut(k + 1).copy_from_slice(&state.values);
    }

    let mut mass = Vec::with_capacity(tree.n_steps() + 1);
    let mut min_p = Vec::with_capacity(tree.n_steps() + 1);
    let mut max_p = Vec::with_capacity(tree.n_steps() + 1);
    let mut negativity_flag = false;
    for k in 0..=tree.n_steps() {
        let level = p.level(k);
        mass.push(level.chunks(nx).map(|row| grid.integral(row)).collect());
        let lo = level.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        let hi = level.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        if lo < -opts.negativity * hi {
            negativity_flag = true;
        }
        min_p.push(lo);
        max_p.push(hi);
    }
    Ok(DensitySolution {
        p,
        mass,
        min_p,
        max_p,
        negativity_flag,
    })
}
