//! Backward solvers: the pathwise parabolic problem, its conditional
//! expectation `v = T g`, the diffusion kernels `X_j = G_j g`, the operator
//! `B g = -sum_j beta_j dX_j/dx`, the inverse `R = (I + B)^{-1}` and
//! `L = T R`.
//!
//! `v` and `X_j` are computed by one backward sweep over the tree. With
//! `P_k = I + (1 - theta) dt A_k` and `M_k = I - theta dt A_k` at a node,
//!
//! ```text
//! v^k   = M_k^{-1} (P_k E_k v^{k+1} + dt g^k)
//! X_j^k = M_k^{-1} P_k E_k[v^{k+1} dw_j] / dt
//! ```
//!
//! which equals averaging the pathwise solutions over descendant leaves and
//! taking their Clark kernels, because every operator above is
//! measurable at the node where it is applied.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{norm_x0, Regularity, SpaceTimeField};
use crate::grid::GridFunction;
use crate::model::Model;

/// `v` together with the kernels `X_1, ..., X_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardSolution {
    pub v: SpaceTimeField,
    pub chi: Vec<SpaceTimeField>,
    /// Fixed-point iterations spent computing `R phi` (zero when not used).
    pub iterations: usize,
    /// Relative residual of `(I + B) g = phi` at exit (zero when not used).
    pub fixed_point_residual: f64,
}

/// Marches `U^k = M_k^{-1}(P_k U^{k+1} + dt g^k)` from `U^N = 0` along the
/// given root-to-leaf node sequence. Returns `U^0, ..., U^N`.
pub fn solve_backward_pathwise(
    model: &Model,
    g: &SpaceTimeField,
    leaf_path: &[usize],
) -> Result<Vec<GridFunction>> {
    g.check(model.grid, model.tree)?;
    model.tree.path_leaf(leaf_path)?;
    let n = model.tree.n_steps();
    let dt = model.dt();
    let mut out = vec![model.grid.zeros(); n + 1];
    for k in (0..n).rev() {
        let ops = model.step_ops(k, leaf_path[k], false)?;
        let mut u = out[k + 1].clone();
        ops.apply_explicit(&mut u);
        for (a, b) in u.iter_mut().zip(g.slice(k, leaf_path[k])) {
            *a += dt * b;
        }
        ops.solve(&mut u);
        out[k] = u;
    }
    Ok(out)
}

/// One backward sweep. `sink` receives, for `k = N, N-1, ..., 0`, the
/// level-`k` values of `v` and, when requested, the kernels (rows
/// `node * d + j`; all zero at level `N`).
fn sweep(
    model: &Model,
    g: &SpaceTimeField,
    with_kernels: bool,
    mut sink: impl FnMut(usize, &[f64], &[f64]) -> Result<()>,
) -> Result<()> {
    g.check(model.grid, model.tree)?;
    let tree = model.tree;
    let nx = model.nx();
    let d = model.d();
    let n = tree.n_steps();
    let b = tree.branching();
    let dt = model.dt();
    let inv_b = 1.0 / b as f64;

    let mut next = vec![0.0; tree.level_size(n) * nx];
    let zero_kernels = if with_kernels {
        vec![0.0; tree.level_size(n) * d * nx]
    } else {
        Vec::new()
    };
    sink(n, &next, &zero_kernels)?;
    drop(zero_kernels);

    for k in (0..n).rev() {
        let size = tree.level_size(k);
        let mut cur = vec![0.0; size * nx];
        let mut kernels = if with_kernels {
            vec![0.0; size * d * nx]
        } else {
            Vec::new()
        };
        let step = |i: usize, row: &mut [f64], ker: Option<&mut [f64]>| -> Result<()> {
            let ops = model.step_ops(k, i, false)?;
            let children = &next[i * b * nx..(i + 1) * b * nx];
            row.fill(0.0);
            for child in children.chunks(nx) {
                for (r, c) in row.iter_mut().zip(child) {
                    *r += c;
                }
            }
            row.iter_mut().for_each(|r| *r *= inv_b);
            ops.apply_explicit(row);
            for (r, gv) in row.iter_mut().zip(g.slice(k, i)) {
                *r += dt * gv;
            }
            ops.solve(row);
            if let Some(ker) = ker {
                for (j, kr) in ker.chunks_mut(nx).enumerate() {
                    kr.fill(0.0);
                    for (c, child) in children.chunks(nx).enumerate() {
                        let w = tree.child_increment(c)[j] * inv_b / dt;
                        for (r, v) in kr.iter_mut().zip(child) {
                            *r += w * v;
                        }
                    }
                    ops.propagate(kr);
                }
            }
            Ok(())
        };
        if with_kernels {
            cur.par_chunks_mut(nx)
                .zip(kernels.par_chunks_mut(d * nx))
                .enumerate()
                .try_for_each(|(i, (row, ker))| step(i, row, Some(ker)))?;
        } else {
            cur.par_chunks_mut(nx)
                .enumerate()
                .try_for_each(|(i, row)| step(i, row, None))?;
        }
        sink(k, &cur, &kernels)?;
        next = cur;
    }
    Ok(())
}

/// `v = T g`: conditional expectation of the pathwise solutions.
pub fn op_t(model: &Model, g: &SpaceTimeField) -> Result<SpaceTimeField> {
    let mut v = SpaceTimeField::zeros(model.grid, model.tree);
    v.regularity = Regularity::X1;
    sweep(model, g, false, |k, level, _| {
        v.level_mut(k).copy_from_slice(level);
        Ok(())
    })?;
    Ok(v)
}

/// `(T g, G_1 g, ..., G_d g)`.
pub fn op_tg(model: &Model, g: &SpaceTimeField) -> Result<BackwardSolution> {
    let d = model.d();
    let nx = model.nx();
    let mut v = SpaceTimeField::zeros(model.grid, model.tree);
    v.regularity = Regularity::X1;
    let mut chi = vec![SpaceTimeField::zeros(model.grid, model.tree); d];
    sweep(model, g, true, |k, level, kernels| {
        v.level_mut(k).copy_from_slice(level);
        for (node, rows) in kernels.chunks(d * nx).enumerate() {
            for (j, row) in rows.chunks(nx).enumerate() {
                chi[j].slice_mut(k, node).copy_from_slice(row);
            }
        }
        Ok(())
    })?;
    Ok(BackwardSolution {
        v,
        chi,
        iterations: 0,
        fixed_point_residual: 0.0,
    })
}

/// The kernels `X_j = G_j g`, `j = 1..d`.
pub fn op_g(model: &Model, g: &SpaceTimeField) -> Result<Vec<SpaceTimeField>> {
    Ok(op_tg(model, g)?.chi)
}

/// `B g = -sum_j beta_j dX_j/dx`, without storing the kernels.
pub fn op_b(model: &Model, g: &SpaceTimeField) -> Result<SpaceTimeField> {
    let d = model.d();
    let nx = model.nx();
    let mut out = SpaceTimeField::zeros(model.grid, model.tree);
    let mut dx = vec![0.0; nx];
    sweep(model, g, true, |k, _, kernels| {
        for (node, rows) in kernels.chunks(d * nx).enumerate() {
            let target = out.slice_mut(k, node);
            for (j, row) in rows.chunks(nx).enumerate() {
                let beta = model.beta_profile(k, node, j);
                model.grid.centered_difference(row, &mut dx);
                for ((t, b), v) in target.iter_mut().zip(&beta).zip(&dx) {
                    *t -= b * v;
                }
            }
        }
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    /// Stop once `||(I + B) g - phi|| <= tol ||phi||` in `X^0`.
    pub tol: f64,
    pub max_iter: usize,
    /// Damping `alpha` in `g <- g - alpha ((I + B) g - phi)`.
    pub damping: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            damping: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSolution {
    pub g: SpaceTimeField,
    /// Number of applications of `B`.
    pub iterations: usize,
    /// Relative residual at exit.
    pub residual: f64,
}

/// Solves `(I + B) g = phi` by damped fixed-point iteration, starting from
/// `initial` (default `phi`).
pub fn solve_r(
    model: &Model,
    phi: &SpaceTimeField,
    opts: &FixedPointOptions,
    initial: Option<&SpaceTimeField>,
) -> Result<FixedPointSolution> {
    phi.check(model.grid, model.tree)?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    let mut g = match initial {
        Some(g0) => {
            g0.same_shape(phi)?;
            g0.clone()
        }
        None => phi.clone(),
    };
    let (grid, tree) = (model.grid, model.tree);
    let phi_norm = norm_x0(phi, grid, tree);
    let scale = if phi_norm > 0.0 {
        phi_norm
    } else {
        norm_x0(&g, grid, tree).max(f64::MIN_POSITIVE)
    };
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let mut r = op_b(model, &g)?;
        r.axpy(1.0, &g)?;
        r.axpy(-1.0, phi)?;
        let r_norm = norm_x0(&r, grid, tree);
        residual = r_norm / scale;
        if !residual.is_finite() {
            break;
        }
        if r_norm <= opts.tol * scale {
            return Ok(FixedPointSolution {
                g,
                iterations: it,
                residual,
            });
        }
        g.axpy(-opts.damping, &r)?;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// `L phi = T R phi`, with the kernels of the same sweep.
pub fn op_l(
    model: &Model,
    phi: &SpaceTimeField,
    opts: &FixedPointOptions,
) -> Result<BackwardSolution> {
    let r = solve_r(model, phi, opts, None)?;
    let mut sol = op_tg(model, &r.g)?;
    sol.iterations = r.iterations;
    sol.fixed_point_residual = r.residual;
    Ok(sol)
}

/// `X^0` norm over leaves and times of
/// `v(t) - sum_{k >= t} [dt (A_k (v^k + v^{k+1}) / 2 + g^k) - sum_j X_j^k dw_j]`,
/// the discrete form of the backward equation in integrated form.
pub fn residual_bspde(model: &Model, sol: &BackwardSolution, g: &SpaceTimeField) -> Result<f64> {
    let (grid, tree) = (model.grid, model.tree);
    sol.v.check(grid, tree)?;
    g.check(grid, tree)?;
    if sol.chi.len() != model.d() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} kernels, got {}",
            model.d(),
            sol.chi.len()
        )));
    }
    for c in &sol.chi {
        c.check(grid, tree)?;
    }
    let nx = model.nx();
    let n = tree.n_steps();
    let dt = model.dt();
    let b = tree.branching();

    // Per-edge increment of the right-hand side, indexed by the child node.
    let mut incr = SpaceTimeField::zeros(grid, tree);
    for k in 0..n {
        let level = incr.level_mut(k + 1);
        level
            .par_chunks_mut(b * nx)
            .enumerate()
            .try_for_each(|(i, block)| -> Result<()> {
                let a = model.generator(k, i, false)?;
                let vk = sol.v.slice(k, i);
                let mut mid = vec![0.0; nx];
                let mut av = vec![0.0; nx - 2];
                for (c, out) in block.chunks_mut(nx).enumerate() {
                    let child = i * b + c;
                    let vn = sol.v.slice(k + 1, child);
                    for ((m, p), q) in mid.iter_mut().zip(vk).zip(vn) {
                        *m = 0.5 * (p + q);
                    }
                    a.apply(&mid[1..nx - 1], &mut av);
                    let dw = tree.child_increment(c);
                    let gk = g.slice(k, i);
                    for x in 1..nx - 1 {
                        let mut s = dt * (av[x - 1] + gk[x]);
                        for (j, w) in dw.iter().enumerate() {
                            s -= sol.chi[j].slice(k, i)[x] * w;
                        }
                        out[x] = s;
                    }
                }
                Ok(())
            })?;
    }

    let leaf_prob = tree.prob(n);
    let total: f64 = (0..tree.n_leaves())
        .into_par_iter()
        .map(|leaf| {
            let path = tree.leaf_path(leaf);
            let mut acc = vec![0.0; nx];
            let mut sum = 0.0;
            for t in (0..=n).rev() {
                if t < n {
                    for (a, v) in acc.iter_mut().zip(incr.slice(t + 1, path[t + 1])) {
                        *a += v;
                    }
                }
                let r: Vec<f64> = sol
                    .v
                    .slice(t, path[t])
                    .iter()
                    .zip(&acc)
                    .map(|(v, a)| v - a)
                    .collect();
                sum += grid.dot(&r, &r);
            }
            sum
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok((total * leaf_prob * dt).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientSet, Family};
    use crate::field::inner_x0;
    use crate::grid::{DomainSpec, Grid};
    use crate::probe::random_field;
    use crate::tree::ScenarioTree;

    fn unit(nx: usize, n: usize, horizon: f64) -> (Grid, ScenarioTree) {
        (
            Grid::new(&DomainSpec::interval(0.0, 1.0, horizon).unwrap(), nx).unwrap(),
            ScenarioTree::new(1, n, horizon).unwrap(),
        )
    }

    fn brownian() -> CoefficientSet {
        CoefficientSet::new(Family::Constant { f0: 0.0 }, 1, &[1.0]).unwrap()
    }

    fn drift_random() -> CoefficientSet {
        CoefficientSet::new(Family::DriftRandom { kappa: 0.25 }, 1, &[0.6, 0.8]).unwrap()
    }

    #[test]
    fn zero_source_gives_zero_solution() {
        let (grid, tree) = unit(21, 4, 1.0);
        let c = drift_random();
        let m = Model::new(&grid, &c, &tree).unwrap();
        let g = SpaceTimeField::zeros(&grid, &tree);
        let u = solve_backward_pathwise(&m, &g, &tree.leaf_path(3)).unwrap();
        assert!(u.iter().all(|s| s.iter().all(|v| *v == 0.0)));
        let sol = op_tg(&m, &g).unwrap();
        assert_eq!(sol.v.max_abs(), 0.0);
        assert_eq!(sol.chi[0].max_abs(), 0.0);
        assert_eq!(op_b(&m, &g).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn exit_time_profile_from_pathwise_solve() {
        let (grid, tree) = unit(201, 16, 4.0);
        let c = brownian();
        let m = Model::new(&grid, &c, &tree).unwrap();
        let g = SpaceTimeField::from_fn(&grid, &tree, |_, _, _| 1.0);
        let u = solve_backward_pathwise(&m, &g, &tree.leaf_path(0)).unwrap();
        for (i, &x) in grid.nodes().iter().enumerate() {
            let exact = x * (1.0 - x);
            assert!((u[0][i] - exact).abs() <= 0.02 * 0.25, "x = {x}");
        }
        let other = solve_backward_pathwise(&m, &g, &tree.leaf_path(777)).unwrap();
        assert_eq!(u, other);
    }

    #[test]
    fn nonrandom_data_has_no_kernels() {
        let (grid, tree) = unit(41, 8, 1.0);
        let c = CoefficientSet::new(Family::Constant { f0: 0.3 }, 1, &[0.9]).unwrap();
        let m = Model::new(&grid, &c, &tree).unwrap();
        let g = random_field(&grid, &tree, false, 1);
        let sol = op_tg(&m, &g).unwrap();
        let gn = norm_x0(&g, &grid, &tree);
        assert!(norm_x0(&sol.chi[0], &grid, &tree) <= 1e-12 * gn);
        assert!(norm_x0(&op_b(&m, &g).unwrap(), &grid, &tree) <= 1e-12 * gn);
        let r = solve_r(&m, &g, &FixedPointOptions::default(), None).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.g, g);
    }

    #[test]
    fn b_is_nonzero_and_linear_for_random_drift() {
        let (grid, tree) = unit(41, 6, 1.0);
        let c = drift_random();
        let m = Model::new(&grid, &c, &tree).unwrap();
        let g = random_field(&grid, &tree, true, 2);
        let bg = op_b(&m, &g).unwrap();
        let b2 = op_b(&m, &g.scaled(2.0)).unwrap();
        let n1 = norm_x0(&bg, &grid, &tree);
        assert!(n1 > 0.0);
        let mut diff = b2.clone();
        diff.axpy(-2.0, &bg).unwrap();
        assert!(norm_x0(&diff, &grid, &tree) <= 1e-12 * n1);
    }

    #[test]
    fn zero_phi_gives_zero_g() {
        let (grid, tree) = unit(21, 4, 1.0);
        let c = drift_random();
        let m = Model::new(&grid, &c, &tree).unwrap();
        let phi = SpaceTimeField::zeros(&grid, &tree);
        let r = solve_r(&m, &phi, &FixedPointOptions::default(), None).unwrap();
        assert_eq!(r.g.max_abs(), 0.0);
        let sol = op_l(&m, &phi, &FixedPointOptions::default()).unwrap();
        assert_eq!(sol.v.max_abs(), 0.0);
    }

    #[test]
    fn residual_of_zero_pair_is_zero() {
        let (grid, tree) = unit(21, 4, 1.0);
        let c = drift_random();
        let m = Model::new(&grid, &c, &tree).unwrap();
        let z = SpaceTimeField::zeros(&grid, &tree);
        let sol = BackwardSolution {
            v: z.clone(),
            chi: vec![z.clone()],
            iterations: 0,
            fixed_point_residual: 0.0,
        };
        assert_eq!(residual_bspde(&m, &sol, &z).unwrap(), 0.0);
    }

    #[test]
    fn crank_nicolson_matches_implicit_steady_state() {
        let (grid, tree) = unit(101, 16, 4.0);
        let c = brownian();
        let g = SpaceTimeField::from_fn(&grid, &tree, |_, _, _| 1.0);
        let m = Model::with_theta(&grid, &c, &tree, 0.5).unwrap();
        let v = op_t(&m, &g).unwrap();
        let mid = v.slice(0, 0)[50];
        assert!((mid - 0.25).abs() < 5e-3, "{mid}");
        assert!(Model::with_theta(&grid, &c, &tree, 0.2).is_err());
    }

    #[test]
    fn pairing_with_itself_is_positive() {
        let (grid, tree) = unit(31, 5, 1.0);
        let c = drift_random();
        let m = Model::new(&grid, &c, &tree).unwrap();
        let g = random_field(&grid, &tree, true, 5);
        let v = op_t(&m, &g).unwrap();
        // T is the inverse of a positive operator up to discretization.
        assert!(inner_x0(&v, &g, &grid, &tree).unwrap() > 0.0);
    }
}
