//! Duality between the backward solution `v = L phi` and the forward
//! density `p` at time zero:
//! `integral p(x, 0) v(x, 0) dx = E sum_{k < N} dt integral p^k phi^k dx`,
//! up to an `O(dt + dx^2)` gap that must shrink under refinement.

use bspde_core::backward::op_l;
use bspde_core::forward::{solve_density, DensityOptions};
use bspde_core::probe::random_field;

use super::{gaussian_density, model, ratio, Outcome};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::Row;

const MIN_RATIO: f64 = 1.7;
const DEFAULT_P0_VARIANCE: f64 = 0.25;

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let levels = cfg.levels();
    let variance = cfg.probe().p0_variance.unwrap_or(DEFAULT_P0_VARIANCE);
    let opts = cfg.solver.fixed_point();
    let mut gaps = Vec::with_capacity(levels.len());
    for level in &levels {
        let setup = cfg.setup(*level)?;
        let m = model(cfg, &setup)?;
        let (grid, tree) = (&setup.grid, &setup.tree);
        let phi = random_field(grid, tree, true, cfg.seed);
        let p0 = gaussian_density(grid, variance);
        let v = op_l(&m, &phi, &opts)?.v;
        let lhs = grid.dot(&p0, v.slice(0, 0));
        let density = solve_density(&m, &p0, &DensityOptions::default())?;
        let mut rhs = 0.0;
        for k in 0..tree.n_steps() {
            let level_sum: f64 = (0..tree.level_size(k))
                .map(|i| grid.dot(density.p.slice(k, i), phi.slice(k, i)))
                .sum();
            rhs += tree.prob(k) * tree.dt() * level_sum;
        }
        let tag = format!("{}x{}", level.nx, level.n_steps);
        let gap = (lhs - rhs).abs();
        out.diag(format!("lhs:{tag}"), lhs);
        out.diag(format!("rhs:{tag}"), rhs);
        out.diag(format!("gap:{tag}"), gap);
        out.diag(format!("gap_over_dt_plus_dx2:{tag}"), gap / (tree.dt() + grid.dx().powi(2)));
        if density.negativity_flag {
            out.notes.push(format!("density dipped negative at {tag}"));
        }
        gaps.push(gap);
    }
    for (w, pair) in gaps.windows(2).enumerate() {
        let (a, b) = (&levels[w], &levels[w + 1]);
        out.rows.push(Row::at_least(
            &format!("gap-ratio:{}x{}->{}x{}", a.nx, a.n_steps, b.nx, b.n_steps),
            "backward-forward-duality",
            ratio(pair[0], pair[1]),
            MIN_RATIO,
        ));
    }
    Ok(out)
}
