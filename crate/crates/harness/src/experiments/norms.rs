//! `||L phi||_{C0} / ||phi||_{X0}` and `||L phi||_{X1} / ||phi||_{X0}` for
//! a batch of random `phi`, on each level of a refinement ladder. The
//! bounds depend only on the coefficients, so the ratios must not grow as
//! the discretization is refined.

use bspde_core::backward::op_l;
use bspde_core::field::{norm_c0, norm_x0, norm_x1};
use bspde_core::probe::random_field;

use super::{model, Outcome};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::Row;

const MAX_GROWTH: f64 = 1.5;
const DEFAULT_COUNT: usize = 10;

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let levels = cfg.levels();
    let count = cfg.probe().count.unwrap_or(DEFAULT_COUNT);
    let opts = cfg.solver.fixed_point();
    // ratios[level][probe] = (C0 ratio, X1 ratio)
    let mut ratios: Vec<Vec<(f64, f64)>> = Vec::with_capacity(levels.len());
    for level in &levels {
        let setup = cfg.setup(*level)?;
        let m = model(cfg, &setup)?;
        let (grid, tree) = (&setup.grid, &setup.tree);
        let mut row = Vec::with_capacity(count);
        for i in 0..count {
            let phi = random_field(grid, tree, true, cfg.seed.wrapping_add(i as u64));
            let sol = op_l(&m, &phi, &opts)?;
            let base = norm_x0(&phi, grid, tree);
            row.push((norm_c0(&sol.v, grid, tree) / base, norm_x1(&sol.v, grid, tree) / base));
        }
        let tag = format!("{}x{}", level.nx, level.n_steps);
        out.diag(format!("max_c0_ratio:{tag}"), row.iter().map(|r| r.0).fold(0.0, f64::max));
        out.diag(format!("max_x1_ratio:{tag}"), row.iter().map(|r| r.1).fold(0.0, f64::max));
        ratios.push(row);
    }
    let first = &ratios[0];
    let last = ratios.last().expect("at least two levels");
    let growth = |pick: fn(&(f64, f64)) -> f64| {
        first
            .iter()
            .zip(last)
            .map(|(a, b)| pick(b) / pick(a))
            .fold(0.0, f64::max)
    };
    out.rows.push(Row::at_most(
        "c0-ratio-growth",
        "a-priori-bound-c0",
        growth(|r| r.0),
        MAX_GROWTH,
    ));
    out.rows.push(Row::at_most(
        "x1-ratio-growth",
        "a-priori-bound-x1",
        growth(|r| r.1),
        MAX_GROWTH,
    ));
    Ok(out)
}
