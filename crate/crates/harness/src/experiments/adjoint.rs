//! `<X g, h>` against `<g, X* h>` for every operator, on a refinement
//! ladder. The spatial discretization is exactly self-consistent, so the
//! mismatch measures time discretization and should halve with `dt`.

use bspde_core::pairing::{pairing, Operator};
use bspde_core::probe::random_field;

use super::{model, ratio, Outcome};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::Row;

const MIN_RATIO: f64 = 1.7;
const FINEST_BOUND: f64 = 5e-2;

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let levels = cfg.levels();
    let opts = cfg.solver.fixed_point();
    let ops = Operator::all(cfg.tree.d);
    let mut mismatches: Vec<Vec<f64>> = Vec::new();
    for level in &levels {
        let setup = cfg.setup(*level)?;
        let m = model(cfg, &setup)?;
        let g = random_field(&setup.grid, &setup.tree, true, cfg.seed);
        let h = random_field(&setup.grid, &setup.tree, true, cfg.seed.wrapping_add(1));
        let mut row = Vec::with_capacity(ops.len());
        for op in &ops {
            let p = pairing(&m, *op, &g, &h, &opts)?;
            let tag = format!("{}@{}x{}", op.label(), level.nx, level.n_steps);
            out.diag(format!("forward:{tag}"), p.forward);
            out.diag(format!("adjoint:{tag}"), p.adjoint);
            out.diag(format!("mismatch:{tag}"), p.mismatch);
            row.push(p.mismatch);
        }
        mismatches.push(row);
    }
    for (i, op) in ops.iter().enumerate() {
        let anchor = format!("adjoint-pairing-{}", op.label());
        for (w, pair) in mismatches.windows(2).enumerate() {
            let (a, b) = (&levels[w], &levels[w + 1]);
            out.rows.push(Row::at_least(
                &format!(
                    "{}-mismatch-ratio:{}x{}->{}x{}",
                    op.label(),
                    a.nx,
                    a.n_steps,
                    b.nx,
                    b.n_steps
                ),
                &anchor,
                ratio(pair[0][i], pair[1][i]),
                MIN_RATIO,
            ));
        }
        let last = levels.last().expect("at least two levels");
        out.rows.push(Row::at_most(
            &format!("{}-mismatch-finest:{}x{}", op.label(), last.nx, last.n_steps),
            &anchor,
            mismatches.last().expect("at least two levels")[i],
            FINEST_BOUND,
        ));
    }
    Ok(out)
}
