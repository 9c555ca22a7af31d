//! `(I + B) g = phi` solved from two different initial iterates. Both runs
//! must reach the residual tolerance and agree; the homogeneous problem
//! must drive a nonzero start to zero.

use bspde_core::backward::{solve_r, FixedPointSolution};
use bspde_core::field::{norm_x0, SpaceTimeField};
use bspde_core::probe::random_field;
use bspde_core::Error;

use super::{model, Outcome};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::Row;

const RESIDUAL_BOUND: f64 = 1e-8;
const AGREEMENT_BOUND: f64 = 1e-7;

/// Turns divergence into `None` so it becomes a failed row.
fn attempt(r: bspde_core::Result<FixedPointSolution>) -> Result<Option<FixedPointSolution>> {
    match r {
        Ok(s) => Ok(Some(s)),
        Err(Error::NoConvergence { .. }) | Err(Error::BlowUp { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let setup = cfg.setup(cfg.base_level())?;
    let m = model(cfg, &setup)?;
    let (grid, tree) = (&setup.grid, &setup.tree);
    let opts = cfg.solver.fixed_point();
    let phi = random_field(grid, tree, true, cfg.seed);
    let other = random_field(grid, tree, true, cfg.seed.wrapping_add(7)).scaled(3.0);

    let anchor = "operator-equation-solvability";
    let first = attempt(solve_r(&m, &phi, &opts, None))?;
    let second = attempt(solve_r(&m, &phi, &opts, Some(&other)))?;
    for (name, sol) in [("start-phi", &first), ("start-random", &second)] {
        match sol {
            Some(s) => {
                out.diag(format!("iterations:{name}"), s.iterations as f64);
                out.rows.push(Row::at_most(
                    &format!("residual:{name}"),
                    anchor,
                    s.residual,
                    RESIDUAL_BOUND,
                ));
            }
            None => out.rows.push(Row::failed(&format!("residual:{name}"), anchor)),
        }
    }
    match (&first, &second) {
        (Some(a), Some(b)) => {
            let mut diff = a.g.clone();
            diff.axpy(-1.0, &b.g)?;
            let rel = norm_x0(&diff, grid, tree) / norm_x0(&a.g, grid, tree);
            out.rows.push(Row::at_most("iterates-agree", "operator-equation-uniqueness", rel, AGREEMENT_BOUND));
        }
        _ => out.rows.push(Row::failed("iterates-agree", "operator-equation-uniqueness")),
    }

    let zero = SpaceTimeField::zeros(grid, tree);
    match attempt(solve_r(&m, &zero, &opts, Some(&other)))? {
        Some(s) => out.rows.push(Row::at_most(
            "homogeneous-solution-vanishes",
            "operator-equation-uniqueness",
            norm_x0(&s.g, grid, tree) / norm_x0(&other, grid, tree),
            AGREEMENT_BOUND,
        )),
        None => out.rows.push(Row::failed("homogeneous-solution-vanishes", "operator-equation-uniqueness")),
    }
    Ok(out)
}
