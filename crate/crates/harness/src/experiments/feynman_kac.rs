//! Nonrandom coefficients on an interval: `v = T 1` is the expected exit
//! time, which solves `-(b/2) u'' - f u' = 1` with zero boundary values.
//! For `f = 0, b = 1` that is `x (1 - x)` on `(0, 1)`.

use bspde_core::backward::{op_g, op_t, solve_backward_pathwise};
use bspde_core::field::{norm_x0, SpaceTimeField};
use bspde_core::montecarlo::{Initial, Simulator};
use bspde_core::paths::brownian_paths;
use bspde_core::probe::random_field;

use super::{interpolate, model, Outcome};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::Row;

/// Allowance for the exit-time oracle and for Monte Carlo bias.
const ALLOWANCE: f64 = 0.02;
const KERNEL_TOL: f64 = 1e-12;

/// `x (1 - x)` rescaled to `(a, b)` and divided by the diffusion `b`.
fn exit_time(x: f64, a: f64, b: f64, diffusion: f64) -> f64 {
    (x - a) * (b - x) / diffusion
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let setup = cfg.setup(cfg.base_level())?;
    let m = model(cfg, &setup)?;
    let (grid, tree) = (&setup.grid, &setup.tree);

    let one = SpaceTimeField::from_fn(grid, tree, |_, _, _| 1.0);
    let probe = random_field(grid, tree, false, cfg.seed);
    for (name, g) in [("kernels-vanish-constant", &one), ("kernels-vanish-probe", &probe)] {
        let chi = op_g(&m, g)?;
        let norm = chi
            .iter()
            .map(|c| norm_x0(c, grid, tree).powi(2))
            .sum::<f64>()
            .sqrt();
        out.rows.push(Row::at_most(
            name,
            "nonrandom-data-zero-kernel",
            norm,
            KERNEL_TOL * norm_x0(g, grid, tree),
        ));
    }

    let v = op_t(&m, &one)?;
    let root = v.slice(0, 0);
    let pathwise = solve_backward_pathwise(&m, &one, &tree.leaf_path(tree.n_leaves() - 1))?;
    let gap = root
        .iter()
        .zip(pathwise[0].iter())
        .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
    let scale = root.iter().fold(0.0_f64, |acc, a| acc.max(a.abs()));
    out.rows.push(Row::at_most(
        "pathwise-equals-conditional",
        "pathwise-solution-nonrandom",
        gap,
        1e-12 * scale,
    ));

    let mc = cfg.mc()?;
    let domain = &setup.domain;
    let diffusion = setup.coeffs.diffusion(0.0, 0.0, tree.omega(0, 0));
    let sim = Simulator {
        coeffs: &setup.coeffs,
        tree,
        domain,
    };
    let bundle = brownian_paths(tree, mc.paths, setup.coeffs.d0(), mc.dt_mc, cfg.seed)?;
    let phi = |_: f64, _: f64, _: &[f64]| 1.0;
    let drift_free = matches!(setup.coeffs.family, bspde_core::coefficients::Family::Constant { f0 } if f0 == 0.0);
    for &x in &cfg.probe().points {
        let vx = interpolate(grid, root, x);
        let est = sim.functional(Initial::Point(x), 0.0, &bundle, &phi)?;
        out.diag(format!("v({x})"), vx);
        out.diag(format!("mc({x})"), est.mean);
        out.diag(format!("mc_stderr({x})"), est.stderr);
        out.rows.push(Row::close(
            &format!("v-vs-monte-carlo@x={x}"),
            "feynman-kac-representation",
            vx,
            est.mean,
            3.0 * est.stderr + ALLOWANCE,
        ));
        if drift_free {
            out.rows.push(Row::close(
                &format!("v-vs-exit-time@x={x}"),
                "exit-time-oracle",
                vx,
                exit_time(x, domain.a, domain.b, diffusion),
                ALLOWANCE,
            ));
        }
    }
    if !drift_free {
        out.notes
            .push("exit-time oracle skipped: it needs f = 0".to_string());
    }
    Ok(out)
}
