//! The forward density against Monte Carlo. Along one fixed driving path,
//! `integral p(x, t) phi(x) dx` must match the average of
//! `I_tau(t) phi(y(t))` over the free noise and the initial draw; averaged
//! over the tree it must match the unconditional expectation.

use bspde_core::forward::{solve_density, DensityOptions};
use bspde_core::montecarlo::{conditional_functional, DensitySampler, Initial, Simulator};
use bspde_core::paths::sampled_paths;

use super::{gaussian_density, model, Outcome};
use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::report::Row;

const RELATIVE_BOUND: f64 = 0.05;
const ALLOWANCE: f64 = 0.02;
const DEFAULT_P0_VARIANCE: f64 = 0.25;

fn phi(x: f64) -> f64 {
    (-x * x).exp()
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let setup = cfg.setup(cfg.base_level())?;
    let m = model(cfg, &setup)?;
    let (grid, tree) = (&setup.grid, &setup.tree);
    let probe = cfg.probe();
    let leaf = probe.leaf.unwrap_or(tree.n_leaves() / 3);
    let p0 = gaussian_density(grid, probe.p0_variance.unwrap_or(DEFAULT_P0_VARIANCE));
    let density = solve_density(&m, &p0, &DensityOptions::default())?;
    if density.negativity_flag {
        out.notes.push("density dipped below the negativity threshold".into());
    }
    out.diag("min_p", density.min_p.iter().copied().fold(f64::INFINITY, f64::min));
    let phi_grid = grid.sample(phi);

    let levels: Vec<usize> = probe
        .times
        .iter()
        .map(|&t| {
            let k = (t / tree.dt()).round();
            if k < 0.0 || k > tree.n_steps() as f64 || (k * tree.dt() - t).abs() > 1e-9 {
                Err(LabError::Config(format!("time {t} is not a tree time")))
            } else {
                Ok(k as usize)
            }
        })
        .collect::<Result<_>>()?;

    let mc = cfg.mc()?;
    let sim = Simulator {
        coeffs: &setup.coeffs,
        tree,
        domain: &setup.domain,
    };
    let sampler = DensitySampler::new(grid, &p0)?;
    let integrand = |x: f64, _: f64, _: &[f64]| phi(x);
    let path = tree.leaf_path(leaf);
    let conditional = conditional_functional(
        &sim,
        &integrand,
        &path,
        &probe.times,
        mc.paths,
        mc.dt_mc,
        &sampler,
        cfg.seed,
    )?;
    let bundle = sampled_paths(tree, mc.paths, setup.coeffs.d0(), mc.dt_mc, cfg.seed.wrapping_add(1))?;
    let unconditional = sim.functional_at_times(Initial::Density(&sampler), &bundle, &integrand, &probe.times)?;

    for ((&t, &k), (cond, unc)) in probe
        .times
        .iter()
        .zip(&levels)
        .zip(conditional.iter().zip(&unconditional))
    {
        let node = tree.ancestor(leaf, k);
        let along = grid.dot(density.p.slice(k, node), &phi_grid);
        out.diag(format!("mass@t={t}"), density.mass[k][node]);
        out.diag(format!("mc_conditional_stderr@t={t}"), cond.stderr);
        out.rows.push(Row::at_most(
            &format!("conditional-relative-gap@t={t}"),
            "conditional-density-identity",
            (cond.mean - along).abs() / along.abs(),
            RELATIVE_BOUND,
        ));
        let mean: f64 = (0..tree.level_size(k))
            .map(|i| grid.dot(density.p.slice(k, i), &phi_grid))
            .sum::<f64>()
            * tree.prob(k);
        out.rows.push(Row::close(
            &format!("unconditional-gap@t={t}"),
            "unconditional-density-identity",
            mean,
            unc.mean,
            3.0 * unc.stderr + ALLOWANCE,
        ));
    }
    out.diag("leaf", leaf as f64);
    Ok(out)
}
