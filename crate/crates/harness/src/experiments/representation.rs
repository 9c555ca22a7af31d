//! Random drift: `v = T phi` against the Monte Carlo functional
//! `E sum_{t < tau} phi(y(t)) dt`, with `phi(x) = exp(-x^2)`.
//!
//! The tolerance `C (dt + dx^2)` is calibrated on the nonrandom case with
//! the same diffusion, where the heat kernel gives `v` in closed form:
//! `E exp(-(x + sqrt(b) W_t)^2) = (1 + 2bt)^{-1/2} exp(-x^2 / (1 + 2bt))`.

use bspde_core::backward::op_tg;
use bspde_core::coefficients::{CoefficientSet, Family};
use bspde_core::field::{norm_x0, SpaceTimeField};
use bspde_core::model::Model;
use bspde_core::montecarlo::{Initial, Simulator};
use bspde_core::paths::sampled_paths;

use super::{interpolate, model, Outcome};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::Row;

const DEFAULT_SAFETY: f64 = 2.0;

fn phi(x: f64) -> f64 {
    (-x * x).exp()
}

/// `integral_0^T (1 + 2bt)^{-1/2} exp(-x^2 / (1 + 2bt)) dt` by composite
/// Simpson on 2000 panels; the integrand is smooth and bounded.
pub(crate) fn heat_oracle(x: f64, horizon: f64, b: f64) -> f64 {
    let f = |t: f64| {
        let s = 1.0 + 2.0 * b * t;
        (-x * x / s).exp() / s.sqrt()
    };
    let n = 2000;
    let h = horizon / n as f64;
    let mut acc = f(0.0) + f(horizon);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    acc * h / 3.0
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let setup = cfg.setup(cfg.base_level())?;
    let (grid, tree) = (&setup.grid, &setup.tree);
    let probe = cfg.probe();
    let points = &probe.points;
    let safety = probe.safety.unwrap_or(DEFAULT_SAFETY);
    let g = SpaceTimeField::from_fn(grid, tree, |x, _, _| phi(x));
    let scale = tree.dt() + grid.dx() * grid.dx();

    let calm = CoefficientSet::new(Family::Constant { f0: 0.0 }, setup.coeffs.d(), setup.coeffs.sigma())?;
    let calm_model = Model::with_theta(grid, &calm, tree, cfg.solver.theta)?;
    let v0 = bspde_core::backward::op_t(&calm_model, &g)?;
    let b = calm.diffusion(0.0, 0.0, tree.omega(0, 0));
    let worst = points
        .iter()
        .map(|&x| (interpolate(grid, v0.slice(0, 0), x) - heat_oracle(x, tree.horizon(), b)).abs())
        .fold(0.0, f64::max);
    let c = safety * worst / scale;
    out.diag("calibration_error", worst);
    out.diag("calibration_constant", c);
    out.diag("dt_plus_dx2", scale);

    let m = model(cfg, &setup)?;
    let sol = op_tg(&m, &g)?;
    let chi = sol
        .chi
        .iter()
        .map(|c| norm_x0(c, grid, tree).powi(2))
        .sum::<f64>()
        .sqrt();
    out.diag("kernel_norm_ratio", chi / norm_x0(&g, grid, tree));
    if setup.coeffs.is_random() {
        out.rows.push(Row::at_least(
            "kernels-nonzero",
            "random-data-nonzero-kernel",
            chi / norm_x0(&g, grid, tree),
            1e-8,
        ));
    }

    let mc = cfg.mc()?;
    let sim = Simulator {
        coeffs: &setup.coeffs,
        tree,
        domain: &setup.domain,
    };
    let bundle = sampled_paths(tree, mc.paths, setup.coeffs.d0(), mc.dt_mc, cfg.seed)?;
    let integrand = |x: f64, _: f64, _: &[f64]| phi(x);
    for &x in points {
        let vx = interpolate(grid, sol.v.slice(0, 0), x);
        let est = sim.functional(Initial::Point(x), 0.0, &bundle, &integrand)?;
        out.diag(format!("v({x})"), vx);
        out.diag(format!("mc({x})"), est.mean);
        out.diag(format!("mc_stderr({x})"), est.stderr);
        out.rows.push(Row::close(
            &format!("v-vs-monte-carlo@x={x}"),
            "functional-representation-random-drift",
            vx,
            est.mean,
            3.0 * est.stderr + c * scale,
        ));
    }
    Ok(out)
}
