//! Named verification experiments.

use std::fmt;
use std::str::FromStr;

use bspde_core::grid::Grid;
use bspde_core::model::Model;

use crate::config::{ExperimentConfig, Setup};
use crate::error::{LabError, Result};
use crate::report::{Diagnostics, Row};

mod adjoint;
mod calculus;
mod density;
mod duality;
mod feynman_kac;
mod norms;
mod representation;
mod solvability;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    FeynmanKacNonrandom,
    RepresentationRandom,
    AdjointSuite,
    SolvabilityR,
    Duality,
    Density,
    NormBounds,
    StochasticCalculus,
}

/// What an experiment hands back to the runner.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub diagnostics: Diagnostics,
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn diag(&mut self, key: impl Into<String>, value: f64) {
        self.diagnostics.insert(key.into(), value);
    }
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::FeynmanKacNonrandom,
        Experiment::RepresentationRandom,
        Experiment::AdjointSuite,
        Experiment::SolvabilityR,
        Experiment::Duality,
        Experiment::Density,
        Experiment::NormBounds,
        Experiment::StochasticCalculus,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::FeynmanKacNonrandom => "feynman-kac-nonrandom",
            Experiment::RepresentationRandom => "representation-random",
            Experiment::AdjointSuite => "adjoint-suite",
            Experiment::SolvabilityR => "solvability-R",
            Experiment::Duality => "duality-63",
            Experiment::Density => "density-64-65",
            Experiment::NormBounds => "norm-bounds",
            Experiment::StochasticCalculus => "stochastic-calculus",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Experiment::FeynmanKacNonrandom => {
                "nonrandom coefficients: backward solution vs exit-time ODE and Monte Carlo; kernels vanish"
            }
            Experiment::RepresentationRandom => {
                "random drift: backward solution vs Monte Carlo functional, tolerance calibrated on the nonrandom case"
            }
            Experiment::AdjointSuite => "pairings of T, G_j, B, R, L with their adjoints across a refinement ladder",
            Experiment::SolvabilityR => "(I + B) g = phi from two initial iterates: residual and uniqueness",
            Experiment::Duality => "integral of p(0) v(0) against the time integral of E <p, phi>, with refinement",
            Experiment::Density => "forward density vs conditional and unconditional Monte Carlo",
            Experiment::NormBounds => "C0 and X1 norms of L phi relative to the X0 norm of phi across refinement",
            Experiment::StochasticCalculus => "Clark reconstruction, Ito isometry and tower property on the tree",
        }
    }

    /// Whether the experiment runs on a refinement ladder.
    pub fn uses_ladder(&self) -> bool {
        matches!(
            self,
            Experiment::AdjointSuite | Experiment::Duality | Experiment::NormBounds
        )
    }

    pub fn check_config(&self, cfg: &ExperimentConfig) -> Result<()> {
        let needs_tail = matches!(
            self,
            Experiment::AdjointSuite | Experiment::Duality | Experiment::Density
        );
        if needs_tail && cfg.tree.d >= cfg.family.sigma.len() {
            return Err(LabError::Config(format!(
                "`{}` needs free noise components: d = {} must be smaller than d0 = {}",
                self.name(),
                cfg.tree.d,
                cfg.family.sigma.len()
            )));
        }
        match self {
            Experiment::FeynmanKacNonrandom => {
                cfg.mc()?;
                if cfg.coefficients()?.is_random() {
                    return Err(LabError::Config(format!(
                        "`{}` needs a nonrandom coefficient family",
                        self.name()
                    )));
                }
                points_inside(cfg)
            }
            Experiment::RepresentationRandom => {
                cfg.mc()?;
                points_inside(cfg)
            }
            Experiment::Density => {
                cfg.mc()?;
                let probe = cfg.probe();
                if probe.times.is_empty() {
                    return Err(LabError::Config("`probe.times` must list at least one time".into()));
                }
                if let Some(leaf) = probe.leaf {
                    let tree = cfg.setup(cfg.base_level())?.tree;
                    if leaf >= tree.n_leaves() {
                        return Err(LabError::Config(format!(
                            "leaf {leaf} out of range: the tree has {} leaves",
                            tree.n_leaves()
                        )));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        match self {
            Experiment::FeynmanKacNonrandom => feynman_kac::run(cfg),
            Experiment::RepresentationRandom => representation::run(cfg),
            Experiment::AdjointSuite => adjoint::run(cfg),
            Experiment::SolvabilityR => solvability::run(cfg),
            Experiment::Duality => duality::run(cfg),
            Experiment::Density => density::run(cfg),
            Experiment::NormBounds => norms::run(cfg),
            Experiment::StochasticCalculus => calculus::run(cfg),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or(())
    }
}

fn points_inside(cfg: &ExperimentConfig) -> Result<()> {
    let probe = cfg.probe();
    if probe.points.is_empty() {
        return Err(LabError::Config("`probe.points` must list at least one point".into()));
    }
    let domain = cfg.domain_spec()?;
    match probe.points.iter().find(|x| !(**x > domain.a && **x < domain.b)) {
        Some(x) => Err(LabError::Config(format!("probe point {x} is not inside the domain"))),
        None => Ok(()),
    }
}

pub(crate) fn model<'a>(cfg: &ExperimentConfig, s: &'a Setup) -> Result<Model<'a>> {
    Ok(Model::with_theta(&s.grid, &s.coeffs, &s.tree, cfg.solver.theta)?)
}

/// Piecewise-linear interpolation of a grid function.
pub(crate) fn interpolate(grid: &Grid, u: &[f64], x: f64) -> f64 {
    let a = grid.domain().a;
    let h = grid.dx();
    let s = ((x - a) / h).clamp(0.0, (grid.nx() - 1) as f64);
    let i = (s.floor() as usize).min(grid.nx() - 2);
    let w = s - i as f64;
    (1.0 - w) * u[i] + w * u[i + 1]
}

/// Centered Gaussian density, cut to zero at the boundary nodes and
/// renormalized to unit discrete mass.
pub(crate) fn gaussian_density(grid: &Grid, variance: f64) -> Vec<f64> {
    let mut p = grid.sample(|x| (-x * x / (2.0 * variance)).exp());
    let mass = grid.integral(&p);
    p.iter_mut().for_each(|v| *v /= mass);
    p.into_inner()
}

/// Rate `coarse / fine` of two errors, guarding exact zeros.
pub(crate) fn ratio(coarse: f64, fine: f64) -> f64 {
    if fine == 0.0 {
        if coarse == 0.0 {
            f64::NAN
        } else {
            f64::INFINITY
        }
    } else {
        coarse / fine
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bspde_core::grid::DomainSpec;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>(), Ok(e));
        }
        assert!("nope".parse::<Experiment>().is_err());
    }

    #[test]
    fn interpolation_is_exact_for_linear_data() {
        let grid = Grid::new(&DomainSpec::interval(0.0, 1.0, 1.0).unwrap(), 11).unwrap();
        let u: Vec<f64> = grid.nodes().iter().map(|x| 3.0 * x - 1.0).collect();
        for x in [0.0, 0.05, 0.37, 0.5, 1.0] {
            assert!((interpolate(&grid, &u, x) - (3.0 * x - 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn gaussian_density_has_unit_mass() {
        let grid = Grid::new(&DomainSpec::truncated_line(-4.0, 4.0, 1.0).unwrap(), 81).unwrap();
        let p = gaussian_density(&grid, 0.3);
        assert!((grid.integral(&p) - 1.0).abs() < 1e-14);
    }
}
