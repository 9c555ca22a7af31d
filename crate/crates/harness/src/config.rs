//! Experiment configuration, read from a JSON document.

use std::path::{Path, PathBuf};

use bspde_core::backward::FixedPointOptions;
use bspde_core::coefficients::{make_family, CoefficientSet, FamilyParams};
use bspde_core::grid::{DomainKind, DomainSpec, Grid};
use bspde_core::tree::ScenarioTree;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::experiments::Experiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub family: FamilyConfig,
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub tree: TreeConfig,
    /// Refinement ladder for convergence studies; defaults to the base
    /// level followed by one halving of both steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<Level>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub name: String,
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub f0: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub kind: DomainKind,
    pub a: f64,
    pub b: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub d: usize,
    /// Total Wiener dimension; must equal the length of `family.sigma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d0: Option<usize>,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub nx: usize,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub paths: usize,
    pub dt_mc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let fp = FixedPointOptions::default();
        Self {
            theta: 1.0,
            tol: fp.tol,
            max_iter: fp.max_iter,
            damping: fp.damping,
        }
    }
}

impl SolverConfig {
    pub fn fixed_point(&self) -> FixedPointOptions {
        FixedPointOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            damping: self.damping,
        }
    }
}

/// Experiment-specific evaluation points and sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Spatial points at which `v(x, 0)` is compared.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<f64>,
    /// Times at which densities are compared.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<f64>,
    /// Leaf whose path is held fixed in conditional runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaf: Option<usize>,
    /// Number of random input fields.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Variance of the Gaussian initial density.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0_variance: Option<f64>,
    /// Multiplier applied to a calibrated discretization constant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety: Option<f64>,
}

/// Objects built from a config at one refinement level.
pub struct Setup {
    pub domain: DomainSpec,
    pub grid: Grid,
    pub tree: ScenarioTree,
    pub coeffs: CoefficientSet,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn experiment(&self) -> Result<Experiment> {
        self.experiment
            .parse()
            .map_err(|_| LabError::Config(format!("unknown experiment `{}`", self.experiment)))
    }

    pub fn family_params(&self) -> FamilyParams {
        let f = &self.family;
        FamilyParams {
            d: self.tree.d,
            sigma: f.sigma.clone(),
            f0: f.f0,
            kappa: f.kappa,
            a: f.a,
            eps: f.eps,
        }
    }

    pub fn coefficients(&self) -> Result<CoefficientSet> {
        Ok(make_family(&self.family.name, &self.family_params())?)
    }

    pub fn domain_spec(&self) -> Result<DomainSpec> {
        let d = self.domain;
        Ok(DomainSpec::new(d.kind, d.a, d.b, d.horizon)?)
    }

    pub fn levels(&self) -> Vec<Level> {
        self.levels.clone().unwrap_or_else(|| {
            vec![
                Level {
                    nx: self.grid.nx,
                    n_steps: self.tree.n_steps,
                },
                Level {
                    nx: 2 * self.grid.nx - 1,
                    n_steps: 2 * self.tree.n_steps,
                },
            ]
        })
    }

    pub fn setup(&self, level: Level) -> Result<Setup> {
        let domain = self.domain_spec()?;
        let grid = Grid::new(&domain, level.nx)?;
        let tree = ScenarioTree::new(self.tree.d, level.n_steps, domain.horizon)?;
        let coeffs = self.coefficients()?;
        Ok(Setup {
            domain,
            grid,
            tree,
            coeffs,
        })
    }

    pub fn base_level(&self) -> Level {
        Level {
            nx: self.grid.nx,
            n_steps: self.tree.n_steps,
        }
    }

    pub fn mc(&self) -> Result<McConfig> {
        let mc = self
            .mc
            .ok_or_else(|| LabError::Config(format!("experiment `{}` needs an `mc` block", self.experiment)))?;
        if mc.paths < 2 {
            return Err(LabError::Config("mc.paths must be at least 2".into()));
        }
        Ok(mc)
    }

    pub fn probe(&self) -> ProbeConfig {
        self.probe.clone().unwrap_or_default()
    }

    /// Checks everything that can be checked without running a solver.
    pub fn validate(&self) -> Result<()> {
        let exp = self.experiment()?;
        if let Some(d0) = self.tree.d0 {
            if d0 != self.family.sigma.len() {
                return Err(LabError::Config(format!(
                    "tree.d0 = {d0} but family.sigma has {} columns",
                    self.family.sigma.len()
                )));
            }
        }
        if self.tree.d > self.family.sigma.len() {
            return Err(LabError::Config(format!(
                "d = {} exceeds d0 = {}",
                self.tree.d,
                self.family.sigma.len()
            )));
        }
        if !(0.5..=1.0).contains(&self.solver.theta) {
            return Err(LabError::Config(format!("solver.theta = {} must lie in [0.5, 1]", self.solver.theta)));
        }
        if self.workers == Some(0) {
            return Err(LabError::Config("workers must be positive".into()));
        }
        if exp.uses_ladder() {
            let levels = self.levels();
            if levels.len() < 2 {
                return Err(LabError::Config(format!("`{}` needs at least two levels", exp.name())));
            }
            for level in &levels {
                self.setup(*level)?;
            }
        } else {
            self.setup(self.base_level())?;
        }
        exp.check_config(self)
    }
}
