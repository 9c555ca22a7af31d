//! Random coefficient fields `f` (drift) and `beta` (diffusion columns).
//!
//! Randomness enters only through the value of the driving path at the
//! current tree node, so every builtin family is adapted by construction.
//! All builtin families have `beta` independent of `x` and `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::tree::ScenarioTree;

/// Threshold below which the tail block of `beta` counts as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Family {
    /// `f = f0`, nonrandom.
    Constant { f0: f64 },
    /// `f = kappa * tanh(omega_1(t))`, independent of `x`.
    DriftRandom { kappa: f64 },
    /// `f = a * sin(pi x) * (1 + eps * tanh(omega_1(t)))`.
    SpaceSmooth { a: f64, eps: f64 },
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Constant { .. } => "constant",
            Family::DriftRandom { .. } => "drift-random",
            Family::SpaceSmooth { .. } => "space-smooth",
        }
    }
}

/// Parameter record accepted by [`make_family`]. Fields not used by a
/// family are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    /// Number of driving components carried by the scenario tree.
    pub d: usize,
    /// Constant diffusion row `(sigma_1, ..., sigma_d0)`.
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

impl FamilyParams {
    pub fn new(d: usize, sigma: &[f64]) -> Self {
        Self {
            d,
            sigma: sigma.to_vec(),
            f0: 0.0,
            kappa: 0.0,
            a: 0.0,
            eps: 0.0,
        }
    }
}

/// Evaluable coefficient fields for a one-dimensional state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub family: Family,
    d: usize,
    sigma: Vec<f64>,
}

pub fn make_family(name: &str, params: &FamilyParams) -> Result<CoefficientSet> {
    let family = match name {
        "constant" => Family::Constant { f0: params.f0 },
        "drift-random" => Family::DriftRandom {
            kappa: params.kappa,
        },
        "space-smooth" => Family::SpaceSmooth {
            a: params.a,
            eps: params.eps,
        },
        other => return Err(Error::UnknownFamily(other.to_string())),
    };
    CoefficientSet::new(family, params.d, &params.sigma)
}

impl CoefficientSet {
    pub fn new(family: Family, d: usize, sigma: &[f64]) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::InvalidParameter("sigma must have at least one column".into()));
        }
        if d == 0 || d > sigma.len() {
            return Err(Error::InvalidParameter(format!(
                "driving dimension d = {d} must satisfy 1 <= d <= d0 = {}",
                sigma.len()
            )));
        }
        let scalars: Vec<f64> = match family {
            Family::Constant { f0 } => vec![f0],
            Family::DriftRandom { kappa } => vec![kappa],
            Family::SpaceSmooth { a, eps } => {
                if eps.abs() >= 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "space-smooth requires |eps| < 1, got {eps}"
                    )));
                }
                vec![a, eps]
            }
        };
        if scalars.iter().chain(sigma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("coefficient parameters must be finite".into()));
        }
        Ok(Self {
            family,
            d,
            sigma: sigma.to_vec(),
        })
    }

    /// Number of driving components that live on the tree.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Total number of Wiener components.
    pub fn d0(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Whether any coefficient depends on the driving path.
    pub fn is_random(&self) -> bool {
        match self.family {
            Family::Constant { .. } => false,
            Family::DriftRandom { kappa } => kappa != 0.0,
            Family::SpaceSmooth { a, eps } => a != 0.0 && eps != 0.0,
        }
    }

    pub fn drift_depends_on_x(&self) -> bool {
        matches!(self.family, Family::SpaceSmooth { a, .. } if a != 0.0)
    }

    /// `f(x, t, omega)` where `omega` holds the driving path value at the node.
    #[inline]
    pub fn drift(&self, x: f64, _t: f64, omega: &[f64]) -> f64 {
        match self.family {
            Family::Constant { f0 } => f0,
            Family::DriftRandom { kappa } => kappa * omega[0].tanh(),
            Family::SpaceSmooth { a, eps } => {
                a * (std::f64::consts::PI * x).sin() * (1.0 + eps * omega[0].tanh())
            }
        }
    }

    /// Column `j` (zero-based) of `beta`.
    #[inline]
    pub fn beta(&self, _x: f64, _t: f64, _omega: &[f64], j: usize) -> f64 {
        self.sigma[j]
    }

    /// `b = beta beta^T`.
    #[inline]
    pub fn diffusion(&self, x: f64, t: f64, omega: &[f64]) -> f64 {
        (0..self.d0()).map(|j| self.beta(x, t, omega, j).powi(2)).sum()
    }

    /// Smallest eigenvalue of the tail block product; zero when `d == d0`.
    pub fn tail_ellipticity(&self, x: f64, t: f64, omega: &[f64]) -> f64 {
        (self.d..self.d0()).map(|j| self.beta(x, t, omega, j).powi(2)).sum()
    }

    /// Fills drift and diffusion profiles over every grid node.
    pub fn profiles(
        &self,
        grid: &Grid,
        t: f64,
        omega: &[f64],
        drift: &mut [f64],
        diffusion: &mut [f64],
    ) -> Result<()> {
        for (i, &x) in grid.nodes().iter().enumerate() {
            let f = self.drift(x, t, omega);
            let b = self.diffusion(x, t, omega);
            if !f.is_finite() || !b.is_finite() {
                return Err(Error::NonFiniteCoefficient { x, t });
            }
            drift[i] = f;
            diffusion[i] = b;
        }
        Ok(())
    }
}

/// Sampled bounds of a coefficient set over a grid x tree lattice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Minimum eigenvalue of the tail block product (0 when `d == d0`).
    pub delta: f64,
    /// Minimum eigenvalue of `beta beta^T`.
    pub delta_b: f64,
    /// `sup |f|`.
    pub k1: f64,
    /// `sup |beta|` (Frobenius norm of the row).
    pub k2: f64,
    /// `sup |d beta / dx|` per spatial direction.
    pub k3: Vec<f64>,
    /// Finite-difference Lipschitz estimate of `f` in `x`.
    pub lipschitz_f: f64,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Samples the standing assumptions over all grid nodes and tree nodes.
///
/// With `require_superparabolic` set, a degenerate (or empty) tail block
/// is a failure.
pub fn validate(
    coeffs: &CoefficientSet,
    grid: &Grid,
    tree: &ScenarioTree,
    require_superparabolic: bool,
) -> ValidationReport {
    let mut delta = f64::INFINITY;
    let mut delta_b = f64::INFINITY;
    let mut k1 = 0.0_f64;
    let mut k2 = 0.0_f64;
    let mut k3 = 0.0_f64;
    let mut lipschitz = 0.0_f64;
    let mut non_finite = false;
    let xs = grid.nodes();
    let dx = grid.dx();
    let d0 = coeffs.d0();
    let mut beta_prev = vec![0.0; d0];

    for level in 0..=tree.n_steps() {
        let t = tree.time(level);
        for index in 0..tree.level_size(level) {
            let omega = tree.omega(level, index);
            let mut f_prev = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let f = coeffs.drift(x, t, omega);
                let mut norm2 = 0.0;
                for (j, prev) in beta_prev.iter_mut().enumerate() {
                    let bj = coeffs.beta(x, t, omega, j);
                    norm2 += bj * bj;
                    if i > 0 {
                        k3 = k3.max((bj - *prev).abs() / dx);
                    }
                    *prev = bj;
                }
                if !f.is_finite() || !norm2.is_finite() {
                    non_finite = true;
                    continue;
                }
                k1 = k1.max(f.abs());
                k2 = k2.max(norm2.sqrt());
                delta_b = delta_b.min(norm2);
                delta = delta.min(coeffs.tail_ellipticity(x, t, omega));
                if i > 0 {
                    lipschitz = lipschitz.max((f - f_prev).abs() / dx);
                }
                f_prev = f;
            }
        }
    }
    if coeffs.d() == coeffs.d0() {
        delta = 0.0;
    }

    let mut failures = Vec::new();
    if non_finite {
        failures.push("non-finite coefficient value".to_string());
    }
    if delta_b.is_nan() || delta_b <= 0.0 {
        failures.push(format!("beta beta^T degenerate (min eigenvalue {delta_b:e})"));
    }
    if require_superparabolic && delta < DEGENERACY_THRESHOLD {
        failures.push(format!("β̃ degenerate (min eigenvalue {delta:e})"));
    }
    ValidationReport {
        delta,
        delta_b,
        k1,
        k2,
        k3: vec![k3],
        lipschitz_f: lipschitz,
        passed: failures.is_empty(),
        failures,
    }
}
