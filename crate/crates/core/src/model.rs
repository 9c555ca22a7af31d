//! The discretized problem shared by the backward and forward solvers.

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::tree::ScenarioTree;
use crate::tridiag::{Tridiag, TridiagLu};

/// Grid, coefficients and tree, with the time-stepping weight `theta`
/// (`1` fully implicit, `1/2` Crank-Nicolson).
#[derive(Debug, Clone, Copy)]
pub struct Model<'a> {
    pub grid: &'a Grid,
    pub coeffs: &'a CoefficientSet,
    pub tree: &'a ScenarioTree,
    pub theta: f64,
}

impl<'a> Model<'a> {
    pub fn new(grid: &'a Grid, coeffs: &'a CoefficientSet, tree: &'a ScenarioTree) -> Result<Self> {
        Self::with_theta(grid, coeffs, tree, 1.0)
    }

    pub fn with_theta(
        grid: &'a Grid,
        coeffs: &'a CoefficientSet,
        tree: &'a ScenarioTree,
        theta: f64,
    ) -> Result<Self> {
        if coeffs.d() != tree.d() {
            return Err(Error::InvalidParameter(format!(
                "coefficients expect d = {} driving components, tree carries {}",
                coeffs.d(),
                tree.d()
            )));
        }
        if !(0.5..=1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!("theta must lie in [0.5, 1], got {theta}")));
        }
        if (grid.domain().horizon - tree.horizon()).abs() > 1e-12 * tree.horizon() {
            return Err(Error::InvalidParameter("grid and tree disagree on the horizon".into()));
        }
        Ok(Self {
            grid,
            coeffs,
            tree,
            theta,
        })
    }

    pub fn nx(&self) -> usize {
        self.grid.nx()
    }

    pub fn d(&self) -> usize {
        self.tree.d()
    }

    pub fn dt(&self) -> f64 {
        self.tree.dt()
    }

    /// `A` (or `A*` when `adjoint`) at a node, on interior unknowns.
    pub fn generator(&self, level: usize, node: usize, adjoint: bool) -> Result<Tridiag> {
        let a = self.grid.generator(
            self.coeffs,
            self.tree.time(level),
            self.tree.omega(level, node),
        )?;
        Ok(if adjoint { a.transpose() } else { a })
    }

    /// Step operators at a node for the theta scheme.
    pub fn step_ops(&self, level: usize, node: usize, adjoint: bool) -> Result<StepOps> {
        let a = self.generator(level, node, adjoint)?;
        let dt = self.dt();
        let lu = a.identity_plus(-self.theta * dt).factorize()?;
        let explicit = (self.theta < 1.0).then(|| a.identity_plus((1.0 - self.theta) * dt));
        Ok(StepOps { lu, explicit })
    }

    /// `beta_j` over the grid at a node.
    pub fn beta_profile(&self, level: usize, node: usize, j: usize) -> Vec<f64> {
        let t = self.tree.time(level);
        let omega = self.tree.omega(level, node);
        self.grid
            .nodes()
            .iter()
            .map(|&x| self.coeffs.beta(x, t, omega, j))
            .collect()
    }

    /// `D(beta_j u)`, centered, zero on the boundary.
    pub fn div_beta(&self, level: usize, node: usize, j: usize, u: &[f64], out: &mut [f64]) {
        let beta = self.beta_profile(level, node, j);
        let bu: Vec<f64> = beta.iter().zip(u).map(|(b, v)| b * v).collect();
        self.grid.centered_difference(&bu, out);
    }
}

/// `(I - theta dt A)^{-1}` and `I + (1 - theta) dt A` at one node.
#[derive(Debug, Clone)]
pub struct StepOps {
    lu: TridiagLu,
    explicit: Option<Tridiag>,
}

impl StepOps {
    /// Replaces the interior of `u` by `(I + (1 - theta) dt A) u`.
    pub fn apply_explicit(&self, u: &mut [f64]) {
        if let Some(e) = &self.explicit {
            let n = u.len();
            let src = u[1..n - 1].to_vec();
            e.apply(&src, &mut u[1..n - 1]);
        }
    }

    /// Replaces the interior of `u` by `(I - theta dt A)^{-1} u`; boundary
    /// entries are set to zero.
    pub fn solve(&self, u: &mut [f64]) {
        let n = u.len();
        self.lu.solve_in_place(&mut u[1..n - 1]);
        u[0] = 0.0;
        u[n - 1] = 0.0;
    }

    /// `(I - theta dt A)^{-1} (I + (1 - theta) dt A) u`.
    pub fn propagate(&self, u: &mut [f64]) {
        self.apply_explicit(u);
        self.solve(u);
    }
}
