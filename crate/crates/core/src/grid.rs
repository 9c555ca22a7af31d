//! Spatial discretization: domains, uniform grids, the generator `A`, its
//! Lagrange adjoint `A*`, and the discrete `H^k` scales built from
//! `Lambda = sqrt(I - Laplacian)`.
//!
//! All grid functions carry a value on every node. Interior nodes are the
//! unknowns; boundary nodes hold the homogeneous Dirichlet value. The
//! discrete `L2(D)` inner product is `dx * sum` over interior nodes, and in
//! that inner product the matrix of `A*` is exactly the transpose of the
//! matrix of `A`.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::tridiag::Tridiag;

pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    /// Bounded interval with an absorbing Dirichlet boundary.
    Interval,
    /// Wide truncation of the whole line; the boundary is artificial.
    TruncatedLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub a: f64,
    pub b: f64,
    /// Time horizon `T`.
    pub horizon: f64,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, a: f64, b: f64, horizon: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidDomain(format!("need a < b, got a = {a}, b = {b}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidDomain(format!("horizon must be positive, got {horizon}")));
        }
        if kind == DomainKind::TruncatedLine && !(a < 0.0 && b > 0.0) {
            return Err(Error::InvalidDomain(
                "a truncated line must straddle the origin".into(),
            ));
        }
        Ok(Self { kind, a, b, horizon })
    }

    pub fn interval(a: f64, b: f64, horizon: f64) -> Result<Self> {
        Self::new(DomainKind::Interval, a, b, horizon)
    }

    pub fn truncated_line(a: f64, b: f64, horizon: f64) -> Result<Self> {
        Self::new(DomainKind::TruncatedLine, a, b, horizon)
    }

    /// Whether paths are killed on leaving `[a, b]`.
    pub fn absorbing(&self) -> bool {
        self.kind == DomainKind::Interval
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }
}

/// Uniform grid over `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: DomainSpec,
    dx: f64,
    nodes: Vec<f64>,
}

impl Grid {
    pub fn new(domain: &DomainSpec, nx: usize) -> Result<Self> {
        if nx < MIN_NODES {
            return Err(Error::GridTooSmall(nx));
        }
        let domain = DomainSpec::new(domain.kind, domain.a, domain.b, domain.horizon)?;
        let dx = (domain.b - domain.a) / (nx - 1) as f64;
        let mut nodes: Vec<f64> = (0..nx).map(|i| domain.a + i as f64 * dx).collect();
        nodes[nx - 1] = domain.b;
        Ok(Self { domain, dx, nodes })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn nx(&self) -> usize {
        self.nodes.len()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of interior unknowns.
    pub fn interior_len(&self) -> usize {
        self.nx() - 2
    }

    pub fn interior(&self) -> std::ops::Range<usize> {
        1..self.nx() - 1
    }

    pub fn boundary(&self) -> [usize; 2] {
        [0, self.nx() - 1]
    }

    pub fn zeros(&self) -> GridFunction {
        GridFunction(vec![0.0; self.nx()])
    }

    /// Samples `f` on interior nodes; boundary nodes are set to zero.
    pub fn sample(&self, mut f: impl FnMut(f64) -> f64) -> GridFunction {
        let mut u = self.zeros();
        for i in self.interior() {
            u[i] = f(self.nodes[i]);
        }
        u
    }

    pub(crate) fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.nx() {
            return Err(Error::ShapeMismatch(format!(
                "grid function has {} values, grid has {} nodes",
                u.len(),
                self.nx()
            )));
        }
        Ok(())
    }

    /// `<u, w>` in discrete `L2(D)`.
    pub fn dot(&self, u: &[f64], w: &[f64]) -> f64 {
        let r = self.interior();
        self.dx * u[r.clone()].iter().zip(&w[r]).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.dot(u, u).sqrt()
    }

    /// `integral of u` by the same quadrature.
    pub fn integral(&self, u: &[f64]) -> f64 {
        self.dx * u[self.interior()].iter().sum::<f64>()
    }

    /// Matrix of `A` on the interior unknowns for the given coefficient
    /// profiles (values on every node).
    pub fn generator_from_profiles(&self, drift: &[f64], diffusion: &[f64]) -> Tridiag {
        let m = self.interior_len();
        let mut a = Tridiag::zeros(m);
        let h = self.dx;
        let inv_2h = 0.5 / h;
        let inv_h2 = 1.0 / (h * h);
        for k in 0..m {
            let i = k + 1;
            let f = drift[i];
            let b = diffusion[i];
            if k > 0 {
                a.lower[k] = -f * inv_2h + 0.5 * b * inv_h2;
            }
            a.diag[k] = -b * inv_h2;
            if k + 1 < m {
                a.upper[k] = f * inv_2h + 0.5 * b * inv_h2;
            }
        }
        a
    }

    /// Matrix of `A` at `(t, omega)`.
    pub fn generator(&self, coeffs: &CoefficientSet, t: f64, omega: &[f64]) -> Result<Tridiag> {
        let mut f = vec![0.0; self.nx()];
        let mut b = vec![0.0; self.nx()];
        coeffs.profiles(self, t, omega, &mut f, &mut b)?;
        Ok(self.generator_from_profiles(&f, &b))
    }

    /// Centered first difference with zero boundary rows.
    pub fn centered_difference(&self, u: &[f64], out: &mut [f64]) {
        let n = self.nx();
        let inv_2h = 0.5 / self.dx;
        out[0] = 0.0;
        out[n - 1] = 0.0;
        for i in 1..n - 1 {
            out[i] = (u[i + 1] - u[i - 1]) * inv_2h;
        }
    }

    /// `<(I - Laplacian) u, u>`, the squared discrete `H^1` norm.
    pub fn h1_norm_sq(&self, u: &[f64]) -> f64 {
        let n = self.nx();
        let mut grad = 0.0;
        for i in 0..n - 1 {
            let l = if i == 0 { 0.0 } else { u[i] };
            let r = if i + 1 == n - 1 { 0.0 } else { u[i + 1] };
            grad += (r - l) * (r - l);
        }
        self.dot(u, u) + grad / self.dx
    }

    /// `<(I - Laplacian)^{-1} u, u>`, the squared discrete `H^-1` norm.
    pub fn hm1_norm_sq(&self, u: &[f64]) -> f64 {
        let m = self.interior_len();
        let inv_h2 = 1.0 / (self.dx * self.dx);
        let op = Tridiag {
            lower: (0..m).map(|k| if k > 0 { -inv_h2 } else { 0.0 }).collect(),
            diag: vec![1.0 + 2.0 * inv_h2; m],
            upper: (0..m).map(|k| if k + 1 < m { -inv_h2 } else { 0.0 }).collect(),
        };
        let mut w = u[self.interior()].to_vec();
        op.factorize()
            .expect("I - Laplacian is strictly diagonally dominant")
            .solve_in_place(&mut w);
        self.dx * w.iter().zip(&u[self.interior()]).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Values on every node of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction(pub Vec<f64>);

impl GridFunction {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn vanishes_on_boundary(&self) -> bool {
        self.0.first() == Some(&0.0) && self.0.last() == Some(&0.0)
    }
}

impl Deref for GridFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for GridFunction {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for GridFunction {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// `sum_i f_i du/dx_i + 1/2 sum_ij b_ij d2u/dx_i dx_j` by centered differences
/// on interior nodes; zero on boundary nodes. Boundary values of `u` enter
/// the stencils as given.
pub fn apply_a(
    grid: &Grid,
    coeffs: &CoefficientSet,
    u: &[f64],
    t: f64,
    omega: &[f64],
) -> Result<GridFunction> {
    grid.check(u)?;
    let n = grid.nx();
    let mut f = vec![0.0; n];
    let mut b = vec![0.0; n];
    coeffs.profiles(grid, t, omega, &mut f, &mut b)?;
    let h = grid.dx();
    let mut out = grid.zeros();
    for i in 1..n - 1 {
        let du = (u[i + 1] - u[i - 1]) / (2.0 * h);
        let d2u = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
        out[i] = f[i] * du + 0.5 * b[i] * d2u;
    }
    Ok(out)
}

/// `-d(f u)/dx + 1/2 d2(b u)/dx2` in the stencil form whose interior
/// matrix is the transpose of [`apply_a`]'s.
pub fn apply_a_star(
    grid: &Grid,
    coeffs: &CoefficientSet,
    u: &[f64],
    t: f64,
    omega: &[f64],
) -> Result<GridFunction> {
    grid.check(u)?;
    let n = grid.nx();
    let mut f = vec![0.0; n];
    let mut b = vec![0.0; n];
    coeffs.profiles(grid, t, omega, &mut f, &mut b)?;
    let h = grid.dx();
    let mut out = grid.zeros();
    for i in 1..n - 1 {
        let flux = (f[i + 1] * u[i + 1] - f[i - 1] * u[i - 1]) / (2.0 * h);
        let diff = (b[i + 1] * u[i + 1] - 2.0 * b[i] * u[i] + b[i - 1] * u[i - 1]) / (h * h);
        out[i] = -flux + 0.5 * diff;
    }
    Ok(out)
}

/// `Lambda^k` for `k` in `{-1, 0, 1}`, realized in the sine eigenbasis of
/// the discrete Dirichlet Laplacian.
#[derive(Debug, Clone)]
pub struct LambdaTransform {
    nx: usize,
    /// `sin(m pi i / (nx - 1))`, row `m - 1`, column `i - 1`.
    basis: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl LambdaTransform {
    pub fn new(grid: &Grid) -> Self {
        let nx = grid.nx();
        let n = nx - 1;
        let m = nx - 2;
        let h = grid.dx();
        let mut basis = vec![0.0; m * m];
        for mode in 1..=m {
            for i in 1..=m {
                basis[(mode - 1) * m + (i - 1)] =
                    (std::f64::consts::PI * (mode * i) as f64 / n as f64).sin();
            }
        }
        let eigenvalues = (1..=m)
            .map(|mode| {
                let s = (std::f64::consts::PI * mode as f64 / (2.0 * n as f64)).sin();
                4.0 * s * s / (h * h)
            })
            .collect();
        Self {
            nx,
            basis,
            eigenvalues,
        }
    }

    /// Eigenvalues of `-Laplacian`, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn apply(&self, u: &[f64], k: i32) -> Result<GridFunction> {
        if !(-1..=1).contains(&k) {
            return Err(Error::InvalidLambdaPower(k));
        }
        if u.len() != self.nx {
            return Err(Error::ShapeMismatch(format!(
                "grid function has {} values, transform expects {}",
                u.len(),
                self.nx
            )));
        }
        if k == 0 {
            return Ok(GridFunction(u.to_vec()));
        }
        let m = self.nx - 2;
        let norm = 2.0 / (self.nx - 1) as f64;
        let interior = &u[1..self.nx - 1];
        let coeffs: Vec<f64> = (0..m)
            .map(|mode| {
                let row = &self.basis[mode * m..(mode + 1) * m];
                let c: f64 = row.iter().zip(interior).map(|(s, v)| s * v).sum();
                c * norm * (1.0 + self.eigenvalues[mode]).powf(0.5 * k as f64)
            })
            .collect();
        let mut out = vec![0.0; self.nx];
        for (mode, c) in coeffs.iter().enumerate() {
            let row = &self.basis[mode * m..(mode + 1) * m];
            for (o, s) in out[1..self.nx - 1].iter_mut().zip(row) {
                *o += c * s;
            }
        }
        Ok(GridFunction(out))
    }
}

/// `Lambda^k u`.
pub fn lambda_pow(grid: &Grid, u: &[f64], k: i32) -> Result<GridFunction> {
    grid.check(u)?;
    LambdaTransform::new(grid).apply(u, k)
}
