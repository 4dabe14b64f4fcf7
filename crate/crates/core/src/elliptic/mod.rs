//! Linear and nonlinear solvers for `εa u'' + ε^{1/2}A₁u' + (A + A₀ + d + λ)u = f`
//! with separated ε-weighted boundary conditions.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::sector::{
    build_grid, characteristic_roots, BcSite, BoundaryConditionSet, DomainSpec, Grid, GridFunction,
};

pub mod fd;
pub mod green;
pub mod moving;
pub mod nonlinear;

pub use fd::{apply_operator, factor_operator, reduced_operator, solve_variable, FactoredOperator};
pub use green::{assemble_greens, solve_constant, GreenKernel};
pub use moving::{moving_domain_transform, BackMap};
pub use nonlinear::{nonlinear_solve, nonlinear_solve_traced, NonlinearProblem, NonlinearStep, NonlinearTrace};

pub type ScalarFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(f64) -> CMat + Send + Sync>;

/// Scalar coefficient of `x`.
#[derive(Clone)]
pub enum Coefficient {
    Constant(C64),
    Function(ScalarFn),
}

impl Coefficient {
    pub fn function(f: impl Fn(f64) -> C64 + Send + Sync + 'static) -> Self {
        Coefficient::Function(Arc::new(f))
    }

    pub fn at(&self, x: f64) -> C64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Function(f) => f(x),
        }
    }

    pub fn constant_value(&self) -> Option<C64> {
        match self {
            Coefficient::Constant(c) => Some(*c),
            Coefficient::Function(_) => None,
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Matrix coefficient of `x`.
#[derive(Clone)]
pub enum MatrixCoefficient {
    Constant(CMat),
    Function(MatrixFn),
}

impl MatrixCoefficient {
    pub fn function(f: impl Fn(f64) -> CMat + Send + Sync + 'static) -> Self {
        MatrixCoefficient::Function(Arc::new(f))
    }

    pub fn zeros(n: usize) -> Self {
        MatrixCoefficient::Constant(CMat::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        MatrixCoefficient::Constant(CMat::identity(n, n))
    }

    pub fn scalar(c: C64) -> Self {
        MatrixCoefficient::Constant(CMat::from_element(1, 1, c))
    }

    pub fn at(&self, x: f64) -> CMat {
        match self {
            MatrixCoefficient::Constant(m) => m.clone(),
            MatrixCoefficient::Function(f) => f(x),
        }
    }

    pub fn constant_value(&self) -> Option<&CMat> {
        match self {
            MatrixCoefficient::Constant(m) => Some(m),
            MatrixCoefficient::Function(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, MatrixCoefficient::Constant(m) if m.iter().all(|z| z.norm() == 0.0))
    }
}

impl fmt::Debug for MatrixCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixCoefficient::Constant(m) => write!(f, "Constant({}x{})", m.nrows(), m.ncols()),
            MatrixCoefficient::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// `εa u'' + ε^{1/2}A₁u' + (A + A₀ + d + λ)u = f` on a domain with separated boundary
/// conditions. `HalfLine` uses only `bc.alpha`; `FullLine` uses neither.
#[derive(Debug, Clone)]
pub struct EllipticProblem {
    pub domain: DomainSpec,
    pub dim: usize,
    pub a: Coefficient,
    pub op: MatrixCoefficient,
    pub a1: MatrixCoefficient,
    pub a0: MatrixCoefficient,
    pub eps: f64,
    pub lambda: C64,
    pub d: f64,
    pub bc: BoundaryConditionSet,
    /// `ℓ_q` index of the fibre space `ℂᴺ`.
    pub q: f64,
}

impl EllipticProblem {
    /// `−u'' + u` with Dirichlet conditions, `ε = 1`, `λ = d = 0`, `p = q = 2`.
    pub fn new(domain: DomainSpec, dim: usize) -> Self {
        Self {
            domain,
            dim,
            a: Coefficient::Constant(C64::new(-1.0, 0.0)),
            op: MatrixCoefficient::identity(dim),
            a1: MatrixCoefficient::zeros(dim),
            a0: MatrixCoefficient::zeros(dim),
            eps: 1.0,
            lambda: C64::new(0.0, 0.0),
            d: 0.0,
            bc: BoundaryConditionSet::dirichlet(2.0),
            q: 2.0,
        }
    }

    pub fn p(&self) -> f64 {
        self.bc.p
    }

    /// `d + λ`, the shift added to `A + A₀` in the elliptic solve.
    pub fn shift(&self) -> C64 {
        self.lambda + self.d
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(&self.domain)
    }

    pub fn bc_sites(&self) -> Vec<BcSite> {
        let mut s = Vec::new();
        if self.domain.has_boundary_at_zero() {
            s.push(BcSite::AtZero);
        }
        if self.domain.has_boundary_at_b() {
            s.push(BcSite::AtB);
        }
        s
    }

    /// Checks parameters and the pointwise conditions `a(x) ≠ 0`, `Re ωₖ(x) ≠ 0` on the grid.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidSpec(format!("eps = {} must be positive", self.eps)));
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(Error::InvalidSpec(format!("d = {} must be nonnegative", self.d)));
        }
        if self.dim == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if !self.bc_sites().is_empty() {
            self.bc.validate()?;
        }
        let n = self.dim;
        let check_dim = |m: &CMat, name: &str| {
            if m.nrows() != n || m.ncols() != n {
                Err(Error::InvalidSpec(format!("{name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())))
            } else {
                Ok(())
            }
        };
        for (k, x) in grid.points().into_iter().enumerate() {
            characteristic_roots(self.a.at(x))?.require_admissible()?;
            for (m, name) in [(&self.op, "A"), (&self.a1, "A1"), (&self.a0, "A0")] {
                if k == 0 || matches!(m, MatrixCoefficient::Function(_)) {
                    check_dim(&m.at(x), name)?;
                }
            }
        }
        Ok(())
    }

    pub fn has_constant_coefficients(&self) -> bool {
        self.a.constant_value().is_some()
            && self.op.constant_value().is_some()
            && self.a1.constant_value().is_some()
            && self.a0.constant_value().is_some()
    }
}

/// Grid solution with derivatives and audit quantities.
#[derive(Debug, Clone)]
pub struct Solution {
    pub u: GridFunction,
    pub du: GridFunction,
    pub d2u: GridFunction,
    /// `‖L u − f‖_p / ‖f‖_p` over equation nodes, with finite-difference derivatives of `u`
    /// (absolute when `f = 0`).
    pub residual_norm: f64,
    pub bc_residuals: Vec<(BcSite, Vec<C64>)>,
}

impl Solution {
    pub fn max_bc_residual(&self) -> f64 {
        self.bc_residuals
            .iter()
            .flat_map(|(_, v)| v.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }
}
