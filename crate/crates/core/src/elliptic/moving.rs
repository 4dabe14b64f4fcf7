//! Rescaling an interval problem on `(0, b(s))` to `(0, 1)`.

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::sector::{BoundaryConditionSet, DomainKind, DomainSpec, GridFunction};

use super::{Coefficient, EllipticProblem, MatrixCoefficient, Solution};

/// Maps a solution on `(0, 1)` back to `(0, b)` on the index-matched grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackMap {
    pub b: f64,
}

impl BackMap {
    pub fn point(&self, tau: f64) -> f64 {
        tau * self.b
    }

    /// `u(x) = ũ(x/b)`, `u' = ũ'/b`, `u'' = ũ''/b²`.
    pub fn map_solution(&self, sol: &Solution) -> Solution {
        let s1 = C64::new(1.0 / self.b, 0.0);
        let s2 = C64::new(1.0 / (self.b * self.b), 0.0);
        Solution {
            u: sol.u.clone(),
            du: sol.du.scaled(s1),
            d2u: sol.d2u.scaled(s2),
            residual_norm: sol.residual_norm,
            bc_residuals: sol.bc_residuals.clone(),
        }
    }

    /// Right-hand side on the unit interval: `f̃(τ) = f(τb)`, identical nodal values.
    pub fn pull_rhs(&self, f: &GridFunction) -> GridFunction {
        f.clone()
    }
}

fn scale_coeff(c: &Coefficient, b: f64, factor: f64) -> Coefficient {
    match c {
        Coefficient::Constant(v) => Coefficient::Constant(v * factor),
        Coefficient::Function(f) => {
            let f = f.clone();
            Coefficient::function(move |t| f(t * b) * factor)
        }
    }
}

fn scale_matrix(c: &MatrixCoefficient, b: f64, factor: f64) -> MatrixCoefficient {
    match c {
        MatrixCoefficient::Constant(m) => MatrixCoefficient::Constant(m * C64::new(factor, 0.0)),
        MatrixCoefficient::Function(f) => {
            let f = f.clone();
            MatrixCoefficient::function(move |t| f(t * b) * C64::new(factor, 0.0))
        }
    }
}

/// Substitutes `x = τ·b(s)`: the second-order coefficient picks up `b⁻²`, the
/// first-order coupling and order-`i` boundary coefficients pick up `b⁻ⁱ`.
pub fn moving_domain_transform(
    problem: &EllipticProblem,
    s: f64,
    b: impl Fn(f64) -> f64,
) -> Result<(EllipticProblem, BackMap)> {
    let bs = b(s);
    if !(bs > 0.0 && bs.is_finite()) {
        return Err(Error::InvalidSpec(format!("b(s) = {bs} must be positive")));
    }
    if problem.domain.kind != DomainKind::Interval {
        return Err(Error::InvalidSpec("moving-domain transform applies to interval problems".into()));
    }
    if (problem.domain.b - bs).abs() > 1e-12 * bs {
        return Err(Error::InvalidSpec(format!(
            "problem interval length {} differs from b(s) = {bs}",
            problem.domain.b
        )));
    }
    let scale_bc = |c: &[C64]| -> Vec<C64> {
        c.iter().enumerate().map(|(i, v)| v * bs.powi(-(i as i32))).collect()
    };
    let bc = BoundaryConditionSet::new(scale_bc(&problem.bc.alpha), scale_bc(&problem.bc.beta), problem.bc.p)?;
    let mut out = problem.clone();
    out.domain = DomainSpec::interval(1.0, problem.domain.n_cells);
    out.a = scale_coeff(&problem.a, bs, bs.powi(-2));
    out.op = scale_matrix(&problem.op, bs, 1.0);
    out.a1 = scale_matrix(&problem.a1, bs, 1.0 / bs);
    out.a0 = scale_matrix(&problem.a0, bs, 1.0);
    out.bc = bc;
    Ok((out, BackMap { b: bs }))
}
