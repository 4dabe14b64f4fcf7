//! Green's-kernel solver for constant coefficients.
//!
//! With `K = A + A₀ + d + λ`, `S = K^{1/2}` and `M = ω₁ε^{-1/2}S` (eigenvalues in the
//! left half-plane), the free-space kernel is `G₀(z) = C·exp(M|z|)`,
//! `C = (2εaM)⁻¹ = −ω₁S⁻¹/(2√ε)`. Each piece `[x_l, x_r]` adds the decaying
//! homogeneous solutions `exp(M(x − x_l))g₁ + exp(M(x_r − x))g₂`, fixed by the two end
//! conditions (boundary functional or far-field `u = 0`). The convolution with `f`
//! runs as a forward and a backward recursion that integrates the exponential exactly
//! against the piecewise-linear interpolant of `f`.

use crate::error::{Error, Result};
use crate::linalg::{checked_inverse, phi_functions, relative_pivot, CMat, CVec, C64, ZERO};
use crate::operator::{fractional_power, MatrixOperator};
use crate::sector::{characteristic_roots, CharacteristicRoots, EndKind, Grid, GridFunction, PieceEnd};

use super::fd::residual_norm;
use super::{EllipticProblem, Solution};

/// End condition `w₀u(x_e) + w₁u'(x_e)`.
#[derive(Debug, Clone, PartialEq)]
struct EndCondition {
    x: f64,
    weights: Vec<C64>,
}

impl EndCondition {
    fn apply(&self, val: &CMat, der: &CMat) -> CMat {
        let mut out = val * self.weights[0];
        if let Some(w1) = self.weights.get(1) {
            out += der * *w1;
        }
        out
    }
}

#[derive(Debug, Clone)]
struct PieceKernel {
    x_left: f64,
    x_right: f64,
    left: EndCondition,
    right: EndCondition,
    /// Inverse of the `2N×2N` end-condition system.
    sys_inv: CMat,
}

#[derive(Debug, Clone)]
pub struct GreenKernel {
    pub problem: EllipticProblem,
    pub grid: Grid,
    pub omega: CharacteristicRoots,
    /// `(A + A₀ + d + λ)^{1/2}`.
    pub a_lambda_sqrt: MatrixOperator,
    /// Generator of the decaying semigroup, `ω₁ε^{-1/2}S`.
    pub m: CMat,
    /// Free-space normalization `(2εaM)⁻¹`.
    pub c: CMat,
    pieces: Vec<PieceKernel>,
}

fn expm(m: &CMat, s: f64) -> CMat {
    if s == 0.0 {
        CMat::identity(m.nrows(), m.ncols())
    } else {
        (m * C64::new(s, 0.0)).exp()
    }
}

fn eigenvalues(m: &CMat) -> Vec<C64> {
    let t = m.clone().schur().unpack().1;
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Builds the kernel for a constant-coefficient problem with `A₁ = 0`.
pub fn assemble_greens(problem: &EllipticProblem) -> Result<GreenKernel> {
    let (Some(a), Some(op), Some(a0)) = (problem.a.constant_value(), problem.op.constant_value(), problem.a0.constant_value())
    else {
        return Err(Error::InvalidSpec("Green's kernel needs constant coefficients".into()));
    };
    if !problem.a1.is_zero() {
        return Err(Error::InvalidSpec("Green's kernel needs A1 = 0".into()));
    }
    let grid = problem.grid()?;
    problem.validate(&grid)?;
    let n = problem.dim;
    let omega = characteristic_roots(a)?;
    omega.require_admissible()?;
    let k = op + a0 + CMat::identity(n, n) * problem.shift();
    let s = fractional_power(&MatrixOperator::new(k, problem.q)?, 0.5)?;
    let se = problem.eps.sqrt();
    let m = &s.mat * (omega.omega1 / se);
    if eigenvalues(&m).iter().any(|z| z.re >= -1e-14 * z.norm().max(1e-300)) {
        return Err(Error::AdmissibilityViolation { root: omega.omega1 });
    }
    let s_inv = checked_inverse(&s.mat, 1e-14).ok_or(Error::SingularResolvent { lambda: problem.lambda })?;
    let c = s_inv * (-omega.omega1 / (2.0 * se));

    let condition = |x: f64, kind: EndKind| match kind {
        EndKind::FarField => EndCondition { x, weights: vec![C64::new(1.0, 0.0)] },
        EndKind::Boundary(site) => EndCondition { x, weights: problem.bc.weights(site, problem.eps) },
    };
    let mut pieces = Vec::with_capacity(grid.pieces.len());
    for p in &grid.pieces {
        let (xl, xr) = (p.x0, p.x_end());
        let left = condition(xl, p.end_kind(PieceEnd::Left));
        let right = condition(xr, p.end_kind(PieceEnd::Right));
        let mut sys = CMat::zeros(2 * n, 2 * n);
        for (j, cond) in [&left, &right].into_iter().enumerate() {
            let e1 = expm(&m, cond.x - xl);
            let e2 = expm(&m, xr - cond.x);
            let b1 = cond.apply(&e1, &(&m * &e1));
            let b2 = cond.apply(&e2, &(-(&m * &e2)));
            sys.view_mut((j * n, 0), (n, n)).copy_from(&b1);
            sys.view_mut((j * n, n), (n, n)).copy_from(&b2);
        }
        let piv = relative_pivot(&sys);
        if piv < 1e-12 {
            return Err(Error::SingularBoundarySystem { relative_pivot: piv });
        }
        let sys_inv = checked_inverse(&sys, 1e-14).ok_or(Error::SingularBoundarySystem { relative_pivot: piv })?;
        pieces.push(PieceKernel { x_left: xl, x_right: xr, left, right, sys_inv });
    }
    Ok(GreenKernel {
        problem: problem.clone(),
        grid,
        omega,
        a_lambda_sqrt: s,
        m,
        c,
        pieces,
    })
}

impl GreenKernel {
    /// Solved end-condition systems, one `2N×2N` block matrix per piece.
    pub fn boundary_weights(&self) -> Vec<&CMat> {
        self.pieces.iter().map(|p| &p.sys_inv).collect()
    }

    /// `G₀(z) = C·exp(M|z|)`.
    pub fn free_space(&self, z: f64) -> CMat {
        &self.c * expm(&self.m, z.abs())
    }

    /// Smallest decay rate `min −Re μ` over the eigenvalues `μ` of `M`.
    pub fn decay_rate(&self) -> f64 {
        eigenvalues(&self.m).iter().map(|z| -z.re).fold(f64::INFINITY, f64::min)
    }

    fn piece_of(&self, x: f64) -> Option<usize> {
        let tol = 1e-12 * (1.0 + x.abs());
        self.pieces.iter().position(|p| x >= p.x_left - tol && x <= p.x_right + tol)
    }

    /// Kernel `G(x, y)` of the truncated problem; zero when `x` and `y` lie in different pieces.
    pub fn kernel(&self, x: f64, y: f64) -> CMat {
        let n = self.problem.dim;
        let (Some(px), Some(py)) = (self.piece_of(x), self.piece_of(y)) else {
            return CMat::zeros(n, n);
        };
        if px != py {
            return CMat::zeros(n, n);
        }
        let p = &self.pieces[px];
        let mut rhs = CMat::zeros(2 * n, n);
        for (j, (cond, inward)) in [(&p.left, -1.0), (&p.right, 1.0)].into_iter().enumerate() {
            let z = cond.x - y;
            let sign = if z == 0.0 { inward } else { z.signum() };
            let val = self.free_space(z);
            let der = &self.c * &self.m * expm(&self.m, z.abs()) * C64::new(sign, 0.0);
            rhs.view_mut((j * n, 0), (n, n)).copy_from(&cond.apply(&val, &der));
        }
        let g = -(&p.sys_inv * rhs);
        let u1 = expm(&self.m, x - p.x_left);
        let u2 = expm(&self.m, p.x_right - x);
        self.free_space(x - y) + u1 * g.rows(0, n) + u2 * g.rows(n, n)
    }
}

/// Solves on the kernel's grid; `u'` is exact for the interpolated `f`, `u''` follows
/// from the equation.
pub fn solve_constant(kernel: &GreenKernel, f: &GridFunction) -> Result<Solution> {
    let problem = &kernel.problem;
    let grid = &kernel.grid;
    let n = problem.dim;
    if f.dim != n || f.n_points() != grid.n_points() {
        return Err(Error::InvalidSpec("right-hand side does not match the kernel grid".into()));
    }
    let m = &kernel.m;
    let c = &kernel.c;
    let cm = c * m;
    let mut u = GridFunction::zeros(grid.n_points(), n);
    let mut du = GridFunction::zeros(grid.n_points(), n);
    let fv = |k: usize| CVec::from_column_slice(f.at(k));
    for (piece, pk) in grid.pieces.iter().zip(&kernel.pieces) {
        let h = piece.h;
        let np = piece.n_points;
        let off = piece.offset;
        let hm = m * C64::new(h, 0.0);
        let eh = hm.exp();
        let (phi1, phi2) = phi_functions(&hm);
        let j0 = &phi1 * C64::new(h, 0.0);
        let j1 = (&phi1 - &phi2) * C64::new(h * h, 0.0);
        let w1 = &j1 / C64::new(h, 0.0);
        let w0 = &j0 - &w1;
        let mut fwd = vec![CVec::zeros(n); np];
        let mut bwd = vec![CVec::zeros(n); np];
        for k in 1..np {
            fwd[k] = &eh * &fwd[k - 1] + &w0 * fv(off + k) + &w1 * fv(off + k - 1);
        }
        for k in (0..np - 1).rev() {
            bwd[k] = &eh * &bwd[k + 1] + &w0 * fv(off + k) + &w1 * fv(off + k + 1);
        }
        let phi: Vec<CVec> = (0..np).map(|k| c * (&fwd[k] + &bwd[k])).collect();
        let dphi: Vec<CVec> = (0..np).map(|k| &cm * (&fwd[k] - &bwd[k])).collect();
        let end_val = |cond: &EndCondition, k: usize| -> CVec {
            let mut v = &phi[k] * cond.weights[0];
            if let Some(w) = cond.weights.get(1) {
                v += &dphi[k] * *w;
            }
            v
        };
        let mut rhs = CVec::zeros(2 * n);
        rhs.rows_mut(0, n).copy_from(&end_val(&pk.left, 0));
        rhs.rows_mut(n, n).copy_from(&end_val(&pk.right, np - 1));
        let g = -(&pk.sys_inv * rhs);
        let mut left = vec![CVec::zeros(n); np];
        let mut right = vec![CVec::zeros(n); np];
        left[0] = g.rows(0, n).into_owned();
        for k in 1..np {
            left[k] = &eh * &left[k - 1];
        }
        right[np - 1] = g.rows(n, n).into_owned();
        for k in (0..np - 1).rev() {
            right[k] = &eh * &right[k + 1];
        }
        for k in 0..np {
            let uk = &phi[k] + &left[k] + &right[k];
            let duk = &dphi[k] + m * (&left[k] - &right[k]);
            u.at_mut(off + k).copy_from_slice(uk.as_slice());
            du.at_mut(off + k).copy_from_slice(duk.as_slice());
        }
    }
    let a = problem.a.constant_value().expect("checked at assembly");
    let kmat = problem.op.at(0.0) + problem.a0.at(0.0) + CMat::identity(n, n) * problem.shift();
    let mut d2u = GridFunction::zeros(grid.n_points(), n);
    for k in 0..grid.n_points() {
        let v = (fv(k) - &kmat * CVec::from_column_slice(u.at(k))) / (a * problem.eps);
        d2u.at_mut(k).copy_from_slice(v.as_slice());
    }
    let mut bc_residuals = Vec::new();
    for site in problem.bc_sites() {
        let (pi, end) = grid.bc_end(site).expect("domain has this boundary");
        let k = grid.pieces[pi].end_index(end);
        let w = problem.bc.weights(site, problem.eps);
        let r: Vec<C64> = (0..n)
            .map(|cidx| {
                let mut v = w[0] * u.at(k)[cidx];
                if let Some(w1) = w.get(1) {
                    v += w1 * du.at(k)[cidx];
                }
                v
            })
            .collect();
        bc_residuals.push((site, r));
    }
    let residual_norm = residual_norm(problem, grid, problem.shift(), &u, f)?;
    Ok(Solution { u, du, d2u, residual_norm, bc_residuals })
}

impl GreenKernel {
    /// Far-field rows are part of the kernel; this returns zero for consistency checks.
    pub fn far_field_values(&self, sol: &Solution) -> Vec<C64> {
        let mut out = Vec::new();
        for p in &self.grid.pieces {
            for end in [PieceEnd::Left, PieceEnd::Right] {
                if p.end_kind(end) == EndKind::FarField {
                    out.extend_from_slice(sol.u.at(p.end_index(end)));
                }
            }
        }
        if out.is_empty() {
            out.push(ZERO);
        }
        out
    }
}
