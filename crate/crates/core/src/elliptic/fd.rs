//! Second-order finite differences on the block-banded system.
//!
//! Unknowns are ordered point-major, `u[k·N + c]`. Interior nodes of every piece
//! carry the differential equation; piece ends carry either the boundary functional
//! (one-sided stencils) or the far-field condition `u = 0`.

use crate::error::{Error, Result};
use crate::linalg::{checked_inverse, BandLu, BandMatrix, CMat, C64, ONE, ZERO};
use crate::sector::{
    boundary_functional, derivative, one_sided_stencil, EndKind, Grid, GridFunction, PieceEnd,
};

use super::{EllipticProblem, Solution};

/// Marks the nodes that carry the differential equation.
pub fn equation_mask(grid: &Grid) -> Vec<bool> {
    let mut m = Vec::with_capacity(grid.n_points());
    for p in &grid.pieces {
        for i in 0..p.n_points {
            m.push(i > 0 && i + 1 < p.n_points);
        }
    }
    m
}

/// Assembles the block system with `shift` added to `A + A₀` on equation rows.
pub fn assemble(problem: &EllipticProblem, grid: &Grid, shift: C64) -> Result<BandMatrix> {
    let n = problem.dim;
    let size = grid.n_points() * n;
    let bw = 3 * n - 1;
    let mut band = BandMatrix::new(size, bw, bw);
    let se = problem.eps.sqrt();
    for piece in &grid.pieces {
        let h = piece.h;
        for local in 1..piece.n_points - 1 {
            let k = piece.offset + local;
            let x = piece.x(local);
            let ca = problem.a.at(x) * (problem.eps / (h * h));
            let cb = problem.a1.at(x) * C64::new(se / (2.0 * h), 0.0);
            let diag = problem.op.at(x) + problem.a0.at(x);
            for c in 0..n {
                let r = k * n + c;
                for c2 in 0..n {
                    band.add(r, (k - 1) * n + c2, -cb[(c, c2)]);
                    band.add(r, (k + 1) * n + c2, cb[(c, c2)]);
                    band.add(r, k * n + c2, diag[(c, c2)]);
                }
                band.add(r, k * n + c, shift - ca * 2.0);
                band.add(r, (k - 1) * n + c, ca);
                band.add(r, (k + 1) * n + c, ca);
            }
        }
        for end in [PieceEnd::Left, PieceEnd::Right] {
            let k = piece.end_index(end);
            match piece.end_kind(end) {
                EndKind::FarField => {
                    for c in 0..n {
                        band.add(k * n + c, k * n + c, ONE);
                    }
                }
                EndKind::Boundary(site) => {
                    for (i, w) in problem.bc.weights(site, problem.eps).into_iter().enumerate() {
                        for (j, s) in one_sided_stencil(piece, end, i)? {
                            for c in 0..n {
                                band.add(k * n + c, j * n + c, w * s);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(band)
}

/// A factored discrete operator, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct FactoredOperator {
    pub grid: Grid,
    pub dim: usize,
    pub shift: C64,
    band: BandMatrix,
    lu: BandLu,
    mask: Vec<bool>,
}

impl FactoredOperator {
    /// Solves with `f` on equation rows and homogeneous constraint rows.
    pub fn solve(&self, f: &GridFunction) -> GridFunction {
        let mut rhs = f.values.clone();
        for (k, eq) in self.mask.iter().enumerate() {
            if !eq {
                rhs[k * self.dim..(k + 1) * self.dim].fill(ZERO);
            }
        }
        self.lu.solve_in_place(&mut rhs);
        GridFunction::from_values(self.dim, rhs)
    }

    /// Solves with an arbitrary full right-hand side (constraint rows included).
    pub fn solve_raw(&self, rhs: &[C64]) -> Vec<C64> {
        self.lu.solve(rhs)
    }

    /// The assembled matrix applied to `u`, all rows.
    pub fn matvec(&self, u: &[C64]) -> Vec<C64> {
        self.band.matvec(u)
    }

    pub fn equation_mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn smallest_pivot(&self) -> f64 {
        self.lu.smallest_pivot()
    }
}

pub fn factor_operator(problem: &EllipticProblem, grid: &Grid, shift: C64) -> Result<FactoredOperator> {
    let band = assemble(problem, grid, shift)?;
    let lu = band.clone().factor()?;
    Ok(FactoredOperator {
        grid: grid.clone(),
        dim: problem.dim,
        shift,
        band,
        lu,
        mask: equation_mask(grid),
    })
}

/// The discrete operator applied to `u` on equation nodes (zero elsewhere).
pub fn apply_operator(problem: &EllipticProblem, grid: &Grid, shift: C64, u: &GridFunction) -> Result<GridFunction> {
    let band = assemble(problem, grid, shift)?;
    let mut v = band.matvec(&u.values);
    for (k, eq) in equation_mask(grid).iter().enumerate() {
        if !eq {
            v[k * u.dim..(k + 1) * u.dim].fill(ZERO);
        }
    }
    Ok(GridFunction::from_values(u.dim, v))
}

/// `L_p(ℓ_q)` norm over equation nodes only.
pub fn interior_norm(grid: &Grid, u: &GridFunction, p: f64, q: f64) -> f64 {
    let w = grid.weights();
    let mask = equation_mask(grid);
    let s: f64 = (0..u.n_points())
        .filter(|&k| mask[k])
        .map(|k| w[k] * crate::linalg::lq_norm(u.at(k), q).powf(p))
        .sum();
    s.powf(1.0 / p)
}

/// Relative residual `‖L_h u − f‖ / ‖f‖` over equation nodes.
pub fn residual_norm(problem: &EllipticProblem, grid: &Grid, shift: C64, u: &GridFunction, f: &GridFunction) -> Result<f64> {
    let lu = apply_operator(problem, grid, shift, u)?;
    let r = lu.sub(f);
    let (p, q) = (problem.p(), problem.q);
    let num = interior_norm(grid, &r, p, q);
    let den = interior_norm(grid, f, p, q);
    Ok(if den > 0.0 { num / den } else { num })
}

pub fn bc_residuals_fd(problem: &EllipticProblem, grid: &Grid, u: &GridFunction) -> Result<Vec<(crate::sector::BcSite, Vec<C64>)>> {
    problem
        .bc_sites()
        .into_iter()
        .map(|s| Ok((s, boundary_functional(grid, u, &problem.bc, problem.eps, s)?)))
        .collect()
}

fn check_rhs(problem: &EllipticProblem, grid: &Grid, f: &GridFunction) -> Result<()> {
    if f.dim != problem.dim || f.n_points() != grid.n_points() {
        return Err(Error::InvalidSpec(format!(
            "right-hand side has {} points of dimension {}, grid has {} points of dimension {}",
            f.n_points(),
            f.dim,
            grid.n_points(),
            problem.dim
        )));
    }
    Ok(())
}

/// Finite-difference solve for variable coefficients.
pub fn solve_variable(problem: &EllipticProblem, f: &GridFunction) -> Result<Solution> {
    let grid = problem.grid()?;
    problem.validate(&grid)?;
    check_rhs(problem, &grid, f)?;
    let op = factor_operator(problem, &grid, problem.shift())?;
    let u = op.solve(f);
    finish_solution(problem, &grid, u, f)
}

pub(crate) fn finish_solution(problem: &EllipticProblem, grid: &Grid, u: GridFunction, f: &GridFunction) -> Result<Solution> {
    let du = derivative(grid, &u, 1)?;
    let d2u = derivative(grid, &u, 2)?;
    let residual_norm = residual_norm(problem, grid, problem.shift(), &u, f)?;
    let bc_residuals = bc_residuals_fd(problem, grid, &u)?;
    Ok(Solution { u, du, d2u, residual_norm, bc_residuals })
}

/// Dense operator on equation nodes with the constraint rows eliminated by Schur
/// complement. Returns the matrix and the equation node indices.
pub fn reduced_operator(problem: &EllipticProblem, grid: &Grid, shift: C64) -> Result<(CMat, Vec<usize>)> {
    let n = problem.dim;
    let dense = assemble(problem, grid, shift)?.to_dense();
    let mask = equation_mask(grid);
    let mut rows_i = Vec::new();
    let mut rows_b = Vec::new();
    for (k, &eq) in mask.iter().enumerate() {
        for c in 0..n {
            if eq {
                rows_i.push(k * n + c);
            } else {
                rows_b.push(k * n + c);
            }
        }
    }
    let pick = |r: &[usize], c: &[usize]| CMat::from_fn(r.len(), c.len(), |i, j| dense[(r[i], c[j])]);
    let cbb = pick(&rows_b, &rows_b);
    let cbi = pick(&rows_b, &rows_i);
    let oib = pick(&rows_i, &rows_b);
    let oii = pick(&rows_i, &rows_i);
    let cbb_inv = checked_inverse(&cbb, 1e-13).ok_or(Error::SingularSystem { smallest_pivot: 0.0 })?;
    let reduced = oii - oib * (cbb_inv * cbi);
    let nodes = (0..mask.len()).filter(|&k| mask[k]).collect();
    Ok((reduced, nodes))
}
