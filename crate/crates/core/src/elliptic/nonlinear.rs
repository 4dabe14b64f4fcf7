//! Fixed-point solve of `εa u'' + B(x, u, u')u + (d + λ)u = F(x, u, u') + f`.
//!
//! Each step solves the linear problem with `B(x, 0)` for
//! `g = [B(x,0) − B(x,V)]v + F(x,V) + f`, `V = (v, v')`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{lq_norm, CMat, CVec, C64};
use crate::sector::{derivative, Grid, GridFunction};

use super::fd::{apply_operator, factor_operator, finish_solution, interior_norm, FactoredOperator};
use super::{EllipticProblem, Solution};

pub type StateMatrixFn = Arc<dyn Fn(f64, &[C64], &[C64]) -> CMat + Send + Sync>;
pub type StateVectorFn = Arc<dyn Fn(f64, &[C64], &[C64]) -> Vec<C64> + Send + Sync>;

#[derive(Clone)]
pub struct NonlinearProblem {
    /// Linear problem with `A(x) = B(x, 0)`.
    pub base: EllipticProblem,
    pub b: StateMatrixFn,
    pub nonlinearity: StateVectorFn,
    pub f: GridFunction,
    /// Radius of the ball the iteration is expected to stay in.
    pub radius: f64,
    /// `r ↦ L(r)`, the Lipschitz bound of `U ↦ B(x, U)` on the ball of radius `r`.
    pub lipschitz: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// `L_p` bounds on the growth and Lipschitz functions of `F`.
    pub h1: f64,
    pub h2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlinearStep {
    pub iteration: usize,
    pub gap: f64,
    pub factor: Option<f64>,
    pub observed_radius: f64,
    pub prerequisite: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlinearTrace {
    pub steps: Vec<NonlinearStep>,
    /// Fitted constant of `‖w‖_Y ≤ C₀‖g‖` for the linear problem.
    pub c0: f64,
    pub converged: bool,
    pub nonlinear_residual: f64,
}

impl NonlinearTrace {
    pub fn factors(&self) -> Vec<f64> {
        self.steps.iter().filter_map(|s| s.factor).collect()
    }
}

/// `‖w‖ + ‖w'‖ + ‖w''‖ + ‖Aw‖` in `L_p(ℓ_q)`.
pub fn y_norm(problem: &EllipticProblem, grid: &Grid, w: &GridFunction) -> Result<f64> {
    let (p, q) = (problem.p(), problem.q);
    let d1 = derivative(grid, w, 1)?;
    let d2 = derivative(grid, w, 2)?;
    let pts = grid.points();
    let mut aw = GridFunction::zeros(w.n_points(), w.dim);
    for (k, &x) in pts.iter().enumerate() {
        let v = problem.op.at(x) * CVec::from_column_slice(w.at(k));
        aw.at_mut(k).copy_from_slice(v.as_slice());
    }
    Ok(w.norm(grid, p, q) + d1.norm(grid, p, q) + d2.norm(grid, p, q) + aw.norm(grid, p, q))
}

/// Largest `‖w‖_Y / ‖g‖` over a panel of bumps and smoothed random fields.
fn estimate_c0(problem: &EllipticProblem, grid: &Grid, op: &FactoredOperator) -> Result<f64> {
    let pts = grid.points();
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    let n = problem.dim;
    let mut panel = Vec::new();
    for (i, width) in [0.05, 0.2, 1.0].iter().enumerate() {
        for j in 0..3 {
            let c = lo + (hi - lo) * (j as f64 + 1.0) / 4.0;
            let w = width * (hi - lo);
            panel.push(GridFunction::from_fn(grid, n, |x| {
                let e = (-((x - c) / w).powi(2)).exp();
                (0..n).map(|k| C64::new(e, 0.1 * (i + k) as f64 * e)).collect()
            }));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0);
    for _ in 0..3 {
        let mut v: Vec<C64> = (0..pts.len() * n)
            .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        for _ in 0..4 {
            let prev = v.clone();
            for k in 1..pts.len() - 1 {
                for c in 0..n {
                    v[k * n + c] = (prev[(k - 1) * n + c] + prev[k * n + c] * 2.0 + prev[(k + 1) * n + c]) / 4.0;
                }
            }
        }
        panel.push(GridFunction::from_values(n, v));
    }
    let mut c0 = 0.0f64;
    for g in &panel {
        let den = interior_norm(grid, g, problem.p(), problem.q);
        if den == 0.0 {
            continue;
        }
        let w = op.solve(g);
        c0 = c0.max(y_norm(problem, grid, &w)? / den);
    }
    Ok(c0)
}

fn rhs_of(np: &NonlinearProblem, grid: &Grid, v: &GridFunction, dv: &GridFunction) -> GridFunction {
    let n = v.dim;
    let zero = vec![C64::new(0.0, 0.0); n];
    let mut g = GridFunction::zeros(v.n_points(), n);
    for (k, x) in grid.points().into_iter().enumerate() {
        let (vk, dk) = (v.at(k), dv.at(k));
        let b0 = (np.b)(x, &zero, &zero);
        let bv = (np.b)(x, vk, dk);
        let lin = (b0 - bv) * CVec::from_column_slice(vk);
        let fx = (np.nonlinearity)(x, vk, dk);
        for c in 0..n {
            g.at_mut(k)[c] = lin[c] + fx[c] + np.f.at(k)[c];
        }
    }
    g
}

fn observed_radius(v: &GridFunction, dv: &GridFunction, q: f64) -> f64 {
    (0..v.n_points())
        .map(|k| lq_norm(v.at(k), q) + lq_norm(dv.at(k), q))
        .fold(0.0, f64::max)
}

/// Relative residual of the nonlinear equation over equation nodes.
pub fn nonlinear_residual(np: &NonlinearProblem, grid: &Grid, v: &GridFunction) -> Result<f64> {
    let dv = derivative(grid, v, 1)?;
    let lin = apply_operator(&np.base, grid, np.base.shift(), v)?;
    let g = rhs_of(np, grid, v, &dv);
    let r = lin.sub(&g);
    let (p, q) = (np.base.p(), np.base.q);
    let den = interior_norm(grid, &np.f, p, q);
    let num = interior_norm(grid, &r, p, q);
    Ok(if den > 0.0 { num / den } else { num })
}

/// Runs the iteration and always returns the trace, also on failure.
pub fn nonlinear_solve_traced(np: &NonlinearProblem, max_iter: usize, tol: f64) -> (Result<Solution>, NonlinearTrace) {
    let mut trace = NonlinearTrace { steps: Vec::new(), c0: f64::NAN, converged: false, nonlinear_residual: f64::NAN };
    let res = iterate(np, max_iter, tol, &mut trace);
    (res, trace)
}

pub fn nonlinear_solve(np: &NonlinearProblem, max_iter: usize, tol: f64) -> Result<(Solution, NonlinearTrace)> {
    let (res, trace) = nonlinear_solve_traced(np, max_iter, tol);
    res.map(|s| (s, trace))
}

fn iterate(np: &NonlinearProblem, max_iter: usize, tol: f64, trace: &mut NonlinearTrace) -> Result<Solution> {
    let base = &np.base;
    let grid = base.grid()?;
    base.validate(&grid)?;
    let n = base.dim;
    if np.f.dim != n || np.f.n_points() != grid.n_points() {
        return Err(Error::InvalidSpec("right-hand side does not match the grid".into()));
    }
    let zero = vec![C64::new(0.0, 0.0); n];
    for x in grid.points() {
        let a = base.op.at(x);
        let b0 = (np.b)(x, &zero, &zero);
        if (&b0 - &a).norm() > 1e-10 * (1.0 + a.norm()) {
            return Err(Error::InvalidSpec(format!("B(x, 0) differs from A(x) at x = {x}")));
        }
    }
    let op = factor_operator(base, &grid, base.shift())?;
    trace.c0 = estimate_c0(base, &grid, &op)?;
    let mut v = op.solve(&np.f);
    let mut prev_gap: Option<f64> = None;
    let mut rising = 0;
    for it in 1..=max_iter {
        let dv = derivative(&grid, &v, 1)?;
        let g = rhs_of(np, &grid, &v, &dv);
        let next = op.solve(&g);
        let gap = y_norm(base, &grid, &next.sub(&v))?;
        let dn = derivative(&grid, &next, 1)?;
        let r_obs = observed_radius(&next, &dn, base.q);
        let r = np.radius.max(r_obs);
        let prerequisite = trace.c0 * (2.0 * r * (np.lipschitz)(r) + np.h2);
        let factor = prev_gap.filter(|&p| p > 0.0).map(|p| gap / p);
        trace.steps.push(NonlinearStep { iteration: it, gap, factor, observed_radius: r_obs, prerequisite });
        if !(prerequisite < 1.0) {
            return Err(Error::NotContracting {
                reason: format!("C0*(2rL(r) + h2) = {prerequisite:.4} >= 1 at r = {r:.4}"),
                factors: trace.factors(),
            });
        }
        if factor.is_some_and(|f| f > 1.0) {
            rising += 1;
            if rising >= 3 {
                return Err(Error::NotContracting {
                    reason: "gap grew for 3 consecutive steps".into(),
                    factors: trace.factors(),
                });
            }
        } else {
            rising = 0;
        }
        let scale = y_norm(base, &grid, &next)?;
        v = next;
        if gap <= tol * scale.max(f64::MIN_POSITIVE) {
            trace.converged = true;
            trace.nonlinear_residual = nonlinear_residual(np, &grid, &v)?;
            let dv = derivative(&grid, &v, 1)?;
            let g = rhs_of(np, &grid, &v, &dv);
            return finish_solution(base, &grid, v, &g);
        }
        prev_gap = Some(gap);
    }
    Err(Error::MaxIterExceeded { max_iter, last_gap: prev_gap.unwrap_or(f64::NAN) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::solve_variable;
    use crate::sector::DomainSpec;

    fn cx(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn quadratic(amplitude: f64) -> NonlinearProblem {
        let base = EllipticProblem::new(DomainSpec::interval(1.0, 100), 1);
        let g = base.grid().unwrap();
        let f = GridFunction::scalar_from_fn(&g, |x| cx(amplitude * (std::f64::consts::PI * x).sin()));
        NonlinearProblem {
            base,
            b: Arc::new(|_, u, _| CMat::from_element(1, 1, cx(1.0) + u[0] * u[0] * 0.01)),
            nonlinearity: Arc::new(|_, _, _| vec![cx(0.0)]),
            f,
            radius: 0.0,
            lipschitz: Arc::new(|r| 0.02 * r),
            h1: 0.0,
            h2: 0.0,
        }
    }

    #[test]
    fn linear_case_is_stationary() {
        let mut np = quadratic(1.0);
        np.b = Arc::new(|_, _, _| CMat::from_element(1, 1, cx(1.0)));
        let (sol, trace) = nonlinear_solve(&np, 10, 1e-12).unwrap();
        let lin = solve_variable(&np.base, &np.f).unwrap();
        assert!(sol.u.sub(&lin.u).max_norm(2.0) < 1e-14);
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.steps[0].gap, 0.0);
    }

    #[test]
    fn quadratic_perturbation_converges() {
        let np = quadratic(1.0);
        let (sol, trace) = nonlinear_solve(&np, 50, 1e-13).unwrap();
        assert!(trace.converged);
        let factors = trace.factors();
        assert!(factors.iter().take(3).all(|&f| f < 0.1), "{factors:?}");
        // oracle: substitute the fixed point into the nonlinear equation
        let g = np.base.grid().unwrap();
        assert!(nonlinear_residual(&np, &g, &sol.u).unwrap() < 1e-8);
        assert!(trace.nonlinear_residual < 1e-8);
        for w in trace.steps.windows(2) {
            if let (Some(f), true) = (w[1].factor, w[0].gap > 0.0) {
                assert!(w[1].gap <= f * w[0].gap * (1.0 + 1e-6));
            }
        }
    }

    #[test]
    fn large_amplitude_is_not_contracting() {
        let mut found = false;
        for amp in [1.0, 10.0, 100.0, 1000.0] {
            match nonlinear_solve(&quadratic(amp), 100, 1e-12) {
                Ok(_) => continue,
                Err(Error::NotContracting { .. }) => {
                    found = true;
                    break;
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(found);
    }

    #[test]
    fn mismatched_base_operator_rejected() {
        let mut np = quadratic(1.0);
        np.b = Arc::new(|_, _, _| CMat::from_element(1, 1, cx(2.0)));
        assert!(matches!(nonlinear_solve(&np, 5, 1e-10), Err(Error::InvalidSpec(_))));
    }
}
