//! Time stepping of `du/dt + (O + d)u = f`, `u(0) = 0`, with mixed-norm reporting.

use serde::{Deserialize, Serialize};

use crate::elliptic::fd::{assemble, factor_operator, interior_norm};
use crate::elliptic::{reduced_operator, EllipticProblem};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::sector::{derivative, Grid, GridFunction};

pub mod system;
pub mod wentzell;

pub use system::{diagonal_convergence, solve_diagonal_system, DiagonalReport, DiagonalSystem};
pub use wentzell::{build_wentzell_operator, field, run_wentzell_mixed, Field3, WentzellOperator, WentzellProblem, WentzellRun};

/// Exponents of `(∫₀ᵀ (∫ ‖f‖^p dx)^{p₁/p} dt)^{1/p₁}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedNormSpec {
    pub p: f64,
    pub p1: f64,
}

impl MixedNormSpec {
    pub fn new(p: f64, p1: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("p1", p1)] {
            if !(v > 1.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} = {v} must be in (1, inf)")));
            }
        }
        Ok(Self { p, p1 })
    }
}

/// Time levels of a grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeFunction {
    pub times: Vec<f64>,
    pub slices: Vec<GridFunction>,
}

impl SpaceTimeFunction {
    pub fn from_fn(grid: &Grid, dim: usize, times: &[f64], f: impl Fn(f64, f64) -> Vec<C64>) -> Self {
        let slices = times.iter().map(|&t| GridFunction::from_fn(grid, dim, |x| f(t, x))).collect();
        Self { times: times.to_vec(), slices }
    }

    pub fn zeros(grid: &Grid, dim: usize, times: &[f64]) -> Self {
        Self { times: times.to_vec(), slices: vec![GridFunction::zeros(grid.n_points(), dim); times.len()] }
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self { times: self.times.clone(), slices: self.slices.iter().map(|s| s.scaled(c)).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            times: self.times.clone(),
            slices: self.slices.iter().zip(&other.slices).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(C64::new(-1.0, 0.0)))
    }
}

/// `n + 1` equispaced levels on `[0, T]`.
pub fn uniform_times(t_final: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps).map(|k| t_final * k as f64 / n_steps as f64).collect()
}

/// Trapezoid weights of a (possibly nonuniform) time grid.
pub(crate) fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let dt = times[k + 1] - times[k];
        w[k] += 0.5 * dt;
        w[k + 1] += 0.5 * dt;
    }
    w
}

/// Outer `L_{p₁}` in time of per-level values.
pub(crate) fn outer_norm(times: &[f64], inner: &[f64], p1: f64) -> f64 {
    let w = trapezoid_weights(times);
    w.iter().zip(inner).map(|(w, v)| w * v.powf(p1)).sum::<f64>().powf(1.0 / p1)
}

/// Inner integral over space with exponent `p`, outer over time with `p₁`, fibre norm `ℓ_q`.
pub fn mixed_norm(f: &SpaceTimeFunction, grid: &Grid, spec: MixedNormSpec, q: f64) -> f64 {
    let inner: Vec<f64> = f.slices.iter().map(|s| s.norm(grid, spec.p, q)).collect();
    outer_norm(&f.times, &inner, spec.p1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    ImplicitEuler,
    Trapezoidal,
}

/// `du/dt + (O + d)u = f` where `O` is the elliptic operator of `elliptic` without
/// its `λ` and `d`, which must be zero.
#[derive(Debug, Clone)]
pub struct ParabolicProblem {
    pub elliptic: EllipticProblem,
    pub d: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub norm: MixedNormSpec,
    /// Forcing on the levels `uniform_times(t_final, n_steps)`.
    pub f: SpaceTimeFunction,
    pub integrator: Integrator,
    /// Start value for stability studies; `None` is the zero state.
    pub initial: Option<GridFunction>,
}

impl ParabolicProblem {
    pub fn tau(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        uniform_times(self.t_final, self.n_steps)
    }

    fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::InvalidSpec(format!("d = {} must be positive", self.d)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) || self.n_steps == 0 {
            return Err(Error::InvalidSpec("need T > 0 and at least one step".into()));
        }
        if self.elliptic.lambda != C64::new(0.0, 0.0) || self.elliptic.d != 0.0 {
            return Err(Error::InvalidSpec("the spatial operator must carry lambda = d = 0".into()));
        }
        if self.f.slices.len() != self.n_steps + 1 {
            return Err(Error::InvalidSpec(format!(
                "forcing has {} levels, expected {}",
                self.f.slices.len(),
                self.n_steps + 1
            )));
        }
        let n = self.elliptic.dim;
        let bad = |g: &GridFunction| g.dim != n || g.n_points() != grid.n_points();
        if self.f.slices.iter().any(bad) || self.initial.as_ref().is_some_and(bad) {
            return Err(Error::InvalidSpec("forcing or initial state does not match the grid".into()));
        }
        self.elliptic.validate(grid)
    }
}

#[derive(Debug, Clone)]
pub struct ParabolicSolution {
    pub times: Vec<f64>,
    pub u: SpaceTimeFunction,
    /// `‖∂u/∂t‖`, `‖ε∂²u/∂x²‖`, `‖Au‖` in the mixed norm.
    pub terms: [f64; 3],
    pub rhs_norm: f64,
    /// Sum of `terms` over `rhs_norm` (NaN for zero forcing).
    pub ratio: f64,
}

/// Backward differences in time; level 0 copies level 1.
pub(crate) fn time_derivative(u: &SpaceTimeFunction) -> SpaceTimeFunction {
    let n = u.slices.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let j = k.max(1).min(n - 1);
        if j == 0 {
            out.push(u.slices[0].scaled(C64::new(0.0, 0.0)));
            continue;
        }
        let dt = u.times[j] - u.times[j - 1];
        out.push(u.slices[j].sub(&u.slices[j - 1]).scaled(C64::new(1.0 / dt, 0.0)));
    }
    SpaceTimeFunction { times: u.times.clone(), slices: out }
}

fn apply_pointwise(grid: &Grid, m: impl Fn(f64) -> CMat, u: &GridFunction) -> GridFunction {
    let mut out = GridFunction::zeros(u.n_points(), u.dim);
    for (k, x) in grid.points().into_iter().enumerate() {
        let v = m(x) * CVec::from_column_slice(u.at(k));
        out.at_mut(k).copy_from_slice(v.as_slice());
    }
    out
}

/// Marches the problem in time. Each step is one factored block solve; the matrix
/// is assembled once since the coefficients do not depend on `t`.
pub fn step_cauchy(pp: &ParabolicProblem) -> Result<ParabolicSolution> {
    let ep = &pp.elliptic;
    let grid = ep.grid()?;
    pp.validate(&grid)?;
    let tau = pp.tau();
    let times = pp.times();
    let mask = crate::elliptic::fd::equation_mask(&grid);
    let n = ep.dim;
    let zero_constraints = |v: &mut Vec<C64>| {
        for (k, eq) in mask.iter().enumerate() {
            if !eq {
                v[k * n..(k + 1) * n].fill(C64::new(0.0, 0.0));
            }
        }
    };
    let mut levels = Vec::with_capacity(pp.n_steps + 1);
    levels.push(pp.initial.clone().unwrap_or_else(|| GridFunction::zeros(grid.n_points(), n)));
    match pp.integrator {
        Integrator::ImplicitEuler => {
            let op = factor_operator(ep, &grid, C64::new(pp.d + 1.0 / tau, 0.0))
                .map_err(|e| Error::StepSystemSingular { step: 1, source: Box::new(e) })?;
            for step in 1..=pp.n_steps {
                let prev = &levels[step - 1];
                let rhs = pp.f.slices[step].add(&prev.scaled(C64::new(1.0 / tau, 0.0)));
                let next = op.solve(&rhs);
                if next.values.iter().any(|z| !z.is_finite()) {
                    return Err(Error::StepSystemSingular {
                        step,
                        source: Box::new(Error::SingularSystem { smallest_pivot: op.smallest_pivot() }),
                    });
                }
                levels.push(next);
            }
        }
        Integrator::Trapezoidal => {
            let op = factor_operator(ep, &grid, C64::new(pp.d + 2.0 / tau, 0.0))
                .map_err(|e| Error::StepSystemSingular { step: 1, source: Box::new(e) })?;
            let explicit = assemble(ep, &grid, C64::new(pp.d - 2.0 / tau, 0.0))?;
            for step in 1..=pp.n_steps {
                let prev = &levels[step - 1];
                let bu = explicit.matvec(&prev.values);
                let mut rhs: Vec<C64> = (0..bu.len())
                    .map(|i| pp.f.slices[step].values[i] + pp.f.slices[step - 1].values[i] - bu[i])
                    .collect();
                zero_constraints(&mut rhs);
                let next = op.solve_raw(&rhs);
                if next.iter().any(|z| !z.is_finite()) {
                    return Err(Error::StepSystemSingular {
                        step,
                        source: Box::new(Error::SingularSystem { smallest_pivot: op.smallest_pivot() }),
                    });
                }
                levels.push(GridFunction::from_values(n, next));
            }
        }
    }
    let u = SpaceTimeFunction { times: times.clone(), slices: levels };
    let q = ep.q;
    let ut = time_derivative(&u);
    let mut uxx = Vec::with_capacity(u.slices.len());
    let mut au = Vec::with_capacity(u.slices.len());
    for s in &u.slices {
        uxx.push(derivative(&grid, s, 2)?.scaled(C64::new(ep.eps, 0.0)));
        au.push(apply_pointwise(&grid, |x| ep.op.at(x), s));
    }
    let uxx = SpaceTimeFunction { times: times.clone(), slices: uxx };
    let au = SpaceTimeFunction { times: times.clone(), slices: au };
    let terms = [
        mixed_norm(&ut, &grid, pp.norm, q),
        mixed_norm(&uxx, &grid, pp.norm, q),
        mixed_norm(&au, &grid, pp.norm, q),
    ];
    let rhs_norm = mixed_norm(&pp.f, &grid, pp.norm, q);
    let ratio = if rhs_norm > 0.0 { terms.iter().sum::<f64>() / rhs_norm } else { f64::NAN };
    Ok(ParabolicSolution { times, u, terms, rhs_norm, ratio })
}

/// Smallest eigenvalue of the Hermitian part of `O_h + d` on equation nodes, in the
/// quadrature-weighted inner product. Positive means the field of values lies in the
/// right half-plane and implicit Euler steps are `L₂`-nonexpansive.
pub fn field_of_values_margin(problem: &EllipticProblem, d: f64) -> Result<f64> {
    let grid = problem.grid()?;
    let (o, nodes) = reduced_operator(problem, &grid, C64::new(d, 0.0))?;
    let w = grid.weights();
    let n = problem.dim;
    let s: Vec<f64> = nodes.iter().flat_map(|&k| std::iter::repeat_n(w[k].sqrt(), n)).collect();
    let scaled = CMat::from_fn(o.nrows(), o.ncols(), |r, c| o[(r, c)] * (s[r] / s[c]));
    let herm = (&scaled + scaled.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigenvalues();
    Ok(eig.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Weighted `L₂` norm over equation nodes, the norm in which the stability property holds.
pub fn level_norm(grid: &Grid, u: &GridFunction) -> f64 {
    interior_norm(grid, u, 2.0, 2.0)
}
