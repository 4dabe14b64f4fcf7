//! Parabolic problems in `(x, y) ∈ σ × (0, 1)` whose `y`-operator
//! `A = a₁∂²_y + b₁∂_y + c` carries Wentzell–Robin conditions
//! `(Au)(j) + α₀ⱼu(j) + α₁ⱼu'(j) = 0` at `y = j ∈ {0, 1}`.
//!
//! The evolution solved is `u_t + a u_xx − Au + d u = f`, with the sign of `A`
//! chosen so that `a₁ ≥ δ > 0` gives a forward parabolic problem.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{BandMatrix, CMat, C64, ZERO};
use crate::operator::MatrixOperator;
use crate::sector::{build_grid, characteristic_roots, one_sided_stencil, BoundaryConditionSet, DomainSpec, EndKind, Grid, PieceEnd};

use super::{outer_norm, uniform_times};

pub type Field3 = Arc<dyn Fn(f64, f64, f64) -> C64 + Send + Sync>;

pub fn field(f: impl Fn(f64, f64, f64) -> C64 + Send + Sync + 'static) -> Field3 {
    Arc::new(f)
}

/// The `y`-direction operator on `M + 1` nodes of `[0, 1]`.
#[derive(Clone)]
pub struct WentzellOperator {
    pub m: usize,
    pub a1: Field3,
    pub b1: Field3,
    pub c: Field3,
    /// `alpha[i][j]` multiplies `u^{(i)}` at `y = j`.
    pub alpha: [[C64; 2]; 2],
    /// Lower bound required of `Re a₁`.
    pub delta: f64,
}

impl std::fmt::Debug for WentzellOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WentzellOperator").field("m", &self.m).field("alpha", &self.alpha).field("delta", &self.delta).finish()
    }
}

impl WentzellOperator {
    pub fn hy(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.m).map(|j| j as f64 * self.hy()).collect()
    }

    fn matrix(&self, t: f64, x: f64, robin: bool) -> Result<CMat> {
        if self.m < 8 {
            return Err(Error::InvalidSpec(format!("M = {} < 8", self.m)));
        }
        let n = self.m + 1;
        let h = self.hy();
        let ys = self.nodes();
        let mut out = CMat::zeros(n, n);
        for (j, &y) in ys.iter().enumerate() {
            let a1 = (self.a1)(t, x, y);
            if !(a1.re >= self.delta) {
                return Err(Error::ConditionViolated { condition: format!("a1 >= {} at y = {y}", self.delta), x });
            }
            let b1 = (self.b1)(t, x, y);
            let c = (self.c)(t, x, y);
            if j > 0 && j < self.m {
                out[(j, j - 1)] += a1 / (h * h) - b1 / (2.0 * h);
                out[(j, j)] += c - a1 * 2.0 / (h * h);
                out[(j, j + 1)] += a1 / (h * h) + b1 / (2.0 * h);
                continue;
            }
            let (side, dir): (usize, isize) = if j == 0 { (0, 1) } else { (1, -1) };
            let at = |k: isize| (j as isize + dir * k) as usize;
            let d1 = [-3.0, 4.0, -1.0].map(|w| w * dir as f64 / (2.0 * h));
            let d2 = [2.0, -5.0, 4.0, -1.0].map(|w| w / (h * h));
            for (k, w) in d2.iter().enumerate() {
                out[(j, at(k as isize))] += a1 * *w;
            }
            let first = if robin { b1 + self.alpha[1][side] } else { b1 };
            for (k, w) in d1.iter().enumerate() {
                out[(j, at(k as isize))] += first * *w;
            }
            out[(j, j)] += if robin { c + self.alpha[0][side] } else { c };
        }
        Ok(out)
    }
}

/// The discretized `y`-operator at `(t, x)`: centered interior rows, and the boundary
/// functional (one-sided `A` plus Robin terms) in rows `0` and `M`.
pub fn build_wentzell_operator(w: &WentzellOperator, t: f64, x: f64) -> Result<MatrixOperator> {
    MatrixOperator::new(w.matrix(t, x, true)?, 2.0)
}

#[derive(Clone)]
pub struct WentzellProblem {
    pub operator: WentzellOperator,
    /// Coefficient of `∂²u/∂x²`.
    pub a: Field3,
    pub x_domain: DomainSpec,
    /// Conditions at the inner endpoints of `σ`, with unit weights.
    pub x_bc: BoundaryConditionSet,
    pub d: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub p: f64,
    pub f: Field3,
}

#[derive(Debug, Clone, Serialize)]
pub struct WentzellRun {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// One vector per time level, index `k·(M+1) + j` for node `(x_k, y_j)`.
    pub u: Vec<Vec<C64>>,
    /// `‖u_t‖`, `‖u_xx‖`, `‖u_yy‖`, `‖Au‖` in the `(p, p, 2)` mixed norm.
    pub terms: [f64; 4],
    pub rhs_norm: f64,
    pub ratio: f64,
    /// Per step, `max |Bⱼu|` over boundary rows divided by the largest boundary-row term sum.
    pub boundary_residuals: Vec<f64>,
}

struct Layout {
    grid: Grid,
    xs: Vec<f64>,
    ny: usize,
    /// Kind of each `x` node: `None` for equation nodes.
    x_constraint: Vec<Option<(usize, PieceEnd)>>,
}

fn layout(problem: &WentzellProblem) -> Result<Layout> {
    let grid = build_grid(&problem.x_domain)?;
    let xs = grid.points();
    let mut x_constraint = vec![None; xs.len()];
    for (pi, piece) in grid.pieces.iter().enumerate() {
        for end in [PieceEnd::Left, PieceEnd::Right] {
            x_constraint[piece.end_index(end)] = Some((pi, end));
        }
    }
    Ok(Layout { grid, xs, ny: problem.operator.m + 1, x_constraint })
}

struct StepSystem {
    band: BandMatrix,
    /// `y`-operator with Robin rows, per `x` node.
    w: Vec<CMat>,
}

fn assemble_step(problem: &WentzellProblem, lay: &Layout, t: f64, tau: f64) -> Result<StepSystem> {
    let ny = lay.ny;
    let size = lay.xs.len() * ny;
    let bw = 3 * ny;
    let mut band = BandMatrix::new(size, bw, bw);
    let mut ws = Vec::with_capacity(lay.xs.len());
    let ys = problem.operator.nodes();
    let m = problem.operator.m;
    for (k, &x) in lay.xs.iter().enumerate() {
        let w = problem.operator.matrix(t, x, true)?;
        match lay.x_constraint[k] {
            Some((pi, end)) => {
                let piece = &lay.grid.pieces[pi];
                match piece.end_kind(end) {
                    EndKind::FarField => {
                        for j in 0..ny {
                            band.add(k * ny + j, k * ny + j, C64::new(1.0, 0.0));
                        }
                    }
                    EndKind::Boundary(site) => {
                        for (i, wt) in problem.x_bc.weights(site, 1.0).into_iter().enumerate() {
                            for (kk, s) in one_sided_stencil(piece, end, i)? {
                                for j in 0..ny {
                                    band.add(k * ny + j, kk * ny + j, wt * s);
                                }
                            }
                        }
                    }
                }
            }
            None => {
                let hx = lay.grid.pieces.iter().find(|p| k >= p.offset && k < p.offset + p.n_points).map(|p| p.h).unwrap_or(1.0);
                for j in 0..ny {
                    let r = k * ny + j;
                    if j == 0 || j == m {
                        for l in 0..ny {
                            if w[(j, l)] != ZERO {
                                band.add(r, k * ny + l, w[(j, l)]);
                            }
                        }
                        continue;
                    }
                    let a = (problem.a)(t, x, ys[j]);
                    characteristic_roots(a)?.require_admissible()?;
                    let ca = a / (hx * hx);
                    band.add(r, (k - 1) * ny + j, ca);
                    band.add(r, (k + 1) * ny + j, ca);
                    band.add(r, r, C64::new(1.0 / tau + problem.d, 0.0) - ca * 2.0);
                    for l in (j - 1)..=(j + 1) {
                        band.add(r, k * ny + l, -w[(j, l)]);
                    }
                }
            }
        }
        ws.push(w);
    }
    Ok(StepSystem { band, w: ws })
}

/// Inner `L₂` in `y`, then `L_p` in `x` (grid quadrature), per level.
fn level_norm(v: &[C64], wx: &[f64], wy: &[f64], p: f64) -> f64 {
    let ny = wy.len();
    let mut s = 0.0;
    for (k, wk) in wx.iter().enumerate() {
        let inner: f64 = (0..ny).map(|j| wy[j] * v[k * ny + j].norm_sqr()).sum::<f64>().sqrt();
        s += wk * inner.powf(p);
    }
    s.powf(1.0 / p)
}

fn y_weights(ny: usize, h: f64) -> Vec<f64> {
    (0..ny).map(|j| if j == 0 || j + 1 == ny { 0.5 * h } else { h }).collect()
}

/// Implicit Euler in time on the tensor grid, with a residual audit of the boundary
/// rows after every step and the four-term coercive ratio at the end.
pub fn run_wentzell_mixed(problem: &WentzellProblem) -> Result<WentzellRun> {
    if !(problem.d >= 0.0 && problem.d.is_finite()) {
        return Err(Error::InvalidSpec(format!("d = {} must be nonnegative", problem.d)));
    }
    if !(problem.t_final > 0.0) || problem.n_steps == 0 {
        return Err(Error::InvalidSpec("need T > 0 and at least one step".into()));
    }
    if !(problem.p > 1.0 && problem.p.is_finite()) {
        return Err(Error::InvalidSpec(format!("p = {} must be in (1, inf)", problem.p)));
    }
    let lay = layout(problem)?;
    if lay.grid.spec.has_boundary_at_zero() || lay.grid.spec.has_boundary_at_b() {
        problem.x_bc.validate()?;
    }
    let ny = lay.ny;
    let m = problem.operator.m;
    let ys = problem.operator.nodes();
    let tau = problem.t_final / problem.n_steps as f64;
    let times = uniform_times(problem.t_final, problem.n_steps);
    let size = lay.xs.len() * ny;
    let forcing = |t: f64| -> Vec<C64> {
        let mut v = vec![ZERO; size];
        for (k, &x) in lay.xs.iter().enumerate() {
            if lay.x_constraint[k].is_some() {
                continue;
            }
            for j in 1..m {
                v[k * ny + j] = (problem.f)(t, x, ys[j]);
            }
        }
        v
    };
    let mut levels = vec![vec![ZERO; size]];
    let mut forcings = vec![forcing(0.0)];
    let mut boundary_residuals = Vec::with_capacity(problem.n_steps);
    for step in 1..=problem.n_steps {
        let t = times[step];
        let sys = assemble_step(problem, &lay, t, tau)?;
        let fv = forcing(t);
        let prev = &levels[step - 1];
        let mut rhs = fv.clone();
        for k in 0..lay.xs.len() {
            if lay.x_constraint[k].is_some() {
                continue;
            }
            for j in 1..m {
                rhs[k * ny + j] += prev[k * ny + j] / tau;
            }
        }
        let lu = sys.band.factor().map_err(|e| Error::StepSystemSingular { step, source: Box::new(e) })?;
        let next = lu.solve(&rhs);
        if next.iter().any(|z| !z.is_finite()) {
            return Err(Error::StepSystemSingular {
                step,
                source: Box::new(Error::SingularSystem { smallest_pivot: lu.smallest_pivot() }),
            });
        }
        let (mut worst, mut scale) = (0.0f64, 0.0f64);
        for (k, w) in sys.w.iter().enumerate() {
            if lay.x_constraint[k].is_some() {
                continue;
            }
            for j in [0, m] {
                let mut r = ZERO;
                let mut s = 0.0;
                for l in 0..ny {
                    let term = w[(j, l)] * next[k * ny + l];
                    r += term;
                    s += term.norm();
                }
                worst = worst.max(r.norm());
                scale = scale.max(s);
            }
        }
        boundary_residuals.push(if scale > 0.0 { worst / scale } else { 0.0 });
        levels.push(next);
        forcings.push(fv);
    }
    let wx = lay.grid.weights();
    let wy = y_weights(ny, problem.operator.hy());
    let p = problem.p;
    let mut norms = vec![Vec::with_capacity(levels.len()); 5];
    for (n, u) in levels.iter().enumerate() {
        let t = times[n];
        let j = n.max(1);
        let ut: Vec<C64> = levels[j].iter().zip(&levels[j - 1]).map(|(a, b)| (a - b) / tau).collect();
        let mut uxx = vec![ZERO; size];
        let mut uyy = vec![ZERO; size];
        let mut au = vec![ZERO; size];
        let xs_grid = crate::sector::GridFunction::from_values(ny, u.clone());
        let dxx = crate::sector::derivative(&lay.grid, &xs_grid, 2)?;
        uxx.copy_from_slice(&dxx.values);
        let second = WentzellOperator {
            a1: field(|_, _, _| C64::new(1.0, 0.0)),
            b1: field(|_, _, _| ZERO),
            c: field(|_, _, _| ZERO),
            delta: 0.0,
            ..problem.operator.clone()
        }
        .matrix(t, 0.0, false)?;
        for (k, &x) in lay.xs.iter().enumerate() {
            let a = problem.operator.matrix(t, x, false)?;
            let col = nalgebra::DVector::from_column_slice(&u[k * ny..(k + 1) * ny]);
            uyy[k * ny..(k + 1) * ny].copy_from_slice((&second * &col).as_slice());
            au[k * ny..(k + 1) * ny].copy_from_slice((a * col).as_slice());
        }
        for (slot, v) in norms.iter_mut().zip([&ut, &uxx, &uyy, &au, &forcings[n]]) {
            slot.push(level_norm(v, &wx, &wy, p));
        }
    }
    let tn: Vec<f64> = norms.iter().map(|lv| outer_norm(&times, lv, p)).collect();
    let terms = [tn[0], tn[1], tn[2], tn[3]];
    let rhs_norm = tn[4];
    let ratio = if rhs_norm > 0.0 { terms.iter().sum::<f64>() / rhs_norm } else { f64::NAN };
    Ok(WentzellRun { times, x: lay.xs, y: ys, u: levels, terms, rhs_norm, ratio, boundary_residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cx(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn laplace_y(m: usize, alpha: [[C64; 2]; 2]) -> WentzellOperator {
        WentzellOperator {
            m,
            a1: field(|_, _, _| cx(1.0)),
            b1: field(|_, _, _| ZERO),
            c: field(|_, _, _| ZERO),
            alpha,
            delta: 0.5,
        }
    }

    #[test]
    fn boundary_row_is_one_sided_second_derivative() {
        let w = build_wentzell_operator(&laplace_y(8, [[ZERO; 2]; 2]), 0.0, 0.0).unwrap();
        let h2 = 64.0;
        let row: Vec<f64> = (0..4).map(|l| w.mat[(0, l)].re / h2).collect();
        assert_eq!(row, vec![2.0, -5.0, 4.0, -1.0]);
        let ones = vec![cx(1.0); 9];
        let out = w.apply(&ones);
        assert!(out.iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn robin_row_on_quadratic_samples() {
        let mut alpha = [[ZERO; 2]; 2];
        alpha[0][0] = cx(1.0);
        let w = build_wentzell_operator(&laplace_y(8, alpha), 0.0, 0.0).unwrap();
        let y2: Vec<C64> = (0..=8).map(|j| cx((j as f64 / 8.0).powi(2))).collect();
        let out = w.apply(&y2);
        for z in &out[..8] {
            assert!((z - cx(2.0)).norm() < 1e-10, "{out:?}");
        }
    }

    #[test]
    fn coarse_or_degenerate_operator_rejected() {
        assert!(build_wentzell_operator(&laplace_y(6, [[ZERO; 2]; 2]), 0.0, 0.0).is_err());
        let mut w = laplace_y(8, [[ZERO; 2]; 2]);
        w.a1 = field(|_, _, y| cx(if y > 0.6 { 0.1 } else { 1.0 }));
        assert!(matches!(build_wentzell_operator(&w, 0.0, 0.3), Err(Error::ConditionViolated { .. })));
    }

    /// `u* = g(t)e^{−x²}sin(πy)` on the truncated line, `a = −1`, `a₁ = 1`, `α = 0`.
    fn separable(nx: usize, m: usize, steps: usize, g: fn(f64) -> f64, dg: fn(f64) -> f64) -> WentzellProblem {
        let d = 1.0;
        WentzellProblem {
            operator: laplace_y(m, [[ZERO; 2]; 2]),
            a: field(|_, _, _| cx(-1.0)),
            x_domain: DomainSpec::full_line(6.0, nx),
            x_bc: BoundaryConditionSet::dirichlet(2.0),
            d,
            t_final: 1.0,
            n_steps: steps,
            p: 2.0,
            f: field(move |t, x, y| {
                let e = (-x * x).exp();
                let s = (PI * y).sin();
                let uxx = (4.0 * x * x - 2.0) * e * s;
                let uyy = -PI * PI * e * s;
                cx(dg(t) * e * s + g(t) * (-uxx - uyy + d * e * s))
            }),
        }
    }

    fn max_err(run: &WentzellRun, exact: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let ny = run.y.len();
        let mut e = 0.0f64;
        for (n, lv) in run.u.iter().enumerate() {
            for (k, &x) in run.x.iter().enumerate() {
                for (j, &y) in run.y.iter().enumerate() {
                    e = e.max((lv[k * ny + j] - exact(run.times[n], x, y)).norm());
                }
            }
        }
        e
    }

    #[test]
    fn zero_forcing_zero_solution() {
        let mut p = separable(30, 8, 3, |t| t, |_| 1.0);
        p.f = field(|_, _, _| ZERO);
        let r = run_wentzell_mixed(&p).unwrap();
        assert!(r.u.iter().all(|l| l.iter().all(|z| *z == ZERO)));
    }

    #[test]
    fn spatial_order_and_boundary_rows() {
        let exact = |t: f64, x: f64, y: f64| t * (-x * x).exp() * (PI * y).sin();
        let mut errs = Vec::new();
        let mut ratios = Vec::new();
        for (nx, m) in [(60, 8), (120, 16), (240, 32)] {
            let run = run_wentzell_mixed(&separable(nx, m, 3, |t| t, |_| 1.0)).unwrap();
            assert!(run.boundary_residuals.iter().all(|r| *r < 1e-8), "{:?}", run.boundary_residuals);
            errs.push(max_err(&run, exact));
            ratios.push(run.ratio);
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.8, "{errs:?}");
        }
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(lo > 0.0 && hi / lo <= 2.0, "{ratios:?}");
    }

    /// `u* = sin(t)·x(1 − x)·(1 + y)` on the interval, reproduced exactly in space.
    #[test]
    fn temporal_order() {
        let d = 1.0;
        let make = |steps: usize| WentzellProblem {
            operator: laplace_y(8, [[ZERO; 2]; 2]),
            a: field(|_, _, _| cx(-1.0)),
            x_domain: DomainSpec::interval(1.0, 20),
            x_bc: BoundaryConditionSet::dirichlet(2.0),
            d,
            t_final: 1.0,
            n_steps: steps,
            p: 2.0,
            f: field(move |t, x, y| {
                let s = x * (1.0 - x) * (1.0 + y);
                cx(t.cos() * s + t.sin() * (2.0 * (1.0 + y) + d * s))
            }),
        };
        let exact = |t: f64, x: f64, y: f64| t.sin() * x * (1.0 - x) * (1.0 + y);
        let errs: Vec<f64> = [10, 20, 40].iter().map(|&s| max_err(&run_wentzell_mixed(&make(s)).unwrap(), exact)).collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 0.9, "{errs:?}");
        }
    }

    #[test]
    fn robin_rows_hold_with_variable_coefficients() {
        let mut p = separable(40, 12, 4, |t| t, |_| 1.0);
        p.operator.a1 = field(|t, x, y| cx(1.0 + 0.3 * y + 0.1 * (t + x).sin().abs()));
        p.operator.b1 = field(|_, x, _| C64::new(0.2, 0.1 * x.cos()));
        p.operator.alpha = [[cx(1.0), cx(0.5)], [cx(0.2), cx(-0.3)]];
        p.x_domain = DomainSpec::exterior(1.0, 4.0, 40);
        let r = run_wentzell_mixed(&p).unwrap();
        assert!(r.boundary_residuals.iter().all(|v| *v < 1e-8));
        assert!(r.ratio.is_finite());
    }
}
