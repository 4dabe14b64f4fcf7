//! `N`-component parabolic systems with diagonal `A(x) = diag(a_j(x))` and diagonal
//! zeroth- and first-order terms `b_0j`, `b_1j`.

use serde::Serialize;

use crate::elliptic::{Coefficient, MatrixCoefficient};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::sector::{derivative, Sector};

use super::{mixed_norm, step_cauchy, time_derivative, ParabolicProblem, ParabolicSolution, SpaceTimeFunction};

#[derive(Debug, Clone)]
pub struct DiagonalSystem {
    /// Diagonal entries `a_j`, one per component.
    pub a: Vec<Coefficient>,
    /// `b[i][j]` multiplies the `i`-th derivative of component `j`.
    pub b: [Vec<Coefficient>; 2],
    pub q: f64,
    /// Exponents `δ₀ ∈ (0, 1)`, `δ₁ ∈ (0, 1/2)` of the growth condition.
    pub delta: [f64; 2],
    /// Sector half-angle the `a_j` must stay in.
    pub phi: f64,
    /// Optional cap on the fitted growth constants.
    pub growth_bound: Option<f64>,
}

impl DiagonalSystem {
    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Constant `a_j` with no lower-order terms.
    pub fn uncoupled(a: &[C64], q: f64) -> Self {
        let n = a.len();
        let zero = vec![Coefficient::Constant(C64::new(0.0, 0.0)); n];
        Self {
            a: a.iter().map(|&v| Coefficient::Constant(v)).collect(),
            b: [zero.clone(), zero],
            q,
            delta: [0.5, 0.25],
            phi: std::f64::consts::FRAC_PI_2,
            growth_bound: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiagonalReport {
    pub solution: ParabolicSolution,
    /// `‖∂u/∂t‖`, `‖∂²u/∂x²‖`, `‖Au‖` with `ℓ_q` over components inside the mixed norm.
    pub terms: [f64; 3],
    pub ratio: f64,
    /// Fitted `C` in `|b_ij| ≤ C|a_j|^{1−i/2−δᵢ}` for `i = 0, 1`.
    pub growth_constants: [f64; 2],
    /// `max_x |a_1(x)⋯a_k(x)|` for `k = 1..N`.
    pub det_partial: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergencePoint {
    pub n: usize,
    pub ratio: f64,
}

fn diag_coefficient(entries: &[Coefficient], scale: f64) -> MatrixCoefficient {
    let consts: Option<Vec<C64>> = entries.iter().map(|c| c.constant_value()).collect();
    match consts {
        Some(v) => MatrixCoefficient::Constant(CMat::from_diagonal(&CVec::from_vec(v)) * C64::new(scale, 0.0)),
        None => {
            let entries = entries.to_vec();
            MatrixCoefficient::function(move |x| {
                let v: Vec<C64> = entries.iter().map(|c| c.at(x) * scale).collect();
                CMat::from_diagonal(&CVec::from_vec(v))
            })
        }
    }
}

/// Checks the sector and growth conditions on the grid and returns the growth constants.
pub fn check_conditions(sys: &DiagonalSystem, points: &[f64]) -> Result<[f64; 2]> {
    let n = sys.n();
    if n == 0 || sys.b.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidSpec("coefficient tables must have one entry per component".into()));
    }
    if !(sys.q > 1.0 && sys.q.is_finite()) {
        return Err(Error::InvalidSpec(format!("q = {} must be in (1, inf)", sys.q)));
    }
    for (i, &d) in sys.delta.iter().enumerate() {
        let top = 1.0 - i as f64 / 2.0;
        if !(d > 0.0 && d < top) {
            return Err(Error::InvalidSpec(format!("delta_{i} = {d} not in (0, {top})")));
        }
    }
    let sector = Sector::new(sys.phi)?;
    let mut growth = [0.0f64; 2];
    for &x in points {
        for j in 0..n {
            let aj = sys.a[j].at(x);
            if !sector.contains(aj) {
                return Err(Error::ConditionViolated { condition: format!("a_{} in sector", j + 1), x });
            }
            for i in 0..2 {
                let bij = sys.b[i][j].at(x).norm();
                if bij == 0.0 {
                    continue;
                }
                let bound = aj.norm().powf(1.0 - i as f64 / 2.0 - sys.delta[i]);
                let c = bij / bound;
                if !c.is_finite() || sys.growth_bound.is_some_and(|cap| c > cap) {
                    return Err(Error::ConditionViolated { condition: format!("growth of b_{i}{}", j + 1), x });
                }
                growth[i] = growth[i].max(c);
            }
        }
    }
    Ok(growth)
}

/// Runs the system through `step_cauchy` using the template's domain, boundary
/// conditions, `ε`, `a`, time grid and forcing (which must have `N` components).
pub fn solve_diagonal_system(sys: &DiagonalSystem, template: &ParabolicProblem) -> Result<DiagonalReport> {
    let grid = template.elliptic.grid()?;
    let points = grid.points();
    let growth_constants = check_conditions(sys, &points)?;
    let n = sys.n();
    let mut pp = template.clone();
    let e = &mut pp.elliptic;
    e.dim = n;
    e.q = sys.q;
    e.op = diag_coefficient(&sys.a, 1.0);
    e.a1 = diag_coefficient(&sys.b[1], 1.0 / e.eps.sqrt());
    e.a0 = diag_coefficient(&sys.b[0], 1.0);
    let solution = step_cauchy(&pp)?;
    let q = sys.q;
    let u = &solution.u;
    let ut = time_derivative(u);
    let mut uxx = Vec::with_capacity(u.slices.len());
    for s in &u.slices {
        uxx.push(derivative(&grid, s, 2)?);
    }
    let uxx = SpaceTimeFunction { times: u.times.clone(), slices: uxx };
    let au = u.slices.iter().map(|s| {
        let mut out = s.clone();
        for (k, &x) in points.iter().enumerate() {
            for (j, v) in out.at_mut(k).iter_mut().enumerate() {
                *v *= sys.a[j].at(x);
            }
        }
        out
    });
    let au = SpaceTimeFunction { times: u.times.clone(), slices: au.collect() };
    let terms = [
        mixed_norm(&ut, &grid, pp.norm, q),
        mixed_norm(&uxx, &grid, pp.norm, q),
        mixed_norm(&au, &grid, pp.norm, q),
    ];
    let rhs = mixed_norm(&pp.f, &grid, pp.norm, q);
    let ratio = if rhs > 0.0 { terms.iter().sum::<f64>() / rhs } else { f64::NAN };
    let mut det_partial = vec![0.0f64; n];
    for &x in &points {
        let mut prod = 1.0;
        for (j, slot) in det_partial.iter_mut().enumerate() {
            prod *= sys.a[j].at(x).norm();
            *slot = slot.max(prod);
        }
    }
    Ok(DiagonalReport { solution, terms, ratio, growth_constants, det_partial })
}

/// Ratio against the number of components, for checking that the estimate settles as `N` grows.
pub fn diagonal_convergence<F>(build: F, ns: &[usize]) -> Result<Vec<ConvergencePoint>>
where
    F: Fn(usize) -> Result<(DiagonalSystem, ParabolicProblem)>,
{
    ns.iter()
        .map(|&n| {
            let (sys, pp) = build(n)?;
            Ok(ConvergencePoint { n, ratio: solve_diagonal_system(&sys, &pp)?.ratio })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::EllipticProblem;
    use crate::parabolic::{uniform_times, Integrator, MixedNormSpec};
    use crate::sector::DomainSpec;

    fn cx(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn template(n: usize, cells: usize) -> ParabolicProblem {
        let mut e = EllipticProblem::new(DomainSpec::exterior(1.0, 4.0, cells), 1);
        e.eps = 0.1;
        let grid = e.grid().unwrap();
        let times = uniform_times(1.0, 8);
        ParabolicProblem {
            elliptic: e,
            d: 1.0,
            t_final: 1.0,
            n_steps: 8,
            norm: MixedNormSpec::new(2.0, 2.0).unwrap(),
            f: SpaceTimeFunction::from_fn(&grid, n, &times, |t, x| {
                (0..n).map(|j| cx((1.0 + t * j as f64) * (-(x - 2.0 - 0.1 * j as f64).powi(2)).exp())).collect()
            }),
            integrator: Integrator::ImplicitEuler,
            initial: None,
        }
    }

    fn scalar_component(sys: &DiagonalSystem, pp: &ParabolicProblem, j: usize) -> ParabolicProblem {
        let mut s = pp.clone();
        s.elliptic.q = sys.q;
        s.elliptic.op = diag_coefficient(&sys.a[j..j + 1], 1.0);
        s.elliptic.a1 = diag_coefficient(&sys.b[1][j..j + 1], 1.0 / s.elliptic.eps.sqrt());
        s.elliptic.a0 = diag_coefficient(&sys.b[0][j..j + 1], 1.0);
        s.f.slices = pp.f.slices.iter().map(|g| {
            crate::sector::GridFunction::from_values(1, (0..g.n_points()).map(|k| g.at(k)[j]).collect())
        }).collect();
        s
    }

    fn max_decoupling_gap(sys: &DiagonalSystem, pp: &ParabolicProblem) -> f64 {
        let rep = solve_diagonal_system(sys, pp).unwrap();
        let mut gap = 0.0f64;
        for j in 0..sys.n() {
            let sc = step_cauchy(&scalar_component(sys, pp, j)).unwrap();
            for (lv, ls) in rep.solution.u.slices.iter().zip(&sc.u.slices) {
                for k in 0..lv.n_points() {
                    gap = gap.max((lv.at(k)[j] - ls.at(k)[0]).norm());
                }
            }
        }
        gap
    }

    #[test]
    fn uncoupled_system_matches_scalar_solves() {
        let sys = DiagonalSystem::uncoupled(&[cx(1.0), cx(2.0), cx(3.0), cx(4.0)], 2.0);
        assert!(max_decoupling_gap(&sys, &template(4, 200)) < 1e-10);
    }

    #[test]
    fn decoupling_up_to_sixty_four() {
        for n in [8, 64] {
            let a: Vec<C64> = (1..=n).map(|j| cx(j as f64)).collect();
            let sys = DiagonalSystem::uncoupled(&a, 3.0);
            assert!(max_decoupling_gap(&sys, &template(n, 40)) < 1e-10);
        }
    }

    #[test]
    fn admissible_lower_order_terms() {
        let a = [cx(1.0), cx(4.0), cx(9.0)];
        let mut sys = DiagonalSystem::uncoupled(&a, 2.0);
        sys.b[1] = a.iter().map(|v| Coefficient::Constant(v.powf(0.25) * 0.1)).collect();
        let rep = solve_diagonal_system(&sys, &template(3, 200)).unwrap();
        assert!(rep.ratio.is_finite() && rep.ratio > 0.0);
        assert!((rep.growth_constants[1] - 0.1).abs() < 1e-12);
        assert!((rep.det_partial[2] - 36.0).abs() < 1e-12);
        assert!(rep.solution.u.slices.iter().all(|s| s.values.iter().all(|z| z.is_finite())));
        assert!(max_decoupling_gap(&sys, &template(3, 200)) < 1e-10);
    }

    #[test]
    fn coefficient_leaving_sector_is_rejected() {
        let mut sys = DiagonalSystem::uncoupled(&[cx(1.0), cx(2.0)], 2.0);
        sys.a[1] = Coefficient::function(|x| if x > 2.0 { cx(-1.0) } else { cx(1.0) });
        match solve_diagonal_system(&sys, &template(2, 40)) {
            Err(Error::ConditionViolated { condition, x }) => {
                assert!(condition.contains("a_2"));
                assert!(x > 2.0);
            }
            other => panic!("{other:?}"),
        }
        let mut sys = DiagonalSystem::uncoupled(&[cx(1.0), cx(2.0)], 2.0);
        sys.b[0][0] = Coefficient::Constant(cx(5.0));
        sys.growth_bound = Some(1.0);
        assert!(matches!(solve_diagonal_system(&sys, &template(2, 40)), Err(Error::ConditionViolated { .. })));
    }

    #[test]
    fn ratio_settles_in_n() {
        let pts = diagonal_convergence(
            |n| {
                let a: Vec<C64> = (1..=n).map(|j| cx(j as f64)).collect();
                Ok((DiagonalSystem::uncoupled(&a, 2.0), template(n, 60)))
            },
            &[4, 8, 16],
        )
        .unwrap();
        assert!(pts.iter().all(|p| p.ratio.is_finite()));
        let r: Vec<f64> = pts.iter().map(|p| p.ratio).collect();
        assert!(r[2] / r[1] < 2.0 && r[1] / r[2] < 2.0, "{r:?}");
    }
}
