//! Empirical checks of the uniform coercive estimates, the embedding and trace
//! inequalities, and R-boundedness of discretized resolvent families.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::elliptic::fd::{equation_mask, factor_operator, finish_solution};
use crate::elliptic::{reduced_operator, EllipticProblem, Solution};
use crate::error::{Error, Result};
use crate::linalg::{checked_inverse, lq_norm, CMat, CVec, C64};
use crate::operator::{graph_norm, interpolation_norm, r_bound_estimate, MatrixOperator, RBoundEstimate};
use crate::sector::{derivative, DomainSpec, Grid, GridFunction, Sector};

/// The four summands of the coercive functional and their ratio to `‖f‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoerciveTerms {
    /// `|λ|^{1−i/2} ε^{i/2} ‖u^{(i)}‖` for `i = 0, 1, 2`.
    pub derivative_terms: [f64; 3],
    pub operator_term: f64,
    pub rhs_norm: f64,
    pub ratio: f64,
}

/// `[Σᵢ |λ|^{1−i/2} ε^{i/2} ‖u^{(i)}‖ + ‖Au‖] / ‖f‖` with grid quadrature in `L_p(ℓ_q)`.
pub fn coercive_functional(sol: &Solution, problem: &EllipticProblem, f: &GridFunction) -> Result<CoerciveTerms> {
    let grid = problem.grid()?;
    let (p, q) = (problem.p(), problem.q);
    let rhs_norm = f.norm(&grid, p, q);
    if rhs_norm == 0.0 {
        return Err(Error::ZeroRhs);
    }
    let lam = problem.lambda.norm();
    let eps = problem.eps;
    let derivs = [&sol.u, &sol.du, &sol.d2u];
    let mut derivative_terms = [0.0; 3];
    for (i, u) in derivs.iter().enumerate() {
        let w = lam.powf(1.0 - i as f64 / 2.0) * eps.powf(i as f64 / 2.0);
        derivative_terms[i] = w * u.norm(&grid, p, q);
    }
    let mut au = GridFunction::zeros(sol.u.n_points(), sol.u.dim);
    for (k, x) in grid.points().into_iter().enumerate() {
        let v = problem.op.at(x) * CVec::from_column_slice(sol.u.at(k));
        au.at_mut(k).copy_from_slice(v.as_slice());
    }
    let operator_term = au.norm(&grid, p, q);
    let ratio = (derivative_terms.iter().sum::<f64>() + operator_term) / rhs_norm;
    Ok(CoerciveTerms { derivative_terms, operator_term, rhs_norm, ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps_grid: Vec<f64>,
    pub lambda_moduli: Vec<f64>,
    pub lambda_args: Vec<f64>,
    /// Sector half-angle bounding `|arg λ|`.
    pub phi: f64,
    pub rhs_samples: usize,
    pub seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Err(Error::Validation { field: field.into(), message });
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("eps_grid", "entries must be positive".into());
        }
        if self.lambda_moduli.is_empty() || self.lambda_moduli.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return bad("lambda_moduli", "entries must be positive".into());
        }
        let sector = match Sector::new(self.phi) {
            Ok(s) => s,
            Err(e) => return bad("phi", e.to_string()),
        };
        if self.lambda_args.is_empty() || self.lambda_args.iter().any(|a| !(a.abs() <= sector.phi())) {
            return bad("lambda_args", format!("entries must lie in [-{0}, {0}]", self.phi));
        }
        if self.rhs_samples < 3 {
            return bad("rhs_samples", format!("{} < 3", self.rhs_samples));
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for &e in &self.eps_grid {
            for &m in &self.lambda_moduli {
                for &a in &self.lambda_args {
                    out.push((e, m, a));
                }
            }
        }
        out
    }
}

/// Worst right-hand side of one `(ε, λ)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub eps: f64,
    pub lambda_modulus: f64,
    pub lambda_arg: f64,
    pub terms: [f64; 4],
    pub rhs_norm: f64,
    pub ratio: f64,
    /// `ε^{i/2}|λ|^{1−i/2}‖(d/dx)ⁱ(O + λ)⁻¹f‖/‖f‖` for `i = 0, 1, 2`, each maximized over the panel.
    pub resolvent_norms: [f64; 3],
    /// Functional values for every right-hand side of the panel, in panel order.
    #[serde(skip_serializing)]
    pub samples: Vec<CoerciveTerms>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub eps: f64,
    pub lambda_modulus: f64,
    pub lambda_arg: f64,
    pub class: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityReport {
    pub records: Vec<CellRecord>,
    pub failures: Vec<CellFailure>,
    pub sup_ratio: f64,
    pub uniformity: f64,
}

/// Max over ε of the per-ε sup ratio divided by the min over ε.
pub fn uniformity_statistic(records: &[CellRecord]) -> f64 {
    let mut per_eps: Vec<(f64, f64)> = Vec::new();
    for r in records {
        match per_eps.iter_mut().find(|(e, _)| *e == r.eps) {
            Some(slot) => slot.1 = slot.1.max(r.ratio),
            None => per_eps.push((r.eps, r.ratio)),
        }
    }
    let hi = per_eps.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = per_eps.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    if per_eps.is_empty() || lo == 0.0 {
        return f64::NAN;
    }
    hi / lo
}

pub const CELLS_CSV_HEADER: [&str; 12] = [
    "eps",
    "lambda_modulus",
    "lambda_arg",
    "sample",
    "term_u",
    "term_du",
    "term_d2u",
    "term_au",
    "rhs_norm",
    "ratio",
    "status",
    "message",
];

fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

impl CoercivityReport {
    /// One row per right-hand side of each cell, cells in sweep order; a failed cell
    /// contributes a single row with the error class and empty numbers.
    pub fn write_cells_csv<W: Write>(&self, out: W, cfg: &SweepConfig) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(CELLS_CSV_HEADER).map_err(io)?;
        for (e, m, a) in cfg.cells() {
            let same = |x: f64, y: f64, z: f64| x == e && y == m && z == a;
            if let Some(r) = self.records.iter().find(|r| same(r.eps, r.lambda_modulus, r.lambda_arg)) {
                for (k, t) in r.samples.iter().enumerate() {
                    let mut row = vec![fmt(e), fmt(m), fmt(a), k.to_string()];
                    row.extend(t.derivative_terms.iter().map(|&v| fmt(v)));
                    row.push(fmt(t.operator_term));
                    row.push(fmt(t.rhs_norm));
                    row.push(fmt(t.ratio));
                    row.push("ok".into());
                    row.push(String::new());
                    w.write_record(&row).map_err(io)?;
                }
            } else if let Some(f) = self.failures.iter().find(|f| same(f.eps, f.lambda_modulus, f.lambda_arg)) {
                let mut row = vec![fmt(e), fmt(m), fmt(a)];
                row.extend(std::iter::repeat_n(String::new(), 7));
                row.push(f.class.clone());
                row.push(f.message.clone());
                w.write_record(&row).map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// `−εu'' + u + λu = f` on the truncated line, on a grid resolving the layer width
/// `ℓ = (ε/|1 + λ|)^{1/2}` with `h = ℓ/8` and half-length `300ℓ`.
pub fn scalar_model(eps: f64, lambda: C64) -> Result<EllipticProblem> {
    let kappa = (lambda + 1.0).norm();
    if kappa == 0.0 {
        return Err(Error::SingularResolvent { lambda });
    }
    let ell = (eps / kappa).sqrt();
    let length = 300.0 * ell;
    let mut p = EllipticProblem::new(DomainSpec::full_line(length, 4800), 1);
    p.eps = eps;
    p.lambda = lambda;
    Ok(p)
}

/// Relative wave numbers (in units of `ℓ⁻¹`) carried by the deterministic packets.
const PACKET_SHIFTS: [f64; 7] = [0.0, 0.5, 0.71, 1.0, 1.41, 2.0, 4.0];

/// Smoothed complex Gaussian fields plus modulated bumps at the centre of the grid,
/// zero on constraint nodes.
pub fn rhs_panel(problem: &EllipticProblem, grid: &Grid, samples: usize, rng: &mut impl Rng) -> Vec<GridFunction> {
    let n = problem.dim;
    let pts = grid.points();
    let mask = equation_mask(grid);
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    let centre = 0.5 * (lo + hi);
    let x_mid = centre.clamp(lo, hi);
    let kappa = problem.shift().norm() + problem.op.at(x_mid).norm() + problem.a0.at(x_mid).norm();
    let ell = (problem.eps / kappa.max(f64::MIN_POSITIVE)).sqrt();
    let width = (30.0 * ell).min(0.15 * (hi - lo));
    let mut panel = Vec::new();
    for _ in 0..samples {
        let raw: Vec<C64> = (0..pts.len() * n)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let mut v = raw.clone();
        for k in 1..pts.len() - 1 {
            for c in 0..n {
                v[k * n + c] = (raw[(k - 1) * n + c] + raw[k * n + c] * 2.0 + raw[(k + 1) * n + c]) / 4.0;
            }
        }
        panel.push(GridFunction::from_values(n, v));
    }
    for &s in &PACKET_SHIFTS {
        let xi = s / ell;
        panel.push(GridFunction::from_fn(grid, n, |x| {
            let z = C64::from_polar((-((x - centre) / width).powi(2)).exp(), xi * (x - centre));
            vec![z; n]
        }));
    }
    for f in &mut panel {
        for (k, &eq) in mask.iter().enumerate() {
            if !eq {
                f.at_mut(k).fill(C64::new(0.0, 0.0));
            }
        }
    }
    panel
}

fn cell_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

type CellOutcome = (CoerciveTerms, [f64; 3], Vec<CoerciveTerms>);

fn run_cell(problem: &EllipticProblem, samples: usize, rng: &mut ChaCha8Rng) -> Result<CellOutcome> {
    let grid = problem.grid()?;
    problem.validate(&grid)?;
    let op = factor_operator(problem, &grid, problem.shift())?;
    let mut worst: Option<CoerciveTerms> = None;
    let mut resolvent = [0.0f64; 3];
    let mut all = Vec::new();
    for f in rhs_panel(problem, &grid, samples, rng) {
        let u = op.solve(&f);
        let sol = finish_solution(problem, &grid, u, &f)?;
        let t = coercive_functional(&sol, problem, &f)?;
        for i in 0..3 {
            resolvent[i] = resolvent[i].max(t.derivative_terms[i] / t.rhs_norm);
        }
        if worst.is_none_or(|w| t.ratio > w.ratio) {
            worst = Some(t);
        }
        all.push(t);
    }
    Ok((worst.expect("panel is nonempty"), resolvent, all))
}

/// Solves every `(ε, |λ|, arg λ)` cell over a random right-hand-side panel.
///
/// Cells run in parallel with per-cell random streams, so the report does not depend
/// on scheduling. A failing cell is recorded and the others proceed.
pub fn sweep<F>(family: &F, cfg: &SweepConfig) -> Result<CoercivityReport>
where
    F: Fn(f64, C64) -> Result<EllipticProblem> + Sync,
{
    cfg.validate()?;
    let cells = cfg.cells();
    let outcomes: Vec<_> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(eps, modulus, arg))| {
            let lambda = C64::from_polar(modulus, arg);
            let mut rng = cell_rng(cfg.seed, idx);
            family(eps, lambda).and_then(|p| run_cell(&p, cfg.rhs_samples, &mut rng))
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&(eps, lambda_modulus, lambda_arg), outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok((t, resolvent_norms, samples)) => records.push(CellRecord {
                eps,
                lambda_modulus,
                lambda_arg,
                terms: [t.derivative_terms[0], t.derivative_terms[1], t.derivative_terms[2], t.operator_term],
                rhs_norm: t.rhs_norm,
                ratio: t.ratio,
                resolvent_norms,
                samples,
            }),
            Err(e) => failures.push(CellFailure {
                eps,
                lambda_modulus,
                lambda_arg,
                class: e.class().into(),
                message: e.to_string(),
            }),
        }
    }
    let sup_ratio = records.iter().map(|r| r.ratio).fold(f64::NAN, f64::max);
    let uniformity = uniformity_statistic(&records);
    Ok(CoercivityReport { records, failures, sup_ratio, uniformity })
}

/// Pointwise `‖v‖_{E(A^θ)}` integrated in `L_p`; `θ = 0` is the plain fibre norm.
fn graded_lp(grid: &Grid, v: &GridFunction, power: Option<&MatrixOperator>, p: f64, q: f64) -> f64 {
    let w = grid.weights();
    let mut s = 0.0;
    for (k, wk) in w.iter().enumerate() {
        let x = v.at(k);
        let n = match power {
            Some(b) => graph_norm(b, x, p),
            None => lq_norm(x, q),
        };
        s += wk * n.powf(p);
    }
    s.powf(1.0 / p)
}

/// Smallest `C` with `‖u^{(j)}‖_{L_p(E(A^{1−j/m−μ}))} ≤ C(h^μ‖u‖_W + h^{−(1−μ)}‖u‖_{L_p})`
/// over the panel and the `h` grid, `‖u‖_W = ‖u‖_{L_p(E(A))} + ‖u^{(m)}‖_{L_p}`.
pub fn embedding_probe(
    grid: &Grid,
    panel: &[GridFunction],
    a: &MatrixOperator,
    j: usize,
    m: usize,
    mu: f64,
    h_grid: &[f64],
    p: f64,
) -> Result<f64> {
    if m != 2 || j > m {
        return Err(Error::InvalidSpec(format!("need 0 <= j <= m = 2, got j = {j}, m = {m}")));
    }
    let top = 1.0 - j as f64 / m as f64;
    if !(mu >= 0.0 && mu <= top) {
        return Err(Error::InvalidSpec(format!("mu = {mu} not in [0, {top}]")));
    }
    if h_grid.is_empty() || h_grid.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidSpec("h grid must be nonempty and positive".into()));
    }
    let q = a.q;
    let theta = top - mu;
    let lhs_power = if theta > 0.0 { Some(crate::operator::fractional_power(a, theta)?) } else { None };
    let mut c = 0.0f64;
    for u in panel {
        let uj = if j == 0 { u.clone() } else { derivative(grid, u, j)? };
        let um = derivative(grid, u, m)?;
        let lhs = graded_lp(grid, &uj, lhs_power.as_ref(), p, q);
        if lhs == 0.0 {
            continue;
        }
        let w = graded_lp(grid, u, Some(a), p, q) + graded_lp(grid, &um, None, p, q);
        let l = graded_lp(grid, u, None, p, q);
        for &h in h_grid {
            let rhs = h.powf(mu) * w + h.powf(-(1.0 - mu)) * l;
            c = c.max(lhs / rhs);
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceProbeResult {
    pub constant: f64,
    pub per_eps: Vec<f64>,
    /// Max over min of `per_eps` (1 when all vanish).
    pub spread: f64,
    pub theta: f64,
}

/// Smallest `C` with `ε^{θ}‖u^{(j)}(x₀)‖_{θ,p} ≤ C(‖εu^{(m)}‖_{L_p} + ‖u‖_{L_p(E(A))})`,
/// `θ = (pj + 1)/(pm)`, for each `ε` over the panel. `x₀` snaps to the nearest node.
pub fn trace_probe(
    grid: &Grid,
    panel: &[GridFunction],
    x0: f64,
    j: usize,
    m: usize,
    p: f64,
    a: &MatrixOperator,
    eps_grid: &[f64],
) -> Result<TraceProbeResult> {
    if m != 2 || j >= m {
        return Err(Error::InvalidSpec(format!("need 0 <= j < m = 2, got j = {j}, m = {m}")));
    }
    let pts = grid.points();
    if !(x0 >= pts[0] && x0 <= pts[pts.len() - 1]) {
        return Err(Error::InvalidSpec(format!("x0 = {x0} outside the grid")));
    }
    let k0 = (0..pts.len())
        .min_by(|&i, &k| (pts[i] - x0).abs().total_cmp(&(pts[k] - x0).abs()))
        .expect("grid is nonempty");
    let theta = (p * j as f64 + 1.0) / (p * m as f64);
    let q = a.q;
    let mut parts = Vec::with_capacity(panel.len());
    for u in panel {
        let uj = if j == 0 { u.clone() } else { derivative(grid, u, j)? };
        let point = uj.at(k0);
        let trace = if point.iter().all(|z| z.norm() == 0.0) { 0.0 } else { interpolation_norm(point, a, theta, p)? };
        let um = derivative(grid, u, m)?;
        parts.push((trace, graded_lp(grid, &um, None, p, q), graded_lp(grid, u, Some(a), p, q)));
    }
    let per_eps: Vec<f64> = eps_grid
        .iter()
        .map(|&eps| {
            parts
                .iter()
                .filter(|t| t.0 > 0.0)
                .map(|&(t, dm, u)| eps.powf(theta) * t / (eps * dm + u))
                .fold(0.0, f64::max)
        })
        .collect();
    let constant = per_eps.iter().copied().fold(0.0, f64::max);
    let lo = per_eps.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if constant == 0.0 { 1.0 } else { constant / lo };
    Ok(TraceProbeResult { constant, per_eps, spread, theta })
}

/// `{λ(O_h + λ)⁻¹}` on equation nodes, conjugated by the quadrature weights so that
/// plain `ℓ_p` norms of the matrices equal grid `L_p` norms.
pub fn resolvent_family(problem: &EllipticProblem, lambdas: &[C64]) -> Result<Vec<CMat>> {
    let grid = problem.grid()?;
    problem.validate(&grid)?;
    let p = problem.p();
    let w = grid.weights();
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let (o, nodes) = reduced_operator(problem, &grid, lambda + problem.d)?;
        let inv = checked_inverse(&o, 1e-13).ok_or(Error::SingularResolvent { lambda })?;
        let n = problem.dim;
        let scale: Vec<f64> = nodes.iter().flat_map(|&k| std::iter::repeat_n(w[k].powf(1.0 / p), n)).collect();
        out.push(CMat::from_fn(inv.nrows(), inv.ncols(), |r, c| inv[(r, c)] * lambda * (scale[r] / scale[c])));
    }
    Ok(out)
}

/// R-bound estimate of `{λ(O_h + λ)⁻¹ : λ ∈ samples}` in the grid `L_p` norm.
pub fn resolvent_r_positivity_probe(
    problem: &EllipticProblem,
    lambda_samples: &[C64],
    trials: usize,
    vectors_per_trial: usize,
    seed: u64,
) -> Result<RBoundEstimate> {
    if problem.p() != problem.q {
        return Err(Error::InvalidSpec("probe requires matching grid and fibre exponents".into()));
    }
    let family = resolvent_family(problem, lambda_samples)?;
    r_bound_estimate(&family, problem.p(), trials, vectors_per_trial, seed)
}
