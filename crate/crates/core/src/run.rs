//! Command dispatch, artifact files and run records.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};

use crate::coercivity::{embedding_probe, resolvent_family, resolvent_r_positivity_probe, scalar_model, sweep, trace_probe};
use crate::config::{serialize_config, state_variables, Command, RunConfig, SolverKind, SweepModel};
use crate::elliptic::{
    assemble_greens, nonlinear_solve_traced, solve_constant, solve_variable, EllipticProblem, MatrixCoefficient,
    NonlinearProblem,
};
use crate::error::{Error, Result};
use crate::expr::Compiled;
use crate::linalg::{CMat, C64};
use crate::operator::{lq_operator_norm, MatrixOperator};
use crate::parabolic::{
    field, field_of_values_margin, level_norm, run_wentzell_mixed, solve_diagonal_system, step_cauchy,
    uniform_times, DiagonalSystem, MixedNormSpec, ParabolicProblem, SpaceTimeFunction, WentzellOperator,
    WentzellProblem,
};
use crate::sector::{Grid, GridFunction};

/// Version tag of the CSV layouts written by this module.
pub const CSV_LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub class: String,
    pub message: String,
}

impl From<&Error> for ErrorReport {
    fn from(e: &Error) -> Self {
        Self { class: e.class().into(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    /// SHA-256 of the canonical serialized config; absent when the config did not parse.
    pub config_hash: Option<String>,
    pub timestamp: String,
    pub version: String,
    pub csv_layout: u32,
    pub seed: Option<u64>,
    pub input_digests: BTreeMap<String, String>,
    pub status: String,
    pub error: Option<ErrorReport>,
    pub summary: Json,
    pub files: Vec<ArtifactRef>,
}

impl RunRecord {
    /// Checks that every referenced file exists under `dir` with the recorded digest.
    pub fn verify_files(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            let bytes = fs::read(dir.join(&f.path))?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(Error::Io(format!("digest mismatch for {}", f.path)));
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Default)]
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    summary: serde_json::Map<String, Json>,
}

impl Artifacts {
    fn put(&mut self, key: &str, v: Json) {
        self.summary.insert(key.into(), v);
    }
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// JSON number, or null for non-finite values.
fn jf(x: f64) -> Json {
    serde_json::Number::from_f64(x).map_or(Json::Null, Json::Number)
}

fn jv(xs: &[f64]) -> Json {
    Json::Array(xs.iter().map(|&x| jf(x)).collect())
}

/// The elliptic problem of `[problem]` with `dim` components.
pub fn elliptic_problem(cfg: &RunConfig, dim: usize) -> Result<EllipticProblem> {
    let pr = &cfg.problem;
    let mut p = EllipticProblem::new(cfg.domain(), dim);
    p.a = pr.a.coefficient("problem.a")?;
    if dim == pr.dim {
        p.op = pr.op.coefficient("problem.op", dim)?;
        p.a1 = pr.a1.coefficient("problem.a1", dim)?;
        p.a0 = pr.a0.coefficient("problem.a0", dim)?;
    }
    p.eps = pr.eps;
    p.lambda = pr.lambda.constant("problem.lambda")?;
    p.d = pr.d;
    p.q = pr.q;
    p.bc = cfg.boundary_conditions()?;
    Ok(p)
}

fn compile_all(field: &str, values: &[crate::config::Value], vars: &[&str]) -> Result<Vec<Compiled>> {
    values.iter().map(|v| v.compile(field, vars)).collect()
}

/// Evaluates per-component entries (or one broadcast entry) with real arguments.
fn components(cs: &[Compiled], dim: usize, args: &[f64]) -> Vec<C64> {
    (0..dim).map(|k| cs[if cs.len() == 1 { 0 } else { k }].eval_real(args)).collect()
}

fn rhs_function(grid: &Grid, field: &str, rhs: &[crate::config::Scalar], dim: usize) -> Result<GridFunction> {
    let cs = rhs.iter().map(|s| s.coefficient(field)).collect::<Result<Vec<_>>>()?;
    Ok(GridFunction::from_fn(grid, dim, |x| (0..dim).map(|k| cs[if cs.len() == 1 { 0 } else { k }].at(x)).collect()))
}

fn solution_rows(grid: &Grid, u: &GridFunction, du: &GridFunction, d2u: &GridFunction) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (k, x) in grid.points().into_iter().enumerate() {
        for c in 0..u.dim {
            let mut r = vec![num(x), c.to_string()];
            for g in [u, du, d2u] {
                let v = g.at(k)[c];
                r.push(num(v.re));
                r.push(num(v.im));
            }
            rows.push(r);
        }
    }
    rows
}

const SOLUTION_HEADER: [&str; 8] = ["x", "component", "u_re", "u_im", "du_re", "du_im", "d2u_re", "d2u_im"];

fn run_solve(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let s = cfg.solve.as_ref().expect("section filled");
    let p = elliptic_problem(cfg, cfg.problem.dim)?;
    let grid = p.grid()?;
    let f = rhs_function(&grid, "solve.rhs", &s.rhs, p.dim)?;
    let green = match s.solver {
        SolverKind::Green => true,
        SolverKind::Fd => false,
        SolverKind::Auto => p.has_constant_coefficients() && p.a1.is_zero(),
    };
    let sol = if green { solve_constant(&assemble_greens(&p)?, &f)? } else { solve_variable(&p, &f)? };
    art.put("solver", json!(if green { "green" } else { "fd" }));
    art.put("n_points", json!(grid.n_points()));
    art.put("residual_norm", jf(sol.residual_norm));
    art.put("max_bc_residual", jf(sol.max_bc_residual()));
    if p.lambda.norm() > 0.0 {
        if let Ok(t) = crate::coercivity::coercive_functional(&sol, &p, &f) {
            art.put("coercive_terms", jv(&[t.derivative_terms[0], t.derivative_terms[1], t.derivative_terms[2], t.operator_term]));
            art.put("coercive_ratio", jf(t.ratio));
        }
    }
    art.files.push(("cells.csv".into(), csv_bytes(&SOLUTION_HEADER, solution_rows(&grid, &sol.u, &sol.du, &sol.d2u))?));
    Ok(())
}

fn run_sweep(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let s = cfg.sweep.as_ref().expect("section filled");
    let sc = cfg.sweep_config(s);
    let report = match s.model {
        SweepModel::Scalar => sweep(&scalar_model, &sc)?,
        SweepModel::Problem => {
            let base = elliptic_problem(cfg, cfg.problem.dim)?;
            let family = |eps: f64, lambda: C64| {
                let mut p = base.clone();
                p.eps = eps;
                p.lambda = lambda;
                Ok(p)
            };
            sweep(&family, &sc)?
        }
    };
    let mut bytes = Vec::new();
    report.write_cells_csv(&mut bytes, &sc)?;
    art.files.push(("cells.csv".into(), bytes));
    art.put("sup_ratio", jf(report.sup_ratio));
    art.put("uniformity", jf(report.uniformity));
    art.put("cells", serde_json::to_value(&report.records).map_err(|e| Error::Io(e.to_string()))?);
    art.put("failures", serde_json::to_value(&report.failures).map_err(|e| Error::Io(e.to_string()))?);
    Ok(())
}

fn run_rbound(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let s = cfg.rbound.as_ref().expect("section filled");
    let p = elliptic_problem(cfg, cfg.problem.dim)?;
    let lambdas = s.lambdas.iter().map(|l| l.constant("rbound.lambdas")).collect::<Result<Vec<_>>>()?;
    let est = resolvent_r_positivity_probe(&p, &lambdas, s.trials, s.vectors_per_trial, cfg.seed)?;
    let family = resolvent_family(&p, &lambdas)?;
    let rows: Vec<Vec<String>> = lambdas
        .iter()
        .zip(&family)
        .map(|(l, m)| vec![num(l.re), num(l.im), num(lq_operator_norm(m, p.p(), cfg.seed).0)])
        .collect();
    art.files.push(("cells.csv".into(), csv_bytes(&["lambda_re", "lambda_im", "operator_norm"], rows)?));
    art.put("estimate", serde_json::to_value(&est).map_err(|e| Error::Io(e.to_string()))?);
    Ok(())
}

fn forcing(cfg: &RunConfig, grid: &Grid, dim: usize, times: &[f64]) -> Result<SpaceTimeFunction> {
    let s = cfg.parabolic.as_ref().expect("section filled");
    let cs = compile_all("parabolic.forcing", &s.forcing, &["t", "x"])?;
    Ok(SpaceTimeFunction::from_fn(grid, dim, times, |t, x| components(&cs, dim, &[t, x])))
}

fn parabolic_problem(cfg: &RunConfig, dim: usize) -> Result<ParabolicProblem> {
    let s = cfg.parabolic.as_ref().expect("section filled");
    let elliptic = elliptic_problem(cfg, dim)?;
    if elliptic.lambda != C64::new(0.0, 0.0) || elliptic.d != 0.0 {
        return Err(Error::Validation {
            field: "problem".into(),
            message: "time-dependent runs take their shift from [parabolic].d; set problem.lambda = problem.d = 0".into(),
        });
    }
    let grid = elliptic.grid()?;
    let times = uniform_times(s.t_final, s.n_steps);
    Ok(ParabolicProblem {
        f: forcing(cfg, &grid, dim, &times)?,
        elliptic,
        d: s.d,
        t_final: s.t_final,
        n_steps: s.n_steps,
        norm: MixedNormSpec::new(cfg.problem.p, s.p1)?,
        integrator: s.integrator,
        initial: None,
    })
}

fn trajectory_rows(grid: &Grid, u: &SpaceTimeFunction) -> Vec<Vec<String>> {
    let xs = grid.points();
    let mut rows = Vec::new();
    for (t, slice) in u.times.iter().zip(&u.slices) {
        for (k, &x) in xs.iter().enumerate() {
            for (c, v) in slice.at(k).iter().enumerate() {
                rows.push(vec![num(*t), num(x), c.to_string(), num(v.re), num(v.im)]);
            }
        }
    }
    rows
}

fn level_trace(grid: &Grid, u: &SpaceTimeFunction) -> Result<Vec<u8>> {
    let rows = u
        .times
        .iter()
        .zip(&u.slices)
        .enumerate()
        .map(|(n, (t, s))| vec![n.to_string(), num(*t), num(level_norm(grid, s))]);
    csv_bytes(&["step", "t", "level_norm"], rows)
}

/// Dense eigenvalue work is skipped above this many unknowns.
const MARGIN_LIMIT: usize = 2000;

fn run_parabolic(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let pp = parabolic_problem(cfg, cfg.problem.dim)?;
    let grid = pp.elliptic.grid()?;
    let sol = step_cauchy(&pp)?;
    if cfg.output.trajectory {
        art.files.push(("cells.csv".into(), csv_bytes(&["t", "x", "component", "u_re", "u_im"], trajectory_rows(&grid, &sol.u))?));
    }
    art.files.push(("trace.csv".into(), level_trace(&grid, &sol.u)?));
    art.put("terms", jv(&sol.terms));
    art.put("rhs_norm", jf(sol.rhs_norm));
    art.put("ratio", jf(sol.ratio));
    if grid.n_points() * pp.elliptic.dim <= MARGIN_LIMIT {
        art.put("field_of_values_margin", jf(field_of_values_margin(&pp.elliptic, pp.d)?));
    }
    Ok(())
}

fn run_system(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let s = cfg.system.as_ref().expect("section filled");
    let n = s.a.len();
    let coeffs = |field: &str, v: &[crate::config::Scalar]| -> Result<Vec<_>> {
        if v.is_empty() {
            return Ok(vec![crate::elliptic::Coefficient::Constant(C64::new(0.0, 0.0)); n]);
        }
        v.iter().map(|c| c.coefficient(field)).collect()
    };
    let sys = DiagonalSystem {
        a: coeffs("system.a", &s.a)?,
        b: [coeffs("system.b0", &s.b0)?, coeffs("system.b1", &s.b1)?],
        q: cfg.problem.q,
        delta: s.delta,
        phi: s.phi,
        growth_bound: s.growth_bound,
    };
    let mut template = parabolic_problem(cfg, n)?;
    template.elliptic.op = MatrixCoefficient::identity(n);
    let grid = template.elliptic.grid()?;
    let rep = solve_diagonal_system(&sys, &template)?;
    if cfg.output.trajectory {
        art.files.push((
            "cells.csv".into(),
            csv_bytes(&["t", "x", "component", "u_re", "u_im"], trajectory_rows(&grid, &rep.solution.u))?,
        ));
    }
    art.files.push(("trace.csv".into(), level_trace(&grid, &rep.solution.u)?));
    art.put("terms", jv(&rep.terms));
    art.put("ratio", jf(rep.ratio));
    art.put("growth_constants", jv(&rep.growth_constants));
    art.put("det_partial", jv(&rep.det_partial));
    Ok(())
}

fn field_of(c: Compiled) -> crate::parabolic::Field3 {
    field(move |t, x, y| c.eval_real(&[t, x, y]))
}

fn run_wentzell(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let s = cfg.wentzell.as_ref().expect("section filled");
    let vars = ["t", "x", "y"];
    let f3 = |name: &str, v: &crate::config::Value| v.compile(name, &vars).map(field_of);
    let k = |v: &crate::config::Value| v.constant("wentzell.alpha");
    let problem = WentzellProblem {
        operator: WentzellOperator {
            m: s.m,
            a1: f3("wentzell.a1", &s.a1)?,
            b1: f3("wentzell.b1", &s.b1)?,
            c: f3("wentzell.c", &s.c)?,
            alpha: [[k(&s.alpha0[0])?, k(&s.alpha0[1])?], [k(&s.alpha1[0])?, k(&s.alpha1[1])?]],
            delta: s.delta,
        },
        a: f3("wentzell.a", &s.a)?,
        x_domain: cfg.domain(),
        x_bc: cfg.boundary_conditions()?,
        d: s.d,
        t_final: s.t_final,
        n_steps: s.n_steps,
        p: cfg.problem.p,
        f: f3("wentzell.forcing", &s.forcing)?,
    };
    let run = run_wentzell_mixed(&problem)?;
    let ny = run.y.len();
    if cfg.output.trajectory {
        let mut rows = Vec::new();
        for (t, u) in run.times.iter().zip(&run.u) {
            for (kx, x) in run.x.iter().enumerate() {
                for (j, y) in run.y.iter().enumerate() {
                    let v = u[kx * ny + j];
                    rows.push(vec![num(*t), num(*x), num(*y), num(v.re), num(v.im)]);
                }
            }
        }
        art.files.push(("cells.csv".into(), csv_bytes(&["t", "x", "y", "u_re", "u_im"], rows)?));
    }
    let rows = run
        .boundary_residuals
        .iter()
        .enumerate()
        .map(|(n, r)| vec![(n + 1).to_string(), num(run.times[n + 1]), num(*r)]);
    art.files.push(("trace.csv".into(), csv_bytes(&["step", "t", "boundary_residual"], rows)?));
    art.put("terms", jv(&run.terms));
    art.put("rhs_norm", jf(run.rhs_norm));
    art.put("ratio", jf(run.ratio));
    art.put("max_boundary_residual", jf(run.boundary_residuals.iter().copied().fold(0.0, f64::max)));
    Ok(())
}

fn run_nonlinear(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let s = cfg.nonlinear.as_ref().expect("section filled");
    let base = elliptic_problem(cfg, cfg.problem.dim)?;
    let n = base.dim;
    let names = state_variables(n);
    let vars: Vec<&str> = names.iter().map(String::as_str).collect();
    let args = move |x: f64, u: &[C64], du: &[C64]| {
        let mut a = vec![C64::new(x, 0.0), u[0], du[0]];
        a.extend_from_slice(u);
        a.extend_from_slice(du);
        a
    };
    let entries = s.b.compile("nonlinear.b", n, &vars)?;
    let terms = compile_all("nonlinear.nonlinearity", &s.nonlinearity, &vars)?;
    let lip = s.lipschitz.compile("nonlinear.lipschitz", &["r"])?;
    let grid = base.grid()?;
    let np = NonlinearProblem {
        f: rhs_function(&grid, "nonlinear.rhs", &s.rhs, n)?,
        base,
        b: Arc::new(move |x, u, du| {
            let a = args(x, u, du);
            let v: Vec<C64> = entries.iter().map(|c| c.eval(&a)).collect();
            CMat::from_row_slice(n, n, &v)
        }),
        nonlinearity: Arc::new(move |x, u, du| {
            let a = args(x, u, du);
            (0..n).map(|k| terms[if terms.len() == 1 { 0 } else { k }].eval(&a)).collect()
        }),
        radius: s.radius,
        lipschitz: Arc::new(move |r| lip.eval_real(&[r]).re),
        h1: s.h1,
        h2: s.h2,
    };
    let (outcome, trace) = nonlinear_solve_traced(&np, s.max_iter, s.tol);
    let opt = |v: Option<f64>| v.map_or(String::new(), num);
    let rows = trace.steps.iter().map(|st| {
        vec![st.iteration.to_string(), num(st.gap), opt(st.factor), num(st.observed_radius), num(st.prerequisite)]
    });
    art.files.push(("trace.csv".into(), csv_bytes(&["iteration", "gap", "factor", "observed_radius", "prerequisite"], rows)?));
    art.put("c0", jf(trace.c0));
    art.put("converged", json!(trace.converged));
    art.put("nonlinear_residual", jf(trace.nonlinear_residual));
    art.put("factors", jv(&trace.factors()));
    let sol = outcome?;
    art.files.push(("cells.csv".into(), csv_bytes(&SOLUTION_HEADER, solution_rows(&grid, &sol.u, &sol.du, &sol.d2u))?));
    Ok(())
}

/// Gaussian bumps with random complex amplitudes and modulations; widths are drawn
/// log-uniformly from `[w_lo, w_hi]` and centres from `centre ± spread`.
fn bump_panel(grid: &Grid, dim: usize, count: usize, widths: (f64, f64), centre: f64, spread: f64, rng: &mut ChaCha8Rng) -> Vec<GridFunction> {
    (0..count)
        .map(|_| {
            let w = widths.0 * (widths.1 / widths.0).powf(rng.random::<f64>());
            let c = centre + spread * (2.0 * rng.random::<f64>() - 1.0);
            let xi = rng.random::<f64>() / w;
            let amp: Vec<C64> = (0..dim).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
            GridFunction::from_fn(grid, dim, |x| {
                let g = C64::from_polar((-((x - c) / w).powi(2)).exp(), xi * (x - c));
                amp.iter().map(|a| a * g).collect()
            })
        })
        .collect()
}

fn probe_operator(cfg: &RunConfig, grid: &Grid) -> Result<MatrixOperator> {
    let pts = grid.points();
    let x = pts[pts.len() / 2];
    let op = cfg.problem.op.coefficient("problem.op", cfg.problem.dim)?;
    MatrixOperator::new(op.at(x), cfg.problem.q)
}

fn run_embedding(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let s = cfg.embedding.as_ref().expect("section filled");
    let grid = elliptic_problem(cfg, cfg.problem.dim)?.grid()?;
    let pts = grid.points();
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = grid.h_min();
    let panel = bump_panel(&grid, cfg.problem.dim, s.panel_size, (8.0 * h, (hi - lo) / 8.0), 0.5 * (lo + hi), 0.25 * (hi - lo), &mut rng);
    let a = probe_operator(cfg, &grid)?;
    let p = cfg.problem.p;
    let constant = embedding_probe(&grid, &panel, &a, s.j, s.m, s.mu, &s.h_grid, p)?;
    let mut rows = Vec::new();
    for &hh in &s.h_grid {
        rows.push(vec![num(hh), num(embedding_probe(&grid, &panel, &a, s.j, s.m, s.mu, &[hh], p)?)]);
    }
    art.files.push(("cells.csv".into(), csv_bytes(&["h", "constant"], rows)?));
    art.put("constant", jf(constant));
    Ok(())
}

fn run_trace(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let s = cfg.trace.as_ref().expect("section filled");
    let grid = elliptic_problem(cfg, cfg.problem.dim)?.grid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = grid.h_min();
    let mut panel = Vec::new();
    for &eps in &s.eps_grid {
        let w = eps.sqrt().max(4.0 * h);
        panel.extend(bump_panel(&grid, cfg.problem.dim, s.panel_size, (0.5 * w, 2.0 * w), s.x0, w, &mut rng));
    }
    let a = probe_operator(cfg, &grid)?;
    let r = trace_probe(&grid, &panel, s.x0, s.j, s.m, cfg.problem.p, &a, &s.eps_grid)?;
    let rows = s.eps_grid.iter().zip(&r.per_eps).map(|(e, c)| vec![num(*e), num(*c)]);
    art.files.push(("cells.csv".into(), csv_bytes(&["eps", "constant"], rows)?));
    art.put("constant", jf(r.constant));
    art.put("spread", jf(r.spread));
    art.put("theta", jf(r.theta));
    Ok(())
}

fn dispatch(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let command = cfg.command.ok_or_else(|| Error::Validation { field: "command".into(), message: "no command selected".into() })?;
    match command {
        Command::Solve => run_solve(cfg, art),
        Command::Sweep => run_sweep(cfg, art),
        Command::Rbound => run_rbound(cfg, art),
        Command::Parabolic => run_parabolic(cfg, art),
        Command::System => run_system(cfg, art),
        Command::Wentzell => run_wentzell(cfg, art),
        Command::Nonlinear => run_nonlinear(cfg, art),
        Command::ProbeEmbedding => run_embedding(cfg, art),
        Command::ProbeTrace => run_trace(cfg, art),
    }
}

fn persist(out_dir: &Path, mut record: RunRecord, files: &[(String, Vec<u8>)]) -> Result<RunRecord> {
    fs::create_dir_all(out_dir)?;
    for (name, bytes) in files {
        fs::write(out_dir.join(name), bytes)?;
        record.files.push(ArtifactRef { path: name.clone(), sha256: sha256_hex(bytes) });
    }
    let line = serde_json::to_string(&record).map_err(|e| Error::Io(e.to_string()))?;
    let pretty = serde_json::to_string_pretty(&record).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(out_dir.join("record.json"), pretty + "\n")?;
    let mut log = OpenOptions::new().create(true).append(true).open(out_dir.join("records.jsonl"))?;
    writeln!(log, "{line}")?;
    Ok(record)
}

fn base_record(command: &str, input_text: &str) -> RunRecord {
    let mut input_digests = BTreeMap::new();
    input_digests.insert("config".to_string(), sha256_hex(input_text.as_bytes()));
    RunRecord {
        command: command.into(),
        config_hash: None,
        timestamp: chrono::Utc::now().to_rfc3339(),
        version: env!("CARGO_PKG_VERSION").into(),
        csv_layout: CSV_LAYOUT_VERSION,
        seed: None,
        input_digests,
        status: "ok".into(),
        error: None,
        summary: Json::Null,
        files: Vec::new(),
    }
}

/// Runs the selected command and writes `cells.csv`, `trace.csv`, `summary.json` and
/// `record.json` (as produced) into `out_dir`, appending the record to `records.jsonl`.
/// The record is written on failure too; the error is returned afterwards.
pub fn run(cfg: &RunConfig, input_text: &str, out_dir: &Path) -> Result<RunRecord> {
    let mut art = Artifacts::default();
    let outcome = dispatch(cfg, &mut art);
    let command = cfg.command.map_or("unknown", Command::name);
    let mut record = base_record(command, input_text);
    record.config_hash = Some(sha256_hex(serialize_config(cfg)?.as_bytes()));
    record.seed = Some(cfg.seed);
    if let Err(e) = &outcome {
        record.status = "error".into();
        record.error = Some(e.into());
        art.put("error", json!({ "class": e.class(), "message": e.to_string() }));
    }
    art.put("command", json!(command));
    let summary = Json::Object(art.summary);
    let summary_bytes = serde_json::to_vec_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    art.files.push(("summary.json".into(), summary_bytes));
    record.summary = summary;
    let record = persist(out_dir, record, &art.files)?;
    outcome.map(|_| record)
}

/// Records a run that failed before a config was available.
pub fn record_failure(out_dir: &Path, command: &str, input_text: &str, err: &Error) -> Result<RunRecord> {
    let mut record = base_record(command, input_text);
    record.status = "error".into();
    record.error = Some(err.into());
    record.summary = json!({ "command": command, "error": { "class": err.class(), "message": err.to_string() } });
    persist(out_dir, record, &[])
}
