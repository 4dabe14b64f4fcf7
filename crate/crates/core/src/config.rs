//! TOML run configuration: schema, defaults, validation and coefficient builders.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::elliptic::{Coefficient, MatrixCoefficient};
use crate::error::{Error, Result};
use crate::expr::{Compiled, Expression};
use crate::linalg::{CMat, C64};
use crate::parabolic::Integrator;
use crate::sector::{default_length, BoundaryConditionSet, DomainKind, DomainSpec, Sector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Sweep,
    Rbound,
    Parabolic,
    System,
    Wentzell,
    Nonlinear,
    ProbeEmbedding,
    ProbeTrace,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Rbound => "rbound",
            Command::Parabolic => "parabolic",
            Command::System => "system",
            Command::Wentzell => "wentzell",
            Command::Nonlinear => "nonlinear",
            Command::ProbeEmbedding => "probe-embedding",
            Command::ProbeTrace => "probe-trace",
        }
    }
}

/// A number or a constant expression such as `"1 + 2*i"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Expr(Expression),
}

impl Value {
    pub fn real(v: f64) -> Self {
        Value::Number(v)
    }

    pub fn expr(src: &str) -> Self {
        Value::Expr(Expression::parse(src).expect("valid expression literal"))
    }

    /// Compiles against `vars`; plain numbers ignore them.
    pub fn compile(&self, field: &str, vars: &[&str]) -> Result<Compiled> {
        match self {
            Value::Number(v) => Ok(Compiled::constant(C64::new(*v, 0.0))),
            Value::Expr(e) => e.compile(vars).map_err(|e| rename_field(e, field)),
        }
    }

    pub fn constant(&self, field: &str) -> Result<C64> {
        Ok(self.compile(field, &[])?.eval(&[]))
    }
}

fn rename_field(e: Error, field: &str) -> Error {
    match e {
        Error::Validation { message, .. } => Error::Validation { field: field.into(), message },
        other => other,
    }
}

/// Tabulated coefficient, linear between nodes and constant outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table {
    pub x: Vec<f64>,
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub im: Vec<f64>,
}

impl Table {
    fn validate(&self, field: &str) -> Result<()> {
        let bad = |message: &str| Err(Error::Validation { field: field.into(), message: message.into() });
        if self.x.len() < 2 || self.re.len() != self.x.len() {
            return bad("table needs at least two nodes and matching `re`");
        }
        if !self.im.is_empty() && self.im.len() != self.x.len() {
            return bad("`im` length differs from `x`");
        }
        if self.x.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("table nodes must increase strictly");
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> C64 {
        let val = |k: usize| C64::new(self.re[k], self.im.get(k).copied().unwrap_or(0.0));
        let n = self.x.len();
        if x <= self.x[0] {
            return val(0);
        }
        if x >= self.x[n - 1] {
            return val(n - 1);
        }
        let k = self.x.partition_point(|&t| t <= x) - 1;
        let s = (x - self.x[k]) / (self.x[k + 1] - self.x[k]);
        val(k) * (1.0 - s) + val(k + 1) * s
    }
}

/// Scalar coefficient of `x`: a number, an expression, or a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Value(Value),
    Table(Table),
}

impl Scalar {
    pub fn number(v: f64) -> Self {
        Scalar::Value(Value::Number(v))
    }

    pub fn expr(src: &str) -> Self {
        Scalar::Value(Value::expr(src))
    }

    fn validate(&self, field: &str, vars: &[&str]) -> Result<()> {
        match self {
            Scalar::Value(v) => v.compile(field, vars).map(|_| ()),
            Scalar::Table(t) => t.validate(field),
        }
    }

    pub fn coefficient(&self, field: &str) -> Result<Coefficient> {
        self.validate(field, &["x"])?;
        Ok(match self {
            Scalar::Value(Value::Number(v)) => Coefficient::Constant(C64::new(*v, 0.0)),
            Scalar::Value(Value::Expr(e)) => match e.constant() {
                Some(c) => Coefficient::Constant(c),
                None => {
                    let c = e.compile(&["x"])?;
                    Coefficient::function(move |x| c.eval_real(&[x]))
                }
            },
            Scalar::Table(t) => {
                let t = t.clone();
                Coefficient::function(move |x| t.eval(x))
            }
        })
    }
}

/// Matrix coefficient: a scalar (times the identity) or a row list of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Matrix {
    Rows(Vec<Vec<Scalar>>),
    Scalar(Scalar),
}

impl Matrix {
    fn validate(&self, field: &str, dim: usize, vars: &[&str]) -> Result<()> {
        match self {
            Matrix::Scalar(s) => s.validate(field, vars),
            Matrix::Rows(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Validation { field: field.into(), message: format!("expected a {dim}x{dim} matrix") });
                }
                rows.iter().flatten().try_for_each(|s| s.validate(field, vars))
            }
        }
    }

    pub fn coefficient(&self, field: &str, dim: usize) -> Result<MatrixCoefficient> {
        self.validate(field, dim, &["x"])?;
        let entries: Vec<Coefficient> = match self {
            Matrix::Scalar(s) => {
                let c = s.coefficient(field)?;
                if let Some(v) = c.constant_value() {
                    return Ok(MatrixCoefficient::Constant(CMat::identity(dim, dim) * v));
                }
                return Ok(MatrixCoefficient::function(move |x| CMat::identity(dim, dim) * c.at(x)));
            }
            Matrix::Rows(rows) => rows.iter().flatten().map(|s| s.coefficient(field)).collect::<Result<_>>()?,
        };
        let consts: Option<Vec<C64>> = entries.iter().map(|c| c.constant_value()).collect();
        Ok(match consts {
            Some(v) => MatrixCoefficient::Constant(CMat::from_row_slice(dim, dim, &v)),
            None => MatrixCoefficient::function(move |x| {
                let v: Vec<C64> = entries.iter().map(|c| c.at(x)).collect();
                CMat::from_row_slice(dim, dim, &v)
            }),
        })
    }

    /// Entries compiled against `vars`, row-major, for state-dependent matrices.
    pub fn compile(&self, field: &str, dim: usize, vars: &[&str]) -> Result<Vec<Compiled>> {
        self.validate(field, dim, vars)?;
        let one = |s: &Scalar| match s {
            Scalar::Value(v) => v.compile(field, vars),
            Scalar::Table(_) => {
                Err(Error::Validation { field: field.into(), message: "tables are not allowed here".into() })
            }
        };
        match self {
            Matrix::Scalar(s) => {
                let c = one(s)?;
                let zero = Compiled::constant(C64::new(0.0, 0.0));
                Ok((0..dim * dim).map(|k| if k % (dim + 1) == 0 { c.clone() } else { zero.clone() }).collect())
            }
            Matrix::Rows(rows) => rows.iter().flatten().map(one).collect(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn zero_value() -> Value {
    Value::Number(0.0)
}
fn one_values() -> Vec<Value> {
    vec![Value::Number(1.0)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSection {
    /// Order of the condition at 0; inferred from `alpha` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu1: Option<usize>,
    #[serde(default = "one_values")]
    pub alpha: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu2: Option<usize>,
    #[serde(default = "one_values")]
    pub beta: Vec<Value>,
}

impl Default for BcSection {
    fn default() -> Self {
        Self { mu1: None, alpha: one_values(), mu2: None, beta: one_values() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default = "default_domain")]
    pub domain: DomainKind,
    #[serde(default = "one")]
    pub b: f64,
    /// Far-field truncation; filled from the default rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default = "default_cells")]
    pub n_cells: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default = "zero_value")]
    pub lambda: Value,
    #[serde(default)]
    pub d: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "two")]
    pub q: f64,
    #[serde(default = "default_a")]
    pub a: Scalar,
    #[serde(default = "identity_matrix")]
    pub op: Matrix,
    #[serde(default = "zero_matrix")]
    pub a1: Matrix,
    #[serde(default = "zero_matrix")]
    pub a0: Matrix,
    #[serde(default)]
    pub bc: BcSection,
}

fn default_domain() -> DomainKind {
    DomainKind::FullLine
}
fn default_cells() -> usize {
    400
}
fn default_dim() -> usize {
    1
}
fn default_a() -> Scalar {
    Scalar::number(-1.0)
}
fn identity_matrix() -> Matrix {
    Matrix::Scalar(Scalar::number(1.0))
}
fn zero_matrix() -> Matrix {
    Matrix::Scalar(Scalar::number(0.0))
}

impl Default for ProblemSection {
    fn default() -> Self {
        toml::from_str("").expect("all problem fields have defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Kernel quadrature for constant coefficients, finite differences otherwise.
    #[default]
    Auto,
    Green,
    Fd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    /// One entry per component, or a single entry used for all of them.
    pub rhs: Vec<Scalar>,
    pub solver: SolverKind,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self { rhs: vec![Scalar::expr("exp(-x^2)")], solver: SolverKind::Auto }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepModel {
    /// `−εu'' + u + λu = f` on a line resolving the layer of each cell.
    #[default]
    Scalar,
    /// The `[problem]` with `ε` and `λ` replaced per cell.
    Problem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub model: SweepModel,
    pub eps_grid: Vec<f64>,
    pub lambda_moduli: Vec<f64>,
    pub lambda_args: Vec<f64>,
    pub phi: f64,
    pub rhs_samples: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            model: SweepModel::Scalar,
            eps_grid: vec![1.0, 1e-2, 1e-4],
            lambda_moduli: vec![1.0, 1e2, 1e4],
            lambda_args: vec![0.0, FRAC_PI_4, -FRAC_PI_4],
            phi: FRAC_PI_2,
            rhs_samples: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RboundSection {
    pub lambdas: Vec<Value>,
    pub trials: usize,
    pub vectors_per_trial: usize,
}

impl Default for RboundSection {
    fn default() -> Self {
        Self {
            lambdas: vec![Value::Number(1.0), Value::Number(10.0), Value::Number(100.0)],
            trials: 2000,
            vectors_per_trial: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParabolicSection {
    pub t_final: f64,
    pub n_steps: usize,
    /// Positive shift of the time-dependent problem.
    pub d: f64,
    /// Exponent of the outer time norm.
    pub p1: f64,
    pub integrator: Integrator,
    /// Forcing in `t` and `x`, one entry per component or one for all.
    pub forcing: Vec<Value>,
}

impl Default for ParabolicSection {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            n_steps: 20,
            d: 1.0,
            p1: 2.0,
            integrator: Integrator::ImplicitEuler,
            forcing: vec![Value::expr("exp(-x^2)")],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    /// Diagonal entries, one per component.
    pub a: Vec<Scalar>,
    /// Zero-order diagonal terms; empty means zero.
    pub b0: Vec<Scalar>,
    /// First-order diagonal terms; empty means zero.
    pub b1: Vec<Scalar>,
    pub delta: [f64; 2],
    pub phi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_bound: Option<f64>,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            a: [1.0, 2.0, 4.0, 8.0].iter().map(|&v| Scalar::number(v)).collect(),
            b0: Vec::new(),
            b1: Vec::new(),
            delta: [0.5, 0.25],
            phi: FRAC_PI_2,
            growth_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WentzellSection {
    /// Number of `y` cells on `[0, 1]`.
    pub m: usize,
    /// Coefficient of `u_xx`, in `t, x, y`.
    pub a: Value,
    pub a1: Value,
    pub b1: Value,
    pub c: Value,
    /// Robin coefficients of `u` at `y = 0` and `y = 1`.
    pub alpha0: [Value; 2],
    /// Robin coefficients of `u_y` at `y = 0` and `y = 1`.
    pub alpha1: [Value; 2],
    /// Lower bound required of `Re a1`.
    pub delta: f64,
    pub d: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub forcing: Value,
}

impl Default for WentzellSection {
    fn default() -> Self {
        let z = || Value::Number(0.0);
        Self {
            m: 16,
            a: Value::Number(-1.0),
            a1: Value::Number(1.0),
            b1: z(),
            c: z(),
            alpha0: [z(), z()],
            alpha1: [z(), z()],
            delta: 0.5,
            d: 1.0,
            t_final: 1.0,
            n_steps: 20,
            forcing: Value::expr("exp(-x^2)*cos(pi*y)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearSection {
    /// State-dependent leading operator in `x, u, du` (or `u1.., du1..`); must equal `[problem].op` at `u = 0`.
    pub b: Matrix,
    /// Lower-order nonlinearity, one entry per component or one for all.
    pub nonlinearity: Vec<Value>,
    pub rhs: Vec<Scalar>,
    pub radius: f64,
    /// Lipschitz bound of the state dependence as a function of `r`.
    pub lipschitz: Value,
    pub h1: f64,
    pub h2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for NonlinearSection {
    fn default() -> Self {
        Self {
            b: Matrix::Scalar(Scalar::expr("1 + 0.01*u^2")),
            nonlinearity: vec![Value::Number(0.0)],
            rhs: vec![Scalar::expr("sin(pi*x)")],
            radius: 0.0,
            lipschitz: Value::expr("0.02*r"),
            h1: 0.0,
            h2: 0.0,
            max_iter: 100,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub j: usize,
    pub m: usize,
    pub mu: f64,
    pub h_grid: Vec<f64>,
    pub panel_size: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self { j: 1, m: 2, mu: 0.25, h_grid: vec![0.05, 0.1, 0.2, 0.4], panel_size: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    pub x0: f64,
    pub j: usize,
    pub m: usize,
    pub eps_grid: Vec<f64>,
    /// Random bumps per `ε` scale.
    pub panel_size: usize,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self { x0: 0.0, j: 0, m: 2, eps_grid: vec![1.0, 1e-2, 1e-4], panel_size: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// Write full space-time trajectories to `cells.csv` for time-dependent commands.
    pub trajectory: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), trajectory: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rbound: Option<RboundSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parabolic: Option<ParabolicSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wentzell: Option<WentzellSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinear: Option<NonlinearSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSection>,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses, fills defaults and validates. Sections of the selected command that are
/// absent are filled with their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        Error::Parse { line, column, message: e.message().to_string() }
    })?;
    if let Some(c) = cfg.command {
        cfg.select(c)?;
    } else {
        cfg.fill_defaults()?;
    }
    Ok(cfg)
}

/// Inverse of [`parse_config`] on validated configs.
pub fn serialize_config(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Validation { field: "config".into(), message: e.to_string() })
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::Validation { field: field.into(), message: message.into() }
}

fn check_exponent(field: &str, v: f64) -> Result<()> {
    if v > 1.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} not in (1, inf)")))
    }
}

fn check_per_component(field: &str, len: usize, dim: usize) -> Result<()> {
    if len == 1 || len == dim {
        Ok(())
    } else {
        Err(invalid(field, format!("{len} entries for {dim} components")))
    }
}

impl RunConfig {
    /// Sets the command, filling its section with defaults, and revalidates.
    pub fn select(&mut self, command: Command) -> Result<()> {
        if let Some(c) = self.command {
            if c != command {
                return Err(invalid("command", format!("config is for `{}`, not `{}`", c.name(), command.name())));
            }
        }
        self.command = Some(command);
        match command {
            Command::Solve => {
                self.solve.get_or_insert_with(Default::default);
            }
            Command::Sweep => {
                self.sweep.get_or_insert_with(Default::default);
            }
            Command::Rbound => {
                self.rbound.get_or_insert_with(Default::default);
            }
            Command::Parabolic => {
                self.parabolic.get_or_insert_with(Default::default);
            }
            Command::System => {
                self.parabolic.get_or_insert_with(Default::default);
                self.system.get_or_insert_with(Default::default);
            }
            Command::Wentzell => {
                self.wentzell.get_or_insert_with(Default::default);
            }
            Command::Nonlinear => {
                self.nonlinear.get_or_insert_with(Default::default);
            }
            Command::ProbeEmbedding => {
                self.embedding.get_or_insert_with(Default::default);
            }
            Command::ProbeTrace => {
                self.trace.get_or_insert_with(Default::default);
            }
        }
        self.fill_defaults()
    }

    fn fill_defaults(&mut self) -> Result<()> {
        let pr = &mut self.problem;
        let bc = &mut pr.bc;
        for (field, mu, coeffs) in [("bc.mu1", &mut bc.mu1, &bc.alpha), ("bc.mu2", &mut bc.mu2, &bc.beta)] {
            if let Some(m) = *mu {
                if m > 1 {
                    return Err(invalid(field, format!("order {m} not in {{0, 1}}")));
                }
                if m + 1 != coeffs.len() {
                    return Err(invalid(field, format!("order {m} needs {} coefficients, got {}", m + 1, coeffs.len())));
                }
            }
            if coeffs.is_empty() || coeffs.len() > 2 {
                return Err(invalid(field, format!("{} coefficients, order must be 0 or 1", coeffs.len())));
            }
            *mu = Some(coeffs.len() - 1);
        }
        if pr.length.is_none() {
            let lambda = pr.lambda.constant("problem.lambda")?;
            pr.length = Some(if pr.domain == DomainKind::Interval { pr.b } else { default_length(pr.eps, lambda, pr.b) });
        }
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        let pr = &self.problem;
        if !(pr.eps > 0.0 && pr.eps.is_finite()) {
            return Err(invalid("problem.eps", "must be positive"));
        }
        if !(pr.d >= 0.0 && pr.d.is_finite()) {
            return Err(invalid("problem.d", "must be nonnegative"));
        }
        if !(pr.b > 0.0 && pr.b.is_finite()) {
            return Err(invalid("problem.b", "must be positive"));
        }
        if !pr.length.is_some_and(|l| l > 0.0 && l.is_finite()) {
            return Err(invalid("problem.length", "must be positive"));
        }
        if pr.n_cells < 4 {
            return Err(invalid("problem.n_cells", "need at least 4 cells"));
        }
        if pr.dim == 0 {
            return Err(invalid("problem.dim", "must be positive"));
        }
        check_exponent("problem.p", pr.p)?;
        check_exponent("problem.q", pr.q)?;
        pr.lambda.constant("problem.lambda")?;
        pr.a.validate("problem.a", &["x"])?;
        pr.op.validate("problem.op", pr.dim, &["x"])?;
        pr.a1.validate("problem.a1", pr.dim, &["x"])?;
        pr.a0.validate("problem.a0", pr.dim, &["x"])?;
        self.boundary_conditions()?;
        if let Some(s) = &self.solve {
            check_per_component("solve.rhs", s.rhs.len(), pr.dim)?;
            s.rhs.iter().try_for_each(|f| f.validate("solve.rhs", &["x"]))?;
        }
        if let Some(s) = &self.sweep {
            self.sweep_config(s).validate()?;
        }
        if let Some(s) = &self.rbound {
            if s.lambdas.is_empty() || s.trials == 0 || s.vectors_per_trial == 0 {
                return Err(invalid("rbound", "need lambdas, trials and vectors_per_trial"));
            }
            s.lambdas.iter().try_for_each(|l| l.constant("rbound.lambdas").map(|_| ()))?;
        }
        if let Some(s) = &self.parabolic {
            if !(s.t_final > 0.0 && s.t_final.is_finite()) || s.n_steps == 0 {
                return Err(invalid("parabolic", "need t_final > 0 and n_steps > 0"));
            }
            if !(s.d > 0.0 && s.d.is_finite()) {
                return Err(invalid("parabolic.d", "must be positive"));
            }
            check_exponent("parabolic.p1", s.p1)?;
            let dim = if self.command == Some(Command::System) { self.system.as_ref().map_or(pr.dim, |s| s.a.len()) } else { pr.dim };
            check_per_component("parabolic.forcing", s.forcing.len(), dim)?;
            s.forcing.iter().try_for_each(|f| f.compile("parabolic.forcing", &["t", "x"]).map(|_| ()))?;
        }
        if let Some(s) = &self.system {
            if s.a.is_empty() {
                return Err(invalid("system.a", "need at least one component"));
            }
            for (field, v) in [("system.b0", &s.b0), ("system.b1", &s.b1)] {
                if !v.is_empty() && v.len() != s.a.len() {
                    return Err(invalid(field, format!("{} entries for {} components", v.len(), s.a.len())));
                }
            }
            s.a.iter().chain(&s.b0).chain(&s.b1).try_for_each(|c| c.validate("system", &["x"]))?;
            Sector::new(s.phi).map_err(|e| invalid("system.phi", e.to_string()))?;
        }
        if let Some(s) = &self.wentzell {
            if s.m < 8 {
                return Err(invalid("wentzell.m", "need at least 8 cells in y"));
            }
            if !(s.t_final > 0.0) || s.n_steps == 0 || !(s.d > 0.0) {
                return Err(invalid("wentzell", "need t_final > 0, n_steps > 0 and d > 0"));
            }
            let vars = ["t", "x", "y"];
            for (field, v) in [("wentzell.a", &s.a), ("wentzell.a1", &s.a1), ("wentzell.b1", &s.b1), ("wentzell.c", &s.c), ("wentzell.forcing", &s.forcing)] {
                v.compile(field, &vars)?;
            }
            s.alpha0.iter().chain(&s.alpha1).try_for_each(|v| v.constant("wentzell.alpha").map(|_| ()))?;
        }
        if let Some(s) = &self.nonlinear {
            let vars = state_variables(pr.dim);
            let names: Vec<&str> = vars.iter().map(String::as_str).collect();
            s.b.compile("nonlinear.b", pr.dim, &names)?;
            check_per_component("nonlinear.nonlinearity", s.nonlinearity.len(), pr.dim)?;
            s.nonlinearity.iter().try_for_each(|v| v.compile("nonlinear.nonlinearity", &names).map(|_| ()))?;
            check_per_component("nonlinear.rhs", s.rhs.len(), pr.dim)?;
            s.rhs.iter().try_for_each(|f| f.validate("nonlinear.rhs", &["x"]))?;
            s.lipschitz.compile("nonlinear.lipschitz", &["r"])?;
            if s.max_iter == 0 || !(s.tol > 0.0) {
                return Err(invalid("nonlinear", "need max_iter > 0 and tol > 0"));
            }
        }
        if let Some(s) = &self.embedding {
            if s.panel_size == 0 || s.h_grid.is_empty() {
                return Err(invalid("embedding", "need a panel and an h grid"));
            }
        }
        if let Some(s) = &self.trace {
            if s.panel_size == 0 || s.eps_grid.is_empty() || s.eps_grid.iter().any(|e| !(*e > 0.0)) {
                return Err(invalid("trace", "need a panel and positive eps values"));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> DomainSpec {
        let pr = &self.problem;
        let length = pr.length.expect("filled by parse_config");
        DomainSpec { kind: pr.domain, b: pr.b, length: if pr.domain == DomainKind::Interval { pr.b } else { length }, n_cells: pr.n_cells }
    }

    pub fn boundary_conditions(&self) -> Result<BoundaryConditionSet> {
        let pr = &self.problem;
        let conv = |field: &str, v: &[Value]| v.iter().map(|c| c.constant(field)).collect::<Result<Vec<_>>>();
        let bc = BoundaryConditionSet { alpha: conv("bc.alpha", &pr.bc.alpha)?, beta: conv("bc.beta", &pr.bc.beta)?, p: pr.p };
        if matches!(pr.domain, DomainKind::FullLine) {
            return Ok(bc);
        }
        bc.validate().map_err(|e| match e {
            Error::Validation { field, message } => invalid(&format!("problem.bc.{field}"), message),
            other => other,
        })?;
        Ok(bc)
    }

    pub fn sweep_config(&self, s: &SweepSection) -> crate::coercivity::SweepConfig {
        crate::coercivity::SweepConfig {
            eps_grid: s.eps_grid.clone(),
            lambda_moduli: s.lambda_moduli.clone(),
            lambda_args: s.lambda_args.clone(),
            phi: s.phi,
            rhs_samples: s.rhs_samples,
            seed: self.seed,
        }
    }
}

/// Names available to state-dependent expressions: `x`, `u1..`, `du1..`, plus `u`, `du`
/// for the first component.
pub fn state_variables(dim: usize) -> Vec<String> {
    let mut v = vec!["x".to_string(), "u".into(), "du".into()];
    v.extend((1..=dim).map(|k| format!("u{k}")));
    v.extend((1..=dim).map(|k| format!("du{k}")));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_solve_defaults() {
        let c = parse_config("command = \"solve\"\n").unwrap();
        let p = &c.problem;
        assert_eq!((p.eps, p.d, p.p, p.q), (1.0, 0.0, 2.0, 2.0));
        assert_eq!(p.lambda.constant("l").unwrap(), C64::new(0.0, 0.0));
        assert_eq!(p.length, Some(default_length(1.0, C64::new(0.0, 0.0), 1.0)));
        assert_eq!(p.bc.mu1, Some(0));
        assert!(c.solve.is_some());
        assert_eq!(c.output.dir, "out");
    }

    #[test]
    fn boundary_order_two_rejected() {
        let text = "command = \"solve\"\n[problem]\ndomain = \"half_line\"\n[problem.bc]\nmu1 = 2\nalpha = [1, 0, 1]\n";
        match parse_config(text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "bc.mu1"),
            other => panic!("{other:?}"),
        }
        let text = "[problem]\ndomain = \"half_line\"\n[problem.bc]\nalpha = [1, 0, 1]\n";
        assert!(matches!(parse_config(text), Err(Error::Validation { .. })));
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = "command = \"solve\"\n[problem]\neps = 0.5\nepsilon = 1\n";
        match parse_config(text) {
            Err(Error::Parse { line, column, message }) => {
                assert_eq!((line, column), (4, 1), "{message}");
                assert!(message.contains("epsilon"));
            }
            other => panic!("{other:?}"),
        }
        match parse_config("command = \"solve\"\n[problem]\neps = \n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_expression_and_variable() {
        assert!(matches!(parse_config("[problem]\na = \"-1 +* x\"\n"), Err(Error::Parse { line: 2, .. })));
        match parse_config("[problem]\na = \"-1 - y\"\n") {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "problem.a"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_wentzell_round_trip() {
        let text = r#"
command = "wentzell"
seed = 7

[output]
dir = "runs/w"
trajectory = false

[problem]
domain = "exterior"
b = 1.0
length = 6.0
n_cells = 120
eps = 1.0
p = 2.0
a = "-1 - 0.1*exp(-x^2)"

[problem.bc]
alpha = [0.0, 1.0]
beta = [1.0]

[wentzell]
m = 12
a = "-(1 + 0.2*sin(t))"
a1 = "1 + y/2"
b1 = "0.1*x"
c = "-0.5"
alpha0 = [1.0, "0.5 + 0.1*i"]
alpha1 = [0.0, 2.0]
delta = 0.5
d = 1.5
t_final = 0.5
n_steps = 10
forcing = "exp(-x^2)*cos(pi*y)*t"
"#;
        let c = parse_config(text).unwrap();
        let out = serialize_config(&c).unwrap();
        let back = parse_config(&out).unwrap();
        assert_eq!(back, c);
        assert_eq!(serialize_config(&back).unwrap(), out);
        let w = c.wentzell.as_ref().unwrap();
        assert_eq!(w.alpha0[1].constant("a").unwrap(), C64::new(0.5, 0.1));
    }

    #[test]
    fn coefficients_build() {
        let text = r#"
[problem]
dim = 2
op = [["1 + x^2", 0], [0.5, 2]]
a0 = { x = [0.0, 1.0], re = [0.0, 2.0] }
"#;
        let c = parse_config(text).unwrap();
        let op = c.problem.op.coefficient("op", 2).unwrap();
        assert_eq!(op.at(2.0)[(0, 0)], C64::new(5.0, 0.0));
        assert_eq!(op.at(2.0)[(1, 0)], C64::new(0.5, 0.0));
        let m = Matrix::Scalar(c.problem.a0.clone().into_scalar());
        assert_eq!(m.coefficient("a0", 2).unwrap().at(0.25)[(1, 1)], C64::new(0.5, 0.0));
        assert_eq!(m.coefficient("a0", 2).unwrap().at(7.0)[(0, 0)], C64::new(2.0, 0.0));
        assert!(parse_config("[problem]\ndim = 2\nop = [[1, 0]]\n").is_err());
    }

    impl Matrix {
        fn into_scalar(self) -> Scalar {
            match self {
                Matrix::Scalar(s) => s,
                Matrix::Rows(_) => panic!("not a scalar"),
            }
        }
    }

    #[test]
    fn command_mismatch_rejected() {
        let mut c = parse_config("command = \"sweep\"\n").unwrap();
        assert!(c.select(Command::Solve).is_err());
        assert!(c.select(Command::Sweep).is_ok());
    }
}
