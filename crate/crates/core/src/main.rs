use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use exterior_bvp::config::{parse_config, Command};
use exterior_bvp::run::{record_failure, run};
use exterior_bvp::Error;

#[derive(Parser)]
#[command(name = "exbvp", version, about = "Solvers and estimate harness for singularly perturbed boundary value problems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one elliptic problem.
    Solve(RunArgs),
    /// Coercivity sweep over the (eps, lambda) grid.
    Sweep(RunArgs),
    /// R-bound estimate of a resolvent family.
    Rbound(RunArgs),
    /// Time-dependent problem with mixed-norm estimate terms.
    Parabolic(RunArgs),
    /// Diagonal system of time-dependent problems.
    System(RunArgs),
    /// Two-dimensional run with boundary rows in the second variable.
    Wentzell(RunArgs),
    /// Fixed-point solve of a quasilinear problem.
    Nonlinear(RunArgs),
    /// Embedding constant probe.
    ProbeEmbedding(RunArgs),
    /// Trace constant probe.
    ProbeTrace(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; all defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Cmd {
    fn split(self) -> (Command, RunArgs) {
        match self {
            Cmd::Solve(a) => (Command::Solve, a),
            Cmd::Sweep(a) => (Command::Sweep, a),
            Cmd::Rbound(a) => (Command::Rbound, a),
            Cmd::Parabolic(a) => (Command::Parabolic, a),
            Cmd::System(a) => (Command::System, a),
            Cmd::Wentzell(a) => (Command::Wentzell, a),
            Cmd::Nonlinear(a) => (Command::Nonlinear, a),
            Cmd::ProbeEmbedding(a) => (Command::ProbeEmbedding, a),
            Cmd::ProbeTrace(a) => (Command::ProbeTrace, a),
        }
    }
}

fn fail(e: &Error) -> ExitCode {
    let report = serde_json::json!({ "class": e.class(), "message": e.to_string() });
    eprintln!("{report}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let (command, args) = Cli::parse().command.split();
    if let Some(n) = args.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&Error::Validation { field: "--jobs".into(), message: e.to_string() });
        }
    }
    let text = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(&Error::Io(format!("{}: {e}", path.display()))),
        },
        None => String::new(),
    };
    let parsed = parse_config(&text).and_then(|mut cfg| {
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        cfg.select(command)?;
        Ok(cfg)
    });
    let cfg = match parsed {
        Ok(c) => c,
        Err(e) => {
            let out = args.out.unwrap_or_else(|| PathBuf::from("out"));
            let _ = record_failure(&out, command.name(), &text, &e);
            return fail(&e);
        }
    };
    let out = args.out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    match run(&cfg, &text, &out) {
        Ok(record) => {
            println!("{}: ok, {} file(s) in {}", record.command, record.files.len(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
