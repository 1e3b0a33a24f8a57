use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use lbreg::certificates::{nu_constant, recovery_thresholds, rip_constant_with_cap, RIP_SUPPORT_CAP};
use lbreg::harness::{run_convergence, run_phase, ConvergenceConfig, ExperimentConfig, SignalKind};
use lbreg::io;
use lbreg::linalg::DenseMatrix;
use lbreg::models::{Model, PrimalPoint, SensingOperator};
use lbreg::solvers::{solve, SolverOptions, Status, Variant};

#[derive(Parser)]
#[command(name = "lbreg", version, about = "Linearized Bregman solvers, certificates and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Phase-transition sweep over (m, k, alpha); writes trials.csv and curves.csv.
    Phase(PhaseArgs),
    /// Runs fixed, kicking and BB on one instance; writes per-iteration errors.
    Convergence(ConvergenceArgs),
    /// Solves one augmented model from CSV inputs.
    Solve(SolveArgs),
    /// Computes certificate constants and prints them as JSON.
    Certify {
        #[command(subcommand)]
        what: Certify,
    },
}

#[derive(Args)]
struct PhaseArgs {
    /// TOML file with experiment settings; missing keys take desk-scale defaults.
    #[arg(long, conflicts_with = "full_scale")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Use the full-size grid (slow).
    #[arg(long = "paper-scale")]
    full_scale: bool,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long, default_value_t = 12)]
    k: usize,
    #[arg(long, default_value = "gaussian")]
    kind: SignalKind,
    #[arg(long, default_value_t = 10.0)]
    alpha_mult: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iter: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Dense sensing matrix CSV.
    #[arg(long, group = "operator")]
    matrix: Option<PathBuf>,
    /// Entry-sampler file (`n1,n2` header then `i,j` rows).
    #[arg(long, group = "operator")]
    sampler: Option<PathBuf>,
    /// Stacked measurement matrices CSV; requires --trace-index.
    #[arg(long, group = "operator", requires = "trace_index")]
    trace_list: Option<PathBuf>,
    /// Index CSV for --trace-list with rows `i,start_row,n1,n2`.
    #[arg(long)]
    trace_index: Option<PathBuf>,
    /// Right-hand side vector CSV.
    #[arg(long)]
    rhs: PathBuf,
    #[arg(long)]
    alpha: f64,
    /// Noise level; 0 solves the equality-constrained model.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value = "bb")]
    variant: Variant,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Fixed step size; defaults to 1/L.
    #[arg(long)]
    step: Option<f64>,
    /// Write the solution here (vector or matrix CSV).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-iteration trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also write y and x iterates next to the trace (`<trace>.y.csv`, `<trace>.x.csv`).
    #[arg(long, requires = "trace")]
    dump_iterates: bool,
}

#[derive(Subcommand)]
enum Certify {
    /// Restricted isometry constant by enumerating supports.
    Rip {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        k: usize,
        /// Refuse when more supports than this would be enumerated.
        #[arg(long, default_value_t = RIP_SUPPORT_CAP)]
        cap: u128,
    },
    /// Strong-convexity constant and safe step for a solution.
    Nu {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        xstar: PathBuf,
        #[arg(long)]
        alpha: f64,
    },
    /// Exact and stable recovery thresholds.
    Thresholds {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        xsinf: f64,
        #[arg(long, default_value_t = 0.0)]
        xzinf: f64,
        /// ‖x⁰‖∞; defaults to max(xsinf, xzinf).
        #[arg(long)]
        xinf: Option<f64>,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn phase(args: PhaseArgs) -> Result<()> {
    let cfg = if args.full_scale {
        ExperimentConfig::full_scale()
    } else if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        ExperimentConfig::from_toml(&text)?
    } else {
        ExperimentConfig::default()
    };
    fs::create_dir_all(&args.out)?;
    let out = run_phase(&cfg)?;
    io::write_trials(create(&args.out.join("trials.csv"))?, &out.trials)?;
    io::write_curves(create(&args.out.join("curves.csv"))?, &out.curves)?;
    eprintln!(
        "{} trials, {} cells written to {}",
        out.trials.len(),
        out.cells.len(),
        args.out.display()
    );
    Ok(())
}

fn convergence(args: ConvergenceArgs) -> Result<()> {
    let cfg = ConvergenceConfig {
        m: args.m,
        n: args.n,
        k: args.k,
        kind: args.kind,
        alpha_multiple: args.alpha_mult,
        seed: args.seed,
        tol: args.tol,
        max_iter: args.max_iter,
    };
    let out = run_convergence(&cfg)?;
    io::write_conv(create(&args.out)?, &out.rows)?;
    for run in &out.runs {
        eprintln!("{}: {} iterations ({:?})", run.variant.name(), run.trace.iterations(), run.trace.status);
    }
    Ok(())
}

fn load_operator(args: &SolveArgs) -> Result<SensingOperator> {
    Ok(match (&args.matrix, &args.sampler, &args.trace_list, &args.trace_index) {
        (Some(p), None, None, _) => SensingOperator::dense(io::read_matrix(p)?)?,
        (None, Some(p), None, _) => io::read_sampler(p)?,
        (None, None, Some(p), Some(idx)) => io::read_trace_list(p, idx)?,
        _ => bail!("give exactly one of --matrix, --sampler or --trace-list (with --trace-index)"),
    })
}

fn sidecar(trace: &Path, tag: &str) -> PathBuf {
    let mut name = trace.file_stem().unwrap_or_default().to_os_string();
    name.push(format!(".{tag}.csv"));
    trace.with_file_name(name)
}

fn solve_cmd(args: SolveArgs) -> Result<()> {
    let op = load_operator(&args)?;
    let b = io::read_vector(&args.rhs)?;
    let model = Model::new(op, b, args.alpha, args.sigma)?;
    let mut opts = SolverOptions::new(args.variant)
        .with_tol(args.tol)
        .with_max_iter(args.max_iter);
    opts.h = args.step;
    opts.keep_iterates = args.dump_iterates;
    let t = solve(&model, &opts)?;
    if let Some(path) = &args.out {
        match &t.final_x {
            PrimalPoint::Vector(x) => io::write_vector(create(path)?, x)?,
            PrimalPoint::Matrix(x) => io::write_matrix(create(path)?, x)?,
        }
    }
    if let Some(path) = &args.trace {
        io::write_trace(create(path)?, &t)?;
        if args.dump_iterates {
            io::write_iterates(create(&sidecar(path, "y"))?, create(&sidecar(path, "x"))?, &t)?;
        }
    }
    let last = t.last();
    let summary = json!({
        "variant": t.variant.name(),
        "status": if t.status == Status::Converged { "converged" } else { "max_iter" },
        "iterations": t.iterations(),
        "step": t.h,
        "grad_norm": last.grad_norm,
        "primal_residual": last.primal_residual,
        "dual_objective": last.f,
        "primal_objective": model.primal_objective(&t.final_x)?,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn certify(what: Certify) -> Result<()> {
    let report = match what {
        Certify::Rip { matrix, k, cap } => {
            let a: DenseMatrix = io::read_matrix(&matrix)?;
            serde_json::to_value(rip_constant_with_cap(&a, k, cap)?)?
        }
        Certify::Nu { matrix, xstar, alpha } => {
            let a = io::read_matrix(&matrix)?;
            let x = io::read_vector(&xstar)?;
            serde_json::to_value(nu_constant(&a, &x, alpha)?)?
        }
        Certify::Thresholds {
            delta,
            alpha,
            xsinf,
            xzinf,
            xinf,
        } => {
            let xinf = xinf.unwrap_or(xsinf.max(xzinf));
            serde_json::to_value(recovery_thresholds(delta, alpha, xsinf, xzinf, xinf)?)?
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Phase(a) => phase(a),
        Command::Convergence(a) => convergence(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Certify { what } => certify(what),
    }
}
