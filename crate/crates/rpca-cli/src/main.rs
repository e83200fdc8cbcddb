//! `rpca`: generate benchmark instances, run decomposition solvers, sweep
//! phase-transition grids, and compare matrices.
//!
//! Exit codes: 0 success, 1 argument error, 2 I/O error, 3 numerical
//! failure, 4 non-convergence under `--strict`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rpca_core::baselines::{mc_alm, pcp_alm, trace_variant_solve};
use rpca_core::bench::{
    grid_to_tsv, nrmse, run_sweep, write_results_csv, Method, SweepSpec,
};
use rpca_core::io::{format_f64, read_matrix, read_support, write_matrix, write_support, write_text};
use rpca_core::solver::{solve, GammaVariant, SolverConfig};
use rpca_core::synth::{generate, SyntheticKind, SyntheticSpec};
use rpca_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_STRICT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "rpca",
    version,
    about = "Low-rank plus sparse decomposition laboratory"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a seeded synthetic instance (matrix files + support file).
    Gen(GenArgs),
    /// Decompose a matrix file with one of the solvers.
    Solve(SolveArgs),
    /// Run a phase-transition sweep and write a results CSV.
    Bench(BenchArgs),
    /// Print the normalized error between two matrix files.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Data kind: a (normal factors), b (uniform factors), hard (cubed spike).
    #[arg(long = "type", value_name = "a|b|hard")]
    kind: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    /// Target rank of the clean component (ignored for hard, which is rank 1).
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// Outlier probability per entry.
    #[arg(long)]
    rho: f64,
    /// Outlier magnitude range; defaults depend on the data kind.
    #[arg(long = "mag-lo")]
    mag_lo: Option<f64>,
    #[arg(long = "mag-hi")]
    mag_hi: Option<f64>,
    #[arg(long)]
    seed: u64,
    /// Writes <prefix>.y, <prefix>.z, <prefix>.e and <prefix>.omega.
    #[arg(long = "out-prefix")]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// pb | pb-nosym | pb-trace | pcp | mc
    #[arg(long)]
    method: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out-z")]
    out_z: PathBuf,
    #[arg(long = "out-e")]
    out_e: Option<PathBuf>,
    /// Support file of clean/observed entries (required by mc).
    #[arg(long)]
    omega: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Outlier-variance update rule: paper | esq | esq-half.
    #[arg(long = "gamma-variant")]
    gamma_variant: Option<String>,
    /// Exit 4 when the solver stops without converging.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Outlier-ratio grid as a:b:step (inclusive).
    #[arg(long = "grid-rho")]
    grid_rho: String,
    /// Rank-ratio grid as a:b:step (inclusive).
    #[arg(long = "grid-rank")]
    grid_rank: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Comma-separated method list.
    #[arg(long, default_value = "pb,pcp,mc")]
    methods: String,
    /// Data kind: a | b | hard.
    #[arg(long, default_value = "a")]
    data: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Worker count; falls back to RPCA_JOBS, then 1.
    #[arg(long)]
    jobs: Option<usize>,
    /// Success threshold on the normalized error.
    #[arg(long, default_value_t = 0.001)]
    threshold: f64,
    /// Also write per-method success grids to <prefix>.<method>.grid.
    #[arg(long = "grid-out")]
    grid_out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Reference matrix (denominator of the normalized error).
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

fn main() -> ExitCode {
    rpca_core::linalg::blas_single_thread();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Version/help requests are not errors.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("rpca: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Dimension(_) | Error::SizeCap(_) => EXIT_USAGE,
        Error::Io { .. } | Error::Parse { .. } => EXIT_IO,
        Error::Numerical(_) | Error::NonConvergence(_) => EXIT_NUMERICAL,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.cmd {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Solve(args) => cmd_solve(args),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Compare(args) => cmd_compare(args),
    }
}

fn parse_kind(s: &str) -> Result<SyntheticKind, Error> {
    match s {
        "a" => Ok(SyntheticKind::TypeA),
        "b" => Ok(SyntheticKind::TypeB),
        "hard" => Ok(SyntheticKind::Hard),
        other => Err(Error::invalid(format!(
            "unknown data kind '{other}' (expected a|b|hard)"
        ))),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_gen(args: GenArgs) -> Result<u8, Error> {
    let kind = parse_kind(&args.kind)?;
    let (def_lo, def_hi) = kind.default_magnitude();
    let spec = SyntheticSpec::with_magnitude(
        kind,
        args.n,
        args.m,
        args.rank,
        args.rho,
        args.mag_lo.unwrap_or(def_lo),
        args.mag_hi.unwrap_or(def_hi),
        args.seed,
    )?;
    let inst = generate(&spec)?;
    write_matrix(&with_suffix(&args.out_prefix, ".y"), &inst.y)?;
    write_matrix(&with_suffix(&args.out_prefix, ".z"), &inst.z_gt)?;
    write_matrix(&with_suffix(&args.out_prefix, ".e"), &inst.e_gt)?;
    write_support(&with_suffix(&args.out_prefix, ".omega"), &inst.support)?;
    Ok(0)
}

fn cmd_solve(args: SolveArgs) -> Result<u8, Error> {
    let y = read_matrix(&args.input)?;
    let (iters, converged, z, e): (usize, bool, _, Option<_>) = match args.method.as_str() {
        "pb" | "pb-nosym" => {
            let mut cfg = SolverConfig {
                symmetric: args.method == "pb",
                ..SolverConfig::default()
            };
            if let Some(l) = args.lambda {
                cfg.lambda = l;
            }
            if let Some(t) = args.tol {
                cfg.outer_tol = t;
            }
            if let Some(k) = args.max_iters {
                cfg.max_outer_iters = k;
            }
            if let Some(v) = &args.gamma_variant {
                cfg.gamma_variant = GammaVariant::parse(v)?;
            }
            let dec = solve(&y, &cfg)?;
            (dec.outer_iters, dec.converged, dec.z, Some(dec.e))
        }
        "pcp" => {
            let r = pcp_alm(
                &y,
                args.lambda.unwrap_or(0.0),
                args.tol.unwrap_or(1e-7),
                args.max_iters.unwrap_or(500),
            )?;
            (r.iterations, r.converged, r.z, Some(r.e))
        }
        "mc" => {
            let omega_path = args
                .omega
                .as_ref()
                .ok_or_else(|| Error::invalid("--method mc requires --omega"))?;
            let omega = read_support(omega_path, y.nrows(), y.ncols())?;
            let r = mc_alm(
                &y,
                &omega,
                args.tol.unwrap_or(1e-7),
                args.max_iters.unwrap_or(500),
            )?;
            (r.iterations, r.converged, r.z, None)
        }
        "pb-trace" => {
            let r = trace_variant_solve(
                &y,
                args.lambda.unwrap_or(1e-3),
                args.tol.unwrap_or(1e-10),
                args.max_iters.unwrap_or(4000),
            )?;
            (
                r.iterations,
                r.converged,
                &r.state.z_c + &r.state.z_r,
                Some(r.state.e),
            )
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown method '{other}' (expected pb|pb-nosym|pb-trace|pcp|mc)"
            )))
        }
    };
    write_matrix(&args.out_z, &z)?;
    if let Some(out_e) = &args.out_e {
        match e {
            Some(e) => write_matrix(out_e, &e)?,
            None => eprintln!("rpca: note: method '{}' has no sparse component; --out-e skipped", args.method),
        }
    }
    println!("method={} iters={} converged={}", args.method, iters, converged);
    if args.strict && !converged {
        return Ok(EXIT_STRICT);
    }
    Ok(0)
}

/// Parses `a:b:step` into an inclusive ascending grid.
fn parse_grid(s: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::invalid(format!(
            "grid '{s}' must have the form a:b:step"
        )));
    }
    let a: f64 = parts[0]
        .parse()
        .map_err(|_| Error::invalid(format!("bad grid start '{}'", parts[0])))?;
    let b: f64 = parts[1]
        .parse()
        .map_err(|_| Error::invalid(format!("bad grid end '{}'", parts[1])))?;
    let step: f64 = parts[2]
        .parse()
        .map_err(|_| Error::invalid(format!("bad grid step '{}'", parts[2])))?;
    if !(a.is_finite() && b.is_finite() && step.is_finite()) || step <= 0.0 || b < a {
        return Err(Error::invalid(format!("grid '{s}' is not an ascending range")));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| a + k as f64 * step).collect())
}

fn cmd_bench(args: BenchArgs) -> Result<u8, Error> {
    let methods = args
        .methods
        .split(',')
        .map(|s| Method::parse(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = SweepSpec {
        n: args.n,
        m: args.m,
        rho_grid: parse_grid(&args.grid_rho)?,
        rank_ratio_grid: parse_grid(&args.grid_rank)?,
        trials_per_cell: args.trials,
        methods,
        data_kind: parse_kind(&args.data)?,
        base_seed: args.seed,
        success_threshold: args.threshold,
    };
    let jobs = match args.jobs {
        Some(j) => j,
        None => std::env::var("RPCA_JOBS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or(1),
    };
    let sweep = run_sweep(&spec, jobs)?;
    write_results_csv(&sweep.results, &args.out)?;
    if let Some(prefix) = &args.grid_out {
        for grid in &sweep.grids {
            let path = with_suffix(prefix, &format!(".{}.grid", grid.method.name()));
            write_text(&path, &grid_to_tsv(grid))?;
        }
    }
    Ok(0)
}

fn cmd_compare(args: CompareArgs) -> Result<u8, Error> {
    let a = read_matrix(&args.a)?;
    let b = read_matrix(&args.b)?;
    let err = nrmse(&b, &a)?;
    println!("nrmse={}", format_f64(err));
    Ok(0)
}
