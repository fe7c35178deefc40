//! Command line front end for the infograd library.
//!
//! Every subcommand prints one JSON run report to standard output. The
//! report's `report` field holds only numerical results and is
//! reproducible bit for bit given the same inputs and seed; paths, input
//! hashes, and wall-clock time live outside it so provenance never
//! contaminates the comparison surface.
//!
//! Exit codes: 0 success, 1 verification checks failed, 2 invalid input,
//! 3 computation infeasible at the requested accuracy.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use infograd::bregman::{
    gaussian_generator, matrix_divergence, outer_square_generator, poisson_generator,
    scaled_count, scaled_square, squared, stacked_scalar, xlogx, xlogx_minus_x, neg_log,
    MatrixGenerator,
};
use infograd::channels::{GaussianChannel, PoissonChannel};
use infograd::design::{
    design_phi, round_to_binary, Constraint, DesignMi, DesignOptions, DesignProblem,
};
use infograd::gradients::{
    fd_gradients_gaussian, fd_gradients_poisson, gaussian_gradient, poisson_gradients_enum_with_cap,
    poisson_gradients_mc, GradientEstimate,
};
use infograd::information::{
    mi_gaussian_mc, mi_gaussian_quadrature, mi_poisson_enum_with_cap, mi_poisson_mc, MiEstimate,
    QuadratureSpec, DEFAULT_CELL_CAP,
};
use infograd::input_model::FiniteDistribution;
use infograd::numerics::{
    format_matrix_csv, format_vector_csv, parse_matrix_csv, parse_vector_csv, RngStream,
};
use infograd::verify::{run_suite, Suite};
use infograd::Error;

#[derive(Parser)]
#[command(
    name = "infograd",
    version,
    about = "Mutual information, its gradients, and Bregman divergences \
             for Poisson and Gaussian channels with finite-support inputs"
)]
struct Cli {
    /// Cap on worker threads (overrides the INFOGRAD_THREADS environment
    /// variable). Results are identical for every thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mutual information of a channel under a finite-support prior.
    Mi(MiArgs),
    /// Gradient of mutual information in the channel parameters.
    Grad(GradArgs),
    /// Bregman divergence between two points under a named generator.
    Bregman(BregmanArgs),
    /// Run the built-in cross-check suite.
    Verify(VerifyArgs),
    /// Projected-gradient ascent of information over a constraint set.
    Design(DesignArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MiMethodArg {
    /// Exact enumeration over a truncated output grid (Poisson only).
    Enum,
    /// Monte Carlo sampling.
    Mc,
    /// Deterministic quadrature (Gaussian only).
    Quad,
}

#[derive(Args)]
struct MiArgs {
    /// Channel description JSON: {"type": "poisson"|"gaussian",
    /// "phi": "path-to-csv", "dark": [..]} with the path resolved
    /// relative to this file.
    #[arg(long)]
    channel: PathBuf,
    /// Prior JSON: {"atoms": [[..],..], "probs": [..]}.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "enum")]
    method: MiMethodArg,
    /// Output mass the enumeration grid may miss.
    #[arg(long, default_value_t = 1e-12)]
    epsilon: f64,
    /// Monte Carlo sample budget.
    #[arg(long, default_value_t = 100_000)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum WrtArg {
    /// Scaling-matrix entries.
    Phi,
    /// Dark-current entries (Poisson only).
    Dark,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GradMethodArg {
    /// The closed-form gradient expressions.
    Theorem,
    /// Central/one-sided finite differences of the information.
    Fd,
    /// Monte Carlo estimate of the closed-form expressions.
    Mc,
}

#[derive(Args)]
struct GradArgs {
    #[arg(long)]
    channel: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    wrt: WrtArg,
    #[arg(long, value_enum, default_value = "theorem")]
    method: GradMethodArg,
    #[arg(long, default_value_t = 1e-12)]
    epsilon: f64,
    #[arg(long, default_value_t = 100_000)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BregmanArgs {
    /// Generator name: squared, xlogx, xlogx-minus-x, neg-log,
    /// scaled-count, scaled-square, outer-square, poisson, gaussian.
    #[arg(long)]
    generator: String,
    /// First argument (the "x" in D(x, y)), one-line CSV vector.
    #[arg(long)]
    x: PathBuf,
    /// Second argument (the reference point y), one-line CSV vector.
    #[arg(long)]
    y: PathBuf,
    /// Channel JSON, required by the poisson and gaussian generators.
    #[arg(long)]
    channel: Option<PathBuf>,
    /// Scale parameter for scaled-count and scaled-square.
    #[arg(long)]
    scale: Option<f64>,
    /// Dark-current parameter for scaled-count.
    #[arg(long)]
    dark: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Which checks to run: bregman, gradients, or all.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DesignMiArg {
    Enum,
    Mc,
}

#[derive(Args)]
struct DesignArgs {
    /// Problem JSON: {"prior": {..}, "dark": [..], "constraint":
    /// "box01"|"nonneg"|{"row_sum": c}, "init": {"csv": path} |
    /// {"seed": s, "rows": m}}.
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 100)]
    max_iters: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, value_enum, default_value = "enum")]
    mi: DesignMiArg,
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    #[arg(long, default_value_t = 100_000)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the final scaling matrix to this CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the full iteration trace to this JSON file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also threshold the final matrix at this level and report the
    /// information cost of rounding.
    #[arg(long)]
    round: Option<f64>,
}

/// Anything that can stop a run, tagged with the exit code it deserves.
#[derive(Debug)]
enum CliError {
    Lib(Error),
    Io(PathBuf, std::io::Error),
    Json(PathBuf, serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_feasibility() => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(path, e) => write!(f, "{}: {e}", path.display()),
            CliError::Json(path, e) => write!(f, "{}: {e}", path.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T> = Result<T, CliError>;

/// On-disk channel description. The scaling matrix lives in its own CSV
/// file so it can be produced and consumed bit-exactly by other commands.
#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum ChannelSpec {
    Poisson { phi: String, dark: Vec<f64> },
    Gaussian { phi: String },
}

enum Channel {
    Poisson(PoissonChannel),
    Gaussian(GaussianChannel),
}

/// Tracks every file a run consumed, with content hashes for provenance.
struct Inputs {
    entries: BTreeMap<String, Value>,
}

impl Inputs {
    fn new() -> Self {
        Inputs {
            entries: BTreeMap::new(),
        }
    }

    fn read(&mut self, role: &str, path: &Path) -> CliResult<Vec<u8>> {
        let bytes =
            std::fs::read(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.entries.insert(
            role.to_string(),
            json!({ "path": path.display().to_string(), "sha256": hex }),
        );
        Ok(bytes)
    }

    fn read_text(&mut self, role: &str, path: &Path) -> CliResult<String> {
        let bytes = self.read(role, path)?;
        String::from_utf8(bytes).map_err(|e| {
            CliError::Io(
                path.to_path_buf(),
                std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            )
        })
    }
}

fn read_json<T: serde::de::DeserializeOwned>(
    inputs: &mut Inputs,
    role: &str,
    path: &Path,
) -> CliResult<T> {
    let bytes = inputs.read(role, path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Json(path.to_path_buf(), e))
}

/// Resolves a path mentioned inside a JSON file relative to that file.
fn resolve_relative(base_file: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_file.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn load_channel(inputs: &mut Inputs, path: &Path) -> CliResult<Channel> {
    let spec: ChannelSpec = read_json(inputs, "channel", path)?;
    let (phi_rel, dark) = match &spec {
        ChannelSpec::Poisson { phi, dark } => (phi.clone(), Some(dark.clone())),
        ChannelSpec::Gaussian { phi } => (phi.clone(), None),
    };
    let phi_path = resolve_relative(path, &phi_rel);
    let phi_text = inputs.read_text("channel_phi", &phi_path)?;
    let phi = parse_matrix_csv(&phi_text)?;
    Ok(match dark {
        Some(dark) => Channel::Poisson(PoissonChannel::new(phi, dark)?),
        None => Channel::Gaussian(GaussianChannel::new(phi)?),
    })
}

fn load_prior(inputs: &mut Inputs, path: &Path) -> CliResult<FiniteDistribution> {
    read_json(inputs, "input", path)
}

/// Prints the run report and returns the process exit code.
fn emit(
    command: &str,
    argv: &[String],
    inputs: Inputs,
    seed: Option<u64>,
    report: Value,
    started: Instant,
    code: u8,
) -> u8 {
    let full = json!({
        "command": command,
        "argv": argv,
        "inputs": inputs.entries,
        "seed": seed,
        "report": report,
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&full).expect("report serialization cannot fail")
    );
    code
}

fn mi_report(est: &MiEstimate) -> Value {
    json!({
        "value": est.value,
        "method": est.method.name(),
        "error_bound": est.error_bound,
        "deficit": est.truncation_mass_deficit,
    })
}

fn run_mi(args: &MiArgs, inputs: &mut Inputs) -> CliResult<Value> {
    let channel = load_channel(inputs, &args.channel)?;
    let prior = load_prior(inputs, &args.input)?;
    let est = match (&channel, args.method) {
        (Channel::Poisson(ch), MiMethodArg::Enum) => {
            mi_poisson_enum_with_cap(ch, &prior, args.epsilon, DEFAULT_CELL_CAP)?
        }
        (Channel::Poisson(ch), MiMethodArg::Mc) => {
            mi_poisson_mc(ch, &prior, args.budget, &RngStream::new(args.seed, 0))?
        }
        (Channel::Poisson(_), MiMethodArg::Quad) => {
            return Err(Error::InvalidParameter(
                "quadrature applies to the gaussian channel; use enum or mc".to_string(),
            )
            .into())
        }
        (Channel::Gaussian(ch), MiMethodArg::Quad) => {
            let spec = QuadratureSpec::for_channel(ch, &prior)?;
            mi_gaussian_quadrature(ch, &prior, &spec)?
        }
        (Channel::Gaussian(ch), MiMethodArg::Mc) => {
            mi_gaussian_mc(ch, &prior, args.budget, &RngStream::new(args.seed, 0))?
        }
        (Channel::Gaussian(_), MiMethodArg::Enum) => {
            return Err(Error::InvalidParameter(
                "the gaussian channel has continuous outputs; use quad or mc".to_string(),
            )
            .into())
        }
    };
    Ok(mi_report(&est))
}

fn gradient_report(est: &GradientEstimate, wrt: WrtArg) -> CliResult<Value> {
    let mut report = json!({
        "method": est.method.name(),
        "deficit": est.truncation_mass_deficit,
        "samples": est.samples,
    });
    let obj = report.as_object_mut().expect("literal object");
    match wrt {
        WrtArg::Phi => {
            obj.insert("phi_csv".to_string(), json!(format_matrix_csv(&est.phi)));
            obj.insert(
                "phi_error_csv".to_string(),
                json!(format_matrix_csv(&est.phi_error)),
            );
        }
        WrtArg::Dark => {
            let dark = est.dark.as_ref().ok_or_else(|| {
                Error::InvalidParameter(
                    "this method produced no dark-current gradient".to_string(),
                )
            })?;
            let err = est
                .dark_error
                .as_ref()
                .expect("dark gradients always carry error fields");
            obj.insert("dark_csv".to_string(), json!(format_vector_csv(dark)));
            obj.insert("dark_error_csv".to_string(), json!(format_vector_csv(err)));
        }
    }
    Ok(report)
}

fn run_grad(args: &GradArgs, inputs: &mut Inputs) -> CliResult<Value> {
    let channel = load_channel(inputs, &args.channel)?;
    let prior = load_prior(inputs, &args.input)?;
    let est = match &channel {
        Channel::Poisson(ch) => {
            if args.wrt == WrtArg::Dark {
                if let Some(bad) = ch.dark().iter().find(|v| **v <= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "dark-current gradients need strictly positive dark entries, got {bad}"
                    ))
                    .into());
                }
            }
            match args.method {
                GradMethodArg::Theorem => {
                    poisson_gradients_enum_with_cap(ch, &prior, args.epsilon, DEFAULT_CELL_CAP)?
                }
                GradMethodArg::Mc => {
                    poisson_gradients_mc(ch, &prior, args.budget, &RngStream::new(args.seed, 0))?
                }
                GradMethodArg::Fd => {
                    fd_gradients_poisson(ch, &prior, args.epsilon, DEFAULT_CELL_CAP)?
                }
            }
        }
        Channel::Gaussian(ch) => {
            if args.wrt == WrtArg::Dark {
                return Err(Error::InvalidParameter(
                    "the gaussian channel has no dark current".to_string(),
                )
                .into());
            }
            match args.method {
                GradMethodArg::Theorem | GradMethodArg::Mc => {
                    gaussian_gradient(ch, &prior, args.budget, &RngStream::new(args.seed, 0))?
                }
                GradMethodArg::Fd => fd_gradients_gaussian(ch, &prior)?,
            }
        }
    };
    gradient_report(&est, args.wrt)
}

fn build_generator(
    args: &BregmanArgs,
    inputs: &mut Inputs,
    dim: usize,
) -> CliResult<MatrixGenerator> {
    let need_scale = || {
        args.scale.ok_or_else(|| {
            Error::InvalidParameter(format!(
                "generator '{}' needs --scale",
                args.generator
            ))
        })
    };
    Ok(match args.generator.as_str() {
        "squared" => stacked_scalar(&squared(), 1, dim),
        "xlogx" => stacked_scalar(&xlogx(), 1, dim),
        "xlogx-minus-x" => stacked_scalar(&xlogx_minus_x(), 1, dim),
        "neg-log" => stacked_scalar(&neg_log(), 1, dim),
        "scaled-count" => {
            let scale = need_scale()?;
            let dark = args.dark.ok_or_else(|| {
                Error::InvalidParameter("scaled-count needs --dark".to_string())
            })?;
            stacked_scalar(&scaled_count(scale, dark)?, 1, dim)
        }
        "scaled-square" => stacked_scalar(&scaled_square(need_scale()?)?, 1, dim),
        "outer-square" => outer_square_generator(dim),
        "poisson" | "gaussian" => {
            let path = args.channel.as_ref().ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "generator '{}' needs --channel",
                    args.generator
                ))
            })?;
            match (load_channel(inputs, path)?, args.generator.as_str()) {
                (Channel::Poisson(ch), "poisson") => poisson_generator(&ch),
                (Channel::Gaussian(ch), "gaussian") => gaussian_generator(&ch),
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "channel file type does not match generator '{}'",
                        args.generator
                    ))
                    .into())
                }
            }
        }
        other => {
            return Err(Error::Parse(format!(
                "unknown generator '{other}'; expected squared, xlogx, xlogx-minus-x, \
                 neg-log, scaled-count, scaled-square, outer-square, poisson, or gaussian"
            ))
            .into())
        }
    })
}

fn run_bregman(args: &BregmanArgs, inputs: &mut Inputs) -> CliResult<Value> {
    let x = parse_vector_csv(&inputs.read_text("x", &args.x)?)?;
    let y = parse_vector_csv(&inputs.read_text("y", &args.y)?)?;
    let generator = build_generator(args, inputs, x.len())?;
    let divergence = matrix_divergence(&generator, &x, &y)?;
    let (rows, cols) = divergence.shape();
    Ok(json!({
        "generator": generator.name(),
        "rows": rows,
        "cols": cols,
        "divergence_csv": format_matrix_csv(&divergence),
    }))
}

fn run_verify(args: &VerifyArgs) -> CliResult<(Value, bool)> {
    let suite = Suite::parse(&args.suite)?;
    let report = run_suite(suite, args.seed)?;
    let checks: Vec<Value> = report
        .checks
        .iter()
        .map(|c| json!({ "name": c.name, "passed": c.passed, "detail": c.detail }))
        .collect();
    let all = report.all_passed();
    Ok((
        json!({
            "suite": report.suite,
            "seed": report.seed,
            "all_passed": all,
            "checks": checks,
        }),
        all,
    ))
}

/// On-disk design problem description.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSpec {
    prior: FiniteDistribution,
    dark: Vec<f64>,
    constraint: ConstraintSpec,
    init: InitSpec,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum ConstraintSpec {
    Box01,
    Nonneg,
    RowSum(f64),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InitSpec {
    Csv { csv: String },
    Seeded { seed: u64, rows: usize },
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn run_design(args: &DesignArgs, inputs: &mut Inputs) -> CliResult<Value> {
    let spec: ProblemSpec = read_json(inputs, "problem", &args.problem)?;
    let constraint = match spec.constraint {
        ConstraintSpec::Box01 => Constraint::Box01,
        ConstraintSpec::Nonneg => Constraint::Nonneg,
        ConstraintSpec::RowSum(c) => Constraint::RowSum(c),
    };
    let problem = match spec.init {
        InitSpec::Csv { csv } => {
            let path = resolve_relative(&args.problem, &csv);
            let init = parse_matrix_csv(&inputs.read_text("init", &path)?)?;
            DesignProblem::new(spec.prior, spec.dark, constraint, init)?
        }
        InitSpec::Seeded { seed, rows } => {
            DesignProblem::seeded(spec.prior, rows, spec.dark, constraint, seed)?
        }
    };
    let options = DesignOptions {
        max_iters: args.max_iters,
        tol: args.tol,
        mi: match args.mi {
            DesignMiArg::Enum => DesignMi::Enumeration {
                epsilon: args.epsilon,
                cell_cap: DEFAULT_CELL_CAP,
            },
            DesignMiArg::Mc => DesignMi::MonteCarlo {
                budget: args.budget,
                seed: args.seed,
            },
        },
    };
    let trace = design_phi(&problem, &options)?;

    let records: Vec<Value> = trace
        .records
        .iter()
        .map(|r| {
            json!({
                "iteration": r.iteration,
                "mi": r.mi,
                "grad_norm": r.grad_norm,
                "step": r.step,
                "accepted": r.accepted,
            })
        })
        .collect();
    let final_csv = format_matrix_csv(&trace.final_phi);

    let mut report = json!({
        "initial_mi": trace.initial_mi(),
        "final_mi": trace.final_mi(),
        "iterations": trace.records.last().map(|r| r.iteration).unwrap_or(0),
        "accepted_steps": trace.records.iter().filter(|r| r.accepted).count() - 1,
        "final_phi_csv": final_csv,
        "records": records,
    });

    if let Some(threshold) = args.round {
        let binary = round_to_binary(&trace.final_phi, threshold)?;
        let relaxed_mi = trace.final_mi();
        // The rounded matrix is evaluated with the same information
        // method as the ascent so the reported gap is apples to apples.
        let ch = PoissonChannel::new(binary.clone(), problem.dark().to_vec())?;
        let binary_mi = match options.mi {
            DesignMi::Enumeration { epsilon, cell_cap } => {
                mi_poisson_enum_with_cap(&ch, problem.prior(), epsilon, cell_cap)?.value
            }
            DesignMi::MonteCarlo { budget, seed } => {
                mi_poisson_mc(&ch, problem.prior(), budget, &RngStream::new(seed, u64::MAX))?
                    .value
            }
        };
        report.as_object_mut().expect("literal object").insert(
            "rounding".to_string(),
            json!({
                "threshold": threshold,
                "binary_phi_csv": format_matrix_csv(&binary),
                "relaxed_mi": relaxed_mi,
                "binary_mi": binary_mi,
                "gap": relaxed_mi - binary_mi,
            }),
        );
    }

    if let Some(out) = &args.out {
        write_file(out, &final_csv)?;
        // Round-trip guarantee: what was written parses back to the same
        // matrix, bit for bit.
        let back = parse_matrix_csv(&final_csv)?;
        assert_eq!(
            back.sub(&trace.final_phi).map(|d| d.max_abs()).unwrap_or(1.0),
            0.0,
            "CSV round trip must be exact"
        );
    }
    if let Some(trace_path) = &args.trace {
        let trace_json = serde_json::to_string_pretty(&json!({
            "records": report["records"],
            "final_phi_csv": final_csv,
        }))
        .expect("trace serialization cannot fail");
        write_file(trace_path, &trace_json)?;
    }
    Ok(report)
}

fn init_threads(requested: Option<usize>) {
    let n = requested.or_else(|| {
        std::env::var("INFOGRAD_THREADS")
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
    });
    if let Some(n) = n {
        if n > 0 {
            // Ignore the error: the pool can only be set once per process,
            // and a second attempt means it is already configured.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    init_threads(cli.threads);
    let started = Instant::now();
    let mut inputs = Inputs::new();

    let outcome: CliResult<(String, Option<u64>, Value, u8)> = match &cli.command {
        Command::Mi(args) => {
            run_mi(args, &mut inputs).map(|r| ("mi".to_string(), Some(args.seed), r, 0))
        }
        Command::Grad(args) => {
            run_grad(args, &mut inputs).map(|r| ("grad".to_string(), Some(args.seed), r, 0))
        }
        Command::Bregman(args) => {
            run_bregman(args, &mut inputs).map(|r| ("bregman".to_string(), None, r, 0))
        }
        Command::Verify(args) => run_verify(args).map(|(r, all_passed)| {
            (
                "verify".to_string(),
                Some(args.seed),
                r,
                if all_passed { 0 } else { 1 },
            )
        }),
        Command::Design(args) => {
            run_design(args, &mut inputs).map(|r| ("design".to_string(), Some(args.seed), r, 0))
        }
    };

    match outcome {
        Ok((command, seed, report, code)) => {
            ExitCode::from(emit(&command, &argv, inputs, seed, report, started, code))
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
