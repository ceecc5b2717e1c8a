use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rankmean_core::filtering::{run_experiment, RowKind};
use rankmean_core::fixed_rank::{mean_n_with_report, mean_two, verify_properties, PropertyStatus};
use rankmean_core::grassmann::principal_angles;
use rankmean_core::linalg::Matrix;
use rankmean_core::random;
use rankmean_core::{FilterConfig, FixedRankMeanConfig, PsdFixedRank, SpdMeanConfig, SpdMeanMethod, SubspaceMethod};

use crate::bench::{run_bench, BenchConfig};
use crate::error::{CliError, EXIT_OK, EXIT_PRECONDITION, EXIT_PROPERTY};
use crate::format::{format_number, MatrixFile};
use crate::trajectory::write_csv;

/// Environment variable read when `--seed` is absent.
pub const SEED_ENV: &str = "RANKMEAN_SEED";
/// The recursive alm mean costs about N! Ando means.
pub const ALM_MAX_INPUTS: usize = 8;

#[derive(Debug, Parser)]
#[command(name = "rankmean", version, about = "Rank-preserving geometric means of PSD matrices")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mean of fixed-rank PSD matrices read from files.
    Mean(MeanArgs),
    /// Check the geometric-mean properties on the given inputs.
    Check(CheckArgs),
    /// Run the low-pass filter on noisy measurements of a fixed matrix.
    Filter(FilterArgs),
    /// Time the N-matrix mean for growing ambient dimension.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Ls,
    Alm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SubspaceArg {
    Chordal,
    Karcher,
}

#[derive(Debug, Args)]
struct MeanOptions {
    /// Rank p; overrides the rank declared in the files.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, value_enum, default_value = "ls")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "chordal")]
    subspace: SubspaceArg,
    /// Comma-separated positive weights summing to one.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Skip the check that all spans lie in the uniqueness ball.
    #[arg(long)]
    no_ball_check: bool,
}

impl MeanOptions {
    fn config(&self) -> FixedRankMeanConfig {
        FixedRankMeanConfig {
            spd: SpdMeanConfig {
                method: match self.method {
                    MethodArg::Ls => SpdMeanMethod::Ls,
                    MethodArg::Alm => SpdMeanMethod::Alm,
                },
                max_iterations: self.max_iter,
                tolerance: self.tol,
                ..Default::default()
            },
            subspace: match self.subspace {
                SubspaceArg::Chordal => SubspaceMethod::Chordal,
                SubspaceArg::Karcher => SubspaceMethod::Karcher,
            },
            weights: self.weights.clone(),
            ball_check: !self.no_ball_check,
        }
    }
}

#[derive(Debug, Args)]
struct MeanArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    options: MeanOptions,
    /// Weighted mean of exactly two inputs, with weight `alpha` on the second.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    options: MeanOptions,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// τ/dt.
    #[arg(long, default_value_t = 50.0)]
    tau_ratio: f64,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long)]
    outlier_period: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    outlier_scale: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Matrix file holding the true matrix, or `random`.
    #[arg(long, default_value = "random")]
    truth: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 25)]
    repeats: usize,
    #[arg(long)]
    seed: Option<u64>,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Results go to `out`, errors and diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PRECONDITION } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Mean(a) => cmd_mean(&a, out, err),
        Command::Check(a) => cmd_check(&a, out),
        Command::Filter(a) => cmd_filter(&a, out, err),
        Command::Bench(a) => cmd_bench(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: reason={} message=\"{}\"", e.reason(), e);
            e.exit_code()
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn read_inputs(paths: &[PathBuf], rank: Option<usize>) -> Result<Vec<PsdFixedRank>, CliError> {
    paths
        .iter()
        .map(|p| MatrixFile::read(p)?.to_fixed_rank(rank))
        .collect()
}

fn io_error(path: Option<&Path>, e: std::io::Error) -> CliError {
    CliError::io(path.unwrap_or(Path::new("<stdout>")), e)
}

/// Writes `text` to `path`, or to `out` when no path is given.
fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => out.write_all(text.as_bytes()).map_err(|e| io_error(None, e)),
    }
}

fn cmd_mean(args: &MeanArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let inputs = read_inputs(&args.inputs, args.options.rank)?;
    let config = args.options.config();
    let (mean, summary) = match args.alpha {
        Some(alpha) => {
            if inputs.len() != 2 {
                return Err(CliError::usage("--alpha needs exactly two inputs"));
            }
            let mean = mean_two(&inputs[0], &inputs[1], alpha)?;
            let largest = principal_angles(inputs[0].basis(), inputs[1].basis())?.largest();
            let summary = format!(
                "inputs=2 n={} p={} alpha={} largest_principal_angle={}",
                mean.n(),
                mean.p(),
                alpha,
                format_number(largest)
            );
            (mean, summary)
        }
        None => {
            if config.spd.method == SpdMeanMethod::Alm && inputs.len() > ALM_MAX_INPUTS {
                return Err(CliError::Usage(format!(
                    "--method alm accepts at most {ALM_MAX_INPUTS} inputs"
                )));
            }
            let (mean, report) = mean_n_with_report(&inputs, &config)?;
            let summary = format!(
                "inputs={} n={} p={} subspace_gradient_norm={} subspace_iterations={} spd_residual={} spd_iterations={}",
                inputs.len(),
                mean.n(),
                mean.p(),
                format_number(report.subspace_gradient_norm),
                report.subspace_iterations,
                format_number(report.spd.residual),
                report.spd.iterations
            );
            (mean, summary)
        }
    };
    emit(args.out.as_deref(), &MatrixFile::from_fixed_rank(&mean).to_text(), out)?;
    let diag: &mut dyn Write = if args.out.is_some() { out } else { err };
    writeln!(diag, "{summary}").map_err(|e| io_error(None, e))?;
    Ok(EXIT_OK)
}

fn status_name(s: PropertyStatus) -> &'static str {
    match s {
        PropertyStatus::Pass => "pass",
        PropertyStatus::Fail => "fail",
        PropertyStatus::Skipped => "skipped",
    }
}

fn cmd_check(args: &CheckArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let inputs = read_inputs(&args.inputs, args.options.rank)?;
    let config = args.options.config();
    if config.spd.method == SpdMeanMethod::Alm && inputs.len() > ALM_MAX_INPUTS {
        return Err(CliError::Usage(format!("--method alm accepts at most {ALM_MAX_INPUTS} inputs")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(resolve_seed(args.seed)?);
    let report = verify_properties(&inputs, &config, args.trials, &mut rng)?;
    let mut text = String::new();
    for c in &report.checks {
        text.push_str(&format!(
            "property={} status={} residual={:e} threshold={:e} note=\"{}\"\n",
            c.name,
            status_name(c.status),
            c.residual,
            c.threshold,
            c.note
        ));
    }
    let failing: Vec<&str> = report.failures().map(|c| c.name).collect();
    if failing.is_empty() {
        text.push_str("result=pass\n");
    } else {
        text.push_str(&format!("result=fail failing={}\n", failing.join(",")));
    }
    out.write_all(text.as_bytes()).map_err(|e| io_error(None, e))?;
    Ok(if failing.is_empty() { EXIT_OK } else { EXIT_PROPERTY })
}

/// `Z` with `Z Zᵀ` the truth: Gaussian from the seed, or `U R` from a file.
fn truth_factor(args: &FilterArgs, seed: u64) -> Result<Matrix, CliError> {
    if args.truth == "random" {
        if args.p == 0 || args.p > args.n {
            return Err(CliError::usage("--p must lie in 1..=n"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        return Ok(random::gaussian_matrix(args.n, args.p, &mut rng));
    }
    let a = MatrixFile::read(Path::new(&args.truth))?.to_fixed_rank(Some(args.p))?;
    if a.n() != args.n {
        return Err(CliError::Usage(format!("truth file has n = {}, --n is {}", a.n(), args.n)));
    }
    Ok(a.basis().as_matrix() * a.shape().sqrt()?.as_matrix())
}

fn cmd_filter(args: &FilterArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let seed = resolve_seed(args.seed)?;
    let truth = truth_factor(args, seed)?;
    let config = FilterConfig {
        tau: args.tau_ratio,
        dt: 1.0,
        steps: args.steps,
        noise_level: args.noise,
        outlier_period: args.outlier_period,
        outlier_scale: args.outlier_scale,
        seed,
    };
    let trajectory = run_experiment(&config, &truth)?;
    match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            let mut w = BufWriter::new(file);
            write_csv(&trajectory, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io(path, e))?;
        }
        None => write_csv(&trajectory, out).map_err(|e| io_error(None, e))?,
    }
    let window = args.steps.div_ceil(2);
    let summary = format!(
        "summary steps={} window={} mean_measurement_error={} mean_estimate_error={} max_measurement_error={} max_estimate_error={} final_estimate_error={} rejected={}",
        args.steps,
        window,
        format_number(trajectory.mean_error_tail(RowKind::Measurement, window)),
        format_number(trajectory.mean_error_tail(RowKind::Estimate, window)),
        format_number(trajectory.max_error(RowKind::Measurement)),
        format_number(trajectory.max_error(RowKind::Estimate)),
        format_number(trajectory.final_error(RowKind::Estimate)),
        trajectory.rejected_steps.len()
    );
    let diag: &mut dyn Write = if args.out.is_some() { out } else { err };
    writeln!(diag, "{summary}").map_err(|e| io_error(None, e))?;
    Ok(EXIT_OK)
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let config = BenchConfig {
        p: args.p,
        n_list: args.n_list.clone(),
        count: args.count,
        repeats: args.repeats,
        seed: resolve_seed(args.seed)?,
        mean: FixedRankMeanConfig::default(),
    };
    let report = run_bench(&config)?;
    let mut text = format!("# p={} count={} repeats={}\nn,median_seconds\n", args.p, args.count, args.repeats);
    for row in &report.rows {
        text.push_str(&format!("{},{:e}\n", row.n, row.median_seconds));
    }
    if report.rows.len() >= 2 {
        let first = report.rows[0];
        let last = report.rows[report.rows.len() - 1];
        text.push_str(&format!(
            "time_ratio={:.3} n_ratio={:.3}\n",
            last.median_seconds / first.median_seconds,
            last.n as f64 / first.n as f64
        ));
    }
    match report.slope {
        Some(s) => text.push_str(&format!("slope={s:.4}\n")),
        None => text.push_str("slope=none\n"),
    }
    out.write_all(text.as_bytes()).map_err(|e| io_error(None, e))?;
    Ok(EXIT_OK)
}
