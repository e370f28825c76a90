//! Command-line front end: `gen`, `fit`, `sweep`, `probe` and `presets`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};

use crate::concentration::{self, Coupling, ProbeReport};
use crate::datagen::{gen_instance, CorruptionSpec, DesignSpec, IVSpec};
use crate::error::Error;
use crate::estimators::{solve_corrected_with, PsdRepair};
use crate::experiments::{self, ExperimentConfig, Scale, SweepOptions};
use crate::linalg::Covariance;
use crate::omp::{self, FinalEstimatorChoice};

pub const SEED_ENV: &str = "CORRUPT_SENSE_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_CONVEXITY: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "corrupt-sense",
    version,
    about = "Regression with noisy or missing covariates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic instance as a `y,z1..zp` CSV.
    Gen(GenArgs),
    /// Fit a corrected estimator (optionally after mod-OMP selection).
    Fit(FitArgs),
    /// Run a Monte-Carlo sweep and write the result CSV.
    Sweep(SweepArgs),
    /// Run a concentration probe.
    Probe(ProbeArgs),
    /// List the named sweep presets.
    Presets(PresetsArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    k: usize,
    /// Additive noise level (mutually exclusive with --rho).
    #[arg(long, conflicts_with = "rho")]
    sigma_w: Option<f64>,
    /// Erasure probability (mutually exclusive with --sigma-w).
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    sigma_e: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the true coefficients as `index,beta` (1-based).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    SigmaW,
    SigmaWUpper,
    SigmaX,
    Iv,
    Missing,
    Clean,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// CSV with header `y,z1,..,zp`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    estimator: EstimatorArg,
    /// Noise level; for `sigma-w-upper` the assumed upper bound.
    #[arg(long)]
    sigma_w: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Headerless p x p CSV matrix.
    #[arg(long)]
    sigma_x_file: Option<PathBuf>,
    /// Headerless n x m CSV matrix of instruments.
    #[arg(long)]
    iv_file: Option<PathBuf>,
    /// Run mod-OMP for `k` steps before the corrected solve.
    #[arg(long)]
    k: Option<usize>,
    /// Clip eigenvalues instead of failing when the corrected Gram is not
    /// positive definite.
    #[arg(long)]
    repair: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// JSON document mirroring the experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
    scale: ScaleArg,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Write `wall_time_ms = 0` so output bytes are reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Suppress the summary table.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Lemma {
    Maxdev,
    Bilinear,
    Operator,
    Projection,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long, value_enum)]
    lemma: Lemma,
    #[arg(long, default_value_t = 20)]
    p: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    m: usize,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',', default_values_t = concentration::DEFAULT_N_VALUES)]
    n_values: Vec<usize>,
    #[arg(long, default_value_t = concentration::DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PresetsArgs {
    #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
    scale: ScaleArg,
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::StrongConvexityViolation { .. } => EXIT_CONVEXITY,
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::MissingParameter(_)
            | Error::UnknownPreset(_)
            | Error::Format { .. } => EXIT_CONFIG,
            Error::SingularGram { .. } | Error::InsufficientPoints(_) | Error::Io { .. } => {
                EXIT_RUNTIME
            }
        };
        Self::new(code, e.to_string())
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Probe(a) => cmd_probe(a),
        Command::Presets(a) => cmd_presets(a),
    }
}

/// `--seed`, else `CORRUPT_SENSE_SEED`, else `fallback`.
fn resolve_seed(flag: Option<u64>, fallback: u64) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::new(EXIT_USAGE, format!("{SEED_ENV}=`{v}` is not a u64"))),
        Err(_) => Ok(fallback),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::new(EXIT_RUNTIME, format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::new(EXIT_RUNTIME, e.to_string())),
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn cmd_gen(a: GenArgs) -> CliResult {
    let corruption = match (a.sigma_w, a.rho) {
        (Some(s), None) => CorruptionSpec::additive(s),
        (None, Some(r)) => CorruptionSpec::missing(r),
        (None, None) => CorruptionSpec::Clean,
        (Some(_), Some(_)) => unreachable!("clap enforces exclusivity"),
    };
    let seed = resolve_seed(a.seed, experiments::DEFAULT_BASE_SEED)?;
    let inst = gen_instance(
        a.n,
        a.p,
        a.k,
        &DesignSpec::isotropic(a.sigma_e),
        &corruption,
        seed,
    )?;

    let mut text = String::from("y");
    for j in 1..=a.p {
        let _ = write!(text, ",z{j}");
    }
    text.push('\n');
    for i in 0..a.n {
        text.push_str(&fmt_f(inst.y[i]));
        for j in 0..a.p {
            text.push(',');
            text.push_str(&fmt_f(inst.z[(i, j)]));
        }
        text.push('\n');
    }
    write_output(Some(&a.out), &text)?;

    if let Some(path) = &a.truth {
        let mut t = String::from("index,beta\n");
        for (i, b) in inst.beta_star.iter().enumerate() {
            let _ = writeln!(t, "{},{}", i + 1, fmt_f(*b));
        }
        write_output(Some(path), &t)?;
    }
    eprintln!(
        "wrote {} x {} instance (k = {}, seed = {seed}) to {}",
        a.n,
        a.p,
        a.k,
        a.out.display()
    );
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Parse a numeric CSV; with `header` the first row is returned separately.
type NumericCsv = (Option<Vec<String>>, Vec<Vec<f64>>);

fn parse_numeric_csv(path: &Path, header: bool) -> CliResult<NumericCsv> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let bad = |msg: String| CliError::config(format!("{}: {msg}", path.display()));
    let head = if header {
        Some(
            rdr.headers()
                .map_err(|e| bad(e.to_string()))?
                .iter()
                .map(str::to_string)
                .collect(),
        )
    } else {
        None
    };
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad(format!("row {}: non-numeric or non-finite value", i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(bad("no data rows".into()));
    }
    Ok((head, rows))
}

fn matrix_from_rows(rows: &[Vec<f64>], path: &Path) -> CliResult<DMatrix<f64>> {
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::config(format!("{}: ragged rows", path.display())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn read_data(path: &Path) -> CliResult<(DVector<f64>, DMatrix<f64>)> {
    let (head, rows) = parse_numeric_csv(path, true)?;
    let head = head.expect("header requested");
    let p = head.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("y".to_string())
        .chain((1..=p).map(|j| format!("z{j}")))
        .collect();
    if p == 0 || head != expected {
        return Err(CliError::config(format!(
            "{}: header must be `y,z1,..,zp`, found `{}`",
            path.display(),
            head.join(",")
        )));
    }
    let m = matrix_from_rows(&rows, path)?;
    let y = m.column(0).into_owned();
    let z = m.columns(1, p).into_owned();
    Ok((y, z))
}

fn require<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::config(format!("this estimator needs {flag}")))
}

fn final_choice(a: &FitArgs, p: usize, n: usize) -> CliResult<FinalEstimatorChoice> {
    let sigma_w = |flag| -> CliResult<Covariance> {
        let s = require(a.sigma_w, flag)?;
        if !(s.is_finite() && s >= 0.0) {
            return Err(CliError::config("--sigma-w must be finite and >= 0"));
        }
        Ok(Covariance::Isotropic(s * s))
    };
    Ok(match a.estimator {
        EstimatorArg::SigmaW => FinalEstimatorChoice::KnownSigmaW(sigma_w("--sigma-w")?),
        EstimatorArg::SigmaWUpper => FinalEstimatorChoice::UpperBoundSigmaW(sigma_w("--sigma-w")?),
        EstimatorArg::SigmaX => {
            let path = require(a.sigma_x_file.as_deref(), "--sigma-x-file")?;
            let (_, rows) = parse_numeric_csv(path, false)?;
            let m = matrix_from_rows(&rows, path)?;
            if m.shape() != (p, p) {
                return Err(CliError::config(format!(
                    "{}: expected a {p} x {p} matrix, found {} x {}",
                    path.display(),
                    m.nrows(),
                    m.ncols()
                )));
            }
            let c = Covariance::Dense(m);
            c.validate(p, false)?;
            FinalEstimatorChoice::KnownSigmaX(c)
        }
        EstimatorArg::Iv => {
            let path = require(a.iv_file.as_deref(), "--iv-file")?;
            let (_, rows) = parse_numeric_csv(path, false)?;
            let u = matrix_from_rows(&rows, path)?;
            if u.nrows() != n {
                return Err(CliError::config(format!(
                    "{}: instruments have {} rows, data has {n}",
                    path.display(),
                    u.nrows()
                )));
            }
            FinalEstimatorChoice::InstrumentalVariable(IVSpec::from_matrix(u))
        }
        EstimatorArg::Missing => {
            let rho = require(a.rho, "--rho")?;
            CorruptionSpec::missing(rho).validate(p)?;
            FinalEstimatorChoice::MissingData(rho)
        }
        EstimatorArg::Clean => FinalEstimatorChoice::CleanLS,
    })
}

fn cmd_fit(a: FitArgs) -> CliResult {
    let (y, z) = read_data(&a.data)?;
    let (n, p) = z.shape();
    let choice = final_choice(&a, p, n)?;
    let repair = if a.repair {
        PsdRepair::ClipEigenvalues
    } else {
        PsdRepair::Fail
    };

    let (beta, order) = match a.k {
        Some(k) => {
            if k == 0 || k > p.min(n) {
                return Err(CliError::config(format!("--k must be in 1..={}", p.min(n))));
            }
            let fit = omp::mod_omp_with(&z, &y, k, &choice, repair)?;
            let support: Vec<String> = fit.support.iter().map(|i| (i + 1).to_string()).collect();
            eprintln!("support (selection order): {}", support.join(","));
            eprintln!(
                "lambda_min of final Gram: {:e}",
                fit.diagnostics.lambda_min_final
            );
            (fit.beta_hat, Some(fit.support))
        }
        None => {
            let all: Vec<usize> = (0..p).collect();
            let est = choice.restricted_moments(&z, &y, &all)?;
            eprintln!("lambda_min of corrected Gram: {:e}", est.lambda_min);
            (
                solve_corrected_with(&est, est.default_lambda_floor(), repair)?,
                None,
            )
        }
    };

    let mut text = String::new();
    match &order {
        Some(order) => {
            text.push_str("index,beta_hat,selection_rank\n");
            let mut rank = vec![0usize; p];
            for (r, &i) in order.iter().enumerate() {
                rank[i] = r + 1;
            }
            for i in 0..p {
                let _ = writeln!(text, "{},{},{}", i + 1, fmt_f(beta[i]), rank[i]);
            }
        }
        None => {
            text.push_str("index,beta_hat\n");
            for i in 0..p {
                let _ = writeln!(text, "{},{}", i + 1, fmt_f(beta[i]));
            }
        }
    }
    write_output(a.out.as_deref(), &text)
}

fn load_config(a: &SweepArgs) -> CliResult<ExperimentConfig> {
    let mut config = match (&a.preset, &a.config) {
        (Some(name), _) => {
            let scale = match a.scale {
                ScaleArg::Desk => Scale::Desk,
                ScaleArg::Paper => Scale::Paper,
            };
            experiments::preset(name, scale)?
        }
        (None, Some(path)) => {
            let text = read_text(path)?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        (None, None) => unreachable!("clap requires one of --preset/--config"),
    };
    config.base_seed = resolve_seed(a.seed, config.base_seed)?;
    config.validate()?;
    Ok(config)
}

fn cmd_sweep(a: SweepArgs) -> CliResult {
    let config = load_config(&a)?;
    let options = SweepOptions {
        timing: !a.no_timing,
    };
    let records = run_with_jobs(a.jobs, || experiments::run_sweep_with(&config, options))??;
    experiments::write_csv(&records, &a.out)
        .map_err(|e| CliError::new(EXIT_RUNTIME, e.to_string()))?;

    if !a.quiet {
        println!(
            "{:<9} {:<16} {:>5} {:>5} {:>3} {:>7} {:>5} {:>9} {:>11} {:>10} {:>8} {:>8}",
            "regime",
            "estimator",
            "n",
            "p",
            "k",
            "sigma_w",
            "rho",
            "control",
            "mean_l2",
            "std_l2",
            "support",
            "failed"
        );
        for r in &records {
            println!(
                "{:<9} {:<16} {:>5} {:>5} {:>3} {:>7.3} {:>5.2} {:>9.4} {:>11.4e} {:>10.3e} {:>8.3} {:>8.3}",
                r.regime.label(),
                r.estimator,
                r.n,
                r.p,
                r.k,
                r.sigma_w,
                r.rho,
                r.control_value,
                r.mean_l2_error,
                r.std_l2_error,
                r.support_recovery_rate,
                r.failure_rate
            );
        }
    }
    eprintln!("wrote {} records to {}", records.len(), a.out.display());
    Ok(())
}

#[cfg(feature = "parallel")]
fn run_with_jobs<R: Send>(jobs: Option<u64>, f: impl FnOnce() -> R + Send) -> CliResult<R> {
    match jobs {
        None => Ok(f()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j as usize)
                .build()
                .map_err(|e| CliError::new(EXIT_RUNTIME, e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn run_with_jobs<R: Send>(_jobs: Option<u64>, f: impl FnOnce() -> R + Send) -> CliResult<R> {
    Ok(f())
}

fn probe_csv(report: &ProbeReport) -> String {
    let mut text = String::from("statistic,n,median_deviation,trials\n");
    for (n, m) in report.n_values.iter().zip(&report.medians) {
        let _ = writeln!(
            text,
            "{},{n},{},{}",
            report.statistic_name,
            fmt_f(*m),
            report.trials_per_point
        );
    }
    text
}

fn cmd_probe(a: ProbeArgs) -> CliResult {
    let seed = resolve_seed(a.seed, experiments::DEFAULT_BASE_SEED)?;
    let report = match a.lemma {
        Lemma::Maxdev => concentration::probe_max_deviation(
            a.p,
            &Covariance::identity(),
            &a.n_values,
            a.trials,
            seed,
        )?,
        Lemma::Bilinear => {
            let mut e1 = DVector::zeros(a.k.max(1));
            e1[0] = 1.0;
            let mut f1 = DVector::zeros(a.p.max(1));
            f1[0] = 1.0;
            concentration::probe_bilinear(
                a.p,
                a.k,
                &a.n_values,
                a.trials,
                seed,
                &f1,
                &e1,
                Coupling::Independent,
            )?
        }
        Lemma::Operator => concentration::probe_operator(a.k, a.m, &a.n_values, a.trials, seed)?,
        Lemma::Projection => {
            concentration::probe_column_projection(a.k, &a.n_values, a.trials, seed)?
        }
    };
    write_output(a.out.as_deref(), &probe_csv(&report))?;
    match report.scaling_exponent {
        Some(e) => println!("scaling_exponent: {e:.4}"),
        None => println!("scaling_exponent: undefined (zero median)"),
    }
    if let Some(n) = report.required_n {
        println!("required_n (median <= 1/54): {n:.0}");
    }
    Ok(())
}

fn cmd_presets(a: PresetsArgs) -> CliResult {
    let scale = match a.scale {
        ScaleArg::Desk => Scale::Desk,
        ScaleArg::Paper => Scale::Paper,
    };
    for name in experiments::PRESET_NAMES {
        let c = experiments::preset(name, scale)?;
        let methods: Vec<String> = c.methods.iter().map(|m| m.label()).collect();
        let axis = match &c.noise {
            experiments::NoiseAxis::SigmaW(v) => format!("sigma_w x{}", v.len()),
            experiments::NoiseAxis::Rho(v) => format!("rho x{}", v.len()),
        };
        println!(
            "{name:<6} {:<8} n={:<5} p={:<5} k={:?} {axis:<12} trials={:<4} [{}]",
            c.regime.label(),
            c.n,
            c.p.map_or("-".to_string(), |p| p.to_string()),
            c.ks,
            c.trials,
            methods.join(", ")
        );
    }
    Ok(())
}
