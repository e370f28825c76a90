//! Sweep configuration, deterministic parallel execution, aggregation and
//! CSV persistence, plus named presets for the simulation protocols.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{gen_instance, gen_iv, CorruptionSpec, DesignSpec, IVSpec, ProblemInstance};
use crate::error::{invalid, Error, Result};
use crate::estimators::{self, solve_default};
use crate::linalg::Covariance;
use crate::metrics::{control_param, l2_error, support_report, ControlParameter};
use crate::omp::{self, FinalEstimatorChoice};
use crate::par;
use crate::rng::{derive_seed, derive_seed_path};

pub const CSV_HEADER: [&str; 14] = [
    "regime",
    "estimator",
    "n",
    "p",
    "k",
    "sigma_w",
    "rho",
    "control_value",
    "mean_l2_error",
    "std_l2_error",
    "support_recovery_rate",
    "failure_rate",
    "trials",
    "wall_time_ms",
];

pub const DEFAULT_BASE_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Dense regressor of dimension `k`; estimators applied directly.
    LowDim,
    /// `k`-sparse regressor in dimension `p`; greedy selection first.
    HighDim,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::LowDim => "low_dim",
            Regime::HighDim => "high_dim",
        }
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low_dim" => Ok(Regime::LowDim),
            "high_dim" => Ok(Regime::HighDim),
            other => Err(invalid(format!("unknown regime `{other}`"))),
        }
    }
}

/// What is fitted in each trial.
///
/// Serialized by its label: `sigma_w`, `sigma_w_x<scale>`,
/// `sigma_w_upper_x<factor>`, `sigma_x`, `iv`, `missing`, `naive`, `clean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    /// Known noise covariance, using `(scale * sigma_w)^2 I`; `scale != 1`
    /// models a mis-specified noise level.
    KnownSigmaW {
        scale: f64,
    },
    /// Conservative `Sigma_w_upper = factor * Sigma_w`.
    UpperBoundSigmaW {
        factor: f64,
    },
    KnownSigmaX,
    InstrumentalVariable,
    MissingData,
    /// Least squares on the corrupted covariates, no correction.
    Naive,
    /// Least squares on the true covariates (oracle baseline).
    Clean,
}

impl Method {
    pub const KNOWN_SIGMA_W: Method = Method::KnownSigmaW { scale: 1.0 };

    pub fn label(&self) -> String {
        match self {
            Method::KnownSigmaW { scale } if *scale == 1.0 => "sigma_w".into(),
            Method::KnownSigmaW { scale } => format!("sigma_w_x{scale}"),
            Method::UpperBoundSigmaW { factor } => format!("sigma_w_upper_x{factor}"),
            Method::KnownSigmaX => "sigma_x".into(),
            Method::InstrumentalVariable => "iv".into(),
            Method::MissingData => "missing".into(),
            Method::Naive => "naive".into(),
            Method::Clean => "clean".into(),
        }
    }

    fn needs_additive(&self) -> bool {
        matches!(
            self,
            Method::KnownSigmaW { .. }
                | Method::UpperBoundSigmaW { .. }
                | Method::KnownSigmaX
                | Method::InstrumentalVariable
        )
    }

    fn default_control(&self, axis: &NoiseAxis) -> ControlParameter {
        match self {
            Method::KnownSigmaW { .. } | Method::UpperBoundSigmaW { .. } => {
                ControlParameter::SigmaW
            }
            Method::KnownSigmaX => ControlParameter::SigmaX,
            Method::InstrumentalVariable => ControlParameter::InstrumentalVariable,
            Method::MissingData => ControlParameter::Missing,
            Method::Naive | Method::Clean => match axis {
                NoiseAxis::SigmaW(_) => ControlParameter::SigmaW,
                NoiseAxis::Rho(_) => ControlParameter::Missing,
            },
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let factor = |rest: &str| -> Result<f64> {
            rest.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .ok_or_else(|| invalid(format!("bad factor in method `{s}`")))
        };
        Ok(match s {
            "sigma_w" => Method::KNOWN_SIGMA_W,
            "sigma_x" => Method::KnownSigmaX,
            "iv" => Method::InstrumentalVariable,
            "missing" => Method::MissingData,
            "naive" => Method::Naive,
            "clean" => Method::Clean,
            _ => {
                if let Some(rest) = s.strip_prefix("sigma_w_upper_x") {
                    Method::UpperBoundSigmaW {
                        factor: factor(rest)?,
                    }
                } else if let Some(rest) = s.strip_prefix("sigma_w_x") {
                    Method::KnownSigmaW {
                        scale: factor(rest)?,
                    }
                } else {
                    return Err(invalid(format!("unknown estimator `{s}`")));
                }
            }
        })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.label()
    }
}

/// The corruption level swept over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseAxis {
    SigmaW(Vec<f64>),
    Rho(Vec<f64>),
}

impl NoiseAxis {
    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.values().is_empty()
    }

    pub fn values(&self) -> &[f64] {
        match self {
            NoiseAxis::SigmaW(v) | NoiseAxis::Rho(v) => v,
        }
    }

    fn corruption(&self, value: f64) -> CorruptionSpec {
        match self {
            NoiseAxis::SigmaW(_) => CorruptionSpec::additive(value),
            NoiseAxis::Rho(_) => CorruptionSpec::missing(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub regime: Regime,
    pub n: usize,
    /// Ambient dimension for `HighDim`. For `LowDim` the regressor has
    /// dimension `k` and `p` only labels the records (default `k`).
    #[serde(default)]
    pub p: Option<usize>,
    pub ks: Vec<usize>,
    pub noise: NoiseAxis,
    #[serde(default)]
    pub sigma_e: f64,
    #[serde(default = "Covariance::identity")]
    pub sigma_x: Covariance,
    pub methods: Vec<Method>,
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
    /// Instruments per coefficient: `m = iv_ratio * k`.
    #[serde(default = "default_iv_ratio")]
    pub iv_ratio: usize,
    /// Replaces each method's default control parameter.
    #[serde(default)]
    pub control: Option<ControlParameter>,
}

fn default_seed() -> u64 {
    DEFAULT_BASE_SEED
}

fn default_iv_ratio() -> usize {
    2
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.noise.is_empty() || self.methods.is_empty() {
            return Err(invalid(
                "k grid, noise grid and method list must be nonempty",
            ));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be >= 1"));
        }
        if self.n == 0 || self.ks.contains(&0) {
            return Err(invalid("n and every k must be >= 1"));
        }
        if !(self.sigma_e.is_finite() && self.sigma_e >= 0.0) {
            return Err(invalid("sigma_e must be >= 0"));
        }
        if self.iv_ratio == 0 {
            return Err(invalid("iv_ratio must be >= 1"));
        }
        let kmax = *self.ks.iter().max().unwrap();
        if self.regime == Regime::HighDim {
            let p = self
                .p
                .ok_or_else(|| invalid("high-dimensional sweeps need an explicit p"))?;
            if kmax > p.min(self.n) {
                return Err(invalid(format!("k = {kmax} exceeds min(n, p)")));
            }
        } else if kmax > self.n {
            return Err(invalid(format!("k = {kmax} exceeds n = {}", self.n)));
        }
        for v in self.noise.values() {
            self.noise.corruption(*v).validate(1)?;
        }
        for m in &self.methods {
            let additive = matches!(self.noise, NoiseAxis::SigmaW(_));
            if m.needs_additive() && !additive {
                return Err(invalid(format!("estimator `{m}` needs a sigma_w axis")));
            }
            if *m == Method::MissingData && additive {
                return Err(invalid("estimator `missing` needs a rho axis"));
            }
        }
        let p = self.p.unwrap_or(kmax).max(kmax);
        self.sigma_x.validate(p, true)
    }

    fn dimension(&self, k: usize) -> usize {
        match self.regime {
            Regime::LowDim => k,
            Regime::HighDim => self.p.expect("validated"),
        }
    }

    fn reported_p(&self, k: usize) -> usize {
        self.p.unwrap_or(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub regime: Regime,
    pub estimator: String,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub sigma_w: f64,
    pub rho: f64,
    pub control_value: f64,
    /// Mean over trials that produced an estimate; NaN if none did.
    pub mean_l2_error: f64,
    pub std_l2_error: f64,
    pub support_recovery_rate: f64,
    pub failure_rate: f64,
    pub trials: usize,
    pub wall_time_ms: f64,
}

/// One method's result in one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    /// `None` when the fit failed.
    pub l2_error: Option<f64>,
    pub exact_support: bool,
    pub superset: bool,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepOptions {
    /// Measure wall time. Off yields `wall_time_ms = 0` and avoids the clock
    /// entirely.
    pub timing: bool,
}

struct Clock(Option<std::time::Instant>);

impl Clock {
    fn start(timing: bool) -> Self {
        Clock(timing.then(std::time::Instant::now))
    }
    fn ms(&self) -> f64 {
        self.0.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3)
    }
}

/// Seed of trial `trial` in the cell `(k, noise_index)`. Shared by all
/// methods so comparisons are paired.
pub fn trial_seed(base_seed: u64, k: usize, noise_index: usize, trial: usize) -> u64 {
    derive_seed_path(
        base_seed,
        "trial",
        &[k as u64, noise_index as u64, trial as u64],
    )
}

/// Instance (and instruments, when an IV method is configured) of one trial.
pub fn trial_instance(
    config: &ExperimentConfig,
    k: usize,
    noise_index: usize,
    trial: usize,
) -> Result<(ProblemInstance, Option<IVSpec>)> {
    let value = config.noise.values()[noise_index];
    let seed = trial_seed(config.base_seed, k, noise_index, trial);
    let design = DesignSpec {
        sigma_x: config.sigma_x.clone(),
        sigma_e: config.sigma_e,
    };
    let inst = gen_instance(
        config.n,
        config.dimension(k),
        k,
        &design,
        &config.noise.corruption(value),
        seed,
    )?;
    let iv = if config.methods.contains(&Method::InstrumentalVariable) {
        Some(gen_iv(
            &inst.x,
            config.iv_ratio * k,
            derive_seed(seed, "iv", 0),
        )?)
    } else {
        None
    };
    Ok((inst, iv))
}

fn final_choice(
    method: &Method,
    inst: &ProblemInstance,
    sigma_x: &Covariance,
    iv: Option<&IVSpec>,
) -> FinalEstimatorChoice {
    let noise = inst.corruption.noise_covariance();
    let scaled = |c: &Covariance, f: f64| match c {
        Covariance::Isotropic(v) => Covariance::Isotropic(v * f),
        Covariance::Dense(m) => Covariance::Dense(m * f),
        Covariance::Equicorrelated(_) => Covariance::Dense(c.to_dense(inst.p) * f),
    };
    match method {
        Method::KnownSigmaW { scale } => {
            FinalEstimatorChoice::KnownSigmaW(scaled(&noise, scale * scale))
        }
        Method::UpperBoundSigmaW { factor } => {
            FinalEstimatorChoice::UpperBoundSigmaW(scaled(&noise, *factor))
        }
        Method::KnownSigmaX => FinalEstimatorChoice::KnownSigmaX(sigma_x.clone()),
        Method::InstrumentalVariable => {
            FinalEstimatorChoice::InstrumentalVariable(iv.expect("instruments generated").clone())
        }
        Method::MissingData => FinalEstimatorChoice::MissingData(inst.corruption.rho()),
        Method::Naive | Method::Clean => FinalEstimatorChoice::CleanLS,
    }
}

/// Evaluate every configured method on one trial, in `config.methods` order.
pub fn run_trial(
    config: &ExperimentConfig,
    k: usize,
    noise_index: usize,
    trial: usize,
    options: SweepOptions,
) -> Result<Vec<TrialOutcome>> {
    let (inst, iv) = trial_instance(config, k, noise_index, trial)?;
    let truth = inst.support();
    let failed = |elapsed_ms| TrialOutcome {
        l2_error: None,
        exact_support: false,
        superset: false,
        elapsed_ms,
    };

    match config.regime {
        Regime::LowDim => Ok(config
            .methods
            .iter()
            .map(|method| {
                let clock = Clock::start(options.timing);
                let covariates = if *method == Method::Clean {
                    &inst.x
                } else {
                    &inst.z
                };
                let choice = final_choice(method, &inst, &config.sigma_x, iv.as_ref());
                let all: Vec<usize> = (0..inst.p).collect();
                let fit = choice
                    .restricted_moments(covariates, &inst.y, &all)
                    .and_then(|est| solve_default(&est));
                match fit {
                    Ok(beta) => TrialOutcome {
                        l2_error: Some(l2_error(&beta, &inst.beta_star).expect("same length")),
                        exact_support: true,
                        superset: true,
                        elapsed_ms: clock.ms(),
                    },
                    Err(_) => failed(clock.ms()),
                }
            })
            .collect()),
        Regime::HighDim => {
            let clock = Clock::start(options.timing);
            let on_z = omp::select_support(&inst.z, &inst.y, k).ok();
            let select_ms = clock.ms();
            let mut on_x = None;
            Ok(config
                .methods
                .iter()
                .map(|method| {
                    let clock = Clock::start(options.timing);
                    let (covariates, selection) = if *method == Method::Clean {
                        let sel = on_x
                            .get_or_insert_with(|| omp::select_support(&inst.x, &inst.y, k).ok())
                            .clone();
                        (&inst.x, sel)
                    } else {
                        (&inst.z, on_z.clone())
                    };
                    let choice = final_choice(method, &inst, &config.sigma_x, iv.as_ref());
                    // support metrics come from the selection, which never
                    // depends on the final estimator
                    let report = selection
                        .as_ref()
                        .map(|s| support_report(&s.support, &truth));
                    let fit = selection.ok_or(()).and_then(|sel| {
                        omp::finish(
                            covariates,
                            &inst.y,
                            sel,
                            &choice,
                            estimators::PsdRepair::Fail,
                        )
                        .map_err(|_| ())
                    });
                    TrialOutcome {
                        l2_error: fit
                            .ok()
                            .map(|f| l2_error(&f.beta_hat, &inst.beta_star).expect("same length")),
                        exact_support: report.is_some_and(|r| r.exact_match),
                        superset: report.is_some_and(|r| r.superset),
                        elapsed_ms: clock.ms() + select_ms,
                    }
                })
                .collect())
        }
    }
}

/// Mean and sample standard deviation, summed in index order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn aggregate(
    config: &ExperimentConfig,
    k: usize,
    noise_index: usize,
    method_index: usize,
    outcomes: &[TrialOutcome],
) -> Result<ResultRecord> {
    let method = &config.methods[method_index];
    let value = config.noise.values()[noise_index];
    let (sigma_w, rho) = match config.noise {
        NoiseAxis::SigmaW(_) => (value, 0.0),
        NoiseAxis::Rho(_) => (0.0, value),
    };
    let control = config
        .control
        .unwrap_or_else(|| method.default_control(&config.noise));
    let errors: Vec<f64> = outcomes.iter().filter_map(|o| o.l2_error).collect();
    let (mean, std) = mean_std(&errors);
    let trials = outcomes.len();
    let frac = |c: usize| c as f64 / trials as f64;
    Ok(ResultRecord {
        regime: config.regime,
        estimator: method.label(),
        n: config.n,
        p: config.reported_p(k),
        k,
        sigma_w,
        rho,
        control_value: control_param(control, k, sigma_w, rho)?,
        mean_l2_error: mean,
        std_l2_error: std,
        support_recovery_rate: frac(outcomes.iter().filter(|o| o.exact_support).count()),
        failure_rate: frac(trials - errors.len()),
        trials,
        wall_time_ms: outcomes.iter().map(|o| o.elapsed_ms).sum(),
    })
}

/// Per-trial outcomes of every cell, indexed `[cell][trial][method]` with
/// cells in `(k, noise)` row-major order.
pub fn run_cells(
    config: &ExperimentConfig,
    options: SweepOptions,
) -> Result<Vec<Vec<Vec<TrialOutcome>>>> {
    config.validate()?;
    let nk = config.ks.len();
    let nv = config.noise.len();
    let trials = config.trials;
    let flat = par::map_indexed(nk * nv * trials, |idx| {
        let trial = idx % trials;
        let cell = idx / trials;
        run_trial(config, config.ks[cell / nv], cell % nv, trial, options)
    });
    let flat: Vec<Vec<TrialOutcome>> = flat.into_iter().collect::<Result<_>>()?;
    let mut cells = Vec::with_capacity(nk * nv);
    let mut it = flat.into_iter();
    for _ in 0..nk * nv {
        cells.push(it.by_ref().take(trials).collect());
    }
    Ok(cells)
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    run_sweep_with(config, SweepOptions { timing: true })
}

/// Records in grid order: `k`, then noise level, then method.
pub fn run_sweep_with(
    config: &ExperimentConfig,
    options: SweepOptions,
) -> Result<Vec<ResultRecord>> {
    let cells = run_cells(config, options)?;
    let nv = config.noise.len();
    let mut records = Vec::with_capacity(cells.len() * config.methods.len());
    for (ci, cell) in cells.iter().enumerate() {
        let k = config.ks[ci / nv];
        for mi in 0..config.methods.len() {
            let outcomes: Vec<TrialOutcome> = cell.iter().map(|t| t[mi]).collect();
            records.push(aggregate(config, k, ci % nv, mi, &outcomes)?);
        }
    }
    Ok(records)
}

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

fn record_fields(r: &ResultRecord) -> [String; 14] {
    [
        r.regime.label().to_string(),
        r.estimator.clone(),
        r.n.to_string(),
        r.p.to_string(),
        r.k.to_string(),
        fmt_float(r.sigma_w),
        fmt_float(r.rho),
        fmt_float(r.control_value),
        fmt_float(r.mean_l2_error),
        fmt_float(r.std_l2_error),
        fmt_float(r.support_recovery_rate),
        fmt_float(r.failure_rate),
        r.trials.to_string(),
        fmt_float(r.wall_time_ms),
    ]
}

/// Write records as CSV (LF line endings, floats with 17 significant digits).
pub fn write_records<W: Write>(
    records: &[ResultRecord],
    out: W,
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(record_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(records: &[ResultRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_records(records, std::io::BufWriter::new(file)).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_records<R: Read>(input: R) -> std::result::Result<Vec<ResultRecord>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(format!(
            "unexpected header: {}",
            header.iter().collect::<Vec<_>>().join(",")
        ));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let bad = |col: &str| format!("row {}: bad `{col}`", line + 1);
        let f = |i: usize| row[i].parse::<f64>().map_err(|_| bad(CSV_HEADER[i]));
        let u = |i: usize| row[i].parse::<usize>().map_err(|_| bad(CSV_HEADER[i]));
        out.push(ResultRecord {
            regime: row[0].parse().map_err(|_| bad("regime"))?,
            estimator: row[1].to_string(),
            n: u(2)?,
            p: u(3)?,
            k: u(4)?,
            sigma_w: f(5)?,
            rho: f(6)?,
            control_value: f(7)?,
            mean_l2_error: f(8)?,
            std_l2_error: f(9)?,
            support_recovery_rate: f(10)?,
            failure_rate: f(11)?,
            trials: u(12)?,
            wall_time_ms: f(13)?,
        });
    }
    Ok(out)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_records(file).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Reduced `n` and trial counts; every preset runs in well under a minute.
    #[default]
    Desk,
    /// The protocol's original sizes and trial counts.
    Paper,
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(invalid(format!("unknown scale `{other}`"))),
        }
    }
}

pub const PRESET_NAMES: [&str; 8] = [
    "fig1", "fig2", "fig3", "fig4", "fig5", "fig7", "fig7b", "fig8",
];

fn step_grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    // integer multiples keep grid values exact decimal literals where possible
    (0..count)
        .map(|i| ((start + step * i as f64) * 1e9).round() / 1e9)
        .collect()
}

/// Named sweep configurations for the simulation protocols.
pub fn preset(name: &str, scale: Scale) -> Result<ExperimentConfig> {
    let desk = scale == Scale::Desk;
    let pick = |d: usize, p: usize| if desk { d } else { p };
    let ks: Vec<usize> = (2..=7).collect();
    let base = ExperimentConfig {
        name: name.to_string(),
        regime: Regime::LowDim,
        n: 0,
        p: None,
        ks: ks.clone(),
        noise: NoiseAxis::SigmaW(vec![]),
        sigma_e: 0.0,
        sigma_x: Covariance::identity(),
        methods: vec![],
        trials: 0,
        base_seed: DEFAULT_BASE_SEED,
        iv_ratio: 2,
        control: None,
    };
    let low_sigma_w = if desk {
        vec![0.0, 0.5, 1.0, 1.5, 2.0]
    } else {
        step_grid(0.0, 0.1, 21)
    };
    let high_sigma_w = if desk {
        vec![0.0, 0.25, 0.5, 0.75, 1.0]
    } else {
        step_grid(0.0, 0.1, 11)
    };
    let cfg = match name {
        "fig1" => ExperimentConfig {
            n: pick(800, 3200),
            noise: NoiseAxis::SigmaW(low_sigma_w),
            methods: vec![Method::KNOWN_SIGMA_W],
            trials: pick(50, 200),
            ..base
        },
        "fig2" => ExperimentConfig {
            n: pick(800, 3200),
            noise: NoiseAxis::SigmaW(low_sigma_w),
            methods: vec![Method::KnownSigmaX, Method::InstrumentalVariable],
            trials: pick(50, 100),
            ..base
        },
        "fig3" => ExperimentConfig {
            n: pick(800, 3200),
            ks: vec![7],
            noise: NoiseAxis::SigmaW(step_grid(0.0, 0.1, 21)),
            methods: vec![Method::KNOWN_SIGMA_W, Method::KnownSigmaX],
            trials: 100,
            ..base
        },
        "fig4" => ExperimentConfig {
            regime: Regime::HighDim,
            n: 400,
            p: Some(450),
            noise: NoiseAxis::SigmaW(high_sigma_w),
            methods: vec![Method::KNOWN_SIGMA_W],
            trials: pick(50, 200),
            ..base
        },
        "fig5" => ExperimentConfig {
            n: pick(1000, 2000),
            noise: NoiseAxis::Rho(if desk {
                vec![0.0, 0.2, 0.4, 0.6]
            } else {
                step_grid(0.0, 0.1, 9)
            }),
            methods: vec![Method::MissingData],
            trials: pick(50, 200),
            ..base
        },
        "fig7" | "fig7b" => ExperimentConfig {
            regime: Regime::HighDim,
            n: 500,
            p: Some(750),
            noise: NoiseAxis::Rho(step_grid(0.0, 0.1, 6)),
            sigma_x: if name == "fig7b" {
                Covariance::Equicorrelated(0.2)
            } else {
                Covariance::identity()
            },
            methods: vec![Method::MissingData],
            trials: pick(20, 50),
            ..base
        },
        "fig8" => ExperimentConfig {
            regime: Regime::HighDim,
            n: 400,
            p: Some(450),
            noise: NoiseAxis::SigmaW(high_sigma_w),
            methods: vec![
                Method::KNOWN_SIGMA_W,
                Method::KnownSigmaW { scale: 0.5 },
                Method::KnownSigmaW { scale: 2.0 },
            ],
            trials: 20,
            ..base
        },
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            name: "small".into(),
            regime: Regime::LowDim,
            n: 120,
            p: None,
            ks: vec![2, 3],
            noise: NoiseAxis::SigmaW(vec![0.0, 0.5]),
            sigma_e: 0.1,
            sigma_x: Covariance::identity(),
            methods: vec![
                Method::KNOWN_SIGMA_W,
                Method::KnownSigmaX,
                Method::InstrumentalVariable,
            ],
            trials: 6,
            base_seed: 3,
            iv_ratio: 2,
            control: None,
        }
    }

    #[test]
    fn method_labels_round_trip() {
        let methods = [
            Method::KNOWN_SIGMA_W,
            Method::KnownSigmaW { scale: 0.5 },
            Method::UpperBoundSigmaW { factor: 2.0 },
            Method::KnownSigmaX,
            Method::InstrumentalVariable,
            Method::MissingData,
            Method::Naive,
            Method::Clean,
        ];
        for m in methods {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert!("sigma_w_x-1".parse::<Method>().is_err());
        assert!("lasso".parse::<Method>().is_err());
    }

    #[test]
    fn presets_match_protocols() {
        let c = preset("fig4", Scale::Desk).unwrap();
        assert_eq!((c.p, c.n, c.sigma_e), (Some(450), 400, 0.0));
        assert_eq!(c.sigma_x, Covariance::identity());
        assert_eq!(c.ks.len() * c.noise.len(), 30);

        let c = preset("fig5", Scale::Paper).unwrap();
        assert_eq!(c.n, 2000);
        let NoiseAxis::Rho(r) = &c.noise else {
            panic!()
        };
        assert!(r.iter().all(|v| (0.0..=0.8).contains(v)));
        assert_eq!(*r.last().unwrap(), 0.8);

        let c = preset("fig1", Scale::Paper).unwrap();
        assert_eq!(c.n, 3200);
        let c = preset("fig7b", Scale::Paper).unwrap();
        assert_eq!((c.p, c.n), (Some(750), 500));
        assert_eq!(c.sigma_x, Covariance::Equicorrelated(0.2));

        assert!(matches!(
            preset("nonexistent", Scale::Desk),
            Err(Error::UnknownPreset(_))
        ));
        for name in PRESET_NAMES {
            for scale in [Scale::Desk, Scale::Paper] {
                preset(name, scale).unwrap().validate().unwrap();
            }
        }
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = small_config();
        c.methods = vec![Method::MissingData];
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.noise = NoiseAxis::Rho(vec![0.2]);
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.regime = Regime::HighDim;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.noise = NoiseAxis::SigmaW(vec![]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn records_in_grid_order_and_deterministic() {
        let c = small_config();
        let opts = SweepOptions { timing: false };
        let a = run_sweep_with(&c, opts).unwrap();
        let b = run_sweep_with(&c, opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2 * 2 * 3);
        let coords: Vec<(usize, f64, String)> = a
            .iter()
            .map(|r| (r.k, r.sigma_w, r.estimator.clone()))
            .collect();
        assert_eq!(coords[0], (2, 0.0, "sigma_w".into()));
        assert_eq!(coords[1], (2, 0.0, "sigma_x".into()));
        assert_eq!(coords[2], (2, 0.0, "iv".into()));
        assert_eq!(coords[3], (2, 0.5, "sigma_w".into()));
        assert_eq!(coords[6], (3, 0.0, "sigma_w".into()));
        for r in &a {
            assert!((0.0..=1.0).contains(&r.support_recovery_rate));
            assert!(r.std_l2_error >= 0.0);
            assert_eq!(r.wall_time_ms, 0.0);
        }
    }

    #[test]
    fn aggregation_matches_sequential_reference() {
        let c = small_config();
        let records = run_sweep_with(&c, SweepOptions::default()).unwrap();
        let mut idx = 0;
        for &k in &c.ks {
            for ni in 0..c.noise.len() {
                let per_trial: Vec<Vec<TrialOutcome>> = (0..c.trials)
                    .map(|t| run_trial(&c, k, ni, t, SweepOptions::default()).unwrap())
                    .collect();
                for mi in 0..c.methods.len() {
                    let errs: Vec<f64> = per_trial.iter().filter_map(|t| t[mi].l2_error).collect();
                    let n = errs.len() as f64;
                    let mut mean = 0.0;
                    for e in &errs {
                        mean += e / n;
                    }
                    let mut ss = 0.0;
                    for e in &errs {
                        ss += (e - mean) * (e - mean);
                    }
                    let std = (ss / (n - 1.0)).sqrt();
                    let r = &records[idx];
                    assert!((r.mean_l2_error - mean).abs() <= 1e-12 * mean.max(1.0));
                    assert!((r.std_l2_error - std).abs() <= 1e-12 * std.max(1.0));
                    idx += 1;
                }
            }
        }
    }

    #[test]
    fn exact_cell_without_noise() {
        let mut c = small_config();
        c.sigma_e = 0.0;
        let r = run_sweep_with(&c, SweepOptions::default()).unwrap();
        let clean_sw = r
            .iter()
            .find(|r| r.sigma_w == 0.0 && r.estimator == "sigma_w")
            .unwrap();
        assert!(clean_sw.mean_l2_error <= 1e-8);
    }

    #[test]
    fn csv_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_csv(&[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{}\n", CSV_HEADER.join(",")));

        let records = run_sweep_with(&small_config(), SweepOptions { timing: true }).unwrap();
        let path = dir.path().join("one.csv");
        write_csv(&records[..1], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("low_dim,sigma_w,120,2,2,"));

        write_csv(&records, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), records);
    }

    #[test]
    fn write_to_missing_directory_reports_path() {
        let err = write_csv(&[], "/nonexistent-dir/x.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }

    #[test]
    fn config_json_round_trip() {
        let c = preset("fig8", Scale::Desk).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"sigma_w_x0.5\""));
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
