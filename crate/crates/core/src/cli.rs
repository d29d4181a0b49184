//! Command-line front end.
//!
//! Subcommands: `classify`, `simulate`, `estimate`, `couple`, `validate`.
//! Every run writes its artifacts plus a `manifest.json` into `--out`.
//! Exit codes: 0 success, 1 validation failure, 2 usage or input error,
//! 3 numerical error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::estimate::{self, EstimateError};
use crate::io::json_f64;
use crate::model::{builtin, load_model, ModelError, ModelSpec};
use crate::sim::{self, InitialLaw, SimError, StateLaw};
use crate::spectral::{self, SpectralError};
use crate::validate::{self, ValidateError, ValidateOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SWITCHOU_THREADS";

#[derive(Debug, Parser)]
#[command(name = "switchou", version, about = "Ornstein-Uhlenbeck diffusions with Markov switching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tail regime, critical exponent and η_p curve.
    Classify(ClassifyArgs),
    /// Exact path simulation.
    Simulate(SimulateArgs),
    /// Monte Carlo estimates on (approximately) stationary samples.
    Estimate(EstimateArgs),
    /// Coupling decay experiment.
    Couple(CoupleArgs),
    /// Built-in validation suite.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model JSON file, or `builtin:<name>` (A, B, C3, constant, gaussian).
    #[arg(long)]
    pub model: String,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1)]
    pub n_paths: usize,
    /// Comma-separated output times in [0, horizon] (default: the horizon).
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    /// Initial state, indexed from 0.
    #[arg(long, default_value_t = 0)]
    pub x0: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub y0: f64,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_paths: usize,
    /// Burn-in horizon (default: 40/η_ref).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Moment orders for E|Y|^p.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<f64>,
    /// Laplace arguments for E e^{vY}.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub v: Vec<f64>,
    /// Square-exponential orders for E e^{δY²}.
    #[arg(long, value_delimiter = ',')]
    pub delta: Vec<f64>,
    /// Hill order statistics (default: ⌊√n⌋).
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CouplingMode {
    Synchronous,
    Merge,
}

#[derive(Debug, Args)]
pub struct CoupleArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = CouplingMode::Synchronous)]
    pub mode: CouplingMode,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub horizon: f64,
    #[arg(long)]
    pub n_paths: usize,
    /// Comma-separated output times (default: 0, 1, ..., ⌊horizon⌋).
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    /// Initial state of the first copy; synchronous mode draws X_0 from μ when omitted.
    #[arg(long)]
    pub x0: Option<usize>,
    /// Initial state of the second copy (merge mode).
    #[arg(long)]
    pub x0_tilde: Option<usize>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub y0: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub y0_tilde: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = validate::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sample sizes / 10, Monte Carlo tolerances × 3.
    #[arg(long)]
    pub quick: bool,
    /// Run only these checks (id or name); repeatable.
    #[arg(long = "check")]
    pub checks: Vec<String>,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    fn numerical(message: impl Into<String>) -> Self {
        CliError { code: EXIT_NUMERICAL, message: message.into() }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::SingularSolve | ModelError::InvariantResidual(_) => CliError::numerical(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Model(m) => m.into(),
            SpectralError::NotErgodic { .. }
            | SpectralError::NotExponentialRegime
            | SpectralError::NotGaussianRegime
            | SpectralError::NotTwoStateDegenerate
            | SpectralError::NotNeutralState(_)
            | SpectralError::OutOfDomain { .. }
            | SpectralError::InvalidArgument(_) => CliError::usage(e.to_string()),
            _ => CliError::numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Model(m) => m.into(),
            SimError::Spectral(s) => s.into(),
            SimError::CouplingIdentity { .. } => CliError::numerical(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::Sim(s) => s.into(),
            EstimateError::Spectral(s) => s.into(),
            EstimateError::InsufficientTail(_) => CliError::numerical(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<ValidateError> for CliError {
    fn from(e: ValidateError) -> Self {
        match e {
            ValidateError::UnknownCheck(..) => CliError::usage(e.to_string()),
            ValidateError::Model(m) => m.into(),
            ValidateError::Spectral(s) => s.into(),
            ValidateError::Sim(s) => s.into(),
            ValidateError::Estimate(s) => s.into(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Messages go to stdout/stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli.command, &argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Entry point of the binary.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    if let Err(e) = configure_threads() {
        eprintln!("error: {}", e.message);
        return e.code;
    }
    run(std::env::args_os())
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot configure {n} worker threads: {e}")))
}

fn dispatch(command: Command, argv: &[String]) -> CliResult<i32> {
    match command {
        Command::Classify(a) => classify(a, argv),
        Command::Simulate(a) => simulate(a, argv),
        Command::Estimate(a) => estimate_cmd(a, argv),
        Command::Couple(a) => couple(a, argv),
        Command::Validate(a) => validate_cmd(a, argv),
    }
}

/// Resolves `--model`: a JSON file, or `builtin:<name>`.
pub fn resolve_model(arg: &str) -> CliResult<ModelSpec> {
    if let Some(name) = arg.strip_prefix("builtin:") {
        return builtin::by_name(name).ok_or_else(|| CliError::usage(format!("--model: unknown built-in model {name:?}")));
    }
    Ok(load_model(Path::new(arg))?)
}

fn require_seed(seed: Option<u64>) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::usage("seed required: stochastic commands need an explicit --seed"))
}

fn require_paths(n: usize) -> CliResult<()> {
    if n == 0 {
        Err(CliError::usage("--n-paths must be ≥ 1"))
    } else {
        Ok(())
    }
}

fn model_json(model: &ModelSpec) -> Value {
    serde_json::to_value(model.to_file()).expect("plain struct")
}

fn model_hash(model: &ModelSpec) -> String {
    let text = serde_json::to_string(&model.to_file()).expect("plain struct");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("--out {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn write_json(dir: &Path, name: &str, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("valid JSON");
    text.push('\n');
    write(dir, name, &text)
}

fn write_manifest(dir: &Path, command: &str, argv: &[String], model: Option<&ModelSpec>, seed: Option<u64>, params: Value) -> CliResult<()> {
    let mut manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "argv": argv,
        "seed": seed,
        "params": params,
    });
    if let Some(m) = model {
        manifest["model_sha256"] = json!(model_hash(m));
        manifest["model"] = model_json(m);
    }
    write_json(dir, "manifest.json", &manifest)
}

fn classify(a: ClassifyArgs, argv: &[String]) -> CliResult<i32> {
    let model = resolve_model(&a.model.model)?;
    let report = spectral::classify(&model)?;
    write_json(&a.out, "report.json", &serde_json::to_value(&report).expect("plain struct"))?;
    write(&a.out, "eta_curve.csv", &report.eta_curve.to_csv())?;
    write_manifest(&a.out, "classify", argv, Some(&model), None, json!({}))?;
    println!("regime: {:?}", report.regime);
    Ok(EXIT_OK)
}

fn simulate(a: SimulateArgs, argv: &[String]) -> CliResult<i32> {
    let model = resolve_model(&a.model.model)?;
    let seed = require_seed(a.seed)?;
    require_paths(a.n_paths)?;
    let times = if a.times.is_empty() { vec![a.horizon] } else { a.times.clone() };
    let paths = sim::simulate_paths(&model, a.x0, a.y0, a.horizon, &times, a.n_paths, seed)?;
    write(&a.out, "paths.csv", &sim::paths_to_csv(&paths))?;
    let params = json!({
        "horizon": json_f64(a.horizon),
        "n_paths": a.n_paths,
        "times": times.iter().map(|&t| json_f64(t)).collect::<Vec<_>>(),
        "x0": a.x0,
        "y0": json_f64(a.y0),
    });
    write_manifest(&a.out, "simulate", argv, Some(&model), Some(seed), params)?;
    Ok(EXIT_OK)
}

fn estimate_cmd(a: EstimateArgs, argv: &[String]) -> CliResult<i32> {
    let model = resolve_model(&a.model.model)?;
    let seed = require_seed(a.seed)?;
    require_paths(a.n_paths)?;
    let horizon = match a.horizon {
        Some(h) => h,
        None => sim::stationary_horizon(&model)?,
    };
    let ys = sim::stationary_samples(&model, Some(horizon), a.n_paths, seed)?;
    let summaries = |xs: &[f64], key: &str, f: &dyn Fn(f64) -> Result<estimate::EstimateSummary, EstimateError>| {
        xs.iter()
            .map(|&x| {
                let mut v = f(x)?.to_json();
                v[key] = json_f64(x);
                Ok(v)
            })
            .collect::<Result<Vec<Value>, EstimateError>>()
    };
    let moments = summaries(&a.p, "p", &|p| estimate::estimate_moment(&ys, p))?;
    let laplace = summaries(&a.v, "v", &|v| estimate::estimate_laplace(&ys, v))?;
    let gaussian = summaries(&a.delta, "delta", &|d| estimate::estimate_gaussian_moment(&ys, d))?;
    let k = a.k.unwrap_or_else(|| estimate::default_hill_k(ys.len()));
    let optional = |r: Result<estimate::EstimateSummary, EstimateError>| match r {
        Ok(s) => s.to_json(),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let report = json!({
        "n": ys.len(),
        "horizon": json_f64(horizon),
        "moments": moments,
        "laplace": laplace,
        "gaussian_moments": gaussian,
        "tail_index": optional(estimate::tail_index(&ys, k)),
        "survival_decay_rate": optional(estimate::survival_decay_rate_default(&ys)),
    });
    write_json(&a.out, "estimates.json", &report)?;
    let params = json!({
        "n_paths": a.n_paths,
        "horizon": json_f64(horizon),
        "p": a.p.iter().map(|&x| json_f64(x)).collect::<Vec<_>>(),
        "v": a.v.iter().map(|&x| json_f64(x)).collect::<Vec<_>>(),
        "delta": a.delta.iter().map(|&x| json_f64(x)).collect::<Vec<_>>(),
        "k": k,
    });
    write_manifest(&a.out, "estimate", argv, Some(&model), Some(seed), params)?;
    Ok(EXIT_OK)
}

fn couple(a: CoupleArgs, argv: &[String]) -> CliResult<i32> {
    let model = resolve_model(&a.model.model)?;
    let seed = require_seed(a.seed)?;
    require_paths(a.n_paths)?;
    let times = if a.times.is_empty() {
        (0..=a.horizon.floor() as u32).map(f64::from).collect()
    } else {
        a.times.clone()
    };
    let (decay, meeting) = match a.mode {
        CouplingMode::Synchronous => {
            let law = a.x0.map_or(StateLaw::Stationary, StateLaw::Fixed);
            let e = estimate::wasserstein_decay_experiment(
                &model,
                &law,
                InitialLaw::Point(a.y0),
                InitialLaw::Point(a.y0_tilde),
                a.p,
                a.horizon,
                &times,
                a.n_paths,
                seed,
            )?;
            (e, None)
        }
        CouplingMode::Merge => {
            let (Some(x0), Some(x0_tilde)) = (a.x0, a.x0_tilde) else {
                return Err(CliError::usage("merge coupling needs --x0 and --x0-tilde"));
            };
            let e = estimate::merge_decay_experiment(&model, x0, x0_tilde, a.y0, a.y0_tilde, a.p, a.horizon, &times, a.n_paths, seed)?;
            (e.decay, Some(e.meeting_fit))
        }
    };
    write(&a.out, "decay.csv", &decay.to_csv())?;
    write_json(&a.out, "fit.json", &decay.fit_json())?;
    if let Some(m) = meeting {
        write_json(&a.out, "meeting.json", &serde_json::to_value(m).expect("plain struct"))?;
    }
    let params = json!({
        "mode": format!("{:?}", a.mode).to_lowercase(),
        "p": json_f64(a.p),
        "horizon": json_f64(a.horizon),
        "n_paths": a.n_paths,
        "times": times.iter().map(|&t| json_f64(t)).collect::<Vec<_>>(),
        "x0": a.x0,
        "x0_tilde": a.x0_tilde,
        "y0": json_f64(a.y0),
        "y0_tilde": json_f64(a.y0_tilde),
    });
    write_manifest(&a.out, "couple", argv, Some(&model), Some(seed), params)?;
    Ok(EXIT_OK)
}

fn validate_cmd(a: ValidateArgs, argv: &[String]) -> CliResult<i32> {
    let opts = ValidateOptions { seed: a.seed, quick: a.quick, filter: a.checks.clone() };
    validate::select_checks(&opts.filter)?;
    let report = validate::run_validation(&opts, |c| println!("{}", c.line()))?;
    if let Some(out) = &a.out {
        write_json(out, "validate.json", &report.to_json())?;
        let params = json!({ "quick": a.quick, "checks": a.checks });
        write_manifest(out, "validate", argv, None, Some(a.seed), params)?;
    }
    let failed = report.checks.iter().filter(|c| !c.pass).count();
    println!("{} of {} checks passed", report.checks.len() - failed, report.checks.len());
    Ok(if report.all_pass { EXIT_OK } else { EXIT_VALIDATION })
}
