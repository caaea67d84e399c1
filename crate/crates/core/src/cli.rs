//! Command-line front end. Every subcommand reads a JSON config, writes CSV
//! or JSON-lines output, and maps failures to exit codes:
//! 0 success, 1 numeric failure, 2 config error, 3 verification failure.

use crate::kernels::{EnsembleSpec, KernelError, KernelModel};
use crate::limits::PluePrefactor;
use crate::quadrature::QuadratureSettings;
use crate::sampler::{default_tolerance, empirical_vs_kernel, sample_gue_source, sample_lue, EigenSamples, SamplerError};
use crate::verify::{builtin_suite, Check, LimitScan, VerificationReport, BUILTIN_SUITES};
use crate::wcatalog::WFunction;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERIC: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(_) | CliError::Io(_) => EXIT_NUMERIC,
            CliError::Verification(_) => EXIT_VERIFY,
        }
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::InvalidSpec(_) | KernelError::InvalidPlan(_) | KernelError::W(_) | KernelError::ConfluentSources | KernelError::BranchCutHit(_) => {
                CliError::Config(e.to_string())
            }
            e => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Invalid(m) => CliError::Config(m),
            e => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "biokernel", version, about = "Correlation kernels of biorthogonal ensembles of derivative type")]
pub struct Cli {
    /// Worker threads (falls back to BIOKERNEL_THREADS, then all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel values on a grid: CSV x,x_prime,re,im,err_est
    Kernel(KernelArgs),
    /// Diagonal and normalized density: CSV x,kernel_diag,density
    Density(OutArgs),
    /// Run a check suite; JSON lines on stdout
    Verify(VerifyArgs),
    /// Convergence scan: CSV N,sup_error,ratio_to_previous
    Limit(LimitArgs),
    /// Monte Carlo eigenvalues: CSV draw_index,eigenvalue_rank,value, report on stdout
    Sample(SampleArgs),
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `start:stop:count`, used for both x and x'
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `start:stop:count`
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Suite file `{"checks": [...], "settings": {...}}`
    #[arg(long, required_unless_present = "suite")]
    pub config: Option<PathBuf>,
    /// Built-in suite: gue, lue or limits
    #[arg(long)]
    pub suite: Option<String>,
    /// Also write the JSON lines here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LimitArgs {
    /// `{"scan": {...}, "settings": {...}}`
    #[arg(long, required_unless_present = "scan")]
    pub config: Option<PathBuf>,
    /// Built-in scan: plue, plue_one, plue_bessel or mb
    #[arg(long)]
    pub scan: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Either explicit values or `count` points from `start` to `stop`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
}

impl GridSpec {
    pub fn parse_flag(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("--grid expects start:stop:count, got `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(Self {
            values: None,
            start: Some(parts[0].trim().parse().map_err(|_| bad())?),
            stop: Some(parts[1].trim().parse().map_err(|_| bad())?),
            count: Some(parts[2].trim().parse().map_err(|_| bad())?),
        })
    }

    pub fn points(&self, field: &str) -> Result<Vec<f64>, CliError> {
        match (&self.values, self.start, self.stop, self.count) {
            (Some(v), None, None, None) if !v.is_empty() => Ok(v.clone()),
            (None, Some(a), Some(b), Some(n)) if n >= 2 && a.is_finite() && b.is_finite() && a < b => {
                Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
            }
            (None, Some(a), _, Some(1)) => Ok(vec![a]),
            _ => Err(CliError::Config(format!("{field}: give either a nonempty `values` list or `start` < `stop` with `count` >= 2"))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelConfig {
    model: KernelModel,
    #[serde(default)]
    x: Option<GridSpec>,
    #[serde(default)]
    x_prime: Option<GridSpec>,
    #[serde(default)]
    settings: Option<QuadratureSettings>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityConfig {
    model: KernelModel,
    #[serde(default)]
    x: Option<GridSpec>,
    #[serde(default)]
    settings: Option<QuadratureSettings>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyConfig {
    checks: Vec<Check>,
    #[serde(default)]
    settings: Option<QuadratureSettings>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitConfig {
    scan: LimitScan,
    #[serde(default)]
    settings: Option<QuadratureSettings>,
}

/// Matrix ensembles the sampler knows.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleEnsemble {
    /// `M + diag(a)`; compared with the Gaussian kernel with sources `a`
    Gue { a: Vec<f64> },
    /// `G G*` with `G` of size `N×(N+ν)`; compared with the multiplicative
    /// kernel of `Γ(z+ν)` with sources `1..N`
    Lue {
        #[serde(rename = "N")]
        n: usize,
        nu: usize,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleConfig {
    ensemble: SampleEnsemble,
    #[serde(default)]
    count: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    /// grid for the kernel CDF
    #[serde(default)]
    grid: Option<GridSpec>,
    #[serde(default)]
    tolerance: Option<f64>,
    #[serde(default)]
    settings: Option<QuadratureSettings>,
}

/// Parses JSON with the path of the offending key in the message.
pub fn parse_config<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config(format!("{origin}: at `{path}`: {inner}"))
    })
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

fn settings_or_default(s: Option<QuadratureSettings>) -> Result<QuadratureSettings, CliError> {
    let s = s.unwrap_or_default();
    s.validate().map_err(|e| CliError::Config(format!("settings: {e}")))?;
    Ok(s)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn default_axis(model: &KernelModel) -> GridSpec {
    let (start, stop) = if model.is_multiplicative() { (0.05, 10.0) } else { (-6.0, 6.0) };
    GridSpec { values: None, start: Some(start), stop: Some(stop), count: Some(121) }
}

pub fn cmd_kernel(args: &KernelArgs) -> Result<(), CliError> {
    let cfg: KernelConfig = read_config(&args.config)?;
    cfg.model.validate()?;
    let settings = settings_or_default(cfg.settings)?;
    let (gx, gxp) = match &args.grid {
        Some(g) => {
            let g = GridSpec::parse_flag(g)?;
            (g.clone(), g)
        }
        None => {
            let x = cfg.x.clone().unwrap_or_else(|| default_axis(&cfg.model));
            (x.clone(), cfg.x_prime.clone().unwrap_or(x))
        }
    };
    let xs = gx.points("x")?;
    let xps = gxp.points("x_prime")?;
    let pts: Vec<(f64, f64)> = xs.iter().flat_map(|x| xps.iter().map(move |xp| (*x, *xp))).collect();
    let vals = cfg.model.eval_batch(&pts, &settings)?;
    let mut out = String::from("x,x_prime,re,im,err_est\n");
    for ((x, xp), v) in pts.iter().zip(&vals) {
        writeln!(out, "{},{},{},{},{}", num(*x), num(*xp), num(v.value.re), num(v.value.im), num(v.error_estimate)).unwrap();
    }
    write_atomic(&args.out, &out)
}

pub fn cmd_density(args: &OutArgs) -> Result<(), CliError> {
    let cfg: DensityConfig = read_config(&args.config)?;
    cfg.model.validate()?;
    let settings = settings_or_default(cfg.settings)?;
    let g = match &args.grid {
        Some(g) => GridSpec::parse_flag(g)?,
        None => cfg.x.clone().unwrap_or_else(|| default_axis(&cfg.model)),
    };
    let xs = g.points("x")?;
    let pts: Vec<(f64, f64)> = xs.iter().map(|x| (*x, *x)).collect();
    let vals = cfg.model.eval_batch(&pts, &settings)?;
    let n = cfg.model.n() as f64;
    let mut out = String::from("x,kernel_diag,density\n");
    for (x, v) in xs.iter().zip(&vals) {
        writeln!(out, "{},{},{}", num(*x), num(v.value.re), num(v.value.re / n)).unwrap();
    }
    write_atomic(&args.out, &out)
}

/// Runs the checks, prints one JSON line per report, and fails with
/// `Verification` when any report fails.
pub fn cmd_verify(args: &VerifyArgs) -> Result<Vec<VerificationReport>, CliError> {
    let (checks, settings) = match (&args.config, &args.suite) {
        (Some(path), _) => {
            let cfg: VerifyConfig = read_config(path)?;
            (cfg.checks, cfg.settings)
        }
        (None, Some(name)) => {
            let suite = builtin_suite(name).ok_or_else(|| CliError::Config(format!("unknown suite `{name}`; known: {}", BUILTIN_SUITES.join(", "))))?;
            (suite, None)
        }
        (None, None) => return Err(CliError::Config("give --config or --suite".into())),
    };
    let settings = settings_or_default(settings)?;
    let mut reports = Vec::with_capacity(checks.len());
    let mut lines = String::new();
    for c in &checks {
        let r = c.run(&settings)?;
        let line = r.json_line();
        println!("{line}");
        lines.push_str(&line);
        lines.push('\n');
        reports.push(r);
    }
    if let Some(out) = &args.out {
        write_atomic(out, &lines)?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.check_name.as_str()).collect();
    if failed.is_empty() {
        Ok(reports)
    } else {
        Err(CliError::Verification(format!("{} of {} checks failed: {}", failed.len(), reports.len(), failed.join(", "))))
    }
}

/// Scans available by name from the command line.
pub fn builtin_scan(name: &str) -> Option<LimitScan> {
    let plue = |prefactor, r: f64, w: WFunction, bessel_oracle| LimitScan::Plue {
        nu: 0.0,
        r,
        w,
        n_list: vec![16, 32, 64],
        grid: vec![0.25, 0.5, 1.0, 2.0],
        prefactor,
        bessel_oracle,
    };
    match name {
        "plue" => Some(plue(PluePrefactor::Quarter, 1.0, WFunction::gaussian(1.0, 0.0), false)),
        "plue_one" => Some(plue(PluePrefactor::One, 1.0, WFunction::gaussian(1.0, 0.0), false)),
        "plue_bessel" => Some(plue(PluePrefactor::Quarter, 0.0, WFunction::one(), true)),
        "mb" => Some(LimitScan::Mb { theta: 2.0, eta: 0.0, w: WFunction::gamma_lue_star(1.0), n_list: vec![8, 16, 32], grid: vec![0.5, 1.0, 2.0] }),
        _ => None,
    }
}

pub fn cmd_limit(args: &LimitArgs) -> Result<(), CliError> {
    let (scan, settings) = match (&args.config, &args.scan) {
        (Some(path), _) => {
            let cfg: LimitConfig = read_config(path)?;
            (cfg.scan, cfg.settings)
        }
        (None, Some(name)) => {
            (builtin_scan(name).ok_or_else(|| CliError::Config(format!("unknown scan `{name}`; known: plue, plue_one, plue_bessel, mb")))?, None)
        }
        (None, None) => return Err(CliError::Config("give --config or --scan".into())),
    };
    let settings = settings_or_default(settings)?;
    let rows = scan.run(&settings)?;
    let mut out = String::from("N,sup_error,ratio_to_previous\n");
    for r in &rows {
        writeln!(out, "{},{},{}", r.n, num(r.sup_error), opt_num(r.ratio_to_previous)).unwrap();
    }
    write_atomic(&args.out, &out)
}

fn sample_kernel_diag(ens: &SampleEnsemble, grid: &[f64], settings: &QuadratureSettings) -> Result<Vec<f64>, CliError> {
    let pts: Vec<(f64, f64)> = grid.iter().map(|x| (*x, *x)).collect();
    let model = match ens {
        SampleEnsemble::Gue { a } => {
            let mut spec = EnsembleSpec::distinct(WFunction::canonical_gaussian(), a);
            // repeated entries become one source with multiplicity
            let mut merged: Vec<crate::kernels::Source> = Vec::new();
            for s in spec.sources {
                match merged.iter_mut().find(|m| m.b == s.b) {
                    Some(m) => m.mult += 1,
                    None => merged.push(s),
                }
            }
            spec.sources = merged;
            KernelModel::Additive { spec, plan: None }
        }
        SampleEnsemble::Lue { n, nu } => {
            let a: Vec<f64> = (1..=*n).map(|j| j as f64).collect();
            KernelModel::Multiplicative { spec: EnsembleSpec::distinct(WFunction::gamma_lue_star(*nu as f64), &a), plan: None }
        }
    };
    Ok(model.eval_batch(&pts, settings)?.iter().map(|v| v.value.re).collect())
}

pub fn cmd_sample(args: &SampleArgs) -> Result<VerificationReport, CliError> {
    let cfg: SampleConfig = read_config(&args.config)?;
    let settings = settings_or_default(cfg.settings)?;
    let count = args.count.or(cfg.count).unwrap_or(100_000);
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let (samples, default_grid): (EigenSamples, GridSpec) = match &cfg.ensemble {
        SampleEnsemble::Gue { a } => {
            let lo = a.iter().copied().fold(0.0, f64::min) - 7.0;
            let hi = a.iter().copied().fold(0.0, f64::max) + 7.0;
            (sample_gue_source(a.len(), a, count, seed)?, GridSpec { values: None, start: Some(lo), stop: Some(hi), count: Some(561) })
        }
        SampleEnsemble::Lue { n, nu } => {
            let hi = 10.0 + 4.0 * (*n + *nu) as f64;
            (sample_lue(*n, *nu, count, seed)?, GridSpec { values: None, start: Some(1e-6), stop: Some(hi), count: Some(601) })
        }
    };
    let grid = cfg.grid.clone().unwrap_or(default_grid).points("grid")?;
    let diag = sample_kernel_diag(&cfg.ensemble, &grid, &settings)?;
    let tol = cfg.tolerance.unwrap_or_else(|| default_tolerance(count));
    let report = empirical_vs_kernel(&samples.all(), samples.n, &grid, &diag, tol)?;
    let mut buf = Vec::new();
    samples.write_csv(&mut buf)?;
    write_atomic(&args.out, &String::from_utf8(buf).expect("csv is ascii"))?;
    println!("{}", report.json_line());
    if report.passed {
        Ok(report)
    } else {
        Err(CliError::Verification(format!("sup CDF gap {} above {}", report.discrepancy, report.tolerance)))
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("BIOKERNEL_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            v.trim().parse().map(Some).map_err(|_| CliError::Config(format!("BIOKERNEL_THREADS must be a positive integer, got `{v}`")))
        }
        _ => Ok(None),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(CliError::Config("thread count must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Kernel(a) => cmd_kernel(a),
        Command::Density(a) => cmd_density(a),
        Command::Verify(a) => cmd_verify(a).map(|_| ()),
        Command::Limit(a) => cmd_limit(a),
        Command::Sample(a) => cmd_sample(a).map(|_| ()),
    }
}

/// Parses the process arguments, runs, reports errors on stderr and returns
/// the exit code.
pub fn main_exit_code() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("biokernel: {e}");
            e.exit_code()
        }
    }
}
