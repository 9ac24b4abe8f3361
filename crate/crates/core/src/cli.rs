//! Command-line front end: `estimate | curve | experiment | version`.
//!
//! Exit codes: 0 on success, 2 when the computed estimate is `+inf` (a valid
//! answer, not a failure), 1 on usage or data errors. Flags override values
//! from a `--config` JSON file; the seed resolves as flag, then `RD_SEED`,
//! then config, then 0. Every report carries the resolved configuration.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ba::{d_floor_and_dmax, rd_curve, rd_solve, BaConfig, DEFAULT_TOL_D};
use crate::dist::FiniteDist;
use crate::distortion::{DistortionKind, DistortionModel};
use crate::error::{Error, Result};
use crate::estimators::{
    empirical, lossy_likelihood, penalized_estimate, plugin_parametric, plugin_rd, Diagnostics, EstimateReport,
    EstimatorKind, Penalty, Sample,
};
use crate::experiments::{
    consistency_preset, consistency_run, arginf_run, discontinuity_demo, failure_demo, ArginfConfig,
    ConsistencyConfig, DiscontinuityConfig, EstimatorSpec, ExperimentResult, FailureConfig, EXPERIMENTS,
};
use crate::ext_real::ExtReal;
use crate::family::ParamFamily;
use crate::sources::{mth_order_estimate, quantize, read_sample, uniform_grid, ValueFormat};
use crate::symbol::Symbol;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFINITE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "rdest", version, about = "Estimate rate-distortion functions from data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate R(D) from a data file and print a JSON report.
    Estimate(EstimateArgs),
    /// Sweep the plug-in rate-distortion curve and print CSV (D,R,slope).
    Curve(CurveArgs),
    /// Run a named experiment, writing CSV and JSON into --out.
    Experiment(ExperimentArgs),
    /// Print the version.
    Version,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum FormatArg {
    Symbols,
    Reals,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RhoArg {
    Hamming,
    Squared,
    Absolute,
    Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum EstimatorArg {
    PlugIn,
    Parametric,
    Penalized,
    Lossy,
}

/// Data and distortion flags shared by `estimate` and `curve`.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct ModelArgs {
    /// Input file, one value per line.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    /// How to read the input (default: reals for the Gaussian family or
    /// --quantize, symbols otherwise).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Distortion measure.
    #[arg(long, value_enum)]
    rho: Option<RhoArg>,
    /// JSON file {"source": [...], "repro": [...], "rows": [[...]]} for --rho matrix.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Full source alphabet (comma separated); default: the observed symbols.
    #[arg(long, value_delimiter = ',')]
    alphabet: Option<Vec<String>>,
    /// Reproduction alphabet (comma separated); default: the source alphabet.
    #[arg(long, value_delimiter = ',')]
    repro: Option<Vec<String>>,
    /// Quantize real data to a uniform grid "lo,hi,points".
    #[arg(long, allow_hyphen_values = true)]
    quantize: Option<String>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Target distortion.
    #[arg(long = "D", allow_hyphen_values = true)]
    #[serde(rename = "D")]
    d: Option<f64>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// "gaussian" or a JSON file holding a finite-grid family.
    #[arg(long)]
    family: Option<String>,
    /// Gaussian family mean range "lo,hi" (default: data range).
    #[arg(long, allow_hyphen_values = true)]
    mu_range: Option<String>,
    /// Gaussian family sigma range "lo,hi" (default: 0 to data range).
    #[arg(long)]
    sigma_range: Option<String>,
    /// Penalty c/n for the penalized estimator.
    #[arg(long)]
    penalty_c: Option<f64>,
    /// JSON file {"symbols": [...], "probs": [...]} with the codebook law Q.
    #[arg(long)]
    q: Option<PathBuf>,
    /// Block length for the m-th order plug-in.
    #[arg(long)]
    m: Option<usize>,
    /// Report rates in bits instead of nats.
    #[arg(long)]
    bits: bool,
    #[arg(long, env = "RD_SEED")]
    seed: Option<u64>,
    /// JSON file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct CurveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// A single distortion level.
    #[arg(long = "D", allow_hyphen_values = true)]
    #[serde(rename = "D")]
    d: Option<f64>,
    /// Uniform distortion grid "lo,hi,points".
    #[arg(long, allow_hyphen_values = true)]
    d_grid: Option<String>,
    /// Explicit slopes (comma separated, each <= 0).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    slopes: Option<Vec<f64>>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    bits: bool,
    #[arg(long, env = "RD_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
struct ExperimentArgs {
    /// consistency | failure-demo | discontinuity-demo | arginf | mth-order
    name: String,
    /// JSON file with the experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Consistency preset (bernoulli-hamming, markov, gaussian-quantized, ar1-gaussian, entropy).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long = "D")]
    d: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, env = "RD_SEED")]
    seed: Option<u64>,
}

macro_rules! prefer {
    ($a:expr, $b:expr; $($f:ident),+) => {
        $( $a.$f = $a.$f.take().or($b.$f.take()); )+
    };
}

impl ModelArgs {
    fn merge(mut self, mut other: ModelArgs) -> Self {
        prefer!(self, other; input, format, rho, matrix, alphabet, repro, quantize);
        self
    }
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_list(text: &str, len: usize, what: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != len {
        return Err(usage(format!("{what} needs {len} comma-separated numbers, got {text:?}")));
    }
    parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| usage(format!("{what}: {p:?} is not a number"))))
        .collect()
}

fn parse_grid(text: &str, what: &str) -> Result<(f64, f64, usize)> {
    let v = parse_list(text, 3, what)?;
    if v[2] < 0.0 || v[2].fract() != 0.0 {
        return Err(usage(format!("{what}: point count must be a whole number")));
    }
    Ok((v[0], v[1], v[2] as usize))
}

fn rho_kind(rho: RhoArg) -> DistortionKind {
    match rho {
        RhoArg::Hamming => DistortionKind::Hamming,
        RhoArg::Squared => DistortionKind::SquaredError,
        RhoArg::Absolute => DistortionKind::Absolute,
        RhoArg::Matrix => DistortionKind::Matrix,
    }
}

/// Sample and model resolved from the data flags.
struct Prepared {
    sample: Sample,
    model: DistortionModel,
}

fn prepare(args: &ModelArgs, wants_reals: bool) -> Result<Prepared> {
    let input = args.input.as_ref().ok_or_else(|| usage("--in is required"))?;
    let rho = args.rho.ok_or_else(|| usage("--rho is required"))?;
    let reals = match args.format {
        Some(f) => f == FormatArg::Reals,
        None => wants_reals || args.quantize.is_some(),
    };
    let format = if reals { ValueFormat::Reals } else { ValueFormat::Symbols };
    let sample = read_sample(input, format)?;
    let kind = rho_kind(rho);

    if let Some(q) = &args.quantize {
        let (lo, hi, k) = parse_grid(q, "--quantize")?;
        let (qs, qmodel) = quantize(&sample, &uniform_grid(lo, hi, k)?, kind)?;
        return Ok(Prepared { sample: qs, model: qmodel });
    }
    if reals {
        if kind != DistortionKind::SquaredError {
            return Err(usage("real-valued data needs --rho squared with the gaussian family, or --quantize"));
        }
        return Ok(Prepared { sample, model: DistortionModel::squared_error(vec![], vec![])? });
    }
    if kind == DistortionKind::Matrix {
        let path = args.matrix.as_ref().ok_or_else(|| usage("--rho matrix needs --matrix FILE"))?;
        let spec: crate::experiments::ModelSpec = load_json(path)?;
        let model = DistortionModel::matrix(
            spec.source.clone(),
            spec.repro.clone().unwrap_or(spec.source),
            spec.rows.ok_or_else(|| usage("matrix file needs rows"))?,
        )?;
        return Ok(Prepared { sample, model });
    }
    let alphabet: Vec<Symbol> = match &args.alphabet {
        Some(list) => list.iter().map(|s| Symbol::parse(s)).collect(),
        None => {
            let mut seen: Vec<Symbol> = empirical(&sample)?.symbols().to_vec();
            if let Some(r) = &args.repro {
                seen.extend(r.iter().map(|s| Symbol::parse(s)));
                seen.sort();
                seen.dedup();
            }
            seen
        }
    };
    let repro = match &args.repro {
        Some(list) => list.iter().map(|s| Symbol::parse(s)).collect(),
        None => alphabet.clone(),
    };
    Ok(Prepared { sample, model: DistortionModel::from_rule(kind, alphabet, repro)? })
}

fn default_range(sample: &Sample) -> Result<(f64, f64)> {
    let values: Vec<f64> = match sample {
        Sample::Real(v) => v.clone(),
        Sample::Discrete(v) => v.iter().filter_map(Symbol::numeric).collect(),
    };
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return Err(usage("cannot derive a parameter range from non-numeric data"));
    }
    Ok((lo, hi))
}

fn resolve_family(args: &EstimateArgs, sample: &Sample) -> Result<ParamFamily> {
    let name = args.family.as_deref().ok_or_else(|| usage("this estimator needs --family"))?;
    if name != "gaussian" {
        return load_json(Path::new(name));
    }
    let (lo, hi) = default_range(sample)?;
    let mu = match &args.mu_range {
        Some(t) => {
            let v = parse_list(t, 2, "--mu-range")?;
            (v[0], v[1])
        }
        None => (lo, hi),
    };
    let sigma = match &args.sigma_range {
        Some(t) => {
            let v = parse_list(t, 2, "--sigma-range")?;
            (v[0], v[1])
        }
        None => (0.0, (hi - lo).max(1.0)),
    };
    ParamFamily::gaussian(mu, sigma)
}

fn resolve_estimate(mut args: EstimateArgs) -> Result<EstimateArgs> {
    if let Some(path) = args.config.clone() {
        let mut file: EstimateArgs = load_json(&path)?;
        args.model = std::mem::take(&mut args.model).merge(std::mem::take(&mut file.model));
        prefer!(args, file; d, estimator, family, mu_range, sigma_range, penalty_c, q, m, seed);
        args.bits |= file.bits;
    }
    args.seed = Some(args.seed.unwrap_or(0));
    Ok(args)
}

fn estimate_report(args: &EstimateArgs) -> Result<EstimateReport> {
    let d = args.d.ok_or_else(|| usage("--D is required"))?;
    let estimator = args.estimator.unwrap_or(if args.family.is_some() {
        EstimatorArg::Parametric
    } else {
        EstimatorArg::PlugIn
    });
    let gaussian = args.family.as_deref() == Some("gaussian");
    let prepared = prepare(&args.model, gaussian)?;
    let (sample, model) = (&prepared.sample, &prepared.model);
    match estimator {
        EstimatorArg::PlugIn => match args.m {
            Some(m) => mth_order_estimate(sample, m, model, d),
            None => plugin_rd(sample, model, d),
        },
        EstimatorArg::Parametric => plugin_parametric(sample, &resolve_family(args, sample)?, model, d),
        EstimatorArg::Penalized => {
            let penalty = args.penalty_c.map_or(Penalty::Zero, |c| Penalty::Constant { c });
            penalized_estimate(sample, &resolve_family(args, sample)?, model, d, &penalty)
        }
        EstimatorArg::Lossy => {
            let path = args.q.as_ref().ok_or_else(|| usage("--estimator lossy needs --q FILE"))?;
            let q: FiniteDist = load_json(path)?;
            Ok(EstimateReport {
                d,
                estimate: lossy_likelihood(sample, &q, model, d)?,
                estimator_kind: EstimatorKind::LossyLikelihood,
                theta_hat: None,
                diagnostics: Diagnostics { n: sample.len(), ..Default::default() },
            })
        }
    }
}

fn units(bits: bool) -> &'static str {
    if bits {
        "bits"
    } else {
        "nats"
    }
}

fn cmd_estimate(args: EstimateArgs, out: &mut dyn Write) -> Result<i32> {
    let args = resolve_estimate(args)?;
    let mut report = estimate_report(&args)?;
    if args.bits {
        report.estimate = report.estimate.to_bits();
    }
    let doc = json!({ "report": report, "units": units(args.bits), "config": args });
    writeln!(out, "{}", serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?)?;
    Ok(if report.estimate.is_infinite() { EXIT_INFINITE } else { EXIT_OK })
}

fn resolve_curve(mut args: CurveArgs) -> Result<CurveArgs> {
    if let Some(path) = args.config.clone() {
        let mut file: CurveArgs = load_json(&path)?;
        args.model = std::mem::take(&mut args.model).merge(std::mem::take(&mut file.model));
        prefer!(args, file; d, d_grid, slopes, out, seed);
        args.bits |= file.bits;
    }
    args.seed = Some(args.seed.unwrap_or(0));
    Ok(args)
}

fn cmd_curve(args: CurveArgs, out: &mut dyn Write) -> Result<i32> {
    let args = resolve_curve(args)?;
    let prepared = prepare(&args.model, false)?;
    let p = empirical(&prepared.sample)?;
    let model = &prepared.model;
    let cfg = BaConfig::default();
    let mut rows: Vec<(f64, ExtReal, f64)> = Vec::new();
    if let Some(slopes) = &args.slopes {
        if slopes.is_empty() {
            return Err(usage("empty slope grid"));
        }
        for r in rd_curve(&p, model, slopes, &cfg)? {
            rows.push((r.point.distortion, r.point.rate, r.point.slope));
        }
    } else {
        let ds: Vec<f64> = if let Some(d) = args.d {
            vec![d]
        } else if let Some(g) = &args.d_grid {
            let (lo, hi, k) = parse_grid(g, "--d-grid")?;
            match k {
                0 => return Err(usage("empty distortion grid")),
                1 => vec![lo],
                _ => uniform_grid(lo, hi, k)?,
            }
        } else {
            let (floor, max0) = d_floor_and_dmax(&p, model)?;
            if max0 > floor {
                uniform_grid(floor, max0, 21)?
            } else {
                vec![floor]
            }
        };
        for d in ds {
            let s = rd_solve(&p, model, d, DEFAULT_TOL_D, &cfg)?;
            rows.push((d, s.rate, s.slope));
        }
    }
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["D", "R", "slope"]).map_err(err)?;
        for (d, r, s) in &rows {
            let r = if args.bits { r.to_bits() } else { *r };
            w.write_record([d.to_string(), r.to_string(), s.to_string()]).map_err(err)?;
        }
        w.flush()?;
    }
    match &args.out {
        Some(path) => std::fs::write(path, &buf)?,
        None => out.write_all(&buf)?,
    }
    Ok(EXIT_OK)
}

fn cmd_experiment(args: ExperimentArgs, out: &mut dyn Write) -> Result<i32> {
    let seed = args.seed;
    let started = std::time::Instant::now();
    let result: ExperimentResult = match args.name.as_str() {
        "consistency" | "mth-order" => {
            let mut cfg: ConsistencyConfig = match (&args.config, &args.preset) {
                (Some(path), _) => load_json(path)?,
                (None, Some(name)) => consistency_preset(name)?,
                (None, None) => consistency_preset("bernoulli-hamming")?,
            };
            if args.name == "mth-order" {
                cfg.estimator = EstimatorSpec::MthOrder { m: args.m.unwrap_or(2) };
            } else if let Some(m) = args.m {
                cfg.estimator = EstimatorSpec::MthOrder { m };
            }
            if let Some(s) = args.seeds {
                cfg.seeds = s;
            }
            if let Some(d) = args.d {
                cfg.ds = vec![d];
            }
            if let Some(n) = args.n_max {
                cfg.ns.retain(|&x| x < n);
                cfg.ns.push(n);
            }
            if let Some(s) = seed {
                cfg.source.seed = s;
            }
            let mut r = consistency_run(&cfg)?;
            r.name = args.name.clone();
            r
        }
        "failure-demo" => {
            let mut cfg: FailureConfig = match &args.config {
                Some(path) => load_json(path)?,
                None => FailureConfig::new(0.5, 50, 10_000),
            };
            if let Some(p) = args.p {
                cfg.p = p;
            }
            if let Some(s) = args.seeds {
                cfg.seeds = s;
            }
            if let Some(n) = args.n_max {
                cfg.n_max = n;
            }
            if args.d.is_some() {
                cfg.d = args.d;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            failure_demo(&cfg)?
        }
        "discontinuity-demo" => {
            let mut cfg: DiscontinuityConfig = match &args.config {
                Some(path) => load_json(path)?,
                None => DiscontinuityConfig::default(),
            };
            if let Some(d) = args.d {
                cfg.d = d;
            }
            discontinuity_demo(&cfg)?
        }
        "arginf" => {
            let mut cfg: ArginfConfig = match &args.config {
                Some(path) => load_json(path)?,
                None => ArginfConfig::gaussian_default()?,
            };
            if let Some(s) = args.seeds {
                cfg.seeds = s;
            }
            if let Some(d) = args.d {
                cfg.d = d;
            }
            if let Some(n) = args.n_max {
                cfg.ns.retain(|&x| x < n);
                cfg.ns.push(n);
            }
            if let Some(s) = seed {
                cfg.source.seed = s;
            }
            arginf_run(&cfg)?
        }
        other => {
            return Err(usage(format!(
                "unknown experiment {other:?}; valid names: {}",
                EXPERIMENTS.join(", ")
            )))
        }
    };
    let (csv_path, json_path) = result.write_files(&args.out)?;
    eprintln!(
        "wrote {} and {} in {:.2}s",
        csv_path.display(),
        json_path.display(),
        started.elapsed().as_secs_f64()
    );
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(&result.report()).map_err(|e| Error::Parse(e.to_string()))?
    )?;
    Ok(EXIT_OK)
}

/// Runs the CLI on `args` (including the program name), writing normal
/// output to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_ERROR,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Estimate(a) => cmd_estimate(a, out),
        Command::Curve(a) => cmd_curve(a, out),
        Command::Experiment(a) => cmd_experiment(a, out),
        Command::Version => writeln!(out, "rdest {}", env!("CARGO_PKG_VERSION")).map(|_| EXIT_OK).map_err(Error::from),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
