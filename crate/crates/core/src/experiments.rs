//! Scripted consistency experiments and counterexample demos.
//!
//! Every experiment produces one row per `(n, seed, D)` cell plus a JSON
//! summary. Cells are independent: replica `r` draws from stream `r` of the
//! source seed (see [`crate::sources::rng`]), and cells fan out over worker
//! threads with results reassembled in a fixed order, so outputs are
//! byte-identical across reruns.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ba::{rd_solve, BaConfig, DEFAULT_TOL_D};
use crate::dist::{entropy, FiniteDist};
use crate::distortion::{DistortionKind, DistortionModel};
use crate::dual::{gaussian_rate_dual, Moments};
use crate::error::{Error, Result};
use crate::estimators::{
    arginf_estimate, penalized_estimate, plugin_parametric, plugin_rd, EstimateReport, Penalty, Sample,
};
use crate::ext_real::ExtReal;
use crate::family::{ParamFamily, Theta};
use crate::sources::{generate_replica, mth_order_estimate, quantize, uniform_grid, SourceKind, SourceSpec};
use crate::symbol::{int_alphabet, Symbol};

/// Fixed CSV header.
pub const CSV_HEADER: [&str; 7] = ["n", "seed", "D", "estimate", "oracle", "abs_err", "flag"];

/// Known experiment names.
pub const EXPERIMENTS: [&str; 5] = ["consistency", "failure-demo", "discontinuity-demo", "arginf", "mth-order"];

/// Known consistency presets.
pub const PRESETS: [&str; 5] = ["bernoulli-hamming", "markov", "gaussian-quantized", "ar1-gaussian", "entropy"];

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub n: usize,
    pub seed: u64,
    pub d: f64,
    /// `None` when the cell failed; the reason is in `flag`.
    pub estimate: Option<ExtReal>,
    pub oracle: Option<ExtReal>,
    pub abs_err: Option<ExtReal>,
    pub flag: String,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub name: String,
    pub rows: Vec<Row>,
    pub summary: Value,
    /// The resolved configuration.
    pub metadata: Value,
}

fn cell(v: Option<ExtReal>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(CSV_HEADER).map_err(err)?;
        for r in &self.rows {
            out.write_record([
                r.n.to_string(),
                r.seed.to_string(),
                r.d.to_string(),
                cell(r.estimate),
                cell(r.oracle),
                cell(r.abs_err),
                r.flag.clone(),
            ])
            .map_err(err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// `{"experiment", "metadata", "summary"}`.
    pub fn report(&self) -> Value {
        json!({ "experiment": self.name, "metadata": self.metadata, "summary": self.summary })
    }

    /// Writes `<name>.csv` and `<name>.json` into `dir`; returns both paths.
    pub fn write_files(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.name));
        let json_path = dir.join(format!("{}.json", self.name));
        self.write_csv(std::fs::File::create(&csv_path)?)?;
        let text = serde_json::to_string_pretty(&self.report()).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(&json_path, text + "\n")?;
        Ok((csv_path, json_path))
    }
}

/// `|a - b|` on extended reals, with `|inf - inf| = 0`.
pub fn ext_abs_diff(a: ExtReal, b: ExtReal) -> ExtReal {
    match (a, b) {
        (ExtReal::Finite(x), ExtReal::Finite(y)) => ExtReal::clamped((x - y).abs()),
        (ExtReal::Infinite, ExtReal::Infinite) => ExtReal::ZERO,
        _ => ExtReal::Infinite,
    }
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    term(p) + term(1.0 - p)
}

/// Runs `f(0..count)` on worker threads, results in index order.
fn fan_out<T: Send, F: Fn(u64) -> T + Sync>(count: u64, f: F) -> Vec<T> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(count.max(1) as usize);
    let next = AtomicU64::new(0);
    let mut out: Vec<Option<T>> = (0..count).map(|_| None).collect();
    std::thread::scope(|s| {
        let workers: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= count {
                            break;
                        }
                        done.push((i, f(i)));
                    }
                    done
                })
            })
            .collect();
        for w in workers {
            for (i, v) in w.join().expect("experiment worker panicked") {
                out[i as usize] = Some(v);
            }
        }
    });
    out.into_iter().map(|v| v.expect("every cell computed")).collect()
}

/// Serializable distortion model description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub rule: DistortionKind,
    #[serde(default)]
    pub source: Vec<Symbol>,
    /// Defaults to the source alphabet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repro: Option<Vec<Symbol>>,
    /// Required for `matrix`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<f64>>>,
}

impl ModelSpec {
    pub fn rule(rule: DistortionKind, alphabet: Vec<Symbol>) -> Self {
        ModelSpec { rule, source: alphabet, repro: None, rows: None }
    }

    pub fn build(&self) -> Result<DistortionModel> {
        let repro = self.repro.clone().unwrap_or_else(|| self.source.clone());
        match self.rule {
            DistortionKind::Matrix => {
                let rows = self
                    .rows
                    .clone()
                    .ok_or_else(|| Error::InvalidModel("matrix model needs rows".into()))?;
                DistortionModel::matrix(self.source.clone(), repro, rows)
            }
            kind => DistortionModel::from_rule(kind, self.source.clone(), repro),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorSpec {
    PlugIn,
    /// Plug-in after quantizing real data to `points` uniform grid points.
    Quantized { lo: f64, hi: f64, points: usize },
    Parametric { family: ParamFamily },
    Penalized { family: ParamFamily, penalty: Penalty },
    MthOrder { m: usize },
}

impl EstimatorSpec {
    pub fn estimate(&self, sample: &Sample, model: &DistortionModel, d: f64) -> Result<EstimateReport> {
        match self {
            EstimatorSpec::PlugIn => plugin_rd(sample, model, d),
            EstimatorSpec::Quantized { lo, hi, points } => {
                let grid = uniform_grid(*lo, *hi, *points)?;
                let (q, qmodel) = quantize(sample, &grid, model.kind())?;
                plugin_rd(&q, &qmodel, d)
            }
            EstimatorSpec::Parametric { family } => plugin_parametric(sample, family, model, d),
            EstimatorSpec::Penalized { family, penalty } => penalized_estimate(sample, family, model, d, penalty),
            EstimatorSpec::MthOrder { m } => mth_order_estimate(sample, *m, model, d),
        }
    }
}

/// Where the reference value of a consistency run comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OracleSpec {
    None,
    /// `h(p) - h(D)` for `D < min(p, 1-p)`, else 0.
    BinaryHamming { p: f64 },
    /// `max(0, ln(var / D) / 2)`; without `variance`, the AR(1) marginal
    /// variance `sigma^2 / (1 - phi^2)` of the source.
    Gaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variance: Option<f64>,
    },
    /// Blahut–Arimoto on the stationary marginal of the source.
    Marginal,
    /// Entropy of the stationary marginal.
    Entropy,
}

fn ar1_variance(source: &SourceSpec) -> Result<f64> {
    match source.kind {
        SourceKind::GaussianAr1 { phi, sigma, .. } => Ok(sigma * sigma / (1.0 - phi * phi)),
        _ => Err(Error::InvalidArgument("gaussian oracle without variance needs an ar1 source".into())),
    }
}

fn marginal(source: &SourceSpec) -> Result<FiniteDist> {
    source
        .stationary()?
        .ok_or_else(|| Error::InvalidArgument("source has no finite stationary marginal".into()))
}

impl OracleSpec {
    pub fn value(&self, source: &SourceSpec, model: &DistortionModel, d: f64) -> Result<Option<ExtReal>> {
        Ok(match self {
            OracleSpec::None => None,
            OracleSpec::BinaryHamming { p } => {
                let v = if d < p.min(1.0 - p) { binary_entropy(*p) - binary_entropy(d) } else { 0.0 };
                Some(ExtReal::clamped(v))
            }
            OracleSpec::Gaussian { variance } => {
                let var = match variance {
                    Some(v) => *v,
                    None => ar1_variance(source)?,
                };
                Some(ExtReal::clamped((0.5 * (var / d).ln()).max(0.0)))
            }
            OracleSpec::Marginal => {
                Some(rd_solve(&marginal(source)?, model, d, DEFAULT_TOL_D, &BaConfig::default())?.rate)
            }
            OracleSpec::Entropy => Some(entropy(&marginal(source)?)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub source: SourceSpec,
    pub model: ModelSpec,
    pub estimator: EstimatorSpec,
    #[serde(rename = "D")]
    pub ds: Vec<f64>,
    pub ns: Vec<usize>,
    pub seeds: u64,
    pub oracle: OracleSpec,
}

const DEFAULT_NS: [usize; 4] = [100, 1_000, 10_000, 100_000];

/// Named consistency setups.
pub fn consistency_preset(name: &str) -> Result<ConsistencyConfig> {
    let ns = DEFAULT_NS.to_vec();
    let binary = int_alphabet(0, 1);
    let squared = ModelSpec::rule(DistortionKind::SquaredError, vec![]);
    let cfg = match name {
        "bernoulli-hamming" => ConsistencyConfig {
            source: SourceSpec::iid(FiniteDist::bernoulli(0.3)?, 0),
            model: ModelSpec::rule(DistortionKind::Hamming, binary),
            estimator: EstimatorSpec::PlugIn,
            ds: vec![0.1],
            ns,
            seeds: 20,
            oracle: OracleSpec::BinaryHamming { p: 0.3 },
        },
        "markov" => ConsistencyConfig {
            source: SourceSpec::markov(binary.clone(), vec![vec![0.9, 0.1], vec![0.1, 0.9]], vec![1.0, 0.0], 0)?,
            model: ModelSpec::rule(DistortionKind::Hamming, binary),
            estimator: EstimatorSpec::PlugIn,
            ds: vec![0.1],
            ns,
            seeds: 20,
            oracle: OracleSpec::Marginal,
        },
        "gaussian-quantized" => ConsistencyConfig {
            source: SourceSpec::ar1(0.0, 1.0, None, 0)?,
            model: squared,
            estimator: EstimatorSpec::Quantized { lo: -4.0, hi: 4.0, points: 65 },
            ds: vec![0.25],
            ns,
            seeds: 20,
            oracle: OracleSpec::Gaussian { variance: None },
        },
        "ar1-gaussian" => ConsistencyConfig {
            source: SourceSpec::ar1(0.5, 1.0, None, 0)?,
            model: squared,
            estimator: EstimatorSpec::Parametric { family: ParamFamily::gaussian((-3.0, 3.0), (0.0, 3.0))? },
            ds: vec![0.25],
            ns,
            seeds: 20,
            oracle: OracleSpec::Gaussian { variance: None },
        },
        "entropy" => {
            let a = int_alphabet(0, 3);
            ConsistencyConfig {
                source: SourceSpec::iid(FiniteDist::new(a.clone(), vec![0.4, 0.3, 0.2, 0.1])?, 0),
                model: ModelSpec::rule(DistortionKind::Hamming, a),
                estimator: EstimatorSpec::PlugIn,
                ds: vec![0.0],
                ns,
                seeds: 20,
                oracle: OracleSpec::Entropy,
            }
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset {other:?}; valid presets: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    #[serde(rename = "D")]
    pub d: f64,
    pub n: usize,
    pub seeds: usize,
    pub failures: usize,
    pub infinite: usize,
    pub mean_estimate: Option<f64>,
    pub mean_abs_err: Option<f64>,
    pub max_abs_err: Option<f64>,
}

fn check_schedule(ns: &[usize], seeds: u64) -> Result<()> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::InvalidArgument("n schedule must be nonempty with n >= 1".into()));
    }
    if seeds == 0 {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    Ok(())
}

fn prefix(sample: &Sample, n: usize) -> Sample {
    match sample {
        Sample::Discrete(v) => Sample::Discrete(v[..n].to_vec()),
        Sample::Real(v) => Sample::Real(v[..n].to_vec()),
    }
}

fn summarize(rows: &[Row], ds: &[f64], ns: &[usize]) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for &d in ds {
        for &n in ns {
            let cell: Vec<&Row> = rows.iter().filter(|r| r.n == n && r.d == d).collect();
            let ok: Vec<ExtReal> = cell.iter().filter_map(|r| r.estimate).collect();
            let finite: Vec<f64> = ok.iter().filter_map(|e| e.finite()).collect();
            let errs: Vec<f64> = cell.iter().filter_map(|r| r.abs_err.and_then(ExtReal::finite)).collect();
            let has_inf_err = cell.iter().any(|r| r.abs_err.is_some_and(ExtReal::is_infinite));
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            out.push(CellSummary {
                d,
                n,
                seeds: cell.len(),
                failures: cell.len() - ok.len(),
                infinite: ok.len() - finite.len(),
                mean_estimate: mean(&finite),
                mean_abs_err: if has_inf_err { Some(f64::INFINITY) } else { mean(&errs) },
                max_abs_err: if has_inf_err {
                    Some(f64::INFINITY)
                } else {
                    errs.iter().copied().reduce(f64::max)
                },
            });
        }
    }
    out
}

/// Number of increases of mean |error| along the n schedule, per `D`.
pub fn error_inversions(cells: &[CellSummary], d: f64) -> usize {
    let errs: Vec<f64> = cells.iter().filter(|c| c.d == d).filter_map(|c| c.mean_abs_err).collect();
    errs.windows(2).filter(|w| w[1] > w[0]).count()
}

/// Estimate and oracle error for every `(n, seed, D)`.
pub fn consistency_run(cfg: &ConsistencyConfig) -> Result<ExperimentResult> {
    check_schedule(&cfg.ns, cfg.seeds)?;
    let model = cfg.model.build()?;
    let oracles = cfg
        .ds
        .iter()
        .map(|&d| cfg.oracle.value(&cfg.source, &model, d))
        .collect::<Result<Vec<_>>>()?;
    let n_max = *cfg.ns.iter().max().expect("nonempty schedule");
    let per_seed = fan_out(cfg.seeds, |seed| -> Vec<Row> {
        let full = match generate_replica(&cfg.source, n_max, seed) {
            Ok(s) => s,
            Err(e) => {
                return cfg
                    .ns
                    .iter()
                    .flat_map(|&n| cfg.ds.iter().map(move |&d| (n, d)))
                    .map(|(n, d)| Row {
                        n,
                        seed,
                        d,
                        estimate: None,
                        oracle: None,
                        abs_err: None,
                        flag: format!("error: {e}"),
                    })
                    .collect()
            }
        };
        let mut rows = Vec::new();
        for &n in &cfg.ns {
            let sample = prefix(&full, n);
            for (i, &d) in cfg.ds.iter().enumerate() {
                let oracle = oracles[i];
                rows.push(match cfg.estimator.estimate(&sample, &model, d) {
                    Ok(r) => Row {
                        n,
                        seed,
                        d,
                        estimate: Some(r.estimate),
                        oracle,
                        abs_err: oracle.map(|o| ext_abs_diff(r.estimate, o)),
                        flag: r.diagnostics.flags.join(";"),
                    },
                    Err(e) => Row { n, seed, d, estimate: None, oracle, abs_err: None, flag: format!("error: {e}") },
                });
            }
        }
        rows
    });
    let mut rows: Vec<Row> = per_seed.into_iter().flatten().collect();
    rows.sort_by(|a, b| (a.n, a.seed).cmp(&(b.n, b.seed)).then(a.d.total_cmp(&b.d)));
    let cells = summarize(&rows, &cfg.ds, &cfg.ns);
    let monotone: Vec<Value> = cfg
        .ds
        .iter()
        .map(|&d| {
            let inv = error_inversions(&cells, d);
            json!({ "D": d, "inversions": inv, "flagged": inv > 1 })
        })
        .collect();
    let oracle_json: Vec<Value> =
        cfg.ds.iter().zip(&oracles).map(|(d, o)| json!({ "D": d, "oracle": o })).collect();
    Ok(ExperimentResult {
        name: "consistency".into(),
        rows,
        summary: json!({ "cells": cells, "oracle": oracle_json, "monotone_error": monotone }),
        metadata: serde_json::to_value(cfg).map_err(|e| Error::Parse(e.to_string()))?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureConfig {
    pub p: f64,
    pub seeds: u64,
    pub n_max: usize,
    /// Defaults to `p`.
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl FailureConfig {
    pub fn new(p: f64, seeds: u64, n_max: usize) -> Self {
        FailureConfig { p, seeds, n_max, d: None, seed: 0 }
    }
}

/// Behaviour of a seed's estimates over `n > n_max / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    /// Both 0 and `+inf` occur.
    Oscillating,
    TailZero,
    TailInfinite,
    Other,
}

impl Tail {
    fn label(self) -> &'static str {
        match self {
            Tail::Oscillating => "oscillating",
            Tail::TailZero => "tail-zero",
            Tail::TailInfinite => "tail-inf",
            Tail::Other => "other",
        }
    }
}

/// Plug-in on `A = {0,1}`, `Ahat = {0}`, `rho = |x - y|`: the estimate is 0
/// while the empirical frequency of 1 is at most `D` and `+inf` otherwise.
pub fn failure_demo(cfg: &FailureConfig) -> Result<ExperimentResult> {
    if !(cfg.p > 0.0 && cfg.p < 1.0) {
        return Err(Error::InvalidArgument(format!("p must be in (0, 1), got {}", cfg.p)));
    }
    check_schedule(&[cfg.n_max], cfg.seeds)?;
    let d = cfg.d.unwrap_or(cfg.p);
    let a = int_alphabet(0, 1);
    let model = DistortionModel::absolute(a.clone(), int_alphabet(0, 0))?;
    let truth = FiniteDist::bernoulli(cfg.p)?;
    let ba = BaConfig::default();
    let oracle = rd_solve(&truth, &model, d, DEFAULT_TOL_D, &ba)?.rate;
    let source = SourceSpec::iid(truth, cfg.seed);
    let step = (cfg.n_max / 100).max(1);
    let half = cfg.n_max / 2;

    let per_seed = fan_out(cfg.seeds, |seed| -> Result<(Vec<Row>, Tail)> {
        let sample = generate_replica(&source, cfg.n_max, seed)?;
        let values = sample.symbols()?;
        let one = Symbol::Int(1);
        let mut counts = [0u64; 2];
        let (mut late_zero, mut late_inf, mut late_other) = (false, false, false);
        let mut rows = Vec::new();
        for (k, x) in values.iter().enumerate() {
            counts[usize::from(*x == one)] += 1;
            let n = k + 1;
            if n <= half && n % step != 0 {
                continue;
            }
            let p_emp = FiniteDist::from_counts(a.clone(), &counts)?;
            let est = rd_solve(&p_emp, &model, d, DEFAULT_TOL_D, &ba)?.rate;
            if n > half {
                match est {
                    ExtReal::Infinite => late_inf = true,
                    ExtReal::Finite(0.0) => late_zero = true,
                    _ => late_other = true,
                }
            }
            if n % step == 0 || n == cfg.n_max {
                rows.push(Row {
                    n,
                    seed,
                    d,
                    estimate: Some(est),
                    oracle: Some(oracle),
                    abs_err: Some(ext_abs_diff(est, oracle)),
                    flag: String::new(),
                });
            }
        }
        let tail = match (late_zero, late_inf, late_other) {
            (true, true, _) => Tail::Oscillating,
            (true, false, false) => Tail::TailZero,
            (false, true, false) => Tail::TailInfinite,
            _ => Tail::Other,
        };
        if let Some(last) = rows.last_mut() {
            last.flag = tail.label().into();
        }
        Ok((rows, tail))
    });
    let mut rows = Vec::new();
    let mut tails = Vec::new();
    for r in per_seed {
        let (seed_rows, tail) = r?;
        rows.extend(seed_rows);
        tails.push(tail);
    }
    let count = |t: Tail| tails.iter().filter(|&&x| x == t).count();
    let witnesses = count(Tail::Oscillating);
    Ok(ExperimentResult {
        name: "failure-demo".into(),
        rows,
        summary: json!({
            "D": d,
            "oracle": oracle,
            "seeds": tails.len(),
            "tail_from_n": half + 1,
            "oscillation_witnesses": witnesses,
            "witness_fraction": witnesses as f64 / tails.len() as f64,
            "tail_zero": count(Tail::TailZero),
            "tail_infinite": count(Tail::TailInfinite),
            "per_seed": tails,
        }),
        metadata: serde_json::to_value(cfg).map_err(|e| Error::Parse(e.to_string()))?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscontinuityConfig {
    pub eps: Vec<f64>,
    pub truncations: Vec<usize>,
    #[serde(rename = "D")]
    pub d: f64,
    /// The finite-entropy source `P` is supported on `{1..p_support}` for
    /// every truncation, so that only `P'` and `rho` grow with `N`.
    #[serde(default = "default_p_support")]
    pub p_support: usize,
}

fn default_p_support() -> usize {
    10
}

impl Default for DiscontinuityConfig {
    fn default() -> Self {
        DiscontinuityConfig {
            eps: vec![0.05, 0.1, 0.2],
            truncations: vec![10, 50, 250],
            d: DISCONTINUITY_D,
            p_support: default_p_support(),
        }
    }
}

/// Distortion level of the default discontinuity demo.
pub const DISCONTINUITY_D: f64 = 0.25;

/// Law on `{1..N}` with mass at `k` proportional to
/// `1 / ((k+1) ln^power (k+1))`.
pub fn log_power_law(truncation: usize, power: f64) -> Result<FiniteDist> {
    let weights: Vec<f64> = (1..=truncation)
        .map(|k| {
            let x = (k + 1) as f64;
            1.0 / (x * x.ln().powf(power))
        })
        .collect();
    crate::dist::normalize(&weights, int_alphabet(1, truncation as i64))
}

/// `rho(x, y) = 1{x != y} / P'(x) + |x - y|` on `{1..N}`.
pub fn mismatch_model(p_prime: &FiniteDist) -> Result<DistortionModel> {
    let a = p_prime.symbols().to_vec();
    let rows = p_prime
        .iter()
        .enumerate()
        .map(|(i, (_, w))| {
            (0..a.len())
                .map(|j| if i == j { 0.0 } else { 1.0 / w + (i as f64 - j as f64).abs() })
                .collect()
        })
        .collect();
    DistortionModel::matrix(a.clone(), a, rows)
}

/// Rates of `P`, of mixtures `P_eps = (1-eps) P + eps P'`, and the lower
/// bound `eps R1(P', D/eps)`, over growing truncations `{1..N}` of the
/// infinite construction. `P'` has mass `~ 1/((k+1) ln^1.5 (k+1))` (infinite
/// entropy in the limit); `P` has mass `~ 1/((k+1) ln^2.5 (k+1))` on a fixed
/// support. Finite truncations only show the trend, never `+inf`.
pub fn discontinuity_demo(cfg: &DiscontinuityConfig) -> Result<ExperimentResult> {
    if cfg.eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidArgument("eps values must lie in (0, 1)".into()));
    }
    if cfg.truncations.iter().any(|&n| n < 10 || n < cfg.p_support) || cfg.p_support == 0 {
        return Err(Error::InvalidArgument("truncation must be >= max(10, p_support) and p_support >= 1".into()));
    }
    if cfg.d.is_nan() || cfg.d < 0.0 {
        return Err(Error::InvalidArgument(format!("D must be >= 0, got {}", cfg.d)));
    }
    let ba = BaConfig::default();
    let jobs: Vec<(usize, Option<f64>)> = cfg
        .truncations
        .iter()
        .flat_map(|&n| std::iter::once((n, None)).chain(cfg.eps.iter().map(move |&e| (n, Some(e)))))
        .collect();
    let results = fan_out(jobs.len() as u64, |i| -> Result<Row> {
        let (n, eps) = jobs[i as usize];
        let p_prime = log_power_law(n, 1.5)?;
        let mut probs = log_power_law(cfg.p_support, 2.5)?.probs().to_vec();
        probs.resize(n, 0.0);
        let p = FiniteDist::new(int_alphabet(1, n as i64), probs)?;
        let model = mismatch_model(&p_prime)?;
        Ok(match eps {
            None => {
                let r = rd_solve(&p, &model, cfg.d, DEFAULT_TOL_D, &ba)?.rate;
                Row { n, seed: 0, d: cfg.d, estimate: Some(r), oracle: None, abs_err: None, flag: "eps=0".into() }
            }
            Some(e) => {
                let mix = p.mix(&p_prime, e)?;
                let r = rd_solve(&mix, &model, cfg.d, DEFAULT_TOL_D, &ba)?.rate;
                let bound = rd_solve(&p_prime, &model, cfg.d / e, DEFAULT_TOL_D, &ba)?.rate.scale(e);
                let holds = match (r, bound) {
                    (_, ExtReal::Infinite) => r.is_infinite(),
                    (ExtReal::Infinite, _) => true,
                    (ExtReal::Finite(a), ExtReal::Finite(b)) => a >= b - 1e-6,
                };
                Row {
                    n,
                    seed: 0,
                    d: cfg.d,
                    estimate: Some(r),
                    oracle: Some(bound),
                    abs_err: Some(ext_abs_diff(r, bound)),
                    flag: format!("eps={e};bound={}", if holds { "holds" } else { "violated" }),
                }
            }
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;

    let baseline: Vec<f64> = rows.iter().filter(|r| r.flag == "eps=0").filter_map(|r| r.estimate?.finite()).collect();
    let spread = baseline.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - baseline.iter().copied().fold(f64::INFINITY, f64::min);
    let per_eps: Vec<Value> = cfg
        .eps
        .iter()
        .map(|&e| {
            let tag = format!("eps={e};");
            let series: Vec<ExtReal> =
                rows.iter().filter(|r| r.flag.starts_with(&tag)).filter_map(|r| r.estimate).collect();
            let increasing = series.windows(2).all(|w| w[1] > w[0]);
            json!({ "eps": e, "rates": series, "strictly_increasing_in_N": increasing })
        })
        .collect();
    let bound_holds = rows.iter().all(|r| !r.flag.ends_with("violated"));
    Ok(ExperimentResult {
        name: "discontinuity-demo".into(),
        rows,
        summary: json!({
            "D": cfg.d,
            "truncations": cfg.truncations,
            "baseline_rates": baseline,
            "baseline_spread": spread,
            "mixture_bound_holds": bound_holds,
            "mixtures": per_eps,
            "note": "finite truncations of an infinite-alphabet construction; rates grow with N but stay finite",
        }),
        metadata: serde_json::to_value(cfg).map_err(|e| Error::Parse(e.to_string()))?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArginfConfig {
    pub source: SourceSpec,
    pub model: ModelSpec,
    pub family: ParamFamily,
    #[serde(rename = "D")]
    pub d: f64,
    pub ns: Vec<usize>,
    pub seeds: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_opt: Option<f64>,
    /// Points per axis of the dense oracle grid (Gaussian family).
    #[serde(default = "default_oracle_grid")]
    pub oracle_grid: usize,
}

fn default_oracle_grid() -> usize {
    401
}

impl ArginfConfig {
    /// N(0,1) data, Gaussian family, squared error, `D = 0.25`.
    pub fn gaussian_default() -> Result<Self> {
        Ok(ArginfConfig {
            source: SourceSpec::ar1(0.0, 1.0, None, 0)?,
            model: ModelSpec::rule(DistortionKind::SquaredError, vec![]),
            family: ParamFamily::gaussian((-2.0, 2.0), (0.0, 2.0))?,
            d: 0.25,
            ns: DEFAULT_NS.to_vec(),
            seeds: 20,
            eps_opt: None,
            oracle_grid: default_oracle_grid(),
        })
    }
}

/// Near-minimizers of `R1(P, Q_theta, D)` on the true `P`.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleSet {
    Gaussian(Vec<(f64, f64)>),
    Grid(Vec<usize>),
}

impl OracleSet {
    pub fn distance(&self, theta: &Theta) -> f64 {
        match (self, theta) {
            (OracleSet::Gaussian(points), Theta::Gaussian { mu, sigma }) => points
                .iter()
                .map(|(m, s)| ((m - mu).powi(2) + (s - sigma).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min),
            (OracleSet::Grid(ix), Theta::Grid { index, .. }) => {
                if ix.contains(index) {
                    0.0
                } else {
                    1.0
                }
            }
            _ => f64::INFINITY,
        }
    }
}

/// Value and minimizer set of the family problem on the true marginal, by
/// dense-grid brute force (Gaussian) or exhaustive scan (grid).
pub fn arginf_oracle(cfg: &ArginfConfig, model: &DistortionModel) -> Result<(ExtReal, OracleSet)> {
    match &cfg.family {
        ParamFamily::Gaussian(b) => {
            let moments = match &cfg.source.kind {
                SourceKind::GaussianAr1 { .. } => Moments { mean: 0.0, var: ar1_variance(&cfg.source)? },
                _ => Moments::of_dist(&marginal(&cfg.source)?)?,
            };
            let k = cfg.oracle_grid.max(2);
            let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
                if lo == hi {
                    vec![lo]
                } else {
                    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
                }
            };
            let mut values = Vec::new();
            for mu in axis(b.mu) {
                for sigma in axis(b.sigma) {
                    values.push((mu, sigma, gaussian_rate_dual(moments, mu, sigma, cfg.d)?.rate));
                }
            }
            let best = values.iter().map(|v| v.2).fold(ExtReal::Infinite, ExtReal::min);
            let slack = 1e-9 * best.finite().unwrap_or(1.0).max(1.0);
            let set = values
                .iter()
                .filter(|v| match (v.2, best) {
                    (ExtReal::Finite(x), ExtReal::Finite(m)) => x <= m + slack,
                    (ExtReal::Infinite, ExtReal::Infinite) => true,
                    _ => false,
                })
                .map(|v| (v.0, v.1))
                .collect();
            Ok((best, OracleSet::Gaussian(set)))
        }
        ParamFamily::FiniteGrid { entries } => {
            let p = marginal(&cfg.source)?;
            let rates = entries
                .iter()
                .map(|e| Ok(crate::dual::rate_dual(&p, &e.dist, model, cfg.d)?.rate))
                .collect::<Result<Vec<_>>>()?;
            let best = rates.iter().copied().fold(ExtReal::Infinite, ExtReal::min);
            let set = (0..rates.len()).filter(|&i| rates[i] == best).collect();
            Ok((best, OracleSet::Grid(set)))
        }
    }
}

/// Tracks the distance of the estimated minimizer to the oracle set.
pub fn arginf_run(cfg: &ArginfConfig) -> Result<ExperimentResult> {
    check_schedule(&cfg.ns, cfg.seeds)?;
    let model = cfg.model.build()?;
    let (oracle, set) = arginf_oracle(cfg, &model)?;
    let n_max = *cfg.ns.iter().max().expect("nonempty schedule");
    let per_seed = fan_out(cfg.seeds, |seed| -> Result<Vec<(Row, f64)>> {
        let full = generate_replica(&cfg.source, n_max, seed)?;
        let mut rows = Vec::new();
        for &n in &cfg.ns {
            let sample = prefix(&full, n);
            let r = arginf_estimate(&sample, &cfg.family, &model, cfg.d, cfg.eps_opt)?;
            let dist = set.distance(&r.theta);
            let theta = match &r.theta {
                Theta::Gaussian { mu, sigma } => format!("mu={mu};sigma={sigma}"),
                Theta::Grid { label, .. } => format!("theta={label}"),
            };
            let mut flag = format!("{theta};dist={dist}");
            if r.flat {
                flag.push_str(";flat");
            }
            rows.push((
                Row {
                    n,
                    seed,
                    d: cfg.d,
                    estimate: Some(r.rate),
                    oracle: Some(oracle),
                    abs_err: Some(ext_abs_diff(r.rate, oracle)),
                    flag,
                },
                dist,
            ));
        }
        Ok(rows)
    });
    let mut rows = Vec::new();
    let mut final_dist = Vec::new();
    for r in per_seed {
        let seed_rows = r?;
        final_dist.push(seed_rows.iter().find(|(row, _)| row.n == n_max).map_or(f64::NAN, |x| x.1));
        rows.extend(seed_rows.into_iter().map(|x| x.0));
    }
    rows.sort_by_key(|r| (r.n, r.seed));
    let oracle_points = match &set {
        OracleSet::Gaussian(p) => json!({ "gaussian_points": p.len(), "first": p.first() }),
        OracleSet::Grid(ix) => json!({ "grid_indices": ix }),
    };
    Ok(ExperimentResult {
        name: "arginf".into(),
        rows,
        summary: json!({
            "D": cfg.d,
            "oracle_value": oracle,
            "oracle_set": oracle_points,
            "final_n": n_max,
            "final_distances": final_dist,
            "max_final_distance": final_dist.iter().copied().fold(0.0, f64::max),
        }),
        metadata: serde_json::to_value(cfg).map_err(|e| Error::Parse(e.to_string()))?,
    })
}
