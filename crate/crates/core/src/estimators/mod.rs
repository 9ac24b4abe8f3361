//! Estimators of `R1(P, D)` from a sample.
//!
//! * [`plugin_rd`]: `R1` of the empirical distribution (nonparametric).
//! * [`plugin_parametric`]: `inf_theta R1(P_n, Q_theta, D)` over a family.
//! * [`penalized_estimate`]: the same infimum with a vanishing penalty added.
//! * [`lossy_likelihood`]: `-(1/n) ln Q^n(B_n(x, D))`, computed exactly.
//! * [`arginf_estimate`], [`optimal_reproduction`]: the minimizing
//!   reproduction law, parametric and nonparametric.

mod lossy;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ba::{rd_solve, BaConfig, DEFAULT_TOL_D};
use crate::dist::FiniteDist;
use crate::distortion::DistortionModel;
use crate::dual::{default_eps_opt, family_rate, FamilyRate, Moments, SourceView, LogMgfCurve};
use crate::error::{Error, Result};
use crate::ext_real::ExtReal;
use crate::family::{ParamFamily, Theta};
use crate::symbol::Symbol;

pub use lossy::{ball_probability, ball_probability_exact, lossy_likelihood, BallWeight};

/// An observed data string `x_1^n`.
#[derive(Clone, Debug, PartialEq)]
pub enum Sample {
    Discrete(Vec<Symbol>),
    Real(Vec<f64>),
}

impl Sample {
    pub fn discrete(values: Vec<Symbol>) -> Result<Sample> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty sample".into()));
        }
        Ok(Sample::Discrete(values))
    }

    pub fn real(values: Vec<f64>) -> Result<Sample> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty sample".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value {v}")));
        }
        Ok(Sample::Real(values))
    }

    pub fn len(&self) -> usize {
        match self {
            Sample::Discrete(v) => v.len(),
            Sample::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn symbols(&self) -> Result<&[Symbol]> {
        match self {
            Sample::Discrete(v) => Ok(v),
            Sample::Real(_) => Err(Error::ContinuousSample),
        }
    }

    /// Sample mean and (1/n) variance; discrete samples need integer symbols.
    pub fn moments(&self) -> Result<Moments> {
        match self {
            Sample::Real(v) => Moments::of_values(v),
            Sample::Discrete(v) => {
                let values = v
                    .iter()
                    .map(|s| {
                        s.numeric().ok_or_else(|| {
                            Error::InvalidArgument(format!("symbol {s} has no numeric value"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Moments::of_values(&values)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    PlugIn,
    Parametric,
    Penalized,
    LossyLikelihood,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// An estimate of the rate at distortion `d`, in nats.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    #[serde(rename = "D")]
    pub d: f64,
    pub estimate: ExtReal,
    pub estimator_kind: EstimatorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_hat: Option<Theta>,
    pub diagnostics: Diagnostics,
}

/// Empirical distribution of a discrete sample, symbols in sorted order.
pub fn empirical(sample: &Sample) -> Result<FiniteDist> {
    let values = sample.symbols()?;
    let mut counts: BTreeMap<&Symbol, u64> = BTreeMap::new();
    for s in values {
        *counts.entry(s).or_default() += 1;
    }
    let (symbols, counts): (Vec<Symbol>, Vec<u64>) =
        counts.into_iter().map(|(s, c)| (s.clone(), c)).unzip();
    FiniteDist::from_counts(symbols, &counts)
}

/// Plug-in estimate `R1(P_n, D)` with explicit solver settings.
pub fn plugin_rd_with(
    sample: &Sample,
    model: &DistortionModel,
    d: f64,
    tol_d: f64,
    cfg: &BaConfig,
) -> Result<EstimateReport> {
    let p = empirical(sample)?;
    let sol = rd_solve(&p, model, d, tol_d, cfg)?;
    let mut flags = Vec::new();
    if sol.boundary {
        flags.push("left-discontinuity-candidate".to_string());
    }
    if !sol.converged {
        flags.push("not-converged".to_string());
    }
    Ok(EstimateReport {
        d,
        estimate: sol.rate,
        estimator_kind: EstimatorKind::PlugIn,
        theta_hat: None,
        diagnostics: Diagnostics {
            n: sample.len(),
            iterations: Some(sol.iterations),
            gap: Some(sol.gap),
            slope: Some(sol.slope),
            converged: Some(sol.converged),
            flags,
        },
    })
}

/// Nonparametric plug-in estimate `R1(P_n, D)`.
pub fn plugin_rd(sample: &Sample, model: &DistortionModel, d: f64) -> Result<EstimateReport> {
    plugin_rd_with(sample, model, d, DEFAULT_TOL_D, &BaConfig::default())
}

fn family_source(sample: &Sample, family: &ParamFamily) -> Result<(Option<FiniteDist>, Option<Moments>)> {
    match family {
        ParamFamily::Gaussian(_) => Ok((None, Some(sample.moments()?))),
        ParamFamily::FiniteGrid { .. } => Ok((Some(empirical(sample)?), None)),
    }
}

fn family_infimum(
    sample: &Sample,
    family: &ParamFamily,
    model: &DistortionModel,
    d: f64,
    eps_opt: Option<f64>,
) -> Result<FamilyRate> {
    let (dist, moments) = family_source(sample, family)?;
    let view = match (&dist, moments) {
        (Some(p), _) => SourceView::Dist(p),
        (None, Some(m)) => SourceView::Moments(m),
        (None, None) => unreachable!(),
    };
    family_rate(view, family, model, d, eps_opt)
}

fn family_report(kind: EstimatorKind, n: usize, d: f64, r: FamilyRate, extra: ExtReal) -> EstimateReport {
    let mut flags = r.flags;
    if r.flat {
        flags.push("flat-minimizer".to_string());
    }
    EstimateReport {
        d,
        estimate: r.rate + extra,
        estimator_kind: kind,
        theta_hat: Some(r.theta),
        diagnostics: Diagnostics { n, flags, ..Default::default() },
    }
}

/// `R1^Theta(P_n, D)`.
pub fn plugin_parametric(
    sample: &Sample,
    family: &ParamFamily,
    model: &DistortionModel,
    d: f64,
) -> Result<EstimateReport> {
    let r = family_infimum(sample, family, model, d, None)?;
    Ok(family_report(EstimatorKind::Parametric, sample.len(), d, r, ExtReal::ZERO))
}

/// Penalty `F_n(theta) >= 0` added to the codebook rate.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Penalty {
    Zero,
    /// `F_n = c / n` for every `theta`.
    Constant { c: f64 },
    /// `F_n(theta_i) = c * complexity[i] / n` over a grid family.
    Complexity { c: f64, complexity: Vec<f64> },
    /// `F_n(theta_i) = values[i]` over a grid family, for the current `n`.
    Table { values: Vec<f64> },
}

impl Penalty {
    fn per_entry(&self, n: usize, len: usize) -> Result<Vec<f64>> {
        let n = n as f64;
        let values = match self {
            Penalty::Zero => vec![0.0; len],
            Penalty::Constant { c } => vec![c / n; len],
            Penalty::Complexity { c, complexity } => {
                if complexity.len() != len {
                    return Err(Error::InvalidArgument("complexity table length differs from grid".into()));
                }
                complexity.iter().map(|k| c * k / n).collect()
            }
            Penalty::Table { values } => {
                if values.len() != len {
                    return Err(Error::InvalidArgument("penalty table length differs from grid".into()));
                }
                values.clone()
            }
        };
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!("penalty {v} is not finite and >= 0")));
        }
        Ok(values)
    }
}

/// `inf_theta [ R1(P_n, Q_theta, D) + F_n(theta) ]`.
pub fn penalized_estimate(
    sample: &Sample,
    family: &ParamFamily,
    model: &DistortionModel,
    d: f64,
    penalty: &Penalty,
) -> Result<EstimateReport> {
    let n = sample.len();
    match (family, penalty) {
        (_, Penalty::Zero) | (_, Penalty::Constant { .. }) => {
            let shift = penalty.per_entry(n, 1)?[0];
            let r = family_infimum(sample, family, model, d, None)?;
            Ok(family_report(EstimatorKind::Penalized, n, d, r, ExtReal::clamped(shift)))
        }
        (ParamFamily::FiniteGrid { entries }, _) => {
            let p = empirical(sample)?;
            let pen = penalty.per_entry(n, entries.len())?;
            let mut best: Option<(usize, ExtReal)> = None;
            for (i, e) in entries.iter().enumerate() {
                let v = LogMgfCurve::finite(&p, &e.dist, model)?.conjugate(d)?.rate + pen[i];
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((i, v));
                }
            }
            let (index, estimate) = best.expect("nonempty grid");
            Ok(EstimateReport {
                d,
                estimate,
                estimator_kind: EstimatorKind::Penalized,
                theta_hat: Some(Theta::Grid { index, label: entries[index].label.clone() }),
                diagnostics: Diagnostics { n, ..Default::default() },
            })
        }
        (ParamFamily::Gaussian(_), _) => Err(Error::InvalidArgument(
            "the gaussian family accepts only zero or constant penalties".into(),
        )),
    }
}

/// A `theta` whose codebook rate is within `eps_opt` of `R1^Theta(P_n, D)`.
///
/// Grid ties go to the lowest index; Gaussian ties to the smallest `mu`,
/// then the smallest `sigma`.
pub fn arginf_estimate(
    sample: &Sample,
    family: &ParamFamily,
    model: &DistortionModel,
    d: f64,
    eps_opt: Option<f64>,
) -> Result<FamilyRate> {
    if let Some(e) = eps_opt {
        if e.is_nan() || e <= 0.0 {
            return Err(Error::InvalidArgument(format!("eps_opt must be > 0, got {e}")));
        }
    }
    family_infimum(sample, family, model, d, eps_opt)
}

/// The reproduction law achieving `R1(P, D)` (up to solver tolerance).
pub fn optimal_reproduction(p: &FiniteDist, model: &DistortionModel, d: f64) -> Result<FiniteDist> {
    let sol = rd_solve(p, model, d, DEFAULT_TOL_D, &BaConfig::default())?;
    sol.output.ok_or(Error::Infeasible(d))
}

/// Slack used by [`arginf_estimate`] when none is given.
pub fn eps_opt_for(estimate: ExtReal) -> f64 {
    default_eps_opt(estimate)
}
