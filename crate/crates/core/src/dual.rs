//! Log-moment-generating functions and their one-sided Legendre transforms.
//!
//! For a source law `P`, a codebook law `Q` and a distortion `rho`,
//!
//! ```text
//! Lambda(l) = E_P[ log E_Q exp(l * rho(X, Y)) ],      l <= 0
//! R1(P, Q, D) = sup_{l <= 0} [ l * D - Lambda(l) ]
//! ```
//!
//! `Lambda` is convex and nondecreasing on `l <= 0`, so the objective is
//! concave and the supremum is found by a bracketed golden-section search.
//! The transform is `+inf` below `D_min`, zero from `D_ave` on, and strictly
//! convex in between.

use serde::Serialize;

use crate::dist::FiniteDist;
use crate::distortion::{DistortionKind, DistortionModel};
use crate::error::{Error, Result};
use crate::ext_real::ExtReal;
use crate::family::{GaussianBounds, ParamFamily, Theta};
use crate::optimize::golden_section_max;

/// Bracket expansion gives up past this slope.
pub const LAMBDA_LIMIT: f64 = -1e12;
const LAMBDA_REL_TOL: f64 = 1e-10;
const MAX_SEARCH_ITER: usize = 200;
const BOUNDARY_TOL: f64 = 1e-12;

/// Result of the conjugate computation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DualRate {
    pub rate: ExtReal,
    /// Maximizing slope; `-inf` when the supremum is only approached as the
    /// slope diverges.
    pub lambda: f64,
    /// Set when `D` sits at `D_min` with a finite limit value, the one point
    /// where the transform may fail to be left-continuous.
    pub boundary: bool,
}

/// First two moments of a real-valued source law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
}

impl Moments {
    pub fn of_values(values: &[f64]) -> Result<Moments> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("no values".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Ok(Moments { mean, var })
    }

    pub fn of_dist(p: &FiniteDist) -> Result<Moments> {
        let (mean, var) = p.moments()?;
        Ok(Moments { mean, var })
    }
}

/// What a family infimum is taken against: a finite law or, for the
/// Gaussian family under squared error, just its moments.
#[derive(Clone, Copy, Debug)]
pub enum SourceView<'a> {
    Dist(&'a FiniteDist),
    Moments(Moments),
}

struct Row {
    weight: f64,
    min_cost: f64,
    /// `(ln Q(y), rho(x,y) - min_cost)` over the support of `Q`.
    terms: Vec<(f64, f64)>,
}

enum CurveKind {
    Finite(Vec<Row>),
    Gaussian { m2: f64, sigma2: f64 },
}

/// `Lambda(l)` for a fixed `(P, Q, rho)`.
pub struct LogMgfCurve {
    kind: CurveKind,
}

impl LogMgfCurve {
    pub fn finite(p: &FiniteDist, q: &FiniteDist, model: &DistortionModel) -> Result<Self> {
        let px = model.align_source(p)?;
        let qy = model.align_repro(q)?;
        let support: Vec<usize> = (0..qy.len()).filter(|&y| qy[y] > 0.0).collect();
        let rows = px
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(x, &weight)| {
                let row = model.row(x);
                let min_cost = support.iter().map(|&y| row[y]).fold(f64::INFINITY, f64::min);
                let terms = support.iter().map(|&y| (qy[y].ln(), row[y] - min_cost)).collect();
                Row { weight, min_cost, terms }
            })
            .collect();
        Ok(LogMgfCurve { kind: CurveKind::Finite(rows) })
    }

    /// Gaussian codebook `N(mu, sigma^2)` under squared error, against a
    /// source with the given moments.
    pub fn gaussian(source: Moments, mu: f64, sigma: f64) -> Self {
        let m2 = source.var + (source.mean - mu).powi(2);
        LogMgfCurve { kind: CurveKind::Gaussian { m2, sigma2: sigma * sigma } }
    }

    /// `(Lambda(l), Lambda'(l))`.
    pub fn eval(&self, lambda: f64) -> (f64, f64) {
        match &self.kind {
            CurveKind::Finite(rows) => {
                let mut value = 0.0;
                let mut slope = 0.0;
                for row in rows {
                    let shift = row
                        .terms
                        .iter()
                        .map(|(lq, e)| lq + lambda * e)
                        .fold(f64::NEG_INFINITY, f64::max);
                    let mut mass = 0.0;
                    let mut tilted = 0.0;
                    for (lq, e) in &row.terms {
                        let w = (lq + lambda * e - shift).exp();
                        mass += w;
                        tilted += w * e;
                    }
                    value += row.weight * (lambda * row.min_cost + shift + mass.ln());
                    slope += row.weight * (row.min_cost + tilted / mass);
                }
                (value, slope)
            }
            CurveKind::Gaussian { m2, sigma2 } => {
                let a = 1.0 - 2.0 * lambda * sigma2;
                let value = -0.5 * (-2.0 * lambda * sigma2).ln_1p() + lambda * m2 / a;
                let slope = sigma2 / a + m2 / (a * a);
                (value, slope)
            }
        }
    }

    pub fn value(&self, lambda: f64) -> f64 {
        self.eval(lambda).0
    }

    /// `E_P E_Q rho`.
    pub fn d_ave(&self) -> f64 {
        self.eval(0.0).1
    }

    /// `E_P [ min over supp Q of rho(X, .) ]`.
    pub fn d_min(&self) -> f64 {
        match &self.kind {
            CurveKind::Finite(rows) => rows.iter().map(|r| r.weight * r.min_cost).sum(),
            CurveKind::Gaussian { m2, sigma2 } => {
                if *sigma2 > 0.0 {
                    0.0
                } else {
                    *m2
                }
            }
        }
    }

    /// `lim_{l -> -inf} [ l * D_min - Lambda(l) ]`.
    pub fn limit_at_d_min(&self) -> ExtReal {
        match &self.kind {
            CurveKind::Finite(rows) => {
                let total: f64 = rows
                    .iter()
                    .map(|r| {
                        let mass: f64 =
                            r.terms.iter().filter(|(_, e)| *e == 0.0).map(|(lq, _)| lq.exp()).sum();
                        -r.weight * mass.ln()
                    })
                    .sum();
                ExtReal::clamped(total)
            }
            CurveKind::Gaussian { sigma2, .. } => {
                if *sigma2 > 0.0 {
                    ExtReal::Infinite
                } else {
                    ExtReal::ZERO
                }
            }
        }
    }

    /// `sup_{l <= 0} [ l * D - Lambda(l) ]` with its maximizer.
    pub fn conjugate(&self, d: f64) -> Result<DualRate> {
        if !d.is_finite() || d < 0.0 {
            return Err(Error::InvalidArgument(format!("distortion must be >= 0, got {d}")));
        }
        let d_ave = self.d_ave();
        if d >= d_ave {
            return Ok(DualRate { rate: ExtReal::ZERO, lambda: 0.0, boundary: false });
        }
        let d_min = self.d_min();
        let tol = BOUNDARY_TOL * d_min.max(1.0);
        if d < d_min - tol {
            return Ok(DualRate { rate: ExtReal::Infinite, lambda: f64::NEG_INFINITY, boundary: false });
        }
        if d <= d_min + tol {
            return Ok(self.boundary_value());
        }

        let objective = |l: f64| l * d - self.value(l);
        let mut hi = 0.0;
        let mut lo = -1.0;
        while d - self.eval(lo).1 <= 0.0 {
            hi = lo;
            lo *= 2.0;
            if lo < LAMBDA_LIMIT {
                return Ok(self.boundary_value());
            }
        }
        let best = golden_section_max(objective, lo, hi, LAMBDA_REL_TOL, MAX_SEARCH_ITER);
        Ok(DualRate { rate: ExtReal::clamped(best.value), lambda: best.x, boundary: false })
    }

    fn boundary_value(&self) -> DualRate {
        let rate = self.limit_at_d_min();
        DualRate { rate, lambda: f64::NEG_INFINITY, boundary: rate.is_finite() }
    }
}

/// `Lambda(lambda)` for finite `P` and `Q`.
pub fn log_mgf(p: &FiniteDist, q: &FiniteDist, model: &DistortionModel, lambda: f64) -> Result<f64> {
    if lambda > 0.0 || lambda.is_nan() {
        return Err(Error::PositiveLambda(lambda));
    }
    Ok(LogMgfCurve::finite(p, q, model)?.value(lambda))
}

/// `R1(P, Q, D)` by the dual representation.
pub fn rate_dual(p: &FiniteDist, q: &FiniteDist, model: &DistortionModel, d: f64) -> Result<DualRate> {
    LogMgfCurve::finite(p, q, model)?.conjugate(d)
}

pub fn d_ave(p: &FiniteDist, q: &FiniteDist, model: &DistortionModel) -> Result<f64> {
    Ok(LogMgfCurve::finite(p, q, model)?.d_ave())
}

pub fn d_min(p: &FiniteDist, q: &FiniteDist, model: &DistortionModel) -> Result<f64> {
    Ok(LogMgfCurve::finite(p, q, model)?.d_min())
}

/// `log E exp(lambda (x - Y)^2)` for `Y ~ N(mu, sigma^2)`; the point mass
/// when `sigma = 0`.
pub fn gaussian_log_mgf(x: f64, mu: f64, sigma: f64, lambda: f64) -> f64 {
    debug_assert!(lambda <= 0.0 && sigma >= 0.0);
    let s2 = sigma * sigma;
    let a = 1.0 - 2.0 * lambda * s2;
    -0.5 * (-2.0 * lambda * s2).ln_1p() + lambda * (x - mu).powi(2) / a
}

/// `R1(P, N(mu, sigma^2), D)` under squared error.
pub fn gaussian_rate_dual(source: Moments, mu: f64, sigma: f64, d: f64) -> Result<DualRate> {
    LogMgfCurve::gaussian(source, mu, sigma).conjugate(d)
}

/// Infimum of `R1(P, Q_theta, D)` over a family, with its minimizer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyRate {
    pub rate: ExtReal,
    pub theta: Theta,
    /// Rate of the reported `theta` itself (differs from `rate` only when the
    /// value comes from a closed form).
    pub theta_rate: ExtReal,
    /// Several parameters attain the infimum; the reported one is the first
    /// in search order.
    pub flat: bool,
    pub flags: Vec<String>,
}

/// Default slack for approximate minimizers.
pub fn default_eps_opt(estimate: ExtReal) -> f64 {
    1e-6 * estimate.finite().unwrap_or(1.0).max(1.0)
}

/// `R1^Theta(P, D) = inf_theta R1(P, Q_theta, D)`.
///
/// Grid families are scanned exhaustively; ties go to the lowest index.
/// The Gaussian family requires squared error and uses the closed form
/// `max(0, ln(var / D) / 2)` whenever the unconstrained minimizer lies in the
/// search box; `theta` comes from a coarse-to-fine 21x21 grid refinement,
/// continued past three levels until it is within `eps_opt` of the value.
pub fn family_rate(
    source: SourceView<'_>,
    family: &ParamFamily,
    model: &DistortionModel,
    d: f64,
    eps_opt: Option<f64>,
) -> Result<FamilyRate> {
    family.validate()?;
    match family {
        ParamFamily::FiniteGrid { entries } => {
            let p = match source {
                SourceView::Dist(p) => p,
                SourceView::Moments(_) => {
                    return Err(Error::InvalidFamily(
                        "grid families need a finite source distribution".into(),
                    ))
                }
            };
            let curves = entries
                .iter()
                .map(|e| LogMgfCurve::finite(p, &e.dist, model))
                .collect::<Result<Vec<_>>>()?;
            let mut best: Option<(usize, ExtReal)> = None;
            let mut ties = 0;
            for (i, curve) in curves.iter().enumerate() {
                let r = curve.conjugate(d)?.rate;
                match best {
                    Some((_, b)) if r > b => {}
                    Some((_, b)) if r == b => ties += 1,
                    _ => {
                        best = Some((i, r));
                        ties = 0;
                    }
                }
            }
            let (index, rate) = best.expect("nonempty family");
            Ok(FamilyRate {
                rate,
                theta: Theta::Grid { index, label: entries[index].label.clone() },
                theta_rate: rate,
                flat: ties > 0,
                flags: vec![],
            })
        }
        ParamFamily::Gaussian(bounds) => {
            if model.kind() != DistortionKind::SquaredError {
                return Err(Error::InvalidFamily(
                    "the gaussian family is supported under squared error only".into(),
                ));
            }
            let moments = match source {
                SourceView::Dist(p) => Moments::of_dist(p)?,
                SourceView::Moments(m) => m,
            };
            gaussian_family_rate(moments, bounds, d, eps_opt)
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

const REFINE_POINTS: usize = 21;
const REFINE_MIN_LEVELS: usize = 3;
const REFINE_MAX_LEVELS: usize = 30;

fn gaussian_family_rate(
    moments: Moments,
    bounds: &GaussianBounds,
    d: f64,
    eps_opt: Option<f64>,
) -> Result<FamilyRate> {
    if d.is_nan() || d < 0.0 {
        return Err(Error::InvalidArgument(format!("distortion must be >= 0, got {d}")));
    }
    let mut flags = Vec::new();
    let closed_form = if d >= moments.var {
        ExtReal::ZERO
    } else if d == 0.0 {
        ExtReal::Infinite
    } else {
        ExtReal::clamped(0.5 * (moments.var / d).ln())
    };
    let target_sigma = (moments.var - d).max(0.0).sqrt();
    let inside = (bounds.mu.0..=bounds.mu.1).contains(&moments.mean)
        && (bounds.sigma.0..=bounds.sigma.1).contains(&target_sigma);

    let eval = |mu: f64, sigma: f64| gaussian_rate_dual(moments, mu, sigma, d).map(|r| r.rate);
    let mut mu_range = bounds.mu;
    let mut sigma_range = bounds.sigma;
    let mut best: Option<(f64, f64, ExtReal)> = None;
    let mut flat = false;
    for level in 0..REFINE_MAX_LEVELS {
        let mus = linspace(mu_range.0, mu_range.1, REFINE_POINTS);
        let sigmas = linspace(sigma_range.0, sigma_range.1, REFINE_POINTS);
        let mut zero_hits = 0;
        for &mu in &mus {
            for &sigma in &sigmas {
                let r = eval(mu, sigma)?;
                if r == ExtReal::ZERO {
                    zero_hits += 1;
                }
                if best.is_none_or(|(_, _, b)| r < b) {
                    best = Some((mu, sigma, r));
                }
            }
        }
        flat |= zero_hits > 1;
        let (mu, sigma, r) = best.expect("grid is nonempty");
        let target = if inside { closed_form } else { r };
        let slack = eps_opt.unwrap_or_else(|| default_eps_opt(target));
        let good = match (r, target) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a <= b + slack,
            (ExtReal::Infinite, ExtReal::Infinite) => true,
            _ => false,
        };
        if level + 1 >= REFINE_MIN_LEVELS && (good || r.is_infinite()) {
            break;
        }
        let mu_step = if mus.len() > 1 { mus[1] - mus[0] } else { 0.0 };
        let sigma_step = if sigmas.len() > 1 { sigmas[1] - sigmas[0] } else { 0.0 };
        mu_range = ((mu - mu_step).max(bounds.mu.0), (mu + mu_step).min(bounds.mu.1));
        sigma_range = ((sigma - sigma_step).max(bounds.sigma.0), (sigma + sigma_step).min(bounds.sigma.1));
    }
    let (mu, sigma, theta_rate) = best.expect("grid is nonempty");
    let rate = if inside {
        closed_form
    } else {
        flags.push("minimizer-outside-bounds".to_string());
        theta_rate
    };
    if rate.is_infinite() {
        flags.push("infinite-for-all-theta".to_string());
    }
    Ok(FamilyRate { rate, theta: Theta::Gaussian { mu, sigma }, theta_rate, flat, flags })
}

/// Both sides of `R1^Theta(eps P' + (1-eps) P, D) >= eps R1^Theta(P', D/eps)`.
pub fn mixture_lower_bound(
    p_prime: &FiniteDist,
    p: &FiniteDist,
    eps: f64,
    family: &ParamFamily,
    model: &DistortionModel,
    d: f64,
) -> Result<(ExtReal, ExtReal)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("mixture weight {eps} not in (0,1)")));
    }
    let mixture = p.mix(p_prime, eps)?;
    let lhs = family_rate(SourceView::Dist(&mixture), family, model, d, None)?.rate;
    let rhs = family_rate(SourceView::Dist(p_prime), family, model, d / eps, None)?.rate.scale(eps);
    Ok((lhs, rhs))
}
