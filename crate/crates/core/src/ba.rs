//! Blahut–Arimoto computation of the first-order rate-distortion function.
//!
//! For a fixed slope `s <= 0` the iteration alternates
//!
//! ```text
//! W(y|x) ∝ Q(y) exp(s rho(x,y)),      Q(y) = sum_x P(x) W(y|x)
//! ```
//!
//! and monotonically increases `Lambda_Q(s) = sum_x P(x) ln sum_y Q(y) e^{s rho}`
//! towards its maximum over `Q`. With `c(y) = sum_x P(x) e^{s rho(x,y)} / Z_x`,
//! `Lambda_Q(s) + ln max_y c(y)` bounds that maximum from above. The gap
//! reported is the running minimum of that upper bound minus the current
//! value, which also bounds the excess of the reported rate over `R(D(s))`.
//!
//! Target distortions are reached by bisection on the slope.

use serde::Serialize;

use crate::dist::FiniteDist;
use crate::distortion::DistortionModel;
use crate::error::{Error, Result};
use crate::ext_real::ExtReal;
use crate::point::RDPoint;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BaConfig {
    /// Bound-gap tolerance in nats.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BaConfig {
    fn default() -> Self {
        BaConfig { tol: 1e-9, max_iter: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaResult {
    pub point: RDPoint,
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
}

/// Source side of a problem restricted to the support of `P`.
struct Problem<'a> {
    model: &'a DistortionModel,
    /// `(source index, P(x))` for `P(x) > 0`.
    rows: Vec<(usize, f64)>,
}

impl<'a> Problem<'a> {
    fn new(p: &FiniteDist, model: &'a DistortionModel) -> Result<Self> {
        if model.repro_len() == 0 {
            return Err(Error::InvalidModel("empty reproduction alphabet".into()));
        }
        let px = model.align_source(p)?;
        let rows = px.into_iter().enumerate().filter(|(_, w)| *w > 0.0).collect();
        Ok(Problem { model, rows })
    }

    /// `(E_P min_y rho, min_y E_P rho, argmin_y E_P rho)`.
    fn range(&self) -> (f64, f64, usize) {
        let ny = self.model.repro_len();
        let mut floor = 0.0;
        let mut col = vec![0.0; ny];
        for &(x, w) in &self.rows {
            let row = self.model.row(x);
            floor += w * row.iter().copied().fold(f64::INFINITY, f64::min);
            for (c, r) in col.iter_mut().zip(row) {
                *c += w * r;
            }
        }
        let mut arg = 0;
        for (j, &c) in col.iter().enumerate() {
            if c < col[arg] {
                arg = j;
            }
        }
        (floor, col[arg], arg)
    }
}

const WARM_MIX: f64 = 1e-3;

/// State of one fixed-slope run, before wrapping as a public result.
#[derive(Clone)]
struct Run {
    q: Vec<f64>,
    distortion: f64,
    rate: f64,
    iterations: usize,
    gap: f64,
    converged: bool,
    gap_history: Vec<f64>,
}

fn run_slope(problem: &Problem<'_>, slope: f64, q_init: Option<&[f64]>, cfg: &BaConfig, record: bool) -> Run {
    let model = problem.model;
    let ny = model.repro_len();
    // Warm starts are mixed with the uniform law: a letter at exactly zero
    // mass would stay there under multiplicative updates.
    let mut q: Vec<f64> = match q_init {
        Some(q0) => q0.iter().map(|v| (1.0 - WARM_MIX) * v + WARM_MIX / ny as f64).collect(),
        None => vec![1.0 / ny as f64; ny],
    };
    let mut log_w = vec![0.0; ny];
    let mut c = vec![0.0; ny];
    let mut upper = f64::INFINITY;
    let mut gap;
    let mut iterations = 0;
    let mut converged = false;
    let mut history = Vec::new();

    // Row-shifted kernel exp(s (rho(x,y) - min_y rho(x,y))), entries in [0, 1].
    let mut kernel = Vec::with_capacity(problem.rows.len() * ny);
    let mut shifts = Vec::with_capacity(problem.rows.len());
    for &(x, _) in &problem.rows {
        let row = model.row(x);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        shifts.push(slope * min);
        kernel.extend(row.iter().map(|r| (slope * (r - min)).exp()));
    }

    loop {
        // Lambda_Q(s) and c(y) for the current Q.
        c.iter_mut().for_each(|v| *v = 0.0);
        let mut lambda = 0.0;
        for (k, &(x, w)) in problem.rows.iter().enumerate() {
            let a = &kernel[k * ny..(k + 1) * ny];
            let z: f64 = q.iter().zip(a).map(|(qy, ay)| qy * ay).sum();
            if z > 1e-280 && z.is_finite() {
                lambda += w * (shifts[k] + z.ln());
                let f = w / z;
                for (cy, ay) in c.iter_mut().zip(a) {
                    *cy += f * ay;
                }
            } else {
                // Mass of Q sits where this row's kernel underflows.
                let row = model.row(x);
                let mut shift = f64::NEG_INFINITY;
                for y in 0..ny {
                    log_w[y] = if q[y] > 0.0 { q[y].ln() + slope * row[y] } else { f64::NEG_INFINITY };
                    shift = shift.max(log_w[y]);
                }
                let z: f64 = log_w.iter().map(|l| (l - shift).exp()).sum();
                let log_z = shift + z.ln();
                lambda += w * log_z;
                for y in 0..ny {
                    c[y] += w * (slope * row[y] - log_z).exp();
                }
            }
        }
        let max_c = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        upper = upper.min(lambda + max_c.ln());
        gap = (upper - lambda).max(0.0);
        if record {
            history.push(gap);
        }
        if gap <= cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        for y in 0..ny {
            q[y] *= c[y];
        }
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        iterations += 1;
    }

    // Channel induced by the final Q: its distortion, its output marginal and
    // its mutual information.
    let mut out = vec![0.0; ny];
    let mut distortion = 0.0;
    let mut channels = Vec::with_capacity(problem.rows.len());
    for &(x, w) in &problem.rows {
        let row = model.row(x);
        let mut shift = f64::NEG_INFINITY;
        for y in 0..ny {
            log_w[y] = if q[y] > 0.0 { q[y].ln() + slope * row[y] } else { f64::NEG_INFINITY };
            shift = shift.max(log_w[y]);
        }
        let z: f64 = log_w.iter().map(|l| (l - shift).exp()).sum();
        let channel: Vec<f64> = log_w.iter().map(|l| (l - shift).exp() / z).collect();
        for y in 0..ny {
            out[y] += w * channel[y];
            distortion += w * channel[y] * row[y];
        }
        channels.push(channel);
    }
    let mut rate = 0.0;
    for (&(_, w), channel) in problem.rows.iter().zip(&channels) {
        for y in 0..ny {
            if channel[y] > 0.0 && out[y] > 0.0 {
                rate += w * channel[y] * (channel[y] / out[y]).ln();
            }
        }
    }
    Run { q: out, distortion, rate: rate.max(0.0), iterations, gap, converged, gap_history: history }
}

fn zero_slope(problem: &Problem<'_>) -> Result<BaResult> {
    let (_, d_max0, arg) = problem.range();
    Ok(BaResult {
        point: RDPoint {
            distortion: d_max0,
            rate: ExtReal::ZERO,
            slope: 0.0,
            output_dist: problem.model.repro_point_mass(arg),
        },
        iterations: 0,
        gap: 0.0,
        converged: true,
    })
}

fn wrap(problem: &Problem<'_>, slope: f64, run: Run) -> Result<BaResult> {
    Ok(BaResult {
        point: RDPoint {
            distortion: run.distortion,
            rate: ExtReal::clamped(run.rate),
            slope,
            output_dist: problem.model.repro_dist(&run.q)?,
        },
        iterations: run.iterations,
        gap: run.gap,
        converged: run.converged,
    })
}

fn check_slope(slope: f64) -> Result<()> {
    if slope > 0.0 || !slope.is_finite() {
        return Err(Error::InvalidArgument(format!("slope must be finite and <= 0, got {slope}")));
    }
    Ok(())
}

/// One point of the rate-distortion curve at a fixed slope.
///
/// Non-convergence is reported through `converged = false`, never silently.
/// At slope zero every output law is optimal; the zero-rate endpoint
/// `(min_y E_P rho(X,y), 0)` is returned with the point mass on the
/// minimizing symbol.
pub fn ba_fixed_slope(p: &FiniteDist, model: &DistortionModel, slope: f64, cfg: &BaConfig) -> Result<BaResult> {
    check_slope(slope)?;
    let problem = Problem::new(p, model)?;
    if slope == 0.0 {
        return zero_slope(&problem);
    }
    let run = run_slope(&problem, slope, None, cfg, false);
    wrap(&problem, slope, run)
}

/// Per-iteration gap trace of a fixed-slope run.
pub fn ba_gap_trace(p: &FiniteDist, model: &DistortionModel, slope: f64, cfg: &BaConfig) -> Result<Vec<f64>> {
    check_slope(slope)?;
    let problem = Problem::new(p, model)?;
    Ok(run_slope(&problem, slope, None, cfg, true).gap_history)
}

/// Curve points for a sorted list of slopes, each computed independently.
pub fn rd_curve(p: &FiniteDist, model: &DistortionModel, slopes: &[f64], cfg: &BaConfig) -> Result<Vec<BaResult>> {
    if slopes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("slopes must be sorted ascending".into()));
    }
    slopes.iter().map(|&s| ba_fixed_slope(p, model, s, cfg)).collect()
}

/// `(d_floor, d_max0)`: below `d_floor = E_P min_y rho` the rate is infinite,
/// from `d_max0 = min_y E_P rho` on it is zero.
pub fn d_floor_and_dmax(p: &FiniteDist, model: &DistortionModel) -> Result<(f64, f64)> {
    let problem = Problem::new(p, model)?;
    let (floor, max0, _) = problem.range();
    Ok((floor, max0))
}

/// Full solution of `R1(P, D)` at a target distortion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RdSolution {
    pub rate: ExtReal,
    /// Slope of the matched curve point; `0` in the zero-rate region and
    /// `-inf` when infeasible.
    pub slope: f64,
    /// Distortion actually attained by the matched point.
    pub matched_distortion: f64,
    pub output: Option<FiniteDist>,
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
    /// `D` sits at `d_floor` with finite rate, the only candidate for a
    /// left-discontinuity of `R1(P, .)`.
    pub boundary: bool,
}

const MAX_DOUBLINGS: usize = 60;
const MAX_REFINEMENTS: usize = 200;
const SLOPE_REL_TOL: f64 = 1e-10;

/// Solves `R1(P, D)` to distortion tolerance `tol_d`.
///
/// The slope is bracketed by doubling from `-1`, then narrowed by safeguarded
/// false position until the matched distortion is within `tol_d` of `D`.
/// The rate is the matched point's rate corrected along its tangent, `R(s) + s (D - D(s))`.
pub fn rd_solve(p: &FiniteDist, model: &DistortionModel, d: f64, tol_d: f64, cfg: &BaConfig) -> Result<RdSolution> {
    if !d.is_finite() || d < 0.0 {
        return Err(Error::InvalidArgument(format!("distortion must be >= 0, got {d}")));
    }
    let problem = Problem::new(p, model)?;
    let (floor, max0, arg) = problem.range();
    if d >= max0 {
        return Ok(RdSolution {
            rate: ExtReal::ZERO,
            slope: 0.0,
            matched_distortion: max0,
            output: Some(model.repro_point_mass(arg)),
            iterations: 0,
            gap: 0.0,
            converged: true,
            boundary: false,
        });
    }
    if d < floor {
        return Ok(RdSolution {
            rate: ExtReal::Infinite,
            slope: f64::NEG_INFINITY,
            matched_distortion: floor,
            output: None,
            iterations: 0,
            gap: 0.0,
            converged: true,
            boundary: false,
        });
    }

    let mut total_iter = 0;
    let solve = |s: f64, warm: Option<&[f64]>, total: &mut usize| {
        let run = run_slope(&problem, s, warm, cfg, false);
        *total += run.iterations;
        run
    };

    // Bracket: D(lo) <= d < D(hi).
    let mut hi_slope = 0.0;
    let mut lo_slope = -1.0;
    let mut lo_run = solve(lo_slope, None, &mut total_iter);
    let mut doublings = 0;
    // Zero-slope endpoint until a run lands above d.
    let mut hi_run = Run {
        q: model.repro_point_mass(arg).probs().to_vec(),
        distortion: max0,
        rate: 0.0,
        iterations: 0,
        gap: 0.0,
        converged: true,
        gap_history: Vec::new(),
    };
    while lo_run.distortion > d {
        hi_slope = lo_slope;
        hi_run = lo_run.clone();
        if doublings == MAX_DOUBLINGS {
            if d <= floor + tol_d {
                let slope = lo_slope;
                let rate = lo_run.rate + slope * (d - lo_run.distortion);
                return Ok(RdSolution {
                    rate: ExtReal::clamped(rate.max(0.0)),
                    slope,
                    matched_distortion: lo_run.distortion,
                    output: Some(model.repro_dist(&lo_run.q)?),
                    iterations: total_iter,
                    gap: lo_run.gap,
                    converged: lo_run.converged,
                    boundary: true,
                });
            }
            return Err(Error::Bracket { target: d, low: lo_run.distortion, high: max0 });
        }
        lo_slope *= 2.0;
        let warm = lo_run.q.clone();
        lo_run = solve(lo_slope, Some(&warm), &mut total_iter);
        doublings += 1;
    }

    // Illinois false position on f(s) = D(s) - d. The search also stops once
    // the slope bracket collapses, which happens when D(s) jumps across d on
    // a straight piece of the curve.
    let mut f_lo = lo_run.distortion - d;
    let mut f_hi = hi_run.distortion - d;
    let mut best_slope = lo_slope;
    let mut best = lo_run.clone();
    let mut lo = lo_slope;
    let mut hi = hi_slope;
    let mut side = 0i8;
    let mut steps = 0;
    while (best.distortion - d).abs() > tol_d && steps < MAX_REFINEMENTS {
        let width = hi - lo;
        if width <= SLOPE_REL_TOL * lo.abs() {
            break;
        }
        let mut mid = lo - f_lo * width / (f_hi - f_lo);
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        if mid <= lo || mid >= hi {
            break;
        }
        let warm = best.q.clone();
        let run = solve(mid, Some(&warm), &mut total_iter);
        let f = run.distortion - d;
        if f > 0.0 {
            hi = mid;
            hi_run = run.clone();
            f_hi = f;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = mid;
            lo_run = run.clone();
            f_lo = f;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        }
        if (run.distortion - d).abs() < (best.distortion - d).abs() {
            best = run;
            best_slope = mid;
        }
        steps += 1;
    }

    if (best.distortion - d).abs() <= tol_d {
        let rate = best.rate + best_slope * (d - best.distortion);
        return Ok(RdSolution {
            rate: ExtReal::clamped(rate.max(0.0)),
            slope: best_slope,
            matched_distortion: best.distortion,
            output: Some(model.repro_dist(&best.q)?),
            iterations: total_iter,
            gap: best.gap,
            converged: best.converged,
            boundary: d <= floor + tol_d,
        });
    }

    // No slope reaches d: time-share the two bracketing channels. Their mixture
    // has distortion d and output law the same mixture of their outputs.
    let theta = (hi_run.distortion - d) / (hi_run.distortion - lo_run.distortion);
    let rate = theta * lo_run.rate + (1.0 - theta) * hi_run.rate;
    let q: Vec<f64> = lo_run.q.iter().zip(&hi_run.q).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
    Ok(RdSolution {
        rate: ExtReal::clamped(rate.max(0.0)),
        slope: best_slope,
        matched_distortion: d,
        output: Some(model.repro_dist(&q)?),
        iterations: total_iter,
        gap: lo_run.gap.max(hi_run.gap),
        converged: lo_run.converged && hi_run.converged,
        boundary: d <= floor + tol_d,
    })
}

/// Default distortion-matching tolerance for [`rd_at`].
pub const DEFAULT_TOL_D: f64 = 1e-9;

/// `R1(P, D)` in nats.
pub fn rd_at(p: &FiniteDist, model: &DistortionModel, d: f64, tol: f64) -> Result<ExtReal> {
    Ok(rd_solve(p, model, d, tol, &BaConfig::default())?.rate)
}
