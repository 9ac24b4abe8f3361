//! Lossy likelihood `-(1/n) ln Q^n(B_n(x, D))`.
//!
//! The distortion ball `B_n(x, D)` holds the reproduction strings whose
//! average distortion from `x` is at most `D`. Distortions are scaled to
//! integers on a common rational grid, so the ball probability is a sum over
//! integer running totals and is computed exactly by dynamic programming:
//! the state after `k` letters is the accumulated grid distortion, and each
//! letter `y` moves mass `Q(y)` forward by `cost(x_k, y)`.

use std::ops::{Add, Mul};

use num_rational::BigRational;
use num_traits::{One, Zero};

use super::Sample;
use crate::dist::FiniteDist;
use crate::distortion::DistortionModel;
use crate::error::{Error, Result};
use crate::ext_real::ExtReal;

const GRID_TOL: f64 = 1e-9;
const MAX_DENOMINATOR: i64 = 10_000;
const MAX_SCALE: i64 = 1_000_000;
const MAX_STATES: u64 = 50_000_000;

/// Weights the ball recursion can run on.
pub trait BallWeight: Clone + Zero + One + Add<Output = Self> + Mul<Output = Self> {
    fn from_prob(p: f64) -> Self;
}

impl BallWeight for f64 {
    fn from_prob(p: f64) -> Self {
        p
    }
}

impl BallWeight for BigRational {
    fn from_prob(p: f64) -> Self {
        BigRational::from_float(p).expect("finite probability")
    }
}

/// Smallest denominator `k <= MAX_DENOMINATOR` with `|v - h/k| <= GRID_TOL`,
/// by continued-fraction convergents.
fn grid_denominator(v: f64) -> Option<i64> {
    let (mut h0, mut h1): (i64, i64) = (0, 1);
    let (mut k0, mut k1): (i64, i64) = (1, 0);
    let mut x = v;
    for _ in 0..64 {
        let a = x.floor();
        if a > i64::MAX as f64 / 4.0 {
            return None;
        }
        let a = a as i64;
        let h = a.checked_mul(h1)?.checked_add(h0)?;
        let k = a.checked_mul(k1)?.checked_add(k0)?;
        if k > MAX_DENOMINATOR {
            return None;
        }
        if (v - h as f64 / k as f64).abs() <= GRID_TOL {
            return Some(k);
        }
        (h0, h1, k0, k1) = (h1, h, k1, k);
        let frac = x - a as f64;
        if frac <= 0.0 {
            return None;
        }
        x = 1.0 / frac;
    }
    None
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Integer costs per source row and the scale they were multiplied by.
struct Grid {
    costs: Vec<Vec<u64>>,
    scale: i64,
}

fn integer_grid(model: &DistortionModel, rows: &[usize], cols: &[usize]) -> Result<Grid> {
    let mut scale: i64 = 1;
    for &x in rows {
        for &y in cols {
            let v = model.cost(x, y);
            let k = grid_denominator(v).ok_or(Error::NotGridRepresentable(v))?;
            scale = scale / gcd(scale, k) * k;
            if scale > MAX_SCALE {
                return Err(Error::NotGridRepresentable(v));
            }
        }
    }
    let costs = rows
        .iter()
        .map(|&x| cols.iter().map(|&y| (model.cost(x, y) * scale as f64).round() as u64).collect())
        .collect();
    Ok(Grid { costs, scale })
}

enum Ball<W> {
    /// Every string is in the ball; carries `(sum_y Q(y))^n`.
    Full(W),
    Mass(W),
}

fn ball<W: BallWeight>(sample: &Sample, q: &FiniteDist, model: &DistortionModel, d: f64) -> Result<Ball<W>> {
    if !d.is_finite() || d < 0.0 {
        return Err(Error::InvalidArgument(format!("distortion must be >= 0, got {d}")));
    }
    let values = sample.symbols()?;
    let qy = model.align_repro(q)?;
    let cols: Vec<usize> = (0..qy.len()).filter(|&y| qy[y] > 0.0).collect();
    let weights: Vec<W> = cols.iter().map(|&y| W::from_prob(qy[y])).collect();

    // Distinct source rows in first-seen order; positions map to rows.
    let mut row_of = std::collections::HashMap::new();
    let mut rows = Vec::new();
    let mut seq = Vec::with_capacity(values.len());
    for s in values {
        let x = model.source_position(s)?;
        let r = *row_of.entry(x).or_insert_with(|| {
            rows.push(x);
            rows.len() - 1
        });
        seq.push(r);
    }
    let grid = integer_grid(model, &rows, &cols)?;
    let n = values.len();
    let budget_f = n as f64 * d * grid.scale as f64;
    let worst: u64 = seq.iter().map(|&r| grid.costs[r].iter().copied().max().unwrap_or(0)).sum();
    if worst as f64 <= budget_f + GRID_TOL {
        let total = weights.iter().fold(W::zero(), |acc, w| acc + w.clone());
        let mass = (0..n).fold(W::one(), |acc, _| acc * total.clone());
        return Ok(Ball::Full(mass));
    }
    let budget = (budget_f + GRID_TOL).floor() as u64;
    if (n as u64).saturating_mul(budget + 1) > MAX_STATES {
        return Err(Error::InvalidArgument(format!(
            "distortion ball needs {} x {} states; coarsen the model or shorten the sample",
            n,
            budget + 1
        )));
    }
    let budget = budget as usize;
    let mut dp = vec![W::zero(); budget + 1];
    dp[0] = W::one();
    let mut next = vec![W::zero(); budget + 1];
    for &r in &seq {
        next.iter_mut().for_each(|v| *v = W::zero());
        let costs = &grid.costs[r];
        for (b, mass) in dp.iter().enumerate() {
            if mass.is_zero() {
                continue;
            }
            for (j, w) in weights.iter().enumerate() {
                let nb = b + costs[j] as usize;
                if nb <= budget {
                    let add = mass.clone() * w.clone();
                    next[nb] = std::mem::replace(&mut next[nb], W::zero()) + add;
                }
            }
        }
        std::mem::swap(&mut dp, &mut next);
    }
    Ok(Ball::Mass(dp.into_iter().fold(W::zero(), |acc, v| acc + v)))
}

/// `Q^n(B_n(x, D))` in floating point.
pub fn ball_probability(sample: &Sample, q: &FiniteDist, model: &DistortionModel, d: f64) -> Result<f64> {
    Ok(match ball::<f64>(sample, q, model, d)? {
        Ball::Full(_) => 1.0,
        Ball::Mass(m) => m,
    })
}

/// `Q^n(B_n(x, D))` as an exact rational, each `Q(y)` taken as the exact
/// value of its `f64`. These need not sum to exactly one, so a ball holding
/// every string has mass `(sum_y Q(y))^n`.
pub fn ball_probability_exact(
    sample: &Sample,
    q: &FiniteDist,
    model: &DistortionModel,
    d: f64,
) -> Result<BigRational> {
    Ok(match ball::<BigRational>(sample, q, model, d)? {
        Ball::Full(m) => m,
        Ball::Mass(m) => m,
    })
}

/// `-(1/n) ln Q^n(B_n(x, D))`; `+inf` when the ball has probability zero.
pub fn lossy_likelihood(sample: &Sample, q: &FiniteDist, model: &DistortionModel, d: f64) -> Result<ExtReal> {
    let n = sample.len() as f64;
    Ok(match ball::<f64>(sample, q, model, d)? {
        Ball::Full(_) => ExtReal::ZERO,
        Ball::Mass(m) if m <= 0.0 => ExtReal::Infinite,
        Ball::Mass(m) => ExtReal::clamped(-m.ln() / n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::{int_alphabet, Symbol};

    #[test]
    fn denominators() {
        assert_eq!(grid_denominator(3.0), Some(1));
        assert_eq!(grid_denominator(0.5), Some(2));
        assert_eq!(grid_denominator(1.0 / 3.0), Some(3));
        assert_eq!(grid_denominator(0.125), Some(8));
        assert_eq!(grid_denominator(std::f64::consts::PI), None);
    }

    #[test]
    fn irrational_costs_rejected() {
        let a = int_alphabet(0, 1);
        let m = DistortionModel::matrix(a.clone(), a.clone(), vec![vec![0.0, std::f64::consts::E], vec![1.0, 0.0]]).unwrap();
        let s = Sample::discrete(vec![Symbol::Int(0), Symbol::Int(1)]).unwrap();
        let q = FiniteDist::uniform(a).unwrap();
        assert!(matches!(lossy_likelihood(&s, &q, &m, 0.5), Err(Error::NotGridRepresentable(_))));
    }

    #[test]
    fn large_radius_gives_zero() {
        let a = int_alphabet(0, 2);
        let m = DistortionModel::absolute(a.clone(), a.clone()).unwrap();
        let s = Sample::discrete([0, 2, 1].map(Symbol::Int).to_vec()).unwrap();
        let q = FiniteDist::new(a, vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(lossy_likelihood(&s, &q, &m, 2.0).unwrap(), ExtReal::ZERO);
    }

    #[test]
    fn hamming_zero_radius_is_product_likelihood() {
        let a = int_alphabet(0, 2);
        let m = DistortionModel::hamming(a.clone(), a.clone()).unwrap();
        let xs = [0, 2, 1, 1, 0];
        let s = Sample::discrete(xs.map(Symbol::Int).to_vec()).unwrap();
        let q = FiniteDist::new(a, vec![0.2, 0.3, 0.5]).unwrap();
        let expected: f64 = -xs.iter().map(|&x| q.probs()[x as usize].ln()).sum::<f64>() / xs.len() as f64;
        let got = lossy_likelihood(&s, &q, &m, 0.0).unwrap().finite().unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn empty_ball_is_infinite() {
        let m = DistortionModel::hamming(int_alphabet(0, 1), int_alphabet(0, 1)).unwrap();
        let s = Sample::discrete(vec![Symbol::Int(1), Symbol::Int(1)]).unwrap();
        let q = FiniteDist::new(int_alphabet(0, 1), vec![1.0, 0.0]).unwrap();
        assert_eq!(lossy_likelihood(&s, &q, &m, 0.4).unwrap(), ExtReal::Infinite);
    }
}
