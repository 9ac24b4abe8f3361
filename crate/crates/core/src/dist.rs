//! Finite distributions and the basic information measures on them.
//!
//! All quantities are in nats.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext_real::ExtReal;
use crate::symbol::Symbol;

/// Probabilities below this are treated as structural zeros.
pub const SNAP_THRESHOLD: f64 = 1e-15;

const SUM_TOLERANCE: f64 = 1e-12;

/// A probability distribution with finite support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDist")]
pub struct FiniteDist {
    symbols: Vec<Symbol>,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDist {
    symbols: Vec<Symbol>,
    probs: Vec<f64>,
}

impl TryFrom<RawDist> for FiniteDist {
    type Error = Error;

    fn try_from(raw: RawDist) -> Result<Self> {
        FiniteDist::new(raw.symbols, raw.probs)
    }
}

impl FiniteDist {
    /// Validating constructor. Probabilities must already sum to one.
    pub fn new(symbols: Vec<Symbol>, probs: Vec<f64>) -> Result<Self> {
        if symbols.len() != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} symbols but {} probabilities",
                symbols.len(),
                probs.len()
            )));
        }
        if symbols.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("bad probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        let mut seen = HashSet::with_capacity(symbols.len());
        for s in &symbols {
            if !seen.insert(s) {
                return Err(Error::InvalidDistribution(format!("duplicate symbol {s}")));
            }
        }
        Ok(FiniteDist { symbols, probs })
    }

    /// Empirical law from occurrence counts. Symbols must be distinct and
    /// counts positive; the probabilities are `count / total`.
    pub fn from_counts(symbols: Vec<Symbol>, counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if symbols.len() != counts.len() || total == 0 {
            return Err(Error::EmptyMass);
        }
        let n = total as f64;
        let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            // Many small cells can accumulate rounding past the tolerance.
            return normalize(&probs, symbols);
        }
        FiniteDist::new(symbols, probs)
    }

    pub fn point_mass(symbol: Symbol) -> Self {
        FiniteDist { symbols: vec![symbol], probs: vec![1.0] }
    }

    pub fn uniform(symbols: Vec<Symbol>) -> Result<Self> {
        let w = vec![1.0; symbols.len()];
        normalize(&w, symbols)
    }

    /// Two-point distribution on `{0, 1}` with `P(1) = p`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        normalize(&[1.0 - p, p], vec![Symbol::Int(0), Symbol::Int(1)])
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, f64)> {
        self.symbols.iter().zip(self.probs.iter().copied())
    }

    /// Probability of `symbol`, zero if it is not listed.
    pub fn prob_of(&self, symbol: &Symbol) -> f64 {
        self.iter().find(|(s, _)| *s == symbol).map_or(0.0, |(_, p)| p)
    }

    /// Symbols carrying positive mass.
    pub fn support(&self) -> impl Iterator<Item = (&Symbol, f64)> {
        self.iter().filter(|(_, p)| *p > 0.0)
    }

    /// `eps * other + (1 - eps) * self` over the union of the two symbol lists.
    pub fn mix(&self, other: &FiniteDist, eps: f64) -> Result<FiniteDist> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidArgument(format!("mixture weight {eps} not in [0,1]")));
        }
        let mut symbols = self.symbols.clone();
        let mut index: HashMap<Symbol, usize> =
            symbols.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let mut weights: Vec<f64> = self.probs.iter().map(|p| (1.0 - eps) * p).collect();
        for (s, p) in other.iter() {
            match index.get(s) {
                Some(&i) => weights[i] += eps * p,
                None => {
                    index.insert(s.clone(), symbols.len());
                    symbols.push(s.clone());
                    weights.push(eps * p);
                }
            }
        }
        normalize(&weights, symbols)
    }

    /// Mean and variance of a distribution over integer symbols.
    pub fn moments(&self) -> Result<(f64, f64)> {
        let mut mean = 0.0;
        for (s, p) in self.iter() {
            let v = s.numeric().ok_or_else(|| {
                Error::InvalidArgument(format!("symbol {s} has no numeric value"))
            })?;
            mean += p * v;
        }
        let var = self
            .iter()
            .map(|(s, p)| p * (s.numeric().unwrap_or(0.0) - mean).powi(2))
            .sum();
        Ok((mean, var))
    }
}

/// Normalizes nonnegative weights into a distribution.
///
/// Masses below [`SNAP_THRESHOLD`] after the first pass are set to zero and
/// the rest renormalized, so that support detection is deterministic.
pub fn normalize(weights: &[f64], symbols: Vec<Symbol>) -> Result<FiniteDist> {
    if weights.len() != symbols.len() {
        return Err(Error::InvalidDistribution(format!(
            "{} symbols but {} weights",
            symbols.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::EmptyMass);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyMass);
    }
    let mut probs: Vec<f64> = weights
        .iter()
        .map(|w| {
            let p = w / total;
            if p < SNAP_THRESHOLD {
                0.0
            } else {
                p
            }
        })
        .collect();
    let kept: f64 = probs.iter().sum();
    if kept != 1.0 {
        probs.iter_mut().for_each(|p| *p /= kept);
    }
    FiniteDist::new(symbols, probs)
}

/// Shannon entropy `-sum p ln p`.
pub fn entropy(p: &FiniteDist) -> ExtReal {
    let h: f64 = p.support().map(|(_, q)| -q * q.ln()).sum();
    ExtReal::clamped(h)
}

/// Relative entropy `H(p || q)` between distributions on the same symbol set.
pub fn kl_divergence(p: &FiniteDist, q: &FiniteDist) -> Result<ExtReal> {
    let q_index: HashMap<&Symbol, f64> = q.iter().collect();
    if p.len() != q.len() || p.symbols().iter().any(|s| !q_index.contains_key(s)) {
        return Err(Error::SymbolMismatch(
            "relative entropy needs both distributions on one symbol set".into(),
        ));
    }
    let mut total = 0.0;
    for (s, pv) in p.support() {
        let qv = q_index[s];
        if qv <= 0.0 {
            return Ok(ExtReal::Infinite);
        }
        total += pv * (pv / qv).ln();
    }
    Ok(ExtReal::clamped(total))
}
