//! Per-letter distortion measures over finite alphabets.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dist::{normalize, FiniteDist};
use crate::error::{Error, Result};
use crate::symbol::Symbol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistortionKind {
    Matrix,
    Hamming,
    SquaredError,
    Absolute,
}

impl DistortionKind {
    /// Evaluates a numeric rule on two reals. `Matrix` has no rule.
    pub fn apply(self, x: f64, y: f64) -> Option<f64> {
        match self {
            DistortionKind::Hamming => Some(if x == y { 0.0 } else { 1.0 }),
            DistortionKind::SquaredError => Some((x - y) * (x - y)),
            DistortionKind::Absolute => Some((x - y).abs()),
            DistortionKind::Matrix => None,
        }
    }
}

/// A distortion `rho: A x Â -> [0, inf)` materialized as a dense matrix.
///
/// Rule-based kinds are expanded on construction, so every model carries
/// both alphabets and a row-major cost table. A rule model may be built with
/// empty alphabets when it is only used through its [`DistortionKind`]
/// (the Gaussian family under squared error).
#[derive(Clone, Debug)]
pub struct DistortionModel {
    kind: DistortionKind,
    source: Vec<Symbol>,
    repro: Vec<Symbol>,
    costs: Vec<f64>,
    source_index: HashMap<Symbol, usize>,
    repro_index: HashMap<Symbol, usize>,
}

fn index_of(symbols: &[Symbol], what: &str) -> Result<HashMap<Symbol, usize>> {
    let mut index = HashMap::with_capacity(symbols.len());
    for (i, s) in symbols.iter().enumerate() {
        if index.insert(s.clone(), i).is_some() {
            return Err(Error::InvalidModel(format!("duplicate {what} symbol {s}")));
        }
    }
    Ok(index)
}

impl DistortionModel {
    fn build(
        kind: DistortionKind,
        source: Vec<Symbol>,
        repro: Vec<Symbol>,
        costs: Vec<f64>,
    ) -> Result<Self> {
        if costs.len() != source.len() * repro.len() {
            return Err(Error::InvalidModel(format!(
                "expected {}x{} entries, got {}",
                source.len(),
                repro.len(),
                costs.len()
            )));
        }
        if let Some(c) = costs.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::InvalidModel(format!("distortion {c} is not finite and >= 0")));
        }
        let source_index = index_of(&source, "source")?;
        let repro_index = index_of(&repro, "reproduction")?;
        Ok(DistortionModel { kind, source, repro, costs, source_index, repro_index })
    }

    /// Explicit matrix, one row per source symbol.
    pub fn matrix(source: Vec<Symbol>, repro: Vec<Symbol>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != source.len() || rows.iter().any(|r| r.len() != repro.len()) {
            return Err(Error::InvalidModel("matrix shape does not match alphabets".into()));
        }
        let costs = rows.into_iter().flatten().collect();
        Self::build(DistortionKind::Matrix, source, repro, costs)
    }

    pub fn hamming(source: Vec<Symbol>, repro: Vec<Symbol>) -> Result<Self> {
        let mut costs = Vec::with_capacity(source.len() * repro.len());
        for x in &source {
            for y in &repro {
                costs.push(if x == y { 0.0 } else { 1.0 });
            }
        }
        Self::build(DistortionKind::Hamming, source, repro, costs)
    }

    pub fn squared_error(source: Vec<Symbol>, repro: Vec<Symbol>) -> Result<Self> {
        Self::numeric_rule(DistortionKind::SquaredError, source, repro)
    }

    pub fn absolute(source: Vec<Symbol>, repro: Vec<Symbol>) -> Result<Self> {
        Self::numeric_rule(DistortionKind::Absolute, source, repro)
    }

    /// Builds a rule model by name: `hamming`, `squared`, `absolute`.
    pub fn from_rule(kind: DistortionKind, source: Vec<Symbol>, repro: Vec<Symbol>) -> Result<Self> {
        match kind {
            DistortionKind::Hamming => Self::hamming(source, repro),
            DistortionKind::Matrix => {
                Err(Error::InvalidModel("matrix models need explicit entries".into()))
            }
            rule => Self::numeric_rule(rule, source, repro),
        }
    }

    fn numeric_rule(kind: DistortionKind, source: Vec<Symbol>, repro: Vec<Symbol>) -> Result<Self> {
        let value = |s: &Symbol| {
            s.numeric()
                .ok_or_else(|| Error::InvalidModel(format!("symbol {s} is not numeric")))
        };
        let xs = source.iter().map(value).collect::<Result<Vec<_>>>()?;
        let ys = repro.iter().map(value).collect::<Result<Vec<_>>>()?;
        let mut costs = Vec::with_capacity(xs.len() * ys.len());
        for &x in &xs {
            for &y in &ys {
                costs.push(kind.apply(x, y).expect("numeric rule"));
            }
        }
        Self::build(kind, source, repro, costs)
    }

    pub(crate) fn from_parts(
        kind: DistortionKind,
        source: Vec<Symbol>,
        repro: Vec<Symbol>,
        costs: Vec<f64>,
    ) -> Result<Self> {
        Self::build(kind, source, repro, costs)
    }

    pub fn kind(&self) -> DistortionKind {
        self.kind
    }

    pub fn source_symbols(&self) -> &[Symbol] {
        &self.source
    }

    pub fn repro_symbols(&self) -> &[Symbol] {
        &self.repro
    }

    pub fn source_len(&self) -> usize {
        self.source.len()
    }

    pub fn repro_len(&self) -> usize {
        self.repro.len()
    }

    /// Distortion by alphabet indices.
    #[inline]
    pub fn cost(&self, x: usize, y: usize) -> f64 {
        self.costs[x * self.repro.len() + y]
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        let w = self.repro.len();
        &self.costs[x * w..(x + 1) * w]
    }

    /// Distortion by symbols.
    pub fn rho(&self, x: &Symbol, y: &Symbol) -> Result<f64> {
        let i = self.source_position(x)?;
        let j = self.repro_position(y)?;
        Ok(self.cost(i, j))
    }

    pub fn source_position(&self, x: &Symbol) -> Result<usize> {
        self.source_index
            .get(x)
            .copied()
            .ok_or_else(|| Error::SymbolMismatch(format!("{x} is not in the source alphabet")))
    }

    pub fn repro_position(&self, y: &Symbol) -> Result<usize> {
        self.repro_index
            .get(y)
            .copied()
            .ok_or_else(|| {
                Error::SymbolMismatch(format!("{y} is not in the reproduction alphabet"))
            })
    }

    /// Probability vector of `p` indexed by source position. Symbols of `p`
    /// with zero mass may lie outside the alphabet.
    pub fn align_source(&self, p: &FiniteDist) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.source.len()];
        for (s, w) in p.iter() {
            match self.source_index.get(s) {
                Some(&i) => out[i] += w,
                None if w == 0.0 => {}
                None => return Err(Error::SymbolMismatch(format!("{s} is not in the source alphabet"))),
            }
        }
        Ok(out)
    }

    /// Probability vector of `q` indexed by reproduction position.
    pub fn align_repro(&self, q: &FiniteDist) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.repro.len()];
        for (s, w) in q.iter() {
            match self.repro_index.get(s) {
                Some(&i) => out[i] += w,
                None if w == 0.0 => {}
                None => {
                    return Err(Error::SymbolMismatch(format!(
                        "{s} is not in the reproduction alphabet"
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Wraps a weight vector over the reproduction alphabet as a distribution.
    pub fn repro_dist(&self, weights: &[f64]) -> Result<FiniteDist> {
        normalize(weights, self.repro.clone())
    }

    /// Point mass on the reproduction symbol at `index`.
    pub fn repro_point_mass(&self, index: usize) -> FiniteDist {
        let mut w = vec![0.0; self.repro.len()];
        w[index] = 1.0;
        FiniteDist::new(self.repro.clone(), w).expect("point mass")
    }
}
