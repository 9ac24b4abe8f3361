//! Data sources and alphabet reductions.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`), a counter-based stream
//! cipher whose output is identical on every platform. A run with seed `s`
//! uses the generator `ChaCha20Rng::seed_from_u64(s)`; replica `r` of an
//! experiment additionally selects stream `r` via `set_stream(r)`, so
//! replicas never share keystream and do not depend on scheduling order.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::dist::FiniteDist;
use crate::distortion::{DistortionKind, DistortionModel};
use crate::error::{Error, Result};
use crate::estimators::{plugin_rd_with, EstimateReport, Sample};
use crate::symbol::{int_alphabet, Symbol};
use crate::ba::{BaConfig, DEFAULT_TOL_D};

/// Limit on materialized block symbols (observed source blocks, and
/// reproduction tuples).
pub const BLOCK_STATE_LIMIT: usize = 1_000_000;
const MAX_BLOCK_CELLS: usize = 10_000_000;

/// Generator for `(seed, replica)`.
pub fn rng(seed: u64, replica: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(replica);
    r
}

/// How a file's lines are read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueFormat {
    #[default]
    Symbols,
    Reals,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceKind {
    Iid {
        dist: FiniteDist,
    },
    /// `transition[i][j] = P(X_{k+1} = states[j] | X_k = states[i])`.
    Markov {
        states: Vec<Symbol>,
        transition: Vec<Vec<f64>>,
        initial: Vec<f64>,
    },
    /// `X_{k+1} = phi X_k + e_k`, `e_k ~ N(0, sigma^2)`. Without `x0` the
    /// chain starts from its stationary law `N(0, sigma^2 / (1 - phi^2))`.
    GaussianAr1 {
        phi: f64,
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x0: Option<f64>,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        format: ValueFormat,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    #[serde(flatten)]
    pub kind: SourceKind,
    #[serde(default)]
    pub seed: u64,
}

impl SourceSpec {
    pub fn iid(dist: FiniteDist, seed: u64) -> Self {
        SourceSpec { kind: SourceKind::Iid { dist }, seed }
    }

    pub fn markov(states: Vec<Symbol>, transition: Vec<Vec<f64>>, initial: Vec<f64>, seed: u64) -> Result<Self> {
        let spec = SourceSpec { kind: SourceKind::Markov { states, transition, initial }, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ar1(phi: f64, sigma: f64, x0: Option<f64>, seed: u64) -> Result<Self> {
        let spec = SourceSpec { kind: SourceKind::GaussianAr1 { phi, sigma, x0 }, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            SourceKind::Iid { .. } | SourceKind::File { .. } => Ok(()),
            SourceKind::Markov { states, transition, initial } => {
                validate_markov(states, transition, initial)
            }
            SourceKind::GaussianAr1 { phi, sigma, x0 } => {
                if phi.is_nan() || phi.abs() >= 1.0 {
                    return Err(Error::InvalidSource(format!("ar1 needs |phi| < 1, got {phi}")));
                }
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidSource(format!("ar1 noise sigma must be > 0, got {sigma}")));
                }
                if x0.is_some_and(|v| !v.is_finite()) {
                    return Err(Error::InvalidSource("ar1 x0 must be finite".into()));
                }
                Ok(())
            }
        }
    }

    /// Law of `X_1` in the stationary regime, where the kind has one.
    pub fn stationary(&self) -> Result<Option<FiniteDist>> {
        Ok(match &self.kind {
            SourceKind::Iid { dist } => Some(dist.clone()),
            SourceKind::Markov { states, transition, .. } => {
                Some(FiniteDist::new(states.clone(), stationary_distribution(transition)?)?)
            }
            _ => None,
        })
    }
}

fn validate_markov(states: &[Symbol], transition: &[Vec<f64>], initial: &[f64]) -> Result<()> {
    let k = states.len();
    if k == 0 || transition.len() != k || initial.len() != k {
        return Err(Error::InvalidSource("markov states, transition and initial sizes differ".into()));
    }
    FiniteDist::new(states.to_vec(), initial.to_vec())
        .map_err(|e| Error::InvalidSource(format!("initial distribution: {e}")))?;
    for (i, row) in transition.iter().enumerate() {
        if row.len() != k {
            return Err(Error::InvalidSource(format!("transition row {i} has {} entries", row.len())));
        }
        FiniteDist::new(states.to_vec(), row.clone())
            .map_err(|e| Error::InvalidSource(format!("transition row {i}: {e}")))?;
    }
    check_ergodic(transition)
}

/// Irreducibility (strong connectivity) and aperiodicity (gcd of cycle
/// lengths through the BFS levels is 1).
fn check_ergodic(transition: &[Vec<f64>]) -> Result<()> {
    let k = transition.len();
    let edges = |i: usize| (0..k).filter(move |&j| transition[i][j] > 0.0);
    let reach = |forward: bool| {
        let mut seen = vec![false; k];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..k {
                let e = if forward { transition[i][j] } else { transition[j][i] };
                if e > 0.0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    if !reach(true) || !reach(false) {
        return Err(Error::InvalidSource("markov chain is not irreducible".into()));
    }
    let mut level = vec![usize::MAX; k];
    level[0] = 0;
    let mut queue = VecDeque::from([0]);
    while let Some(i) = queue.pop_front() {
        for j in edges(i) {
            if level[j] == usize::MAX {
                level[j] = level[i] + 1;
                queue.push_back(j);
            }
        }
    }
    let mut period = 0usize;
    for i in 0..k {
        for j in edges(i) {
            let diff = (level[i] + 1).abs_diff(level[j]);
            period = gcd(period, diff);
        }
    }
    if period != 1 {
        return Err(Error::InvalidSource(format!("markov chain is periodic (period {period})")));
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Stationary law of an irreducible chain, by power iteration on the lazy
/// kernel `(I + T) / 2` (same fixed point, no oscillation).
pub fn stationary_distribution(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = transition.len();
    if k == 0 {
        return Err(Error::InvalidSource("empty transition matrix".into()));
    }
    let mut pi = vec![1.0 / k as f64; k];
    let mut next = vec![0.0; k];
    for _ in 0..1_000_000 {
        next.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..k {
            for j in 0..k {
                next[j] += 0.5 * pi[i] * transition[i][j];
            }
            next[i] += 0.5 * pi[i];
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let change: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if change < 1e-15 {
            break;
        }
    }
    Ok(pi)
}

/// Reads one value per line, skipping blank lines.
pub fn read_sample(path: &Path, format: ValueFormat) -> Result<Sample> {
    let text = std::fs::read_to_string(path)?;
    parse_sample(&text, format)
}

pub fn parse_sample(text: &str, format: ValueFormat) -> Result<Sample> {
    let lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    match format {
        ValueFormat::Symbols => Sample::discrete(lines.map(Symbol::parse).collect()),
        ValueFormat::Reals => {
            let values = lines
                .enumerate()
                .map(|(i, l)| {
                    l.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("value {} ({l:?}) is not a number", i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            Sample::real(values)
        }
    }
}

/// `n` values from the source, using the source seed on stream 0.
pub fn generate(spec: &SourceSpec, n: usize) -> Result<Sample> {
    generate_replica(spec, n, 0)
}

/// `n` values from the source on stream `replica`.
pub fn generate_replica(spec: &SourceSpec, n: usize, replica: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    spec.validate()?;
    let mut rng = rng(spec.seed, replica);
    match &spec.kind {
        SourceKind::Iid { dist } => {
            let index = weighted(dist.probs())?;
            let values = (0..n).map(|_| dist.symbols()[index.sample(&mut rng)].clone()).collect();
            Sample::discrete(values)
        }
        SourceKind::Markov { states, transition, initial } => {
            let rows = transition.iter().map(|r| weighted(r)).collect::<Result<Vec<_>>>()?;
            let mut x = weighted(initial)?.sample(&mut rng);
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                values.push(states[x].clone());
                x = rows[x].sample(&mut rng);
            }
            Sample::discrete(values)
        }
        SourceKind::GaussianAr1 { phi, sigma, x0 } => {
            let noise = normal(*sigma)?;
            let mut x = match x0 {
                Some(v) => *v,
                None => normal(sigma / (1.0 - phi * phi).sqrt())?.sample(&mut rng),
            };
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                values.push(x);
                x = phi * x + noise.sample(&mut rng);
            }
            Sample::real(values)
        }
        SourceKind::File { path, format } => {
            let sample = read_sample(path, *format)?;
            if sample.len() < n {
                return Err(Error::InvalidSource(format!(
                    "{} holds {} values, {n} requested",
                    path.display(),
                    sample.len()
                )));
            }
            Ok(match sample {
                Sample::Discrete(mut v) => {
                    v.truncate(n);
                    Sample::Discrete(v)
                }
                Sample::Real(mut v) => {
                    v.truncate(n);
                    Sample::Real(v)
                }
            })
        }
    }
}

fn weighted(probs: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(probs).map_err(|e| Error::InvalidSource(e.to_string()))
}

fn normal(std: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, std).map_err(|e| Error::InvalidSource(e.to_string()))
}

/// Overlapping `m`-tuples `Z_k = (X_k, ..., X_{k+m-1})`, `k = 1..n-m+1`.
pub fn sliding_blocks(sample: &Sample, m: usize) -> Result<Sample> {
    let values = sample.symbols()?;
    if m == 0 {
        return Err(Error::InvalidArgument("block length must be >= 1".into()));
    }
    if m > values.len() {
        return Err(Error::InvalidArgument(format!(
            "block length {m} exceeds sample length {}",
            values.len()
        )));
    }
    Sample::discrete(values.windows(m).map(|w| Symbol::Block(w.to_vec())).collect())
}

/// `rho_m(x, y) = (1/m) sum_k rho(x_k, y_k)` with the observed blocks as the
/// source alphabet (ordered lexicographically by base position) and all of
/// `Ahat^m` as the reproduction alphabet.
pub fn block_model(blocks: &Sample, m: usize, base: &DistortionModel) -> Result<DistortionModel> {
    let values = blocks.symbols()?;
    let mut observed: BTreeMap<Vec<usize>, Symbol> = BTreeMap::new();
    for b in values {
        let parts = match b {
            Symbol::Block(parts) if parts.len() == m => parts,
            other => return Err(Error::InvalidArgument(format!("{other} is not a block of length {m}"))),
        };
        let key = parts.iter().map(|s| base.source_position(s)).collect::<Result<Vec<_>>>()?;
        observed.entry(key).or_insert_with(|| b.clone());
        if observed.len() > BLOCK_STATE_LIMIT {
            return Err(Error::BlockAlphabet(observed.len(), BLOCK_STATE_LIMIT));
        }
    }
    let ny = base.repro_len();
    let tuples = ny
        .checked_pow(m as u32)
        .filter(|&t| t <= BLOCK_STATE_LIMIT)
        .ok_or(Error::BlockAlphabet(usize::MAX, BLOCK_STATE_LIMIT))?;
    if observed.len().saturating_mul(tuples) > MAX_BLOCK_CELLS {
        return Err(Error::BlockAlphabet(observed.len().saturating_mul(tuples), MAX_BLOCK_CELLS));
    }
    let repro_index: Vec<Vec<usize>> = (0..tuples)
        .map(|mut t| {
            let mut idx = vec![0; m];
            for k in (0..m).rev() {
                idx[k] = t % ny;
                t /= ny;
            }
            idx
        })
        .collect();
    let repro = repro_index
        .iter()
        .map(|idx| Symbol::Block(idx.iter().map(|&j| base.repro_symbols()[j].clone()).collect()))
        .collect();
    let mut costs = Vec::with_capacity(observed.len() * tuples);
    for key in observed.keys() {
        for idx in &repro_index {
            let sum: f64 = key.iter().zip(idx).map(|(&x, &y)| base.cost(x, y)).sum();
            costs.push(sum / m as f64);
        }
    }
    let source = observed.into_values().collect();
    DistortionModel::from_parts(DistortionKind::Matrix, source, repro, costs)
}

/// `m`-th order plug-in: `R1` of the block process under `rho_m`, over `m`.
pub fn mth_order_estimate(sample: &Sample, m: usize, base: &DistortionModel, d: f64) -> Result<EstimateReport> {
    let blocks = sliding_blocks(sample, m)?;
    let model = block_model(&blocks, m, base)?;
    let mut report = plugin_rd_with(&blocks, &model, d, DEFAULT_TOL_D, &BaConfig::default())?;
    report.estimate = report.estimate.scale(1.0 / m as f64);
    Ok(report)
}

/// Uniform grid of `k >= 2` points on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, k: usize) -> Result<Vec<f64>> {
    if k < 2 || !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::InvalidArgument(format!("bad grid [{lo}, {hi}] with {k} points")));
    }
    let step = (hi - lo) / (k - 1) as f64;
    Ok((0..k).map(|i| if i == k - 1 { hi } else { lo + step * i as f64 }).collect())
}

/// Maps each value to its nearest grid point (ties to the lower index) and
/// builds the induced model on grid indices from `kind` applied to grid
/// values.
pub fn quantize(sample: &Sample, grid: &[f64], kind: DistortionKind) -> Result<(Sample, DistortionModel)> {
    let values = match sample {
        Sample::Real(v) => v,
        Sample::Discrete(_) => return Err(Error::InvalidArgument("quantize needs a real-valued sample".into())),
    };
    if grid.len() < 2 {
        return Err(Error::InvalidArgument(format!("grid needs >= 2 points, got {}", grid.len())));
    }
    if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("grid must be finite and strictly increasing".into()));
    }
    let symbols = values
        .iter()
        .map(|&v| {
            let i = grid.partition_point(|&g| g < v);
            let idx = if i == 0 {
                0
            } else if i == grid.len() {
                grid.len() - 1
            } else if v - grid[i - 1] <= grid[i] - v {
                i - 1
            } else {
                i
            };
            Symbol::Int(idx as i64)
        })
        .collect();
    let alphabet = int_alphabet(0, grid.len() as i64 - 1);
    let mut costs = Vec::with_capacity(grid.len() * grid.len());
    for &x in grid {
        for &y in grid {
            let c = kind
                .apply(x, y)
                .ok_or_else(|| Error::InvalidModel("matrix distortion cannot be induced from values".into()))?;
            costs.push(c);
        }
    }
    let model = DistortionModel::from_parts(kind, alphabet.clone(), alphabet, costs)?;
    Ok((Sample::discrete(symbols)?, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::entropy;
    use crate::estimators::{empirical, plugin_rd};

    fn count(sample: &Sample, s: &Symbol) -> usize {
        sample.symbols().unwrap().iter().filter(|v| *v == s).count()
    }

    #[test]
    fn point_mass_source_is_constant() {
        let spec = SourceSpec::iid(FiniteDist::point_mass(Symbol::Int(4)), 9);
        let s = generate(&spec, 5).unwrap();
        assert_eq!(s, Sample::Discrete(vec![Symbol::Int(4); 5]));
    }

    #[test]
    fn generation_is_deterministic_per_seed_and_replica() {
        let spec = SourceSpec::iid(FiniteDist::bernoulli(0.3).unwrap(), 7);
        assert_eq!(generate(&spec, 200).unwrap(), generate(&spec, 200).unwrap());
        assert_ne!(generate_replica(&spec, 200, 0).unwrap(), generate_replica(&spec, 200, 1).unwrap());
    }

    #[test]
    fn bernoulli_frequency() {
        let spec = SourceSpec::iid(FiniteDist::bernoulli(0.3).unwrap(), 2024);
        let s = generate(&spec, 1_000_000).unwrap();
        let f = count(&s, &Symbol::Int(1)) as f64 / 1e6;
        assert!((f - 0.3).abs() < 0.002, "{f}");
    }

    #[test]
    fn periodic_chain_rejected() {
        let r = SourceSpec::markov(int_alphabet(0, 1), vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![1.0, 0.0], 0);
        assert!(matches!(r, Err(Error::InvalidSource(_))));
        let reducible =
            SourceSpec::markov(int_alphabet(0, 1), vec![vec![1.0, 0.0], vec![0.5, 0.5]], vec![1.0, 0.0], 0);
        assert!(reducible.is_err());
        let three_cycle = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        assert!(SourceSpec::markov(int_alphabet(0, 2), three_cycle, vec![1.0, 0.0, 0.0], 0).is_err());
    }

    #[test]
    fn markov_frequencies_match_stationary_law() {
        let t = vec![vec![0.9, 0.1, 0.0], vec![0.2, 0.5, 0.3], vec![0.3, 0.0, 0.7]];
        let spec = SourceSpec::markov(int_alphabet(0, 2), t.clone(), vec![0.0, 0.0, 1.0], 11).unwrap();
        let pi = stationary_distribution(&t).unwrap();
        // Balance check: pi T = pi.
        for j in 0..3 {
            let v: f64 = (0..3).map(|i| pi[i] * t[i][j]).sum();
            assert!((v - pi[j]).abs() < 1e-12);
        }
        let s = generate(&spec, 1_000_000).unwrap();
        for (j, p) in pi.iter().enumerate() {
            let f = count(&s, &Symbol::Int(j as i64)) as f64 / 1e6;
            assert!((f - p).abs() < 0.01, "state {j}: {f} vs {p}");
        }
    }

    #[test]
    fn ar1_validation_and_variance() {
        assert!(SourceSpec::ar1(1.0, 1.0, None, 0).is_err());
        assert!(SourceSpec::ar1(0.5, 0.0, None, 0).is_err());
        let spec = SourceSpec::ar1(0.5, 1.0, None, 3).unwrap();
        let s = generate(&spec, 200_000).unwrap();
        let m = s.moments().unwrap();
        assert!((m.var - 4.0 / 3.0).abs() < 0.03, "{}", m.var);
        let fixed = SourceSpec::ar1(0.5, 1.0, Some(10.0), 3).unwrap();
        let Sample::Real(v) = generate(&fixed, 3).unwrap() else { panic!() };
        assert_eq!(v[0], 10.0);
    }

    #[test]
    fn sliding_block_examples() {
        let s = Sample::discrete(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert_eq!(
            sliding_blocks(&s, 1).unwrap().symbols().unwrap(),
            &[Symbol::Block(vec!["a".into()]), Symbol::Block(vec!["b".into()]), Symbol::Block(vec!["c".into()])]
        );
        let b2 = sliding_blocks(&s, 2).unwrap();
        assert_eq!(
            b2.symbols().unwrap(),
            &[Symbol::Block(vec!["a".into(), "b".into()]), Symbol::Block(vec!["b".into(), "c".into()])]
        );
        assert!(sliding_blocks(&s, 4).is_err());

        let abc: Vec<Symbol> = vec!["a".into(), "b".into(), "c".into()];
        let base = DistortionModel::hamming(abc.clone(), abc).unwrap();
        let model = block_model(&b2, 2, &base).unwrap();
        let x = Symbol::Block(vec!["a".into(), "b".into()]);
        let y = Symbol::Block(vec!["a".into(), "c".into()]);
        assert_eq!(model.rho(&x, &y).unwrap(), 0.5);
    }

    #[test]
    fn first_order_blocks_reproduce_plugin() {
        let spec = SourceSpec::iid(FiniteDist::new(int_alphabet(0, 2), vec![0.5, 0.3, 0.2]).unwrap(), 1);
        let s = generate(&spec, 500).unwrap();
        let a = int_alphabet(0, 2);
        let base = DistortionModel::absolute(a.clone(), a).unwrap();
        for d in [0.0, 0.2, 0.45] {
            let direct = plugin_rd(&s, &base, d).unwrap().estimate;
            let blocks = mth_order_estimate(&s, 1, &base, d).unwrap().estimate;
            assert_eq!(direct.to_f64().to_bits(), blocks.to_f64().to_bits());
        }
    }

    #[test]
    fn second_order_at_zero_is_half_pair_entropy() {
        let s = Sample::discrete([0, 1, 1, 0, 1, 0, 0, 0, 1, 1].map(Symbol::Int).to_vec()).unwrap();
        let a = int_alphabet(0, 1);
        let base = DistortionModel::hamming(a.clone(), a).unwrap();
        let r = mth_order_estimate(&s, 2, &base, 0.0).unwrap().estimate.finite().unwrap();
        let h = entropy(&empirical(&sliding_blocks(&s, 2).unwrap()).unwrap()).finite().unwrap();
        assert!((r - h / 2.0).abs() < 1e-8);
    }

    #[test]
    fn quantize_rules() {
        let grid = [0.0, 1.0, 2.0];
        let s = Sample::real(vec![1.0, 0.5, 1.6, -3.0, 9.0]).unwrap();
        let (q, model) = quantize(&s, &grid, DistortionKind::SquaredError).unwrap();
        assert_eq!(q.symbols().unwrap(), &[1, 0, 2, 0, 2].map(Symbol::Int));
        assert_eq!(model.rho(&Symbol::Int(0), &Symbol::Int(2)).unwrap(), 4.0);
        assert!(quantize(&s, &[], DistortionKind::SquaredError).is_err());
        assert!(quantize(&s, &[0.0], DistortionKind::SquaredError).is_err());
    }

    #[test]
    fn parse_formats() {
        let s = parse_sample("a\nb\n\n3\n", ValueFormat::Symbols).unwrap();
        assert_eq!(s.symbols().unwrap(), &["a".into(), "b".into(), Symbol::Int(3)]);
        assert!(parse_sample("1.5\nx\n", ValueFormat::Reals).is_err());
        assert_eq!(parse_sample("1.5\n-2\n", ValueFormat::Reals).unwrap(), Sample::Real(vec![1.5, -2.0]));
    }
}
