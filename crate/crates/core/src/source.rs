//! Correlated discrete memoryless multi-terminal sources.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{AlphabetSpec, ProbTensor, Symbol, TensorShape};

/// Tolerance on the total mass of a loaded joint distribution.
pub const LOAD_TOLERANCE: f64 = 1e-6;

/// Single-letter joint distribution of `X^1, ..., X^M`.
#[derive(Debug, Clone)]
pub struct JointSource {
    pmf: ProbTensor,
}

impl JointSource {
    pub fn new(pmf: ProbTensor) -> Result<Self> {
        if pmf.spec().components() < 2 {
            return Err(Error::Domain("a joint source needs at least two terminals".into()));
        }
        Ok(Self { pmf })
    }

    /// Builds a source from raw probabilities, accepting totals within
    /// [`LOAD_TOLERANCE`] of one.
    pub fn from_probabilities(sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let spec = AlphabetSpec::new(sizes)?;
        if probs.len() != spec.volume() {
            return Err(Error::Shape(format!(
                "expected {} probabilities, got {}",
                spec.volume(),
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| p.is_nan() || **p < 0.0) {
            return Err(Error::Domain(format!("negative probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > LOAD_TOLERANCE {
            return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
        }
        let shape = TensorShape::new(spec);
        Self::new(ProbTensor::from_weights(&shape, probs)?)
    }

    /// Parses the joint-distribution text format: the terminal count, then
    /// the alphabet sizes, then the probabilities in row-major order separated
    /// by any whitespace. Lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let m: usize = lines
            .next()
            .ok_or_else(|| Error::Parse("missing terminal count".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("terminal count: {e}")))?;
        let sizes: Vec<usize> = lines
            .next()
            .ok_or_else(|| Error::Parse("missing alphabet sizes".into()))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|e| Error::Parse(format!("alphabet size {s:?}: {e}"))))
            .collect::<Result<_>>()?;
        if sizes.len() != m {
            return Err(Error::Parse(format!(
                "declared {m} terminals but listed {} alphabet sizes",
                sizes.len()
            )));
        }
        let probs: Vec<f64> = lines
            .flat_map(str::split_whitespace)
            .map(|l| l.parse().map_err(|e| Error::Parse(format!("probability {l:?}: {e}"))))
            .collect::<Result<_>>()?;
        Self::from_probabilities(sizes, probs)
    }

    pub fn to_text(&self) -> String {
        let spec = self.spec();
        let mut out = format!("{}\n", spec.components());
        let sizes: Vec<String> = spec.sizes().iter().map(|q| q.to_string()).collect();
        out.push_str(&sizes.join(" "));
        out.push('\n');
        for p in self.pmf.entries() {
            out.push_str(&format!("{p}\n"));
        }
        out
    }

    pub fn pmf(&self) -> &ProbTensor {
        &self.pmf
    }

    pub fn shape(&self) -> &Arc<TensorShape> {
        self.pmf.shape()
    }

    pub fn spec(&self) -> &AlphabetSpec {
        self.pmf.spec()
    }

    pub fn terminals(&self) -> usize {
        self.spec().components()
    }

    /// The pmf repeated on each of `n` positions: the root prior of a graph
    /// for `n` i.i.d. letters.
    pub fn prior(&self, n: usize) -> Vec<ProbTensor> {
        vec![self.pmf.clone(); n]
    }

    /// `H(X^{1:M})` in bits.
    pub fn joint_entropy(&self) -> f64 {
        self.pmf.entropy_bits()
    }

    /// Draws `n` i.i.d. letters by inverse-CDF sampling over the row-major
    /// entry order.
    pub fn sample_block(&self, n: usize, seed: u64) -> Result<SourceBlock> {
        check_block_length(n)?;
        let spec = self.spec();
        let mut cdf = Vec::with_capacity(spec.volume());
        let mut acc = 0.0;
        for &p in self.pmf.entries() {
            acc += p;
            cdf.push(acc);
        }
        let last_positive = self
            .pmf
            .entries()
            .iter()
            .rposition(|&p| p > 0.0)
            .expect("normalized pmf has support");
        let mut rng = SplitMix64::new(seed);
        let mut symbols = Vec::with_capacity(n * spec.components());
        for _ in 0..n {
            let u = rng.next_f64();
            let k = cdf.iter().position(|&c| u < c).unwrap_or(last_positive);
            symbols.extend(spec.symbols_of(k));
        }
        SourceBlock::new(spec.clone(), n, symbols)
    }
}

pub(crate) fn check_block_length(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::BlockLength(n));
    }
    Ok(())
}

/// `N` records of `M` symbols, stored record-major.
///
/// Used both for source blocks `x` and transformed blocks `u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceBlock {
    spec: AlphabetSpec,
    n: usize,
    symbols: Vec<Symbol>,
}

impl SourceBlock {
    pub fn new(spec: AlphabetSpec, n: usize, symbols: Vec<Symbol>) -> Result<Self> {
        check_block_length(n)?;
        let m = spec.components();
        if symbols.len() != n * m {
            return Err(Error::Shape(format!(
                "block of {n} records with {m} terminals needs {} symbols, got {}",
                n * m,
                symbols.len()
            )));
        }
        for (k, &s) in symbols.iter().enumerate() {
            if s as usize >= spec.size(k % m) {
                return Err(Error::Domain(format!(
                    "symbol {s} at record {} terminal {} exceeds alphabet",
                    k / m,
                    k % m
                )));
            }
        }
        Ok(Self { spec, n, symbols })
    }

    pub fn zeros(spec: AlphabetSpec, n: usize) -> Result<Self> {
        let len = n * spec.components();
        Self::new(spec, n, vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spec(&self) -> &AlphabetSpec {
        &self.spec
    }

    pub fn record(&self, i: usize) -> &[Symbol] {
        let m = self.spec.components();
        &self.symbols[i * m..(i + 1) * m]
    }

    pub fn get(&self, i: usize, terminal: usize) -> Symbol {
        self.symbols[i * self.spec.components() + terminal]
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub(crate) fn symbols_mut(&mut self) -> &mut [Symbol] {
        &mut self.symbols
    }

    pub(crate) fn set(&mut self, i: usize, terminal: usize, symbol: Symbol) {
        let m = self.spec.components();
        self.symbols[i * m + terminal] = symbol;
    }

    /// Parses one record per line, `M` whitespace-separated symbols each.
    pub fn parse(spec: &AlphabetSpec, text: &str) -> Result<Self> {
        let mut symbols = Vec::new();
        let mut n = 0;
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let rec: Vec<Symbol> = line
                .split_whitespace()
                .map(|s| s.parse().map_err(|e| Error::Parse(format!("symbol {s:?}: {e}"))))
                .collect::<Result<_>>()?;
            if rec.len() != spec.components() {
                return Err(Error::Parse(format!(
                    "record {n} has {} symbols, expected {}",
                    rec.len(),
                    spec.components()
                )));
            }
            symbols.extend(rec);
            n += 1;
        }
        Self::new(spec.clone(), n, symbols)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let rec: Vec<String> = self.record(i).iter().map(|s| s.to_string()).collect();
            out.push_str(&rec.join(" "));
            out.push('\n');
        }
        out
    }
}
