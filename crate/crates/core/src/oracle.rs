//! Brute-force reference computations by full enumeration of source blocks.
//!
//! Only usable when the block space is small; the guard is `2^20` blocks.

use std::sync::Arc;

use crate::chain::MonotoneChain;
use crate::error::{Error, Result};
use crate::sc::{Codeword, FrozenSpec};
use crate::source::SourceBlock;
use crate::tensor::{entropy_bits, ProbTensor, Symbol, TensorShape};
use crate::transform::{encode, TransformConvention};

/// Largest number of source blocks the oracle enumerates.
pub const ORACLE_GUARD: u128 = 1 << 20;

/// Relative tolerance for treating two block probabilities as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

struct Entry {
    /// Transformed symbols in chain order.
    seq: Vec<Symbol>,
    prob: f64,
    x: Vec<Symbol>,
}

/// Joint law of the transformed block, tabulated.
pub struct Oracle {
    shape: Arc<TensorShape>,
    chain: MonotoneChain,
    n: usize,
    /// Chain step of `(position, component)`.
    step_of: Vec<usize>,
    entries: Vec<Entry>,
}

impl Oracle {
    pub fn new(
        prior: &[ProbTensor],
        chain: &MonotoneChain,
        convention: TransformConvention,
    ) -> Result<Self> {
        crate::sc::check_inputs(prior, chain)?;
        let shape = prior[0].shape().clone();
        let spec = shape.spec().clone();
        let n = prior.len();
        let vol = spec.volume();
        let space = (vol as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if space > ORACLE_GUARD {
            return Err(Error::OracleGuard(space));
        }
        let m = spec.components();
        let mut step_of = vec![0; n * m];
        for t in 0..chain.len() {
            let (g, i) = chain.step(t);
            step_of[i * m + g] = t;
        }
        let mut entries = Vec::new();
        let mut digits = vec![0usize; n];
        'outer: loop {
            let prob: f64 = digits.iter().zip(prior).map(|(&k, p)| p.entries()[k]).product();
            if prob > 0.0 {
                let x: Vec<Symbol> = digits.iter().flat_map(|&k| spec.symbols_of(k)).collect();
                let block = SourceBlock::new(spec.clone(), n, x.clone())?;
                let u = encode(&block, convention)?;
                let seq = (0..chain.len())
                    .map(|t| {
                        let (g, i) = chain.step(t);
                        u.get(i, g)
                    })
                    .collect();
                entries.push(Entry { seq, prob, x });
            }
            for d in digits.iter_mut() {
                *d += 1;
                if *d < vol {
                    continue 'outer;
                }
                *d = 0;
            }
            break;
        }
        Ok(Self { shape, chain: chain.clone(), n, step_of, entries })
    }

    fn matches(e: &Entry, prefix: &[Symbol]) -> bool {
        e.seq[..prefix.len()] == *prefix
    }

    /// Law of the whole letter `U_{i_t}` given the first `t` chain values.
    pub fn conditional(&self, prefix: &[Symbol]) -> Result<ProbTensor> {
        let t = prefix.len();
        if t >= self.chain.len() {
            return Err(Error::Domain(format!("no step after a prefix of length {t}")));
        }
        let (_, i) = self.chain.step(t);
        let spec = self.shape.spec();
        let m = spec.components();
        let mut w = vec![0.0; spec.volume()];
        let mut rec = vec![0; m];
        for e in self.entries.iter().filter(|e| Self::matches(e, prefix)) {
            for (g, r) in rec.iter_mut().enumerate() {
                *r = e.seq[self.step_of[i * m + g]];
            }
            w[spec.flat_index(&rec)] += e.prob;
        }
        ProbTensor::from_weights(&self.shape, w)
    }

    /// Probability that the first chain values equal `prefix`.
    pub fn prefix_prob(&self, prefix: &[Symbol]) -> f64 {
        self.entries
            .iter()
            .filter(|e| Self::matches(e, prefix))
            .map(|e| e.prob)
            .sum()
    }

    /// Most probable source block consistent with the frozen values. Ties
    /// (within [`TIE_TOLERANCE`]) go to the lexicographically smallest
    /// transformed sequence in chain order.
    pub fn map(&self, frozen: &FrozenSpec, codeword: &Codeword) -> Result<SourceBlock> {
        let values = codeword.per_step(frozen);
        let consistent: Vec<&Entry> = self
            .entries
            .iter()
            .filter(|e| values.iter().zip(&e.seq).all(|(v, s)| v.is_none_or(|v| v == *s)))
            .collect();
        let best = consistent.iter().map(|e| e.prob).fold(0.0, f64::max);
        let winner = consistent
            .into_iter()
            .filter(|e| e.prob >= best * (1.0 - TIE_TOLERANCE))
            .min_by(|a, b| a.seq.cmp(&b.seq))
            .ok_or(Error::Contradiction)?;
        SourceBlock::new(self.shape.spec().clone(), self.n, winner.x.clone())
    }

    /// Exact `H(U^{gamma_t}_{i_t} | earlier chain values)` in bits for every
    /// step, from entropies of nested prefixes.
    pub fn step_entropies(&self) -> Vec<f64> {
        let mut order: Vec<&Entry> = self.entries.iter().collect();
        order.sort_by(|a, b| a.seq.cmp(&b.seq));
        let len = self.chain.len();
        // prefix_h[t] = entropy of the first t chain values
        let mut prefix_h = vec![0.0; len + 1];
        let mut group = Vec::new();
        for (t, h) in prefix_h.iter_mut().enumerate().skip(1) {
            group.clear();
            let mut acc = 0.0;
            for (k, e) in order.iter().enumerate() {
                if k > 0 && order[k - 1].seq[..t] != e.seq[..t] {
                    group.push(acc);
                    acc = 0.0;
                }
                acc += e.prob;
            }
            group.push(acc);
            *h = entropy_bits(&group);
        }
        (0..len).map(|t| prefix_h[t + 1] - prefix_h[t]).collect()
    }

    /// Transformed sequence in chain order and probability of every block
    /// with positive probability.
    pub fn table(&self) -> impl Iterator<Item = (&[Symbol], f64)> {
        self.entries.iter().map(|e| (e.seq.as_slice(), e.prob))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::JointSource;

    #[test]
    fn guard() {
        let src = JointSource::from_probabilities(vec![2, 2], vec![0.25; 4]).unwrap();
        let chain = MonotoneChain::corner(2, 16).unwrap();
        assert!(matches!(
            Oracle::new(&src.prior(16), &chain, Default::default()),
            Err(Error::OracleGuard(_))
        ));
    }

    #[test]
    fn uniform_prior_gives_uniform_conditionals() {
        let src = JointSource::from_probabilities(vec![2, 3], vec![1.0 / 6.0; 6]).unwrap();
        let chain = MonotoneChain::random(2, 4, 3).unwrap();
        let o = Oracle::new(&src.prior(4), &chain, Default::default()).unwrap();
        let c = o.conditional(&[]).unwrap();
        assert!(c.entries().iter().all(|p| (p - 1.0 / 6.0).abs() < 1e-12));
        assert!(o.step_entropies().iter().enumerate().all(|(t, h)| {
            let q = if chain.gamma()[t] == 0 { 2.0f64 } else { 3.0 };
            (h - q.log2()).abs() < 1e-9
        }));
    }

    #[test]
    fn first_letter_of_two_is_a_difference() {
        // u_1 = x_1 - x_2, so with i.i.d. letters the first conditional is
        // the pmf correlated with itself.
        let src = JointSource::from_probabilities(vec![2, 2], vec![0.1286, 0.0175, 0.0175, 0.8364])
            .unwrap();
        let chain = MonotoneChain::corner(2, 2).unwrap();
        let o = Oracle::new(&src.prior(2), &chain, Default::default()).unwrap();
        let c = o.conditional(&[]).unwrap();
        let p = src.pmf();
        let expect = p.dconv(p).unwrap();
        for (a, b) in c.entries().iter().zip(expect.entries()) {
            assert!((a - b).abs() < 1e-12);
        }
        let h: f64 = o.step_entropies().iter().sum();
        assert!((h - 2.0 * src.joint_entropy()).abs() < 1e-9);
    }

    #[test]
    fn map_with_everything_frozen_is_unique() {
        let src = JointSource::from_probabilities(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let chain = MonotoneChain::corner(2, 2).unwrap();
        let o = Oracle::new(&src.prior(2), &chain, Default::default()).unwrap();
        let x = SourceBlock::new(src.spec().clone(), 2, vec![0, 1, 1, 0]).unwrap();
        let u = encode(&x, Default::default()).unwrap();
        let f = FrozenSpec::all(4);
        assert_eq!(o.map(&f, &Codeword::from_u(&u, &chain, &f)).unwrap(), x);
        // nothing frozen: the per-letter mode repeated
        let mode = o.map(&FrozenSpec::none(4), &Codeword::new(vec![])).unwrap();
        assert_eq!(mode.symbols(), &[1, 1, 1, 1]);
    }
}
