//! Monte Carlo code construction: per-step entropy estimates from
//! genie-aided decoding, chain rates, and frozen-set selection.

use crate::chain::MonotoneChain;
use crate::error::{Error, Result};
use crate::sc::{genie_decode_with, FrozenSpec};
use crate::source::JointSource;
use crate::tensor::{entropy_bits, marginal_into};
use crate::transform::{encode, TransformConvention};

/// Default number of sampled blocks.
pub const DEFAULT_SAMPLES: usize = 100;

/// Samples reduced per batch, bounding memory at `BATCH * M * N` values.
const BATCH: usize = 64;

/// Step ranking used when choosing the frozen set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Statistic {
    /// Estimated conditional entropy.
    #[default]
    Entropy,
    /// Estimated error probability of the genie-aided decision,
    /// `1 - max_s p(s | prefix)`.
    ErrorProbability,
}

/// Per-step Monte Carlo averages, in chain order.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStatistics {
    /// Conditional entropy estimates in bits.
    pub entropy: Vec<f64>,
    pub error_probability: Vec<f64>,
}

impl StepStatistics {
    pub fn ranking(&self, statistic: Statistic) -> &[f64] {
        match statistic {
            Statistic::Entropy => &self.entropy,
            Statistic::ErrorProbability => &self.error_probability,
        }
    }
}

/// Samples `samples` blocks (block `k` from seed `seed + k`), runs a
/// genie-aided decode on each, and averages per step the entropy and the
/// decision error probability of the decided component's conditional.
///
/// Samples are decoded in parallel when the `parallel` feature is enabled;
/// sums are taken in sample order, so the result does not depend on the
/// thread count.
pub fn estimate_step_statistics(
    source: &JointSource,
    chain: &MonotoneChain,
    samples: usize,
    seed: u64,
    convention: TransformConvention,
) -> Result<StepStatistics> {
    if samples == 0 {
        return Err(Error::Domain("at least one sample is needed".into()));
    }
    if source.terminals() != chain.terminals() {
        return Err(Error::Shape(format!(
            "source has {} terminals, chain has {}",
            source.terminals(),
            chain.terminals()
        )));
    }
    let n = chain.block_len();
    let prior = source.prior(n);
    let shape = source.shape().clone();
    let qmax = *source.spec().sizes().iter().max().unwrap_or(&1);
    let len = chain.len();

    let one = |k: usize| -> Result<Vec<f64>> {
        let x = source.sample_block(n, seed.wrapping_add(k as u64))?;
        let u = encode(&x, convention)?;
        let mut out = vec![0.0; 2 * len];
        let mut marg = vec![0.0; qmax];
        genie_decode_with(&prior, chain, &u, convention, |t, joint| {
            let g = chain.gamma()[t];
            let m = &mut marg[..shape.spec().size(g)];
            marginal_into(&shape, joint, g, m);
            out[t] = entropy_bits(m);
            out[len + t] = 1.0 - m.iter().copied().fold(0.0, f64::max);
        })?;
        Ok(out)
    };

    let mut sum = vec![0.0; 2 * len];
    let mut start = 0;
    while start < samples {
        let end = (start + BATCH).min(samples);
        for part in map_samples(start..end, &one)? {
            sum.iter_mut().zip(&part).for_each(|(s, v)| *s += v);
        }
        start = end;
    }
    let scale = 1.0 / samples as f64;
    sum.iter_mut().for_each(|s| *s *= scale);
    let error_probability = sum.split_off(len);
    Ok(StepStatistics { entropy: sum, error_probability })
}

/// Entropy estimates only; see [`estimate_step_statistics`].
pub fn estimate_step_entropies(
    source: &JointSource,
    chain: &MonotoneChain,
    samples: usize,
    seed: u64,
    convention: TransformConvention,
) -> Result<Vec<f64>> {
    Ok(estimate_step_statistics(source, chain, samples, seed, convention)?.entropy)
}

#[cfg(feature = "parallel")]
fn map_samples<F>(range: std::ops::Range<usize>, f: &F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    use rayon::prelude::*;
    range.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_samples<F>(range: std::ops::Range<usize>, f: &F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize) -> Result<Vec<f64>>,
{
    range.map(f).collect()
}

/// Per-terminal rates `R_g = (1/N) * sum of the entropies of g's steps`,
/// in bits per source letter.
pub fn chain_rates(entropies: &[f64], chain: &MonotoneChain) -> Result<Vec<f64>> {
    if entropies.len() != chain.len() {
        return Err(Error::Shape(format!(
            "{} step entropies for a chain of {} steps",
            entropies.len(),
            chain.len()
        )));
    }
    let mut rates = vec![0.0; chain.terminals()];
    for (&g, &h) in chain.gamma().iter().zip(entropies) {
        rates[g] += h;
    }
    let n = chain.block_len() as f64;
    rates.iter_mut().for_each(|r| *r /= n);
    Ok(rates)
}

/// Rescales `rates` to sum to `target`, keeping their ratio. All-zero rates
/// are replaced by an equal split. Each result is capped at `log2 q_g`.
pub fn scale_rates(rates: &[f64], target: f64, sizes: &[usize]) -> Result<Vec<f64>> {
    if target.is_nan() || target < 0.0 {
        return Err(Error::Domain(format!("target sum rate {target} is negative")));
    }
    let total: f64 = rates.iter().sum();
    let scaled: Vec<f64> = if total > 0.0 {
        rates.iter().map(|r| r * target / total).collect()
    } else {
        vec![target / rates.len() as f64; rates.len()]
    };
    Ok(scaled
        .iter()
        .zip(sizes)
        .map(|(&r, &q)| r.min((q as f64).log2()))
        .collect())
}

/// Slack allowed when comparing a rate with its bound and when rounding a
/// symbol count up.
const RATE_SLACK: f64 = 1e-9;

/// Symbols terminal `g` transmits at rate `rate`: `ceil(N * rate / log2 q)`,
/// ignoring overshoot below `1e-9` symbols.
pub fn frozen_count(n: usize, rate: f64, q: usize) -> usize {
    let bits = (q as f64).log2();
    if bits == 0.0 {
        return 0;
    }
    let exact = n as f64 * rate / bits;
    ((exact - RATE_SLACK).ceil().max(0.0) as usize).min(n)
}

/// Freezes, for each terminal independently, its [`frozen_count`] steps
/// with the largest `ranking` value; ties go to the earlier step.
pub fn select_frozen(
    ranking: &[f64],
    chain: &MonotoneChain,
    rates: &[f64],
    sizes: &[usize],
) -> Result<FrozenSpec> {
    if ranking.len() != chain.len() {
        return Err(Error::Shape(format!(
            "{} step values for a chain of {} steps",
            ranking.len(),
            chain.len()
        )));
    }
    if rates.len() != chain.terminals() || sizes.len() != chain.terminals() {
        return Err(Error::Shape(format!(
            "{} rates and {} alphabet sizes for {} terminals",
            rates.len(),
            sizes.len(),
            chain.terminals()
        )));
    }
    let mut mask = vec![false; chain.len()];
    for (g, (&rate, &q)) in rates.iter().zip(sizes).enumerate() {
        let bound = (q as f64).log2();
        if !(rate >= -RATE_SLACK && rate <= bound + RATE_SLACK) {
            return Err(Error::Domain(format!(
                "rate {rate} of terminal {} outside [0, {bound}]",
                g + 1
            )));
        }
        let mut steps: Vec<usize> = chain.steps_of(g).collect();
        steps.sort_by(|&a, &b| ranking[b].total_cmp(&ranking[a]).then(a.cmp(&b)));
        for &t in steps.iter().take(frozen_count(chain.block_len(), rate, q)) {
            mask[t] = true;
        }
    }
    Ok(FrozenSpec::from_mask(mask))
}

/// A constructed code: chain, per-step entropy estimates and frozen set.
#[derive(Debug, Clone, PartialEq)]
pub struct Construction {
    pub chain: MonotoneChain,
    pub entropies: Vec<f64>,
    pub frozen: FrozenSpec,
}

impl Construction {
    pub fn new(chain: MonotoneChain, entropies: Vec<f64>, frozen: FrozenSpec) -> Result<Self> {
        if entropies.len() != chain.len() || frozen.len() != chain.len() {
            return Err(Error::Shape(format!(
                "chain of {} steps with {} entropies and a frozen mask of {}",
                chain.len(),
                entropies.len(),
                frozen.len()
            )));
        }
        Ok(Self { chain, entropies, frozen })
    }

    /// Rate in bits per letter that each terminal transmits.
    pub fn transmitted_rates(&self, sizes: &[usize]) -> Vec<f64> {
        let mut rates = vec![0.0; self.chain.terminals()];
        for t in self.frozen.steps() {
            let g = self.chain.gamma()[t];
            rates[g] += (sizes[g] as f64).log2();
        }
        let n = self.chain.block_len() as f64;
        rates.iter_mut().for_each(|r| *r /= n);
        rates
    }

    /// Parses one step per line: `t gamma i entropy_bits frozen`, with
    /// one-based `t`, `gamma` and `i` and `frozen` as 0 or 1. Lines starting
    /// with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut gamma = Vec::new();
        let mut entropies = Vec::new();
        let mut mask = Vec::new();
        let mut idx = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(Error::Parse(format!("expected 5 fields in {line:?}")));
            }
            let int = |s: &str| -> Result<usize> {
                s.parse().map_err(|e| Error::Parse(format!("field {s:?}: {e}")))
            };
            let t = int(fields[0])?;
            if t != gamma.len() + 1 {
                return Err(Error::Parse(format!("step {t} out of order")));
            }
            let g = int(fields[1])?;
            if g == 0 {
                return Err(Error::Parse("terminal ids are one based".into()));
            }
            gamma.push(g - 1);
            idx.push(int(fields[2])?);
            entropies.push(
                fields[3]
                    .parse()
                    .map_err(|e| Error::Parse(format!("entropy {:?}: {e}", fields[3])))?,
            );
            mask.push(match fields[4] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Parse(format!("frozen flag {other:?}"))),
            });
        }
        let terminals = gamma.iter().copied().max().map_or(0, |g| g + 1);
        let n = gamma.iter().filter(|&&g| g == 0).count();
        let chain = MonotoneChain::from_gamma(gamma, terminals, n)?;
        if let Some(t) = (0..chain.len()).find(|&t| chain.idx()[t] + 1 != idx[t]) {
            return Err(Error::Parse(format!(
                "step {} lists position {}, the chain gives {}",
                t + 1,
                idx[t],
                chain.idx()[t] + 1
            )));
        }
        Self::new(chain, entropies, FrozenSpec::from_mask(mask))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# t gamma i entropy_bits frozen\n");
        for t in 0..self.chain.len() {
            let (g, i) = self.chain.step(t);
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                t + 1,
                g + 1,
                i + 1,
                self.entropies[t],
                self.frozen.is_frozen(t) as u8
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary() -> JointSource {
        JointSource::from_probabilities(vec![2, 2], vec![0.1286, 0.0175, 0.0175, 0.8364]).unwrap()
    }

    #[test]
    fn rounding_up_with_slack() {
        assert_eq!(frozen_count(64, 0.5, 2), 32);
        assert_eq!(frozen_count(64, 0.5 + 1e-13, 2), 32);
        assert_eq!(frozen_count(64, 0.51, 2), 33);
        assert_eq!(frozen_count(16, (5f64).log2(), 5), 16);
        assert_eq!(frozen_count(16, 0.0, 5), 0);
    }

    #[test]
    fn full_and_empty_rates() {
        let chain = MonotoneChain::corner(2, 8).unwrap();
        let h = vec![0.5; 16];
        let all = select_frozen(&h, &chain, &[1.0, 1.0], &[2, 2]).unwrap();
        assert_eq!(all.count(), 16);
        let none = select_frozen(&h, &chain, &[0.0, 0.0], &[2, 2]).unwrap();
        assert_eq!(none.count(), 0);
        assert!(select_frozen(&h, &chain, &[1.5, 0.0], &[2, 2]).is_err());
    }

    #[test]
    fn ties_go_to_earlier_steps() {
        let chain = MonotoneChain::corner(2, 4).unwrap();
        let h = vec![0.3, 0.9, 0.3, 0.3, 0.0, 0.0, 0.0, 0.0];
        let f = select_frozen(&h, &chain, &[0.5, 0.25], &[2, 2]).unwrap();
        assert_eq!(f.steps(), vec![0, 1, 4]);
    }

    #[test]
    fn raising_a_rate_grows_the_frozen_set() {
        let chain = MonotoneChain::random(2, 16, 3).unwrap();
        let h = estimate_step_entropies(&binary(), &chain, 20, 1, Default::default()).unwrap();
        let mut prev = select_frozen(&h, &chain, &[0.0, 0.3], &[2, 2]).unwrap();
        for k in 1..=10 {
            let next = select_frozen(&h, &chain, &[k as f64 / 10.0, 0.3], &[2, 2]).unwrap();
            assert!(prev.steps().iter().all(|&t| next.is_frozen(t)));
            prev = next;
        }
    }

    #[test]
    fn deterministic_source_has_no_entropy() {
        let src = JointSource::from_probabilities(vec![2, 3], vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let chain = MonotoneChain::random(2, 8, 5).unwrap();
        let s = estimate_step_statistics(&src, &chain, 4, 0, Default::default()).unwrap();
        assert!(s.entropy.iter().all(|&h| h.abs() < 1e-12));
        assert!(s.error_probability.iter().all(|&e| e.abs() < 1e-12));
        assert_eq!(chain_rates(&s.entropy, &chain).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn estimates_are_reproducible() {
        let chain = MonotoneChain::corner(2, 32).unwrap();
        let a = estimate_step_entropies(&binary(), &chain, 70, 9, Default::default()).unwrap();
        let b = estimate_step_entropies(&binary(), &chain, 70, 9, Default::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scaling_keeps_the_ratio() {
        let r = scale_rates(&[0.2, 0.6], 1.0, &[2, 2]).unwrap();
        assert!((r[0] - 0.25).abs() < 1e-12 && (r[1] - 0.75).abs() < 1e-12);
        let capped = scale_rates(&[0.2, 0.6], 1.9, &[2, 2]).unwrap();
        assert_eq!(capped[1], 1.0);
        assert_eq!(scale_rates(&[0.0, 0.0], 1.0, &[2, 2]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn construction_file_round_trip() {
        let chain = MonotoneChain::from_gamma(vec![0, 0, 1, 0, 1, 1, 0, 1], 2, 4).unwrap();
        let h = vec![0.1, 0.25, 0.5, 0.125, 1.0, 0.0, 0.75, 0.3];
        let frozen = select_frozen(&h, &chain, &[0.5, 0.5], &[2, 2]).unwrap();
        let c = Construction::new(chain, h, frozen).unwrap();
        let text = c.to_text();
        assert!(text.lines().nth(1).unwrap().starts_with("1 1 1 0.1 "));
        assert_eq!(Construction::parse(&text).unwrap(), c);
        assert!(Construction::parse("1 1 2 0.5 0\n").is_err());
        assert!(Construction::parse("1 1 1 0.5 2\n").is_err());
    }
}
