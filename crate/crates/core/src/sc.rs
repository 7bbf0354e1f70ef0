//! Successive cancellation decoding along a monotone chain.

use crate::chain::MonotoneChain;
use crate::error::{Error, Result};
use crate::graph::{impose, CompGraph, Head, StepPolicy};
use crate::source::SourceBlock;
use crate::tensor::{argmax, combine_into, marginal_into, ProbTensor, Symbol};
use crate::transform::TransformConvention;

/// Chain steps whose symbols the encoder transmits. Steps are zero based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrozenSpec {
    mask: Vec<bool>,
}

impl FrozenSpec {
    pub fn new(len: usize, steps: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = vec![false; len];
        for t in steps {
            if t >= len {
                return Err(Error::Domain(format!("frozen step {t} outside 0..{len}")));
            }
            mask[t] = true;
        }
        Ok(Self { mask })
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    pub fn none(len: usize) -> Self {
        Self { mask: vec![false; len] }
    }

    pub fn all(len: usize) -> Self {
        Self { mask: vec![true; len] }
    }

    /// Number of chain steps covered, `M * N`.
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn is_frozen(&self, t: usize) -> bool {
        self.mask[t]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Frozen steps in ascending order.
    pub fn steps(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&t| self.mask[t]).collect()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&f| f).count()
    }

    pub fn check_chain(&self, chain: &MonotoneChain) -> Result<()> {
        if self.len() != chain.len() {
            return Err(Error::Shape(format!(
                "frozen spec covers {} steps, chain has {}",
                self.len(),
                chain.len()
            )));
        }
        Ok(())
    }

    /// Parses ascending one-based step indices, one per line.
    pub fn parse(text: &str, len: usize) -> Result<Self> {
        let mut steps = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let t: usize = line
                .parse()
                .map_err(|e| Error::Parse(format!("frozen step {line:?}: {e}")))?;
            if t == 0 {
                return Err(Error::Parse("frozen steps are one based".into()));
            }
            if steps.last().is_some_and(|&prev| prev >= t - 1) {
                return Err(Error::Parse(format!("frozen step {t} not ascending")));
            }
            steps.push(t - 1);
        }
        Self::new(len, steps)
    }

    pub fn to_text(&self) -> String {
        self.steps().iter().map(|t| format!("{}\n", t + 1)).collect()
    }
}

/// Transmitted symbols, one per frozen step in ascending step order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codeword {
    symbols: Vec<Symbol>,
}

impl Codeword {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        Self { symbols }
    }

    /// Encoder output: the frozen subsequence of a transformed block.
    pub fn from_u(u: &SourceBlock, chain: &MonotoneChain, frozen: &FrozenSpec) -> Self {
        let symbols = frozen
            .steps()
            .into_iter()
            .map(|t| {
                let (g, i) = chain.step(t);
                u.get(i, g)
            })
            .collect();
        Self { symbols }
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Checks the length against the frozen set and every symbol against its
    /// terminal's alphabet.
    pub fn check(&self, chain: &MonotoneChain, frozen: &FrozenSpec, sizes: &[usize]) -> Result<()> {
        frozen.check_chain(chain)?;
        let steps = frozen.steps();
        if steps.len() != self.symbols.len() {
            return Err(Error::Shape(format!(
                "codeword has {} symbols for {} frozen steps",
                self.symbols.len(),
                steps.len()
            )));
        }
        for (&t, &s) in steps.iter().zip(&self.symbols) {
            let q = sizes[chain.gamma()[t]];
            if s as usize >= q {
                return Err(Error::Domain(format!("codeword symbol {s} at step {} exceeds q={q}", t + 1)));
            }
        }
        Ok(())
    }

    /// Frozen value for every step, `None` where the step is not frozen.
    pub fn per_step(&self, frozen: &FrozenSpec) -> Vec<Option<Symbol>> {
        let mut out = vec![None; frozen.len()];
        for (t, &s) in frozen.steps().into_iter().zip(&self.symbols) {
            out[t] = Some(s);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let symbols = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.parse().map_err(|e| Error::Parse(format!("codeword symbol {l:?}: {e}"))))
            .collect::<Result<_>>()?;
        Ok(Self { symbols })
    }

    pub fn to_text(&self) -> String {
        self.symbols.iter().map(|s| format!("{s}\n")).collect()
    }
}

pub(crate) fn check_inputs(prior: &[ProbTensor], chain: &MonotoneChain) -> Result<()> {
    if prior.len() != chain.block_len() {
        return Err(Error::Shape(format!(
            "prior has {} positions, chain expects {}",
            prior.len(),
            chain.block_len()
        )));
    }
    let m = prior[0].spec().components();
    if m != chain.terminals() {
        return Err(Error::Shape(format!(
            "prior has {m} components, chain has {} terminals",
            chain.terminals()
        )));
    }
    Ok(())
}

/// Result of a complete single-path decode.
#[derive(Debug, Clone)]
pub struct ScOutput {
    pub reconstruction: SourceBlock,
    /// Decided transformed block.
    pub u: SourceBlock,
    /// Natural log of the probability of all decisions.
    pub log_lik: f64,
    /// Joint conditional of `U_{i_t}` at every step, when recorded.
    pub conditionals: Vec<ProbTensor>,
    /// True if some decision had zero probability.
    pub contradicted: bool,
}

/// One decoding path driven step by step.
pub struct ScDecoder {
    graph: CompGraph,
    head: Head,
    chain: MonotoneChain,
    t: usize,
    log_lik: f64,
    u: SourceBlock,
    contradicted: bool,
    incoming: Vec<f64>,
    stored: Vec<f64>,
    joint: Vec<f64>,
    marg: Vec<f64>,
}

impl ScDecoder {
    pub fn new(
        prior: &[ProbTensor],
        chain: &MonotoneChain,
        convention: TransformConvention,
    ) -> Result<Self> {
        check_inputs(prior, chain)?;
        let (graph, head) = CompGraph::new(prior, convention, 1)?;
        let vol = graph.shape().volume();
        let qmax = *graph.shape().spec().sizes().iter().max().unwrap_or(&1);
        let u = SourceBlock::zeros(graph.shape().spec().clone(), chain.block_len())?;
        Ok(Self {
            graph,
            head,
            chain: chain.clone(),
            t: 0,
            log_lik: 0.0,
            u,
            contradicted: false,
            incoming: vec![0.0; vol],
            stored: vec![0.0; vol],
            joint: vec![0.0; vol],
            marg: vec![0.0; qmax],
        })
    }

    /// Decodes step `t`: computes the conditional of `U_{i_t}` given every
    /// earlier decision, decides component `gamma_t` (or adopts the frozen
    /// value), and records the decision as leaf evidence.
    pub fn decode_at(&mut self, t: usize, frozen: Option<Symbol>) -> Result<Symbol> {
        if t != self.t || t >= self.chain.len() {
            return Err(Error::InternalState(format!(
                "decode_at({t}) but the next step is {}",
                self.t
            )));
        }
        let (g, i) = self.chain.step(t);
        let shape = self.graph.shape().clone();
        self.graph.leaf_messages(
            &mut self.head,
            i,
            StepPolicy::InPlace,
            &mut self.incoming,
            &mut self.stored,
        )?;
        if !combine_into(&self.incoming, &self.stored, &mut self.joint) {
            self.contradicted = true;
        }
        let q = shape.spec().size(g);
        let marg = &mut self.marg[..q];
        marginal_into(&shape, &self.joint, g, marg);
        let s = match frozen {
            Some(s) if s as usize >= q => {
                return Err(Error::Domain(format!("frozen value {s} exceeds q={q}")))
            }
            Some(s) => s,
            None => argmax(marg),
        };
        let p = marg[s as usize];
        if p <= 0.0 {
            self.contradicted = true;
        }
        self.log_lik += p.ln();
        impose(&shape, &mut self.stored, g, s);
        self.graph.write_leaf(&mut self.head, i, &self.stored)?;
        self.u.set(i, g, s);
        self.t += 1;
        Ok(s)
    }

    /// Joint conditional computed by the most recent [`decode_at`](Self::decode_at).
    pub fn conditional(&self) -> ProbTensor {
        ProbTensor::from_raw(self.graph.shape().clone(), self.joint.clone())
    }

    pub(crate) fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn next_step(&self) -> usize {
        self.t
    }

    pub fn log_lik(&self) -> f64 {
        self.log_lik
    }

    pub fn contradicted(&self) -> bool {
        self.contradicted || self.head.contradicted()
    }

    pub fn decided(&self) -> &SourceBlock {
        &self.u
    }

    pub fn graph(&self) -> &CompGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut CompGraph {
        &mut self.graph
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    /// Walks to the root and recovers the source block. Every step must
    /// have been decoded.
    pub fn extract(&mut self) -> Result<SourceBlock> {
        if self.t != self.chain.len() {
            return Err(Error::InternalState(format!(
                "extraction after {} of {} steps",
                self.t,
                self.chain.len()
            )));
        }
        self.graph.extract(&mut self.head, StepPolicy::InPlace)
    }
}

/// Decodes all steps, adopting codeword symbols at frozen steps and hard
/// decisions elsewhere.
pub fn sc_decode(
    prior: &[ProbTensor],
    chain: &MonotoneChain,
    frozen: &FrozenSpec,
    codeword: &Codeword,
    convention: TransformConvention,
    record_conditionals: bool,
) -> Result<ScOutput> {
    check_inputs(prior, chain)?;
    codeword.check(chain, frozen, prior[0].spec().sizes())?;
    let values = codeword.per_step(frozen);
    let mut dec = ScDecoder::new(prior, chain, convention)?;
    let mut conditionals = Vec::new();
    for (t, &v) in values.iter().enumerate() {
        dec.decode_at(t, v)?;
        if record_conditionals {
            conditionals.push(dec.conditional());
        }
    }
    let reconstruction = dec.extract()?;
    Ok(ScOutput {
        reconstruction,
        u: dec.u.clone(),
        log_lik: dec.log_lik,
        conditionals,
        contradicted: dec.contradicted(),
    })
}

/// Decodes with every decision forced to the true transformed symbol and
/// hands each step's joint conditional to `visit(t, tensor)`.
pub fn genie_decode_with(
    prior: &[ProbTensor],
    chain: &MonotoneChain,
    true_u: &SourceBlock,
    convention: TransformConvention,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let mut dec = ScDecoder::new(prior, chain, convention)?;
    for t in 0..chain.len() {
        let (g, i) = chain.step(t);
        dec.decode_at(t, Some(true_u.get(i, g)))?;
        visit(t, dec.joint());
    }
    Ok(())
}

/// Per-step joint conditionals of a genie-aided decode.
pub fn genie_decode(
    prior: &[ProbTensor],
    chain: &MonotoneChain,
    true_u: &SourceBlock,
    convention: TransformConvention,
) -> Result<Vec<ProbTensor>> {
    let shape = prior
        .first()
        .ok_or_else(|| Error::Shape("empty prior".into()))?
        .shape()
        .clone();
    let mut out = Vec::with_capacity(chain.len());
    genie_decode_with(prior, chain, true_u, convention, |_, p| {
        out.push(ProbTensor::from_raw(shape.clone(), p.to_vec()))
    })?;
    Ok(out)
}

/// For every chain step, whether the message passing yields the exact
/// conditional rather than a product-form approximation of it.
///
/// Upward messages keep only per-letter marginals. That is lossless unless a
/// butterfly combines a letter known in some component on its left input
/// with a letter still unknown in that component on its right input: the
/// two parent letters are then tied by `a - b = l` in that component, and
/// the marginals drop the tie. Corner chains never produce such a
/// butterfly; chains that leave a subtree with a terminal half decoded do.
pub fn exact_steps(chain: &MonotoneChain) -> Vec<bool> {
    let n = chain.block_len();
    let m = chain.terminals();
    let mut known = vec![vec![false; m]; n];
    let mut out = Vec::with_capacity(chain.len());
    for t in 0..chain.len() {
        let (g, i) = chain.step(t);
        let mut node = n + i;
        let mut ok = true;
        while node > 1 {
            ok &= upward_known(node ^ 1, n, &known).0;
            node /= 2;
        }
        out.push(ok);
        known[i][g] = true;
    }
    out
}

/// Known-component flags of the upward message out of tree node `node`, and
/// whether it was computed without loss.
fn upward_known(node: usize, n: usize, known: &[Vec<bool>]) -> (bool, Vec<Vec<bool>>) {
    if node >= n {
        return (true, vec![known[node - n].clone()]);
    }
    let (ok_l, l) = upward_known(2 * node, n, known);
    let (ok_r, r) = upward_known(2 * node + 1, n, known);
    let mut ok = ok_l && ok_r;
    let mut group: Vec<Vec<bool>> = Vec::with_capacity(2 * l.len());
    for (a, b) in l.iter().zip(&r) {
        ok &= a.iter().zip(b).all(|(&ka, &kb)| !ka || kb);
        group.push(a.iter().zip(b).map(|(&ka, &kb)| ka && kb).collect());
    }
    group.extend(r);
    (ok, group)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::JointSource;
    use crate::transform::encode;

    fn binary() -> JointSource {
        JointSource::from_probabilities(vec![2, 2], vec![0.1286, 0.0175, 0.0175, 0.8364]).unwrap()
    }

    #[test]
    fn frozen_spec_text() {
        let f = FrozenSpec::new(8, [0, 3, 7]).unwrap();
        assert_eq!(f.to_text(), "1\n4\n8\n");
        assert_eq!(FrozenSpec::parse(&f.to_text(), 8).unwrap(), f);
        assert!(FrozenSpec::parse("3\n2\n", 8).is_err());
        assert!(FrozenSpec::parse("9\n", 8).is_err());
        assert!(FrozenSpec::new(4, [4]).is_err());
    }

    #[test]
    fn codeword_checks() {
        let chain = MonotoneChain::corner(2, 2).unwrap();
        let f = FrozenSpec::new(4, [1, 2]).unwrap();
        assert!(Codeword::new(vec![1, 0]).check(&chain, &f, &[2, 2]).is_ok());
        assert!(Codeword::new(vec![1]).check(&chain, &f, &[2, 2]).is_err());
        assert!(Codeword::new(vec![2, 0]).check(&chain, &f, &[2, 2]).is_err());
        let c = Codeword::new(vec![1, 0]);
        assert_eq!(Codeword::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn fully_frozen_round_trip() {
        let src = binary();
        for seed in 0..10 {
            let chain = MonotoneChain::random(2, 16, seed).unwrap();
            let x = src.sample_block(16, seed).unwrap();
            let u = encode(&x, TransformConvention::Identity).unwrap();
            let f = FrozenSpec::all(chain.len());
            let cw = Codeword::from_u(&u, &chain, &f);
            let out = sc_decode(&src.prior(16), &chain, &f, &cw, TransformConvention::Identity, false)
                .unwrap();
            assert_eq!(out.u, u);
            assert_eq!(out.reconstruction, x);
            assert!(!out.contradicted);
            assert!(out.log_lik <= 0.0);
        }
    }

    #[test]
    fn deterministic_source_needs_no_rate() {
        let src = JointSource::from_probabilities(vec![2, 3], vec![0., 0., 0., 0., 1., 0.]).unwrap();
        let chain = MonotoneChain::alternating(8).unwrap();
        let x = src.sample_block(8, 0).unwrap();
        let f = FrozenSpec::none(chain.len());
        let out = sc_decode(&src.prior(8), &chain, &f, &Codeword::new(vec![]), Default::default(), false)
            .unwrap();
        assert_eq!(out.reconstruction, x);
        assert!(out.log_lik.abs() < 1e-12);
    }

    #[test]
    fn step_mismatch_is_an_error() {
        let src = binary();
        let chain = MonotoneChain::corner(2, 4).unwrap();
        let mut dec = ScDecoder::new(&src.prior(4), &chain, Default::default()).unwrap();
        assert!(dec.decode_at(1, None).is_err());
        dec.decode_at(0, None).unwrap();
        assert!(dec.extract().is_err());
    }

    #[test]
    fn impossible_frozen_value_flags_contradiction() {
        let src = JointSource::from_probabilities(vec![2, 2], vec![1., 0., 0., 0.]).unwrap();
        let chain = MonotoneChain::corner(2, 2).unwrap();
        let f = FrozenSpec::new(4, [0]).unwrap();
        let out = sc_decode(&src.prior(2), &chain, &f, &Codeword::new(vec![1]), Default::default(), false)
            .unwrap();
        assert!(out.contradicted);
        assert_eq!(out.log_lik, f64::NEG_INFINITY);
    }
}
