//! Decoder conditionals against brute-force enumeration and against a
//! direct recursive evaluation of the same message passing.

use std::sync::Arc;

use monochain::oracle::Oracle;
use monochain::rng::SplitMix64;
use monochain::sc::{exact_steps, sc_decode, Codeword, FrozenSpec, ScDecoder};
use monochain::transform::{encode, inverse};
use monochain::{
    AlphabetSpec, JointSource, MonotoneChain, ProbTensor, Symbol, TensorShape, TransformConvention,
};

const TOL: f64 = 1e-9;

fn binary() -> JointSource {
    JointSource::from_probabilities(vec![2, 2], vec![0.1286, 0.0175, 0.0175, 0.8364]).unwrap()
}

fn ternary_quinary() -> JointSource {
    let probs = vec![
        0.0814, 0.6078, 0.0519, 0.0014, 0.0014, 0.0095, 0.0308, 0.0013, 0.0027, 0.0044, 0.0018,
        0.0156, 0.0500, 0.0012, 0.1388,
    ];
    JointSource::from_probabilities(vec![3, 5], probs).unwrap()
}

fn three_terminals() -> JointSource {
    let shape = TensorShape::new(AlphabetSpec::new(vec![2, 3, 2]).unwrap());
    let mut rng = SplitMix64::new(5);
    let w: Vec<f64> = (0..12).map(|_| rng.next_f64() + 0.01).collect();
    JointSource::new(ProbTensor::from_weights(&shape, w).unwrap()).unwrap()
}

fn random_frozen(len: usize, rng: &mut SplitMix64) -> FrozenSpec {
    FrozenSpec::from_mask((0..len).map(|_| rng.next_below(2) == 1).collect())
}

fn max_diff(a: &ProbTensor, b: &ProbTensor) -> f64 {
    a.entries()
        .iter()
        .zip(b.entries())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Upward message out of tree node `beta`, evaluated from the leaves.
fn as_parent(beta: usize, n: usize, leaves: &[ProbTensor], conv: TransformConvention) -> Vec<ProbTensor> {
    if beta >= n {
        return vec![leaves[beta - n].clone()];
    }
    let l = as_parent(2 * beta, n, leaves, conv);
    let r = as_parent(2 * beta + 1, n, leaves, conv);
    let mut out: Vec<ProbTensor> = l.iter().zip(&r).map(|(a, b)| a.conv(b).unwrap()).collect();
    out.extend(r.iter().map(|t| shift(t, conv, 1)));
    out
}

/// Downward message into tree node `beta`, evaluated from the root.
fn as_child(
    beta: usize,
    n: usize,
    leaves: &[ProbTensor],
    root: &[ProbTensor],
    conv: TransformConvention,
) -> Vec<ProbTensor> {
    if beta == 1 {
        return root.to_vec();
    }
    let p = as_child(beta / 2, n, leaves, root, conv);
    let l = p.len() / 2;
    let pull = |i: usize| shift(&p[i + l], conv, -1);
    if beta.is_multiple_of(2) {
        let r = as_parent(beta + 1, n, leaves, conv);
        (0..l).map(|i| p[i].dconv(&pull(i).combine(&r[i]).unwrap()).unwrap()).collect()
    } else {
        let lt = as_parent(beta - 1, n, leaves, conv);
        (0..l).map(|i| pull(i).combine(&p[i].dconv(&lt[i]).unwrap()).unwrap()).collect()
    }
}

/// Law of `X + d` (every component) given the law of `X`.
fn shift(t: &ProbTensor, conv: TransformConvention, d: i64) -> ProbTensor {
    if conv == TransformConvention::Identity {
        return t.clone();
    }
    let spec = t.spec();
    let mut w = vec![0.0; spec.volume()];
    for (k, &p) in t.entries().iter().enumerate() {
        let s: Vec<Symbol> = spec
            .symbols_of(k)
            .iter()
            .zip(spec.sizes())
            .map(|(&x, &q)| (x as i64 + d).rem_euclid(q as i64) as Symbol)
            .collect();
        w[spec.flat_index(&s)] += p;
    }
    ProbTensor::from_weights(t.shape(), w).unwrap()
}

struct RunReport {
    /// Largest deviation from the oracle over steps flagged exact.
    exact_worst: f64,
    /// Largest deviation from the recursive evaluation over all steps.
    recursive_worst: f64,
    /// Largest deviation from the oracle over steps flagged inexact.
    inexact_worst: f64,
}

fn run(
    src: &JointSource,
    chain: &MonotoneChain,
    frozen: &FrozenSpec,
    seed: u64,
    conv: TransformConvention,
) -> RunReport {
    let n = chain.block_len();
    let prior = src.prior(n);
    let shape: Arc<TensorShape> = src.shape().clone();
    let oracle = Oracle::new(&prior, chain, conv).unwrap();
    let flags = exact_steps(chain);
    let x = src.sample_block(n, seed).unwrap();
    let u = encode(&x, conv).unwrap();
    let values = Codeword::from_u(&u, chain, frozen).per_step(frozen);
    let mut dec = ScDecoder::new(&prior, chain, conv).unwrap();
    let mut leaves = vec![ProbTensor::uniform(&shape); n];
    let mut known: Vec<(Vec<usize>, Vec<Symbol>)> = vec![(vec![], vec![]); n];
    let mut prefix: Vec<Symbol> = Vec::new();
    let mut all_exact = true;
    let mut report = RunReport { exact_worst: 0.0, recursive_worst: 0.0, inexact_worst: 0.0 };
    for (t, &v) in values.iter().enumerate() {
        let (g, i) = chain.step(t);
        let s = dec.decode_at(t, v).unwrap();
        if dec.contradicted() {
            break;
        }
        let direct = as_child(n + i, n, &leaves, &prior, conv)[0].combine(&leaves[i]).unwrap();
        report.recursive_worst = report.recursive_worst.max(max_diff(&dec.conditional(), &direct));
        let expect = oracle.conditional(&prefix).unwrap();
        let d = max_diff(&dec.conditional(), &expect);
        if flags[t] {
            report.exact_worst = report.exact_worst.max(d);
        } else {
            report.inexact_worst = report.inexact_worst.max(d);
        }
        all_exact &= flags[t];
        prefix.push(s);
        if all_exact {
            let p = oracle.prefix_prob(&prefix);
            let rel = (dec.log_lik().exp() - p).abs() / p;
            assert!(rel < TOL, "step {t}: exp(logLik) {} vs {p}", dec.log_lik().exp());
        }
        known[i].0.push(g);
        known[i].1.push(s);
        leaves[i] = ProbTensor::partial_deterministic(&shape, &known[i].0, &known[i].1).unwrap();
    }
    report
}

#[test]
fn corner_chains_are_exact() {
    let mut rng = SplitMix64::new(2024);
    let sources = [(binary(), vec![2usize, 4, 8]), (ternary_quinary(), vec![2, 4]), (three_terminals(), vec![2, 4])];
    for (src, ns) in &sources {
        for &n in ns {
            let chain = MonotoneChain::corner(src.terminals(), n).unwrap();
            assert!(exact_steps(&chain).iter().all(|&e| e));
            for f in 0..5 {
                let frozen = random_frozen(chain.len(), &mut rng);
                for conv in [TransformConvention::Identity, TransformConvention::CyclicShift] {
                    let r = run(src, &chain, &frozen, f, conv);
                    assert!(r.exact_worst < TOL, "n={n} {conv:?}: {}", r.exact_worst);
                    assert!(r.recursive_worst < TOL);
                }
            }
        }
    }
}

#[test]
fn steps_flagged_exact_match_enumeration() {
    let mut rng = SplitMix64::new(99);
    for (src, n, chains) in [(binary(), 2, 5), (binary(), 4, 20), (binary(), 8, 20), (ternary_quinary(), 4, 10), (three_terminals(), 4, 6)] {
        for _ in 0..chains {
            let chain = MonotoneChain::random(src.terminals(), n, rng.next_u64()).unwrap();
            let frozen = random_frozen(chain.len(), &mut rng);
            let r = run(&src, &chain, &frozen, rng.next_u64(), TransformConvention::Identity);
            assert!(r.exact_worst < TOL, "chain {:?}: {}", chain.gamma(), r.exact_worst);
            assert!(r.recursive_worst < TOL, "chain {:?}: {}", chain.gamma(), r.recursive_worst);
        }
    }
}

#[test]
fn half_decoded_subtree_loses_the_tie() {
    // Terminal 2 is known at position 1 but not at position 2 when the
    // decoder leaves their subtree for position 3.
    let chain = MonotoneChain::from_gamma(vec![0, 0, 1, 0, 1, 1, 0, 1], 2, 4).unwrap();
    let flags = exact_steps(&chain);
    assert_eq!(flags, vec![true, true, true, false, false, true, true, true]);
    let r = run(&binary(), &chain, &FrozenSpec::none(8), 0, TransformConvention::Identity);
    assert!(r.recursive_worst < TOL);
    assert!(r.exact_worst < TOL);
    assert!(r.inexact_worst > 1e-2, "{}", r.inexact_worst);
}

#[test]
fn alternating_chain_flags() {
    let chain = MonotoneChain::alternating(8).unwrap();
    let flags = exact_steps(&chain);
    assert!(flags[..chain.block_len() / 2 + 1].iter().all(|&e| e));
    assert!(!flags[chain.block_len() / 2 + 1]);
    assert!(flags.iter().any(|&e| !e));
}

#[test]
fn reconstruction_inverts_decided_block() {
    let src = ternary_quinary();
    let mut rng = SplitMix64::new(8);
    for seed in 0..20 {
        let chain = MonotoneChain::random(2, 16, seed).unwrap();
        let frozen = random_frozen(chain.len(), &mut rng);
        let x = src.sample_block(16, seed).unwrap();
        let u = encode(&x, TransformConvention::CyclicShift).unwrap();
        let cw = Codeword::from_u(&u, &chain, &frozen);
        let out = sc_decode(&src.prior(16), &chain, &frozen, &cw, TransformConvention::CyclicShift, false)
            .unwrap();
        let back = inverse(&out.u, TransformConvention::CyclicShift).unwrap();
        assert_eq!(back, out.reconstruction);
    }
}
