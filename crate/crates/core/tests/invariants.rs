//! Property tests: tensor algebra, chains, the transform, and the record
//! graph under random fork/walk/release traces.

use std::sync::Arc;

use monochain::graph::{CompGraph, Head, StepPolicy};
use monochain::rng::SplitMix64;
use monochain::sc::ScDecoder;
use monochain::transform::{encode, inverse};
use monochain::{
    AlphabetSpec, JointSource, MonotoneChain, ProbTensor, SourceBlock, TensorShape,
    TransformConvention,
};
use proptest::prelude::*;

fn shape_strategy() -> impl Strategy<Value = Arc<TensorShape>> {
    prop::collection::vec(prop::sample::select(vec![2usize, 3, 5]), 1..=3)
        .prop_map(|sizes| TensorShape::new(AlphabetSpec::new(sizes).unwrap()))
}

fn tensor(shape: &Arc<TensorShape>, seed: u64) -> ProbTensor {
    let mut rng = SplitMix64::new(seed);
    let w = (0..shape.volume()).map(|_| rng.next_f64() + 1e-3).collect();
    ProbTensor::from_weights(shape, w).unwrap()
}

fn close(a: &ProbTensor, b: &ProbTensor, tol: f64) -> bool {
    a.entries().iter().zip(b.entries()).all(|(x, y)| (x - y).abs() <= tol)
}

fn mass(t: &ProbTensor) -> f64 {
    t.entries().iter().sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tensor_ops_stay_normalized(shape in shape_strategy(), s1: u64, s2: u64) {
        let (a, b) = (tensor(&shape, s1), tensor(&shape, s2));
        for r in [a.conv(&b).unwrap(), a.dconv(&b).unwrap(), a.combine(&b).unwrap()] {
            prop_assert!((mass(&r) - 1.0).abs() < 1e-12);
            prop_assert!(r.entries().iter().all(|&x| x >= 0.0));
        }
        for c in 0..shape.spec().components() {
            let m = a.marginal(c).unwrap();
            prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tensor_identities(shape in shape_strategy(), s1: u64, s2: u64) {
        let (a, b) = (tensor(&shape, s1), tensor(&shape, s2));
        let zero = ProbTensor::delta(&shape, &vec![0; shape.spec().components()]).unwrap();
        let uniform = ProbTensor::uniform(&shape);
        prop_assert!(close(&a.conv(&zero).unwrap(), &a, 1e-15));
        prop_assert!(close(&a.dconv(&zero).unwrap(), &a, 1e-15));
        prop_assert!(close(&a.combine(&uniform).unwrap(), &a, 1e-15));
        prop_assert!(close(&a.conv(&uniform).unwrap(), &uniform, 1e-15));
        prop_assert!(close(&a.conv(&b).unwrap(), &b.conv(&a).unwrap(), 1e-15));
        prop_assert!(close(&a.combine(&b).unwrap(), &b.combine(&a).unwrap(), 1e-15));
    }

    #[test]
    fn random_chains_are_monotone(m in 2usize..=4, log_n in 1u32..=6, seed: u64) {
        let n = 1usize << log_n;
        let chain = MonotoneChain::random(m, n, seed).unwrap();
        for g in 0..m {
            let pos: Vec<usize> = chain.steps_of(g).map(|t| chain.idx()[t]).collect();
            prop_assert_eq!(pos, (0..n).collect::<Vec<_>>());
        }
        prop_assert_eq!(MonotoneChain::parse(&chain.to_text()).unwrap(), chain.clone());
        let ext = chain.k_extend(1).unwrap();
        prop_assert_eq!(ext.len(), 2 * chain.len());
        prop_assert_eq!(ext.block_len(), 2 * n);
    }

    #[test]
    fn transform_round_trip(
        sizes in prop::collection::vec(prop::sample::select(vec![2usize, 3, 5]), 1..=3),
        log_n in 1u32..=6,
        seed: u64,
        shifted: bool,
    ) {
        let n = 1usize << log_n;
        let spec = AlphabetSpec::new(sizes.clone()).unwrap();
        let mut rng = SplitMix64::new(seed);
        let symbols = (0..n).flat_map(|_| sizes.iter().map(|&q| rng.next_below(q as u64) as u32).collect::<Vec<_>>()).collect();
        let x = SourceBlock::new(spec, n, symbols).unwrap();
        let conv = if shifted { TransformConvention::CyclicShift } else { TransformConvention::Identity };
        let u = encode(&x, conv).unwrap();
        prop_assert_eq!(inverse(&u, conv).unwrap(), x);
    }
}

fn binary() -> JointSource {
    JointSource::from_probabilities(vec![2, 2], vec![0.1286, 0.0175, 0.0175, 0.8364]).unwrap()
}

/// Applies a random mix of forks, releases, walks and leaf writes, checking
/// every head's graph after each operation.
fn random_trace(n: usize, list: usize, ops: usize, seed: u64) -> usize {
    let src = binary();
    let shape = src.shape().clone();
    let (mut g, head) = CompGraph::with_iid_prior(src.pmf(), n, Default::default(), list).unwrap();
    let mut heads: Vec<Head> = vec![head];
    let mut rng = SplitMix64::new(seed);
    for _ in 0..ops {
        let k = rng.next_below(heads.len() as u64) as usize;
        match rng.next_below(4) {
            0 if heads.len() < list => {
                let f = g.fork(&heads[k]).unwrap();
                heads.push(f);
            }
            1 if heads.len() > 1 => {
                let h = heads.swap_remove(k);
                g.release(h);
            }
            2 => {
                let i = rng.next_below(n as u64) as usize;
                let beta = ((n + i) / 2) as u32;
                g.walk_to(&mut heads[k], beta, StepPolicy::CopyOnWrite).unwrap();
                let mut data = tensor(&shape, rng.next_u64()).entries().to_vec();
                data.iter_mut().for_each(|x| *x = x.max(1e-3));
                let total: f64 = data.iter().sum();
                data.iter_mut().for_each(|x| *x /= total);
                g.write_leaf(&mut heads[k], i, &data).unwrap();
            }
            _ => {
                let beta = 1 + rng.next_below(n as u64 - 1) as u32;
                g.walk_to(&mut heads[k], beta, StepPolicy::CopyOnWrite).unwrap();
            }
        }
        for h in &heads {
            g.traverse_all(h).unwrap();
        }
        assert!(g.live_edges() <= list * (2 * n - 1));
    }
    g.counters().pool_high_water
}

#[test]
fn orientation_holds_on_random_traces() {
    for (n, list) in [(4usize, 2usize), (8, 3), (16, 4), (32, 8)] {
        for seed in 0..10 {
            let high = random_trace(n, list, 300, seed);
            assert!(high <= list * (2 * n - 1), "n={n} L={list}: {high}");
        }
    }
}

#[test]
fn corner_chains_update_each_edge_twice_per_terminal() {
    let three = JointSource::from_probabilities(vec![2, 3, 2], vec![1.0 / 12.0; 12]).unwrap();
    for (src, m) in [(binary(), 2usize), (three, 3)] {
        for n in [2usize, 4, 8, 16, 32, 64] {
            let chain = MonotoneChain::corner(m, n).unwrap();
            let mut dec = ScDecoder::new(&src.prior(n), &chain, Default::default()).unwrap();
            dec.graph_mut().track_edge_updates(true);
            for t in 0..chain.len() {
                dec.decode_at(t, None).unwrap();
            }
            dec.extract().unwrap();
            let updates = dec.graph().counters().edge_updates.clone().unwrap();
            assert!(updates[2..].iter().all(|&u| u == 2 * m as u64), "M={m} N={n}: {updates:?}");
        }
    }
}
