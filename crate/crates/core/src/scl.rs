//! Successive cancellation list decoding on a shared computational graph.
//!
//! Paths are heads into one record pool. Forking a path clones its head
//! vertex; stepping a head copies a record only when another path still
//! uses it. Pruned paths hand their records back through the usage counts.

use crate::chain::MonotoneChain;
use crate::error::{Error, Result};
use crate::graph::{impose, CompGraph, Counters, Head, StepPolicy};
use crate::sc::{check_inputs, Codeword, FrozenSpec};
use crate::source::SourceBlock;
use crate::tensor::{combine_into, marginal_into, prob_key, ProbTensor, Symbol};
use crate::transform::TransformConvention;

/// Log-likelihood gap under which two paths count as tied at the final pick.
pub const PICK_TOLERANCE: f64 = 1e-9;

/// Resolution under which two log-likelihoods count as tied while ranking
/// candidates.
pub const RANK_TIE: f64 = 1e-9;

/// (total log-likelihood, parent, conditional probability, symbol)
pub(crate) type Cand = (f64, usize, f64, Symbol);

pub(crate) fn push_candidates(
    out: &mut Vec<Cand>,
    parent: usize,
    log_lik: f64,
    marg: &[f64],
    frozen: Option<Symbol>,
) {
    match frozen {
        Some(s) => {
            let p = marg[s as usize];
            out.push((log_lik + p.ln(), parent, p, s));
        }
        None => {
            for (s, &p) in marg.iter().enumerate() {
                out.push((log_lik + p.ln(), parent, p, s as Symbol));
            }
        }
    }
}

/// Keeps the `list_size` best candidates and orders them by (parent,
/// symbol). Totals within [`RANK_TIE`] tie and go to the smaller parent,
/// then to the more likely symbol, then to the smaller symbol; rounding
/// noise therefore never decides between equally likely paths.
pub(crate) fn rank_candidates(cands: &mut Vec<Cand>, list_size: usize) {
    let log_key = |x: f64| (x / RANK_TIE).round() as i64;
    cands.sort_by(|a, b| {
        log_key(b.0)
            .cmp(&log_key(a.0))
            .then(a.1.cmp(&b.1))
            .then(prob_key(b.2).cmp(&prob_key(a.2)))
            .then(a.3.cmp(&b.3))
    });
    cands.truncate(list_size);
    cands.sort_by_key(|&(_, k, _, s)| (k, s));
}

/// A surviving path at the end of list decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Rank of the path's decisions in chain order; smaller ids are
    /// lexicographically smaller.
    pub path_id: usize,
    pub log_lik: f64,
    /// Decided transformed block.
    pub u: SourceBlock,
}

#[derive(Debug, Clone)]
pub struct ListOutput {
    pub reconstruction: SourceBlock,
    pub u: SourceBlock,
    pub log_lik: f64,
    /// Survivors in path-id order.
    pub candidates: Vec<Candidate>,
    /// Index into `candidates` of the chosen path.
    pub best: usize,
    /// Every path ended with zero probability.
    pub failed: bool,
    pub counters: Counters,
}

struct Path {
    head: Head,
    log_lik: f64,
}

/// List decoder state between steps.
pub struct ListDecoder {
    graph: CompGraph,
    paths: Vec<Path>,
    chain: MonotoneChain,
    list_size: usize,
    t: usize,
    qmax: usize,
    incoming: Vec<f64>,
    joint: Vec<f64>,
    /// Leaf evidence per path, `vol` entries each.
    stored: Vec<f64>,
    /// Marginal on the decided component per path, `qmax` entries each.
    marg: Vec<f64>,
    cands: Vec<Cand>,
    children: Vec<usize>,
    leaf: Vec<f64>,
}

impl ListDecoder {
    pub fn new(
        prior: &[ProbTensor],
        chain: &MonotoneChain,
        list_size: usize,
        convention: TransformConvention,
    ) -> Result<Self> {
        check_inputs(prior, chain)?;
        if list_size == 0 {
            return Err(Error::Domain("list size must be at least 1".into()));
        }
        let (graph, head) = CompGraph::new(prior, convention, list_size)?;
        let vol = graph.shape().volume();
        let qmax = *graph.shape().spec().sizes().iter().max().unwrap_or(&1);
        Ok(Self {
            graph,
            paths: vec![Path { head, log_lik: 0.0 }],
            chain: chain.clone(),
            list_size,
            t: 0,
            qmax,
            incoming: vec![0.0; vol],
            joint: vec![0.0; vol],
            stored: vec![0.0; list_size * vol],
            marg: vec![0.0; list_size * qmax],
            cands: Vec::new(),
            children: Vec::new(),
            leaf: vec![0.0; vol],
        })
    }

    pub fn graph(&self) -> &CompGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut CompGraph {
        &mut self.graph
    }

    pub fn next_step(&self) -> usize {
        self.t
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Log-likelihoods of the live paths in path-id order.
    pub fn log_liks(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.log_lik).collect()
    }

    /// Head of path `k`, for inspection.
    pub fn head(&self, k: usize) -> &Head {
        &self.paths[k].head
    }

    /// Advances every path through the next chain step, then keeps the `L`
    /// most likely extensions.
    pub fn step(&mut self, frozen: Option<Symbol>) -> Result<()> {
        let t = self.t;
        if t >= self.chain.len() {
            return Err(Error::InternalState("all steps already decoded".into()));
        }
        let (g, i) = self.chain.step(t);
        let shape = self.graph.shape().clone();
        let vol = shape.volume();
        let q = shape.spec().size(g);
        if frozen.is_some_and(|s| s as usize >= q) {
            return Err(Error::Domain(format!("frozen value exceeds q={q}")));
        }

        for (k, path) in self.paths.iter_mut().enumerate() {
            let stored = &mut self.stored[k * vol..(k + 1) * vol];
            self.graph.leaf_messages(
                &mut path.head,
                i,
                StepPolicy::CopyOnWrite,
                &mut self.incoming,
                stored,
            )?;
            combine_into(&self.incoming, stored, &mut self.joint);
            marginal_into(&shape, &self.joint, g, &mut self.marg[k * self.qmax..k * self.qmax + q]);
        }

        self.cands.clear();
        for (k, path) in self.paths.iter().enumerate() {
            let marg = &self.marg[k * self.qmax..k * self.qmax + q];
            push_candidates(&mut self.cands, k, path.log_lik, marg, frozen);
        }
        rank_candidates(&mut self.cands, self.list_size);

        let mut old: Vec<Option<Path>> = std::mem::take(&mut self.paths).into_iter().map(Some).collect();
        self.children.clear();
        self.children.resize(old.len(), 0);
        for &(_, k, _, _) in &self.cands {
            self.children[k] += 1;
        }
        for (k, slot) in old.iter_mut().enumerate() {
            if self.children[k] == 0 {
                let path = slot.take().expect("each path visited once");
                self.graph.release(path.head);
            }
        }

        let mut c = 0;
        while c < self.cands.len() {
            let k = self.cands[c].1;
            let count = self.children[k];
            let parent = old[k].take().expect("each parent forked once");
            let first = self.paths.len();
            self.paths.push(parent);
            for _ in 1..count {
                let head = self.graph.fork(&self.paths[first].head)?;
                self.paths.push(Path { head, log_lik: 0.0 });
            }
            for j in 0..count {
                let (log_lik, _, _, s) = self.cands[c + j];
                self.leaf.copy_from_slice(&self.stored[k * vol..(k + 1) * vol]);
                impose(&shape, &mut self.leaf, g, s);
                let path = &mut self.paths[first + j];
                path.log_lik = log_lik;
                self.graph.write_leaf(&mut path.head, i, &self.leaf)?;
            }
            c += count;
        }
        self.t += 1;
        Ok(())
    }

    /// Decided block of path `k`, read from its leaves.
    pub fn decided(&self, k: usize) -> Result<SourceBlock> {
        let leaves = self.graph.leaves(&self.paths[k].head)?;
        let spec = self.graph.shape().spec().clone();
        let n = self.chain.block_len();
        let mut symbols = Vec::with_capacity(n * spec.components());
        for (i, leaf) in leaves.iter().enumerate() {
            let point = leaf.support_point(1e-9).ok_or_else(|| {
                Error::InternalState(format!("leaf {i} is not fully decided"))
            })?;
            symbols.extend(point);
        }
        SourceBlock::new(spec, n, symbols)
    }

    /// Picks the most likely path and recovers its source block.
    pub fn finish(mut self) -> Result<ListOutput> {
        if self.t != self.chain.len() {
            return Err(Error::InternalState(format!(
                "finish after {} of {} steps",
                self.t,
                self.chain.len()
            )));
        }
        let top = self.paths.iter().map(|p| p.log_lik).fold(f64::NEG_INFINITY, f64::max);
        let failed = top == f64::NEG_INFINITY;
        let best = if failed {
            0
        } else {
            self.paths
                .iter()
                .position(|p| p.log_lik >= top - PICK_TOLERANCE)
                .expect("the maximum is attained")
        };
        let candidates = (0..self.paths.len())
            .map(|k| {
                Ok(Candidate { path_id: k, log_lik: self.paths[k].log_lik, u: self.decided(k)? })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut path = self.paths.swap_remove(best);
        let reconstruction = self.graph.extract(&mut path.head, StepPolicy::CopyOnWrite)?;
        Ok(ListOutput {
            reconstruction,
            u: candidates[best].u.clone(),
            log_lik: candidates[best].log_lik,
            candidates,
            best,
            failed,
            counters: self.graph.counters().clone(),
        })
    }
}

/// Decodes with list size `list_size`, adopting codeword symbols at frozen
/// steps.
pub fn scl_decode(
    prior: &[ProbTensor],
    chain: &MonotoneChain,
    frozen: &FrozenSpec,
    codeword: &Codeword,
    list_size: usize,
    convention: TransformConvention,
) -> Result<ListOutput> {
    check_inputs(prior, chain)?;
    codeword.check(chain, frozen, prior[0].spec().sizes())?;
    let mut dec = ListDecoder::new(prior, chain, list_size, convention)?;
    for v in codeword.per_step(frozen) {
        dec.step(v)?;
    }
    dec.finish()
}

/// Candidate list as CSV: `path_id,log_lik,u` with the decided symbols in
/// chain order, space separated.
pub fn candidates_csv(candidates: &[Candidate], chain: &MonotoneChain) -> String {
    let mut out = String::from("path_id,log_lik,u\n");
    for c in candidates {
        let syms: Vec<String> = (0..chain.len())
            .map(|t| {
                let (g, i) = chain.step(t);
                c.u.get(i, g).to_string()
            })
            .collect();
        out.push_str(&format!("{},{},{}\n", c.path_id, c.log_lik, syms.join(" ")));
    }
    out
}

/// Record touches and data copies of one fork taken mid-decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForkProbe {
    pub n: usize,
    pub step: usize,
    pub touches: u64,
    pub data_copies: u64,
}

/// Decodes a uniform binary pair along the alternating chain and forks the
/// first path at the given fractions of the decode, reporting what each
/// fork touched.
pub fn fork_cost_probe(n: usize, list_size: usize, fractions: &[f64]) -> Result<Vec<ForkProbe>> {
    let source = crate::source::JointSource::from_probabilities(vec![2, 2], vec![0.25; 4])?;
    let chain = MonotoneChain::alternating(n)?;
    let mut dec = ListDecoder::new(&source.prior(n), &chain, list_size.max(2), Default::default())?;
    let mut marks: Vec<usize> = fractions
        .iter()
        .map(|f| ((chain.len() as f64 * f) as usize).min(chain.len() - 1))
        .collect();
    marks.sort_unstable();
    let mut out = Vec::new();
    for t in 0..chain.len() {
        if marks.contains(&t) {
            let graph = &mut dec.graph;
            let fork = graph.fork(&dec.paths[0].head)?;
            out.push(ForkProbe {
                n,
                step: t,
                touches: graph.counters().last_fork_touches,
                data_copies: graph.counters().fork_data_copies,
            });
            graph.release(fork);
        }
        dec.step(None)?;
    }
    Ok(out)
}
