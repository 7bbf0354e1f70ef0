//! Classical list decoding with per-level arrays and lazy copies, for corner
//! chains only.
//!
//! Each path owns a table of `log2 N + 1` handles, one per tree depth,
//! into shared per-depth arrays. Forking copies the table; an array is
//! duplicated the first time a path writes to it while another path still
//! holds it. Terminals are decoded one pass each: a pass runs ordinary
//! successive cancellation over the tree, and its decisions are then folded
//! into the root messages before the next pass starts.

use crate::chain::MonotoneChain;
use crate::error::{Error, Result};
use crate::graph::{run_calc, Calc, Counters};
use crate::sc::{check_inputs, Codeword, FrozenSpec};
use crate::scl::{push_candidates, rank_candidates, Cand, Candidate, ListOutput, PICK_TOLERANCE};
use crate::source::SourceBlock;
use crate::tensor::{combine_into, fill_partial, marginal_into, ProbTensor, Symbol, TensorShape};
use crate::transform::{encode, TransformConvention};
use std::sync::Arc;

/// Instrumentation of the lazy-copy decoder.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LazyCounters {
    pub tensor_ops: u64,
    pub forks: u64,
    /// Handles copied by the most recent fork.
    pub last_fork_handle_copies: u64,
    /// Arrays duplicated on first write after a fork.
    pub array_copies: u64,
    /// Tensors moved by those duplications.
    pub copied_tensors: u64,
    /// Largest number of arrays held at once, over all depths.
    pub arrays_high_water: usize,
}

/// One depth of the tree: `L` array slots, each with the downward message
/// into the current node and the upward messages out of its two children
/// (one message at the root).
struct Level {
    down: Vec<Vec<f64>>,
    up: Vec<Vec<f64>>,
    refs: Vec<u32>,
    free: Vec<usize>,
}

struct LazyPath {
    /// Slot per depth.
    handles: Vec<usize>,
    log_lik: f64,
}

/// Lazy-copy list decoder state between steps.
pub struct LazyListDecoder {
    shape: Arc<TensorShape>,
    convention: TransformConvention,
    chain: MonotoneChain,
    n: usize,
    depth: usize,
    vol: usize,
    list_size: usize,
    levels: Vec<Level>,
    /// Decided source symbols per root slot, `N * M` entries.
    decided: Vec<Vec<Symbol>>,
    paths: Vec<LazyPath>,
    t: usize,
    uniform: Vec<f64>,
    scratch: Vec<f64>,
    marg: Vec<f64>,
    leaf: Vec<f64>,
    cands: Vec<Cand>,
    live_arrays: usize,
    counters: LazyCounters,
}

impl LazyListDecoder {
    pub fn new(
        prior: &[ProbTensor],
        chain: &MonotoneChain,
        list_size: usize,
        convention: TransformConvention,
    ) -> Result<Self> {
        check_inputs(prior, chain)?;
        if !chain.is_corner() {
            return Err(Error::UnsupportedChain(
                "lazy copying needs a corner chain; interleaved terminals revisit subtrees \
                 whose arrays would have to be copied whole"
                    .into(),
            ));
        }
        if list_size == 0 {
            return Err(Error::Domain("list size must be at least 1".into()));
        }
        let shape = prior[0].shape().clone();
        let n = chain.block_len();
        let depth = n.trailing_zeros() as usize;
        let vol = shape.volume();
        let levels = (0..=depth)
            .map(|d| {
                let len = (n >> d) * vol;
                let up_len = if d == 0 { len } else { 2 * len };
                Level {
                    down: vec![vec![0.0; len]; list_size],
                    up: vec![vec![0.0; up_len]; list_size],
                    refs: vec![0; list_size],
                    free: (1..list_size).rev().collect(),
                }
            })
            .collect::<Vec<_>>();
        let qmax = *shape.spec().sizes().iter().max().unwrap_or(&1);
        let mut dec = Self {
            convention,
            chain: chain.clone(),
            n,
            depth,
            vol,
            list_size,
            levels,
            decided: vec![vec![0; n * shape.spec().components()]; list_size],
            paths: vec![LazyPath { handles: vec![0; depth + 1], log_lik: 0.0 }],
            t: 0,
            uniform: vec![1.0 / vol as f64; (n / 2).max(1) * vol],
            scratch: vec![0.0; 3 * vol],
            marg: vec![0.0; list_size * qmax],
            leaf: vec![0.0; vol],
            cands: Vec::new(),
            live_arrays: depth + 1,
            counters: LazyCounters::default(),
            shape,
        };
        for level in &mut dec.levels {
            level.refs[0] = 1;
        }
        for (i, p) in prior.iter().enumerate() {
            dec.levels[0].down[0][i * vol..(i + 1) * vol].copy_from_slice(p.entries());
        }
        dec.counters.arrays_high_water = dec.live_arrays;
        Ok(dec)
    }

    pub fn counters(&self) -> &LazyCounters {
        &self.counters
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

    pub fn log_liks(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.log_lik).collect()
    }

    /// Slot of path `k` at depth `d`, duplicated first if shared.
    fn writable(&mut self, k: usize, d: usize) -> Result<usize> {
        let s = self.paths[k].handles[d];
        let level = &mut self.levels[d];
        if level.refs[s] == 1 {
            return Ok(s);
        }
        let s2 = level.free.pop().ok_or(Error::Capacity { level: d, capacity: self.list_size })?;
        copy_slot(&mut level.down, s, s2);
        copy_slot(&mut level.up, s, s2);
        let tensors = (level.down[s].len() + level.up[s].len()) / self.vol;
        level.refs[s] -= 1;
        level.refs[s2] = 1;
        if d == 0 {
            copy_slot(&mut self.decided, s, s2);
        }
        self.paths[k].handles[d] = s2;
        self.counters.array_copies += 1;
        self.counters.copied_tensors += tensors as u64;
        self.live_arrays += 1;
        self.counters.arrays_high_water = self.counters.arrays_high_water.max(self.live_arrays);
        Ok(s2)
    }

    fn kill(&mut self, path: LazyPath) {
        for (d, &s) in path.handles.iter().enumerate() {
            let level = &mut self.levels[d];
            level.refs[s] -= 1;
            if level.refs[s] == 0 {
                level.free.push(s);
                self.live_arrays -= 1;
            }
        }
    }

    fn clone_handles(&mut self, handles: &[usize]) -> Vec<usize> {
        for (d, &s) in handles.iter().enumerate() {
            self.levels[d].refs[s] += 1;
        }
        self.counters.forks += 1;
        self.counters.last_fork_handle_copies = handles.len() as u64;
        handles.to_vec()
    }

    /// Downward messages along the branch to leaf `phi`, recomputing only
    /// the depths where the branch departs from the previous leaf's.
    fn calc_down(&mut self, k: usize, phi: usize) -> Result<()> {
        let first = if phi == 0 { 1 } else { self.depth - phi.trailing_zeros() as usize };
        for d in first..=self.depth {
            let node = phi >> (self.depth - d);
            let src = self.paths[k].handles[d - 1];
            let dst = self.writable(k, d)?;
            let (above, below) = self.levels.split_at_mut(d);
            let parent = &above[d - 1].down[src];
            let level = &mut below[0];
            let half = level.down[dst].len();
            let (calc, sib) = if node.is_multiple_of(2) {
                (Calc::Left, &self.uniform[..half])
            } else {
                (Calc::Right, &level.up[dst][..half])
            };
            let out = &mut level.down[dst];
            let (_, ops) = run_calc(&self.shape, self.convention, calc, parent, sib, out, &mut self.scratch);
            self.counters.tensor_ops += ops;
        }
        Ok(())
    }

    /// Upward messages after deciding leaf `phi`, combining every finished
    /// pair of siblings on the way to the root.
    fn calc_up(&mut self, k: usize, phi: usize) -> Result<()> {
        let mut node = phi;
        let mut d = self.depth;
        while node % 2 == 1 {
            let src = self.paths[k].handles[d];
            let dst = self.writable(k, d - 1)?;
            let (above, below) = self.levels.split_at_mut(d);
            let children = &below[0].up[src];
            let half = children.len() / 2;
            let (l, r) = children.split_at(half);
            let up = &mut above[d - 1].up[dst];
            let out = if d == 1 { &mut up[..] } else if (node >> 1).is_multiple_of(2) { &mut up[..2 * half] } else { &mut up[2 * half..] };
            let (_, ops) = run_calc(&self.shape, self.convention, Calc::Parent, l, r, out, &mut self.scratch);
            self.counters.tensor_ops += ops;
            node >>= 1;
            d -= 1;
        }
        Ok(())
    }

    /// Folds the finished pass for `terminal` into the root messages of
    /// path `k`.
    fn close_pass(&mut self, k: usize, terminal: usize) -> Result<()> {
        let s = self.writable(k, 0)?;
        let m = self.shape.spec().components();
        let vol = self.vol;
        let level = &mut self.levels[0];
        for i in 0..self.n {
            let range = i * vol..(i + 1) * vol;
            let evidence = &level.up[s][range.clone()];
            let k_max = evidence
                .iter()
                .enumerate()
                .fold(0, |b, (j, &p)| if p > evidence[b] { j } else { b });
            self.decided[s][i * m + terminal] = self.shape.coord(k_max, terminal);
            self.scratch[..vol].copy_from_slice(&level.down[s][range.clone()]);
            combine_into(&self.scratch[..vol], evidence, &mut level.down[s][range]);
        }
        self.counters.tensor_ops += self.n as u64;
        Ok(())
    }

    pub fn step(&mut self, frozen: Option<Symbol>) -> Result<()> {
        let t = self.t;
        if t >= self.chain.len() {
            return Err(Error::InternalState("all steps already decoded".into()));
        }
        let (g, phi) = self.chain.step(t);
        let q = self.shape.spec().size(g);
        if frozen.is_some_and(|s| s as usize >= q) {
            return Err(Error::Domain(format!("frozen value exceeds q={q}")));
        }
        let qmax = self.marg.len() / self.list_size;
        for k in 0..self.paths.len() {
            self.calc_down(k, phi)?;
            let s = self.paths[k].handles[self.depth];
            let incoming = &self.levels[self.depth].down[s];
            marginal_into(&self.shape, incoming, g, &mut self.marg[k * qmax..k * qmax + q]);
        }

        self.cands.clear();
        for (k, path) in self.paths.iter().enumerate() {
            push_candidates(&mut self.cands, k, path.log_lik, &self.marg[k * qmax..k * qmax + q], frozen);
        }
        rank_candidates(&mut self.cands, self.list_size);

        let mut children = vec![0usize; self.paths.len()];
        for &(_, k, _, _) in &self.cands {
            children[k] += 1;
        }
        let mut old: Vec<Option<LazyPath>> =
            std::mem::take(&mut self.paths).into_iter().map(Some).collect();
        for (k, slot) in old.iter_mut().enumerate() {
            if children[k] == 0 {
                let path = slot.take().expect("each path visited once");
                self.kill(path);
            }
        }
        let cands = std::mem::take(&mut self.cands);
        let mut c = 0;
        while c < cands.len() {
            let k = cands[c].1;
            let parent = old[k].take().expect("each parent cloned once");
            for (j, &(log_lik, _, _, _)) in cands[c..c + children[k]].iter().enumerate() {
                let handles = if j == 0 { parent.handles.clone() } else { self.clone_handles(&parent.handles) };
                self.paths.push(LazyPath { handles, log_lik });
            }
            c += children[k];
        }

        let side = phi % 2;
        let vol = self.vol;
        for (k, &(_, _, _, s)) in cands.iter().enumerate() {
            fill_partial(&self.shape, &[g], &[s], &mut self.leaf);
            let slot = self.writable(k, self.depth)?;
            self.levels[self.depth].up[slot][side * vol..(side + 1) * vol].copy_from_slice(&self.leaf);
            self.counters.tensor_ops += 1;
            self.calc_up(k, phi)?;
        }
        self.cands = cands;
        if phi == self.n - 1 {
            for k in 0..self.paths.len() {
                self.close_pass(k, g)?;
            }
        }
        self.t += 1;
        Ok(())
    }

    /// Decided source block of path `k`; complete once every pass is closed.
    pub fn decided(&self, k: usize) -> Result<SourceBlock> {
        let s = self.paths[k].handles[0];
        SourceBlock::new(self.shape.spec().clone(), self.n, self.decided[s].clone())
    }

    pub fn finish(self) -> Result<ListOutput> {
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
        let mut candidates = Vec::with_capacity(self.paths.len());
        let mut blocks = Vec::with_capacity(self.paths.len());
        for (k, path) in self.paths.iter().enumerate() {
            let x = self.decided(k)?;
            candidates.push(Candidate { path_id: k, log_lik: path.log_lik, u: encode(&x, self.convention)? });
            blocks.push(x);
        }
        let c = &self.counters;
        Ok(ListOutput {
            reconstruction: blocks.swap_remove(best),
            u: candidates[best].u.clone(),
            log_lik: candidates[best].log_lik,
            candidates,
            best,
            failed,
            counters: Counters {
                tensor_ops: c.tensor_ops,
                last_fork_touches: c.last_fork_handle_copies,
                fork_data_copies: c.copied_tensors,
                forks: c.forks,
                pool_high_water: c.arrays_high_water,
                edge_updates: None,
            },
        })
    }
}

fn copy_slot<T: Copy>(slots: &mut [Vec<T>], from: usize, to: usize) {
    let (src, dst) = if from < to {
        let (a, b) = slots.split_at_mut(to);
        (&a[from], &mut b[0])
    } else {
        let (a, b) = slots.split_at_mut(from);
        (&b[0], &mut a[to])
    };
    dst.copy_from_slice(src);
}

/// Lazy-copy counterpart of [`scl_decode`](crate::scl::scl_decode).
pub fn lazy_scl_decode(
    prior: &[ProbTensor],
    chain: &MonotoneChain,
    frozen: &FrozenSpec,
    codeword: &Codeword,
    list_size: usize,
    convention: TransformConvention,
) -> Result<ListOutput> {
    check_inputs(prior, chain)?;
    codeword.check(chain, frozen, prior[0].spec().sizes())?;
    let mut dec = LazyListDecoder::new(prior, chain, list_size, convention)?;
    for v in codeword.per_step(frozen) {
        dec.step(v)?;
    }
    dec.finish()
}

/// Handle copies of a fork taken at step `N / 2` of a corner-chain decode
/// of a uniform binary pair.
pub fn lazy_fork_probe(n: usize, list_size: usize) -> Result<u64> {
    let source = crate::source::JointSource::from_probabilities(vec![2, 2], vec![0.25; 4])?;
    let chain = MonotoneChain::corner(2, n)?;
    let mut dec = LazyListDecoder::new(&source.prior(n), &chain, list_size.max(2), Default::default())?;
    for _ in 0..n / 2 {
        dec.step(Some(0))?;
    }
    let handles = dec.paths[0].handles.clone();
    let handles = dec.clone_handles(&handles);
    let copies = dec.counters.last_fork_handle_copies;
    dec.kill(LazyPath { handles, log_lik: 0.0 });
    Ok(copies)
}
