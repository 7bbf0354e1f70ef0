//! The computational graph of successive cancellation decoding.
//!
//! For a block of `N = 2^n` letters the graph has `2N - 1` edges and `N - 1`
//! vertices, numbered like a binary heap: vertex `b` joins edges `b` (its
//! parent edge), `2b` and `2b + 1`. Edge `1` carries the prior of the `N`
//! source letters and edges `N .. 2N - 1` are the leaves `u_1 .. u_N`. An edge
//! at level `j` holds `N / 2^(j-1)` probability tensors.
//!
//! Records live in a preallocated pool and refer to each other through
//! integer handles. Every edge stores only the vertex it points away from;
//! all edges point toward the vertex held by a [`Head`], so a head together
//! with the records reachable from it is a complete decoder state. Several
//! heads may share records. A vertex owns the edges that point into it and
//! an edge owns the vertex it points away from; usage counts follow this
//! ownership, and a record whose count drops to zero returns to its free
//! list at once.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::source::{check_block_length, SourceBlock};
use crate::tensor::{
    self, combine_into, conv_into, dconv_into, shift_into, ProbTensor, Symbol, TensorShape,
};
use crate::transform::TransformConvention;

pub type VertexId = u32;
pub type EdgeId = u32;

const NIL: u32 = u32::MAX;

const PARENT: usize = 0;
const LEFT: usize = 1;
const RIGHT: usize = 2;

/// Tolerance for recognizing point masses at the root after extraction.
const DELTA_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
struct EdgeRecord {
    /// Vertex this edge points away from; `NIL` on the prior or leaf side.
    from: VertexId,
    /// Heap index of the logical edge.
    index: u32,
    level: u8,
    usage: u32,
    offset: usize,
}

#[derive(Debug, Clone)]
struct VertexRecord {
    edges: [EdgeId; 3],
    beta: u32,
    usage: u32,
}

/// Handle to one logical decoder. Heads are exclusive: the vertex record a
/// head points at is never shared with another head.
#[derive(Debug)]
pub struct Head {
    vertex: VertexId,
    contradicted: bool,
}

impl Head {
    /// Set once any message computed for this decoder hit an all-zero
    /// product, which happens only after a zero-probability decision.
    pub fn contradicted(&self) -> bool {
        self.contradicted
    }
}

/// How a step treats records it has to overwrite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepPolicy {
    /// Overwrite in place; shared records are an error.
    InPlace,
    /// Overwrite exclusive records, write shared ones to fresh records.
    CopyOnWrite,
    /// Always write to fresh records and release the superseded ones.
    AlwaysFresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Calc {
    Left,
    Right,
    Parent,
}

/// Instrumentation counters.
#[derive(Debug, Clone, Default)]
pub struct Counters {
    /// Elementary tensor operations (convolutions, products, relabelings,
    /// copies) performed by message updates and leaf writes.
    pub tensor_ops: u64,
    /// Records read or written by the most recent fork.
    pub last_fork_touches: u64,
    /// Tensor data copied by forks. Stays zero.
    pub fork_data_copies: u64,
    pub forks: u64,
    /// Largest number of simultaneously live edge records.
    pub pool_high_water: usize,
    /// Writes per logical edge index, when tracking is enabled.
    pub edge_updates: Option<Vec<u64>>,
}

/// A pool of edge and vertex records sized for a given list size, plus the
/// message-passing kernels that run on them.
pub struct CompGraph {
    shape: Arc<TensorShape>,
    convention: TransformConvention,
    n: usize,
    capacity: usize,
    vol: usize,
    slab: Vec<f64>,
    edges: Vec<EdgeRecord>,
    vertices: Vec<VertexRecord>,
    free_edges: Vec<Vec<EdgeId>>,
    level_capacity: Vec<usize>,
    free_vertices: Vec<VertexId>,
    live_edges: usize,
    counters: Counters,
    scratch: Vec<f64>,
}

impl std::fmt::Debug for CompGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompGraph")
            .field("n", &self.n)
            .field("capacity", &self.capacity)
            .field("live_edges", &self.live_edges)
            .finish()
    }
}

#[inline]
fn level_of(index: u32) -> usize {
    (32 - index.leading_zeros()) as usize
}

/// Vertices visited when moving from vertex `from` to vertex `to`, excluding
/// `from`: up to the lowest common ancestor, then down to `to`.
pub fn get_path(from: u32, to: u32) -> Vec<u32> {
    let (mut a, mut b) = (from, to);
    let mut up = Vec::new();
    let mut down = Vec::new();
    while a != b {
        if a > b {
            a /= 2;
            up.push(a);
        } else {
            down.push(b);
            b /= 2;
        }
    }
    up.extend(down.into_iter().rev());
    up
}

/// First vertex after `from` on [`get_path`]`(from, to)`, without building
/// the path.
#[inline]
fn next_hop(from: u32, to: u32) -> u32 {
    let depth = |x: u32| 31 - x.leading_zeros();
    let (df, dt) = (depth(from), depth(to));
    if dt > df && to >> (dt - df) == from {
        to >> (dt - df - 1)
    } else {
        from / 2
    }
}

impl CompGraph {
    /// Builds a pool for `capacity` concurrent decoders and initializes one
    /// graph: the root edge gets `prior`, every other edge the uniform
    /// tensor, and the head sits at vertex 1.
    pub fn new(
        prior: &[ProbTensor],
        convention: TransformConvention,
        capacity: usize,
    ) -> Result<(Self, Head)> {
        let n = prior.len();
        check_block_length(n)?;
        if capacity == 0 {
            return Err(Error::Domain("list capacity must be positive".into()));
        }
        let shape = prior[0].shape().clone();
        if prior.iter().any(|p| p.spec() != shape.spec()) {
            return Err(Error::Shape("prior tensors use different alphabets".into()));
        }
        let vol = shape.volume();
        let levels = n.trailing_zeros() as usize + 1;

        let mut edges = Vec::new();
        let mut free_edges = vec![Vec::new(); levels + 1];
        let mut level_capacity = vec![0; levels + 1];
        let mut offset = 0usize;
        for level in 1..=levels {
            let count = 1usize << (level - 1);
            let cap = capacity * count + capacity;
            let size = (n >> (level - 1)) * vol;
            level_capacity[level] = cap;
            let first = edges.len() as EdgeId;
            for _ in 0..cap {
                edges.push(EdgeRecord { from: NIL, index: 0, level: level as u8, usage: 0, offset });
                offset += size;
            }
            free_edges[level] = (first..first + cap as EdgeId).rev().collect();
        }
        let vcap = capacity * (n - 1) + 2 * capacity;
        let vertices = vec![VertexRecord { edges: [NIL; 3], beta: 0, usage: 0 }; vcap];
        let free_vertices = (0..vcap as VertexId).rev().collect();

        let mut g = Self {
            shape,
            convention,
            n,
            capacity,
            vol,
            slab: vec![0.0; offset],
            edges,
            vertices,
            free_edges,
            level_capacity,
            free_vertices,
            live_edges: 0,
            counters: Counters::default(),
            scratch: vec![0.0; 3 * vol],
        };

        let mut edge_of = vec![NIL; 2 * n];
        for index in 1..2 * n as u32 {
            let e = g.alloc_edge(index)?;
            g.edges[e as usize].usage = 1;
            let range = g.data_range(e);
            if index == 1 {
                for (i, p) in prior.iter().enumerate() {
                    g.slab[range.start + i * vol..range.start + (i + 1) * vol]
                        .copy_from_slice(p.entries());
                }
            } else {
                let v = 1.0 / vol as f64;
                g.slab[range].iter_mut().for_each(|x| *x = v);
            }
            edge_of[index as usize] = e;
        }
        let mut vertex_of = vec![NIL; n];
        for beta in 1..n as u32 {
            let v = g.alloc_vertex()?;
            let b = beta as usize;
            g.vertices[v as usize] = VertexRecord {
                edges: [edge_of[b], edge_of[2 * b], edge_of[2 * b + 1]],
                beta,
                usage: 1,
            };
            vertex_of[b] = v;
        }
        // Internal edges point up toward vertex 1, away from their lower end.
        for index in 2..n {
            g.edges[edge_of[index] as usize].from = vertex_of[index];
        }
        Ok((g, Head { vertex: vertex_of[1], contradicted: false }))
    }

    /// Same prior tensor on every root position.
    pub fn with_iid_prior(
        prior: &ProbTensor,
        n: usize,
        convention: TransformConvention,
        capacity: usize,
    ) -> Result<(Self, Head)> {
        check_block_length(n)?;
        Self::new(&vec![prior.clone(); n], convention, capacity)
    }

    pub fn block_len(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> &Arc<TensorShape> {
        &self.shape
    }

    pub fn convention(&self) -> TransformConvention {
        self.convention
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn reset_counters(&mut self) {
        let track = self.counters.edge_updates.is_some();
        self.counters = Counters { pool_high_water: self.live_edges, ..Counters::default() };
        if track {
            self.track_edge_updates(true);
        }
    }

    /// Enables per-edge write counting.
    pub fn track_edge_updates(&mut self, on: bool) {
        self.counters.edge_updates = on.then(|| vec![0; 2 * self.n]);
    }

    pub fn live_edges(&self) -> usize {
        self.live_edges
    }

    pub fn live_vertices(&self) -> usize {
        self.vertices.len() - self.free_vertices.len()
    }

    /// Vertex index `b` of the head.
    pub fn head_beta(&self, head: &Head) -> u32 {
        self.vertices[head.vertex as usize].beta
    }

    // -- pool ---------------------------------------------------------------

    fn alloc_edge(&mut self, index: u32) -> Result<EdgeId> {
        let level = level_of(index);
        let e = self.free_edges[level].pop().ok_or(Error::Capacity {
            level,
            capacity: self.level_capacity[level],
        })?;
        let rec = &mut self.edges[e as usize];
        rec.index = index;
        rec.usage = 0;
        rec.from = NIL;
        self.live_edges += 1;
        self.counters.pool_high_water = self.counters.pool_high_water.max(self.live_edges);
        Ok(e)
    }

    fn alloc_vertex(&mut self) -> Result<VertexId> {
        self.free_vertices.pop().ok_or(Error::Capacity {
            level: 0,
            capacity: self.vertices.len(),
        })
    }

    fn data_range(&self, e: EdgeId) -> Range<usize> {
        let rec = &self.edges[e as usize];
        let len = (self.n >> (rec.level - 1)) * self.vol;
        rec.offset..rec.offset + len
    }

    fn release_vertex(&mut self, v: VertexId) {
        let mut stack = vec![(true, v)];
        while let Some((is_vertex, id)) = stack.pop() {
            if is_vertex {
                let rec = &mut self.vertices[id as usize];
                rec.usage -= 1;
                if rec.usage == 0 {
                    let edges = rec.edges;
                    for e in edges {
                        if self.edges[e as usize].from != id {
                            stack.push((false, e));
                        }
                    }
                    self.free_vertices.push(id);
                }
            } else {
                let rec = &mut self.edges[id as usize];
                rec.usage -= 1;
                if rec.usage == 0 {
                    if rec.from != NIL {
                        stack.push((true, rec.from));
                    }
                    let level = rec.level as usize;
                    self.free_edges[level].push(id);
                    self.live_edges -= 1;
                }
            }
        }
    }

    fn release_edge(&mut self, e: EdgeId) {
        let rec = &mut self.edges[e as usize];
        rec.usage -= 1;
        if rec.usage == 0 {
            let from = rec.from;
            let level = rec.level as usize;
            self.free_edges[level].push(e);
            self.live_edges -= 1;
            if from != NIL {
                self.release_vertex(from);
            }
        }
    }

    /// Drops a decoder; records it no longer shares return to the pool.
    pub fn release(&mut self, head: Head) {
        self.release_vertex(head.vertex);
    }

    /// Creates a second decoder identical to `head`. Only one vertex record
    /// is allocated, whatever the block length.
    pub fn fork(&mut self, head: &Head) -> Result<Head> {
        let v = self.alloc_vertex()?;
        // the head record is read and the new record written
        let mut touches = 2;
        let mut rec = self.vertices[head.vertex as usize].clone();
        rec.usage = 1;
        for &e in &rec.edges {
            self.edges[e as usize].usage += 1;
            touches += 1;
        }
        self.vertices[v as usize] = rec;
        self.counters.last_fork_touches = touches;
        self.counters.forks += 1;
        Ok(Head { vertex: v, contradicted: head.contradicted })
    }

    // -- message passing ----------------------------------------------------

    fn note_update(&mut self, index: u32) {
        if let Some(u) = self.counters.edge_updates.as_mut() {
            u[index as usize] += 1;
        }
    }

    /// Runs one batch calculation at vertex `v`, writing into edge `target`
    /// (which may be a fresh record not yet linked into `v`). Returns false
    /// on a zero-mass product.
    fn compute_into_edge(&mut self, calc: Calc, v: VertexId, target: EdgeId) -> bool {
        let [p, l, r] = self.vertices[v as usize].edges;
        let (sa, sb) = match calc {
            Calc::Left => (p, r),
            Calc::Right => (p, l),
            Calc::Parent => (l, r),
        };
        let ra = self.data_range(sa);
        let rb = self.data_range(sb);
        let rt = self.data_range(target);
        let (before, rest) = self.slab.split_at_mut(rt.start);
        let (out, after) = rest.split_at_mut(rt.len());
        let fetch = |r: &Range<usize>| -> &[f64] {
            if r.end <= rt.start {
                &before[r.clone()]
            } else {
                &after[r.start - rt.end..r.end - rt.end]
            }
        };
        let (a, b) = (fetch(&ra), fetch(&rb));
        let (ok, ops) = run_calc(
            &self.shape,
            self.convention,
            calc,
            a,
            b,
            out,
            &mut self.scratch,
        );
        self.counters.tensor_ops += ops;
        let index = self.edges[target as usize].index;
        self.note_update(index);
        ok
    }

    /// Public form of the three batch calculations: writes the target edge of
    /// the head vertex in place.
    pub fn calc(&mut self, head: &mut Head, which: CalcKind) -> Result<()> {
        let slot = match which {
            CalcKind::Left => LEFT,
            CalcKind::Right => RIGHT,
            CalcKind::Parent => PARENT,
        };
        let target = self.vertices[head.vertex as usize].edges[slot];
        if self.edges[target as usize].usage != 1 {
            return Err(Error::InternalState("calc on a shared edge".into()));
        }
        let calc = match which {
            CalcKind::Left => Calc::Left,
            CalcKind::Right => Calc::Right,
            CalcKind::Parent => Calc::Parent,
        };
        if !self.compute_into_edge(calc, head.vertex, target) {
            head.contradicted = true;
            return Err(Error::Contradiction);
        }
        Ok(())
    }

    /// Moves the head to an adjacent vertex, updating the traversed edge.
    /// Returns false (and does nothing) if `beta` is not adjacent.
    pub fn step_to(&mut self, head: &mut Head, beta: u32) -> Result<bool> {
        self.step(head, beta, StepPolicy::InPlace)
    }

    /// Copy-on-write form of [`step_to`](Self::step_to) for heads that share
    /// records with other decoders.
    pub fn step_to_cow(&mut self, head: &mut Head, beta: u32) -> Result<bool> {
        self.step(head, beta, StepPolicy::CopyOnWrite)
    }

    pub fn step(&mut self, head: &mut Head, beta: u32, policy: StepPolicy) -> Result<bool> {
        let h = head.vertex;
        let hb = self.vertices[h as usize].beta;
        let (calc, slot, far_slot) = if beta == 2 * hb && (beta as usize) < self.n {
            (Calc::Left, LEFT, PARENT)
        } else if beta == 2 * hb + 1 && (beta as usize) < self.n {
            (Calc::Right, RIGHT, PARENT)
        } else if hb > 1 && beta == hb / 2 {
            (Calc::Parent, PARENT, if hb.is_multiple_of(2) { LEFT } else { RIGHT })
        } else {
            return Ok(false);
        };
        let e = self.vertices[h as usize].edges[slot];
        let far = self.edges[e as usize].from;
        debug_assert_ne!(far, NIL);
        let exclusive =
            self.edges[e as usize].usage == 1 && self.vertices[far as usize].usage == 1;
        let fresh = match policy {
            StepPolicy::InPlace if !exclusive => {
                return Err(Error::InternalState(
                    "in-place step over a shared record".into(),
                ))
            }
            StepPolicy::InPlace => false,
            StepPolicy::CopyOnWrite => !exclusive,
            StepPolicy::AlwaysFresh => true,
        };
        if !fresh {
            let ok = self.compute_into_edge(calc, h, e);
            self.edges[e as usize].from = h;
            head.vertex = far;
            head.contradicted |= !ok;
            return Ok(true);
        }
        let index = self.edges[e as usize].index;
        let e2 = self.alloc_edge(index)?;
        let ok = self.compute_into_edge(calc, h, e2);
        let v2 = match self.alloc_vertex() {
            Ok(v) => v,
            Err(err) => {
                self.edges[e2 as usize].usage = 1;
                self.release_edge(e2);
                return Err(err);
            }
        };
        let mut rec = self.vertices[far as usize].clone();
        rec.edges[far_slot] = e2;
        rec.usage = 1;
        for (s, &x) in rec.edges.iter().enumerate() {
            if s != far_slot {
                self.edges[x as usize].usage += 1;
            }
        }
        self.vertices[v2 as usize] = rec;
        let e2rec = &mut self.edges[e2 as usize];
        e2rec.from = h;
        e2rec.usage = 1;
        self.vertices[h as usize].edges[slot] = e2;
        self.release_edge(e);
        head.vertex = v2;
        head.contradicted |= !ok;
        Ok(true)
    }

    /// Walks the head along [`get_path`] to vertex `beta`.
    pub fn walk_to(&mut self, head: &mut Head, beta: u32, policy: StepPolicy) -> Result<()> {
        loop {
            let cur = self.head_beta(head);
            if cur == beta {
                return Ok(());
            }
            let moved = self.step(head, next_hop(cur, beta), policy)?;
            debug_assert!(moved);
        }
    }

    // -- leaves -------------------------------------------------------------

    fn leaf_slot(&self, i: usize) -> (u32, usize) {
        let index = (self.n + i) as u32;
        (index / 2, if index.is_multiple_of(2) { LEFT } else { RIGHT })
    }

    /// Moves the head next to leaf `i` (zero based) and returns the message
    /// flowing into that leaf from the rest of the graph, together with the
    /// evidence currently stored on the leaf.
    pub fn leaf_messages(
        &mut self,
        head: &mut Head,
        i: usize,
        policy: StepPolicy,
        incoming: &mut [f64],
        stored: &mut [f64],
    ) -> Result<()> {
        let (beta, slot) = self.leaf_slot(i);
        self.walk_to(head, beta, policy)?;
        let [p, l, r] = self.vertices[head.vertex as usize].edges;
        let leaf = if slot == LEFT { l } else { r };
        stored.copy_from_slice(&self.slab[self.data_range(leaf)]);
        let (calc, sib) = if slot == LEFT { (Calc::Left, r) } else { (Calc::Right, l) };
        let pa = &self.slab[self.data_range(p)];
        let sb = &self.slab[self.data_range(sib)];
        let (ok, ops) = run_calc(
            &self.shape,
            self.convention,
            calc,
            pa,
            sb,
            incoming,
            &mut self.scratch,
        );
        self.counters.tensor_ops += ops;
        self.note_update(self.edges[leaf as usize].index);
        head.contradicted |= !ok;
        Ok(())
    }

    /// Stores new evidence on leaf `i`; the head must sit at the leaf's
    /// vertex. Shared leaf records are replaced rather than overwritten.
    pub fn write_leaf(&mut self, head: &mut Head, i: usize, data: &[f64]) -> Result<()> {
        let (beta, slot) = self.leaf_slot(i);
        if self.head_beta(head) != beta {
            return Err(Error::InternalState(format!(
                "leaf {i} written from vertex {}",
                self.head_beta(head)
            )));
        }
        let leaf = self.vertices[head.vertex as usize].edges[slot];
        let target = if self.edges[leaf as usize].usage == 1 {
            leaf
        } else {
            let fresh = self.alloc_edge(self.edges[leaf as usize].index)?;
            self.edges[fresh as usize].usage = 1;
            self.vertices[head.vertex as usize].edges[slot] = fresh;
            self.release_edge(leaf);
            fresh
        };
        let range = self.data_range(target);
        self.slab[range].copy_from_slice(data);
        self.counters.tensor_ops += 1;
        self.note_update(self.edges[target as usize].index);
        Ok(())
    }

    /// Evidence stored on leaf `i` of the logical graph of `head`.
    pub fn leaf_tensor(&self, head: &Head, i: usize) -> ProbTensor {
        let index = (self.n + i) as u32;
        let e = self.find_edge(head, index).expect("leaf edge is reachable");
        ProbTensor::from_raw(self.shape.clone(), self.slab[self.data_range(e)].to_vec())
    }

    // -- traversal ----------------------------------------------------------

    /// Visits every record of the logical graph of `head` once by following
    /// `from` links outward from the head. Returns `(edges, vertices)` and
    /// fails if an edge is oriented away from the head.
    pub fn traverse_all(&self, head: &Head) -> Result<(Vec<EdgeId>, Vec<VertexId>)> {
        let mut edges = Vec::with_capacity(2 * self.n);
        let mut vertices = Vec::with_capacity(self.n);
        let mut stack = vec![(head.vertex, NIL)];
        while let Some((v, via)) = stack.pop() {
            vertices.push(v);
            for &e in &self.vertices[v as usize].edges {
                if e == via {
                    if self.edges[e as usize].from != v {
                        return Err(Error::InternalState(format!(
                            "edge {} does not point toward the head",
                            self.edges[e as usize].index
                        )));
                    }
                    continue;
                }
                let from = self.edges[e as usize].from;
                if from == v {
                    return Err(Error::InternalState(format!(
                        "edge {} points away from the head",
                        self.edges[e as usize].index
                    )));
                }
                edges.push(e);
                if from != NIL {
                    stack.push((from, e));
                }
            }
        }
        if edges.len() != 2 * self.n - 1 || vertices.len() != self.n - 1 {
            return Err(Error::InternalState(format!(
                "logical graph has {} edges and {} vertices",
                edges.len(),
                vertices.len()
            )));
        }
        Ok((edges, vertices))
    }

    fn find_edge(&self, head: &Head, index: u32) -> Option<EdgeId> {
        let (edges, _) = self.traverse_all(head).ok()?;
        edges.into_iter().find(|&e| self.edges[e as usize].index == index)
    }

    /// Evidence on every leaf of the logical graph of `head`, by position.
    pub fn leaves(&self, head: &Head) -> Result<Vec<ProbTensor>> {
        let (edges, _) = self.traverse_all(head)?;
        let mut out = vec![None; self.n];
        for e in edges {
            let index = self.edges[e as usize].index as usize;
            if index >= self.n {
                let data = self.slab[self.data_range(e)].to_vec();
                out[index - self.n] = Some(ProbTensor::from_raw(self.shape.clone(), data));
            }
        }
        Ok(out.into_iter().map(|t| t.expect("every leaf is reachable")).collect())
    }

    /// Logical edge index and tensor data of every edge reachable from
    /// `head`, sorted by index.
    pub fn snapshot(&self, head: &Head) -> Result<Vec<(u32, Vec<f64>)>> {
        let (edges, _) = self.traverse_all(head)?;
        let mut out: Vec<(u32, Vec<f64>)> = edges
            .into_iter()
            .map(|e| (self.edges[e as usize].index, self.slab[self.data_range(e)].to_vec()))
            .collect();
        out.sort_by_key(|(i, _)| *i);
        Ok(out)
    }

    /// Record handles of the logical graph, keyed by edge index. Two heads
    /// whose maps agree share those records.
    pub fn edge_records(&self, head: &Head) -> Result<Vec<(u32, EdgeId)>> {
        let (edges, _) = self.traverse_all(head)?;
        let mut out: Vec<(u32, EdgeId)> =
            edges.into_iter().map(|e| (self.edges[e as usize].index, e)).collect();
        out.sort_unstable();
        Ok(out)
    }

    /// Walks the head to vertex 1 and computes the root message upward. With
    /// every leaf decided the root tensors are point masses at the source
    /// letters. The prior edge itself is left untouched.
    pub fn extract(&mut self, head: &mut Head, policy: StepPolicy) -> Result<SourceBlock> {
        self.walk_to(head, 1, policy)?;
        let [_, l, r] = self.vertices[head.vertex as usize].edges;
        let mut out = vec![0.0; self.n * self.vol];
        let la = &self.slab[self.data_range(l)];
        let rb = &self.slab[self.data_range(r)];
        let (ok, ops) = run_calc(
            &self.shape,
            self.convention,
            Calc::Parent,
            la,
            rb,
            &mut out,
            &mut self.scratch,
        );
        self.counters.tensor_ops += ops;
        self.note_update(1);
        if !ok {
            return Err(Error::InternalState("contradiction at the root".into()));
        }
        let spec = self.shape.spec().clone();
        let mut symbols: Vec<Symbol> = Vec::with_capacity(self.n * spec.components());
        for i in 0..self.n {
            let t = &out[i * self.vol..(i + 1) * self.vol];
            let k = t.iter().position(|&p| (p - 1.0).abs() <= DELTA_TOL).ok_or_else(|| {
                Error::InternalState(format!("root tensor {i} is not deterministic"))
            })?;
            symbols.extend(spec.symbols_of(k));
        }
        SourceBlock::new(spec, self.n, symbols)
    }
}

/// Which edge of the head vertex a public batch calculation writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalcKind {
    Left,
    Right,
    Parent,
}

/// Batch message update over `l` butterflies.
///
/// * `Left`:   `a` = parent (2l), `b` = right (l); `L = P_i - (pi^-1 P_{i+l} * R)`
/// * `Right`:  `a` = parent (2l), `b` = left (l);  `R = pi^-1 P_{i+l} * (P_i - L)`
/// * `Parent`: `a` = left (l), `b` = right (l); `P_i = L + R`, `P_{i+l} = pi R`
///
/// where `-` and `+` are the difference and sum convolutions and `*` the
/// normalized product. Returns (no zero-mass product, tensor ops).
pub(crate) fn run_calc(
    shape: &TensorShape,
    convention: TransformConvention,
    calc: Calc,
    a: &[f64],
    b: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) -> (bool, u64) {
    let vol = shape.volume();
    let shifted = convention == TransformConvention::CyclicShift;
    let (s1, rest) = scratch.split_at_mut(vol);
    let s2 = &mut rest[..vol];
    let mut ok = true;
    let mut ops = 0u64;
    match calc {
        Calc::Left | Calc::Right => {
            let l = b.len() / vol;
            for i in 0..l {
                let p1 = &a[i * vol..(i + 1) * vol];
                let mut p2 = &a[(i + l) * vol..(i + l + 1) * vol];
                if shifted {
                    shift_into(shape, p2, s1, false);
                    p2 = s1;
                    ops += 1;
                }
                let sib = &b[i * vol..(i + 1) * vol];
                let o = &mut out[i * vol..(i + 1) * vol];
                if calc == Calc::Left {
                    ok &= combine_into(p2, sib, s2);
                    dconv_into(shape, p1, s2, o);
                } else {
                    dconv_into(shape, p1, sib, s2);
                    ok &= combine_into(p2, s2, o);
                }
                ops += 2;
            }
        }
        Calc::Parent => {
            let l = a.len() / vol;
            let (lo, hi) = out.split_at_mut(l * vol);
            for i in 0..l {
                let lt = &a[i * vol..(i + 1) * vol];
                let rt = &b[i * vol..(i + 1) * vol];
                conv_into(shape, lt, rt, &mut lo[i * vol..(i + 1) * vol]);
                let dst = &mut hi[i * vol..(i + 1) * vol];
                if shifted {
                    shift_into(shape, rt, dst, true);
                } else {
                    dst.copy_from_slice(rt);
                }
                ops += 2;
            }
        }
    }
    (ok, ops)
}

/// Zeroes the entries of `data` whose `component` differs from `symbol` and
/// renormalizes: the leaf evidence after deciding one more component.
pub(crate) fn impose(shape: &TensorShape, data: &mut [f64], component: usize, symbol: Symbol) {
    for (k, x) in data.iter_mut().enumerate() {
        if shape.coord(k, component) != symbol {
            *x = 0.0;
        }
    }
    if !tensor::normalize(data) {
        tensor::fill_partial(shape, &[component], &[symbol], data);
    }
}
