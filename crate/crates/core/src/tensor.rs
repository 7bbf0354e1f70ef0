//! Dense joint probability tensors over products of cyclic groups.
//!
//! A tensor over the alphabet `(q_1, ..., q_M)` stores `q_1 * ... * q_M`
//! entries in row-major order with the last component varying fastest.
//! Component and symbol indices are zero based throughout the API.
//!
//! The slice kernels at the bottom of this module are what the decoding graph
//! runs in its inner loops; [`ProbTensor`] wraps them for callers that work
//! with single tensors.

use std::sync::Arc;

use crate::error::{Error, Result};

pub type Symbol = u32;

/// Alphabet sizes of the `M` components.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlphabetSpec {
    sizes: Vec<usize>,
}

impl AlphabetSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Domain("alphabet needs at least one component".into()));
        }
        if let Some(q) = sizes.iter().find(|&&q| q < 2) {
            return Err(Error::Domain(format!("alphabet size {q} < 2")));
        }
        let volume = sizes.iter().try_fold(1usize, |acc, &q| acc.checked_mul(q));
        match volume {
            Some(v) if v <= 1 << 16 => Ok(Self { sizes }),
            _ => Err(Error::Domain("alphabet volume too large".into())),
        }
    }

    pub fn binary(components: usize) -> Self {
        Self::new(vec![2; components]).expect("binary alphabet is valid")
    }

    pub fn components(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, component: usize) -> usize {
        self.sizes[component]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of tensor entries.
    pub fn volume(&self) -> usize {
        self.sizes.iter().product()
    }

    /// Row-major flat index of a symbol vector.
    pub fn flat_index(&self, symbols: &[Symbol]) -> usize {
        debug_assert_eq!(symbols.len(), self.sizes.len());
        symbols
            .iter()
            .zip(&self.sizes)
            .fold(0, |acc, (&s, &q)| acc * q + s as usize)
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn symbols_of(&self, mut flat: usize) -> Vec<Symbol> {
        let mut out = vec![0; self.sizes.len()];
        for (slot, &q) in out.iter_mut().zip(&self.sizes).rev() {
            *slot = (flat % q) as Symbol;
            flat /= q;
        }
        out
    }

    fn check_component(&self, component: usize) -> Result<()> {
        if component >= self.sizes.len() {
            return Err(Error::Domain(format!(
                "component {component} out of range for {} components",
                self.sizes.len()
            )));
        }
        Ok(())
    }
}

/// Precomputed index tables for group arithmetic on one alphabet.
#[derive(Debug)]
pub struct TensorShape {
    spec: AlphabetSpec,
    volume: usize,
    /// `add[k * volume + i]` is the flat index of `k + i`.
    add: Vec<u32>,
    /// `sub[k * volume + i]` is the flat index of `k - i`.
    sub: Vec<u32>,
    /// `coords[k * M + c]` is component `c` of flat index `k`.
    coords: Vec<Symbol>,
    /// Flat index of the all-ones vector, the generator of the cyclic shift.
    ones: usize,
}

impl TensorShape {
    pub fn new(spec: AlphabetSpec) -> Arc<Self> {
        let volume = spec.volume();
        let m = spec.components();
        let mut coords = Vec::with_capacity(volume * m);
        for k in 0..volume {
            coords.extend(spec.symbols_of(k));
        }
        let mut add = vec![0u32; volume * volume];
        let mut sub = vec![0u32; volume * volume];
        let mut buf_add = vec![0 as Symbol; m];
        let mut buf_sub = vec![0 as Symbol; m];
        for k in 0..volume {
            for i in 0..volume {
                for c in 0..m {
                    let q = spec.size(c) as Symbol;
                    let (a, b) = (coords[k * m + c], coords[i * m + c]);
                    buf_add[c] = (a + b) % q;
                    buf_sub[c] = (a + q - b) % q;
                }
                add[k * volume + i] = spec.flat_index(&buf_add) as u32;
                sub[k * volume + i] = spec.flat_index(&buf_sub) as u32;
            }
        }
        let ones = spec.flat_index(&vec![1; m]);
        Arc::new(Self { spec, volume, add, sub, coords, ones })
    }

    pub fn spec(&self) -> &AlphabetSpec {
        &self.spec
    }

    pub fn volume(&self) -> usize {
        self.volume
    }

    #[inline]
    pub fn coord(&self, flat: usize, component: usize) -> Symbol {
        self.coords[flat * self.spec.components() + component]
    }
}

/// A normalized joint distribution over one alphabet.
#[derive(Debug, Clone)]
pub struct ProbTensor {
    shape: Arc<TensorShape>,
    data: Vec<f64>,
}

impl PartialEq for ProbTensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape.spec == other.shape.spec && self.data == other.data
    }
}

impl ProbTensor {
    /// Builds a tensor from nonnegative weights, normalizing them.
    pub fn from_weights(shape: &Arc<TensorShape>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != shape.volume {
            return Err(Error::Shape(format!(
                "expected {} entries, got {}",
                shape.volume,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain("tensor weights must be finite and nonnegative".into()));
        }
        let mut data = weights;
        if !normalize(&mut data) {
            return Err(Error::Contradiction);
        }
        Ok(Self { shape: shape.clone(), data })
    }

    pub fn uniform(shape: &Arc<TensorShape>) -> Self {
        let mut data = vec![0.0; shape.volume];
        fill_uniform(&mut data);
        Self { shape: shape.clone(), data }
    }

    /// Point mass at the given symbol vector.
    pub fn delta(shape: &Arc<TensorShape>, symbols: &[Symbol]) -> Result<Self> {
        let all: Vec<usize> = (0..shape.spec.components()).collect();
        Self::partial_deterministic(shape, &all, symbols)
    }

    /// Zero on entries contradicting `values` at the `known` components,
    /// uniform on the rest. An empty `known` set gives the uniform tensor.
    pub fn partial_deterministic(
        shape: &Arc<TensorShape>,
        known: &[usize],
        values: &[Symbol],
    ) -> Result<Self> {
        if known.len() != values.len() {
            return Err(Error::Shape("known components and values differ in length".into()));
        }
        for (&c, &v) in known.iter().zip(values) {
            shape.spec.check_component(c)?;
            if v as usize >= shape.spec.size(c) {
                return Err(Error::Domain(format!(
                    "symbol {v} out of range for component {c} (size {})",
                    shape.spec.size(c)
                )));
            }
        }
        let mut data = vec![0.0; shape.volume];
        fill_partial(shape, known, values, &mut data);
        Ok(Self { shape: shape.clone(), data })
    }

    pub(crate) fn from_raw(shape: Arc<TensorShape>, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.volume);
        Self { shape, data }
    }

    pub fn shape(&self) -> &Arc<TensorShape> {
        &self.shape
    }

    pub fn spec(&self) -> &AlphabetSpec {
        &self.shape.spec
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, symbols: &[Symbol]) -> f64 {
        self.data[self.shape.spec.flat_index(symbols)]
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.shape.spec != other.shape.spec {
            return Err(Error::Shape(format!(
                "alphabets {:?} and {:?} differ",
                self.shape.spec.sizes, other.shape.spec.sizes
            )));
        }
        Ok(())
    }

    /// Distribution of the componentwise sum of independent variables.
    pub fn conv(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = vec![0.0; self.shape.volume];
        conv_into(&self.shape, &self.data, &other.data, &mut out);
        Ok(Self::from_raw(self.shape.clone(), out))
    }

    /// Distribution of `self - other` for independent variables.
    pub fn dconv(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = vec![0.0; self.shape.volume];
        dconv_into(&self.shape, &self.data, &other.data, &mut out);
        Ok(Self::from_raw(self.shape.clone(), out))
    }

    /// Normalized elementwise product of two observations of one variable.
    pub fn combine(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = vec![0.0; self.shape.volume];
        if !combine_into(&self.data, &other.data, &mut out) {
            return Err(Error::Contradiction);
        }
        Ok(Self::from_raw(self.shape.clone(), out))
    }

    pub fn marginal(&self, component: usize) -> Result<Vec<f64>> {
        self.shape.spec.check_component(component)?;
        let mut out = vec![0.0; self.shape.spec.size(component)];
        marginal_into(&self.shape, &self.data, component, &mut out);
        Ok(out)
    }

    /// Most likely symbol of one component; ties go to the smallest symbol.
    pub fn hard_decision(&self, component: usize) -> Result<Symbol> {
        Ok(argmax(&self.marginal(component)?))
    }

    pub fn entropy_bits(&self) -> f64 {
        entropy_bits(&self.data)
    }

    /// True when the tensor is a point mass up to `tol`.
    pub fn is_delta(&self, tol: f64) -> bool {
        self.data.iter().any(|&p| (p - 1.0).abs() <= tol)
    }

    /// Support point of a point mass, if the tensor is one.
    pub fn support_point(&self, tol: f64) -> Option<Vec<Symbol>> {
        self.data
            .iter()
            .position(|&p| (p - 1.0).abs() <= tol)
            .map(|k| self.shape.spec.symbols_of(k))
    }
}

/// Shannon entropy in bits of a probability vector, with `0 log 0 = 0`.
pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.log2())
        .sum::<f64>()
}

/// Resolution under which two probabilities count as tied.
pub const PROB_TIE: f64 = 1e-12;

/// Probability rounded to multiples of [`PROB_TIE`], so that values that
/// differ only by rounding noise compare equal.
#[inline]
pub fn prob_key(p: f64) -> i64 {
    (p / PROB_TIE).round() as i64
}

/// Index of the largest entry; ties within [`PROB_TIE`] go to the smallest
/// index.
pub fn argmax(p: &[f64]) -> Symbol {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate().skip(1) {
        if prob_key(x) > prob_key(p[best]) {
            best = i;
        }
    }
    best as Symbol
}

// ---------------------------------------------------------------------------
// Slice kernels.

/// Rescales to unit mass. Returns false when the mass is zero or not finite.
#[inline]
pub(crate) fn normalize(data: &mut [f64]) -> bool {
    let total: f64 = data.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return false;
    }
    let inv = 1.0 / total;
    data.iter_mut().for_each(|x| *x *= inv);
    true
}

#[inline]
pub(crate) fn fill_uniform(data: &mut [f64]) {
    let v = 1.0 / data.len() as f64;
    data.iter_mut().for_each(|x| *x = v);
}

pub(crate) fn fill_partial(
    shape: &TensorShape,
    known: &[usize],
    values: &[Symbol],
    out: &mut [f64],
) {
    let mut count = 0usize;
    for (k, slot) in out.iter_mut().enumerate() {
        let keep = known
            .iter()
            .zip(values)
            .all(|(&c, &v)| shape.coord(k, c) == v);
        *slot = if keep { 1.0 } else { 0.0 };
        count += keep as usize;
    }
    let v = 1.0 / count as f64;
    out.iter_mut().for_each(|x| *x *= v);
}

/// `out[k] = sum_i a[k - i] * b[i]`.
#[inline]
pub(crate) fn conv_into(shape: &TensorShape, a: &[f64], b: &[f64], out: &mut [f64]) {
    let v = shape.volume;
    for (k, slot) in out.iter_mut().enumerate() {
        let row = &shape.sub[k * v..(k + 1) * v];
        *slot = row.iter().zip(b).map(|(&j, &bi)| a[j as usize] * bi).sum();
    }
    normalize(out);
}

/// `out[k] = sum_i a[k + i] * b[i]`.
#[inline]
pub(crate) fn dconv_into(shape: &TensorShape, a: &[f64], b: &[f64], out: &mut [f64]) {
    let v = shape.volume;
    for (k, slot) in out.iter_mut().enumerate() {
        let row = &shape.add[k * v..(k + 1) * v];
        *slot = row.iter().zip(b).map(|(&j, &bi)| a[j as usize] * bi).sum();
    }
    normalize(out);
}

/// Normalized elementwise product. On zero mass writes the uniform tensor
/// and returns false.
#[inline]
pub(crate) fn combine_into(a: &[f64], b: &[f64], out: &mut [f64]) -> bool {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = x * y;
    }
    if normalize(out) {
        true
    } else {
        fill_uniform(out);
        false
    }
}

/// Relabels through the cyclic shift `x -> x + 1` on every component.
/// `forward` maps the law of `X` to the law of `X + 1`; otherwise to `X - 1`.
#[inline]
pub(crate) fn shift_into(shape: &TensorShape, a: &[f64], out: &mut [f64], forward: bool) {
    let v = shape.volume;
    let table = if forward { &shape.sub } else { &shape.add };
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = a[table[k * v + shape.ones] as usize];
    }
}

pub(crate) fn marginal_into(shape: &TensorShape, a: &[f64], component: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for (k, &p) in a.iter().enumerate() {
        out[shape.coord(k, component) as usize] += p;
    }
    normalize(out);
}
