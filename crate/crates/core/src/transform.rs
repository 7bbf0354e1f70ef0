//! The polar transform as a top-down butterfly recursion.
//!
//! A parent group `P_1..P_2l` splits into children with `P_i = L_i + R_i`
//! and `P_{i+l} = pi(R_i)`, componentwise modulo each alphabet size. Leaves
//! read left to right are the transformed symbols `u_1..u_N`. The decoding
//! graph uses exactly this convention, so encoder and decoder agree by
//! construction.

use crate::error::Result;
use crate::source::SourceBlock;
use crate::tensor::Symbol;

/// Relabeling applied to the right child on its way into the second half of
/// the parent group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransformConvention {
    /// `pi(x) = x`; plain modular addition.
    #[default]
    Identity,
    /// `pi(x) = x + 1` on every component.
    CyclicShift,
}

impl TransformConvention {
    fn offset(self) -> Symbol {
        match self {
            TransformConvention::Identity => 0,
            TransformConvention::CyclicShift => 1,
        }
    }
}

/// Maps a source block `x` to its transformed block `u`.
pub fn encode(block: &SourceBlock, convention: TransformConvention) -> Result<SourceBlock> {
    let mut out = block.clone();
    let sizes: Vec<Symbol> = block.spec().sizes().iter().map(|&q| q as Symbol).collect();
    let m = sizes.len();
    let shift = convention.offset();
    let data = out.symbols_mut();
    let n = block.len();
    let mut size = n;
    while size >= 2 {
        let l = size / 2;
        for start in (0..n).step_by(size) {
            for i in start..start + l {
                for (c, &q) in sizes.iter().enumerate() {
                    let p1 = data[i * m + c];
                    let p2 = data[(i + l) * m + c];
                    let r = (p2 + q - shift % q) % q;
                    data[i * m + c] = (p1 + q - r) % q;
                    data[(i + l) * m + c] = r;
                }
            }
        }
        size = l;
    }
    Ok(out)
}

/// Inverse of [`encode`].
pub fn inverse(ublock: &SourceBlock, convention: TransformConvention) -> Result<SourceBlock> {
    let mut out = ublock.clone();
    let sizes: Vec<Symbol> = ublock.spec().sizes().iter().map(|&q| q as Symbol).collect();
    let m = sizes.len();
    let shift = convention.offset();
    let data = out.symbols_mut();
    let n = ublock.len();
    let mut size = 2;
    while size <= n {
        let l = size / 2;
        for start in (0..n).step_by(size) {
            for i in start..start + l {
                for (c, &q) in sizes.iter().enumerate() {
                    let left = data[i * m + c];
                    let r = data[(i + l) * m + c];
                    data[i * m + c] = (left + r) % q;
                    data[(i + l) * m + c] = (r + shift) % q;
                }
            }
        }
        size *= 2;
    }
    Ok(out)
}
