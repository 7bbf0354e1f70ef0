//! Successive cancellation and list decoding of monotone chain polar codes
//! for distributed lossless compression of correlated sources.
//!
//! The decoder runs on a computational graph whose state is owned by a
//! movable head, so a list decoder can fork a path by cloning one vertex
//! record. See [`graph`] for the data structure, [`sc`] and [`scl`] for the
//! decoders and [`construction`] for frozen-set selection.

pub mod chain;
pub mod construction;
pub mod error;
pub mod graph;
pub mod lazycopy;
pub mod oracle;
pub mod rng;
pub mod sc;
pub mod scl;
pub mod source;
pub mod tensor;
pub mod transform;

pub use chain::MonotoneChain;
pub use error::{Error, Result};
pub use graph::{CompGraph, Head, StepPolicy};
pub use sc::{sc_decode, Codeword, FrozenSpec, ScDecoder, ScOutput};
pub use scl::{scl_decode, Candidate, ListDecoder, ListOutput};
pub use source::{JointSource, SourceBlock};
pub use tensor::{AlphabetSpec, ProbTensor, Symbol, TensorShape};
pub use transform::TransformConvention;
