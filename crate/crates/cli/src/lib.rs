//! Experiment harness behind the `monochain` command: chain selection,
//! block error rate simulation and runtime benchmarks, with CSV output.

pub mod bench;
pub mod sim;

use monochain::lazycopy::lazy_scl_decode;
use monochain::scl::scl_decode;
use monochain::{Codeword, FrozenSpec, ListOutput, MonotoneChain, ProbTensor, TransformConvention};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] monochain::Error),
}

impl CliError {
    /// Process exit code: 2 for bad input, 3 for unsupported
    /// configurations, 4 for internal invariant violations.
    pub fn exit_code(&self) -> i32 {
        use monochain::Error as E;
        match self {
            CliError::Input(_) => 2,
            CliError::Core(e) => match e {
                E::UnsupportedChain(_) => 3,
                E::InternalState(_) | E::Capacity { .. } | E::Contradiction => 4,
                E::Shape(_)
                | E::Domain(_)
                | E::Parse(_)
                | E::Chain(_)
                | E::BlockLength(_)
                | E::OracleGuard(_)
                | E::Io(_) => 2,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// List decoder implementation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    /// Shared computational graph with constant-cost forks.
    Graph,
    /// Per-depth arrays with lazy copies; corner chains only.
    LazyCopy,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Graph => "graph",
            Engine::LazyCopy => "lazycopy",
        }
    }
}

pub fn decode(
    engine: Engine,
    prior: &[ProbTensor],
    chain: &MonotoneChain,
    frozen: &FrozenSpec,
    codeword: &Codeword,
    list_size: usize,
    convention: TransformConvention,
) -> monochain::Result<ListOutput> {
    match engine {
        Engine::Graph => scl_decode(prior, chain, frozen, codeword, list_size, convention),
        Engine::LazyCopy => lazy_scl_decode(prior, chain, frozen, codeword, list_size, convention),
    }
}

/// How the decoding order is chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainChoice {
    Corner,
    Alternating,
    Random(u64),
    Given { id: String, chain: MonotoneChain },
}

impl ChainChoice {
    pub fn build(&self, terminals: usize, n: usize) -> CliResult<MonotoneChain> {
        let chain = match self {
            ChainChoice::Corner => MonotoneChain::corner(terminals, n)?,
            ChainChoice::Alternating => {
                if terminals != 2 {
                    return Err(CliError::Input("the alternating chain needs two terminals".into()));
                }
                MonotoneChain::alternating(n)?
            }
            ChainChoice::Random(seed) => MonotoneChain::random(terminals, n, *seed)?,
            ChainChoice::Given { chain, .. } => {
                if chain.terminals() != terminals || chain.block_len() != n {
                    return Err(CliError::Input(format!(
                        "chain file has M={} N={}, expected M={terminals} N={n}",
                        chain.terminals(),
                        chain.block_len()
                    )));
                }
                chain.clone()
            }
        };
        Ok(chain)
    }

    /// Identifier written to the `chain_id` CSV column.
    pub fn id(&self) -> String {
        match self {
            ChainChoice::Corner => "corner".into(),
            ChainChoice::Alternating => "alternating".into(),
            ChainChoice::Random(seed) => format!("random-{seed}"),
            ChainChoice::Given { id, .. } => id.clone(),
        }
    }
}

/// Parses a comma-separated list.
pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| CliError::Input(format!("{what} {s:?}: {e}"))))
        .collect()
}

/// Runs `f` on a rayon pool with `threads` workers (0 picks the default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
