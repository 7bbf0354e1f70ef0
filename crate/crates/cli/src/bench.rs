//! Runtime and instrumentation benchmark of the list decoders with every
//! step unfrozen.

use std::time::Instant;

use monochain::{Codeword, FrozenSpec, JointSource, TransformConvention};

use crate::{decode, ChainChoice, CliResult, Engine};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub source: JointSource,
    pub chain: ChainChoice,
    pub ns: Vec<usize>,
    pub list: usize,
    pub engines: Vec<Engine>,
    pub rounds: usize,
    pub convention: TransformConvention,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub engine: Engine,
    pub mean_runtime_s: f64,
    /// Counters of the first round.
    pub tensor_ops: u64,
    pub fork_touches: u64,
    pub pool_highwater: usize,
}

pub const BENCH_HEADER: &str = "n,engine,mean_runtime_s,tensor_ops,fork_touches,pool_highwater";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{BENCH_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{},{},{}\n",
            r.n,
            r.engine.name(),
            r.mean_runtime_s,
            r.tensor_ops,
            r.fork_touches,
            r.pool_highwater
        ));
    }
    out
}

/// Decodes `rounds` times per block length and engine, one round after
/// another. With nothing frozen the decoder never reads the source block,
/// so every round does the same work.
///
/// `fork_touches` is the graph decoder's record touches per fork, or the
/// lazy-copy decoder's handle copies per fork; `pool_highwater` is the peak
/// number of live edge records or per-depth arrays.
pub fn bench(cfg: &BenchConfig) -> CliResult<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        let chain = cfg.chain.build(cfg.source.terminals(), n)?;
        let prior = cfg.source.prior(n);
        let frozen = FrozenSpec::none(chain.len());
        let cw = Codeword::new(Vec::new());
        for &engine in &cfg.engines {
            let mut total = 0.0;
            let mut first = None;
            for _ in 0..cfg.rounds.max(1) {
                let start = Instant::now();
                let out = decode(engine, &prior, &chain, &frozen, &cw, cfg.list, cfg.convention)?;
                total += start.elapsed().as_secs_f64();
                first.get_or_insert(out.counters);
            }
            let c = first.expect("at least one round");
            rows.push(BenchRow {
                n,
                engine,
                mean_runtime_s: total / cfg.rounds.max(1) as f64,
                tensor_ops: c.tensor_ops,
                fork_touches: c.last_fork_touches,
                pool_highwater: c.pool_high_water,
            });
        }
    }
    Ok(rows)
}
