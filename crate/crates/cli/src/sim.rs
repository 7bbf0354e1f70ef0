//! Block error rate simulation over sum-rate offsets and list sizes.

use monochain::construction::{
    chain_rates, estimate_step_statistics, scale_rates, select_frozen, Statistic,
};
use monochain::rng::SplitMix64;
use monochain::transform::encode;
use monochain::{Codeword, JointSource, TransformConvention};
use rayon::prelude::*;

use crate::{decode, ChainChoice, CliError, CliResult, Engine};

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub source: JointSource,
    pub chain: ChainChoice,
    pub n: usize,
    pub trials: usize,
    pub lists: Vec<usize>,
    /// Sum-rate offsets in bits above the joint entropy.
    pub offsets: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub engine: Engine,
    pub statistic: Statistic,
    pub convention: TransformConvention,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub n: usize,
    pub chain_id: String,
    /// Transmitted sum rate in bits per source letter.
    pub sum_rate: f64,
    pub list: usize,
    pub trials: usize,
    pub block_errors: usize,
    pub seed: u64,
}

impl SimRow {
    pub fn bler(&self) -> f64 {
        self.block_errors as f64 / self.trials as f64
    }
}

pub const SIM_HEADER: &str = "n,chain_id,sum_rate,L,trials,block_errors,bler,seed";

pub fn sim_csv(rows: &[SimRow]) -> String {
    let mut out = format!("{SIM_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{},{},{},{:.6},{}\n",
            r.n,
            r.chain_id,
            r.sum_rate,
            r.list,
            r.trials,
            r.block_errors,
            r.bler(),
            r.seed
        ));
    }
    out
}

/// Seed of the block drawn in trial `k`. Every offset and list size sees
/// the same blocks.
pub fn trial_seed(seed: u64, k: usize) -> u64 {
    SplitMix64::new(seed ^ 0x5EED_B10C).next_u64().wrapping_add(k as u64)
}

/// One construction per offset from a single set of step statistics, then
/// `trials` encode/decode rounds per offset and list size. Trials run on the
/// current rayon pool; counts do not depend on its size.
pub fn simulate(cfg: &SimConfig) -> CliResult<Vec<SimRow>> {
    if cfg.trials == 0 {
        return Err(CliError::Input("trials must be positive".into()));
    }
    if cfg.lists.is_empty() || cfg.lists.contains(&0) {
        return Err(CliError::Input("list sizes must be positive".into()));
    }
    if cfg.offsets.is_empty() {
        return Err(CliError::Input("the sweep needs at least one offset".into()));
    }
    let m = cfg.source.terminals();
    let chain = cfg.chain.build(m, cfg.n)?;
    let sizes = cfg.source.spec().sizes().to_vec();
    let stats = estimate_step_statistics(&cfg.source, &chain, cfg.samples, cfg.seed, cfg.convention)?;
    let base = chain_rates(&stats.entropy, &chain)?;
    let prior = cfg.source.prior(cfg.n);
    let h = cfg.source.joint_entropy();

    let mut rows = Vec::new();
    for &d in &cfg.offsets {
        let rates = scale_rates(&base, (h + d).max(0.0), &sizes)?;
        let frozen = select_frozen(stats.ranking(cfg.statistic), &chain, &rates, &sizes)?;
        let sum_rate: f64 = frozen
            .steps()
            .iter()
            .map(|&t| (sizes[chain.gamma()[t]] as f64).log2())
            .sum::<f64>()
            / cfg.n as f64;
        for &list in &cfg.lists {
            let errors: Vec<bool> = (0..cfg.trials)
                .into_par_iter()
                .map(|k| -> CliResult<bool> {
                    let x = cfg.source.sample_block(cfg.n, trial_seed(cfg.seed, k))?;
                    let u = encode(&x, cfg.convention)?;
                    let cw = Codeword::from_u(&u, &chain, &frozen);
                    let out = decode(cfg.engine, &prior, &chain, &frozen, &cw, list, cfg.convention)?;
                    Ok(out.failed || out.reconstruction != x)
                })
                .collect::<CliResult<_>>()?;
            rows.push(SimRow {
                n: cfg.n,
                chain_id: cfg.chain.id(),
                sum_rate,
                list,
                trials: cfg.trials,
                block_errors: errors.iter().filter(|&&e| e).count(),
                seed: cfg.seed,
            });
        }
    }
    Ok(rows)
}
