//! Browser bindings: chain generation, per-step entropy estimates, and a
//! small Monte Carlo comparison of single-path and list decoding.
//!
//! Each export wraps a plain Rust function so the logic can be tested
//! natively.

use monochain::construction::{
    chain_rates, estimate_step_entropies, scale_rates, select_frozen, Construction,
};
use monochain::sc::Codeword;
use monochain::scl_decode;
use monochain::transform::encode;
use monochain::{JointSource, MonotoneChain};
use wasm_bindgen::prelude::*;

/// Chains longer than this are refused to keep the page responsive.
const MAX_BLOCK: usize = 256;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn check_block(n: usize) -> Result<(), String> {
    if n > MAX_BLOCK {
        return Err(format!("block length {n} exceeds the demo limit of {MAX_BLOCK}"));
    }
    Ok(())
}

/// Chain as one-based terminal ids. `kind` is corner, alternating or random.
pub fn generate_chain(kind: &str, terminals: usize, n: usize, seed: u64) -> Result<String, String> {
    check_block(n)?;
    let chain = match kind {
        "corner" => MonotoneChain::corner(terminals, n),
        "alternating" => MonotoneChain::alternating(n),
        "random" => MonotoneChain::random(terminals, n, seed),
        other => return Err(format!("unknown chain kind {other:?}")),
    }
    .map_err(err)?;
    Ok(chain.to_text())
}

/// Estimated conditional entropy of every chain step as `gamma,i,bits`
/// lines (one-based), preceded by a `# rates` line with the chain rates.
pub fn entropy_profile(source: &str, chain: &str, samples: usize, seed: u64) -> Result<String, String> {
    let source = JointSource::parse(source).map_err(err)?;
    let chain = MonotoneChain::parse(chain).map_err(err)?;
    check_block(chain.block_len())?;
    let h = estimate_step_entropies(&source, &chain, samples, seed, Default::default()).map_err(err)?;
    let rates = chain_rates(&h, &chain).map_err(err)?;
    let mut out = format!(
        "# rates {} joint {:.6}\n",
        rates.iter().map(|r| format!("{r:.6}")).collect::<Vec<_>>().join(" "),
        source.joint_entropy()
    );
    for (t, bits) in h.iter().enumerate() {
        let (g, i) = chain.step(t);
        out.push_str(&format!("{},{},{bits:.6}\n", g + 1, i + 1));
    }
    Ok(out)
}

/// Compresses `trials` sampled blocks at joint entropy plus `offset` and
/// counts block errors with list size 1 and `list`. Returns
/// `sum_rate,errors_1,errors_L,trials`.
pub fn compare_lists(
    source: &str,
    chain: &str,
    offset: f64,
    list: usize,
    trials: usize,
    seed: u64,
) -> Result<String, String> {
    let source = JointSource::parse(source).map_err(err)?;
    let chain = MonotoneChain::parse(chain).map_err(err)?;
    let n = chain.block_len();
    check_block(n)?;
    let sizes = source.spec().sizes().to_vec();
    let h = estimate_step_entropies(&source, &chain, 100, seed, Default::default()).map_err(err)?;
    let base = chain_rates(&h, &chain).map_err(err)?;
    let rates = scale_rates(&base, (source.joint_entropy() + offset).max(0.0), &sizes).map_err(err)?;
    let frozen = select_frozen(&h, &chain, &rates, &sizes).map_err(err)?;
    let c = Construction::new(chain, h, frozen).map_err(err)?;
    let sent: f64 = c.transmitted_rates(&sizes).iter().sum();
    let prior = source.prior(n);
    let mut errors = [0usize; 2];
    for k in 0..trials {
        let x = source.sample_block(n, seed.wrapping_add(1 + k as u64)).map_err(err)?;
        let cw = Codeword::from_u(&encode(&x, Default::default()).map_err(err)?, &c.chain, &c.frozen);
        for (slot, l) in [1, list.max(1)].into_iter().enumerate() {
            let out = scl_decode(&prior, &c.chain, &c.frozen, &cw, l, Default::default()).map_err(err)?;
            errors[slot] += usize::from(out.reconstruction != x);
        }
    }
    Ok(format!("{sent:.6},{},{},{trials}", errors[0], errors[1]))
}

#[wasm_bindgen(js_name = generateChain)]
pub fn generate_chain_js(kind: &str, terminals: usize, n: usize, seed: u64) -> Result<String, String> {
    generate_chain(kind, terminals, n, seed)
}

#[wasm_bindgen(js_name = entropyProfile)]
pub fn entropy_profile_js(source: &str, chain: &str, samples: usize, seed: u64) -> Result<String, String> {
    entropy_profile(source, chain, samples, seed)
}

#[wasm_bindgen(js_name = compareLists)]
pub fn compare_lists_js(
    source: &str,
    chain: &str,
    offset: f64,
    list: usize,
    trials: usize,
    seed: u64,
) -> Result<String, String> {
    compare_lists(source, chain, offset, list, trials, seed)
}
