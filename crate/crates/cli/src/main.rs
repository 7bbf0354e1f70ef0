use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use monochain::construction::{
    chain_rates, estimate_step_statistics, scale_rates, select_frozen, Construction, Statistic,
    DEFAULT_SAMPLES,
};
use monochain::scl::candidates_csv;
use monochain::transform::encode;
use monochain::{Codeword, JointSource, MonotoneChain, SourceBlock, TransformConvention};
use monochain_cli::bench::{bench, bench_csv, BenchConfig};
use monochain_cli::sim::{sim_csv, simulate, SimConfig};
use monochain_cli::{parse_list, with_threads, ChainChoice, CliError, CliResult, Engine};

/// Distributed lossless source coding with monotone chain polar codes.
#[derive(Parser)]
#[command(name = "monochain", version)]
struct Cli {
    /// Worker threads for sampling and trials; 0 picks one per core.
    /// Defaults to MONOCHAIN_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate step entropies and choose the frozen set.
    Construct(ConstructArgs),
    /// Compress a source block into a codeword.
    Encode(EncodeArgs),
    /// Reconstruct a source block from a codeword.
    Decode(DecodeArgs),
    /// Block error rate over sum-rate offsets and list sizes (CSV).
    Simulate(SimulateArgs),
    /// Decoder runtime and instrumentation counters (CSV).
    Bench(BenchArgs),
    /// Print a decoding order.
    ChainGen(ChainGenArgs),
}

#[derive(Args)]
struct ChainArgs {
    /// Chain file: one-based terminal ids separated by whitespace.
    #[arg(long, group = "order")]
    chain: Option<PathBuf>,
    /// Decode each terminal completely before the next.
    #[arg(long, group = "order")]
    corner: bool,
    /// Two-terminal chain alternating across the root.
    #[arg(long, group = "order")]
    alternating: bool,
    /// Random interleaving drawn from this seed.
    #[arg(long, group = "order")]
    random_seed: Option<u64>,
}

impl ChainArgs {
    fn choice(&self) -> CliResult<ChainChoice> {
        if let Some(path) = &self.chain {
            let chain = MonotoneChain::parse(&read(path)?)?;
            let id = path.file_stem().map_or("file".into(), |s| s.to_string_lossy().into_owned());
            return Ok(ChainChoice::Given { id, chain });
        }
        if self.alternating {
            return Ok(ChainChoice::Alternating);
        }
        if let Some(seed) = self.random_seed {
            return Ok(ChainChoice::Random(seed));
        }
        Ok(ChainChoice::Corner)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Identity,
    CyclicShift,
}

impl From<ConventionArg> for TransformConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Identity => TransformConvention::Identity,
            ConventionArg::CyclicShift => TransformConvention::CyclicShift,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StatisticArg {
    Entropy,
    ErrorProbability,
}

impl From<StatisticArg> for Statistic {
    fn from(s: StatisticArg) -> Self {
        match s {
            StatisticArg::Entropy => Statistic::Entropy,
            StatisticArg::ErrorProbability => Statistic::ErrorProbability,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Graph,
    Lazycopy,
    Both,
}

impl EngineArg {
    fn engines(self) -> Vec<Engine> {
        match self {
            EngineArg::Graph => vec![Engine::Graph],
            EngineArg::Lazycopy => vec![Engine::LazyCopy],
            EngineArg::Both => vec![Engine::Graph, Engine::LazyCopy],
        }
    }

    fn single(self) -> CliResult<Engine> {
        match self {
            EngineArg::Graph => Ok(Engine::Graph),
            EngineArg::Lazycopy => Ok(Engine::LazyCopy),
            EngineArg::Both => Err(CliError::Input("pick one engine to decode with".into())),
        }
    }
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("rate").required(true).args(["rates", "sum_rate_offset"]))]
struct ConstructArgs {
    /// Joint distribution file.
    #[arg(long)]
    source: PathBuf,
    #[command(flatten)]
    chain: ChainArgs,
    /// Block length N.
    #[arg(long)]
    n: usize,
    /// Sampled blocks for the entropy estimates.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-terminal rates in bits per letter, comma separated.
    #[arg(long)]
    rates: Option<String>,
    /// Sum rate above the joint entropy, split in the ratio of the chain
    /// rates.
    #[arg(long, allow_hyphen_values = true)]
    sum_rate_offset: Option<f64>,
    /// Step ranking for the frozen set.
    #[arg(long, value_enum, default_value = "entropy")]
    statistic: StatisticArg,
    #[arg(long, value_enum, default_value = "identity")]
    convention: ConventionArg,
    /// Output construction file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    /// Joint distribution file (for the alphabet sizes).
    #[arg(long)]
    source: PathBuf,
    /// Source block file: one line of M symbols per letter.
    #[arg(long)]
    block: PathBuf,
    #[arg(long)]
    construction: PathBuf,
    #[arg(long, value_enum, default_value = "identity")]
    convention: ConventionArg,
    /// Output codeword file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    codeword: PathBuf,
    #[arg(long)]
    construction: PathBuf,
    /// List size.
    #[arg(long, default_value_t = 1)]
    list: usize,
    #[arg(long, value_enum, default_value = "graph")]
    engine: EngineArg,
    #[arg(long, value_enum, default_value = "identity")]
    convention: ConventionArg,
    /// Output reconstruction file.
    #[arg(long)]
    out: PathBuf,
    /// Also write the surviving candidates as CSV.
    #[arg(long)]
    candidates: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    source: PathBuf,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    trials: usize,
    /// List sizes, comma separated.
    #[arg(long, default_value = "1")]
    list: String,
    /// Sum-rate offsets above the joint entropy, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    sweep: String,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "graph")]
    engine: EngineArg,
    #[arg(long, value_enum, default_value = "entropy")]
    statistic: StatisticArg,
    #[arg(long, value_enum, default_value = "identity")]
    convention: ConventionArg,
    /// CSV output; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    source: PathBuf,
    #[command(flatten)]
    chain: ChainArgs,
    /// Block lengths, comma separated.
    #[arg(long, default_value = "64,256,1024,4096")]
    n_list: String,
    #[arg(long, default_value_t = 2)]
    list: usize,
    #[arg(long, value_enum, default_value = "both")]
    engines: EngineArg,
    /// Decodes averaged per row.
    #[arg(long, default_value_t = 100)]
    rounds: usize,
    #[arg(long, value_enum, default_value = "identity")]
    convention: ConventionArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChainMode {
    Corner,
    Alternating,
    Random,
    Extend,
}

#[derive(Args)]
struct ChainGenArgs {
    #[arg(long, value_enum)]
    mode: ChainMode,
    /// Number of terminals M.
    #[arg(long, default_value_t = 2)]
    terminals: usize,
    /// Block length N (not used by extend).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Each step is repeated 2^k times (extend).
    #[arg(long, default_value_t = 1)]
    k: u32,
    /// Chain to extend, as one-based terminal ids, e.g. "1 2".
    #[arg(long)]
    gamma: Option<String>,
    /// Chain file to extend.
    #[arg(long)]
    chain: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_source(path: &Path) -> CliResult<JointSource> {
    Ok(JointSource::parse(&read(path)?)?)
}

fn load_construction(path: &Path, source: &JointSource) -> CliResult<Construction> {
    let c = Construction::parse(&read(path)?)?;
    if c.chain.terminals() != source.terminals() {
        return Err(CliError::Input(format!(
            "construction has {} terminals, source has {}",
            c.chain.terminals(),
            source.terminals()
        )));
    }
    Ok(c)
}

fn construct(a: &ConstructArgs) -> CliResult<()> {
    let source = load_source(&a.source)?;
    let chain = a.chain.choice()?.build(source.terminals(), a.n)?;
    let sizes = source.spec().sizes().to_vec();
    let stats = estimate_step_statistics(&source, &chain, a.samples, a.seed, a.convention.into())?;
    let rates = match (&a.rates, a.sum_rate_offset) {
        (Some(text), _) => {
            let rates: Vec<f64> = parse_list(text, "rate")?;
            if rates.len() != source.terminals() {
                return Err(CliError::Input(format!(
                    "{} rates for {} terminals",
                    rates.len(),
                    source.terminals()
                )));
            }
            rates
        }
        (None, Some(d)) => {
            let base = chain_rates(&stats.entropy, &chain)?;
            scale_rates(&base, (source.joint_entropy() + d).max(0.0), &sizes)?
        }
        (None, None) => unreachable!("clap requires a rate option"),
    };
    let frozen = select_frozen(stats.ranking(a.statistic.into()), &chain, &rates, &sizes)?;
    let c = Construction::new(chain, stats.entropy, frozen)?;
    write(&a.out, &c.to_text())
}

fn encode_cmd(a: &EncodeArgs) -> CliResult<()> {
    let source = load_source(&a.source)?;
    let c = load_construction(&a.construction, &source)?;
    let x = SourceBlock::parse(source.spec(), &read(&a.block)?)?;
    if x.len() != c.chain.block_len() {
        return Err(CliError::Input(format!(
            "block has {} letters, construction expects {}",
            x.len(),
            c.chain.block_len()
        )));
    }
    let u = encode(&x, a.convention.into())?;
    write(&a.out, &Codeword::from_u(&u, &c.chain, &c.frozen).to_text())
}

fn decode_cmd(a: &DecodeArgs) -> CliResult<()> {
    let source = load_source(&a.source)?;
    let c = load_construction(&a.construction, &source)?;
    let cw = Codeword::parse(&read(&a.codeword)?)?;
    let prior = source.prior(c.chain.block_len());
    let out = monochain_cli::decode(
        a.engine.single()?,
        &prior,
        &c.chain,
        &c.frozen,
        &cw,
        a.list,
        a.convention.into(),
    )?;
    write(&a.out, &out.reconstruction.to_text())?;
    if let Some(path) = &a.candidates {
        write(path, &candidates_csv(&out.candidates, &c.chain))?;
    }
    eprintln!("log_lik={} failed={}", out.log_lik, out.failed);
    Ok(())
}

fn simulate_cmd(a: &SimulateArgs) -> CliResult<()> {
    let cfg = SimConfig {
        source: load_source(&a.source)?,
        chain: a.chain.choice()?,
        n: a.n,
        trials: a.trials,
        lists: parse_list(&a.list, "list size")?,
        offsets: parse_list(&a.sweep, "offset")?,
        samples: a.samples,
        seed: a.seed,
        engine: a.engine.single()?,
        statistic: a.statistic.into(),
        convention: a.convention.into(),
    };
    emit(a.out.as_deref(), &sim_csv(&simulate(&cfg)?))
}

fn bench_cmd(a: &BenchArgs) -> CliResult<()> {
    let chain = a.chain.choice()?;
    let mut engines = a.engines.engines();
    if a.engines == EngineArg::Both && chain != ChainChoice::Corner {
        eprintln!("lazy copying needs a corner chain; benchmarking the graph decoder only");
        engines.retain(|&e| e == Engine::Graph);
    }
    let cfg = BenchConfig {
        source: load_source(&a.source)?,
        chain,
        ns: parse_list(&a.n_list, "block length")?,
        list: a.list,
        engines,
        rounds: a.rounds,
        convention: a.convention.into(),
    };
    emit(a.out.as_deref(), &bench_csv(&bench(&cfg)?))
}

fn chain_gen(a: &ChainGenArgs) -> CliResult<()> {
    let need_n = || a.n.ok_or_else(|| CliError::Input("--n is required for this mode".into()));
    let chain = match a.mode {
        ChainMode::Corner => MonotoneChain::corner(a.terminals, need_n()?)?,
        ChainMode::Alternating => MonotoneChain::alternating(need_n()?)?,
        ChainMode::Random => MonotoneChain::random(a.terminals, need_n()?, a.seed)?,
        ChainMode::Extend => {
            let text = match (&a.gamma, &a.chain) {
                (Some(g), _) => g.clone(),
                (None, Some(path)) => read(path)?,
                (None, None) => {
                    return Err(CliError::Input("extend needs --gamma or --chain".into()))
                }
            };
            MonotoneChain::parse(&text)?.k_extend(a.k)?
        }
    };
    emit(a.out.as_deref(), &chain.to_text())
}

fn threads(flag: Option<usize>) -> CliResult<usize> {
    if let Some(t) = flag {
        return Ok(t);
    }
    match std::env::var("MONOCHAIN_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|e| CliError::Input(format!("MONOCHAIN_THREADS={v:?}: {e}"))),
        _ => Ok(0),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let threads = threads(cli.threads)?;
    with_threads(threads, || match &cli.command {
        Command::Construct(a) => construct(a),
        Command::Encode(a) => encode_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::ChainGen(a) => chain_gen(a),
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
