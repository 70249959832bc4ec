use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use shyver::checker::CheckerConfig;
use shyver::stats::StatParams;
use shyver_cli::{
    cmd_bench, cmd_check, cmd_reduce, cmd_simulate, BenchArgs, CheckArgs, ReduceArgs, SimulateArgs,
};

/// Statistical verification of stochastic hybrid systems by Markov chain
/// reduction.
#[derive(Parser)]
#[command(name = "shyver", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct BudgetFlags {
    /// Wrong-verdict probability bound.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Unknown probability bound outside the indifference margin.
    #[arg(long, default_value_t = 0.05)]
    gamma: f64,
    /// Indifference half-width around atom thresholds.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Closeness threshold for the invariant-distribution horizon.
    #[arg(long = "delta-prime", default_value_t = 0.15)]
    delta_prime: f64,
    /// Base seed; drawn and printed when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Cap on the horizon-doubling loop.
    #[arg(long = "horizon-cap", default_value_t = (1u64 << 20) as f64)]
    horizon_cap: f64,
    /// Cap on signal segments.
    #[arg(long = "segment-cap", default_value_t = 10_000_000)]
    segment_cap: u64,
    /// Bound on |d(observable)/dt| used to size signal segments.
    #[arg(long = "h-bound")]
    h_bound: Option<f64>,
    /// User-supplied rate-error term, as `observable=value` (repeatable).
    #[arg(long = "rate-error", value_parser = parse_pair)]
    rate_error: Vec<(String, f64)>,
    /// Contraction rate of the continuous-time error bound.
    #[arg(long = "contraction-rate")]
    contraction_rate: Option<f64>,
    /// Contraction gain (>= 1) of the continuous-time error bound.
    #[arg(long = "contraction-gain")]
    contraction_gain: Option<f64>,
    /// Also check the dual strengthening of the negated formula.
    #[arg(long = "two-sided", default_value_t = false)]
    two_sided: bool,
    /// Stream per-call log-likelihood traces as NDJSON on stderr.
    #[arg(long = "stats-trace", default_value_t = false)]
    stats_trace: bool,
    /// Write the assembled three-valued signal here (debug format).
    #[arg(long = "dump-signal")]
    dump_signal: Option<PathBuf>,
    /// Write the word/formula automata here (debug format).
    #[arg(long = "dump-automaton")]
    dump_automaton: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected observable=value")?;
    Ok((
        name.to_string(),
        value.parse().map_err(|e| format!("{e}"))?,
    ))
}

impl BudgetFlags {
    fn into_config(self) -> CheckerConfig {
        let seed = self.seed.unwrap_or_else(|| {
            use std::hash::{BuildHasher, Hasher};
            let seed = std::collections::hash_map::RandomState::new()
                .build_hasher()
                .finish();
            eprintln!("seed: {seed}");
            seed
        });
        CheckerConfig {
            params: StatParams {
                alpha: self.alpha,
                gamma: self.gamma,
                delta: self.delta,
                delta_prime: self.delta_prime,
            },
            seed,
            workers: self.workers,
            horizon_cap: self.horizon_cap,
            segment_cap: self.segment_cap,
            derivative_bound: self.h_bound,
            rate_error: self.rate_error.into_iter().collect::<BTreeMap<_, _>>(),
            contraction_rate: self.contraction_rate,
            contraction_gain: self.contraction_gain,
            two_sided: self.two_sided,
            stats_trace: self.stats_trace,
            dump_signal: self.dump_signal,
            dump_automaton: self.dump_automaton,
            ..CheckerConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a hybrid model to a finite chain on a grid partition.
    Reduce {
        /// Model file (JSON).
        #[arg(long)]
        model: PathBuf,
        /// Grid pitch; must divide every flow-box edge.
        #[arg(long)]
        pitch: f64,
        /// Output chain file (a `.meta.json` sidecar is written next to it).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        budgets: BudgetFlags,
    },
    /// Decide a formula on a chain or a hybrid model.
    Check {
        /// Reduced chain file or implicit-chain descriptor.
        #[arg(long)]
        chain: Option<PathBuf>,
        /// Hybrid model file; runs the full reduce-strengthen-check pipeline.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Grid pitch for --model runs.
        #[arg(long)]
        pitch: Option<f64>,
        /// Formula text.
        #[arg(long)]
        formula: Option<String>,
        /// File containing the formula.
        #[arg(long = "formula-file")]
        formula_file: Option<PathBuf>,
        /// Report JSON path (printed to stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the run manifest here before sampling.
        #[arg(long = "manifest-out")]
        manifest_out: Option<PathBuf>,
        /// Replay a previously written manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        budgets: BudgetFlags,
    },
    /// Run a benchmark suite over the implicit grid family.
    Bench {
        /// Suite description (JSON).
        #[arg(long)]
        suite: PathBuf,
        /// Output CSV (a `.gnuplot.dat` file is written next to it).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        budgets: BudgetFlags,
    },
    /// Draw raw samples of a chain law at a fixed time (NDJSON).
    Simulate {
        #[arg(long)]
        chain: PathBuf,
        /// Sampling time (continuous) or step count (discrete).
        #[arg(short, long)]
        time: f64,
        /// Number of replications.
        #[arg(short = 'n', long, default_value_t = 10)]
        replications: u64,
        #[command(flatten)]
        budgets: BudgetFlags,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("SHYVER_LOG")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Reduce {
            model,
            pitch,
            out,
            budgets,
        } => cmd_reduce(&ReduceArgs {
            model,
            pitch,
            out,
            config: budgets.into_config(),
        }),
        Command::Check {
            chain,
            model,
            pitch,
            formula,
            formula_file,
            out,
            manifest_out,
            manifest,
            budgets,
        } => cmd_check(&CheckArgs {
            chain,
            model,
            pitch,
            formula,
            formula_file,
            out,
            manifest_out,
            replay: manifest,
            config: budgets.into_config(),
        }),
        Command::Bench { suite, out, budgets } => cmd_bench(&BenchArgs {
            suite,
            out,
            config: budgets.into_config(),
        }),
        Command::Simulate {
            chain,
            time,
            replications,
            budgets,
        } => {
            let config = budgets.into_config();
            let seed = config.seed;
            cmd_simulate(&SimulateArgs {
                chain,
                time,
                replications,
                seed,
                config,
            })
        }
    };
    std::process::exit(code);
}
