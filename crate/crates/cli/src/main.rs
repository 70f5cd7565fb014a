//! `mkkm` command-line interface.
//!
//! Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
//! configuration error. Logs go to stderr; results to stdout and files.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use mkkm::harness::{self, BenchOutcome};
use mkkm::io::{self, Algorithm, Manifest, RunConfig};
use mkkm::kernels::{build_bank, BankOptions, KernelSpec};
use mkkm::metrics::Metric;
use mkkm::stats;

#[derive(Parser)]
#[command(name = "mkkm", version, about = "Multiple kernel k-means clustering")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel bank construction.
    Kernels {
        #[command(subcommand)]
        action: KernelsCommand,
    },
    /// Run one algorithm at one parameter point.
    Run(RunArgs),
    /// Sweep every configured algorithm over its parameter grid.
    Bench(BenchArgs),
    /// Rank statistics over a table of per-dataset scores.
    Stats {
        #[command(subcommand)]
        action: StatsCommand,
    },
}

#[derive(Subcommand)]
enum KernelsCommand {
    /// Build the standard 12-kernel bank from a features CSV.
    Build(BuildArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Features CSV, one sample per row.
    #[arg(long)]
    features: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Normalize each kernel to unit diagonal.
    #[arg(long)]
    normalize: bool,
    /// Min-max scale each kernel to [0, 1].
    #[arg(long)]
    scale: bool,
    /// The features file has a header row.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the algorithm list with this single algorithm.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Number of repetitions (overrides the config).
    #[arg(long)]
    repetitions: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Run configuration (JSON).
    #[arg(long, required_unless_present = "replay", conflicts_with = "replay")]
    config: Option<PathBuf>,
    /// Re-run the configuration recorded in a results manifest.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Maximum worker threads (default: one per core).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Friedman test and Nemenyi critical difference.
    Friedman(FriedmanArgs),
}

#[derive(Args)]
struct FriedmanArgs {
    /// CSV with header `dataset,<algorithm>,...` and one row per dataset.
    #[arg(long)]
    scores: PathBuf,
    /// Larger scores are better (ACC, NMI, ...).
    #[arg(long)]
    higher_better: bool,
    /// Studentized-range critical value q_gamma.
    #[arg(long, default_value_t = stats::Q_005_K8)]
    q: f64,
}

/// An error tagged with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<mkkm::Error> for Failure {
    fn from(e: mkkm::Error) -> Self {
        let code = if e.is_input_error() { 2 } else { 1 };
        Failure {
            code,
            error: e.into(),
        }
    }
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn runtime(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Kernels {
            action: KernelsCommand::Build(args),
        } => cmd_kernels(args),
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Stats {
            action: StatsCommand::Friedman(args),
        } => cmd_stats(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_kernels(args: BuildArgs) -> CmdResult {
    if !args.features.is_file() {
        return Err(usage(anyhow!("features file {} does not exist", args.features.display())));
    }
    let x = io::load_features(&args.features, args.header)?;
    let opts = BankOptions {
        normalize: args.normalize,
        scale: args.scale,
    };
    let bank = build_bank(&x, &KernelSpec::standard(), opts)?;
    let manifest = io::save_bank(&bank, &args.out)?;
    println!("wrote {} kernels over {} samples", bank.len(), bank.n());
    println!("{}", manifest.display());
    Ok(())
}

fn load_config(path: &std::path::Path) -> std::result::Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(|e| {
        let code = if e.is_input_error() { 2 } else { 1 };
        Failure {
            code,
            error: anyhow::Error::new(e).context(format!("loading {}", path.display())),
        }
    })
}

fn cmd_run(args: RunArgs) -> CmdResult {
    let mut cfg = load_config(&args.config)?;
    if let Some(name) = &args.algorithm {
        cfg.algorithms = vec![name.parse::<Algorithm>()?];
    }
    if let Some(a) = args.alpha {
        cfg.alpha = vec![a];
    }
    if let Some(b) = args.beta {
        cfg.beta = vec![b];
    }
    if let Some(l) = args.lambda {
        cfg.lambda = vec![l];
    }
    if let Some(r) = args.repetitions {
        cfg.repetitions = r;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    let cells = harness::plan_cells(&cfg);
    if cells.len() != 1 {
        return Err(usage(anyhow!(
            "`run` needs exactly one algorithm at one parameter point, the config gives {} cells \
             (use `bench` for sweeps, or --algorithm/--alpha/--beta/--lambda)",
            cells.len()
        )));
    }

    let ds = harness::load_dataset(&cfg)?;
    let seeds = io::expand_seeds(cfg.seed, cfg.repetitions);
    let record = harness::run_cell(&ds, &cells[0], &cfg, &seeds);
    io::persist_results(std::slice::from_ref(&record), &cfg.output_dir, Some(&cfg), &seeds)?;
    let path = harness::write_records(std::slice::from_ref(&record), &cfg.output_dir, &ds.name)?;
    if let Some(e) = &record.error {
        return Err(runtime(anyhow!("{} failed: {e}", record.algorithm.name())));
    }

    println!("algorithm: {}", record.algorithm.name());
    println!("params: {}", record.params_label());
    if let Some(agg) = &record.aggregate {
        for metric in Metric::ALL {
            println!(
                "{}: {:.4} ± {:.4}",
                metric.name(),
                agg.mean.get(metric),
                agg.std.get(metric)
            );
        }
    }
    if let Some(w) = &record.weights {
        let w: Vec<String> = w.iter().map(|v| format!("{v:.6}")).collect();
        println!("weights: {}", w.join(" "));
    }
    if let Some(sel) = &record.selected_kernels {
        let sel: Vec<String> = sel.iter().map(usize::to_string).collect();
        println!("selected kernels: {}", sel.join(" "));
    }
    if let Some(conv) = &record.convergence {
        println!("iterations: {} (converged: {})", conv.iterations, conv.converged);
        for (t, f) in conv.objective_trace.iter().enumerate() {
            println!("objective[{}]: {}", t + 1, io::fmt_f64(*f));
        }
    }
    println!("record: {}", path.display());
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let mut cfg = match (&args.config, &args.replay) {
        (Some(path), _) => load_config(path)?,
        (None, Some(path)) => {
            let manifest = Manifest::load(path)?;
            let cfg = manifest
                .config
                .ok_or_else(|| usage(anyhow!("{} records no config to replay", path.display())))?;
            if io::expand_seeds(cfg.seed, cfg.repetitions) != manifest.seeds {
                return Err(usage(anyhow!("{}: seeds do not match the recorded config", path.display())));
            }
            cfg
        }
        (None, None) => return Err(usage(anyhow!("give --config or --replay"))),
    };
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if args.jobs == Some(0) {
        return Err(usage(anyhow!("--jobs must be at least 1")));
    }
    let BenchOutcome {
        records, manifest, ..
    } = harness::run_bench(&cfg, args.jobs)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    println!("cells: {}", records.len());
    for r in io::best_per_algorithm(&records, Metric::Acc) {
        if let Some(agg) = &r.aggregate {
            println!(
                "best {} ({}): acc {:.4} ± {:.4}",
                r.algorithm.name(),
                r.params_label(),
                agg.mean.acc,
                agg.std.acc
            );
        }
    }
    println!("manifest: {}", manifest.display());
    if failed > 0 {
        return Err(runtime(anyhow!("{failed} of {} cells failed", records.len())));
    }
    Ok(())
}

fn cmd_stats(args: FriedmanArgs) -> CmdResult {
    let table = io::load_score_table(&args.scores)
        .with_context(|| format!("reading {}", args.scores.display()))
        .map_err(usage)?;
    let ranks = stats::RankTable::from_scores(&table.scores, args.higher_better)
        .with_context(|| format!("ranking {}", args.scores.display()))
        .map_err(usage)?;
    let (n, k) = (ranks.n_datasets(), ranks.k_algorithms());
    let cd = stats::nemenyi_cd(k, n, args.q)
        .context("critical difference")
        .map_err(usage)?;

    println!("datasets: {n}");
    println!("algorithms: {k}");
    println!("mean ranks:");
    for (name, r) in table.algorithms.iter().zip(ranks.mean_ranks()) {
        println!("  {name}: {r:.4}");
    }
    println!("CD: {cd:.4}");
    let pairs = stats::significant_pairs(ranks.mean_ranks(), cd);
    if pairs.is_empty() {
        println!("significant pairs: none");
    } else {
        println!("significant pairs:");
        for (i, j) in pairs {
            let gap = (ranks.mean_ranks()[i] - ranks.mean_ranks()[j]).abs();
            println!("  {} vs {}: gap {gap:.4}", table.algorithms[i], table.algorithms[j]);
        }
    }
    match stats::friedman(&ranks) {
        Ok(s) => {
            println!("tau_chi2: {:.4}", s.tau_chi2);
            println!("tau_F: {:.4}", s.tau_f);
            Ok(())
        }
        Err(mkkm::Error::DegenerateFStatistic) => {
            println!("tau_F: undefined");
            Err(runtime(anyhow!("degenerate F statistic: n(k-1) equals tau_chi2")))
        }
        Err(e) => Err(usage(e.into())),
    }
}
