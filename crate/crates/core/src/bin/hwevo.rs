use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hwevo::codec::{decode, describe_layout};
use hwevo::harness::{
    load_experiment_data, load_report, render_table, run_experiment, run_seed,
    standard_network_baseline, summarize, ExperimentConfig, SummaryRow, Variant,
};
use hwevo::nn::{build_network, BuildOptions, Model};
use hwevo::Genotype;

#[derive(Parser)]
#[command(name = "hwevo", version, about = "Evolve convolutional highway networks with a (1+1)-EA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run repeated EA experiments and write histories, best models and a summary.
    Evolve(EvolveArgs),
    /// Train and score the fixed reference network.
    Baseline(ExperimentArgs),
    /// Print the results table of one or more finished experiments.
    Summarize(SummarizeArgs),
    /// Show the network a 20-bit genotype describes.
    Decode(DecodeArgs),
    /// Print the genotype bit layout as JSON.
    Layout,
}

/// Flags shared by `evolve` and `baseline`. Unset flags fall back to the
/// config file, then to the defaults.
#[derive(Args, Default)]
struct ExperimentArgs {
    /// JSON file with any subset of the experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Full-size protocol: 55k/5k/10k images, 30 generations, 5 epochs, 10 repetitions.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    train_subset: Option<usize>,
    #[arg(long)]
    val_subset: Option<usize>,
    #[arg(long)]
    test_subset: Option<usize>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Train every candidate with this learning rate instead of the evolved one.
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Rechenberg window length.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Probability of starting a niching branch.
    #[arg(long)]
    eta: Option<f64>,
    /// Length of a niching branch in generations.
    #[arg(long)]
    kappa: Option<usize>,
    /// Initial mutation rate (default 1/N).
    #[arg(long)]
    sigma0: Option<f64>,
    /// Read the filter gene as the first kernel size (filters fixed at 16).
    #[arg(long)]
    filters_are_kernel_sizes: bool,
    #[arg(long)]
    skip_baseline: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Output directories of finished `evolve` runs.
    dirs: Vec<PathBuf>,
    /// Summarize a comma-separated list of accuracies instead.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    bits: String,
    #[arg(long)]
    filters_are_kernel_sizes: bool,
}

fn resolve(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    if args.paper_scale {
        cfg = cfg.paper_scale();
    }
    macro_rules! set {
        ($($field:ident <- $value:expr),* $(,)?) => {
            $(if let Some(v) = $value.clone() { cfg.$field = v; })*
        };
    }
    set!(
        seed <- args.seed,
        epochs <- args.epochs,
        batch_size <- args.batch_size,
        train_subset <- args.train_subset,
        val_subset <- args.val_subset,
        test_subset <- args.test_subset,
        data_dir <- args.data_dir,
        out_dir <- args.out_dir,
        threads <- args.threads,
    );
    if args.lr.is_some() {
        cfg.learning_rate_override = args.lr;
    }
    Ok(cfg)
}

fn evolve(args: EvolveArgs) -> Result<()> {
    let mut cfg = resolve(&args.common)?;
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(v) = args.generations {
        cfg.generations = v;
    }
    if let Some(v) = args.repetitions {
        cfg.repetitions = v;
    }
    if let Some(v) = args.window {
        cfg.window = v;
    }
    if let Some(v) = args.tau {
        cfg.tau = v;
    }
    if let Some(v) = args.eta {
        cfg.eta = v;
    }
    if let Some(v) = args.kappa {
        cfg.kappa = v;
    }
    if args.sigma0.is_some() {
        cfg.sigma0 = args.sigma0;
    }
    cfg.filters_are_kernel_sizes |= args.filters_are_kernel_sizes;
    cfg.skip_baseline |= args.skip_baseline;
    let quiet = args.quiet;
    let report = run_experiment(&cfg, &|msg| {
        if !quiet {
            eprintln!("{msg}");
        }
    })?;
    print!("{}", render_table(std::slice::from_ref(&report.summary)));
    println!("\nartifacts written to {}", cfg.out_dir.display());
    Ok(())
}

fn baseline(args: ExperimentArgs) -> Result<()> {
    let cfg = resolve(&args)?;
    cfg.validate()?;
    let data = load_experiment_data(&cfg)?;
    let b = standard_network_baseline(&data, &cfg.training_config(), run_seed(cfg.seed, usize::MAX))?;
    println!("{}", serde_json::to_string_pretty(&b)?);
    Ok(())
}

fn summarize_cmd(args: SummarizeArgs) -> Result<()> {
    if !args.values.is_empty() {
        let s = summarize(&args.values)?;
        println!("min {} mean {} std {} max {}", s.min, s.mean, s.std, s.max);
        return Ok(());
    }
    if args.dirs.is_empty() {
        bail!("give output directories or --values");
    }
    let rows: Vec<SummaryRow> = args
        .dirs
        .iter()
        .map(|d| load_report(d).map(|r| r.summary).with_context(|| d.display().to_string()))
        .collect::<Result<_>>()?;
    print!("{}", render_table(&rows));
    Ok(())
}

fn decode_cmd(args: DecodeArgs) -> Result<()> {
    let genotype: Genotype = args.bits.parse().context("genotype must be a string of 0 and 1")?;
    let spec = decode(&genotype)?;
    let options = BuildOptions { filters_are_kernel_sizes: args.filters_are_kernel_sizes, ..BuildOptions::default() };
    let model: Model<f32> = build_network(&spec, &options, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!("{}", serde_json::to_string_pretty(&spec)?);
    for entry in model.shape_trace() {
        println!("  {:<22} {:?}", entry.layer, entry.output_shape);
    }
    println!("parameters: {}", model.param_count());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evolve(a) => evolve(a),
        Command::Baseline(a) => baseline(a),
        Command::Summarize(a) => summarize_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Layout => {
            println!("{}", describe_layout().to_json_pretty());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
